#include "cfmg/pipeline.hpp"

#include <chrono>
#include <iomanip>
#include <json.hpp>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "cfmg/errors.hpp"

namespace cfmg {

using nlohmann::json;

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

json report_header(const char* format, const RunConfig& cfg) {
  return {{"format", format}, {"version", 1}, {"seed", cfg.seed}, {"config", cfg.to_text()}};
}

std::filesystem::path prepare_out(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out);
  return cfg.out;
}

AutoencoderNet load_encoder(const RunConfig& cfg) {
  return io::load_autoencoder_checkpoint(cfg.out / kEncoderCheckpoint).net;
}

VelocityNet load_velocity(const RunConfig& cfg) {
  return io::load_velocity_checkpoint(cfg.out / kVelocityCheckpoint).net;
}

void write_recovery(std::ostream& os, const char* label, const RecoveryStats& r) {
  os << label << ": " << r.within << "/" << r.total << " within 3 deg / 5 mm ("
     << std::fixed << std::setprecision(1) << 100.0 * r.rate() << "%)\n"
     << std::defaultfloat;
}

}  // namespace

LoadedData load_data(const std::filesystem::path& dir) {
  LoadedData out;
  out.dataset = io::read_dataset(dir);
  for (const auto& rec : out.dataset.records) {
    out.pair_images.push_back(io::read_depth_image(dir / rec.image));
  }
  for (const auto& name : out.dataset.corpus) {
    out.corpus.push_back(io::read_depth_image(dir / name));
  }
  return out;
}

std::vector<FlowSample> make_flow_samples(const LoadedData& data, const AutoencoderNet& encoder) {
  std::vector<FlowSample> out;
  out.reserve(data.dataset.records.size());
  for (std::size_t i = 0; i < data.dataset.records.size(); ++i) {
    const auto& pair = data.dataset.records[i].pair;
    FlowSample s;
    s.g_rigid = to_vec7(pair.g_rigid);
    s.g_soft = hemisphere_align(s.g_rigid, to_vec7(pair.g_soft));
    s.condition = encode(encoder, data.pair_images[i]);
    out.push_back(std::move(s));
  }
  return out;
}

RecoveryStats flow_recovery(const VelocityNet& net, std::span<const FlowSample> samples,
                            std::span<const std::size_t> indices, const IntegratorConfig& cfg,
                            double max_angle, double max_distance,
                            std::span<const std::size_t> condition_source) {
  if (!condition_source.empty() && condition_source.size() != indices.size()) {
    throw std::invalid_argument("condition_source must match indices");
  }
  RecoveryStats stats;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const FlowSample& s = samples[indices[k]];
    const ConditionVector& c =
        condition_source.empty() ? s.condition : samples[condition_source[k]].condition;
    ++stats.total;
    try {
      const FlowResult r = integrate_flow(net, s.g_rigid, c, cfg);
      const PoseError e = pose_error(r.final_pose, from_vec7(s.g_soft));
      stats.errors.push_back(e);
      if (e.angle <= max_angle && e.distance <= max_distance) ++stats.within;
    } catch (const NumericalError&) {
      stats.errors.push_back({std::numeric_limits<double>::infinity(),
                              std::numeric_limits<double>::infinity()});
    }
  }
  return stats;
}

std::size_t cmd_gen_data(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, kStreamData));
  const auto templates = default_seen_templates();
  const GeneratedData data = generate_dataset(templates, cfg.generate_options(), rng);
  io::write_dataset(cfg.data_dir(), data, cfg.seed, cfg.to_text());
  log << "objects: " << templates.size() << "\n"
      << "pairs: " << data.pairs.size() << "\n"
      << "corpus images: " << data.corpus.size() << "\n"
      << "written to " << cfg.data_dir().string() << "\n";
  return data.pairs.size();
}

TrainOutcome cmd_train(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const LoadedData data = load_data(cfg.data_dir());
  if (data.dataset.records.empty()) throw DataError("dataset has no pairs");
  if (data.corpus.empty()) throw DataError("dataset has no autoencoder corpus");
  const auto out = prepare_out(cfg);
  const std::string config_text = cfg.to_text();
  TrainOutcome outcome;

  // Stage 1: autoencoder, then frozen.
  Rng ae_rng(derive_seed(cfg.seed, kStreamAutoencoder));
  AutoencoderNet ae(data.corpus.front().width, data.corpus.front().height, ae_rng);
  outcome.autoencoder = train_autoencoder(ae, data.corpus, cfg.autoencoder_config(), ae_rng);
  outcome.autoencoder_mse = reconstruction_mse(ae, data.corpus);
  io::save_checkpoint(out / kEncoderCheckpoint, ae,
                      {cfg.ae_epochs, outcome.autoencoder_mse, 0.0, cfg.seed, config_text});
  log << "autoencoder: " << cfg.ae_epochs << " epochs, reconstruction mse "
      << outcome.autoencoder_mse << " (" << seconds_since(start) << " s)\n";

  // Stage 2: velocity field on encoded conditions.
  const std::vector<FlowSample> samples = make_flow_samples(data, ae);
  Rng vf_rng(derive_seed(cfg.seed, kStreamVelocity));
  VelocityNet net(vf_rng, cfg.output_activation, cfg.bn_momentum, cfg.bn_epsilon);
  outcome.velocity = fit(net, samples, cfg.train_config(), vf_rng);
  const double final_train = outcome.velocity.train_loss.back();
  const double final_val =
      outcome.velocity.val_loss.empty() ? 0.0 : outcome.velocity.val_loss.back();
  io::save_checkpoint(out / kVelocityCheckpoint, net,
                      {cfg.cfm_epochs, final_train, final_val, cfg.seed, config_text});
  log << "velocity field: " << cfg.cfm_epochs << " epochs, train loss " << final_train
      << ", validation loss " << final_val << " (" << seconds_since(start) << " s)\n";

  // Held-out flow recovery, with own and with permuted conditions.
  const IntegratorConfig icfg = cfg.integrator_config();
  const auto& val = outcome.velocity.val_indices;
  outcome.recovery = flow_recovery(net, samples, val, icfg, kRecoveryAngle, kRecoveryDistance);
  std::vector<std::size_t> permuted(val.begin(), val.end());
  Rng shuffle_rng(derive_seed(cfg.seed, kStreamShuffle));
  shuffle_rng.shuffle(std::span<std::size_t>(permuted));
  outcome.shuffled_recovery =
      flow_recovery(net, samples, val, icfg, kRecoveryAngle, kRecoveryDistance, permuted);
  write_recovery(log, "validation recovery", outcome.recovery);
  write_recovery(log, "validation recovery, shuffled conditions", outcome.shuffled_recovery);

  std::ostringstream text;
  text << std::setprecision(10);
  text << "training report\n"
       << "seed " << cfg.seed << "\n"
       << "pairs " << samples.size() << " (train " << outcome.velocity.train_indices.size()
       << ", validation " << val.size() << ")\n"
       << "autoencoder epochs " << cfg.ae_epochs << ", corpus " << data.corpus.size()
       << ", final reconstruction mse " << outcome.autoencoder_mse << "\n"
       << "velocity epochs " << cfg.cfm_epochs << ", final train loss " << final_train
       << ", final validation loss " << final_val << "\n";
  write_recovery(text, "validation recovery", outcome.recovery);
  write_recovery(text, "validation recovery, shuffled conditions", outcome.shuffled_recovery);
  text << "\nepoch train_loss val_loss\n";
  for (std::size_t e = 0; e < outcome.velocity.train_loss.size(); ++e) {
    text << e + 1 << ' ' << outcome.velocity.train_loss[e];
    if (e < outcome.velocity.val_loss.size()) text << ' ' << outcome.velocity.val_loss[e];
    text << '\n';
  }
  text << "\nconfig\n" << config_text;
  io::write_text_file(out / kTrainReport, text.str());

  std::ostringstream lines;
  lines << report_header("cfmg-train-report", cfg).dump() << '\n';
  for (std::size_t e = 0; e < outcome.autoencoder.train_mse.size(); ++e) {
    lines << json{{"stage", "autoencoder"}, {"epoch", e + 1},
                  {"train_mse", outcome.autoencoder.train_mse[e]}}
                 .dump()
          << '\n';
  }
  for (std::size_t e = 0; e < outcome.velocity.train_loss.size(); ++e) {
    json row = {{"stage", "velocity"}, {"epoch", e + 1},
                {"train_loss", outcome.velocity.train_loss[e]}};
    if (e < outcome.velocity.val_loss.size()) row["val_loss"] = outcome.velocity.val_loss[e];
    lines << row.dump() << '\n';
  }
  lines << json{{"stage", "summary"},
                {"autoencoder_mse", outcome.autoencoder_mse},
                {"final_train_loss", final_train},
                {"final_val_loss", final_val},
                {"validation_pairs", val.size()},
                {"recovered", outcome.recovery.within},
                {"recovered_shuffled", outcome.shuffled_recovery.within}}
               .dump()
        << '\n';
  io::write_text_file(out / kTrainReportJson, lines.str());
  return outcome;
}

FlowResult cmd_infer(const RunConfig& cfg, const PoseVec7& g0, const DepthImage& scene,
                     const std::optional<std::filesystem::path>& trajectory, std::ostream& log) {
  cfg.validate();
  const AutoencoderNet ae = load_encoder(cfg);
  const VelocityNet net = load_velocity(cfg);
  if (scene.width != ae.image_width() || scene.height != ae.image_height()) {
    throw DataError("scene image is " + std::to_string(scene.width) + "x" +
                    std::to_string(scene.height) + ", encoder expects " +
                    std::to_string(ae.image_width()) + "x" + std::to_string(ae.image_height()));
  }
  FlowResult r = integrate_flow(net, g0, encode(ae, scene), cfg.integrator_config());
  if (trajectory) {
    export_flow_trajectories(std::span<const FlowTrajectory>(&r.trajectory, 1), *trajectory);
    log << "trajectory written to " << trajectory->string() << "\n";
  }
  return r;
}

std::string format_success_table(const SuccessTable& table) {
  std::ostringstream os;
  os << std::left << std::setw(10) << "shape" << std::setw(8) << "split" << std::setw(10)
     << "method" << std::right << std::setw(8) << "trials" << std::setw(11) << "successes"
     << std::setw(9) << "rate" << '\n';
  auto row = [&](const std::string& shape, const std::string& split, Method m,
                 const CellCounts& c) {
    os << std::left << std::setw(10) << shape << std::setw(8) << split << std::setw(10)
       << to_string(m) << std::right << std::setw(8) << c.trials << std::setw(11) << c.successes
       << std::setw(9) << std::fixed << std::setprecision(4) << c.rate() << std::defaultfloat
       << '\n';
  };
  for (Split sp : {Split::Seen, Split::Unseen}) {
    for (ShapeKind s : kAllShapes) {
      for (Method m : {Method::Baseline, Method::Cfm}) row(to_string(s), to_string(sp), m, table.cell(s, sp, m));
    }
  }
  for (Split sp : {Split::Seen, Split::Unseen}) {
    for (Method m : {Method::Baseline, Method::Cfm}) row("all", to_string(sp), m, table.split_total(sp, m));
  }
  for (Method m : {Method::Baseline, Method::Cfm}) row("all", "all", m, table.overall(m));
  return os.str();
}

std::string success_table_jsonl(const SuccessTable& table, const RunConfig& cfg) {
  std::ostringstream os;
  os << report_header("cfmg-eval-report", cfg).dump() << '\n';
  auto row = [&](const std::string& shape, const std::string& split, Method m,
                 const CellCounts& c) {
    os << json{{"shape", shape}, {"split", split}, {"method", to_string(m)},
               {"trials", c.trials}, {"successes", c.successes}, {"rate", c.rate()}}
              .dump()
       << '\n';
  };
  for (Split sp : {Split::Seen, Split::Unseen}) {
    for (ShapeKind s : kAllShapes) {
      for (Method m : {Method::Baseline, Method::Cfm}) row(to_string(s), to_string(sp), m, table.cell(s, sp, m));
    }
  }
  for (Method m : {Method::Baseline, Method::Cfm}) row("all", "all", m, table.overall(m));
  return os.str();
}

EvalResult cmd_eval(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const AutoencoderNet ae = load_encoder(cfg);
  const VelocityNet net = load_velocity(cfg);
  const auto out = prepare_out(cfg);

  Rng scene_rng(derive_seed(cfg.seed, kStreamEvalScenes));
  const auto seen_t = default_seen_templates();
  const auto unseen_t = default_unseen_templates();
  std::vector<EvalScene> scenes = make_eval_scenes(seen_t, Split::Seen, cfg.eval_trials_seen, scene_rng);
  const auto unseen = make_eval_scenes(unseen_t, Split::Unseen, cfg.eval_trials_unseen, scene_rng);
  scenes.insert(scenes.end(), unseen.begin(), unseen.end());

  const ModelBundle models{&ae, &net, cfg.integrator_config()};
  EvalResult result = evaluate(models, scenes, cfg.success_criteria(),
                               derive_seed(cfg.seed, kStreamEvalTrials));

  std::size_t integrator_failures = 0;
  std::map<std::string, int> cfm_reasons;
  for (const auto& t : result.trials) {
    if (t.integrator_failed) ++integrator_failures;
    if (!t.cfm.success) ++cfm_reasons[t.integrator_failed ? "integrator failure" : to_string(t.cfm.reason)];
  }

  std::ostringstream text;
  text << "evaluation report\nseed " << cfg.seed << "\n\n" << format_success_table(result.table);
  text << "\ncfm failures by reason\n";
  for (const auto& [reason, n] : cfm_reasons) text << "  " << reason << ": " << n << "\n";
  text << "\nconfig\n" << cfg.to_text();
  io::write_text_file(out / kEvalReport, text.str());
  io::write_text_file(out / kEvalReportJson, success_table_jsonl(result.table, cfg));

  log << format_success_table(result.table);
  if (integrator_failures > 0) log << "integrator failures: " << integrator_failures << "\n";
  return result;
}

std::size_t cmd_export_flow(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const AutoencoderNet ae = load_encoder(cfg);
  const VelocityNet net = load_velocity(cfg);
  const LoadedData data = load_data(cfg.data_dir());
  const auto samples = make_flow_samples(data, ae);
  const std::size_t n = std::min<std::size_t>(samples.size(), static_cast<std::size_t>(cfg.export_count));
  if (n == 0) throw DataError("no pairs to export");

  std::vector<PoseVec7> g0;
  std::vector<ConditionVector> c;
  for (std::size_t i = 0; i < n; ++i) {
    g0.push_back(samples[i].g_rigid);
    c.push_back(samples[i].condition);
  }
  const auto results = integrate_flows(net, g0, c, cfg.integrator_config());
  std::vector<FlowTrajectory> trajectories;
  for (const auto& r : results) trajectories.push_back(r.trajectory);
  const auto path = prepare_out(cfg) / kFlowExport;
  export_flow_trajectories(trajectories, path);
  log << "exported " << n << " trajectories to " << path.string() << "\n";
  return n;
}

}  // namespace cfmg
