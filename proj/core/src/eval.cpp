#include "cfmg/eval.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "cfmg/errors.hpp"

namespace cfmg {

namespace {

// Absorbs rounding in top - (top - depth) style reconstructions.
constexpr double kGeomTol = 1e-9;

constexpr const char* kTrajectoryHeader = "t qw qx qy qz px py pz";

}  // namespace

void SuccessCriteria::validate() const {
  if (!(max_tilt > 0.0 && max_offset_fraction > 0.0 && min_depth > 0.0 && sphere_band > 0.0)) {
    throw std::invalid_argument("success thresholds must be positive");
  }
  if (depth_slack < 0.0) throw std::invalid_argument("depth slack must be non-negative");
}

std::string to_string(FailureReason r) {
  switch (r) {
    case FailureReason::None: return "none";
    case FailureReason::ExcessivelyTilted: return "excessively tilted";
    case FailureReason::OffCenter: return "off-center";
    case FailureReason::TooShallow: return "too shallow";
    case FailureReason::TooDeep: return "too deep";
  }
  return "none";
}

std::string to_string(Split s) { return s == Split::Seen ? "seen" : "unseen"; }
std::string to_string(Method m) { return m == Method::Baseline ? "baseline" : "cfm"; }

Verdict success_oracle(const SceneSpec& scene, const GraspPose& pose,
                       const SuccessCriteria& criteria) {
  auto fail = [](FailureReason r) { return Verdict{false, r}; };

  if (tilt_from_vertical(pose.orientation) > criteria.max_tilt + kGeomTol) {
    return fail(FailureReason::ExcessivelyTilted);
  }
  const double lateral = (pose.position.head<2>() - scene.position).norm();
  if (lateral > criteria.max_offset_fraction * half_extent(scene) + kGeomTol) {
    return fail(FailureReason::OffCenter);
  }

  const double depth = top_height(scene) - pose.position.z();
  const double slack = criteria.depth_slack + kGeomTol;
  switch (scene.shape) {
    case ShapeKind::Cylinder:
    case ShapeKind::Box:
      if (depth < criteria.min_depth - slack) return fail(FailureReason::TooShallow);
      if (depth > object_height(scene) + slack) return fail(FailureReason::TooDeep);
      break;
    case ShapeKind::Sphere: {
      const double above = pose.position.z() - equator_height(scene);
      if (above > criteria.sphere_band + slack) return fail(FailureReason::TooShallow);
      if (-above > criteria.sphere_band + slack) return fail(FailureReason::TooDeep);
      break;
    }
    case ShapeKind::Flat:
      if (depth < scene.dims.z() - slack) return fail(FailureReason::TooShallow);
      break;
  }
  return {true, FailureReason::None};
}

std::size_t SuccessTable::index(ShapeKind shape, Split split, Method method) {
  return static_cast<std::size_t>(shape) * 4 + static_cast<std::size_t>(split) * 2 +
         static_cast<std::size_t>(method);
}

void SuccessTable::record(ShapeKind shape, Split split, Method method, bool success) {
  CellCounts& c = cells_[index(shape, split, method)];
  ++c.trials;
  if (success) ++c.successes;
}

const CellCounts& SuccessTable::cell(ShapeKind shape, Split split, Method method) const {
  return cells_[index(shape, split, method)];
}

CellCounts SuccessTable::split_total(Split split, Method method) const {
  CellCounts total;
  for (ShapeKind s : kAllShapes) {
    total.trials += cell(s, split, method).trials;
    total.successes += cell(s, split, method).successes;
  }
  return total;
}

CellCounts SuccessTable::overall(Method method) const {
  CellCounts total;
  for (Split sp : {Split::Seen, Split::Unseen}) {
    const CellCounts c = split_total(sp, method);
    total.trials += c.trials;
    total.successes += c.successes;
  }
  return total;
}

void SuccessTable::merge(const SuccessTable& other) {
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    cells_[i].trials += other.cells_[i].trials;
    cells_[i].successes += other.cells_[i].successes;
  }
}

std::vector<EvalScene> make_eval_scenes(std::span<const ObjectTemplate> templates, Split split,
                                        int trials_per_template, Rng& rng) {
  std::vector<EvalScene> out;
  for (const auto& t : templates) {
    for (int k = 0; k < trials_per_template; ++k) {
      out.push_back({instantiate(t, rng), t.name, split});
    }
  }
  return out;
}

EvalResult evaluate(const ModelBundle& models, std::span<const EvalScene> scenes,
                    const SuccessCriteria& criteria, std::uint64_t seed) {
  if (!models.encoder || !models.velocity) throw std::invalid_argument("evaluate: missing model");
  criteria.validate();
  EvalResult result;
  result.trials.reserve(scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const EvalScene& es = scenes[i];
    Rng rng(derive_seed(seed, i));
    TrialRecord trial;
    trial.scene = es;
    trial.rank = kMidRankLow + static_cast<int>(rng.below(kMidRankHigh - kMidRankLow + 1));
    trial.rigid = synth_rigid_grasp(es.scene, trial.rank, rng);
    trial.baseline = success_oracle(es.scene, trial.rigid, criteria);

    const ConditionVector c = encode(*models.encoder, render_depth(es.scene,
                                                                    models.encoder->image_width(),
                                                                    models.encoder->image_height()));
    try {
      const FlowResult flow = integrate_flow(*models.velocity, to_vec7(trial.rigid), c,
                                             models.integrator, trial.rigid.width);
      trial.corrected = flow.final_pose;
      trial.cfm = success_oracle(es.scene, trial.corrected, criteria);
    } catch (const NumericalError& e) {
      trial.integrator_failed = true;
      trial.integrator_error = e.what();
      trial.cfm = {false, FailureReason::None};
    }
    result.table.record(es.scene.shape, es.split, Method::Baseline, trial.baseline.success);
    result.table.record(es.scene.shape, es.split, Method::Cfm, trial.cfm.success);
    result.trials.push_back(std::move(trial));
  }
  return result;
}

void export_flow_trajectories(std::span<const FlowTrajectory> trajectories,
                              const std::filesystem::path& path) {
  if (trajectories.empty()) throw std::invalid_argument("no trajectories to export");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << kTrajectoryHeader << '\n';
  out << std::setprecision(17);
  for (std::size_t k = 0; k < trajectories.size(); ++k) {
    if (k > 0) out << '\n';
    const auto& tr = trajectories[k];
    for (std::size_t i = 0; i < tr.t.size(); ++i) {
      out << tr.t[i];
      for (int j = 0; j < 7; ++j) out << ' ' << tr.states[i][j];
      out << '\n';
    }
  }
  if (!out) throw DataError("write failed for " + path.string());
}

std::vector<FlowTrajectory> read_flow_trajectories(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kTrajectoryHeader) {
    throw DataError(path.string() + ": missing trajectory header");
  }
  std::vector<FlowTrajectory> out;
  bool open = false;
  while (std::getline(in, line)) {
    if (line.empty()) {
      open = false;
      continue;
    }
    if (!open) {
      out.emplace_back();
      open = true;
    }
    std::istringstream row(line);
    double t = 0.0;
    PoseVec7 g;
    row >> t;
    for (int j = 0; j < 7; ++j) row >> g[j];
    if (!row) throw DataError(path.string() + ": malformed trajectory row: " + line);
    out.back().t.push_back(t);
    out.back().states.push_back(g);
  }
  return out;
}

}  // namespace cfmg
