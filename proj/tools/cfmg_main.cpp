// cfmg: generate paired grasp data, train the encoder and velocity field,
// correct rigid poses and evaluate the result.

#include <CLI11.hpp>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "cfmg/errors.hpp"
#include "cfmg/io.hpp"
#include "cfmg/pipeline.hpp"

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct GlobalFlags {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
  std::string data;
  std::vector<std::string> overrides;
};

cfmg::RunConfig resolve(const GlobalFlags& flags) {
  cfmg::RunConfig cfg;
  if (!flags.config.empty()) cfg.load_file(flags.config);
  for (const auto& kv : flags.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw cfmg::UsageError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (flags.seed) cfg.seed = *flags.seed;
  if (!flags.out.empty()) cfg.out = flags.out;
  if (!flags.data.empty()) cfg.data = flags.data;
  cfg.validate();
  return cfg;
}

void print_pose(const cfmg::PoseVec7& g) {
  std::cout << std::setprecision(17);
  for (int i = 0; i < 7; ++i) std::cout << (i ? " " : "") << g[i];
  std::cout << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional flow matching for rigid-to-soft grasp pose correction"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags flags;
  app.add_option("--seed", flags.seed, "Run seed");
  app.add_option("--config", flags.config, "key=value config file")->check(CLI::ExistingFile);
  app.add_option("--out", flags.out, "Output directory for checkpoints and reports");
  app.add_option("--data", flags.data, "Dataset directory (defaults to --out)");
  app.add_option("--set", flags.overrides, "Override a config key (key=value), repeatable");

  auto* gen = app.add_subcommand("gen-data", "Synthesize paired grasps and the depth corpus");
  auto* train = app.add_subcommand("train", "Train the autoencoder, then the velocity field");
  auto* eval = app.add_subcommand("eval", "Score baseline and corrected poses on eval scenes");
  auto* exp = app.add_subcommand("export-flow", "Write flow trajectories for dataset pairs");

  auto* infer = app.add_subcommand("infer", "Correct one rigid pose");
  std::vector<double> pose;
  std::string image_path;
  std::string scene_json;
  std::string trajectory;
  infer->add_option("--pose", pose, "qw qx qy qz px py pz")->expected(7)->required();
  auto* image_opt = infer->add_option("--image", image_path, "Depth image (.dimg)");
  auto* scene_opt = infer->add_option("--scene", scene_json, "Scene spec as JSON");
  image_opt->excludes(scene_opt);
  infer->add_option("--trajectory", trajectory, "Write the flow trajectory here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    const cfmg::RunConfig cfg = resolve(flags);
    if (gen->parsed()) {
      cfmg::cmd_gen_data(cfg, std::cout);
    } else if (train->parsed()) {
      cfmg::cmd_train(cfg, std::cout);
    } else if (eval->parsed()) {
      cfmg::cmd_eval(cfg, std::cout);
    } else if (exp->parsed()) {
      cfmg::cmd_export_flow(cfg, std::cout);
    } else if (infer->parsed()) {
      if (image_path.empty() == scene_json.empty()) {
        throw cfmg::UsageError("infer needs exactly one of --image or --scene");
      }
      const cfmg::DepthImage img =
          image_path.empty()
              ? cfmg::render_depth(cfmg::io::scene_from_json(scene_json), cfg.image_size, cfg.image_size)
              : cfmg::io::read_depth_image(image_path);
      cfmg::PoseVec7 g0;
      for (int i = 0; i < 7; ++i) g0[i] = pose[static_cast<std::size_t>(i)];
      std::optional<std::filesystem::path> traj;
      if (!trajectory.empty()) traj = trajectory;
      const auto r = cfmg::cmd_infer(cfg, g0, img, traj, std::cerr);
      print_pose(cfmg::to_vec7(r.final_pose));
    }
  } catch (const cfmg::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const cfmg::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const cfmg::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kOk;
}
