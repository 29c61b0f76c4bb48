#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cfmg/encoder.hpp"
#include "cfmg/ode.hpp"
#include "cfmg/scene.hpp"
#include "cfmg/velocity_field.hpp"

namespace cfmg {

/// Geometric stand-in for a physical lift-and-hold test.
struct SuccessCriteria {
  double max_tilt = 10.0 * 3.14159265358979323846 / 180.0;  // radians from vertical
  double max_offset_fraction = 0.25;  // of half_extent()
  double min_depth = 0.01;            // below the top, cylinder / box
  double sphere_band = 0.01;          // +- around the equator
  double depth_slack = 0.0;           // widens every depth band by this much

  void validate() const;
};

enum class FailureReason { None, ExcessivelyTilted, OffCenter, TooShallow, TooDeep };

std::string to_string(FailureReason r);

struct Verdict {
  bool success = false;
  FailureReason reason = FailureReason::None;
};

/// Checks tilt, then lateral offset, then depth; reports the first violation.
Verdict success_oracle(const SceneSpec& scene, const GraspPose& pose,
                       const SuccessCriteria& criteria = {});

enum class Split { Seen, Unseen };
enum class Method { Baseline, Cfm };

std::string to_string(Split s);
std::string to_string(Method m);

struct CellCounts {
  int trials = 0;
  int successes = 0;
  double rate() const { return trials == 0 ? 0.0 : static_cast<double>(successes) / trials; }
  bool operator==(const CellCounts&) const = default;
};

/// Success counts per (shape, split, method).
class SuccessTable {
 public:
  void record(ShapeKind shape, Split split, Method method, bool success);
  const CellCounts& cell(ShapeKind shape, Split split, Method method) const;
  CellCounts split_total(Split split, Method method) const;
  CellCounts overall(Method method) const;

  /// Cell-wise sum; aggregation order does not matter.
  void merge(const SuccessTable& other);
  bool operator==(const SuccessTable&) const = default;

 private:
  static std::size_t index(ShapeKind shape, Split split, Method method);
  std::array<CellCounts, 16> cells_{};
};

/// Frozen models used to correct a rigid pose.
struct ModelBundle {
  const AutoencoderNet* encoder = nullptr;
  const VelocityNet* velocity = nullptr;
  IntegratorConfig integrator;
};

struct EvalScene {
  SceneSpec scene;
  std::string template_name;
  Split split = Split::Seen;
};

struct TrialRecord {
  EvalScene scene;
  int rank = 0;
  GraspPose rigid;
  GraspPose corrected;
  Verdict baseline;
  Verdict cfm;
  bool integrator_failed = false;
  std::string integrator_error;
};

struct EvalResult {
  SuccessTable table;
  std::vector<TrialRecord> trials;
};

/// `trials_per_template` jittered instances of each template.
std::vector<EvalScene> make_eval_scenes(std::span<const ObjectTemplate> templates, Split split,
                                        int trials_per_template, Rng& rng);

/// Mid-rank rigid proposals for each scene scored raw (baseline) and after the
/// flow (cfm). An integrator failure counts as a cfm failure. Per-trial
/// randomness comes from derive_seed(seed, trial index).
EvalResult evaluate(const ModelBundle& models, std::span<const EvalScene> scenes,
                    const SuccessCriteria& criteria, std::uint64_t seed);

/// Mid-rank band used for baseline proposals.
inline constexpr int kMidRankLow = 8;
inline constexpr int kMidRankHigh = 13;

/// Writes `t qw qx qy qz px py pz` rows, one block per trajectory, blank
/// line between blocks. Throws DataError if the file cannot be written.
void export_flow_trajectories(std::span<const FlowTrajectory> trajectories,
                              const std::filesystem::path& path);

/// Reads a file written by export_flow_trajectories (states only).
std::vector<FlowTrajectory> read_flow_trajectories(const std::filesystem::path& path);

}  // namespace cfmg
