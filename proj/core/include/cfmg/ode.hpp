#pragma once

#include <Eigen/Core>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cfmg/condition.hpp"
#include "cfmg/pose.hpp"

namespace cfmg {

class VelocityNet;

enum class OdeMethod { Dopri5, Rk4, Euler };

std::string to_string(OdeMethod m);
OdeMethod ode_method_from_string(const std::string& name);

struct IntegratorConfig {
  OdeMethod method = OdeMethod::Dopri5;
  double rtol = 1e-5;
  double atol = 1e-7;
  double initial_step = 0.05;  // fixed step size for rk4 / euler
  int max_steps = 10000;
  double min_step = 1e-10;

  void validate() const;
};

using OdeState = Eigen::VectorXd;
using OdeField = std::function<OdeState(double t, const OdeState& y)>;

struct Dopri5Step {
  OdeState y_next;
  double error = 0.0;  // scaled RMS error; accepted iff <= 1
  double h_next = 0.0;
  bool accepted = false;
};

/// One embedded Dormand-Prince 5(4) step of size h from (t, y). The 5th-order
/// solution is propagated. The step-size factor 0.9 * err^(-1/5) is clamped
/// to [0.2, 5].
Dopri5Step dopri5_step(const OdeField& f, double t, const OdeState& y, double h, double rtol,
                       double atol);

/// Single fixed step of the given method (dopri5 uses its 5th-order weights).
OdeState fixed_step(const OdeField& f, double t, const OdeState& y, double h, OdeMethod method);

struct OdeStepRecord {
  double t = 0.0;  // start of the attempted step
  double h = 0.0;
  double error = 0.0;
  bool accepted = true;
};

/// Accepted states from t0 to t1 (both included exactly) plus every attempt.
struct OdeSolution {
  std::vector<double> t;
  std::vector<OdeState> y;
  std::vector<OdeStepRecord> steps;
};

/// Integrates y' = f(t, y) from t0 to t1 (t1 > t0). Adaptive for dopri5,
/// fixed step `initial_step` otherwise; the last step is clamped so the final
/// time is exactly t1. Throws NumericalError on non-finite field values,
/// step underflow or exhausting `max_steps`.
OdeSolution integrate(const OdeField& f, const OdeState& y0, double t0, double t1,
                      const IntegratorConfig& cfg);

/// `steps` equal fixed steps from t0 to t1.
OdeState integrate_fixed(const OdeField& f, const OdeState& y0, double t0, double t1, int steps,
                         OdeMethod method);

/// Observed order log2(e(n) / e(2n)) on [0, 1] against the exact endpoint.
double convergence_order(const OdeField& f, const OdeState& y0, const OdeState& exact_at_1,
                         OdeMethod method, int base_steps);

using PoseField = std::function<Velocity7(const PoseVec7& g, double t)>;

/// Accepted states of a flow solve, t = 0 ... 1.
struct FlowTrajectory {
  std::vector<double> t;
  std::vector<PoseVec7> states;
  std::vector<OdeStepRecord> steps;
};

struct FlowResult {
  GraspPose final_pose;  // renormalized endpoint
  PoseVec7 final_raw;    // endpoint before renormalization
  FlowTrajectory trajectory;
};

FlowResult integrate_flow(const PoseField& field, const PoseVec7& g0,
                          const IntegratorConfig& cfg, double width = GraspPose{}.width);

/// Integrates the eval-mode network under condition `c`.
FlowResult integrate_flow(const VelocityNet& net, const PoseVec7& g0, const ConditionVector& c,
                          const IntegratorConfig& cfg, double width = GraspPose{}.width);

/// Independent solves over a shared frozen network, split across `threads`
/// workers. Each result equals the corresponding single integrate_flow call.
std::vector<FlowResult> integrate_flows(const VelocityNet& net, std::span<const PoseVec7> g0,
                                        std::span<const ConditionVector> c,
                                        const IntegratorConfig& cfg, unsigned threads = 1);

}  // namespace cfmg
