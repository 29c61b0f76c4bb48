#include "cfmg/ode.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "cfmg/errors.hpp"
#include "cfmg/velocity_field.hpp"

namespace cfmg {

namespace {

// Dormand-Prince 5(4) tableau.
constexpr std::array<double, 7> kC{0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0};
constexpr double kA[7][6] = {
    {},
    {1.0 / 5.0},
    {3.0 / 40.0, 9.0 / 40.0},
    {44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0},
    {19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0},
    {9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0},
    {35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0},
};
// 5th-order weights are the last stage row; the error weights are b5 - b4.
constexpr std::array<double, 7> kB5{35.0 / 384.0,     0.0, 500.0 / 1113.0, 125.0 / 192.0,
                                    -2187.0 / 6784.0, 11.0 / 84.0, 0.0};
constexpr std::array<double, 7> kE{71.0 / 57600.0,      0.0,          -71.0 / 16695.0,
                                   71.0 / 1920.0,       -17253.0 / 339200.0, 22.0 / 525.0,
                                   -1.0 / 40.0};

constexpr double kSafety = 0.9;
constexpr double kMinFactor = 0.2;
constexpr double kMaxFactor = 5.0;

OdeState eval_field(const OdeField& f, double t, const OdeState& y) {
  OdeState k = f(t, y);
  if (k.size() != y.size()) throw std::invalid_argument("field returned wrong state size");
  if (!k.allFinite()) throw NumericalError("non-finite field value at t = " + std::to_string(t));
  return k;
}

/// Stages k1..k6 (and k7 when `with_error`) of one DP step.
std::array<OdeState, 7> dopri5_stages(const OdeField& f, double t, const OdeState& y, double h,
                                      bool with_error) {
  std::array<OdeState, 7> k;
  const int stages = with_error ? 7 : 6;
  for (int s = 0; s < stages; ++s) {
    OdeState ys = y;
    for (int j = 0; j < s; ++j) {
      if (kA[s][j] != 0.0) ys += (h * kA[s][j]) * k[j];
    }
    k[s] = eval_field(f, t + kC[s] * h, ys);
  }
  return k;
}

OdeState dopri5_solution(const std::array<OdeState, 7>& k, const OdeState& y, double h) {
  OdeState out = y;
  for (int s = 0; s < 6; ++s) {
    if (kB5[s] != 0.0) out += (h * kB5[s]) * k[s];
  }
  return out;
}

}  // namespace

std::string to_string(OdeMethod m) {
  switch (m) {
    case OdeMethod::Dopri5: return "dopri5";
    case OdeMethod::Rk4: return "rk4";
    case OdeMethod::Euler: return "euler";
  }
  return "dopri5";
}

OdeMethod ode_method_from_string(const std::string& name) {
  if (name == "dopri5") return OdeMethod::Dopri5;
  if (name == "rk4") return OdeMethod::Rk4;
  if (name == "euler") return OdeMethod::Euler;
  throw std::invalid_argument("unknown integrator method: " + name);
}

void IntegratorConfig::validate() const {
  if (!(rtol > 0.0) || !(atol > 0.0)) throw std::invalid_argument("rtol and atol must be > 0");
  if (max_steps < 1) throw std::invalid_argument("max steps must be >= 1");
  if (!(initial_step > 0.0)) throw std::invalid_argument("initial step must be > 0");
  if (!(min_step > 0.0)) throw std::invalid_argument("min step must be > 0");
}

Dopri5Step dopri5_step(const OdeField& f, double t, const OdeState& y, double h, double rtol,
                       double atol) {
  if (!(h > 0.0)) throw std::invalid_argument("dopri5_step: h must be positive");
  const auto k = dopri5_stages(f, t, y, h, true);
  Dopri5Step out;
  out.y_next = dopri5_solution(k, y, h);

  OdeState err = OdeState::Zero(y.size());
  for (int s = 0; s < 7; ++s) {
    if (kE[s] != 0.0) err += (h * kE[s]) * k[s];
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double scale = atol + rtol * std::max(std::abs(y[i]), std::abs(out.y_next[i]));
    const double r = err[i] / scale;
    sum += r * r;
  }
  out.error = y.size() > 0 ? std::sqrt(sum / static_cast<double>(y.size())) : 0.0;
  out.accepted = out.error <= 1.0;
  const double factor =
      out.error == 0.0
          ? kMaxFactor
          : std::clamp(kSafety * std::pow(out.error, -0.2), kMinFactor, kMaxFactor);
  out.h_next = h * factor;
  return out;
}

OdeState fixed_step(const OdeField& f, double t, const OdeState& y, double h, OdeMethod method) {
  switch (method) {
    case OdeMethod::Euler: return y + h * eval_field(f, t, y);
    case OdeMethod::Rk4: {
      const OdeState k1 = eval_field(f, t, y);
      const OdeState k2 = eval_field(f, t + 0.5 * h, y + (0.5 * h) * k1);
      const OdeState k3 = eval_field(f, t + 0.5 * h, y + (0.5 * h) * k2);
      const OdeState k4 = eval_field(f, t + h, y + h * k3);
      return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    case OdeMethod::Dopri5: return dopri5_solution(dopri5_stages(f, t, y, h, false), y, h);
  }
  return y;
}

OdeSolution integrate(const OdeField& f, const OdeState& y0, double t0, double t1,
                      const IntegratorConfig& cfg) {
  cfg.validate();
  if (!(t1 > t0)) throw std::invalid_argument("integrate: t1 must exceed t0");
  OdeSolution sol;
  sol.t.push_back(t0);
  sol.y.push_back(y0);

  double t = t0;
  OdeState y = y0;
  double h = std::min(cfg.initial_step, t1 - t0);
  int attempts = 0;
  while (t < t1) {
    if (attempts++ >= cfg.max_steps) {
      throw NumericalError("integrator exceeded " + std::to_string(cfg.max_steps) +
                           " steps at t = " + std::to_string(t));
    }
    const double remaining = t1 - t;
    bool last = false;
    // Stretch to the boundary rather than leave a sliver.
    if (h * 1.01 >= remaining) {
      h = remaining;
      last = true;
    }
    if (h < cfg.min_step) {
      throw NumericalError("step size underflow (h = " + std::to_string(h) + ") at t = " +
                           std::to_string(t));
    }
    if (cfg.method == OdeMethod::Dopri5) {
      Dopri5Step step = dopri5_step(f, t, y, h, cfg.rtol, cfg.atol);
      sol.steps.push_back({t, h, step.error, step.accepted});
      if (step.accepted) {
        t = last ? t1 : t + h;
        y = std::move(step.y_next);
        sol.t.push_back(t);
        sol.y.push_back(y);
      }
      h = step.h_next;
    } else {
      y = fixed_step(f, t, y, h, cfg.method);
      sol.steps.push_back({t, h, 0.0, true});
      t = last ? t1 : t + h;
      sol.t.push_back(t);
      sol.y.push_back(y);
    }
  }
  return sol;
}

OdeState integrate_fixed(const OdeField& f, const OdeState& y0, double t0, double t1, int steps,
                         OdeMethod method) {
  if (steps < 1) throw std::invalid_argument("integrate_fixed: steps must be >= 1");
  const double h = (t1 - t0) / steps;
  OdeState y = y0;
  for (int i = 0; i < steps; ++i) y = fixed_step(f, t0 + i * h, y, h, method);
  return y;
}

double convergence_order(const OdeField& f, const OdeState& y0, const OdeState& exact_at_1,
                         OdeMethod method, int base_steps) {
  const double e1 = (integrate_fixed(f, y0, 0.0, 1.0, base_steps, method) - exact_at_1).norm();
  const double e2 =
      (integrate_fixed(f, y0, 0.0, 1.0, 2 * base_steps, method) - exact_at_1).norm();
  return std::log2(e1 / e2);
}

FlowResult integrate_flow(const PoseField& field, const PoseVec7& g0,
                          const IntegratorConfig& cfg, double width) {
  const OdeField f = [&field](double t, const OdeState& y) -> OdeState {
    PoseVec7 g;
    g.values = y;
    return field(g, std::clamp(t, 0.0, 1.0)).values;
  };
  OdeSolution sol = integrate(f, g0.values, 0.0, 1.0, cfg);
  FlowResult out;
  out.trajectory.t = std::move(sol.t);
  out.trajectory.steps = std::move(sol.steps);
  out.trajectory.states.reserve(sol.y.size());
  for (const auto& y : sol.y) {
    PoseVec7 g;
    g.values = y;
    out.trajectory.states.push_back(g);
  }
  out.final_raw = out.trajectory.states.back();
  out.final_pose = from_vec7(out.final_raw, width);
  return out;
}

FlowResult integrate_flow(const VelocityNet& net, const PoseVec7& g0, const ConditionVector& c,
                          const IntegratorConfig& cfg, double width) {
  return integrate_flow([&](const PoseVec7& g, double t) { return net(g, t, c); }, g0, cfg,
                        width);
}

std::vector<FlowResult> integrate_flows(const VelocityNet& net, std::span<const PoseVec7> g0,
                                        std::span<const ConditionVector> c,
                                        const IntegratorConfig& cfg, unsigned threads) {
  if (g0.size() != c.size()) throw std::invalid_argument("integrate_flows: size mismatch");
  std::vector<FlowResult> out(g0.size());
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(g0.size())));
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < g0.size(); i += stride) {
      out[i] = integrate_flow(net, g0[i], c[i], cfg);
    }
  };
  if (threads <= 1) {
    work(0, 1);
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          work(w, threads);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace cfmg
