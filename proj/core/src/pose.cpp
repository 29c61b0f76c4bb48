#include "cfmg/pose.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cfmg/errors.hpp"

namespace cfmg {

Eigen::Quaterniond normalized(const Eigen::Quaterniond& q) {
  const double n = q.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw NumericalError("cannot normalize a zero or non-finite quaternion");
  }
  return Eigen::Quaterniond(q.w() / n, q.x() / n, q.y() / n, q.z() / n);
}

PoseVec7 to_vec7(const GraspPose& pose) {
  PoseVec7 out;
  const auto& q = pose.orientation;
  out.values << q.w(), q.x(), q.y(), q.z(), pose.position.x(), pose.position.y(),
      pose.position.z();
  return out;
}

GraspPose from_vec7(const PoseVec7& vec, double width) {
  GraspPose pose;
  pose.orientation = normalized(Eigen::Quaterniond(vec[0], vec[1], vec[2], vec[3]));
  pose.position = vec.position();
  pose.width = width;
  return pose;
}

PoseVec7 hemisphere_align(const PoseVec7& g0, const PoseVec7& g1) {
  PoseVec7 out = g1;
  if (g0.values.head<4>().dot(g1.values.head<4>()) < 0.0) {
    out.values.head<4>() = -g1.values.head<4>();
  }
  return out;
}

PoseVec7 interpolate_pose(const PoseVec7& g0, const PoseVec7& g1, double t) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw std::invalid_argument("interpolate_pose: progression must lie in [0, 1]");
  }
  // Exact endpoints; (1 - t) * a + t * b is not bitwise a or b in general.
  if (t == 0.0) return g0;
  if (t == 1.0) return g1;
  PoseVec7 out;
  out.values = (1.0 - t) * g0.values + t * g1.values;
  return out;
}

Velocity7 target_velocity(const PoseVec7& g0, const PoseVec7& g1) {
  Velocity7 out;
  out.values = g1.values - g0.values;
  return out;
}

PoseError pose_error(const GraspPose& a, const GraspPose& b) {
  const double dot = std::clamp(std::abs(a.orientation.coeffs().dot(b.orientation.coeffs())),
                                -1.0, 1.0);
  return {2.0 * std::acos(dot), (a.position - b.position).norm()};
}

Eigen::Quaterniond top_down_orientation(double yaw) {
  return Eigen::Quaterniond(0.0, std::cos(0.5 * yaw), std::sin(0.5 * yaw), 0.0);
}

double tilt_from_vertical(const Eigen::Quaterniond& q) {
  const Eigen::Vector3d approach = normalized(q) * Eigen::Vector3d::UnitZ();
  return std::acos(std::clamp(-approach.z(), -1.0, 1.0));
}

Eigen::Quaterniond snap_top_down(const Eigen::Quaterniond& q) {
  const double n = std::hypot(q.x(), q.y());
  if (n == 0.0) return top_down_orientation(0.0);
  return Eigen::Quaterniond(0.0, q.x() / n, q.y() / n, 0.0);
}

double grasp_yaw(const Eigen::Quaterniond& q) {
  return 2.0 * std::atan2(q.y(), q.x());
}

}  // namespace cfmg
