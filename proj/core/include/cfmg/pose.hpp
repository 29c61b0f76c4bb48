#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace cfmg {

using Vec7 = Eigen::Matrix<double, 7, 1>;

/// Gripper pose in the table frame (z up, table plane z = 0, meters).
///
/// The gripper approaches along its local +z axis and closes along local +x.
/// `width` is the fixed max opening and is never changed by flow operations.
struct GraspPose {
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double width = 0.08;
};

/// Raw 7-vector [qw, qx, qy, qz, px, py, pz]. The quaternion block is not
/// required to be unit-norm: intermediate flow states live in raw 7-space.
struct PoseVec7 {
  Vec7 values = Vec7::Zero();

  Eigen::Vector4d quat() const { return values.head<4>(); }
  Eigen::Vector3d position() const { return values.tail<3>(); }
  double operator[](int i) const { return values[i]; }
  double& operator[](int i) { return values[i]; }
  bool operator==(const PoseVec7& other) const { return values == other.values; }
};

/// Rate of change of a PoseVec7 along the flow; same component layout.
struct Velocity7 {
  Vec7 values = Vec7::Zero();

  double operator[](int i) const { return values[i]; }
  double& operator[](int i) { return values[i]; }
  bool operator==(const Velocity7& other) const { return values == other.values; }
};

struct PoseError {
  double angle = 0.0;     // radians
  double distance = 0.0;  // meters
};

/// Unit-normalizes `q`. Throws NumericalError for a zero or non-finite quaternion.
Eigen::Quaterniond normalized(const Eigen::Quaterniond& q);

PoseVec7 to_vec7(const GraspPose& pose);

/// Inverse of to_vec7; renormalizes the quaternion block.
GraspPose from_vec7(const PoseVec7& vec, double width = GraspPose{}.width);

/// Returns `g1` with its quaternion negated iff dot(q0, q1) < 0.
PoseVec7 hemisphere_align(const PoseVec7& g0, const PoseVec7& g1);

/// Straight-line path (1 - t) g0 + t g1 on the raw 7-vector. Throws
/// std::invalid_argument for t outside [0, 1].
PoseVec7 interpolate_pose(const PoseVec7& g0, const PoseVec7& g1, double t);

/// Constant velocity g1 - g0 of the straight path.
Velocity7 target_velocity(const PoseVec7& g0, const PoseVec7& g1);

/// Double-cover invariant rotation angle and Euclidean position gap.
PoseError pose_error(const GraspPose& a, const GraspPose& b);

// Top-down gripper geometry. A top-down grasp with heading `yaw` (direction of
// the closing axis in the table plane) is q = (0, cos(yaw/2), sin(yaw/2), 0).

Eigen::Quaterniond top_down_orientation(double yaw);

/// Angle between the gripper approach axis and straight down (-z).
double tilt_from_vertical(const Eigen::Quaterniond& q);

/// Closest top-down orientation to `q` (same sign convention as `q`).
/// Approach-up poses, which have no defined heading, map to yaw 0.
Eigen::Quaterniond snap_top_down(const Eigen::Quaterniond& q);

/// Heading of snap_top_down(q), in (-2pi, 2pi].
double grasp_yaw(const Eigen::Quaterniond& q);

}  // namespace cfmg
