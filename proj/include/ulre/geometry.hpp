#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cstddef>
#include <vector>

namespace ulre {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Probe pose in world millimetres: x_world = rotation * x_probe + translation.
struct RigidPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidPose identity() { return {}; }
  static RigidPose from_axis_angle(const Vec3& axis, double angle_rad, const Vec3& t = Vec3::Zero());

  /// Orthonormal with det +1 within `tol`.
  bool valid(double tol = 1e-9) const;
  /// Throws std::invalid_argument when !valid(tol).
  void validate(double tol = 1e-9) const;

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  /// (this ∘ other)(p) = this(other(p)).
  RigidPose compose(const RigidPose& other) const;
};

/// Linear-array probe sampling layout. Scanlines run along probe +z, the
/// array along probe +x.
struct ScanGeometry {
  int n_scanlines = 64;        // W
  int n_samples = 64;          // H
  double lateral_spacing = 0.5;  // mm per scanline
  double axial_spacing = 0.5;    // mm per sample (Δt)
  double frequency = 0.15;       // cycles per axial sample

  void validate() const;
  std::size_t width() const { return static_cast<std::size_t>(n_scanlines); }
  std::size_t height() const { return static_cast<std::size_t>(n_samples); }
};

/// HxW lattice of world points (row = depth sample, column = scanline).
struct SampleGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Vec3> points;      // row-major, rows*cols
  std::vector<Vec3> directions;  // one unit beam direction per column

  const Vec3& point(std::size_t row, std::size_t col) const { return points[row * cols + col]; }
};

SampleGrid scanline_grid(const RigidPose& pose, const ScanGeometry& geom);

}  // namespace ulre
