#include "ulre/geometry.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ulre {

RigidPose RigidPose::from_axis_angle(const Vec3& axis, double angle_rad, const Vec3& t) {
  RigidPose p;
  p.rotation = Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix();
  p.translation = t;
  return p;
}

bool RigidPose::valid(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
}

void RigidPose::validate(double tol) const {
  if (!valid(tol)) throw std::invalid_argument("pose rotation is not a proper rotation matrix");
}

RigidPose RigidPose::compose(const RigidPose& other) const {
  RigidPose out;
  out.rotation = rotation * other.rotation;
  out.translation = rotation * other.translation + translation;
  return out;
}

void ScanGeometry::validate() const {
  if (n_scanlines < 2 || n_samples < 2)
    throw std::invalid_argument("scan geometry needs W, H >= 2 (got W=" + std::to_string(n_scanlines) +
                                ", H=" + std::to_string(n_samples) + ")");
  if (!(lateral_spacing > 0) || !(axial_spacing > 0) || !(frequency > 0))
    throw std::invalid_argument("scan geometry spacings and frequency must be positive");
}

SampleGrid scanline_grid(const RigidPose& pose, const ScanGeometry& geom) {
  pose.validate();
  geom.validate();
  SampleGrid g;
  g.rows = geom.height();
  g.cols = geom.width();
  g.points.resize(g.rows * g.cols);
  g.directions.resize(g.cols);

  const Vec3 dir = pose.rotation * Vec3::UnitZ();
  const double half = static_cast<double>(g.cols - 1) * geom.lateral_spacing / 2.0;
  for (std::size_t j = 0; j < g.cols; ++j) {
    const Vec3 local(static_cast<double>(j) * geom.lateral_spacing - half, 0.0, 0.0);
    const Vec3 origin = pose.translation + pose.rotation * local;
    g.directions[j] = dir;
    for (std::size_t i = 0; i < g.rows; ++i)
      g.points[i * g.cols + j] = origin + static_cast<double>(i) * geom.axial_spacing * dir;
  }
  return g;
}

}  // namespace ulre
