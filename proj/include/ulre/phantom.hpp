#pragma once

// Synthetic tissue volumes and the ground-truth B-mode simulator used to
// produce training data, plus the on-disk dataset layout:
//
//   <dir>/geometry.txt   key=value lines (W, H, lateral_spacing,
//                        axial_spacing, frequency; optional bounds_min,
//                        bounds_max as "x,y,z" and noise_seed)
//   <dir>/poses.csv      frame_index, then the 3x4 [R|t] row-major
//   <dir>/frames/frame_%04d.pgm

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "ulre/geometry.hpp"
#include "ulre/image_io.hpp"
#include "ulre/renderer.hpp"

namespace ulre {

struct TissueProperties {
  double impedance = 1.0;
  double attenuation = 0.0;
  double scatter_density = 0.0;
  double amplitude = 0.0;
  double roughness = 0.0;
  // Phong coefficients. Placeholder defaults, not measured tissue values.
  double ka = 0.0;
  double kd = 0.6;
  double ks = 0.4;
  double shininess = 10.0;

  void validate() const;
  static TissueProperties water() { return {}; }
};

struct Layer {
  double thickness;  // mm
  TissueProperties props;
};

struct SphereInclusion {
  Vec3 center;
  double radius;
  TissueProperties props;
};

/// Voxel counts: depth along world z, height along y, width along x.
struct VolumeDims {
  std::size_t depth = 0, height = 0, width = 0;
  std::size_t count() const { return depth * height * width; }
};

class TissueVolume {
 public:
  TissueVolume(VolumeDims dims, double voxel_size, Vec3 origin);

  const VolumeDims& dims() const { return dims_; }
  double voxel_size() const { return voxel_size_; }
  /// World position of the minimum corner.
  const Vec3& origin() const { return origin_; }
  Vec3 extent() const;
  Vec3 voxel_center(std::size_t k, std::size_t i, std::size_t j) const;

  TissueProperties& at(std::size_t k, std::size_t i, std::size_t j) { return voxels_[index(k, i, j)]; }
  const TissueProperties& at(std::size_t k, std::size_t i, std::size_t j) const { return voxels_[index(k, i, j)]; }

  bool contains(const Vec3& p) const;
  /// Trilinear between voxel centres; points outside the volume read as water.
  TissueProperties sample(const Vec3& p) const;
  double impedance(const Vec3& p) const;

  /// Same content with the origin shifted by `offset`.
  TissueVolume translated(const Vec3& offset) const;
  void scale_impedance(double factor);

 private:
  std::size_t index(std::size_t k, std::size_t i, std::size_t j) const {
    return (k * dims_.height + i) * dims_.width + j;
  }
  template <typename F>
  double interpolate(const Vec3& p, F field, double outside) const;

  VolumeDims dims_;
  double voxel_size_;
  Vec3 origin_;
  std::vector<TissueProperties> voxels_;
};

/// Layers stack along +z from the volume top; each voxel takes the layer
/// containing its centre depth. The inclusion overrides voxels whose centre
/// lies inside the sphere. Default origin centres x and y on 0 with z from 0.
/// Throws std::invalid_argument for non-positive thicknesses, layers that do
/// not cover the depth, or an inclusion leaving the volume.
TissueVolume make_layered_phantom(const std::vector<Layer>& layers, VolumeDims dims, double voxel_size,
                                  const std::optional<SphereInclusion>& inclusion = std::nullopt,
                                  const std::optional<Vec3>& origin = std::nullopt);

/// Per-pixel ground-truth medium maps for one pose: β from impedance steps
/// between consecutive samples scaled by the Phong response, α, ρ_s, φ
/// sampled at each point.
PropertyGrid oracle_property_grid(const TissueVolume& vol, const RigidPose& pose, const ScanGeometry& geom);

/// Ground-truth B-mode frame (C_ref = 0, clamped to [0, 1]).
Image oracle_render(const TissueVolume& vol, const RigidPose& pose, const ScanGeometry& geom,
                    const PsfConfig& psf, std::uint64_t seed, double nu = 4.0);

struct Bounds {
  Vec3 min;
  Vec3 max;
};

/// Optional scene metadata stored next to the scan geometry.
struct SceneInfo {
  std::optional<Bounds> bounds;
  std::optional<std::uint64_t> noise_seed;  // seed of the frozen scatter noise
};

struct Dataset {
  std::vector<Image> frames;
  std::vector<RigidPose> poses;
  ScanGeometry geom;
  SceneInfo scene;

  void validate() const;
};

void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
/// Throws FormatError on malformed or inconsistent content.
Dataset read_dataset(const std::filesystem::path& dir);

void write_poses_csv(std::ostream& os, const std::vector<RigidPose>& poses);
std::vector<RigidPose> read_poses_csv(std::istream& is, const std::string& source = "poses.csv");
void write_geometry(std::ostream& os, const ScanGeometry& geom, const SceneInfo& scene = {});
ScanGeometry read_geometry(std::istream& is, SceneInfo* scene = nullptr,
                           const std::string& source = "geometry.txt");

/// Text description of a phantom and its probe sweep (see README).
struct PhantomSpec {
  VolumeDims dims{80, 48, 80};
  double voxel_size = 0.5;
  std::optional<Vec3> origin;
  std::vector<Layer> layers;
  std::optional<SphereInclusion> inclusion;
  ScanGeometry geom;
  PsfConfig psf;
  double nu = 4.0;
  int frames = 8;
  int heldout_frames = 0;
  Vec3 sweep_center{0.0, 0.0, 2.0};
  double sweep_length = 6.0;  // mm along world y
  double tilt_deg = 8.0;      // max tilt about the lateral axis

  TissueVolume build_volume() const;
  /// Evenly spaced sweep poses; held-out poses sit between training poses.
  std::vector<RigidPose> sweep_poses(bool heldout) const;
};

PhantomSpec parse_phantom_spec(std::istream& is, const std::string& source = "phantom spec");

/// Two layers and a spherical inclusion on a 64x64 scan, eight sweep poses.
PhantomSpec benchmark_phantom_spec();
extern const char* const kBenchmarkPhantomText;

/// Renders every sweep pose with oracle_render; frames quantized to 8 bits.
Dataset generate_dataset(const PhantomSpec& spec, std::uint64_t seed, bool heldout = false);

}  // namespace ulre
