#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "test_util.hpp"
#include "ulre/phantom.hpp"

using namespace ulre;

namespace {

TissueProperties tissue(double z, double alpha = 0.0, double rho = 0.0, double phi = 0.0) {
  TissueProperties p;
  p.impedance = z;
  p.attenuation = alpha;
  p.scatter_density = rho;
  p.amplitude = phi;
  return p;
}

ScanGeometry small_geom() {
  ScanGeometry g;
  g.n_scanlines = 16;
  g.n_samples = 40;
  return g;
}

PsfConfig flat_psf() {
  PsfConfig p;
  p.frequency = 0;
  return p;
}

// Probe at the top of the volume; samples land on voxel centres (0.5 mm voxels).
RigidPose on_centres() { return {Mat3::Identity(), Vec3(0.0, 0.0, 0.25)}; }

bool all_zero(const Image& img) {
  for (double v : img.storage())
    if (v != 0.0) return false;
  return true;
}

}  // namespace

TEST(Volume, SingleLayerIsConstant) {
  const auto vol = make_layered_phantom({{10.0, tissue(1.7, 0.3, 0.2, 0.4)}}, {20, 10, 10}, 0.5);
  for (const Vec3& p : {Vec3(0, 0, 0.3), Vec3(1.1, -2.0, 5.7), Vec3(-2.4, 2.4, 9.9)}) {
    const auto s = vol.sample(p);
    EXPECT_NEAR(s.impedance, 1.7, 1e-15);
    EXPECT_NEAR(s.attenuation, 0.3, 1e-15);
    EXPECT_NEAR(s.scatter_density, 0.2, 1e-15);
  }
  EXPECT_EQ(vol.impedance(Vec3(0, 0, -5)), TissueProperties::water().impedance);
}

TEST(Volume, InterfaceWithinOneVoxel) {
  const auto vol = make_layered_phantom({{20.0, tissue(1.0)}, {20.0, tissue(3.0)}}, {80, 8, 8}, 0.5);
  EXPECT_EQ(vol.impedance(Vec3(0, 0, 20.0 - 0.5)), 1.0);
  EXPECT_EQ(vol.impedance(Vec3(0, 0, 20.0 + 0.5)), 3.0);
  const double mid = vol.impedance(Vec3(0, 0, 20.0));
  EXPECT_GT(mid, 1.0);
  EXPECT_LT(mid, 3.0);
}

TEST(Volume, SphereVoxelFraction) {
  const VolumeDims dims{60, 60, 60};
  const SphereInclusion inc{Vec3(0, 0, 15), 5.0, tissue(2.5)};
  const auto vol = make_layered_phantom({{30.0, tissue(1.0)}}, dims, 0.5, inc);
  std::size_t inside = 0;
  for (std::size_t k = 0; k < dims.depth; ++k)
    for (std::size_t i = 0; i < dims.height; ++i)
      for (std::size_t j = 0; j < dims.width; ++j) inside += vol.at(k, i, j).impedance == 2.5;
  const double expected = 4.0 / 3.0 * std::numbers::pi * 125.0 / (30.0 * 30.0 * 30.0);
  const double got = static_cast<double>(inside) / static_cast<double>(dims.count());
  EXPECT_NEAR(got / expected, 1.0, 0.1);
}

TEST(Volume, InvalidConstruction) {
  EXPECT_THROW(make_layered_phantom({}, {4, 4, 4}, 1.0), std::invalid_argument);
  EXPECT_THROW(make_layered_phantom({{-1.0, tissue(1)}}, {4, 4, 4}, 1.0), std::invalid_argument);
  EXPECT_THROW(make_layered_phantom({{2.0, tissue(1)}}, {4, 4, 4}, 1.0), std::invalid_argument);
  EXPECT_THROW(make_layered_phantom({{4.0, tissue(1)}}, {4, 4, 4}, 1.0, SphereInclusion{Vec3(0, 0, 3.5), 1.0, tissue(2)}),
               std::invalid_argument);
  EXPECT_THROW(make_layered_phantom({{4.0, tissue(-1)}}, {4, 4, 4}, 1.0), std::invalid_argument);
}

TEST(Oracle, HomogeneousVolumeWithoutScatterersIsDark) {
  const auto vol = make_layered_phantom({{30.0, tissue(1.5, 0.4, 0.0, 0.8)}}, {60, 20, 20}, 0.5);
  EXPECT_TRUE(all_zero(oracle_render(vol, on_centres(), small_geom(), PsfConfig{}, 1)));
}

TEST(Oracle, MatchedLayersGiveNoBand) {
  const auto vol =
      make_layered_phantom({{10.0, tissue(1.0, 0.1)}, {20.0, tissue(1.0, 0.9)}}, {60, 20, 20}, 0.5);
  EXPECT_TRUE(all_zero(oracle_render(vol, on_centres(), small_geom(), flat_psf(), 1)));
}

TEST(Oracle, TwoLayerBandAtInterface) {
  // Samples z = 0.25 + 0.5 t hit voxel centres; the 10 mm interface lies between t = 19 and 20.
  const auto vol = make_layered_phantom({{10.0, tissue(1.0, 0.2)}, {20.0, tissue(3.0, 0.2)}}, {60, 20, 20}, 0.5);
  const auto geom = small_geom();
  const auto grid = oracle_property_grid(vol, on_centres(), geom);
  for (std::size_t t = 0; t < geom.height(); ++t)
    for (std::size_t r = 0; r < geom.width(); ++r) EXPECT_NEAR(grid.beta(t, r), t == 19 ? 0.25 : 0.0, 1e-12);

  const auto settings = RenderSettings::from_geometry(geom, flat_psf(), 1);
  const auto img = render_image(grid, settings);
  const auto kernel = psf_kernel<double>(flat_psf());
  double lateral = 0;
  for (std::size_t j = 0; j < kernel.cols(); ++j) lateral += kernel(kernel.rows() / 2, j);
  const double energy = std::exp(-0.2 * geom.frequency * geom.axial_spacing * 19);
  for (std::size_t r = 4; r < 12; ++r) {
    EXPECT_NEAR(img(19, r), 0.25 * energy * lateral, 1e-12);
    for (std::size_t t = 0; t < geom.height(); ++t) EXPECT_LE(img(t, r), img(19, r));
  }
}

TEST(Oracle, TranslationConsistency) {
  const auto vol = make_layered_phantom({{8.0, tissue(1.0, 0.2, 0.3, 0.5)}, {22.0, tissue(2.0, 0.3, 0.6, 0.4)}},
                                        {60, 24, 24}, 0.5, SphereInclusion{Vec3(1, 0, 14), 3.0, tissue(2.6, 0.4, 0.1, 0.7)});
  const RigidPose pose = RigidPose::from_axis_angle(Vec3::UnitX(), 0.1, Vec3(0.3, -0.4, 1.0));
  const Vec3 shift(2.5, -1.5, 4.0);
  const RigidPose moved{pose.rotation, pose.translation + shift};
  const auto a = oracle_render(vol, pose, small_geom(), PsfConfig{}, 5);
  const auto b = oracle_render(vol.translated(shift), moved, small_geom(), PsfConfig{}, 5);
  EXPECT_LT(ulre::testing::max_abs_diff(a, b), 1e-9);
  EXPECT_FALSE(all_zero(a));
}

TEST(Oracle, ImpedanceScaleInvariance) {
  auto vol = make_layered_phantom({{8.0, tissue(1.0, 0.2, 0.3, 0.5)}, {22.0, tissue(2.0, 0.3, 0.6, 0.4)}},
                                  {60, 24, 24}, 0.5, SphereInclusion{Vec3(1, 0, 14), 3.0, tissue(2.6, 0.4, 0.1, 0.7)});
  const RigidPose pose = RigidPose::from_axis_angle(Vec3::UnitX(), 0.1, Vec3(0.3, -0.4, 1.0));
  const auto a = oracle_render(vol, pose, small_geom(), PsfConfig{}, 5);
  vol.scale_impedance(3.7);
  const auto b = oracle_render(vol, pose, small_geom(), PsfConfig{}, 5);
  EXPECT_LT(ulre::testing::max_abs_diff(a, b), 1e-12);
}

TEST(Oracle, DeterministicInSeed) {
  const auto vol = make_layered_phantom({{30.0, tissue(1.0, 0.2, 0.5, 0.5)}}, {60, 20, 20}, 0.5);
  const auto a = oracle_render(vol, on_centres(), small_geom(), PsfConfig{}, 9);
  const auto b = oracle_render(vol, on_centres(), small_geom(), PsfConfig{}, 9);
  const auto c = oracle_render(vol, on_centres(), small_geom(), PsfConfig{}, 10);
  EXPECT_EQ(a.storage(), b.storage());
  EXPECT_NE(a.storage(), c.storage());
}

TEST(Poses, IdentityRow) {
  std::istringstream in("# comment\n0, 1,0,0,0, 0,1,0,0, 0,0,1,0\n");
  const auto poses = read_poses_csv(in);
  ASSERT_EQ(poses.size(), 1u);
  EXPECT_EQ(poses[0].rotation, Mat3::Identity());
  EXPECT_EQ(poses[0].translation, Vec3::Zero());
}

TEST(Poses, MalformedRowNamesLine) {
  std::istringstream in("0, 1,0,0,0, 0,1,0,0, 0,0,1,0\n\n1, 1,0,0,0, 0,1,0\n");
  try {
    read_poses_csv(in, "p.csv");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("p.csv:3"), std::string::npos) << e.what();
  }
  std::istringstream bad_rot("0, 2,0,0,0, 0,1,0,0, 0,0,1,0\n");
  EXPECT_THROW(read_poses_csv(bad_rot), FormatError);
  std::istringstream bad_num("0, 1,0,0,x, 0,1,0,0, 0,0,1,0\n");
  EXPECT_THROW(read_poses_csv(bad_num), FormatError);
}

TEST(Geometry, KeysAndErrors) {
  std::istringstream ok("W=4\nH=5\nlateral_spacing=0.3\naxial_spacing=0.2\nfrequency=0.1\nnoise_seed=17\n");
  SceneInfo scene;
  const auto g = read_geometry(ok, &scene);
  EXPECT_EQ(g.n_scanlines, 4);
  EXPECT_EQ(g.n_samples, 5);
  EXPECT_EQ(scene.noise_seed, 17u);
  EXPECT_FALSE(scene.bounds.has_value());
  std::istringstream missing("W=4\nH=5\n");
  EXPECT_THROW(read_geometry(missing), FormatError);
  std::istringstream unknown("W=4\nH=5\nlateral_spacing=0.3\naxial_spacing=0.2\nfrequency=0.1\ncolour=red\n");
  EXPECT_THROW(read_geometry(unknown), FormatError);
}

TEST(Dataset, RoundTrip) {
  const auto dir = ulre::testing::scratch_dir();
  std::mt19937_64 rng(3);
  Dataset ds;
  ds.geom = small_geom();
  for (int i = 0; i < 3; ++i) {
    ds.frames.push_back(quantize8(ulre::testing::random_matrix(40, 16, rng, 0, 1)));
    ds.poses.push_back(RigidPose::from_axis_angle(Vec3(1, 2, 3).normalized(), 0.1 * i, Vec3(i, -0.3, 1.0 / 3)));
  }
  ds.scene.bounds = Bounds{Vec3(-1, -2, 0), Vec3(1, 2, 1.0 / 7)};
  ds.scene.noise_seed = 99;
  write_dataset(ds, dir);
  const Dataset back = read_dataset(dir);
  ASSERT_EQ(back.frames.size(), 3u);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(back.frames[i].storage(), ds.frames[i].storage());
    EXPECT_EQ(back.poses[i].rotation, ds.poses[i].rotation);
    EXPECT_EQ(back.poses[i].translation, ds.poses[i].translation);
  }
  EXPECT_EQ(back.geom.n_scanlines, 16);
  EXPECT_EQ(back.geom.frequency, ds.geom.frequency);
  ASSERT_TRUE(back.scene.bounds.has_value());
  EXPECT_EQ(back.scene.bounds->max, ds.scene.bounds->max);
  EXPECT_EQ(back.scene.noise_seed, 99u);
}

TEST(Dataset, CountMismatch) {
  const auto dir = ulre::testing::scratch_dir();
  Dataset ds;
  ds.geom = small_geom();
  for (int i = 0; i < 3; ++i) {
    ds.frames.push_back(Image::matrix(40, 16, 0.5));
    ds.poses.push_back(RigidPose::identity());
  }
  write_dataset(ds, dir);
  {
    std::ofstream p(dir / "poses.csv");
    p << "0, 1,0,0,0, 0,1,0,0, 0,0,1,0\n1, 1,0,0,0, 0,1,0,0, 0,0,1,0\n";
  }
  try {
    read_dataset(dir);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("3 frames"), std::string::npos) << msg;
    EXPECT_NE(msg.find("2 pose"), std::string::npos) << msg;
  }
  ds.poses.pop_back();
  EXPECT_THROW(ds.validate(), FormatError);
}

TEST(PhantomSpec, BenchmarkTextMatchesBuiltIn) {
  std::istringstream in(kBenchmarkPhantomText);
  const PhantomSpec parsed = parse_phantom_spec(in);
  const PhantomSpec built = benchmark_phantom_spec();
  EXPECT_EQ(parsed.dims.depth, built.dims.depth);
  EXPECT_EQ(parsed.layers.size(), 2u);
  EXPECT_EQ(parsed.layers[1].props.impedance, 1.6);
  ASSERT_TRUE(parsed.inclusion.has_value());
  EXPECT_EQ(parsed.inclusion->radius, 5.0);
  EXPECT_EQ(parsed.geom.n_scanlines, 64);
  EXPECT_EQ(parsed.frames, 8);
  EXPECT_EQ(parsed.heldout_frames, 4);
}

TEST(PhantomSpec, ShippedBenchmarkFileMatchesBuiltIn) {
  std::ifstream f(std::string(ULRE_SOURCE_DIR) + "/tools/phantoms/benchmark.txt");
  ASSERT_TRUE(f) << "tools/phantoms/benchmark.txt missing";
  std::stringstream text;
  text << f.rdbuf();
  EXPECT_EQ(text.str(), std::string(kBenchmarkPhantomText));
}

TEST(PhantomSpec, Errors) {
  std::istringstream unknown("dims = 4 4 4\nwobble = 3\n");
  EXPECT_THROW(parse_phantom_spec(unknown), FormatError);
  std::istringstream bad_prop("layer = 2 Q=3\n");
  EXPECT_THROW(parse_phantom_spec(bad_prop), FormatError);
}

TEST(PhantomSpec, HeldOutPosesInterleave) {
  const PhantomSpec spec = benchmark_phantom_spec();
  const auto train = spec.sweep_poses(false), held = spec.sweep_poses(true);
  ASSERT_EQ(train.size(), 8u);
  ASSERT_EQ(held.size(), 4u);
  EXPECT_NEAR(train.front().translation.y(), -3.0, 1e-12);
  EXPECT_NEAR(train.back().translation.y(), 3.0, 1e-12);
  for (const auto& p : held) {
    EXPECT_TRUE(p.valid());
    bool coincides = false;
    for (const auto& q : train) coincides |= (p.translation - q.translation).norm() < 1e-9;
    EXPECT_FALSE(coincides);
  }
}

TEST(PhantomSpec, GenerateDatasetIsQuantizedAndDeterministic) {
  PhantomSpec spec = benchmark_phantom_spec();
  spec.geom.n_scanlines = 16;
  spec.geom.n_samples = 24;
  spec.frames = 2;
  const Dataset a = generate_dataset(spec, 4), b = generate_dataset(spec, 4);
  ASSERT_EQ(a.frames.size(), 2u);
  EXPECT_EQ(a.scene.noise_seed, 4u);
  ASSERT_TRUE(a.scene.bounds.has_value());
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(a.frames[i].storage(), b.frames[i].storage());
    EXPECT_EQ(quantize8(a.frames[i]).storage(), a.frames[i].storage());
  }
}
