#include "ulre/phantom.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "ulre/encodings.hpp"

namespace ulre {

void TissueProperties::validate() const {
  if (!(impedance > 0)) throw std::invalid_argument("tissue impedance must be positive");
  if (!(attenuation >= 0)) throw std::invalid_argument("tissue attenuation must be non-negative");
  if (!(scatter_density >= 0 && scatter_density <= 1) || !(amplitude >= 0 && amplitude <= 1))
    throw std::invalid_argument("scatter density and amplitude must lie in [0, 1]");
  if (!(roughness >= 0)) throw std::invalid_argument("roughness must be non-negative");
  if (!(ka >= 0 && kd >= 0 && ks >= 0)) throw std::invalid_argument("Phong coefficients must be non-negative");
  if (!(shininess >= 1)) throw std::invalid_argument("Phong exponent must be >= 1");
}

// ---------------------------------------------------------------------------
// TissueVolume

TissueVolume::TissueVolume(VolumeDims dims, double voxel_size, Vec3 origin)
    : dims_(dims), voxel_size_(voxel_size), origin_(std::move(origin)), voxels_(dims.count()) {
  if (dims.count() == 0) throw std::invalid_argument("volume dims must be positive");
  if (!(voxel_size > 0)) throw std::invalid_argument("voxel size must be positive");
}

Vec3 TissueVolume::extent() const {
  return Vec3(static_cast<double>(dims_.width), static_cast<double>(dims_.height),
              static_cast<double>(dims_.depth)) *
         voxel_size_;
}

Vec3 TissueVolume::voxel_center(std::size_t k, std::size_t i, std::size_t j) const {
  return origin_ + voxel_size_ * Vec3(static_cast<double>(j) + 0.5, static_cast<double>(i) + 0.5,
                                      static_cast<double>(k) + 0.5);
}

bool TissueVolume::contains(const Vec3& p) const {
  const Vec3 rel = p - origin_;
  const Vec3 ext = extent();
  for (int a = 0; a < 3; ++a)
    if (!(rel[a] >= 0 && rel[a] <= ext[a])) return false;
  return true;
}

template <typename F>
double TissueVolume::interpolate(const Vec3& p, F field, double outside) const {
  if (!contains(p)) return outside;
  const Vec3 c = (p - origin_) / voxel_size_ - Vec3::Constant(0.5);
  const std::size_t n[3] = {dims_.width, dims_.height, dims_.depth};
  std::size_t lo[3], hi[3];
  double w[3];
  for (int a = 0; a < 3; ++a) {
    const double x = std::clamp(c[a], 0.0, static_cast<double>(n[a] - 1));
    const double f = std::floor(x);
    lo[a] = static_cast<std::size_t>(f);
    hi[a] = std::min(lo[a] + 1, n[a] - 1);
    w[a] = x - f;
  }
  double acc = 0;
  for (int corner = 0; corner < 8; ++corner) {
    const std::size_t j = (corner & 1) ? hi[0] : lo[0];
    const std::size_t i = (corner & 2) ? hi[1] : lo[1];
    const std::size_t k = (corner & 4) ? hi[2] : lo[2];
    const double wt = ((corner & 1) ? w[0] : 1 - w[0]) * ((corner & 2) ? w[1] : 1 - w[1]) *
                      ((corner & 4) ? w[2] : 1 - w[2]);
    if (wt != 0) acc += wt * field(voxels_[index(k, i, j)]);
  }
  return acc;
}

TissueProperties TissueVolume::sample(const Vec3& p) const {
  if (!contains(p)) return TissueProperties::water();
  TissueProperties t;
  t.impedance = interpolate(p, [](const TissueProperties& v) { return v.impedance; }, 1.0);
  t.attenuation = interpolate(p, [](const TissueProperties& v) { return v.attenuation; }, 0.0);
  t.scatter_density = interpolate(p, [](const TissueProperties& v) { return v.scatter_density; }, 0.0);
  t.amplitude = interpolate(p, [](const TissueProperties& v) { return v.amplitude; }, 0.0);
  t.roughness = interpolate(p, [](const TissueProperties& v) { return v.roughness; }, 0.0);
  t.ka = interpolate(p, [](const TissueProperties& v) { return v.ka; }, 0.0);
  t.kd = interpolate(p, [](const TissueProperties& v) { return v.kd; }, 0.6);
  t.ks = interpolate(p, [](const TissueProperties& v) { return v.ks; }, 0.4);
  t.shininess = interpolate(p, [](const TissueProperties& v) { return v.shininess; }, 10.0);
  return t;
}

double TissueVolume::impedance(const Vec3& p) const {
  return interpolate(p, [](const TissueProperties& v) { return v.impedance; }, 1.0);
}

TissueVolume TissueVolume::translated(const Vec3& offset) const {
  TissueVolume out = *this;
  out.origin_ += offset;
  return out;
}

void TissueVolume::scale_impedance(double factor) {
  if (!(factor > 0)) throw std::invalid_argument("impedance scale must be positive");
  for (auto& v : voxels_) v.impedance *= factor;
}

TissueVolume make_layered_phantom(const std::vector<Layer>& layers, VolumeDims dims, double voxel_size,
                                  const std::optional<SphereInclusion>& inclusion,
                                  const std::optional<Vec3>& origin) {
  if (layers.empty()) throw std::invalid_argument("phantom needs at least one layer");
  double total = 0;
  for (const auto& l : layers) {
    if (!(l.thickness > 0)) throw std::invalid_argument("layer thickness must be positive");
    l.props.validate();
    total += l.thickness;
  }
  const Vec3 o = origin.value_or(Vec3(-0.5 * static_cast<double>(dims.width) * voxel_size,
                                      -0.5 * static_cast<double>(dims.height) * voxel_size, 0.0));
  TissueVolume vol(dims, voxel_size, o);
  const double depth = static_cast<double>(dims.depth) * voxel_size;
  if (total < depth)
    throw std::invalid_argument("layers cover " + std::to_string(total) + " mm but the volume is " +
                                std::to_string(depth) + " mm deep");
  if (inclusion) {
    inclusion->props.validate();
    if (!(inclusion->radius > 0)) throw std::invalid_argument("inclusion radius must be positive");
    const Vec3 lo = inclusion->center - Vec3::Constant(inclusion->radius);
    const Vec3 hi = inclusion->center + Vec3::Constant(inclusion->radius);
    if (!vol.contains(lo) || !vol.contains(hi)) throw std::invalid_argument("inclusion extends outside the volume");
  }

  for (std::size_t k = 0; k < dims.depth; ++k) {
    const double z = (static_cast<double>(k) + 0.5) * voxel_size;
    std::size_t li = 0;
    double top = 0;
    while (li + 1 < layers.size() && z >= top + layers[li].thickness) top += layers[li++].thickness;
    for (std::size_t i = 0; i < dims.height; ++i)
      for (std::size_t j = 0; j < dims.width; ++j) {
        TissueProperties props = layers[li].props;
        if (inclusion && (vol.voxel_center(k, i, j) - inclusion->center).norm() <= inclusion->radius)
          props = inclusion->props;
        vol.at(k, i, j) = props;
      }
  }
  return vol;
}

// ---------------------------------------------------------------------------
// Oracle

namespace {

// Phong response at an interface seen along `dir`; 1 when no normal exists.
double phong_factor(const TissueVolume& vol, const Vec3& at, const Vec3& dir, const TissueProperties& props) {
  const double h = 0.5 * vol.voxel_size();
  Vec3 grad;
  for (int a = 0; a < 3; ++a) {
    const Vec3 e = Vec3::Unit(a) * h;
    grad[a] = (vol.impedance(at + e) - vol.impedance(at - e)) / (2 * h);
  }
  const double gn = grad.norm();
  if (gn < 1e-9) return 1.0;
  const Vec3 view = -dir;  // L = V = -d
  Vec3 normal = grad / gn;
  if (normal.dot(view) < 0) normal = -normal;
  const Vec3 micro = perturb_normal(normal, view, props.roughness);
  const Vec3 mirror = reflect(view, micro);
  return props.ka + props.kd * std::max(0.0, view.dot(normal)) +
         props.ks * std::pow(std::max(0.0, mirror.dot(view)), props.shininess);
}

}  // namespace

PropertyGrid oracle_property_grid(const TissueVolume& vol, const RigidPose& pose, const ScanGeometry& geom) {
  const SampleGrid grid = scanline_grid(pose, geom);
  const std::size_t H = grid.rows, W = grid.cols;
  PropertyGrid g{Tensor<double>::matrix(H, W), Tensor<double>::matrix(H, W), Tensor<double>::matrix(H, W),
                 Tensor<double>::matrix(H, W)};
  std::vector<TissueProperties> props(H * W);
  for (std::size_t i = 0; i < H * W; ++i) props[i] = vol.sample(grid.points[i]);

  for (std::size_t t = 0; t < H; ++t) {
    for (std::size_t r = 0; r < W; ++r) {
      const TissueProperties& p = props[t * W + r];
      g.alpha(t, r) = p.attenuation;
      g.rho(t, r) = p.scatter_density;
      g.phi(t, r) = p.amplitude;
      if (t + 1 == H) continue;
      const double z1 = p.impedance, z2 = props[(t + 1) * W + r].impedance;
      const double refl = interface_coefficients(z1, z2).reflection;
      if (refl == 0) continue;
      const Vec3 mid = 0.5 * (grid.point(t, r) + grid.point(t + 1, r));
      const double factor = phong_factor(vol, mid, grid.directions[r], vol.sample(mid));
      g.beta(t, r) = std::min(1.0, refl * factor);
    }
  }
  return g;
}

Image oracle_render(const TissueVolume& vol, const RigidPose& pose, const ScanGeometry& geom, const PsfConfig& psf,
                    std::uint64_t seed, double nu) {
  return render_image(oracle_property_grid(vol, pose, geom), RenderSettings::from_geometry(geom, psf, seed, nu));
}

// ---------------------------------------------------------------------------
// Dataset I/O

void Dataset::validate() const {
  geom.validate();
  if (frames.size() != poses.size())
    throw FormatError("dataset has " + std::to_string(frames.size()) + " frames but " +
                      std::to_string(poses.size()) + " poses");
  for (const auto& f : frames)
    if (f.rows() != geom.height() || f.cols() != geom.width())
      throw FormatError("frame shape " + shape_string(f.shape()) + " does not match geometry " +
                        std::to_string(geom.height()) + "x" + std::to_string(geom.width()));
}

void write_poses_csv(std::ostream& os, const std::vector<RigidPose>& poses) {
  os << "# frame_index, r00,r01,r02,t0, r10,r11,r12,t1, r20,r21,r22,t2\n";
  os << std::setprecision(17);
  for (std::size_t f = 0; f < poses.size(); ++f) {
    os << f;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) os << ',' << poses[f].rotation(r, c);
      os << ',' << poses[f].translation[r];
    }
    os << '\n';
  }
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& s, const std::string& where) {
  const std::string t = trim(s);
  try {
    std::size_t pos = 0;
    const double v = std::stod(t, &pos);
    if (pos != t.size()) throw std::invalid_argument(t);
    return v;
  } catch (const std::exception&) {
    throw FormatError(where + ": expected a number, got '" + t + "'");
  }
}

Vec3 parse_vec3(const std::string& s, const std::string& where) {
  std::string norm = s;
  std::replace(norm.begin(), norm.end(), ',', ' ');
  std::istringstream is(norm);
  std::string a, b, c, extra;
  if (!(is >> a >> b >> c) || (is >> extra)) throw FormatError(where + ": expected three values, got '" + s + "'");
  return Vec3(parse_double(a, where), parse_double(b, where), parse_double(c, where));
}

}  // namespace

std::vector<RigidPose> read_poses_csv(std::istream& is, const std::string& source) {
  std::vector<RigidPose> poses;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::string where = source + ":" + std::to_string(lineno);
    std::vector<std::string> fields;
    std::stringstream ss(t);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 13)
      throw FormatError(where + ": expected 13 comma-separated values, got " + std::to_string(fields.size()));
    const double index = parse_double(fields[0], where);
    if (index != static_cast<double>(poses.size()))
      throw FormatError(where + ": frame index " + trim(fields[0]) + " out of sequence");
    RigidPose p;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) p.rotation(r, c) = parse_double(fields[1 + r * 4 + c], where);
      p.translation[r] = parse_double(fields[1 + r * 4 + 3], where);
    }
    if (!p.valid(1e-6)) throw FormatError(where + ": rotation block is not a proper rotation");
    poses.push_back(p);
  }
  return poses;
}

void write_geometry(std::ostream& os, const ScanGeometry& geom, const SceneInfo& scene) {
  os << std::setprecision(17);
  os << "W=" << geom.n_scanlines << '\n'
     << "H=" << geom.n_samples << '\n'
     << "lateral_spacing=" << geom.lateral_spacing << '\n'
     << "axial_spacing=" << geom.axial_spacing << '\n'
     << "frequency=" << geom.frequency << '\n';
  if (const auto& bounds = scene.bounds) {
    os << "bounds_min=" << bounds->min.x() << ',' << bounds->min.y() << ',' << bounds->min.z() << '\n';
    os << "bounds_max=" << bounds->max.x() << ',' << bounds->max.y() << ',' << bounds->max.z() << '\n';
  }
  if (scene.noise_seed) os << "noise_seed=" << *scene.noise_seed << '\n';
}

ScanGeometry read_geometry(std::istream& is, SceneInfo* scene, const std::string& source) {
  ScanGeometry g;
  bool seen[5] = {false, false, false, false, false};
  std::optional<Vec3> bmin, bmax;
  std::optional<std::uint64_t> noise_seed;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::string where = source + ":" + std::to_string(lineno);
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw FormatError(where + ": expected key=value");
    const std::string key = trim(t.substr(0, eq)), value = t.substr(eq + 1);
    if (key == "W" || key == "H") {
      const double v = parse_double(value, where);
      if (v != std::floor(v) || v < 2) throw FormatError(where + ": " + key + " must be an integer >= 2");
      (key == "W" ? g.n_scanlines : g.n_samples) = static_cast<int>(v);
      seen[key == "W" ? 0 : 1] = true;
    } else if (key == "lateral_spacing") {
      g.lateral_spacing = parse_double(value, where);
      seen[2] = true;
    } else if (key == "axial_spacing") {
      g.axial_spacing = parse_double(value, where);
      seen[3] = true;
    } else if (key == "frequency") {
      g.frequency = parse_double(value, where);
      seen[4] = true;
    } else if (key == "bounds_min") {
      bmin = parse_vec3(value, where);
    } else if (key == "bounds_max") {
      bmax = parse_vec3(value, where);
    } else if (key == "noise_seed") {
      const std::string v = trim(value);
      std::uint64_t seed = 0;
      const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), seed);
      if (ec != std::errc() || ptr != v.data() + v.size()) throw FormatError(where + ": bad noise_seed '" + v + "'");
      noise_seed = seed;
    } else {
      throw FormatError(where + ": unknown key '" + key + "'");
    }
  }
  static const char* names[] = {"W", "H", "lateral_spacing", "axial_spacing", "frequency"};
  for (int i = 0; i < 5; ++i)
    if (!seen[i]) throw FormatError(source + ": missing key '" + names[i] + "'");
  try {
    g.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(source + ": " + e.what());
  }
  if (bmin.has_value() != bmax.has_value()) throw FormatError(source + ": bounds_min and bounds_max come together");
  if (scene) {
    scene->bounds = bmin ? std::optional<Bounds>(Bounds{*bmin, *bmax}) : std::nullopt;
    scene->noise_seed = noise_seed;
  }
  return g;
}

namespace {
std::filesystem::path frame_path(const std::filesystem::path& dir, std::size_t i) {
  char name[32];
  std::snprintf(name, sizeof(name), "frame_%04zu.pgm", i);
  return dir / "frames" / name;
}
}  // namespace

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  ds.validate();
  std::filesystem::create_directories(dir / "frames");
  {
    std::ofstream g(dir / "geometry.txt");
    if (!g) throw std::runtime_error("cannot write " + (dir / "geometry.txt").string());
    write_geometry(g, ds.geom, ds.scene);
  }
  {
    std::ofstream p(dir / "poses.csv");
    if (!p) throw std::runtime_error("cannot write " + (dir / "poses.csv").string());
    write_poses_csv(p, ds.poses);
  }
  for (std::size_t i = 0; i < ds.frames.size(); ++i) write_pgm(frame_path(dir, i), ds.frames[i]);
}

Dataset read_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  {
    std::ifstream g(dir / "geometry.txt");
    if (!g) throw std::runtime_error("cannot open " + (dir / "geometry.txt").string());
    ds.geom = read_geometry(g, &ds.scene, (dir / "geometry.txt").string());
  }
  {
    std::ifstream p(dir / "poses.csv");
    if (!p) throw std::runtime_error("cannot open " + (dir / "poses.csv").string());
    ds.poses = read_poses_csv(p, (dir / "poses.csv").string());
  }
  std::size_t n_frames = 0;
  if (std::filesystem::is_directory(dir / "frames")) {
    for (const auto& e : std::filesystem::directory_iterator(dir / "frames")) {
      const auto name = e.path().filename().string();
      if (name.starts_with("frame_") && e.path().extension() == ".pgm") ++n_frames;
    }
  }
  if (n_frames != ds.poses.size())
    throw FormatError(dir.string() + ": " + std::to_string(n_frames) + " frames but " +
                      std::to_string(ds.poses.size()) + " pose rows");
  for (std::size_t i = 0; i < n_frames; ++i) {
    const auto path = frame_path(dir, i);
    if (!std::filesystem::exists(path)) throw FormatError(dir.string() + ": missing " + path.filename().string());
    ds.frames.push_back(read_pgm(path));
  }
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// Phantom spec

TissueVolume PhantomSpec::build_volume() const { return make_layered_phantom(layers, dims, voxel_size, inclusion, origin); }

std::vector<RigidPose> PhantomSpec::sweep_poses(bool heldout) const {
  std::vector<RigidPose> poses;
  const int n = heldout ? heldout_frames : frames;
  for (int k = 0; k < n; ++k) {
    double s;
    if (heldout)
      s = (static_cast<double>(k) + 0.5) / std::max(1, n);
    else
      s = n > 1 ? static_cast<double>(k) / (n - 1) : 0.5;
    const double c = s - 0.5;
    const double angle = 2.0 * c * tilt_deg * std::numbers::pi / 180.0;
    const Vec3 t = sweep_center + Vec3(0.0, c * sweep_length, 0.0);
    poses.push_back(RigidPose::from_axis_angle(Vec3::UnitX(), angle, t));
  }
  return poses;
}

namespace {

TissueProperties parse_props(std::istringstream& is, const std::string& where) {
  TissueProperties p;
  std::string tok;
  while (is >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw FormatError(where + ": expected name=value, got '" + tok + "'");
    const std::string k = tok.substr(0, eq);
    const double v = parse_double(tok.substr(eq + 1), where);
    if (k == "Z") p.impedance = v;
    else if (k == "alpha") p.attenuation = v;
    else if (k == "rho") p.scatter_density = v;
    else if (k == "phi") p.amplitude = v;
    else if (k == "delta") p.roughness = v;
    else if (k == "ka") p.ka = v;
    else if (k == "kd") p.kd = v;
    else if (k == "ks") p.ks = v;
    else if (k == "n") p.shininess = v;
    else throw FormatError(where + ": unknown tissue property '" + k + "'");
  }
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(where + ": " + e.what());
  }
  return p;
}

}  // namespace

PhantomSpec parse_phantom_spec(std::istream& is, const std::string& source) {
  PhantomSpec spec;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string t = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (t.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw FormatError(where + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    std::istringstream vs(value);
    if (key == "dims") {
      long d, h, w;
      if (!(vs >> d >> h >> w) || d <= 0 || h <= 0 || w <= 0) throw FormatError(where + ": dims needs three positive integers");
      spec.dims = {static_cast<std::size_t>(d), static_cast<std::size_t>(h), static_cast<std::size_t>(w)};
    } else if (key == "voxel_size") {
      spec.voxel_size = parse_double(value, where);
    } else if (key == "origin") {
      spec.origin = parse_vec3(value, where);
    } else if (key == "layer") {
      std::string thick;
      vs >> thick;
      const double th = parse_double(thick, where);
      spec.layers.push_back({th, parse_props(vs, where)});
    } else if (key == "inclusion") {
      std::string cx, cy, cz, rad;
      if (!(vs >> cx >> cy >> cz >> rad)) throw FormatError(where + ": inclusion needs cx cy cz radius");
      SphereInclusion inc{Vec3(parse_double(cx, where), parse_double(cy, where), parse_double(cz, where)),
                          parse_double(rad, where), {}};
      inc.props = parse_props(vs, where);
      spec.inclusion = inc;
    } else if (key == "W") {
      spec.geom.n_scanlines = static_cast<int>(parse_double(value, where));
    } else if (key == "H") {
      spec.geom.n_samples = static_cast<int>(parse_double(value, where));
    } else if (key == "lateral_spacing") {
      spec.geom.lateral_spacing = parse_double(value, where);
    } else if (key == "axial_spacing") {
      spec.geom.axial_spacing = parse_double(value, where);
    } else if (key == "frequency") {
      spec.geom.frequency = parse_double(value, where);
    } else if (key == "psf_sigma_axial") {
      spec.psf.sigma_axial = parse_double(value, where);
    } else if (key == "psf_sigma_lateral") {
      spec.psf.sigma_lateral = parse_double(value, where);
    } else if (key == "psf_truncation") {
      spec.psf.truncation = parse_double(value, where);
    } else if (key == "nu") {
      spec.nu = parse_double(value, where);
    } else if (key == "frames") {
      spec.frames = static_cast<int>(parse_double(value, where));
    } else if (key == "heldout_frames") {
      spec.heldout_frames = static_cast<int>(parse_double(value, where));
    } else if (key == "sweep_center") {
      spec.sweep_center = parse_vec3(value, where);
    } else if (key == "sweep_length") {
      spec.sweep_length = parse_double(value, where);
    } else if (key == "tilt") {
      spec.tilt_deg = parse_double(value, where);
    } else {
      throw FormatError(where + ": unknown key '" + key + "'");
    }
  }
  if (spec.layers.empty()) throw FormatError(source + ": no layers defined");
  if (spec.frames < 1) throw FormatError(source + ": frames must be positive");
  spec.psf.frequency = spec.geom.frequency;
  try {
    spec.geom.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(source + ": " + e.what());
  }
  return spec;
}

const char* const kBenchmarkPhantomText = R"(# two layers plus a stiff inclusion
dims = 80 48 80
voxel_size = 0.5
W = 64
H = 64
lateral_spacing = 0.5
axial_spacing = 0.5
frequency = 0.15
layer = 14 Z=1.0 alpha=0.2 rho=0.35 phi=0.35 delta=0.05
layer = 26 Z=1.6 alpha=0.3 rho=0.55 phi=0.45 delta=0.1
inclusion = 0 0 25 5 Z=2.3 alpha=0.5 rho=0.15 phi=0.7 delta=0.2
frames = 8
heldout_frames = 4
sweep_center = 0 0 2
sweep_length = 6
tilt = 8
)";

PhantomSpec benchmark_phantom_spec() {
  std::istringstream is(kBenchmarkPhantomText);
  return parse_phantom_spec(is, "benchmark phantom");
}

Dataset generate_dataset(const PhantomSpec& spec, std::uint64_t seed, bool heldout) {
  const TissueVolume vol = spec.build_volume();
  Dataset ds;
  ds.geom = spec.geom;
  ds.poses = spec.sweep_poses(heldout);
  ds.scene.bounds = Bounds{vol.origin(), vol.origin() + vol.extent()};
  ds.scene.noise_seed = seed;
  PsfConfig psf = spec.psf;
  psf.frequency = spec.geom.frequency;
  for (const auto& pose : ds.poses) ds.frames.push_back(quantize8(oracle_render(vol, pose, spec.geom, psf, seed, spec.nu)));
  return ds;
}

}  // namespace ulre
