#include "ulre/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>
#include <thread>

namespace ulre {

using ad::Tape;
using ad::Var;

const char* to_string(Precision p) { return p == Precision::F32 ? "f32" : "f64"; }

Precision parse_precision(const std::string& s) {
  if (s == "f32" || s == "float32") return Precision::F32;
  if (s == "f64" || s == "float64") return Precision::F64;
  throw std::invalid_argument("unknown precision '" + s + "' (expected f32 or f64)");
}

// ---------------------------------------------------------------------------
// Config

void TrainConfig::validate() const {
  if (iterations < 0) throw std::invalid_argument("iterations must be non-negative");
  if (batch_frames < 1) throw std::invalid_argument("batch_frames must be at least 1");
  if (!(learning_rate > 0)) throw std::invalid_argument("learning_rate must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1))
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  if (!(epsilon > 0)) throw std::invalid_argument("epsilon must be positive");
  if (!(lambda_ssim >= 0)) throw std::invalid_argument("lambda_ssim must be non-negative");
  if (!(nu > 0)) throw std::invalid_argument("nu must be positive");
  if (threads < 0) throw std::invalid_argument("threads must be non-negative");
  network.validate();
  psf.validate();
}

namespace {

template <typename I>
I parse_int(const std::string& key, const std::string& s) {
  I v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw std::invalid_argument(key + ": expected an integer, got '" + s + "'");
  return v;
}

double parse_real(const std::string& key, const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw std::invalid_argument(key + ": expected a number, got '" + s + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace

void TrainConfig::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  auto& net = network;
  if (key == "iterations") iterations = parse_int<int>(key, value);
  else if (key == "batch_frames") batch_frames = parse_int<int>(key, value);
  else if (key == "learning_rate") learning_rate = parse_real(key, value);
  else if (key == "beta1") beta1 = parse_real(key, value);
  else if (key == "beta2") beta2 = parse_real(key, value);
  else if (key == "epsilon") epsilon = parse_real(key, value);
  else if (key == "lambda_ssim") lambda_ssim = parse_real(key, value);
  else if (key == "seed") seed = parse_int<std::uint64_t>(key, value);
  else if (key == "noise_seed") noise_seed = parse_int<std::uint64_t>(key, value);
  else if (key == "precision") precision = parse_precision(value);
  else if (key == "threads") threads = parse_int<int>(key, value);
  else if (key == "nu") nu = parse_real(key, value);
  else if (key == "psf_sigma_axial") psf.sigma_axial = parse_real(key, value);
  else if (key == "psf_sigma_lateral") psf.sigma_lateral = parse_real(key, value);
  else if (key == "psf_truncation") psf.truncation = parse_real(key, value);
  else if (key == "spatial_depth") net.spatial_depth = parse_int<int>(key, value);
  else if (key == "spatial_width") net.spatial_width = parse_int<int>(key, value);
  else if (key == "directional_depth") net.directional_depth = parse_int<int>(key, value);
  else if (key == "directional_width") net.directional_width = parse_int<int>(key, value);
  else if (key == "bottleneck") net.bottleneck = parse_int<int>(key, value);
  else if (key == "w0") net.w0 = parse_real(key, value);
  else if (key == "activation") net.activation = parse_activation(value);
  else if (key == "encoding") net.encoding = parse_encoding(value);
  else if (key == "reflection") net.reflection = parse_reflection(value);
  else if (key == "rhe_degree") net.rhe_degree = parse_int<int>(key, value);
  else if (key == "position_frequencies") net.position_encoding.n_freq = parse_int<int>(key, value);
  else if (key == "direction_frequencies") net.direction_encoding.n_freq = parse_int<int>(key, value);
  else throw std::invalid_argument("unknown config key '" + key + "'");
}

std::string TrainConfig::serialize() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "iterations=" << iterations << '\n'
     << "batch_frames=" << batch_frames << '\n'
     << "learning_rate=" << learning_rate << '\n'
     << "beta1=" << beta1 << '\n'
     << "beta2=" << beta2 << '\n'
     << "epsilon=" << epsilon << '\n'
     << "lambda_ssim=" << lambda_ssim << '\n'
     << "seed=" << seed << '\n'
     << "precision=" << to_string(precision) << '\n'
     << "nu=" << nu << '\n'
     << "psf_sigma_axial=" << psf.sigma_axial << '\n'
     << "psf_sigma_lateral=" << psf.sigma_lateral << '\n'
     << "psf_truncation=" << psf.truncation << '\n'
     << "spatial_depth=" << network.spatial_depth << '\n'
     << "spatial_width=" << network.spatial_width << '\n'
     << "directional_depth=" << network.directional_depth << '\n'
     << "directional_width=" << network.directional_width << '\n'
     << "bottleneck=" << network.bottleneck << '\n'
     << "w0=" << network.w0 << '\n'
     << "activation=" << to_string(network.activation) << '\n'
     << "encoding=" << to_string(network.encoding) << '\n'
     << "reflection=" << to_string(network.reflection) << '\n'
     << "rhe_degree=" << network.rhe_degree << '\n'
     << "position_frequencies=" << network.position_encoding.n_freq << '\n'
     << "direction_frequencies=" << network.direction_encoding.n_freq << '\n';
  if (noise_seed) os << "noise_seed=" << *noise_seed << '\n';
  return os.str();
}

TrainConfig parse_train_config(std::istream& is, const std::string& source) {
  TrainConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string t = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (t.empty()) continue;
    const auto eq = t.find('=');
    const std::string where = source + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw FormatError(where + ": expected key=value");
    try {
      cfg.set(trim(t.substr(0, eq)), t.substr(eq + 1));
    } catch (const std::invalid_argument& e) {
      throw FormatError(where + ": " + e.what());
    }
  }
  return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return parse_train_config(in, path.string());
}

// ---------------------------------------------------------------------------
// Forward pipeline

Bounds scene_bounds(const Dataset& ds) {
  if (ds.scene.bounds) return *ds.scene.bounds;
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const auto& pose : ds.poses) {
    const SampleGrid g = scanline_grid(pose, ds.geom);
    for (const auto& p : g.points) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
  }
  if (ds.poses.empty()) return {Vec3::Constant(-1), Vec3::Constant(1)};
  const Vec3 pad = Vec3::Constant(0.05 * (hi - lo).maxCoeff() + 1e-6);
  return {lo - pad, hi + pad};
}

RenderSettings render_settings(const TrainConfig& cfg, const ScanGeometry& geom) {
  PsfConfig psf = cfg.psf;
  psf.frequency = geom.frequency;
  return RenderSettings::from_geometry(geom, psf, cfg.noise_seed.value_or(0), cfg.nu);
}

namespace {

// Pose-dependent constants of the forward pass.
template <typename T>
struct FrameInputs {
  Tensor<T> encoded_pos;  // N x enc
  Tensor<T> view;         // N x 3, -beam direction
  std::size_t rows = 0, cols = 0;
};

template <typename T>
FrameInputs<T> frame_inputs(const NetworkConfig& net, const RigidPose& pose, const ScanGeometry& geom,
                            const Bounds& bounds) {
  const SampleGrid grid = scanline_grid(pose, geom);
  const std::size_t n = grid.points.size();
  Tensor<T> pos = Tensor<T>::matrix(n, 3);
  Tensor<T> view = Tensor<T>::matrix(n, 3);
  const Vec3 span = (bounds.max - bounds.min).cwiseMax(Vec3::Constant(1e-12));
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 u = 2.0 * (grid.points[i] - bounds.min).cwiseQuotient(span) - Vec3::Ones();
    const Vec3& d = grid.directions[i % grid.cols];
    for (int a = 0; a < 3; ++a) {
      pos(i, static_cast<std::size_t>(a)) = static_cast<T>(u[a]);
      view(i, static_cast<std::size_t>(a)) = static_cast<T>(-d[a]);
    }
  }
  return {fourier_encode_rows(pos, net.position_encoding), std::move(view), grid.rows, grid.cols};
}

template <typename T>
FramePrediction<T> predict(const BoundParams<T>& params, const NetworkConfig& net, const FrameInputs<T>& in,
                           const RenderSettings& settings) {
  Tape<T>& tape = params.vars.front().tape();
  const Var<T> enc = tape.constant(in.encoded_pos);
  const Var<T> view = tape.constant(in.view);

  FramePrediction<T> out;
  out.medium = spatial_forward(params, net, enc);
  const auto& m = out.medium;

  const Var<T> micro = perturb_normal_rows(m.normal, view, m.delta);
  const Var<T> ndotv = ad::row_sum(micro * view);
  const Var<T> dir = net.reflection == ReflectionMode::None ? view : reflect_rows(view, micro);

  Var<T> features = net.encoding == DirectionEncoding::Rhe ? rhe_encode_rows(dir, m.delta, net.rhe())
                                                           : fourier_encode_rows(dir, net.direction_encoding);
  if (net.reflection == ReflectionMode::ViewDir) {
    const Var<T> parts[] = {features, fourier_encode_rows(view, net.direction_encoding)};
    features = ad::concat_cols<T>(parts);
  }
  const Var<T> cs = directional_forward(params, net, DirectionalInputVars<T>{features, ndotv, m.bottleneck});

  const typename Tensor<T>::Shape hw{in.rows, in.cols};
  out.cref = ad::reshape(reflection_intensity(m.cd, cs), hw);
  const PropertyGridVars<T> grid{ad::reshape(m.alpha, hw), ad::reshape(m.beta, hw), ad::reshape(m.rho, hw),
                                 ad::reshape(m.phi, hw)};
  out.terms = render_bmode(grid, settings);
  out.image = compose_final(out.terms.image, out.cref);
  return out;
}

}  // namespace

template <typename T>
FramePrediction<T> predict_frame(const BoundParams<T>& params, const NetworkConfig& net, const RigidPose& pose,
                                 const ScanGeometry& geom, const Bounds& bounds, const RenderSettings& settings) {
  return predict(params, net, frame_inputs<T>(net, pose, geom, bounds), settings);
}

template <typename T>
Var<T> image_loss(const Var<T>& pred, const Var<T>& target, double lambda_ssim) {
  if (pred.shape() != target.shape())
    throw std::invalid_argument("loss shape mismatch: " + shape_string(pred.shape()) + " vs " +
                                shape_string(target.shape()));
  const Var<T> diff = pred - target;
  Var<T> loss = ad::mean(diff * diff);
  if (lambda_ssim > 0) loss = loss + ad::scale(T(1) - ssim(pred, target), static_cast<T>(lambda_ssim));
  return loss;
}

// ---------------------------------------------------------------------------
// Adam

template <typename T>
void adam_step(std::vector<Tensor<T>>& params, const std::vector<Tensor<T>>& grads, AdamState<T>& state,
               const AdamHyper& h) {
  if (grads.size() != params.size()) throw std::invalid_argument("adam_step: gradient count mismatch");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.shape());
      state.v.emplace_back(p.shape());
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const T c1 = static_cast<T>(1.0 - std::pow(h.beta1, t));
  const T c2 = static_cast<T>(1.0 - std::pow(h.beta2, t));
  const T b1 = static_cast<T>(h.beta1), b2 = static_cast<T>(h.beta2);
  const T lr = static_cast<T>(h.lr), eps = static_cast<T>(h.epsilon);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    const auto& g = grads[k];
    if (!g.same_shape(p)) throw std::invalid_argument("adam_step: gradient shape mismatch");
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      const T mhat = m[i] / c1;
      const T vhat = v[i] / c2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Training

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads)
                                    : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

namespace {

template <typename T>
ParamSet<double> widen(const ParamSet<T>& ps) {
  ParamSet<double> out;
  for (const auto& p : ps) out.push_back({p.name, p.value.template cast<double>()});
  return out;
}

template <typename T>
std::vector<Tensor<T>> narrow(const ParamSet<double>& ps) {
  std::vector<Tensor<T>> out;
  for (const auto& p : ps) out.push_back(p.value.template cast<T>());
  return out;
}

std::string rng_text(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

std::mt19937_64 rng_from(const std::string& text) {
  std::mt19937_64 rng;
  std::istringstream is(text);
  is >> rng;
  if (!is) throw FormatError("checkpoint RNG state is unreadable");
  return rng;
}

std::mt19937_64 seeded_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x554c5245u};
  return std::mt19937_64(seq);
}

// First `count` entries of a seeded Fisher-Yates shuffle of [0, n).
std::vector<std::size_t> draw_batch(std::mt19937_64& rng, std::size_t n, std::size_t count) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  idx.resize(std::min(count, n));
  return idx;
}

template <typename T>
ParamSet<T> initial_params(const TrainConfig& cfg) {
  return init_network<T>(cfg.network, cfg.seed);
}

struct FrameResult {
  double loss = 0, mse = 0, ssim = 0;
};

template <typename T>
Checkpoint train_impl(const Dataset& ds, const TrainConfig& cfg, Checkpoint ck,
                      const std::function<void(const LossRecord&)>& on_record) {
  const NetworkConfig& net = cfg.network;
  const RenderSettings settings = render_settings(cfg, ds.geom);

  std::vector<FrameInputs<T>> inputs;
  std::vector<Tensor<T>> targets;
  for (std::size_t f = 0; f < ds.frames.size(); ++f) {
    inputs.push_back(frame_inputs<T>(net, ds.poses[f], ds.geom, ck.bounds));
    targets.push_back(ds.frames[f].cast<T>());
  }

  std::vector<std::string> names;
  for (const auto& p : ck.params) names.push_back(p.name);
  std::vector<Tensor<T>> params = narrow<T>(ck.params);
  AdamState<T> adam;
  if (!ck.adam_m.empty()) {
    adam.m = narrow<T>(ck.adam_m);
    adam.v = narrow<T>(ck.adam_v);
  }
  adam.step = ck.iteration;
  std::mt19937_64 rng = ck.rng_state.empty() ? seeded_rng(cfg.seed) : rng_from(ck.rng_state);
  const AdamHyper hyper{cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon};
  const bool with_ssim = ds.geom.height() >= static_cast<std::size_t>(kSsimWindow) &&
                         ds.geom.width() >= static_cast<std::size_t>(kSsimWindow);
  if (cfg.lambda_ssim > 0 && !with_ssim) throw std::invalid_argument("lambda_ssim > 0 needs frames of at least 11x11");

  double last_finite = std::numeric_limits<double>::quiet_NaN();
  for (std::uint64_t it = ck.iteration; it < static_cast<std::uint64_t>(cfg.iterations); ++it) {
    const auto batch = draw_batch(rng, ds.frames.size(), static_cast<std::size_t>(cfg.batch_frames));
    std::vector<FrameResult> results(batch.size());
    std::vector<std::vector<Tensor<T>>> grads(batch.size());
    parallel_for(batch.size(), cfg.threads, [&](std::size_t b) {
      const std::size_t f = batch[b];
      Tape<T> tape;
      BoundParams<T> bound;
      for (std::size_t k = 0; k < params.size(); ++k) {
        bound.names.push_back(names[k]);
        bound.vars.push_back(tape.parameter(params[k]));
      }
      const auto pred = predict(bound, net, inputs[f], settings);
      const Var<T> target = tape.constant(targets[f]);
      const Var<T> loss = image_loss(pred.image, target, cfg.lambda_ssim);
      results[b].loss = static_cast<double>(loss.value().item());
      const Image pred_img = pred.image.value().template cast<double>();
      results[b].mse = mse(pred_img, ds.frames[f]);
      results[b].ssim = with_ssim ? ssim(pred_img, ds.frames[f]) : std::numeric_limits<double>::quiet_NaN();
      grads[b] = tape.grad(loss, bound.vars);
    });

    // Reduce in batch order so the sum does not depend on scheduling.
    LossRecord rec{it, 0, 0, 0};
    std::vector<Tensor<T>> total = std::move(grads[0]);
    for (std::size_t b = 1; b < batch.size(); ++b)
      for (std::size_t k = 0; k < total.size(); ++k)
        for (std::size_t i = 0; i < total[k].size(); ++i) total[k][i] += grads[b][k][i];
    const T inv = T(1) / static_cast<T>(batch.size());
    if (batch.size() > 1)
      for (auto& g : total)
        for (auto& x : g.storage()) x *= inv;
    for (const auto& r : results) {
      rec.loss += r.loss;
      rec.mse += r.mse;
      rec.ssim += r.ssim;
    }
    const double n = static_cast<double>(batch.size());
    rec.loss /= n;
    rec.mse /= n;
    rec.ssim /= n;

    bool grads_finite = true;
    for (const auto& g : total) grads_finite = grads_finite && g.all_finite();
    if (!std::isfinite(rec.loss) || !grads_finite) {
      std::ostringstream msg;
      msg << "iteration " << it << ": " << (std::isfinite(rec.loss) ? "non-finite gradient" : "non-finite loss")
          << "; last finite loss ";
      if (std::isnan(last_finite))
        msg << "none";
      else
        msg << std::setprecision(17) << last_finite;
      throw TrainingError(msg.str());
    }
    last_finite = rec.loss;
    if (on_record) on_record(rec);

    adam_step(params, total, adam, hyper);
    for (const auto& p : params)
      if (!p.all_finite())
        throw TrainingError("iteration " + std::to_string(it) + ": update produced non-finite parameters");
    ck.iteration = it + 1;
  }

  for (std::size_t k = 0; k < params.size(); ++k) ck.params[k].value = params[k].template cast<double>();
  if (!adam.m.empty()) {
    ck.adam_m.clear();
    ck.adam_v.clear();
    for (std::size_t k = 0; k < params.size(); ++k) {
      ck.adam_m.push_back({names[k], adam.m[k].template cast<double>()});
      ck.adam_v.push_back({names[k], adam.v[k].template cast<double>()});
    }
  }
  ck.rng_state = rng_text(rng);
  return ck;
}

}  // namespace

Checkpoint initial_checkpoint(const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  Checkpoint ck;
  ck.config = cfg;
  if (!ck.config.noise_seed) ck.config.noise_seed = ds.scene.noise_seed.value_or(0);
  ck.geom = ds.geom;
  ck.bounds = scene_bounds(ds);
  ck.params = cfg.precision == Precision::F32 ? widen(initial_params<float>(cfg)) : widen(initial_params<double>(cfg));
  ck.iteration = 0;
  ck.rng_state = rng_text(seeded_rng(cfg.seed));
  return ck;
}

Checkpoint train(const Dataset& ds, const TrainConfig& requested, const std::optional<Checkpoint>& resume,
                 const std::function<void(const LossRecord&)>& on_record) {
  TrainConfig cfg = requested;
  if (!cfg.noise_seed) cfg.noise_seed = ds.scene.noise_seed.value_or(0);
  cfg.validate();
  ds.validate();
  if (ds.frames.empty()) throw std::invalid_argument("dataset has no frames");
  Checkpoint ck = resume ? *resume : initial_checkpoint(ds, cfg);
  if (resume) {
    if (ck.config.serialize() != cfg.serialize()) {
      // Only the iteration budget and worker count may change on resume.
      TrainConfig a = ck.config, b = cfg;
      a.iterations = b.iterations = 0;
      a.threads = b.threads = 0;
      if (a.serialize() != b.serialize()) throw std::invalid_argument("resume config differs from checkpoint config");
    }
    ck.config = cfg;
  }
  return cfg.precision == Precision::F32 ? train_impl<float>(ds, cfg, std::move(ck), on_record)
                                         : train_impl<double>(ds, cfg, std::move(ck), on_record);
}

void write_loss_header(std::ostream& os) { os << "iteration,loss,mse,ssim\n"; }

void write_loss_record(std::ostream& os, const LossRecord& r) {
  os << r.iteration << ',' << std::setprecision(17) << r.loss << ',' << r.mse << ',';
  if (std::isnan(r.ssim))
    os << "nan";
  else
    os << r.ssim;
  os << '\n';
}

Image render_checkpoint(const Checkpoint& ck, const RigidPose& pose) {
  Tape<double> tape;
  const auto bound = bind_params(tape, ck.params, false);
  const auto pred = predict_frame(bound, ck.config.network, pose, ck.geom, ck.bounds, render_settings(ck.config, ck.geom));
  return pred.image.value();
}

std::vector<MetricReport> evaluate_checkpoint(const Checkpoint& ck, const Dataset& ds) {
  ds.validate();
  if (ds.geom.width() != ck.geom.width() || ds.geom.height() != ck.geom.height())
    throw std::invalid_argument("dataset geometry does not match the checkpoint");
  std::vector<MetricReport> rows(ds.frames.size());
  parallel_for(ds.frames.size(), ck.config.threads, [&](std::size_t f) {
    Checkpoint view = ck;
    view.geom = ds.geom;
    rows[f] = evaluate(render_checkpoint(view, ds.poses[f]), ds.frames[f]);
  });
  return rows;
}

// ---------------------------------------------------------------------------
// Gradient audit

GradientAudit gradient_audit(int size, int frames, std::uint64_t seed, double step) {
  if (size < 2 || frames < 1) throw std::invalid_argument("gradient audit needs size >= 2 and frames >= 1");
  ScanGeometry geom;
  geom.n_scanlines = geom.n_samples = size;
  geom.lateral_spacing = geom.axial_spacing = 0.5;

  NetworkConfig net;
  net.spatial_depth = 3;
  net.spatial_width = 12;
  net.directional_depth = 2;
  net.directional_width = 12;
  net.bottleneck = 4;
  net.rhe_degree = 2;
  net.position_encoding = {2, true};
  net.direction_encoding = {2, true};

  Dataset ds;
  ds.geom = geom;
  std::mt19937_64 rng = seeded_rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int f = 0; f < frames; ++f) {
    const double s = frames > 1 ? static_cast<double>(f) / (frames - 1) - 0.5 : 0.0;
    ds.poses.push_back(RigidPose::from_axis_angle(Vec3::UnitX(), 0.2 * s, Vec3(0.0, s, 0.5)));
    Image target = Image::matrix(geom.height(), geom.width());
    for (auto& v : target.storage()) v = 0.05 + 0.2 * unit(rng);
    ds.frames.push_back(target);
  }
  const Bounds bounds = scene_bounds(ds);
  PsfConfig psf;
  psf.frequency = geom.frequency;
  const RenderSettings settings = RenderSettings::from_geometry(geom, psf, seed, 4.0);

  GradientAudit audit;
  {
    const ParamSet<double> init = init_network<double>(net, seed);
    std::vector<std::string> names;
    std::vector<Tensor<double>> values;
    for (const auto& p : init) {
      names.push_back(p.name);
      values.push_back(p.value);
    }
    std::vector<FrameInputs<double>> inputs;
    for (const auto& pose : ds.poses) inputs.push_back(frame_inputs<double>(net, pose, geom, bounds));
    ad::LossBuilder<double> f = [&](Tape<double>& tape, std::span<const Var<double>> vars) {
      BoundParams<double> bound{names, std::vector<Var<double>>(vars.begin(), vars.end())};
      Var<double> total = tape.constant(Tensor<double>::scalar(0.0));
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        const auto pred = predict(bound, net, inputs[k], settings);
        total = total + image_loss(pred.image, tape.constant(ds.frames[k]), 0.0);
      }
      return total;
    };
    audit.network = ad::check_gradient<double>(f, values, step);
  }
  {
    std::vector<Tensor<double>> fields;
    for (int k = 0; k < frames; ++k) {
      for (double lo : {0.2, 0.05, 0.1, 0.1}) {
        Tensor<double> t = Tensor<double>::matrix(geom.height(), geom.width());
        for (auto& v : t.storage()) v = lo + 0.3 * unit(rng);
        fields.push_back(t);
      }
    }
    ad::LossBuilder<double> f = [&](Tape<double>& tape, std::span<const Var<double>> vars) {
      Var<double> total = tape.constant(Tensor<double>::scalar(0.0));
      for (int k = 0; k < frames; ++k) {
        const std::size_t o = static_cast<std::size_t>(4 * k);
        const PropertyGridVars<double> grid{vars[o], vars[o + 1], vars[o + 2], vars[o + 3]};
        const auto terms = render_bmode(grid, settings);
        const auto zero = tape.constant(Tensor<double>(terms.image.shape(), 0.0));
        const auto image = compose_final(terms.image, zero);
        total = total + image_loss(image, tape.constant(ds.frames[static_cast<std::size_t>(k)]), 0.0);
      }
      return total;
    };
    audit.grid = ad::check_gradient<double>(f, fields, step);
  }
  return audit;
}

#define ULRE_INSTANTIATE_TRAIN(T)                                                                              \
  template FramePrediction<T> predict_frame<T>(const BoundParams<T>&, const NetworkConfig&, const RigidPose&, \
                                               const ScanGeometry&, const Bounds&, const RenderSettings&);   \
  template Var<T> image_loss<T>(const Var<T>&, const Var<T>&, double);                                        \
  template void adam_step<T>(std::vector<Tensor<T>>&, const std::vector<Tensor<T>>&, AdamState<T>&,           \
                             const AdamHyper&);

ULRE_INSTANTIATE_TRAIN(float)
ULRE_INSTANTIATE_TRAIN(double)

}  // namespace ulre
