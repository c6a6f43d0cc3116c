#include "ulre/network.hpp"

#include <cmath>
#include <stdexcept>

namespace ulre {

using ad::Tape;
using ad::Var;

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t s = seed ^ (stream * 0xD1B54A32D192ED03ull);
  return splitmix64(s);
}

// Initial head biases. Zero biases would start every sigmoid head at 0.5;
// with β = 0.5 the transmitted energy halves per sample and deep rows get no
// gradient. These priors start the medium nearly transparent and C_ref small.
struct HeadPrior {
  const char* name;
  double bias;
};
constexpr HeadPrior kHeadPriors[] = {{"alpha", -1.0}, {"beta", -5.0}, {"rho", 0.0},  {"phi", -1.5},
                                     {"cd", -3.0},    {"delta", -3.0}, {"normal", 0.0}, {"bottleneck", 0.0}};
constexpr double kDirectionalHeadBias = -5.0;

}  // namespace

const char* to_string(Activation a) { return a == Activation::Sine ? "sine" : "relu"; }
const char* to_string(DirectionEncoding e) { return e == DirectionEncoding::Rhe ? "rhe" : "pe"; }
const char* to_string(ReflectionMode m) {
  switch (m) {
    case ReflectionMode::Reflection: return "reflection";
    case ReflectionMode::ViewDir: return "viewdir";
    case ReflectionMode::None: return "none";
  }
  return "?";
}

Activation parse_activation(const std::string& s) {
  if (s == "sine") return Activation::Sine;
  if (s == "relu") return Activation::Relu;
  throw std::invalid_argument("unknown activation '" + s + "' (expected sine|relu)");
}

DirectionEncoding parse_encoding(const std::string& s) {
  if (s == "rhe") return DirectionEncoding::Rhe;
  if (s == "pe") return DirectionEncoding::Fourier;
  throw std::invalid_argument("unknown encoding '" + s + "' (expected rhe|pe)");
}

ReflectionMode parse_reflection(const std::string& s) {
  if (s == "reflection") return ReflectionMode::Reflection;
  if (s == "viewdir") return ReflectionMode::ViewDir;
  if (s == "none" || s == "no_reflection") return ReflectionMode::None;
  throw std::invalid_argument("unknown reflection mode '" + s + "' (expected reflection|viewdir|none)");
}

double UniformSampler::operator()(double bound) {
  // (k + 0.5) / 2^53 lies strictly inside (0, 1).
  const double u = (static_cast<double>(splitmix64(state_) >> 11) + 0.5) * 0x1.0p-53;
  return bound * (2.0 * u - 1.0);
}

void MlpConfig::validate() const {
  if (widths.size() < 2) throw std::invalid_argument("MLP needs at least an input and one layer width");
  for (int w : widths)
    if (w <= 0) throw std::invalid_argument("MLP widths must be positive");
  if (!activations.empty() && activations.size() != widths.size() - 1)
    throw std::invalid_argument("MLP activation list must have one entry per layer");
  if (!(w0 > 0)) throw std::invalid_argument("MLP w0 must be positive");
}

template <typename T>
std::vector<LinearParams<T>> siren_init(const MlpConfig& cfg) {
  cfg.validate();
  UniformSampler draw(cfg.seed);
  std::vector<LinearParams<T>> layers;
  for (std::size_t i = 0; i + 1 < cfg.widths.size(); ++i) {
    const auto fan_in = static_cast<std::size_t>(cfg.widths[i]);
    const auto fan_out = static_cast<std::size_t>(cfg.widths[i + 1]);
    double bound;
    if (cfg.activation(i) == Activation::Relu)
      bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    else if (i == 0)
      bound = 1.0 / static_cast<double>(fan_in);
    else
      bound = std::sqrt(6.0 / static_cast<double>(fan_in)) / cfg.w0;
    LinearParams<T> p{Tensor<T>::matrix(fan_in, fan_out), Tensor<T>::matrix(1, fan_out)};
    for (auto& w : p.weight.storage()) w = static_cast<T>(draw(bound));
    layers.push_back(std::move(p));
  }
  return layers;
}

void NetworkConfig::validate() const {
  if (spatial_depth < 1 || directional_depth < 1) throw std::invalid_argument("network depth must be >= 1");
  if (spatial_width < 1 || directional_width < 1 || bottleneck < 1)
    throw std::invalid_argument("network widths must be positive");
  if (!(w0 > 0)) throw std::invalid_argument("w0 must be positive");
  if (rhe_degree < 1) throw std::invalid_argument("RHE degree must be positive");
  position_encoding.validate();
  direction_encoding.validate();
}

std::size_t NetworkConfig::direction_feature_width() const {
  std::size_t w = encoding == DirectionEncoding::Rhe
                      ? static_cast<std::size_t>((rhe_degree + 1) * (rhe_degree + 1))
                      : direction_encoding.width();
  if (reflection == ReflectionMode::ViewDir) w += direction_encoding.width();
  return w;
}

std::size_t NetworkConfig::directional_input_width() const {
  return direction_feature_width() + 1 + static_cast<std::size_t>(bottleneck);
}

namespace {

std::size_t head_width(const std::string& head, const NetworkConfig& cfg) {
  if (head == "normal") return 3;
  if (head == "bottleneck") return static_cast<std::size_t>(cfg.bottleneck);
  return 1;
}

template <typename T>
void push_trunk(ParamSet<T>& ps, const std::string& prefix, std::vector<LinearParams<T>> layers) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    ps.push_back({prefix + ".layer" + std::to_string(i) + ".weight", std::move(layers[i].weight)});
    ps.push_back({prefix + ".layer" + std::to_string(i) + ".bias", std::move(layers[i].bias)});
  }
}

template <typename T>
void push_head(ParamSet<T>& ps, const std::string& name, std::size_t fan_in, std::size_t fan_out,
               double bound, double bias, UniformSampler& draw) {
  Tensor<T> w = Tensor<T>::matrix(fan_in, fan_out);
  for (auto& v : w.storage()) v = static_cast<T>(draw(bound));
  ps.push_back({name + ".weight", std::move(w)});
  ps.push_back({name + ".bias", Tensor<T>::matrix(1, fan_out, static_cast<T>(bias))});
}

MlpConfig trunk_config(std::size_t in, int width, int depth, const NetworkConfig& cfg, std::uint64_t seed) {
  MlpConfig m;
  m.widths.push_back(static_cast<int>(in));
  for (int i = 0; i < depth; ++i) m.widths.push_back(width);
  m.activations.assign(static_cast<std::size_t>(depth), cfg.activation);
  m.w0 = cfg.w0;
  m.seed = seed;
  return m;
}

double head_bound(const NetworkConfig& cfg, int fan_in) {
  const double b = std::sqrt(6.0 / fan_in);
  return cfg.activation == Activation::Sine ? b / cfg.w0 : b / std::sqrt(6.0);
}

}  // namespace

template <typename T>
ParamSet<T> init_network(const NetworkConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParamSet<T> ps;
  push_trunk(ps, "spatial",
             siren_init<T>(trunk_config(cfg.spatial_input_width(), cfg.spatial_width, cfg.spatial_depth, cfg,
                                        derive_seed(seed, 1))));
  UniformSampler heads(derive_seed(seed, 2));
  const double sb = head_bound(cfg, cfg.spatial_width);
  for (const auto& prior : kHeadPriors) {
    push_head(ps, std::string("spatial.head.") + prior.name, static_cast<std::size_t>(cfg.spatial_width),
              head_width(prior.name, cfg), sb, prior.bias, heads);
  }
  push_trunk(ps, "directional",
             siren_init<T>(trunk_config(cfg.directional_input_width(), cfg.directional_width,
                                        cfg.directional_depth, cfg, derive_seed(seed, 3))));
  UniformSampler dhead(derive_seed(seed, 4));
  push_head(ps, "directional.head", static_cast<std::size_t>(cfg.directional_width), 1,
            head_bound(cfg, cfg.directional_width), kDirectionalHeadBias, dhead);
  return ps;
}

template <typename T>
ParamSet<T> zero_network(const NetworkConfig& cfg) {
  ParamSet<T> ps = init_network<T>(cfg, 0);
  for (auto& p : ps) std::fill(p.value.storage().begin(), p.value.storage().end(), T(0));
  return ps;
}

template <typename T>
const Tensor<T>* find_param(const ParamSet<T>& ps, const std::string& name) {
  for (const auto& p : ps)
    if (p.name == name) return &p.value;
  return nullptr;
}

template <typename T>
const Var<T>& BoundParams<T>::operator[](const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return vars[i];
  throw std::out_of_range("no parameter named '" + name + "'");
}

template <typename T>
BoundParams<T> bind_params(Tape<T>& tape, const ParamSet<T>& ps, bool trainable) {
  BoundParams<T> out;
  for (const auto& p : ps) {
    out.names.push_back(p.name);
    out.vars.push_back(trainable ? tape.parameter(p.value) : tape.constant(p.value));
  }
  return out;
}

template <typename T>
Var<T> dense(const Var<T>& x, const Var<T>& w, const Var<T>& b, Activation act, T w0) {
  const Var<T> pre = ad::matmul(x, w) + b;
  if (act == Activation::Relu) return ad::relu(pre);
  return ad::sin(ad::scale(pre, w0));
}

namespace {

template <typename T>
Var<T> run_trunk(const BoundParams<T>& params, const std::string& prefix, int depth, const NetworkConfig& cfg,
                 Var<T> h) {
  const T w0 = static_cast<T>(cfg.w0);
  for (int i = 0; i < depth; ++i) {
    const std::string base = prefix + ".layer" + std::to_string(i);
    h = dense(h, params[base + ".weight"], params[base + ".bias"], cfg.activation, w0);
  }
  return h;
}

template <typename T>
Var<T> linear_head(const BoundParams<T>& params, const std::string& name, const Var<T>& h) {
  return ad::matmul(h, params[name + ".weight"]) + params[name + ".bias"];
}

}  // namespace

template <typename T>
MediumVars<T> spatial_forward(const BoundParams<T>& params, const NetworkConfig& cfg, const Var<T>& encoded_pos) {
  if (encoded_pos.value().cols() != cfg.spatial_input_width())
    throw std::invalid_argument("encoded position width " + std::to_string(encoded_pos.value().cols()) +
                                " does not match network input " + std::to_string(cfg.spatial_input_width()));
  const Var<T> h = run_trunk(params, "spatial", cfg.spatial_depth, cfg, encoded_pos);
  MediumVars<T> m;
  m.alpha = ad::softplus(linear_head(params, "spatial.head.alpha", h));
  m.beta = ad::sigmoid(linear_head(params, "spatial.head.beta", h));
  m.rho = ad::sigmoid(linear_head(params, "spatial.head.rho", h));
  m.phi = ad::sigmoid(linear_head(params, "spatial.head.phi", h));
  m.cd = ad::sigmoid(linear_head(params, "spatial.head.cd", h));
  m.delta = ad::softplus(linear_head(params, "spatial.head.delta", h));
  static constexpr T kUp[3] = {T(0), T(0), T(1)};
  m.normal = ad::normalize_rows<T>(linear_head(params, "spatial.head.normal", h), kUp);
  m.bottleneck = linear_head(params, "spatial.head.bottleneck", h);
  return m;
}

MediumProperties spatial_forward(const ParamSet<double>& params, const NetworkConfig& cfg,
                                 std::span<const double> encoded_pos) {
  Tape<double> tape;
  const auto bound = bind_params(tape, params, false);
  const auto x = tape.constant(Tensor<double>({1, encoded_pos.size()},
                                              std::vector<double>(encoded_pos.begin(), encoded_pos.end())));
  const MediumVars<double> m = spatial_forward(bound, cfg, x);
  MediumProperties out;
  out.alpha = m.alpha.value()[0];
  out.beta = m.beta.value()[0];
  out.rho = m.rho.value()[0];
  out.phi = m.phi.value()[0];
  out.cd = m.cd.value()[0];
  out.delta = m.delta.value()[0];
  out.normal = Vec3(m.normal.value()[0], m.normal.value()[1], m.normal.value()[2]);
  out.bottleneck = m.bottleneck.value().storage();
  return out;
}

template <typename T>
Var<T> directional_forward(const BoundParams<T>& params, const NetworkConfig& cfg, const DirectionalInputVars<T>& in) {
  const Var<T> parts[] = {in.features, in.ndotv, in.bottleneck};
  const Var<T> x = ad::concat_cols<T>(parts);
  if (x.value().cols() != cfg.directional_input_width())
    throw std::invalid_argument("directional input width " + std::to_string(x.value().cols()) +
                                " does not match network input " +
                                std::to_string(cfg.directional_input_width()));
  const Var<T> h = run_trunk(params, "directional", cfg.directional_depth, cfg, x);
  return linear_head(params, "directional.head", h);
}

template <typename T>
Var<T> reflection_intensity(const Var<T>& cd, const Var<T>& cs) {
  return ad::sigmoid(cd + cs);
}

double reflection_intensity(double cd, double cs) {
  const double x = cd + cs;
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

#define ULRE_INSTANTIATE_NET(T)                                                                        \
  template std::vector<LinearParams<T>> siren_init<T>(const MlpConfig&);                               \
  template ParamSet<T> init_network<T>(const NetworkConfig&, std::uint64_t);                           \
  template ParamSet<T> zero_network<T>(const NetworkConfig&);                                          \
  template const Tensor<T>* find_param<T>(const ParamSet<T>&, const std::string&);                     \
  template struct BoundParams<T>;                                                                      \
  template BoundParams<T> bind_params<T>(Tape<T>&, const ParamSet<T>&, bool);                          \
  template Var<T> dense<T>(const Var<T>&, const Var<T>&, const Var<T>&, Activation, T);                \
  template MediumVars<T> spatial_forward<T>(const BoundParams<T>&, const NetworkConfig&, const Var<T>&); \
  template Var<T> directional_forward<T>(const BoundParams<T>&, const NetworkConfig&,                  \
                                         const DirectionalInputVars<T>&);                              \
  template Var<T> reflection_intensity<T>(const Var<T>&, const Var<T>&);

ULRE_INSTANTIATE_NET(float)
ULRE_INSTANTIATE_NET(double)

}  // namespace ulre
