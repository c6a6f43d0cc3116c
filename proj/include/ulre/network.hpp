#pragma once

// Spatial and directional MLPs.
//
// The spatial network maps Fourier-encoded positions to medium properties
// (attenuation, reflectivity, scatterer density and amplitude, diffuse
// intensity, roughness, unit normal, bottleneck features). The directional
// network maps an encoded reflection direction, n'·v and the bottleneck to a
// raw specular intensity c_s. Both use sine activations by default.
//
// Parameters are stored as an ordered list of named tensors. Names follow
// the checkpoint scheme: spatial.layer{i}.weight, spatial.head.alpha.bias,
// directional.head.weight, ...

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ulre/autodiff.hpp"
#include "ulre/encodings.hpp"

namespace ulre {

enum class Activation { Sine, Relu };
/// How the directional network sees direction.
enum class DirectionEncoding { Rhe, Fourier };
/// reflection: reflected direction; viewdir: reflected direction plus the
/// encoded view direction; none: view direction in place of the reflection.
enum class ReflectionMode { Reflection, ViewDir, None };

const char* to_string(Activation a);
const char* to_string(DirectionEncoding e);
const char* to_string(ReflectionMode m);
Activation parse_activation(const std::string& s);
DirectionEncoding parse_encoding(const std::string& s);
ReflectionMode parse_reflection(const std::string& s);

/// Weight is fan_in x fan_out; y = act(x W + b).
template <typename T>
struct LinearParams {
  Tensor<T> weight;
  Tensor<T> bias;
};

struct MlpConfig {
  std::vector<int> widths;  // input width followed by each layer's output width
  std::vector<Activation> activations;  // one per layer; empty means all sine
  double w0 = 30.0;
  std::uint64_t seed = 0;

  void validate() const;
  Activation activation(std::size_t layer) const {
    return activations.empty() ? Activation::Sine : activations[layer];
  }
};

/// Uniform draw strictly inside (-bound, bound).
class UniformSampler {
 public:
  explicit UniformSampler(std::uint64_t seed) : state_(seed) {}
  double operator()(double bound);

 private:
  std::uint64_t state_;
};

/// SIREN initialization: first layer U(-1/fan_in, 1/fan_in), later sine
/// layers U(-sqrt(6/fan_in)/w0, sqrt(6/fan_in)/w0), zero biases. ReLU layers
/// use U(-sqrt(6/fan_in), sqrt(6/fan_in)).
template <typename T>
std::vector<LinearParams<T>> siren_init(const MlpConfig& cfg);

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> value;
};

template <typename T>
using ParamSet = std::vector<NamedTensor<T>>;

struct NetworkConfig {
  int spatial_depth = 8;
  int spatial_width = 128;
  int directional_depth = 4;
  int directional_width = 128;
  int bottleneck = 32;
  double w0 = 30.0;
  Activation activation = Activation::Sine;
  DirectionEncoding encoding = DirectionEncoding::Rhe;
  ReflectionMode reflection = ReflectionMode::Reflection;
  FourierConfig position_encoding{6, true};
  FourierConfig direction_encoding{4, true};  // used by Fourier mode and ViewDir
  int rhe_degree = 4;

  void validate() const;
  std::size_t spatial_input_width() const { return position_encoding.width(); }
  std::size_t direction_feature_width() const;
  std::size_t directional_input_width() const;
  RheConfig rhe() const { return RheConfig::full(rhe_degree); }
};

inline constexpr const char* kSpatialHeads[] = {"alpha", "beta", "rho", "phi", "cd", "delta", "normal",
                                                "bottleneck"};

/// Deterministic parameter initialization for both networks, including head
/// bias priors (see network.cpp).
template <typename T>
ParamSet<T> init_network(const NetworkConfig& cfg, std::uint64_t seed);

/// Same names and shapes as init_network, all zeros.
template <typename T>
ParamSet<T> zero_network(const NetworkConfig& cfg);

template <typename T>
const Tensor<T>* find_param(const ParamSet<T>& ps, const std::string& name);

/// Parameters placed on a tape, addressable by name.
template <typename T>
struct BoundParams {
  std::vector<std::string> names;
  std::vector<ad::Var<T>> vars;
  const ad::Var<T>& operator[](const std::string& name) const;
};

template <typename T>
BoundParams<T> bind_params(ad::Tape<T>& tape, const ParamSet<T>& ps, bool trainable = true);

/// Per-point spatial outputs as tape variables; Nx1 except normal (Nx3) and
/// bottleneck (NxB).
template <typename T>
struct MediumVars {
  ad::Var<T> alpha, beta, rho, phi, cd, delta, normal, bottleneck;
};

/// Plain per-point result of the spatial network.
struct MediumProperties {
  double alpha = 0, beta = 0, rho = 0, phi = 0, cd = 0, delta = 0;
  Vec3 normal = Vec3::UnitZ();
  std::vector<double> bottleneck;
};

template <typename T>
MediumVars<T> spatial_forward(const BoundParams<T>& params, const NetworkConfig& cfg,
                              const ad::Var<T>& encoded_pos);

MediumProperties spatial_forward(const ParamSet<double>& params, const NetworkConfig& cfg,
                                 std::span<const double> encoded_pos);

template <typename T>
struct DirectionalInputVars {
  ad::Var<T> features;   // NxK direction encoding (RHE or Fourier, plus view features)
  ad::Var<T> ndotv;      // Nx1
  ad::Var<T> bottleneck; // NxB
};

/// Raw (unbounded) specular intensity, Nx1.
template <typename T>
ad::Var<T> directional_forward(const BoundParams<T>& params, const NetworkConfig& cfg,
                               const DirectionalInputVars<T>& in);

/// μ(c_d + c_s) with μ the logistic sigmoid.
template <typename T>
ad::Var<T> reflection_intensity(const ad::Var<T>& cd, const ad::Var<T>& cs);
double reflection_intensity(double cd, double cs);

/// One sine (or ReLU) layer: act(w0 (x W + b)).
template <typename T>
ad::Var<T> dense(const ad::Var<T>& x, const ad::Var<T>& w, const ad::Var<T>& b, Activation act, T w0);

}  // namespace ulre
