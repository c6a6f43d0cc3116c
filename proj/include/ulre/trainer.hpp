#pragma once

// Optimization of the network against a dataset of B-mode frames, and the
// binary checkpoint format:
//
//   "ULRE" | u32 version | u32 tensor count
//   per tensor: u16 name length | name | u8 dtype (0 f32, 1 f64) | u8 rank |
//               u64 dims... | row-major little-endian payload
//   u32 length | config and scene text (key=value lines)
//   u64 iteration | u32 length | RNG state text
//
// Adam moments travel as tensors named "adam.m.<param>" and "adam.v.<param>".

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ulre/gradcheck.hpp"
#include "ulre/metrics.hpp"
#include "ulre/network.hpp"
#include "ulre/phantom.hpp"
#include "ulre/renderer.hpp"

namespace ulre {

enum class Precision { F32, F64 };
const char* to_string(Precision p);
Precision parse_precision(const std::string& s);

struct TrainConfig {
  int iterations = 2000;
  int batch_frames = 1;
  double learning_rate = 1e-4;  // 5e-4 diverges around iteration 1300 with w0 = 30
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double lambda_ssim = 0.0;
  std::uint64_t seed = 0;
  /// Seed of the frozen scatter noise. Unset means the dataset's recorded
  /// seed (or 0); train() resolves it before the first iteration.
  std::optional<std::uint64_t> noise_seed;
  Precision precision = Precision::F32;
  NetworkConfig network;
  PsfConfig psf;
  double nu = 4.0;
  int threads = 0;  // 0: hardware parallelism

  void validate() const;
  /// Applies one key=value setting; throws std::invalid_argument for unknown
  /// keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  /// key=value lines readable by parse_train_config.
  std::string serialize() const;
};

/// Reads key=value lines ('#' starts a comment) over the defaults.
TrainConfig parse_train_config(std::istream& is, const std::string& source = "config");
TrainConfig load_train_config(const std::filesystem::path& path);

/// Maps world positions into [-1, 1]^3 for the positional encoding.
Bounds scene_bounds(const Dataset& ds);

template <typename T>
struct FramePrediction {
  MediumVars<T> medium;
  ad::Var<T> cref;    // HxW
  RenderTerms<T> terms;
  ad::Var<T> image;   // HxW, in [0, 1]
};

/// Full forward pipeline for one probe pose.
template <typename T>
FramePrediction<T> predict_frame(const BoundParams<T>& params, const NetworkConfig& net, const RigidPose& pose,
                                 const ScanGeometry& geom, const Bounds& bounds, const RenderSettings& settings);

RenderSettings render_settings(const TrainConfig& cfg, const ScanGeometry& geom);

/// mse + λ (1 - ssim). Throws std::invalid_argument on a shape mismatch.
template <typename T>
ad::Var<T> image_loss(const ad::Var<T>& pred, const ad::Var<T>& target, double lambda_ssim);

template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::uint64_t step = 0;
};

struct AdamHyper {
  double lr = 1e-4, beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
};

/// One bias-corrected Adam update in place. Empty moments are zero-filled.
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, const std::vector<Tensor<T>>& grads, AdamState<T>& state,
               const AdamHyper& hyper);

struct Checkpoint {
  TrainConfig config;
  ScanGeometry geom;
  Bounds bounds;
  ParamSet<double> params;  // values exactly representable at config.precision
  ParamSet<double> adam_m;
  ParamSet<double> adam_v;
  std::uint64_t iteration = 0;
  std::string rng_state;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
void write_checkpoint(std::ostream& os, const Checkpoint& ck);
/// Throws FormatError naming the bad field (magic, version, tensor, ...).
Checkpoint load_checkpoint(const std::filesystem::path& path);
Checkpoint read_checkpoint(std::istream& is, const std::string& source = "checkpoint");

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LossRecord {
  std::uint64_t iteration;
  double loss, mse, ssim;  // ssim is NaN for frames under 11x11
};

/// Fresh checkpoint at iteration 0.
Checkpoint initial_checkpoint(const Dataset& ds, const TrainConfig& cfg);

/// Runs until cfg.iterations total. Starts from `resume` when given (its
/// parameters, moments, iteration and RNG state), else from initialization.
/// Calls `on_record` after every iteration with the loss before the update.
/// Throws TrainingError on a non-finite loss.
Checkpoint train(const Dataset& ds, const TrainConfig& cfg, const std::optional<Checkpoint>& resume = std::nullopt,
                 const std::function<void(const LossRecord&)>& on_record = {});

void write_loss_header(std::ostream& os);
void write_loss_record(std::ostream& os, const LossRecord& r);

/// Renders the trained model at a pose, in double precision.
Image render_checkpoint(const Checkpoint& ck, const RigidPose& pose);
std::vector<MetricReport> evaluate_checkpoint(const Checkpoint& ck, const Dataset& ds);

struct GradientAudit {
  ad::GradCheckReport network;  // all MLP parameters through the full pipeline
  ad::GradCheckReport grid;     // all property-grid fields through render and loss
  double max_rel_error() const { return std::max(network.max_rel_error, grid.max_rel_error); }
};

/// Finite-difference check of the training loss on a size x size scene with
/// `frames` poses, at double precision.
GradientAudit gradient_audit(int size, int frames, std::uint64_t seed, double step = 1e-6);

/// Calls fn(i) for i in [0, n) on up to `threads` workers (0: hardware).
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace ulre
