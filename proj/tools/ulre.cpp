// ulre: phantom generation, training, rendering and evaluation.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "ulre/phantom.hpp"
#include "ulre/trainer.hpp"

namespace fs = std::filesystem;
using namespace ulre;

namespace {

constexpr int kUsage = 2;

void require_file(const fs::path& p) {
  if (!fs::exists(p)) throw std::runtime_error("no such file: " + p.string());
}

void require_dir(const fs::path& p) {
  if (!fs::is_directory(p)) throw std::runtime_error("no such directory: " + p.string());
}

std::string frame_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%04zu.pgm", i);
  return buf;
}

struct PhantomArgs {
  std::string config, out;
  std::uint64_t seed = 0;
  bool heldout = false;
};

int run_phantom(const PhantomArgs& a) {
  PhantomSpec spec;
  if (a.config.empty()) {
    spec = benchmark_phantom_spec();
  } else {
    require_file(a.config);
    std::ifstream in(a.config);
    spec = parse_phantom_spec(in, a.config);
  }
  const Dataset ds = generate_dataset(spec, a.seed, a.heldout);
  write_dataset(ds, a.out);
  std::cout << "wrote " << ds.frames.size() << " frames to " << a.out << '\n';
  return 0;
}

struct TrainArgs {
  std::string dataset, config, out, checkpoint;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads, iterations;
  std::optional<std::string> activation, encoding, reflection, precision;
};

int run_train(const TrainArgs& a) {
  require_dir(a.dataset);
  TrainConfig cfg;
  if (!a.config.empty()) {
    require_file(a.config);
    cfg = load_train_config(a.config);
  }
  if (a.seed) cfg.seed = *a.seed;
  if (a.threads) cfg.threads = *a.threads;
  if (a.iterations) cfg.iterations = *a.iterations;
  if (a.activation) cfg.network.activation = parse_activation(*a.activation);
  if (a.encoding) cfg.network.encoding = parse_encoding(*a.encoding);
  if (a.reflection) cfg.network.reflection = parse_reflection(*a.reflection);
  if (a.precision) cfg.precision = parse_precision(*a.precision);

  const Dataset ds = read_dataset(a.dataset);
  std::optional<Checkpoint> resume;
  if (!a.checkpoint.empty()) {
    require_file(a.checkpoint);
    resume = load_checkpoint(a.checkpoint);
  }

  fs::create_directories(a.out);
  const fs::path log_path = fs::path(a.out) / "loss.csv";
  std::ofstream log(log_path, resume ? std::ios::app : std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write " + log_path.string());
  if (!resume) {
    write_loss_header(log);
    write_loss_header(std::cout);
  }
  const Checkpoint ck = train(ds, cfg, resume, [&](const LossRecord& r) {
    write_loss_record(log, r);
    write_loss_record(std::cout, r);
    log.flush();
    std::cout.flush();
  });
  save_checkpoint(ck, fs::path(a.out) / "checkpoint.bin");
  return 0;
}

struct RenderArgs {
  std::string checkpoint, poses, dataset, out;
  std::optional<std::uint64_t> seed;
};

int run_render(const RenderArgs& a) {
  require_file(a.checkpoint);
  Checkpoint ck = load_checkpoint(a.checkpoint);
  if (a.seed) ck.config.noise_seed = *a.seed;
  std::vector<RigidPose> poses;
  if (!a.poses.empty()) {
    require_file(a.poses);
    std::ifstream in(a.poses);
    poses = read_poses_csv(in, a.poses);
  } else if (!a.dataset.empty()) {
    require_dir(a.dataset);
    poses = read_dataset(a.dataset).poses;
  } else {
    throw CLI::RequiredError("--poses or --dataset");
  }
  fs::create_directories(a.out);
  for (std::size_t i = 0; i < poses.size(); ++i) write_pgm(fs::path(a.out) / frame_name(i), render_checkpoint(ck, poses[i]));
  std::cout << "rendered " << poses.size() << " frames to " << a.out << '\n';
  return 0;
}

struct EvalArgs {
  std::string checkpoint, dataset, frames, out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

int run_eval(const EvalArgs& a) {
  require_dir(a.dataset);
  const Dataset ds = read_dataset(a.dataset);
  std::vector<MetricReport> rows;
  if (!a.frames.empty()) {
    require_dir(a.frames);
    for (std::size_t i = 0; i < ds.frames.size(); ++i) {
      const fs::path p = fs::path(a.frames) / frame_name(i);
      require_file(p);
      rows.push_back(evaluate(read_pgm(p), ds.frames[i]));
    }
  } else if (!a.checkpoint.empty()) {
    require_file(a.checkpoint);
    Checkpoint ck = load_checkpoint(a.checkpoint);
    if (a.seed) ck.config.noise_seed = *a.seed;
    if (a.threads) ck.config.threads = *a.threads;
    rows = evaluate_checkpoint(ck, ds);
  } else {
    throw CLI::RequiredError("--checkpoint or --frames");
  }
  std::ostringstream csv;
  write_metrics_csv(csv, rows);
  std::cout << csv.str();
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    std::ofstream f(fs::path(a.out) / "metrics.csv");
    if (!f) throw std::runtime_error("cannot write " + (fs::path(a.out) / "metrics.csv").string());
    f << csv.str();
  }
  return 0;
}

struct GradArgs {
  int size = 4;
  int frames = 2;
  std::uint64_t seed = 0;
  double tolerance = 1e-4;
};

int run_gradcheck(const GradArgs& a) {
  const GradientAudit audit = gradient_audit(a.size, a.frames, a.seed);
  std::cout << std::setprecision(6) << std::scientific;
  std::cout << "network: max_rel_error=" << audit.network.max_rel_error << " checked=" << audit.network.checked
            << " kinks=" << audit.network.flagged << '\n';
  std::cout << "grid: max_rel_error=" << audit.grid.max_rel_error << " checked=" << audit.grid.checked
            << " kinks=" << audit.grid.flagged << '\n';
  std::cout << "max_rel_error=" << audit.max_rel_error() << '\n';
  return audit.max_rel_error() < a.tolerance ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable ultrasound neural rendering"};
  app.require_subcommand(1);

  PhantomArgs pa;
  auto* phantom = app.add_subcommand("phantom-gen", "Simulate a B-mode sweep over a layered phantom");
  phantom->add_option("--config", pa.config, "Phantom description (default: built-in benchmark phantom)");
  phantom->add_option("--out", pa.out, "Dataset directory")->required();
  phantom->add_option("--seed", pa.seed, "Scatter noise seed");
  phantom->add_flag("--heldout", pa.heldout, "Use the held-out poses between the training poses");

  TrainArgs ta;
  auto* trainer = app.add_subcommand("train", "Fit the network to a dataset");
  trainer->add_option("--dataset", ta.dataset, "Dataset directory")->required();
  trainer->add_option("--config", ta.config, "Training config (key=value)");
  trainer->add_option("--out", ta.out, "Output directory for checkpoint.bin and loss.csv")->required();
  trainer->add_option("--checkpoint", ta.checkpoint, "Resume from this checkpoint");
  trainer->add_option("--seed", ta.seed, "Initialization and batching seed");
  trainer->add_option("--threads", ta.threads, "Worker cap")->check(CLI::NonNegativeNumber);
  trainer->add_option("--iterations", ta.iterations, "Total iterations")->check(CLI::NonNegativeNumber);
  trainer->add_option("--activation", ta.activation)->check(CLI::IsMember({"sine", "relu"}));
  trainer->add_option("--encoding", ta.encoding)->check(CLI::IsMember({"rhe", "pe"}));
  trainer->add_option("--reflection", ta.reflection)
      ->check(CLI::IsMember({"reflection", "viewdir", "none", "no_reflection"}));
  trainer->add_option("--precision", ta.precision)->check(CLI::IsMember({"f32", "f64"}));

  RenderArgs ra;
  auto* render = app.add_subcommand("render", "Render frames from a checkpoint");
  render->add_option("--checkpoint", ra.checkpoint, "Checkpoint file")->required();
  render->add_option("--poses", ra.poses, "Pose CSV");
  render->add_option("--dataset", ra.dataset, "Take poses from this dataset");
  render->add_option("--out", ra.out, "Output directory")->required();
  render->add_option("--seed", ra.seed, "Override the scatter noise seed");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Score renders against a dataset");
  eval->add_option("--checkpoint", ea.checkpoint, "Checkpoint to render from");
  eval->add_option("--frames", ea.frames, "Directory of predicted frame_NNNN.pgm instead of a checkpoint");
  eval->add_option("--dataset", ea.dataset, "Reference dataset")->required();
  eval->add_option("--out", ea.out, "Directory for metrics.csv");
  eval->add_option("--seed", ea.seed, "Override the scatter noise seed");
  eval->add_option("--threads", ea.threads, "Worker cap")->check(CLI::NonNegativeNumber);

  GradArgs ga;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of the training loss");
  grad->add_option("--size", ga.size, "Scan is size x size")->check(CLI::Range(2, 64));
  grad->add_option("--frames", ga.frames, "Number of poses")->check(CLI::Range(1, 16));
  grad->add_option("--seed", ga.seed, "Seed");
  grad->add_option("--tolerance", ga.tolerance, "Pass threshold on the max relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*phantom) return run_phantom(pa);
    if (*trainer) return run_train(ta);
    if (*render) return run_render(ra);
    if (*eval) return run_eval(ea);
    if (*grad) return run_gradcheck(ga);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kUsage;
}
