// Python bindings. Images cross the boundary as 2-D float64 numpy arrays
// (rows = depth samples, columns = scanlines); vectors as 3-element arrays.

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "ulre/encodings.hpp"
#include "ulre/phantom.hpp"
#include "ulre/trainer.hpp"

namespace py = pybind11;
using namespace ulre;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_numpy(const Image& img) {
  Array out({img.rows(), img.cols()});
  std::copy(img.data(), img.data() + img.size(), out.mutable_data());
  return out;
}

Image from_numpy(const Array& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D array");
  const auto r = static_cast<std::size_t>(a.shape(0));
  const auto c = static_cast<std::size_t>(a.shape(1));
  return Image({r, c}, std::vector<double>(a.data(), a.data() + r * c));
}

PropertyGrid make_grid(const Array& alpha, const Array& beta, const Array& rho, const Array& phi) {
  PropertyGrid g{from_numpy(alpha), from_numpy(beta), from_numpy(rho), from_numpy(phi)};
  g.validate();
  return g;
}

TrainConfig config_from(const py::dict& overrides) {
  TrainConfig cfg;
  for (const auto& [k, v] : overrides) cfg.set(py::str(k), py::str(v));
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_ulre, m) {
  m.doc() = "Differentiable ultrasound neural rendering";

  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);

  // geometry
  py::class_<RigidPose>(m, "RigidPose")
      .def(py::init<>())
      .def(py::init([](const Mat3& r, const Vec3& t) {
             RigidPose p{r, t};
             p.validate();
             return p;
           }),
           py::arg("rotation"), py::arg("translation"))
      .def_static("from_axis_angle", &RigidPose::from_axis_angle, py::arg("axis"), py::arg("angle"),
                  py::arg("translation") = Vec3::Zero())
      .def_readwrite("rotation", &RigidPose::rotation)
      .def_readwrite("translation", &RigidPose::translation)
      .def("apply", &RigidPose::apply)
      .def("compose", &RigidPose::compose)
      .def("valid", &RigidPose::valid, py::arg("tol") = 1e-9);

  py::class_<ScanGeometry>(m, "ScanGeometry")
      .def(py::init<>())
      .def_readwrite("n_scanlines", &ScanGeometry::n_scanlines)
      .def_readwrite("n_samples", &ScanGeometry::n_samples)
      .def_readwrite("lateral_spacing", &ScanGeometry::lateral_spacing)
      .def_readwrite("axial_spacing", &ScanGeometry::axial_spacing)
      .def_readwrite("frequency", &ScanGeometry::frequency)
      .def("validate", &ScanGeometry::validate);

  m.def("scanline_points", [](const RigidPose& pose, const ScanGeometry& geom) {
    const SampleGrid g = scanline_grid(pose, geom);
    py::array_t<double> out({g.rows, g.cols, std::size_t{3}});
    double* d = out.mutable_data();
    for (const Vec3& p : g.points) d = std::copy(p.data(), p.data() + 3, d);
    return out;
  });

  // encodings
  m.def("fourier_encode", [](const Vec3& x, int n_freq, bool include_identity) {
    FourierConfig cfg{n_freq, include_identity};
    cfg.validate();
    return fourier_encode(x, cfg);
  }, py::arg("x"), py::arg("n_freq") = 6, py::arg("include_identity") = true);
  m.def("reflect", &reflect, py::arg("v"), py::arg("n"));
  m.def("perturb_normal", &perturb_normal, py::arg("n"), py::arg("v"), py::arg("roughness"));
  m.def("specular_direction", [](const Vec3& view, const Vec3& normal, double roughness) {
    ReflectionFrame f{view, normal, roughness};
    f.validate();
    return specular_direction(f);
  }, py::arg("view"), py::arg("normal"), py::arg("roughness"));
  m.def("real_sph_harm", &real_sph_harm, py::arg("l"), py::arg("m"), py::arg("dir"));
  m.def("rhe_weights", [](double kappa, int max_degree) { return rhe_weights(kappa, RheConfig::full(max_degree)); },
        py::arg("kappa"), py::arg("max_degree") = 4);
  m.def("rhe_encode", [](const Vec3& r, double kappa, int max_degree) {
    return rhe_encode(r, kappa, RheConfig::full(max_degree));
  }, py::arg("r"), py::arg("kappa"), py::arg("max_degree") = 4);
  m.def("interface_coefficients", [](double z1, double z2) {
    const InterfaceCoefficients c = interface_coefficients(z1, z2);
    return py::make_tuple(c.reflection, c.transmission);
  }, py::arg("z1"), py::arg("z2"), "Intensity (reflection, transmission) at an impedance step.");

  // renderer
  py::class_<PsfConfig>(m, "PsfConfig")
      .def(py::init<>())
      .def_readwrite("sigma_axial", &PsfConfig::sigma_axial)
      .def_readwrite("sigma_lateral", &PsfConfig::sigma_lateral)
      .def_readwrite("frequency", &PsfConfig::frequency)
      .def_readwrite("truncation", &PsfConfig::truncation);

  m.def("psf_kernel", [](const PsfConfig& cfg) {
    cfg.validate();
    return to_numpy(psf_kernel<double>(cfg));
  }, py::arg("psf") = PsfConfig{});
  m.def("render_image",
        [](const Array& alpha, const Array& beta, const Array& rho, const Array& phi, const PsfConfig& psf,
           double frequency, double axial_spacing, std::uint64_t seed, double nu, double intensity) {
          RenderSettings s{psf, frequency, axial_spacing, seed, nu, intensity};
          return to_numpy(render_image(make_grid(alpha, beta, rho, phi), s));
        },
        py::arg("alpha"), py::arg("beta"), py::arg("rho"), py::arg("phi"), py::arg("psf") = PsfConfig{},
        py::arg("frequency") = 0.15, py::arg("axial_spacing") = 0.5, py::arg("seed") = 0, py::arg("nu") = 4.0,
        py::arg("intensity") = 1.0, "B-mode render of per-pixel medium maps with no reflection term.");

  // metrics
  m.def("mse", [](const Array& a, const Array& b) { return mse(from_numpy(a), from_numpy(b)); });
  m.def("psnr", [](const Array& a, const Array& b) { return psnr(from_numpy(a), from_numpy(b)); });
  m.def("ssim", [](const Array& a, const Array& b) { return ssim(from_numpy(a), from_numpy(b)); });

  // phantom and dataset
  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("frames", [](const Dataset& ds) {
        py::list out;
        for (const auto& f : ds.frames) out.append(to_numpy(f));
        return out;
      })
      .def_readonly("poses", &Dataset::poses)
      .def_readonly("geometry", &Dataset::geom)
      .def_property_readonly("noise_seed", [](const Dataset& ds) { return ds.scene.noise_seed; })
      .def("__len__", [](const Dataset& ds) { return ds.frames.size(); });

  m.def("benchmark_phantom_text", [] { return std::string(kBenchmarkPhantomText); });
  m.def("generate_dataset", [](const std::string& phantom_text, std::uint64_t seed, bool heldout) {
    std::istringstream in(phantom_text.empty() ? std::string(kBenchmarkPhantomText) : phantom_text);
    return generate_dataset(parse_phantom_spec(in), seed, heldout);
  }, py::arg("phantom") = "", py::arg("seed") = 0, py::arg("heldout") = false,
        "Simulate a sweep. An empty description selects the built-in benchmark phantom.");
  m.def("write_dataset", &write_dataset, py::arg("dataset"), py::arg("dir"));
  m.def("read_dataset", &read_dataset, py::arg("dir"));

  // training
  py::class_<MetricReport>(m, "MetricReport")
      .def_readonly("mse", &MetricReport::mse)
      .def_readonly("psnr", &MetricReport::psnr)
      .def_readonly("ssim", &MetricReport::ssim)
      .def("__repr__", [](const MetricReport& r) {
        std::ostringstream os;
        os << "MetricReport(mse=" << r.mse << ", psnr=" << r.psnr << ", ssim=" << r.ssim << ")";
        return os.str();
      });

  py::class_<LossRecord>(m, "LossRecord")
      .def_readonly("iteration", &LossRecord::iteration)
      .def_readonly("loss", &LossRecord::loss)
      .def_readonly("mse", &LossRecord::mse)
      .def_readonly("ssim", &LossRecord::ssim);

  py::class_<Checkpoint>(m, "Checkpoint")
      .def_readonly("iteration", &Checkpoint::iteration)
      .def_property_readonly("config", [](const Checkpoint& ck) { return ck.config.serialize(); })
      .def_property_readonly("parameter_names", [](const Checkpoint& ck) {
        std::vector<std::string> names;
        for (const auto& p : ck.params) names.push_back(p.name);
        return names;
      })
      .def("render", [](const Checkpoint& ck, const RigidPose& pose) { return to_numpy(render_checkpoint(ck, pose)); })
      .def("evaluate", &evaluate_checkpoint, py::arg("dataset"))
      .def("save", [](const Checkpoint& ck, const std::filesystem::path& p) { save_checkpoint(ck, p); });

  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));
  m.def("default_config", [] { return TrainConfig{}.serialize(); });
  m.def("train",
        [](const Dataset& ds, const py::dict& overrides, const std::optional<Checkpoint>& resume,
           const std::function<void(const LossRecord&)>& on_record) {
          const TrainConfig cfg = config_from(overrides);
          py::gil_scoped_release release;
          std::function<void(const LossRecord&)> cb;
          if (on_record)
            cb = [&](const LossRecord& r) {
              py::gil_scoped_acquire acquire;
              on_record(r);
            };
          return train(ds, cfg, resume, cb);
        },
        py::arg("dataset"), py::arg("config") = py::dict(), py::arg("resume") = std::nullopt,
        py::arg("on_record") = nullptr,
        "Fit a model. `config` maps training config keys to values, as in the key=value file.");
  m.def("gradient_audit", [](int size, int frames, std::uint64_t seed, double step) {
    const GradientAudit a = gradient_audit(size, frames, seed, step);
    return py::dict(py::arg("network") = a.network.max_rel_error, py::arg("grid") = a.grid.max_rel_error,
                    py::arg("checked") = a.network.checked + a.grid.checked,
                    py::arg("max_rel_error") = a.max_rel_error());
  }, py::arg("size") = 4, py::arg("frames") = 2, py::arg("seed") = 0, py::arg("step") = 1e-6);
}
