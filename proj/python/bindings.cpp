#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <string>

#include "apnp/bench.hpp"
#include "apnp/errors.hpp"
#include "apnp/io.hpp"
#include "apnp/metrics.hpp"
#include "apnp/pnp.hpp"
#include "apnp/weights.hpp"

namespace py = pybind11;
using namespace apnp;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Image to_image(const Array& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-D array");
  const auto h = static_cast<int>(a.shape(0));
  const auto w = static_cast<int>(a.shape(1));
  return Image(h, w, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Image& img) {
  Array out({img.height(), img.width()});
  std::copy(img.values().begin(), img.values().end(), out.mutable_data());
  return out;
}

BlurKernel to_kernel(const Array& a) {
  if (a.ndim() != 2 || a.shape(0) != a.shape(1)) throw py::value_error("kernel must be square");
  return BlurKernel(static_cast<int>(a.shape(0)), std::vector<double>(a.data(), a.data() + a.size()));
}

Array kernel_array(const BlurKernel& k) {
  Array out({k.size(), k.size()});
  std::copy(k.taps().begin(), k.taps().end(), out.mutable_data());
  return out;
}

DegradationSpec make_spec(const Array& kernel, int scale, double sigma) {
  DegradationSpec spec{to_kernel(kernel), scale, sigma};
  spec.validate();
  return spec;
}

}  // namespace

PYBIND11_MODULE(_apnp, m) {
  m.doc() = "Plug-and-play image restoration with analysis priors";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<SizeError>(m, "SizeError", error);
  py::register_exception<ParameterError>(m, "ParameterError", error);
  py::register_exception<IllPosedError>(m, "IllPosedError", error);
  py::register_exception<DomainError>(m, "DomainError", error);
  py::register_exception<UnsupportedFormatError>(m, "UnsupportedFormatError", error);
  py::register_exception<IoError>(m, "IoError", error);
  py::register_exception<IterationError>(m, "IterationError", error);
  auto load = py::register_exception<LoadError>(m, "LoadError", error);
  py::register_exception<BadMagicError>(m, "BadMagicError", load);
  py::register_exception<TruncatedArchiveError>(m, "TruncatedArchiveError", load);
  py::register_exception<ShapeMismatchError>(m, "ShapeMismatchError", load);
  py::register_exception<ChecksumError>(m, "ChecksumError", load);
  py::register_exception<UnsupportedArchiveError>(m, "UnsupportedArchiveError", load);

  m.def("grad", [](const Array& x) {
    const GradientField g = grad(to_image(x));
    return py::make_tuple(to_array(g.dh), to_array(g.dv));
  }, py::arg("x"), "Periodic forward differences (dh, dv).");
  m.def("grad_adjoint", [](const Array& dh, const Array& dv) {
    return to_array(grad_adjoint(GradientField(to_image(dh), to_image(dv))));
  }, py::arg("dh"), py::arg("dv"));

  m.def("gaussian_kernel", [](double sx, double sy, double theta, int size) {
    return kernel_array(gaussian_kernel(sx, sy, theta, size));
  }, py::arg("sigma_x"), py::arg("sigma_y"), py::arg("theta") = 0.0, py::arg("size") = 25);
  m.def("default_kernels", [] {
    py::list out;
    for (const KernelParams& p : default_kernel_set()) out.append(kernel_array(p.make()));
    return out;
  });

  m.def("forward_apply", [](const Array& x, const Array& kernel, int scale, double sigma,
                            std::uint64_t seed) {
    return to_array(forward_apply(make_spec(kernel, scale, sigma), to_image(x), seed));
  }, py::arg("x"), py::arg("kernel"), py::arg("scale") = 1, py::arg("sigma") = 0.0,
        py::arg("seed") = 0, "Blur, decimate (index 0 mod scale) and add Gaussian noise.");
  m.def("forward_adjoint", [](const Array& y, const Array& kernel, int scale) {
    return to_array(forward_adjoint(make_spec(kernel, scale, 0.0), to_image(y)));
  }, py::arg("y"), py::arg("kernel"), py::arg("scale") = 1);
  m.def("bicubic_upsample", [](const Array& y, int scale) {
    return to_array(bicubic_upsample(to_image(y), scale));
  }, py::arg("y"), py::arg("scale"));

  m.def("restore", [](const Array& y, const Array& kernel, int scale, double sigma,
                      const std::string& algorithm, const std::string& denoiser,
                      std::optional<double> lambda, int iterations,
                      std::optional<double> schedule_scale, double sigma_floor,
                      std::optional<double> fixed_prior_sigma,
                      std::optional<Array> ground_truth) {
    const Algorithm algo = parse_algorithm(algorithm);
    RunConfig cfg = RunConfig::defaults(algo);
    if (lambda) cfg.lambda = *lambda;
    if (schedule_scale) cfg.schedule_scale = *schedule_scale;
    cfg.iterations = iterations;
    cfg.sigma_floor = sigma_floor;
    cfg.fixed_prior_sigma = fixed_prior_sigma;
    const DegradationSpec spec = make_spec(kernel, scale, sigma);
    const Denoiser d = parse_denoiser(denoiser, denoiser_domain(algo));
    std::optional<Image> gt;
    if (ground_truth) gt = to_image(*ground_truth);
    const Image measured = to_image(y);
    RunResult r;
    {
      py::gil_scoped_release release;
      r = run(cfg, spec, measured, d, gt ? &*gt : nullptr);
    }
    return py::make_tuple(to_array(r.image), r.trace.to_json());
  }, py::arg("y"), py::arg("kernel"), py::arg("scale") = 1, py::arg("sigma") = 0.0,
        py::arg("algorithm") = "apnp-hqs", py::arg("denoiser") = "soft:20",
        py::arg("lam") = py::none(), py::arg("iterations") = 24,
        py::arg("schedule_scale") = py::none(), py::arg("sigma_floor") = kDefaultSigmaFloor,
        py::arg("fixed_prior_sigma") = py::none(), py::arg("ground_truth") = py::none(),
        "Runs one restoration; returns (image, trace JSON).");

  m.def("psnr", [](const Array& a, const Array& b, int crop) {
    return psnr(to_image(a), to_image(b), crop);
  }, py::arg("a"), py::arg("b"), py::arg("crop") = 0);
  m.def("ssim", [](const Array& a, const Array& b) { return ssim(to_image(a), to_image(b)); },
        py::arg("a"), py::arg("b"));

  m.def("read_image", [](const std::filesystem::path& p) { return to_array(read_image(p)); });
  m.def("write_image", [](const std::filesystem::path& p, const Array& a) {
    write_image(p, to_image(a));
  });

  m.def("inspect_weights", [](const std::filesystem::path& p) {
    const WeightArchive a = load_weights(p);
    py::dict d;
    d["domain"] = to_string(a.domain);
    d["in_channels"] = a.in_channels;
    d["out_channels"] = a.out_channels;
    d["prediction"] = to_string(a.prediction);
    d["sigma_range"] = py::make_tuple(a.metadata.sigma_min, a.metadata.sigma_max);
    d["layers"] = a.layers.size();
    return d;
  }, py::arg("path"));
  m.def("crc64", [](const py::bytes& b) {
    const std::string s = b;
    return crc64(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  });
}
