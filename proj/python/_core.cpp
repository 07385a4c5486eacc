// Python bindings: metrics, fusion, inference, synthetic data, training and
// the gradient check. Maps cross the boundary as float64 numpy arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "recattn/config.hpp"
#include "recattn/dataset.hpp"
#include "recattn/fusion.hpp"
#include "recattn/gradcheck.hpp"
#include "recattn/metrics.hpp"
#include "recattn/params.hpp"
#include "recattn/train.hpp"

namespace py = pybind11;
using namespace recattn;
namespace fs = std::filesystem;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// (H, W) -> 1 x H x W; (H, W, 3) -> 3 x H x W.
Image to_image(const Array& a) {
  const auto buf = a.request();
  if (buf.ndim == 2) {
    Image img(1, buf.shape[0], buf.shape[1]);
    std::copy_n(static_cast<const double*>(buf.ptr), img.values.size(), img.values.begin());
    return img;
  }
  if (buf.ndim == 3 && buf.shape[2] == 3) {
    const std::size_t h = buf.shape[0], w = buf.shape[1];
    Image img(3, h, w);
    const auto* p = static_cast<const double*>(buf.ptr);
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c)
        for (std::size_t ch = 0; ch < 3; ++ch) img.at(ch, r, c) = p[(r * w + c) * 3 + ch];
    return img;
  }
  throw std::invalid_argument("expected an (H, W) map or an (H, W, 3) image");
}

Array to_array(const Image& img) {
  if (img.channels == 1) {
    Array out({img.height, img.width});
    std::copy(img.values.begin(), img.values.end(), out.mutable_data());
    return out;
  }
  Array out({img.height, img.width, img.channels});
  auto* p = out.mutable_data();
  for (std::size_t r = 0; r < img.height; ++r)
    for (std::size_t c = 0; c < img.width; ++c)
      for (std::size_t ch = 0; ch < img.channels; ++ch) p[(r * img.width + c) * img.channels + ch] = img.at(ch, r, c);
  return out;
}

py::dict report_dict(const metrics::MetricsReport& r) {
  py::dict d;
  d["mae"] = r.mae;
  d["f_adaptive"] = r.f_adaptive;
  d["f_weighted"] = r.f_weighted;
  d["f_curve"] = std::vector<double>(r.f_curve.begin(), r.f_curve.end());
  d["degenerate"] = r.degenerate;
  return d;
}

RunConfig config_from(const std::string& text, const std::map<std::string, std::string>& overrides) {
  RunConfig c = parse_config(text);
  for (const auto& [k, v] : overrides) set_config_value(c, k, v);
  c.validate();
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Reciprocal-attention saliency: native core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<train::NonFiniteLoss>(m, "NonFiniteLoss", PyExc_RuntimeError);

  m.def("mae", [](const Array& s, const Array& g) { return metrics::mae(to_image(s), to_image(g)); },
        py::arg("sal"), py::arg("gt"));
  m.def("f_measure_at",
        [](const Array& s, const Array& g, int t) { return metrics::f_measure_at(to_image(s), to_image(g), t).f; },
        py::arg("sal"), py::arg("gt"), py::arg("threshold"));
  m.def("f_adaptive", [](const Array& s, const Array& g) { return metrics::f_adaptive(to_image(s), to_image(g)).f; },
        py::arg("sal"), py::arg("gt"));
  m.def("f_weighted", [](const Array& s, const Array& g) { return metrics::f_weighted(to_image(s), to_image(g)).f; },
        py::arg("sal"), py::arg("gt"));
  m.def("evaluate", [](const Array& s, const Array& g) { return report_dict(metrics::evaluate(to_image(s), to_image(g))); },
        py::arg("sal"), py::arg("gt"), "All metrics of one map as a dict.");

  m.def("fuse",
        [](const Array& fg, const Array& bg, const std::string& kind) {
          return to_array(fuse(to_image(fg), to_image(bg), parse_fusion_kind(kind)));
        },
        py::arg("fg"), py::arg("bg"), py::arg("kind") = "subtract");

  m.def("default_config", [] { return dump_config(RunConfig{}); }, "Default run config as key = value text.");
  m.def("config_keys", &config_keys);

  m.def("generate",
        [](const fs::path& root, std::size_t count, std::uint64_t seed, const std::string& stream) {
          RunConfig c;
          c.seed = seed;
          data::generate_synthetic(c.synthesis(), count, root, stream);
        },
        py::arg("root"), py::arg("count") = 20, py::arg("seed") = 1, py::arg("stream") = "synth");

  m.def("read_image", [](const fs::path& p) { return to_array(read_image(p)); }, py::arg("path"));

  m.def("train",
        [](const fs::path& data_dir, const fs::path& out_dir, const std::string& config_text,
           const std::map<std::string, std::string>& overrides) {
          const RunConfig c = config_from(config_text, overrides);
          const auto samples = data::Dataset(data_dir).load_all();
          train::TrainResult result;
          {
            py::gil_scoped_release release;
            result = train::train(samples, c.backbone, c.variant, c.training(), out_dir);
          }
          py::list rows;
          for (const auto& r : result.log) {
            py::dict d;
            d["iter"] = r.iter;
            d["l_ce_f"] = r.loss.ce_fg;
            d["l_ce_b"] = r.loss.ce_bg;
            d["l_kl_compl"] = r.loss.kl_complement;
            d["l_kl_overlap"] = r.loss.kl_overlap;
            d["total"] = r.loss.total;
            d["lr"] = r.lr;
            rows.append(d);
          }
          return rows;
        },
        py::arg("data_dir"), py::arg("out_dir"), py::arg("config") = "",
        py::arg("overrides") = std::map<std::string, std::string>{},
        "Trains and writes loss.csv and checkpoints to out_dir; returns the logged rows.");

  m.def("infer",
        [](const Array& image, const fs::path& checkpoint, const std::string& config_text,
           const std::map<std::string, std::string>& overrides) {
          const RunConfig c = config_from(config_text, overrides);
          const auto params = load_checkpoint(checkpoint);
          Tensor attention;
          const auto pair = infer_image(to_image(image), params, c.inference(), &attention);
          py::dict d;
          d["fg"] = to_array(pair.fg);
          d["bg"] = to_array(pair.bg);
          d["fused"] = to_array(pair.fused);
          if (attention.defined()) {
            Array x({attention.dim(0), attention.dim(1)});
            std::copy(attention.data().begin(), attention.data().end(), x.mutable_data());
            d["attention"] = x;
          }
          return d;
        },
        py::arg("image"), py::arg("checkpoint"), py::arg("config") = "",
        py::arg("overrides") = std::map<std::string, std::string>{},
        "Runs one (H, W, 3) image; returns fg, bg, fused maps and the attention weights.");

  m.def("gradcheck",
        [](std::uint64_t seed, bool include_network, std::optional<std::string> fault_op) {
          gradcheck::Options o;
          o.seed = seed;
          o.include_network = include_network;
          o.fault_op = fault_op;
          gradcheck::Report report;
          {
            py::gil_scoped_release release;
            report = gradcheck::run(o);
          }
          py::list entries;
          for (const auto& e : report.entries) {
            py::dict d;
            d["component"] = e.component;
            d["name"] = e.name;
            d["max_rel_error"] = e.max_rel_error;
            d["tolerance"] = e.tolerance;
            d["passed"] = e.passed();
            entries.append(d);
          }
          py::dict out;
          out["passed"] = report.passed();
          out["seconds"] = report.seconds;
          out["entries"] = entries;
          return out;
        },
        py::arg("seed") = 1, py::arg("include_network") = true, py::arg("fault_op") = py::none());
}
