#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "vecdraw/error.hpp"
#include "vecdraw/export.hpp"
#include "vecdraw/objective.hpp"
#include "vecdraw/optim.hpp"
#include "vecdraw/protocol.hpp"
#include "vecdraw/raster.hpp"
#include "vecdraw/scene.hpp"

namespace py = pybind11;
using namespace vecdraw;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_numpy(const ImageTensor& img) {
  Array out({img.height(), img.width(), ImageTensor::kChannels});
  std::copy(img.data().begin(), img.data().end(), out.mutable_data());
  return out;
}

ImageTensor from_numpy(const Array& a) {
  if (a.ndim() != 3 || a.shape(2) != ImageTensor::kChannels) {
    throw ContractError("expected an array of shape (H, W, 3)");
  }
  ImageTensor img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), img.data().begin());
  return img;
}

std::vector<ImageTensor> batch_from(const std::vector<Array>& arrays) {
  std::vector<ImageTensor> out;
  out.reserve(arrays.size());
  for (const Array& a : arrays) out.push_back(from_numpy(a));
  return out;
}

Array embeddings_to_numpy(const std::vector<Embedding>& rows) {
  const std::size_t dim = rows.empty() ? 0 : rows.front().size();
  Array out({rows.size(), dim});
  double* dst = out.mutable_data();
  for (const Embedding& r : rows) dst = std::copy(r.begin(), r.end(), dst);
  return out;
}

Array vector_to_numpy(const std::vector<double>& v) {
  Array out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size())});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::dict artifacts_to_dict(const RunArtifacts& art) {
  py::dict d;
  d["ok"] = art.ok();
  d["outcome"] = art.outcome == RunOutcome::completed           ? "completed"
                 : art.outcome == RunOutcome::transport_failure ? "transport_failure"
                                                                : "numeric_failure";
  d["diagnostic"] = art.diagnostic;
  d["loss"] = art.loss;
  d["loss_mean"] = art.loss_mean;
  d["series_labels"] = art.series_labels;
  d["cosine_series"] = art.cosine_series;
  d["parameter_count"] = art.parameter_count;
  d["model_id"] = art.model_id;
  d["final_image"] = to_numpy(art.final_image);
  if (art.initial_scene) d["initial_scene"] = *art.initial_scene;
  if (art.final_scene) d["final_scene"] = *art.final_scene;
  return d;
}

RunConfig make_run_config(const std::vector<std::string>& prompts,
                          const std::vector<std::string>& negatives, double negative_scale,
                          int strokes, int iterations, int canvas, int augments, bool augment,
                          int augment_size, std::uint64_t seed) {
  RunConfig cfg;
  for (const auto& p : prompts) cfg.prompts.positives.push_back({p, 1.0});
  for (const auto& n : negatives) cfg.prompts.negatives.push_back({n, 1.0});
  cfg.prompts.negative_scale = negative_scale;
  cfg.strokes = strokes;
  cfg.iterations = iterations;
  cfg.canvas.width_px = canvas;
  cfg.canvas.height_px = canvas;
  cfg.augment.n_copies = augments;
  cfg.augment.out_size = augment_size;
  cfg.augment_enabled = augment;
  cfg.seed = seed;
  return cfg;
}

/// Reference request handler over the mock encoder.
class MockServer {
 public:
  MockServer(std::uint64_t seed, bool echo) : backend_(seed) { options_.enable_echo = echo; }
  std::string handle(const std::string& line) {
    return protocol::handle_request_line(line, backend_, options_);
  }

 private:
  MockBackend backend_;
  protocol::ServeOptions options_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Differentiable vector-stroke drawing against a text-image scoring backend";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<TransportError>(m, "TransportError", base.ptr());
  py::register_exception<ProtocolError>(m, "ProtocolError", base.ptr());
  py::register_exception<RemoteError>(m, "RemoteError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  m.attr("EMBEDDING_DIM") = kEmbeddingDim;

  py::class_<CanvasConfig>(m, "CanvasConfig")
      .def(py::init([](int width, int height, std::array<double, 3> background) {
             return CanvasConfig{width, height, background};
           }),
           py::arg("width_px") = 224, py::arg("height_px") = 224,
           py::arg("background_rgb") = std::array<double, 3>{1.0, 1.0, 1.0})
      .def_readwrite("width_px", &CanvasConfig::width_px)
      .def_readwrite("height_px", &CanvasConfig::height_px)
      .def_readwrite("background_rgb", &CanvasConfig::background_rgb);

  py::class_<Stroke>(m, "Stroke")
      .def(py::init([](const std::vector<std::array<double, 2>>& points, double width,
                       std::array<double, 4> rgba) {
             Stroke s;
             for (const auto& p : points) s.control_points.push_back({p[0], p[1]});
             s.width_px = width;
             s.color_rgba = rgba;
             return s;
           }),
           py::arg("control_points"), py::arg("width_px") = 1.0,
           py::arg("color_rgba") = std::array<double, 4>{0.0, 0.0, 0.0, 1.0})
      .def_property(
          "control_points",
          [](const Stroke& s) {
            std::vector<std::array<double, 2>> out;
            for (const Point& p : s.control_points) out.push_back({p.x, p.y});
            return out;
          },
          [](Stroke& s, const std::vector<std::array<double, 2>>& points) {
            s.control_points.clear();
            for (const auto& p : points) s.control_points.push_back({p[0], p[1]});
          })
      .def_readwrite("width_px", &Stroke::width_px)
      .def_readwrite("color_rgba", &Stroke::color_rgba)
      .def_property_readonly("degree", &Stroke::degree);

  py::class_<Scene>(m, "Scene")
      .def(py::init([](std::vector<Stroke> strokes, CanvasConfig canvas) {
             return Scene{std::move(strokes), canvas};
           }),
           py::arg("strokes") = std::vector<Stroke>{}, py::arg("canvas") = CanvasConfig{})
      .def_readwrite("strokes", &Scene::strokes)
      .def_readwrite("canvas", &Scene::canvas)
      .def("__eq__", [](const Scene& a, const Scene& b) { return a == b; });

  py::class_<RasterConfig>(m, "RasterConfig")
      .def(py::init<>())
      .def_readwrite("curve_samples_per_stroke", &RasterConfig::curve_samples_per_stroke)
      .def_readwrite("antialias_width_px", &RasterConfig::antialias_width_px)
      .def_readwrite("supersample_factor", &RasterConfig::supersample_factor);

  m.def(
      "init_scene",
      [](std::size_t n, const CanvasConfig& canvas, std::uint64_t seed) {
        Rng rng(seed);
        return init_scene(n, canvas, rng);
      },
      py::arg("n_strokes"), py::arg("canvas") = CanvasConfig{}, py::arg("seed") = 0);
  m.def(
      "scene_to_params",
      [](const Scene& s) { return vector_to_numpy(scene_to_params(s).first); }, py::arg("scene"));
  m.def(
      "params_to_scene",
      [](const Array& params, const Scene& like) {
        if (params.ndim() != 1) throw ContractError("expected a flat parameter vector");
        const ParamLayout layout = make_layout(like);
        if (static_cast<std::size_t>(params.size()) != layout.size()) {
          throw ContractError("parameter vector does not match the scene layout");
        }
        return params_to_scene({params.data(), layout.size()}, layout, like.canvas);
      },
      py::arg("params"), py::arg("like"));

  m.def(
      "render", [](const Scene& s, const RasterConfig& c) { return to_numpy(render(s, c)); },
      py::arg("scene"), py::arg("config") = RasterConfig{});
  m.def(
      "render_pullback",
      [](const Scene& s, const Array& grad, const RasterConfig& c) {
        return vector_to_numpy(render_pullback(s, c, from_numpy(grad)));
      },
      py::arg("scene"), py::arg("grad"), py::arg("config") = RasterConfig{});
  m.def(
      "reference_render",
      [](const Scene& s, const RasterConfig& c) { return to_numpy(reference_render(s, c)); },
      py::arg("scene"), py::arg("config") = RasterConfig{});

  m.def("export_svg", &export_svg, py::arg("scene"));
  m.def("parse_svg", [](const std::string& svg) { return parse_svg(svg); }, py::arg("svg"));

  m.def(
      "cosine_similarity",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        return cosine_similarity(a, b);
      },
      py::arg("a"), py::arg("b"));

  py::class_<ScoringBackend, std::shared_ptr<ScoringBackend>>(m, "ScoringBackend")
      .def_property_readonly("embedding_dim", &ScoringBackend::embedding_dim)
      .def_property_readonly("model_id", &ScoringBackend::model_id)
      .def("encode_text",
           [](ScoringBackend& b, const std::vector<std::string>& texts) {
             return embeddings_to_numpy(b.encode_text(texts));
           })
      .def("encode_images",
           [](ScoringBackend& b, const std::vector<Array>& images) {
             return embeddings_to_numpy(b.encode_images(batch_from(images)));
           })
      .def(
          "score_images",
          [](ScoringBackend& b, const std::vector<Array>& images,
             const std::vector<std::string>& positives, const std::vector<std::string>& negatives,
             double negative_scale) {
            PromptSet set;
            for (const auto& p : positives) set.positives.push_back({p, 1.0});
            for (const auto& n : negatives) set.negatives.push_back({n, 1.0});
            set.negative_scale = negative_scale;
            const ScoreResult r = b.score_images(batch_from(images), compile_prompts(set, b));
            std::vector<Array> grads;
            for (const ImageTensor& g : r.grad) grads.push_back(to_numpy(g));
            return py::make_tuple(r.report.loss, grads);
          },
          py::arg("images"), py::arg("positives"), py::arg("negatives") = std::vector<std::string>{},
          py::arg("negative_scale") = 0.3);

  py::class_<MockBackend, ScoringBackend, std::shared_ptr<MockBackend>>(m, "MockBackend")
      .def(py::init<std::uint64_t>(), py::arg("seed") = 0)
      .def_property_readonly("seed", &MockBackend::seed);

  m.def(
      "connect",
      [](const std::string& address, double timeout_s) -> std::shared_ptr<ScoringBackend> {
        return protocol::connect(protocol::ServiceAddress::parse(address), timeout_s);
      },
      py::arg("address"), py::arg("timeout_s") = 30.0,
      "Connects to a scoring service at host:port or stdio:<command>.");

  py::class_<MockServer>(m, "MockServer")
      .def(py::init<std::uint64_t, bool>(), py::arg("seed") = 0, py::arg("echo") = false)
      .def("handle", &MockServer::handle, py::arg("line"),
           "Answers one request line with one response line (no trailing newline).");

  m.def(
      "synthesize",
      [](std::shared_ptr<ScoringBackend> backend, const std::vector<std::string>& prompts,
         const std::vector<std::string>& negatives, double negative_scale, int strokes,
         int iterations, int canvas, int augments, bool augment, int augment_size,
         std::uint64_t seed, const std::string& mode) {
        RunConfig cfg = make_run_config(prompts, negatives, negative_scale, strokes, iterations,
                                        canvas, augments, augment, augment_size, seed);
        if (mode != "strokes" && mode != "pixels") throw ConfigError("mode must be strokes or pixels");
        RunArtifacts art;
        {
          py::gil_scoped_release release;
          art = mode == "pixels" ? run_pixel_optimization(cfg, *backend) : run_synthesis(cfg, *backend);
        }
        return artifacts_to_dict(art);
      },
      py::arg("backend"), py::arg("prompts"), py::arg("negatives") = std::vector<std::string>{},
      py::arg("negative_scale") = 0.3, py::arg("strokes") = 256, py::arg("iterations") = 250,
      py::arg("canvas") = 224, py::arg("augments") = 8, py::arg("augment") = true,
      py::arg("augment_size") = 224, py::arg("seed") = 0, py::arg("mode") = "strokes");

  m.def(
      "reconstruct",
      [](const Array& target, int strokes, int iterations, std::uint64_t seed) {
        RunConfig cfg;
        cfg.strokes = strokes;
        cfg.iterations = iterations;
        cfg.seed = seed;
        const ImageTensor t = from_numpy(target);
        RunArtifacts art;
        {
          py::gil_scoped_release release;
          art = reconstruct_scene(t, cfg);
        }
        return artifacts_to_dict(art);
      },
      py::arg("target"), py::arg("strokes") = 64, py::arg("iterations") = 500, py::arg("seed") = 0);
}
