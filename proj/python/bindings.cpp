#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

#include "cpfl/container.hpp"
#include "cpfl/evaluation.hpp"
#include "cpfl/io.hpp"
#include "cpfl/pipeline.hpp"
#include "cpfl/synthetic.hpp"

namespace py = pybind11;
using namespace cpfl;

namespace {

// Json values cross into Python through the json module.
py::object to_python(const Json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

struct Model {
  std::shared_ptr<const CompressedModel> model;

  py::object memory_report() const {
    const MemoryReport r = cpfl::memory_report(*model);
    return to_python(Json{{"bits", r.bits},
                          {"entries", r.num_entries},
                          {"signature_bytes_per_entry", r.signature_bytes_per_entry},
                          {"signature_payload", r.signature_payload},
                          {"entry_table", r.entry_table},
                          {"baseline_entry_table", r.baseline_entry_table},
                          {"total", r.total()},
                          {"entry_reduction", r.entry_reduction}});
  }
};

struct Scene {
  SyntheticScene scene;
  Model model;
  std::vector<Query> queries;
};

Scene synthesize(const SyntheticSceneConfig& config, int vocabulary_size, int bits) {
  Scene s;
  s.scene = generate_scene(config);
  ModelBuildOptions options;
  options.vocabulary_size = vocabulary_size;
  options.bits = bits;
  options.seed = config.seed;
  const Vocabulary vocab = train_vocabulary_on_points(s.scene.points, options);
  auto model = std::make_shared<CompressedModel>(build_model(s.scene.points, s.scene.images, vocab, options));
  for (const RawQuery& q : s.scene.queries) {
    s.queries.push_back(encode_query_image(q, model->vocab, model->embedding));
  }
  s.model.model = std::move(model);
  return s;
}

std::vector<LocalizationResult> run(const Scene& scene, const PipelineParams& params,
                                    std::uint64_t seed, int threads) {
  params.validate();
  py::gil_scoped_release release;
  return localize_all(scene.queries, *scene.model.model, params, seed, threads);
}

}  // namespace

PYBIND11_MODULE(_cpfl, m) {
  m.doc() = "Cascaded 2D-3D matching with compact binary descriptors";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);

  py::class_<PipelineParams>(m, "PipelineParams")
      .def(py::init<>())
      .def_readwrite("bits", &PipelineParams::bits)
      .def_readwrite("tau", &PipelineParams::tau)
      .def_readwrite("phi", &PipelineParams::phi)
      .def_readwrite("sigma", &PipelineParams::sigma)
      .def_readwrite("alpha", &PipelineParams::alpha)
      .def_readwrite("k", &PipelineParams::k)
      .def_readwrite("k1", &PipelineParams::k1)
      .def_readwrite("spatial_budget", &PipelineParams::spatial_budget)
      .def_readwrite("beta", &PipelineParams::beta)
      .def_readwrite("theta", &PipelineParams::theta)
      .def_readwrite("final_threshold", &PipelineParams::final_threshold)
      .def_readwrite("aux_iterations", &PipelineParams::aux_iterations)
      .def_readwrite("final_iterations", &PipelineParams::final_iterations)
      .def_readwrite("min_inliers", &PipelineParams::min_inliers)
      .def_readwrite("known_focal", &PipelineParams::known_focal)
      .def_readwrite("quality_aware_reconfiguration", &PipelineParams::quality_aware_reconfiguration)
      .def_readwrite("principal_focal", &PipelineParams::principal_focal)
      .def_readwrite("baseline_voting", &PipelineParams::baseline_voting)
      .def_readwrite("literal_zero_weight", &PipelineParams::literal_zero_weight)
      .def("validate", &PipelineParams::validate)
      .def("to_dict", [](const PipelineParams& p) { return to_python(params_to_json(p)); });

  py::class_<SyntheticSceneConfig>(m, "SceneConfig")
      .def(py::init<>())
      .def_readwrite("num_points", &SyntheticSceneConfig::num_points)
      .def_readwrite("num_db_images", &SyntheticSceneConfig::num_db_images)
      .def_readwrite("num_queries", &SyntheticSceneConfig::num_queries)
      .def_readwrite("descriptor_dim", &SyntheticSceneConfig::descriptor_dim)
      .def_readwrite("cluster_count", &SyntheticSceneConfig::cluster_count)
      .def_readwrite("descriptor_noise_sigma", &SyntheticSceneConfig::descriptor_noise_sigma)
      .def_readwrite("outlier_match_rate", &SyntheticSceneConfig::outlier_match_rate)
      .def_readwrite("spatial_clustering", &SyntheticSceneConfig::spatial_clustering)
      .def_readwrite("max_query_features", &SyntheticSceneConfig::max_query_features)
      .def_readwrite("pixel_noise", &SyntheticSceneConfig::pixel_noise)
      .def_readwrite("seed", &SyntheticSceneConfig::seed);

  py::class_<Model>(m, "Model")
      .def_property_readonly("num_points", [](const Model& x) { return x.model->points.size(); })
      .def_property_readonly("num_entries", [](const Model& x) { return x.model->entries.size(); })
      .def_property_readonly("bits", [](const Model& x) { return x.model->embedding.bits; })
      .def("memory_report", &Model::memory_report)
      .def("save", [](const Model& x, const std::string& path) { save_model(*x.model, path); })
      .def("to_bytes", [](const Model& x) {
        const auto bytes = serialize_model(*x.model);
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
      });

  m.def("load_model", [](const std::string& path) {
    return Model{std::make_shared<CompressedModel>(cpfl::load_model(path))};
  });

  py::class_<Scene>(m, "Scene")
      .def_property_readonly("model", [](const Scene& s) { return s.model; })
      .def_property_readonly("num_queries", [](const Scene& s) { return s.queries.size(); })
      .def_property_readonly("diameter", [](const Scene& s) { return s.scene.diameter; });

  m.def("synthesize", &synthesize, py::arg("config"), py::arg("vocabulary_size") = 256,
        py::arg("bits") = 64, "Generate a scene and build its compressed model.");

  m.def(
      "localize",
      [](const Scene& scene, const PipelineParams& params, std::uint64_t seed, int threads) {
        const auto results = run(scene, params, seed, threads);
        py::list out;
        for (const auto& r : results) out.append(to_python(result_to_json(r, false)));
        return out;
      },
      py::arg("scene"), py::arg("params") = PipelineParams{}, py::arg("seed") = 0,
      py::arg("threads") = 1, "Localize every query of a scene; returns one dict per query.");

  m.def(
      "evaluate",
      [](const Scene& scene, const PipelineParams& params, std::uint64_t seed, int threads) {
        const auto results = run(scene, params, seed, threads);
        return to_python(report_to_json(cpfl::evaluate(results, scene.scene.truth), scene.scene.diameter));
      },
      py::arg("scene"), py::arg("params") = PipelineParams{}, py::arg("seed") = 0,
      py::arg("threads") = 1, "Localize and score against the ground truth.");

  m.def("gaussian_weight", &gaussian_weight, py::arg("h"), py::arg("sigma") = 16.0,
        py::arg("tau") = 19, py::arg("literal_zero") = false);

  m.def(
      "bilateral_ratio_test",
      [](int h, const std::vector<int>& image_side, const std::vector<int>& model_side, double phi) {
        const RatioTest r = cpfl::bilateral_ratio_test(h, image_side, model_side, phi);
        return py::make_tuple(r.t_image, r.t_model, r.ratio);
      },
      py::arg("h"), py::arg("image_side"), py::arg("model_side"), py::arg("phi") = 0.3,
      "Returns (t_image, t_model, T).");
}
