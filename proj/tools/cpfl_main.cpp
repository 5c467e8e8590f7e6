#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "cpfl/container.hpp"
#include "cpfl/evaluation.hpp"
#include "cpfl/io.hpp"
#include "cpfl/pipeline.hpp"
#include "cpfl/synthetic.hpp"

namespace fs = std::filesystem;
using namespace cpfl;

namespace {

struct Common {
  std::uint64_t seed = 0;
  std::string output;
};

// Writes to --output when given, stdout otherwise.
template <class F>
void emit(const std::string& output, F&& write) {
  if (output.empty() || output == "-") {
    write(std::cout);
    return;
  }
  std::ofstream out(output);
  if (!out) throw std::runtime_error("cannot open " + output + " for writing");
  write(out);
}

PipelineParams resolve_params(const std::string& params_path, const std::string& ablate) {
  PipelineParams params = params_path.empty() ? PipelineParams{} : load_params(params_path);
  if (ablate == "qsr") {
    params.quality_aware_reconfiguration = false;
  } else if (ablate == "pfl") {
    params.principal_focal = false;
  } else if (ablate == "baseline-voting") {
    params.baseline_voting = true;
  }
  params.validate();
  return params;
}

std::vector<Query> encode_all(const std::vector<RawQuery>& raw, const CompressedModel& model) {
  std::vector<Query> out;
  out.reserve(raw.size());
  for (const RawQuery& q : raw) {
    if (static_cast<std::size_t>(q.descriptors.cols()) != model.vocab.dim() && q.descriptors.rows() > 0) {
      throw ValidationError("query " + std::to_string(q.id) + " descriptor dimension " +
                            std::to_string(q.descriptors.cols()) + " does not match the model (" +
                            std::to_string(model.vocab.dim()) + ")");
    }
    out.push_back(encode_query_image(q, model.vocab, model.embedding));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cascaded parallel filtering localization over compressed SfM models"};
  app.require_subcommand(1);

  // vocab-train
  std::string vt_input;
  ModelBuildOptions vt_opts;
  Common vt;
  auto* vocab_train = app.add_subcommand("vocab-train", "Train a visual vocabulary from a raw model");
  vocab_train->add_option("input", vt_input, "Raw model JSON")->required()->check(CLI::ExistingFile);
  vocab_train->add_option("--words", vt_opts.vocabulary_size, "Vocabulary size")->check(CLI::PositiveNumber);
  vocab_train->add_option("--sample", vt_opts.kmeans_sample, "Descriptors sampled for k-means");
  vocab_train->add_option("--iterations", vt_opts.kmeans_iterations, "Lloyd iterations");
  vocab_train->add_option("--seed", vt.seed, "Random seed");
  vocab_train->add_option("--output", vt.output, "Vocabulary JSON")->required();

  // embed
  std::string em_input, em_vocab;
  ModelBuildOptions em_opts;
  Common em;
  auto* embed = app.add_subcommand("embed", "Build a compressed model container from a raw model");
  embed->add_option("input", em_input, "Raw model JSON")->required()->check(CLI::ExistingFile);
  embed->add_option("--vocab", em_vocab, "Vocabulary JSON")->required()->check(CLI::ExistingFile);
  embed->add_option("--bits", em_opts.bits, "Signature length B");
  embed->add_option("--seed", em.seed, "Projection seed");
  embed->add_option("--output", em.output, "Container path")->required();

  // synth
  std::string sy_config;
  SyntheticSceneConfig sy_cfg;
  ModelBuildOptions sy_opts;
  Common sy;
  bool sy_raw = false;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene, its container and queries");
  synth->add_option("--scene", sy_config, "Scene config JSON")->check(CLI::ExistingFile);
  synth->add_option("--points", sy_cfg.num_points, "Number of 3D points");
  synth->add_option("--images", sy_cfg.num_db_images, "Number of database images");
  synth->add_option("--queries", sy_cfg.num_queries, "Number of query images");
  synth->add_option("--clusters", sy_cfg.cluster_count, "Distinct appearance clusters");
  synth->add_option("--noise", sy_cfg.descriptor_noise_sigma, "Descriptor noise sigma");
  synth->add_option("--outliers", sy_cfg.outlier_match_rate, "Outlier feature rate");
  synth->add_option("--clustering", sy_cfg.spatial_clustering, "Fraction of points in one patch");
  synth->add_option("--words", sy_opts.vocabulary_size, "Vocabulary size");
  synth->add_option("--bits", sy_opts.bits, "Signature length B");
  synth->add_option("--seed", sy.seed, "Random seed");
  synth->add_flag("--raw", sy_raw, "Also write the raw model and vocabulary");
  synth->add_option("--output", sy.output, "Output directory")->required();

  // localize
  std::string lo_model, lo_queries, lo_params, lo_ablate;
  int lo_threads = 1;
  bool lo_timings = false;
  Common lo;
  auto* localize_cmd = app.add_subcommand("localize", "Localize query images against a container");
  localize_cmd->add_option("model", lo_model, "Container path")->required()->check(CLI::ExistingFile);
  localize_cmd->add_option("queries", lo_queries, "Query JSONL")->required()->check(CLI::ExistingFile);
  localize_cmd->add_option("--params", lo_params, "Params JSON")->check(CLI::ExistingFile);
  localize_cmd->add_option("--ablate", lo_ablate, "Disable one component")
      ->check(CLI::IsMember({"qsr", "pfl", "baseline-voting"}));
  localize_cmd->add_option("--threads", lo_threads, "Worker threads")->check(CLI::PositiveNumber);
  localize_cmd->add_option("--seed", lo.seed, "RANSAC seed");
  localize_cmd->add_flag("--timings", lo_timings, "Include per-stage timings in the records");
  localize_cmd->add_option("--output", lo.output, "Results JSONL (stdout if omitted)");

  // evaluate
  std::string ev_results, ev_truth, ev_scene;
  double ev_diameter = 0.0;
  Common ev;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Compare results against ground truth");
  evaluate_cmd->add_option("results", ev_results, "Results JSONL")->required()->check(CLI::ExistingFile);
  evaluate_cmd->add_option("truth", ev_truth, "Ground truth JSONL")->required()->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--scene", ev_scene, "scene.json written by synth")->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--diameter", ev_diameter, "Scene diameter for relative thresholds");
  evaluate_cmd->add_option("--output", ev.output, "Report JSON (stdout if omitted)");

  // mem-report
  std::string mr_model;
  bool mr_json = false;
  Common mr;
  auto* mem_report = app.add_subcommand("mem-report", "Byte breakdown of a container");
  mem_report->add_option("model", mr_model, "Container path")->required()->check(CLI::ExistingFile);
  mem_report->add_flag("--json", mr_json, "Print JSON instead of a table");
  mem_report->add_option("--output", mr.output, "Report path (stdout if omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*vocab_train) {
      const RawModel raw = read_raw_model(vt_input);
      vt_opts.seed = vt.seed;
      write_vocabulary(vt.output, train_vocabulary_on_points(raw.points, vt_opts));
    } else if (*embed) {
      const RawModel raw = read_raw_model(em_input);
      em_opts.seed = em.seed;
      save_model(build_model(raw.points, raw.images, read_vocabulary(em_vocab), em_opts), em.output);
    } else if (*synth) {
      SyntheticSceneConfig cfg = sy_cfg;
      if (!sy_config.empty()) {
        Json j = read_json_file(sy_config);
        // Command-line values override the file only when given explicitly.
        const Json cli = scene_config_to_json(sy_cfg);
        for (const auto& [flag, key] : std::vector<std::pair<std::string, std::string>>{
                 {"--points", "num_points"}, {"--images", "num_db_images"},
                 {"--queries", "num_queries"}, {"--clusters", "cluster_count"},
                 {"--noise", "descriptor_noise_sigma"}, {"--outliers", "outlier_match_rate"},
                 {"--clustering", "spatial_clustering"}}) {
          if (synth->count(flag) > 0) j[key] = cli[key];
        }
        cfg = scene_config_from_json(j);
      }
      if (synth->count("--seed") > 0 || sy_config.empty()) cfg.seed = sy.seed;
      const SyntheticScene scene = generate_scene(cfg);
      sy_opts.seed = cfg.seed;
      const Vocabulary vocab = train_vocabulary_on_points(scene.points, sy_opts);
      const CompressedModel model = build_model(scene.points, scene.images, vocab, sy_opts);

      const fs::path dir(sy.output);
      fs::create_directories(dir);
      save_model(model, (dir / "model.cpfl").string());
      write_queries((dir / "queries.jsonl").string(), scene.queries);
      write_truth((dir / "truth.jsonl").string(), scene.truth);
      std::ofstream((dir / "scene.json").string())
          << Json{{"config", scene_config_to_json(cfg)}, {"diameter", scene.diameter}}.dump(2) << '\n';
      if (sy_raw) {
        write_raw_model((dir / "raw_model.json").string(), RawModel{scene.points, scene.images});
        write_vocabulary((dir / "vocab.json").string(), vocab);
      }
      std::cerr << "wrote " << scene.points.size() << " points, " << scene.images.size()
                << " images, " << scene.queries.size() << " queries to " << dir.string() << '\n';
    } else if (*localize_cmd) {
      const PipelineParams params = resolve_params(lo_params, lo_ablate);
      const CompressedModel model = load_model(lo_model);
      if (model.embedding.bits != params.bits) {
        throw ValidationError("params.bits = " + std::to_string(params.bits) +
                              " but the container uses " + std::to_string(model.embedding.bits));
      }
      const std::vector<Query> queries = encode_all(read_queries(lo_queries), model);
      const auto results = localize_all(queries, model, params, lo.seed, lo_threads);
      emit(lo.output, [&](std::ostream& os) { write_results(os, results, lo_timings); });
    } else if (*evaluate_cmd) {
      double diameter = ev_diameter;
      if (!ev_scene.empty()) diameter = read_json_file(ev_scene).at("diameter").get<double>();
      const auto results = read_results(ev_results);
      const auto truth = read_truth(ev_truth);
      const EvaluationReport report = evaluate(results, truth);
      Json j = report_to_json(report, diameter);
      if (diameter > 0.0) {
        const EvaluationReport rel = evaluate(
            results, truth,
            {AccuracyBucket{0.0025 * diameter, 2.0, 0.0}, AccuracyBucket{0.005 * diameter, 5.0, 0.0},
             AccuracyBucket{0.05 * diameter, 10.0, 0.0}});
        j["diameter_scaled_buckets"] = report_to_json(rel, diameter)["buckets"];
      }
      emit(ev.output, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
    } else if (*mem_report) {
      const MemoryReport report = memory_report(load_model(mr_model));
      emit(mr.output, [&](std::ostream& os) {
        if (mr_json) {
          os << Json{{"bits", report.bits},
                     {"entries", report.num_entries},
                     {"signature_bytes_per_entry", report.signature_bytes_per_entry},
                     {"signature_payload", report.signature_payload},
                     {"entry_table", report.entry_table},
                     {"baseline_entry_table", report.baseline_entry_table},
                     {"points", report.points_section},
                     {"visibility", report.visibility_section},
                     {"vocabulary", report.vocabulary_section},
                     {"embedding", report.embedding_section},
                     {"total", report.total()},
                     {"entry_reduction", report.entry_reduction}}
                    .dump(2)
             << '\n';
        } else {
          print_memory_report(os, report);
        }
      });
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
