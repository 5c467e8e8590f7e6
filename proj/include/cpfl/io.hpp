#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "cpfl/embedding.hpp"
#include "cpfl/evaluation.hpp"
#include "cpfl/params.hpp"
#include "cpfl/pipeline.hpp"
#include "cpfl/synthetic.hpp"

namespace cpfl {

using Json = nlohmann::json;

// Params: a flat object with one key per PipelineParams field. Missing keys
// keep their defaults; unknown keys are rejected.
Json params_to_json(const PipelineParams& params);
PipelineParams params_from_json(const Json& j);
PipelineParams load_params(const std::string& path);

Json scene_config_to_json(const SyntheticSceneConfig& config);
SyntheticSceneConfig scene_config_from_json(const Json& j);

// Queries and ground truth: one JSON document per line, one line per image.
Json query_to_json(const RawQuery& query);
RawQuery query_from_json(const Json& j);
void write_queries(const std::string& path, const std::vector<RawQuery>& queries);
std::vector<RawQuery> read_queries(const std::string& path);

Json truth_to_json(const QueryTruth& truth);
QueryTruth truth_from_json(const Json& j);
void write_truth(const std::string& path, const std::vector<QueryTruth>& truth);
std::vector<QueryTruth> read_truth(const std::string& path);

/// Timings are wall-clock and so vary between runs; they are only written when
/// asked for.
Json result_to_json(const LocalizationResult& result, bool with_timings);
LocalizationResult result_from_json(const Json& j);
void write_results(std::ostream& os, const std::vector<LocalizationResult>& results,
                   bool with_timings);
std::vector<LocalizationResult> read_results(const std::string& path);

Json report_to_json(const EvaluationReport& report, double scene_diameter);

// Raw model: points with descriptors plus database images.
struct RawModel {
  std::vector<RawPoint> points;
  std::vector<DatabaseImage> images;
};
void write_raw_model(const std::string& path, const RawModel& model);
RawModel read_raw_model(const std::string& path);

void write_vocabulary(const std::string& path, const Vocabulary& vocab);
Vocabulary read_vocabulary(const std::string& path);

Json read_json_file(const std::string& path);

}  // namespace cpfl
