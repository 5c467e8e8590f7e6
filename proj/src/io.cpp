#include "cpfl/io.hpp"

#include <fstream>
#include <set>

namespace cpfl {

namespace {

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  return out;
}

template <class F>
std::vector<std::invoke_result_t<F, const Json&>> read_lines(const std::string& path, F&& parse) {
  std::ifstream in = open_in(path);
  std::vector<std::invoke_result_t<F, const Json&>> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse(Json::parse(line)));
    } catch (const Json::exception& e) {
      throw FormatError(path + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

Json vec_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw FormatError("expected a 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

Json pose_json(const CameraPose& pose, Json& j) {
  const Eigen::Quaterniond q = pose.quaternion();
  j["quaternion"] = Json::array({q.w(), q.x(), q.y(), q.z()});
  j["center"] = vec_json(pose.center);
  j["focal"] = pose.focal;
  j["principal_point"] = Json::array({pose.principal_point.x(), pose.principal_point.y()});
  return j;
}

CameraPose pose_from(const Json& j) {
  CameraPose pose;
  const Json& q = j.at("quaternion");
  if (!q.is_array() || q.size() != 4) throw FormatError("expected a 4-element quaternion");
  pose.rotation = Eigen::Quaterniond(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(),
                                     q[3].get<double>())
                      .normalized()
                      .toRotationMatrix();
  pose.center = vec3_from(j.at("center"));
  pose.focal = j.at("focal").get<double>();
  if (j.contains("principal_point")) {
    const Json& pp = j["principal_point"];
    pose.principal_point = Vec2(pp.at(0).get<double>(), pp.at(1).get<double>());
  }
  return pose;
}

DescriptorMatrix matrix_from(const Json& rows, std::size_t expected_cols, const std::string& what) {
  DescriptorMatrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(expected_cols));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Json& row = rows[r];
    if (!row.is_array() || row.size() != expected_cols) {
      throw FormatError(what + ": descriptor " + std::to_string(r) + " has " +
                        std::to_string(row.is_array() ? row.size() : 0) + " values, expected " +
                        std::to_string(expected_cols));
    }
    for (std::size_t c = 0; c < expected_cols; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c].get<double>();
    }
  }
  return m;
}

Json matrix_json(const DescriptorMatrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

void reject_unknown(const Json& j, const std::set<std::string>& known, const char* what) {
  if (!j.is_object()) throw ValidationError(std::string(what) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ValidationError(std::string("unknown ") + what + " key '" + key + "'");
  }
}

template <class T>
void read_field(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j[key].get<T>();
}

}  // namespace

Json params_to_json(const PipelineParams& p) {
  Json j;
  j["bits"] = p.bits;
  j["tau"] = p.tau;
  j["phi"] = p.phi;
  j["sigma"] = p.sigma;
  j["alpha"] = p.alpha;
  j["k"] = p.k;
  j["k1"] = p.k1;
  j["spatial_budget"] = p.spatial_budget;
  j["beta"] = p.beta;
  j["theta"] = p.theta;
  j["final_threshold"] = p.final_threshold;
  j["aux_iterations"] = p.aux_iterations;
  j["final_iterations"] = p.final_iterations;
  j["min_inliers"] = p.min_inliers;
  j["known_focal"] = p.known_focal ? Json(*p.known_focal) : Json(nullptr);
  j["quality_aware_reconfiguration"] = p.quality_aware_reconfiguration;
  j["principal_focal"] = p.principal_focal;
  j["baseline_voting"] = p.baseline_voting;
  j["baseline_tau"] = p.baseline_tau;
  j["literal_zero_weight"] = p.literal_zero_weight;
  return j;
}

PipelineParams params_from_json(const Json& j) {
  static const std::set<std::string> known{
      "bits", "tau", "phi", "sigma", "alpha", "k", "k1", "spatial_budget", "beta", "theta",
      "final_threshold", "aux_iterations", "final_iterations", "min_inliers", "known_focal",
      "quality_aware_reconfiguration", "principal_focal", "baseline_voting", "baseline_tau",
      "literal_zero_weight"};
  reject_unknown(j, known, "params");
  PipelineParams p;
  try {
    read_field(j, "bits", p.bits);
    read_field(j, "tau", p.tau);
    read_field(j, "phi", p.phi);
    read_field(j, "sigma", p.sigma);
    read_field(j, "alpha", p.alpha);
    read_field(j, "k", p.k);
    read_field(j, "k1", p.k1);
    read_field(j, "spatial_budget", p.spatial_budget);
    read_field(j, "beta", p.beta);
    read_field(j, "theta", p.theta);
    read_field(j, "final_threshold", p.final_threshold);
    read_field(j, "aux_iterations", p.aux_iterations);
    read_field(j, "final_iterations", p.final_iterations);
    read_field(j, "min_inliers", p.min_inliers);
    if (j.contains("known_focal") && !j["known_focal"].is_null()) {
      p.known_focal = j["known_focal"].get<double>();
    }
    read_field(j, "quality_aware_reconfiguration", p.quality_aware_reconfiguration);
    read_field(j, "principal_focal", p.principal_focal);
    read_field(j, "baseline_voting", p.baseline_voting);
    read_field(j, "baseline_tau", p.baseline_tau);
    read_field(j, "literal_zero_weight", p.literal_zero_weight);
  } catch (const Json::type_error& e) {
    throw ValidationError(std::string("params: ") + e.what());
  }
  p.validate();
  return p;
}

PipelineParams load_params(const std::string& path) { return params_from_json(read_json_file(path)); }

Json scene_config_to_json(const SyntheticSceneConfig& c) {
  Json j;
  j["num_points"] = c.num_points;
  j["num_db_images"] = c.num_db_images;
  j["num_queries"] = c.num_queries;
  j["descriptor_dim"] = c.descriptor_dim;
  j["cluster_count"] = c.cluster_count;
  j["appearance_sigma"] = c.appearance_sigma;
  j["descriptor_noise_sigma"] = c.descriptor_noise_sigma;
  j["outlier_match_rate"] = c.outlier_match_rate;
  j["spatial_clustering"] = c.spatial_clustering;
  j["image_width"] = c.image_width;
  j["image_height"] = c.image_height;
  j["focal_min"] = c.focal_min;
  j["focal_max"] = c.focal_max;
  j["pixel_noise"] = c.pixel_noise;
  j["descriptors_per_point"] = c.descriptors_per_point;
  j["max_query_features"] = c.max_query_features;
  j["ring_radius"] = c.ring_radius;
  j["seed"] = c.seed;
  return j;
}

SyntheticSceneConfig scene_config_from_json(const Json& j) {
  static const std::set<std::string> known{
      "num_points", "num_db_images", "num_queries", "descriptor_dim", "cluster_count",
      "appearance_sigma", "descriptor_noise_sigma", "outlier_match_rate", "spatial_clustering",
      "image_width", "image_height", "focal_min", "focal_max", "pixel_noise",
      "descriptors_per_point", "max_query_features", "ring_radius", "seed"};
  reject_unknown(j, known, "scene");
  SyntheticSceneConfig c;
  try {
    read_field(j, "num_points", c.num_points);
    read_field(j, "num_db_images", c.num_db_images);
    read_field(j, "num_queries", c.num_queries);
    read_field(j, "descriptor_dim", c.descriptor_dim);
    read_field(j, "cluster_count", c.cluster_count);
    read_field(j, "appearance_sigma", c.appearance_sigma);
    read_field(j, "descriptor_noise_sigma", c.descriptor_noise_sigma);
    read_field(j, "outlier_match_rate", c.outlier_match_rate);
    read_field(j, "spatial_clustering", c.spatial_clustering);
    read_field(j, "image_width", c.image_width);
    read_field(j, "image_height", c.image_height);
    read_field(j, "focal_min", c.focal_min);
    read_field(j, "focal_max", c.focal_max);
    read_field(j, "pixel_noise", c.pixel_noise);
    read_field(j, "descriptors_per_point", c.descriptors_per_point);
    read_field(j, "max_query_features", c.max_query_features);
    read_field(j, "ring_radius", c.ring_radius);
    read_field(j, "seed", c.seed);
  } catch (const Json::type_error& e) {
    throw ValidationError(std::string("scene: ") + e.what());
  }
  c.validate();
  return c;
}

Json query_to_json(const RawQuery& q) {
  Json features = Json::array();
  for (std::size_t i = 0; i < q.pixels.size(); ++i) {
    Json d = Json::array();
    for (Eigen::Index c = 0; c < q.descriptors.cols(); ++c) {
      d.push_back(q.descriptors(static_cast<Eigen::Index>(i), c));
    }
    features.push_back({{"x", q.pixels[i].x()}, {"y", q.pixels[i].y()}, {"d", std::move(d)}});
  }
  return {{"id", q.id}, {"width", q.width}, {"height", q.height}, {"features", std::move(features)}};
}

RawQuery query_from_json(const Json& j) {
  RawQuery q;
  q.id = j.at("id").get<QueryId>();
  q.width = j.at("width").get<int>();
  q.height = j.at("height").get<int>();
  const Json& features = j.at("features");
  const std::size_t dim = features.empty() ? 0 : features[0].at("d").size();
  Json rows = Json::array();
  for (const Json& f : features) {
    q.pixels.emplace_back(f.at("x").get<double>(), f.at("y").get<double>());
    rows.push_back(f.at("d"));
  }
  q.descriptors = matrix_from(rows, dim, "query " + std::to_string(q.id));
  return q;
}

void write_queries(const std::string& path, const std::vector<RawQuery>& queries) {
  std::ofstream out = open_out(path);
  for (const RawQuery& q : queries) out << query_to_json(q).dump() << '\n';
}

std::vector<RawQuery> read_queries(const std::string& path) { return read_lines(path, query_from_json); }

Json truth_to_json(const QueryTruth& t) {
  Json j{{"id", t.id}};
  pose_json(t.pose, j);
  j["labels"] = t.labels;
  return j;
}

QueryTruth truth_from_json(const Json& j) {
  QueryTruth t;
  t.id = j.at("id").get<QueryId>();
  t.pose = pose_from(j);
  if (j.contains("labels")) t.labels = j["labels"].get<std::vector<std::int64_t>>();
  return t;
}

void write_truth(const std::string& path, const std::vector<QueryTruth>& truth) {
  std::ofstream out = open_out(path);
  for (const QueryTruth& t : truth) out << truth_to_json(t).dump() << '\n';
}

std::vector<QueryTruth> read_truth(const std::string& path) { return read_lines(path, truth_from_json); }

Json result_to_json(const LocalizationResult& r, bool with_timings) {
  Json j{{"id", r.query_id}, {"status", std::string(to_string(r.status))}};
  j["failed_stage"] = std::string(to_string(r.failed_stage));
  pose_json(r.pose, j);
  j["inliers"] = r.inlier_count;
  const StageCounts& c = r.counts;
  j["counts"] = {{"candidates", c.candidates},   {"matches", c.matches},
                 {"confident", c.confident},     {"ranked_images", c.ranked_images},
                 {"selected", c.selected},       {"reconfigured", c.reconfigured},
                 {"pool", c.pool},               {"recovered", c.recovered}};
  if (with_timings) {
    const StageTimings& t = r.timings;
    j["timings_ms"] = {{"feature", t.feature_ms},
                       {"visibility", t.visibility_ms},
                       {"reconfiguration", t.reconfiguration_ms},
                       {"auxiliary", t.auxiliary_ms},
                       {"geometry", t.geometry_ms},
                       {"final", t.final_ms}};
  }
  return j;
}

LocalizationResult result_from_json(const Json& j) {
  LocalizationResult r;
  r.query_id = j.at("id").get<QueryId>();
  r.status = j.at("status").get<std::string>() == "localized" ? Status::kLocalized : Status::kFailed;
  const std::string stage = j.value("failed_stage", std::string("none"));
  for (Stage s : {Stage::kNone, Stage::kFeature, Stage::kVisibility, Stage::kReconfiguration,
                  Stage::kAuxiliary, Stage::kGeometry, Stage::kFinal}) {
    if (to_string(s) == stage) r.failed_stage = s;
  }
  r.pose = pose_from(j);
  r.inlier_count = j.at("inliers").get<std::size_t>();
  if (j.contains("counts")) {
    const Json& c = j["counts"];
    r.counts.candidates = c.value("candidates", std::size_t{0});
    r.counts.matches = c.value("matches", std::size_t{0});
    r.counts.confident = c.value("confident", std::size_t{0});
    r.counts.ranked_images = c.value("ranked_images", std::size_t{0});
    r.counts.selected = c.value("selected", std::size_t{0});
    r.counts.reconfigured = c.value("reconfigured", std::size_t{0});
    r.counts.pool = c.value("pool", std::size_t{0});
    r.counts.recovered = c.value("recovered", std::size_t{0});
  }
  if (j.contains("timings_ms")) {
    const Json& t = j["timings_ms"];
    r.timings.feature_ms = t.value("feature", 0.0);
    r.timings.visibility_ms = t.value("visibility", 0.0);
    r.timings.reconfiguration_ms = t.value("reconfiguration", 0.0);
    r.timings.auxiliary_ms = t.value("auxiliary", 0.0);
    r.timings.geometry_ms = t.value("geometry", 0.0);
    r.timings.final_ms = t.value("final", 0.0);
  }
  return r;
}

void write_results(std::ostream& os, const std::vector<LocalizationResult>& results,
                   bool with_timings) {
  for (const LocalizationResult& r : results) os << result_to_json(r, with_timings).dump() << '\n';
}

std::vector<LocalizationResult> read_results(const std::string& path) {
  return read_lines(path, result_from_json);
}

Json report_to_json(const EvaluationReport& r, double scene_diameter) {
  Json buckets = Json::array();
  for (const AccuracyBucket& b : r.buckets) {
    buckets.push_back({{"max_center_error", b.max_center_error},
                       {"max_rotation_deg", b.max_rotation_deg},
                       {"percent", b.percent}});
  }
  auto finite_or_null = [](double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); };
  return {{"units", "world units; synthetic scenes have no metric scale"},
          {"scene_diameter", scene_diameter},
          {"queries", r.num_queries},
          {"localized", r.num_localized},
          {"localized_fraction", r.localized_fraction},
          {"center_error_quartiles",
           Json::array({finite_or_null(r.center_quartiles[0]), finite_or_null(r.center_quartiles[1]),
                        finite_or_null(r.center_quartiles[2])})},
          {"rotation_error_quartiles_deg",
           Json::array({finite_or_null(r.rotation_quartiles[0]),
                        finite_or_null(r.rotation_quartiles[1]),
                        finite_or_null(r.rotation_quartiles[2])})},
          {"buckets", std::move(buckets)},
          {"mean_time_ms", r.mean_time_ms}};
}

void write_raw_model(const std::string& path, const RawModel& model) {
  Json points = Json::array();
  for (const RawPoint& p : model.points) {
    Json jp{{"id", p.point.id}, {"position", vec_json(p.point.position)},
            {"descriptors", matrix_json(p.descriptors)}};
    if (!p.words.empty()) jp["words"] = p.words;
    points.push_back(std::move(jp));
  }
  Json images = Json::array();
  for (const DatabaseImage& d : model.images) {
    images.push_back({{"id", d.id}, {"points", d.observed_points}});
  }
  std::ofstream out = open_out(path);
  out << Json{{"points", std::move(points)}, {"images", std::move(images)}}.dump() << '\n';
}

RawModel read_raw_model(const std::string& path) {
  const Json j = read_json_file(path);
  RawModel model;
  try {
    for (const Json& jp : j.at("points")) {
      RawPoint p;
      p.point.id = jp.at("id").get<PointId>();
      p.point.position = vec3_from(jp.at("position"));
      const Json& rows = jp.at("descriptors");
      const std::size_t dim = rows.empty() ? 0 : rows[0].size();
      p.descriptors = matrix_from(rows, dim, "point " + std::to_string(p.point.id));
      if (jp.contains("words")) p.words = jp["words"].get<std::vector<WordId>>();
      model.points.push_back(std::move(p));
    }
    for (const Json& jd : j.at("images")) {
      DatabaseImage d;
      d.id = jd.at("id").get<ImageId>();
      d.observed_points = jd.at("points").get<std::vector<PointId>>();
      model.images.push_back(std::move(d));
    }
  } catch (const Json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  return model;
}

void write_vocabulary(const std::string& path, const Vocabulary& vocab) {
  std::ofstream out = open_out(path);
  out << Json{{"k", vocab.size()}, {"dim", vocab.dim()}, {"centroids", matrix_json(vocab.centroids)}}
             .dump()
      << '\n';
}

Vocabulary read_vocabulary(const std::string& path) {
  const Json j = read_json_file(path);
  Vocabulary v;
  try {
    const std::size_t k = j.at("k").get<std::size_t>();
    const std::size_t dim = j.at("dim").get<std::size_t>();
    if (j.at("centroids").size() != k) throw FormatError(path + ": centroid count differs from k");
    v.centroids = matrix_from(j.at("centroids"), dim, "vocabulary");
  } catch (const Json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  return v;
}

Json read_json_file(const std::string& path) {
  std::ifstream in = open_in(path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace cpfl
