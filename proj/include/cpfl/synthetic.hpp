#pragma once

#include <cstdint>
#include <vector>

#include "cpfl/embedding.hpp"
#include "cpfl/geometry.hpp"
#include "cpfl/pipeline.hpp"
#include "cpfl/scene_model.hpp"

namespace cpfl {

/// Parameters of a generated scene. Points lie on a ring-shaped wall around
/// the origin; cameras stand inside the ring and look outward.
struct SyntheticSceneConfig {
  int num_points = 5000;
  int num_db_images = 100;
  int num_queries = 10;
  int descriptor_dim = 64;
  int cluster_count = 500;             // distinct appearances shared between points
  double appearance_sigma = 12.0;      // per-point offset from its cluster center
  double descriptor_noise_sigma = 4.0; // per-observation noise
  double outlier_match_rate = 0.2;     // fraction of query features with no true point
  double spatial_clustering = 0.0;     // fraction of points packed into one small patch
  int image_width = 1024;
  int image_height = 768;
  double focal_min = 800.0;
  double focal_max = 1400.0;
  double pixel_noise = 0.5;
  int descriptors_per_point = 3;
  int max_query_features = 1500;
  double ring_radius = 50.0;
  std::uint64_t seed = 0;

  /// Throws ValidationError on counts < 1 or rates outside [0, 1].
  void validate() const;
};

struct QueryTruth {
  QueryId id = 0;
  CameraPose pose;
  std::vector<std::int64_t> labels;  // true point id per feature, -1 for outliers
};

struct SyntheticScene {
  SyntheticSceneConfig config;
  std::vector<RawPoint> points;
  std::vector<DatabaseImage> images;
  std::vector<CameraPose> image_poses;
  std::vector<RawQuery> queries;
  std::vector<QueryTruth> truth;
  double diameter = 0.0;  // bounding-box diagonal of the points
  Vec3 patch_center = Vec3::Zero();
};

/// Deterministic in config.seed. Throws ValidationError when a camera cannot
/// be placed to observe any point within the retry cap.
SyntheticScene generate_scene(const SyntheticSceneConfig& config);

struct ModelBuildOptions {
  int vocabulary_size = 256;
  int bits = 64;
  int kmeans_sample = 20000;
  int kmeans_iterations = 25;
  std::uint64_t seed = 0;
};

/// Trains a vocabulary on a seeded subsample of all point descriptors.
Vocabulary train_vocabulary_on_points(std::span<const RawPoint> points,
                                      const ModelBuildOptions& options);

/// Trains the embedding and compresses the points. Vocabulary and embedding
/// are rounded to container precision first, so a saved model matches the
/// one in memory.
CompressedModel build_model(std::span<const RawPoint> points,
                            std::span<const DatabaseImage> images, const Vocabulary& vocab,
                            const ModelBuildOptions& options);

}  // namespace cpfl
