#include "cpfl/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace cpfl {

namespace {

constexpr int kCameraRetries = 100;
constexpr int kMinObservedPoints = 10;
constexpr double kKeepProbability = 0.8;
constexpr double kPatchHalfSize = 2.0;
constexpr double kOutlierJitter = 16.0;

double deg(double d) { return d * std::numbers::pi / 180.0; }

Mat3 roll_about_z(double angle) {
  return Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix();
}

class Generator {
 public:
  explicit Generator(const SyntheticSceneConfig& config) : cfg_(config), rng_(config.seed) {}

  SyntheticScene run() {
    SyntheticScene scene;
    scene.config = cfg_;
    make_points(scene);
    make_images(scene);
    make_queries(scene);
    return scene;
  }

 private:
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double normal(double sigma) { return std::normal_distribution<double>(0.0, sigma)(rng_); }
  bool coin(double p) { return std::bernoulli_distribution(p)(rng_); }
  int pick(int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng_); }

  Eigen::RowVectorXd observe(const Eigen::RowVectorXd& appearance) {
    Eigen::RowVectorXd d(appearance.size());
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      d(i) = std::clamp(std::round(appearance(i) + normal(cfg_.descriptor_noise_sigma)), 0.0, 255.0);
    }
    return d;
  }

  Eigen::RowVectorXd random_appearance() {
    Eigen::RowVectorXd a = centers_.row(pick(cfg_.cluster_count));
    for (Eigen::Index i = 0; i < a.size(); ++i) a(i) += normal(cfg_.appearance_sigma);
    return a;
  }

  void make_points(SyntheticScene& scene) {
    const double r = cfg_.ring_radius;
    const int dim = cfg_.descriptor_dim;
    centers_.resize(cfg_.cluster_count, dim);
    for (int c = 0; c < cfg_.cluster_count; ++c) {
      for (int i = 0; i < dim; ++i) centers_(c, i) = uniform(0.0, 128.0);
    }

    const int patch_points =
        static_cast<int>(std::lround(cfg_.spatial_clustering * cfg_.num_points));
    const double patch_angle = uniform(0.0, 2.0 * std::numbers::pi);
    scene.patch_center =
        Vec3(1.1 * r * std::cos(patch_angle), 1.1 * r * std::sin(patch_angle), 0.2 * r);

    appearances_.resize(cfg_.num_points, dim);
    scene.points.resize(static_cast<std::size_t>(cfg_.num_points));
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (int p = 0; p < cfg_.num_points; ++p) {
      Vec3 x;
      if (p < patch_points) {
        x = scene.patch_center + Vec3(uniform(-kPatchHalfSize, kPatchHalfSize),
                                      uniform(-kPatchHalfSize, kPatchHalfSize),
                                      uniform(-kPatchHalfSize, kPatchHalfSize));
      } else {
        const double a = uniform(0.0, 2.0 * std::numbers::pi);
        const double rad = uniform(r, 1.25 * r);
        x = Vec3(rad * std::cos(a), rad * std::sin(a), uniform(0.0, 0.4 * r));
      }
      lo = lo.cwiseMin(x);
      hi = hi.cwiseMax(x);
      appearances_.row(p) = random_appearance();

      RawPoint& raw = scene.points[static_cast<std::size_t>(p)];
      raw.point = {static_cast<PointId>(p), x};
      raw.descriptors.resize(cfg_.descriptors_per_point, dim);
      for (int k = 0; k < cfg_.descriptors_per_point; ++k) {
        raw.descriptors.row(k) = observe(appearances_.row(p));
      }
    }
    scene.diameter = cfg_.num_points > 1 ? (hi - lo).norm() : 0.0;
  }

  CameraPose random_camera(const SyntheticScene& scene, bool aim, const Vec2* target) {
    const double r = cfg_.ring_radius;
    CameraPose pose;
    const double ca = uniform(0.0, 2.0 * std::numbers::pi);
    const double cr = 0.35 * r * std::sqrt(uniform(0.0, 1.0));
    pose.center = Vec3(cr * std::cos(ca), cr * std::sin(ca), 0.2 * r + normal(0.02 * r));
    pose.focal = uniform(cfg_.focal_min, cfg_.focal_max);
    pose.principal_point = Vec2(cfg_.image_width / 2.0, cfg_.image_height / 2.0);

    if (aim) {
      const Vec2 t = target ? *target
                            : Vec2(uniform(0.15, 0.85) * cfg_.image_width,
                                   uniform(0.15, 0.85) * cfg_.image_height);
      const Mat3 base = roll_about_z(normal(deg(2.0))) *
                        look_rotation(scene.patch_center - pose.center);
      const Vec2 n = (t - pose.principal_point) / pose.focal;
      const Vec3 ray = Vec3(n.x(), n.y(), 1.0).normalized();
      pose.rotation =
          Eigen::Quaterniond::FromTwoVectors(Vec3::UnitZ(), ray).toRotationMatrix() * base;
    } else {
      const double yaw = uniform(0.0, 2.0 * std::numbers::pi);
      const double pitch = normal(deg(4.0));
      const Vec3 forward(std::cos(pitch) * std::cos(yaw), std::cos(pitch) * std::sin(yaw),
                         std::sin(pitch));
      pose.rotation = roll_about_z(normal(deg(2.0))) * look_rotation(forward);
    }
    return pose;
  }

  // Points projecting inside the image and at least half a unit in front.
  std::vector<std::pair<PointId, Vec2>> visible(const SyntheticScene& scene,
                                                 const CameraPose& pose) const {
    std::vector<std::pair<PointId, Vec2>> out;
    for (const RawPoint& raw : scene.points) {
      const Vec3 c = pose.to_camera(raw.point.position);
      if (c.z() <= 0.5) continue;
      const Vec2 px = pose.focal * Vec2(c.x() / c.z(), c.y() / c.z()) + pose.principal_point;
      if (px.x() < 0.0 || px.x() >= cfg_.image_width || px.y() < 0.0 ||
          px.y() >= cfg_.image_height) {
        continue;
      }
      out.emplace_back(raw.point.id, px);
    }
    return out;
  }

  void make_images(SyntheticScene& scene) {
    const bool clustered = cfg_.spatial_clustering > 0.0;
    for (int d = 0; d < cfg_.num_db_images; ++d) {
      const bool aim = clustered && coin(cfg_.spatial_clustering);
      DatabaseImage image;
      image.id = static_cast<ImageId>(d);
      CameraPose pose;
      for (int attempt = 0;; ++attempt) {
        if (attempt == kCameraRetries) {
          throw ValidationError("database image " + std::to_string(d) +
                                " could not be placed to observe points");
        }
        pose = random_camera(scene, aim, nullptr);
        image.observed_points.clear();
        for (const auto& [pid, px] : visible(scene, pose)) {
          if (coin(kKeepProbability)) image.observed_points.push_back(pid);
        }
        if (static_cast<int>(image.observed_points.size()) >= kMinObservedPoints) break;
      }
      scene.images.push_back(std::move(image));
      scene.image_poses.push_back(pose);
    }
  }

  void make_queries(SyntheticScene& scene) {
    const bool clustered = cfg_.spatial_clustering > 0.0;
    const int w = cfg_.image_width;
    const int h = cfg_.image_height;
    for (int q = 0; q < cfg_.num_queries; ++q) {
      Vec2 bin_center((pick(4) + 0.5) * w / 4.0, (pick(4) + 0.5) * h / 4.0);
      CameraPose pose;
      std::vector<std::pair<PointId, Vec2>> inliers;
      std::vector<Vec2> sites;
      for (int attempt = 0;; ++attempt) {
        if (attempt == kCameraRetries) {
          throw ValidationError("query " + std::to_string(q) +
                                " could not be placed to observe points");
        }
        pose = random_camera(scene, clustered, &bin_center);
        inliers.clear();
        sites.clear();
        for (const auto& [pid, px] : visible(scene, pose)) {
          sites.push_back(px);
          if (!coin(kKeepProbability)) continue;
          const Vec2 noisy = px + Vec2(normal(cfg_.pixel_noise), normal(cfg_.pixel_noise));
          if (noisy.x() < 0.0 || noisy.x() >= w || noisy.y() < 0.0 || noisy.y() >= h) continue;
          inliers.emplace_back(pid, noisy);
        }
        if (static_cast<int>(inliers.size()) >= kMinObservedPoints) break;
      }

      const double rate = cfg_.outlier_match_rate;
      const auto max_inliers =
          static_cast<std::size_t>(std::lround(cfg_.max_query_features * (1.0 - rate)));
      std::shuffle(inliers.begin(), inliers.end(), rng_);
      if (inliers.size() > max_inliers) inliers.resize(max_inliers);
      const std::size_t outliers =
          rate >= 1.0 ? static_cast<std::size_t>(cfg_.max_query_features)
                      : static_cast<std::size_t>(
                            std::lround(static_cast<double>(inliers.size()) * rate / (1.0 - rate)));

      struct Feature {
        std::int64_t label;
        Vec2 pixel;
        Eigen::RowVectorXd descriptor;
      };
      std::vector<Feature> features;
      features.reserve(inliers.size() + outliers);
      for (const auto& [pid, px] : inliers) {
        features.push_back({pid, px, observe(appearances_.row(pid))});
      }
      // Unmatched features are detected where the texture is, so they follow
      // the density of the visible points.
      for (std::size_t o = 0; o < outliers; ++o) {
        const Vec2 site = sites[static_cast<std::size_t>(pick(static_cast<int>(sites.size())))];
        const Vec2 px(std::clamp(site.x() + uniform(-kOutlierJitter, kOutlierJitter), 0.0, w - 1e-6),
                      std::clamp(site.y() + uniform(-kOutlierJitter, kOutlierJitter), 0.0, h - 1e-6));
        features.push_back({-1, px, observe(random_appearance())});
      }
      std::shuffle(features.begin(), features.end(), rng_);

      RawQuery raw;
      raw.id = static_cast<QueryId>(q);
      raw.width = w;
      raw.height = h;
      raw.descriptors.resize(static_cast<Eigen::Index>(features.size()), cfg_.descriptor_dim);
      QueryTruth truth;
      truth.id = raw.id;
      truth.pose = pose;
      for (std::size_t i = 0; i < features.size(); ++i) {
        raw.pixels.push_back(features[i].pixel);
        raw.descriptors.row(static_cast<Eigen::Index>(i)) = features[i].descriptor;
        truth.labels.push_back(features[i].label);
      }
      scene.queries.push_back(std::move(raw));
      scene.truth.push_back(std::move(truth));
    }
  }

  const SyntheticSceneConfig& cfg_;
  std::mt19937_64 rng_;
  Eigen::MatrixXd centers_;
  Eigen::MatrixXd appearances_;
};

}  // namespace

void SyntheticSceneConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw ValidationError(std::string(name) + " must be at least 1");
  };
  auto rate = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(std::string(name) + " must lie in [0, 1]");
  };
  positive(num_points, "num_points");
  positive(num_db_images, "num_db_images");
  positive(num_queries, "num_queries");
  positive(descriptor_dim, "descriptor_dim");
  positive(cluster_count, "cluster_count");
  positive(image_width, "image_width");
  positive(image_height, "image_height");
  positive(descriptors_per_point, "descriptors_per_point");
  positive(max_query_features, "max_query_features");
  rate(outlier_match_rate, "outlier_match_rate");
  rate(spatial_clustering, "spatial_clustering");
  if (!(descriptor_noise_sigma >= 0.0) || !(appearance_sigma >= 0.0) || !(pixel_noise >= 0.0)) {
    throw ValidationError("noise levels must be non-negative");
  }
  if (!(focal_min > 0.0) || !(focal_max >= focal_min)) {
    throw ValidationError("focal range must be positive and ordered");
  }
  if (!(ring_radius > 0.0)) throw ValidationError("ring_radius must be positive");
}

SyntheticScene generate_scene(const SyntheticSceneConfig& config) {
  config.validate();
  return Generator(config).run();
}

Vocabulary train_vocabulary_on_points(std::span<const RawPoint> points,
                                      const ModelBuildOptions& options) {
  std::vector<std::pair<std::size_t, Eigen::Index>> rows;
  for (std::size_t p = 0; p < points.size(); ++p) {
    for (Eigen::Index r = 0; r < points[p].descriptors.rows(); ++r) rows.emplace_back(p, r);
  }
  if (rows.empty()) throw ValidationError("no descriptors to train a vocabulary on");
  std::mt19937_64 rng(options.seed);
  const auto sample = std::min(rows.size(), static_cast<std::size_t>(options.kmeans_sample));
  for (std::size_t i = 0; i < sample; ++i) {
    std::uniform_int_distribution<std::size_t> d(i, rows.size() - 1);
    std::swap(rows[i], rows[d(rng)]);
  }
  rows.resize(sample);
  std::sort(rows.begin(), rows.end());

  DescriptorMatrix training(static_cast<Eigen::Index>(sample), points.front().descriptors.cols());
  for (std::size_t i = 0; i < sample; ++i) {
    training.row(static_cast<Eigen::Index>(i)) = points[rows[i].first].descriptors.row(rows[i].second);
  }
  KMeansOptions km;
  km.max_iterations = options.kmeans_iterations;
  return train_vocabulary(training, static_cast<std::size_t>(options.vocabulary_size), options.seed,
                          km)
      .quantized();
}

CompressedModel build_model(std::span<const RawPoint> points,
                            std::span<const DatabaseImage> images, const Vocabulary& vocab,
                            const ModelBuildOptions& options) {
  const Vocabulary vq = vocab.quantized();
  std::vector<Point3D> plain;
  std::vector<RawPoint> assigned(points.begin(), points.end());
  Eigen::Index total = 0;
  for (const RawPoint& p : points) total += p.descriptors.rows();
  if (total == 0) throw ValidationError("model has no descriptors");

  DescriptorMatrix all(total, static_cast<Eigen::Index>(vq.dim()));
  std::vector<WordId> words;
  words.reserve(static_cast<std::size_t>(total));
  Eigen::Index row = 0;
  for (RawPoint& p : assigned) {
    plain.push_back(p.point);
    if (static_cast<std::size_t>(p.descriptors.cols()) != vq.dim()) {
      throw ValidationError("point " + std::to_string(p.point.id) +
                            " descriptor dimension does not match the vocabulary");
    }
    p.words.clear();
    for (Eigen::Index r = 0; r < p.descriptors.rows(); ++r, ++row) {
      all.row(row) = p.descriptors.row(r);
      p.words.push_back(vq.nearest_word({p.descriptors.row(r).data(), vq.dim()}));
      words.push_back(p.words.back());
    }
  }
  EmbeddingParams embedding = train_embedding(all, words, vq, options.bits, options.seed).quantized();
  VisibilityGraph graph = build_visibility_graph(plain, images);
  return compress_model(assigned, std::move(graph), vq, std::move(embedding));
}

}  // namespace cpfl
