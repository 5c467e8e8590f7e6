#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "cpfl/types.hpp"

namespace cpfl {

struct Point3D {
  PointId id = 0;
  Vec3 position = Vec3::Zero();
};

struct DatabaseImage {
  ImageId id = 0;
  std::vector<PointId> observed_points;  // sorted, unique
};

/// Bipartite point <-> image visibility graph.
///
/// Both adjacency directions are stored in compressed-row form and sorted by
/// id, so membership tests are binary searches and iteration order is fixed.
/// The graph is immutable once built.
class VisibilityGraph {
 public:
  VisibilityGraph();

  /// Builds from an explicit edge list of (point, image) pairs. Duplicate or
  /// out-of-range edges raise ValidationError.
  static VisibilityGraph from_edges(std::size_t num_points,
                                    std::size_t num_images,
                                    std::vector<std::pair<PointId, ImageId>> edges);

  std::size_t num_points() const { return point_offsets_.size() - 1; }
  std::size_t num_images() const { return image_offsets_.size() - 1; }
  std::size_t num_edges() const { return point_images_.size(); }

  std::span<const ImageId> images_of_point(PointId p) const;
  std::span<const PointId> points_of_image(ImageId d) const;
  bool observes(ImageId d, PointId p) const;

  /// All edges ordered by (point, image).
  std::vector<std::pair<PointId, ImageId>> edges() const;

 private:
  std::vector<std::uint32_t> point_offsets_;
  std::vector<ImageId> point_images_;
  std::vector<std::uint32_t> image_offsets_;
  std::vector<PointId> image_points_;
};

/// Validates ids and observation lists, then builds the visibility graph.
VisibilityGraph build_visibility_graph(std::span<const Point3D> points,
                                       std::span<const DatabaseImage> images);

}  // namespace cpfl
