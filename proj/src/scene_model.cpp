#include "cpfl/scene_model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cpfl {

VisibilityGraph::VisibilityGraph() : point_offsets_{0}, image_offsets_{0} {}

VisibilityGraph VisibilityGraph::from_edges(
    std::size_t num_points, std::size_t num_images,
    std::vector<std::pair<PointId, ImageId>> edges) {
  for (const auto& [p, d] : edges) {
    if (p >= num_points || d >= num_images) {
      throw ValidationError("visibility edge (" + std::to_string(p) + ", " +
                            std::to_string(d) + ") references an unknown id");
    }
  }
  std::sort(edges.begin(), edges.end());
  if (std::adjacent_find(edges.begin(), edges.end()) != edges.end()) {
    throw ValidationError("visibility graph contains a duplicate edge");
  }

  VisibilityGraph g;
  g.point_offsets_.assign(num_points + 1, 0);
  g.image_offsets_.assign(num_images + 1, 0);
  for (const auto& [p, d] : edges) {
    ++g.point_offsets_[p + 1];
    ++g.image_offsets_[d + 1];
  }
  for (std::size_t i = 0; i < num_points; ++i) g.point_offsets_[i + 1] += g.point_offsets_[i];
  for (std::size_t i = 0; i < num_images; ++i) g.image_offsets_[i + 1] += g.image_offsets_[i];

  g.point_images_.resize(edges.size());
  g.image_points_.resize(edges.size());
  std::vector<std::uint32_t> point_fill(g.point_offsets_.begin(), g.point_offsets_.end() - 1);
  std::vector<std::uint32_t> image_fill(g.image_offsets_.begin(), g.image_offsets_.end() - 1);
  // Edges are sorted by (point, image), so both fills come out sorted.
  for (const auto& [p, d] : edges) {
    g.point_images_[point_fill[p]++] = d;
    g.image_points_[image_fill[d]++] = p;
  }
  return g;
}

std::span<const ImageId> VisibilityGraph::images_of_point(PointId p) const {
  if (p >= num_points()) return {};
  return {point_images_.data() + point_offsets_[p],
          point_images_.data() + point_offsets_[p + 1]};
}

std::span<const PointId> VisibilityGraph::points_of_image(ImageId d) const {
  if (d >= num_images()) return {};
  return {image_points_.data() + image_offsets_[d],
          image_points_.data() + image_offsets_[d + 1]};
}

bool VisibilityGraph::observes(ImageId d, PointId p) const {
  const auto images = images_of_point(p);
  return std::binary_search(images.begin(), images.end(), d);
}

std::vector<std::pair<PointId, ImageId>> VisibilityGraph::edges() const {
  std::vector<std::pair<PointId, ImageId>> out;
  out.reserve(num_edges());
  for (PointId p = 0; p < num_points(); ++p) {
    for (ImageId d : images_of_point(p)) out.emplace_back(p, d);
  }
  return out;
}

VisibilityGraph build_visibility_graph(std::span<const Point3D> points,
                                       std::span<const DatabaseImage> images) {
  std::vector<char> seen(points.size(), 0);
  for (const auto& pt : points) {
    if (pt.id >= points.size() || seen[pt.id]) {
      throw ValidationError("point ids must be unique and dense, got " +
                            std::to_string(pt.id));
    }
    if (!pt.position.allFinite()) {
      throw ValidationError("point " + std::to_string(pt.id) + " has a non-finite position");
    }
    seen[pt.id] = 1;
  }

  std::vector<char> image_seen(images.size(), 0);
  std::vector<std::pair<PointId, ImageId>> edges;
  for (const auto& img : images) {
    if (img.id >= images.size() || image_seen[img.id]) {
      throw ValidationError("image ids must be unique and dense, got " +
                            std::to_string(img.id));
    }
    image_seen[img.id] = 1;
    if (img.observed_points.empty()) {
      throw ValidationError("database image " + std::to_string(img.id) +
                            " observes no points");
    }
    std::vector<PointId> observed = img.observed_points;
    std::sort(observed.begin(), observed.end());
    if (std::adjacent_find(observed.begin(), observed.end()) != observed.end()) {
      throw ValidationError("database image " + std::to_string(img.id) +
                            " lists a point twice");
    }
    for (PointId p : observed) {
      if (p >= points.size()) {
        throw ValidationError("database image " + std::to_string(img.id) +
                              " references unknown point " + std::to_string(p));
      }
      edges.emplace_back(p, img.id);
    }
  }
  return VisibilityGraph::from_edges(points.size(), images.size(), std::move(edges));
}

}  // namespace cpfl
