#include "cpfl/embedding.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

namespace cpfl {

namespace {

double squared_distance(const double* a, const double* b, std::size_t dim) {
  double acc = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

std::size_t count_distinct_rows(const DescriptorMatrix& x) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(x.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  auto row_less = [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (x(a, c) != x(b, c)) return x(a, c) < x(b, c);
    }
    return false;
  };
  std::sort(order.begin(), order.end(), row_less);
  std::size_t distinct = order.empty() ? 0 : 1;
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (row_less(order[i - 1], order[i])) ++distinct;
  }
  return distinct;
}

// Assigns every row to its closest centroid, returns squared distances.
void assign_rows(const DescriptorMatrix& x, const DescriptorMatrix& centroids,
                 std::vector<std::uint32_t>& labels, std::vector<double>& dist2) {
  const Eigen::Index n = x.rows();
  const Eigen::Index k = centroids.rows();
  const Eigen::VectorXd centroid_norms = centroids.rowwise().squaredNorm();
  constexpr Eigen::Index kBlock = 2048;
  labels.resize(static_cast<std::size_t>(n));
  dist2.resize(static_cast<std::size_t>(n));
  Eigen::MatrixXd cross;
  for (Eigen::Index begin = 0; begin < n; begin += kBlock) {
    const Eigen::Index rows = std::min(kBlock, n - begin);
    cross.noalias() = x.middleRows(begin, rows) * centroids.transpose();
    for (Eigen::Index r = 0; r < rows; ++r) {
      const double row_norm = x.row(begin + r).squaredNorm();
      double best = std::numeric_limits<double>::infinity();
      Eigen::Index best_c = 0;
      for (Eigen::Index c = 0; c < k; ++c) {
        const double d = row_norm - 2.0 * cross(r, c) + centroid_norms(c);
        if (d < best) {
          best = d;
          best_c = c;
        }
      }
      labels[static_cast<std::size_t>(begin + r)] = static_cast<std::uint32_t>(best_c);
      dist2[static_cast<std::size_t>(begin + r)] = std::max(0.0, best);
    }
  }
}

}  // namespace

WordId Vocabulary::nearest_word(std::span<const double> descriptor) const {
  if (descriptor.size() != dim()) {
    throw std::invalid_argument("descriptor dimension " + std::to_string(descriptor.size()) +
                                " does not match vocabulary dimension " +
                                std::to_string(dim()));
  }
  double best = std::numeric_limits<double>::infinity();
  WordId best_word = 0;
  for (Eigen::Index w = 0; w < centroids.rows(); ++w) {
    const double d = squared_distance(descriptor.data(), centroids.row(w).data(), dim());
    if (d < best) {
      best = d;
      best_word = static_cast<WordId>(w);
    }
  }
  return best_word;
}

Vocabulary Vocabulary::quantized() const {
  Vocabulary out;
  out.centroids = centroids.cast<float>().cast<double>();
  return out;
}

Vocabulary train_vocabulary(const DescriptorMatrix& descriptors, std::size_t k,
                            std::uint64_t seed, const KMeansOptions& options) {
  if (k == 0) throw ValidationError("vocabulary size must be at least 1");
  if (descriptors.cols() == 0) throw ValidationError("descriptor dimension must be at least 1");
  if (!descriptors.allFinite()) throw ValidationError("training descriptors must be finite");
  const std::size_t distinct = count_distinct_rows(descriptors);
  if (distinct < k) {
    throw ValidationError("vocabulary training needs at least " + std::to_string(k) +
                          " distinct descriptors, got " + std::to_string(distinct));
  }

  const Eigen::Index n = descriptors.rows();
  const Eigen::Index dim = descriptors.cols();
  std::mt19937_64 rng(seed);

  // k-means++ seeding.
  DescriptorMatrix centroids(static_cast<Eigen::Index>(k), dim);
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centroids.row(0) = descriptors.row(first(rng));
  std::vector<double> nearest(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    nearest[static_cast<std::size_t>(i)] =
        squared_distance(descriptors.row(i).data(), centroids.row(0).data(),
                         static_cast<std::size_t>(dim));
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t c = 1; c < k; ++c) {
    const double total = std::accumulate(nearest.begin(), nearest.end(), 0.0);
    double target = unit(rng) * total;
    Eigen::Index pick = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double w = nearest[static_cast<std::size_t>(i)];
      if (w <= 0.0) continue;
      pick = i;
      target -= w;
      if (target < 0.0) break;
    }
    if (pick < 0) throw ValidationError("k-means++ seeding ran out of distinct descriptors");
    centroids.row(static_cast<Eigen::Index>(c)) = descriptors.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = squared_distance(descriptors.row(i).data(), descriptors.row(pick).data(),
                                        static_cast<std::size_t>(dim));
      auto& slot = nearest[static_cast<std::size_t>(i)];
      slot = std::min(slot, d);
    }
  }

  std::vector<std::uint32_t> labels;
  std::vector<std::uint32_t> previous;
  std::vector<double> dist2;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    assign_rows(descriptors, centroids, labels, dist2);
    if (labels == previous) break;
    previous = labels;

    DescriptorMatrix sums = DescriptorMatrix::Zero(static_cast<Eigen::Index>(k), dim);
    std::vector<std::size_t> counts(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto label = labels[static_cast<std::size_t>(i)];
      sums.row(label) += descriptors.row(i);
      ++counts[label];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        centroids.row(static_cast<Eigen::Index>(c)) =
            sums.row(static_cast<Eigen::Index>(c)) / static_cast<double>(counts[c]);
        continue;
      }
      // Empty cluster: move it onto the currently worst-fit descriptor.
      const auto worst = static_cast<Eigen::Index>(
          std::max_element(dist2.begin(), dist2.end()) - dist2.begin());
      centroids.row(static_cast<Eigen::Index>(c)) = descriptors.row(worst);
      dist2[static_cast<std::size_t>(worst)] = 0.0;
    }
  }

  Vocabulary vocab;
  vocab.centroids = std::move(centroids);
  return vocab;
}

Signature::Signature(int bits) : bits_(bits) {
  if (bits <= 0 || bits > kMaxBits || bits % 8 != 0) {
    throw std::invalid_argument("signature length must be a positive multiple of 8 up to 256, got " +
                                std::to_string(bits));
  }
}

void Signature::set(int i, bool value) {
  const std::uint64_t mask = std::uint64_t{1} << (i & 63);
  if (value) {
    words_[i >> 6] |= mask;
  } else {
    words_[i >> 6] &= ~mask;
  }
}

Signature Signature::complement() const {
  Signature out(bits_);
  for (int i = 0; i < bits_; ++i) out.set(i, !test(i));
  return out;
}

void Signature::to_bytes(std::span<std::uint8_t> out) const {
  for (std::size_t b = 0; b < num_bytes(); ++b) {
    out[b] = static_cast<std::uint8_t>(words_[b / 8] >> (8 * (b % 8)));
  }
}

Signature Signature::from_bytes(std::span<const std::uint8_t> bytes, int bits) {
  Signature out(bits);
  if (bytes.size() != out.num_bytes()) {
    throw std::invalid_argument("signature byte count does not match bit length");
  }
  for (std::size_t b = 0; b < bytes.size(); ++b) {
    out.words_[b / 8] |= static_cast<std::uint64_t>(bytes[b]) << (8 * (b % 8));
  }
  return out;
}

int hamming_distance(const Signature& a, const Signature& b) {
  if (a.bits() != b.bits()) {
    throw std::invalid_argument("hamming_distance: signature lengths differ (" +
                                std::to_string(a.bits()) + " vs " + std::to_string(b.bits()) + ")");
  }
  int count = 0;
  for (std::size_t i = 0; i < a.words().size(); ++i) {
    count += std::popcount(a.words()[i] ^ b.words()[i]);
  }
  return count;
}

Signature EmbeddingParams::binarize(std::span<const double> descriptor, WordId word) const {
  if (descriptor.size() != static_cast<std::size_t>(projection.cols())) {
    throw std::invalid_argument("descriptor dimension does not match the embedding");
  }
  if (word >= static_cast<WordId>(thresholds.rows())) {
    throw std::invalid_argument("word id " + std::to_string(word) + " out of range");
  }
  const Eigen::Map<const Eigen::VectorXd> x(descriptor.data(),
                                            static_cast<Eigen::Index>(descriptor.size()));
  const Eigen::VectorXd projected = projection * x;
  Signature sig(bits);
  for (int i = 0; i < bits; ++i) {
    if (projected(i) > thresholds(word, i)) sig.set(i);
  }
  return sig;
}

EmbeddingParams EmbeddingParams::quantized() const {
  EmbeddingParams out = *this;
  out.projection = projection.cast<float>().cast<double>();
  out.thresholds = thresholds.cast<float>().cast<double>();
  return out;
}

double median_of(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty set");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

DescriptorMatrix word_medians(const DescriptorMatrix& projected, std::span<const WordId> words,
                              std::size_t num_words, std::size_t* untrained) {
  if (words.size() != static_cast<std::size_t>(projected.rows())) {
    throw std::invalid_argument("one word assignment per projected descriptor required");
  }
  std::vector<std::vector<Eigen::Index>> members(num_words);
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (words[i] >= num_words) throw std::invalid_argument("word assignment out of range");
    members[words[i]].push_back(static_cast<Eigen::Index>(i));
  }
  DescriptorMatrix medians = DescriptorMatrix::Zero(static_cast<Eigen::Index>(num_words),
                                                    projected.cols());
  std::size_t empty = 0;
  std::vector<double> column;
  for (std::size_t w = 0; w < num_words; ++w) {
    if (members[w].empty()) {
      ++empty;
      continue;
    }
    for (Eigen::Index c = 0; c < projected.cols(); ++c) {
      column.clear();
      for (Eigen::Index r : members[w]) column.push_back(projected(r, c));
      medians(static_cast<Eigen::Index>(w), c) = median_of(column);
    }
  }
  if (untrained) *untrained = empty;
  return medians;
}

EmbeddingParams train_embedding(const DescriptorMatrix& descriptors,
                                std::span<const WordId> words, const Vocabulary& vocab,
                                int bits, std::uint64_t seed) {
  const Eigen::Index dim = descriptors.cols();
  if (static_cast<std::size_t>(dim) != vocab.dim()) {
    throw ValidationError("training descriptors and vocabulary disagree on dimension");
  }
  if (bits <= 0 || bits % 8 != 0 || bits > Signature::kMaxBits || bits > dim) {
    throw ValidationError("signature length " + std::to_string(bits) +
                          " must be a multiple of 8, at most 256 and at most D=" +
                          std::to_string(dim));
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd gaussian(dim, dim);
  for (Eigen::Index r = 0; r < dim; ++r) {
    for (Eigen::Index c = 0; c < dim; ++c) gaussian(r, c) = normal(rng);
  }
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(dim, dim);

  EmbeddingParams params;
  params.bits = bits;
  params.seed = seed;
  params.projection = q.topRows(bits);
  const DescriptorMatrix projected = descriptors * params.projection.transpose();
  params.thresholds = word_medians(projected, words, vocab.size(), &params.untrained_words);
  return params;
}

EncodedDescriptor encode_query(std::span<const double> descriptor, const Vocabulary& vocab,
                               const EmbeddingParams& embedding) {
  EncodedDescriptor out;
  out.word = vocab.nearest_word(descriptor);
  out.signature = embedding.binarize(descriptor, out.word);
  return out;
}

std::span<const std::uint32_t> CompressedModel::posting(WordId word) const {
  if (static_cast<std::size_t>(word) + 1 >= index_offsets_.size()) return {};
  return {index_entries_.data() + index_offsets_[word],
          index_entries_.data() + index_offsets_[word + 1]};
}

void CompressedModel::build_index() {
  std::size_t num_words = vocab.size();
  for (const auto& e : entries) num_words = std::max<std::size_t>(num_words, e.word_id + 1);
  index_offsets_.assign(num_words + 1, 0);
  for (const auto& e : entries) ++index_offsets_[e.word_id + 1];
  for (std::size_t w = 0; w < num_words; ++w) index_offsets_[w + 1] += index_offsets_[w];
  index_entries_.resize(entries.size());
  std::vector<std::uint32_t> fill(index_offsets_.begin(), index_offsets_.end() - 1);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    index_entries_[fill[entries[i].word_id]++] = static_cast<std::uint32_t>(i);
  }
}

std::vector<double> integer_mean(const DescriptorMatrix& descriptors,
                                 std::span<const std::size_t> rows) {
  std::vector<double> mean(static_cast<std::size_t>(descriptors.cols()), 0.0);
  for (std::size_t r : rows) {
    for (Eigen::Index c = 0; c < descriptors.cols(); ++c) {
      mean[static_cast<std::size_t>(c)] += descriptors(static_cast<Eigen::Index>(r), c);
    }
  }
  for (double& v : mean) v = std::floor(v / static_cast<double>(rows.size()) + 0.5);
  return mean;
}

CompressedModel compress_model(std::span<const RawPoint> points, VisibilityGraph graph,
                               Vocabulary vocab, EmbeddingParams embedding) {
  if (graph.num_points() != points.size()) {
    throw ValidationError("visibility graph and point list disagree on the number of points");
  }
  CompressedModel model;
  model.points.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const RawPoint& raw = points[i];
    if (raw.point.id != i) throw ValidationError("raw points must be ordered by dense id");
    const Eigen::Index n = raw.descriptors.rows();
    if (n == 0) {
      throw ValidationError("point " + std::to_string(raw.point.id) + " has no descriptors");
    }
    if (static_cast<std::size_t>(raw.descriptors.cols()) != vocab.dim()) {
      throw ValidationError("point " + std::to_string(raw.point.id) +
                            " descriptor dimension does not match the vocabulary");
    }
    if (!raw.words.empty() && raw.words.size() != static_cast<std::size_t>(n)) {
      throw ValidationError("point " + std::to_string(raw.point.id) +
                            " has a word assignment count mismatch");
    }
    model.points.push_back(raw.point);

    std::vector<std::pair<WordId, std::size_t>> by_word;
    by_word.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index r = 0; r < n; ++r) {
      const WordId w = raw.words.empty()
                           ? vocab.nearest_word({raw.descriptors.row(r).data(), vocab.dim()})
                           : raw.words[static_cast<std::size_t>(r)];
      by_word.emplace_back(w, static_cast<std::size_t>(r));
    }
    std::sort(by_word.begin(), by_word.end());
    std::vector<std::size_t> rows;
    for (std::size_t b = 0; b < by_word.size();) {
      const WordId w = by_word[b].first;
      rows.clear();
      for (; b < by_word.size() && by_word[b].first == w; ++b) rows.push_back(by_word[b].second);
      const std::vector<double> mean = integer_mean(raw.descriptors, rows);
      model.entries.push_back({raw.point.id, w, embedding.binarize(mean, w)});
    }
  }
  model.graph = std::move(graph);
  model.vocab = std::move(vocab);
  model.embedding = std::move(embedding);
  model.build_index();
  return model;
}

}  // namespace cpfl
