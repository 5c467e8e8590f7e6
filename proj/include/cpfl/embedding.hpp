#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cpfl/scene_model.hpp"
#include "cpfl/types.hpp"

namespace cpfl {

/// Visual vocabulary: k centroids of dimension D, one per row.
struct Vocabulary {
  DescriptorMatrix centroids;

  std::size_t size() const { return static_cast<std::size_t>(centroids.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(centroids.cols()); }

  /// Nearest centroid by Euclidean distance; ties go to the lowest word id.
  WordId nearest_word(std::span<const double> descriptor) const;

  /// Copy with every centroid rounded to 32-bit float, the container precision.
  Vocabulary quantized() const;
};

struct KMeansOptions {
  int max_iterations = 50;
};

/// Lloyd k-means with k-means++ seeding. Throws ValidationError when there are
/// fewer than k distinct descriptors.
Vocabulary train_vocabulary(const DescriptorMatrix& descriptors, std::size_t k,
                            std::uint64_t seed, const KMeansOptions& options = {});

/// Packed bit string of up to 256 bits. Bit i lives in byte i / 8 at position
/// i % 8.
class Signature {
 public:
  static constexpr int kMaxBits = 256;

  Signature() = default;
  explicit Signature(int bits);

  int bits() const { return bits_; }
  std::size_t num_bytes() const { return static_cast<std::size_t>(bits_) / 8; }

  bool test(int i) const { return (words_[i >> 6] >> (i & 63)) & 1u; }
  void set(int i, bool value = true);

  Signature complement() const;

  void to_bytes(std::span<std::uint8_t> out) const;
  static Signature from_bytes(std::span<const std::uint8_t> bytes, int bits);

  const std::array<std::uint64_t, 4>& words() const { return words_; }

  friend bool operator==(const Signature&, const Signature&) = default;

 private:
  std::array<std::uint64_t, 4> words_{};
  int bits_ = 0;
};

/// Number of differing bits. Signatures of different length are a contract
/// violation (std::invalid_argument).
int hamming_distance(const Signature& a, const Signature& b);

/// Hamming Embedding parameters: an orthonormal projection plus per-word
/// median thresholds in the projected space.
struct EmbeddingParams {
  int bits = 0;
  std::uint64_t seed = 0;
  DescriptorMatrix projection;  // B x D, orthonormal rows
  DescriptorMatrix thresholds;  // k x B
  std::size_t untrained_words = 0;

  Signature binarize(std::span<const double> descriptor, WordId word) const;
  EmbeddingParams quantized() const;
};

/// Median of each projected dimension per word. Words without samples keep a
/// zero threshold and are counted in *untrained.
DescriptorMatrix word_medians(const DescriptorMatrix& projected,
                              std::span<const WordId> words, std::size_t num_words,
                              std::size_t* untrained = nullptr);

/// Median with the even-count convention of averaging the two middle values.
double median_of(std::vector<double> values);

EmbeddingParams train_embedding(const DescriptorMatrix& descriptors,
                                std::span<const WordId> words, const Vocabulary& vocab,
                                int bits, std::uint64_t seed);

struct EncodedDescriptor {
  WordId word = 0;
  Signature signature;
};

EncodedDescriptor encode_query(std::span<const double> descriptor, const Vocabulary& vocab,
                               const EmbeddingParams& embedding);

/// One (point, visual word) record of the compressed map.
struct ModelEntry {
  PointId point_id = 0;
  WordId word_id = 0;
  Signature signature;
};

/// A model point together with its raw descriptors. When `words` is empty the
/// descriptors are assigned to their nearest word during compression.
struct RawPoint {
  Point3D point;
  DescriptorMatrix descriptors;
  std::vector<WordId> words;
};

class CompressedModel {
 public:
  std::vector<Point3D> points;
  std::vector<ModelEntry> entries;  // sorted by (point_id, word_id)
  VisibilityGraph graph;
  Vocabulary vocab;
  EmbeddingParams embedding;

  /// Entry indices for one visual word; empty for unknown words.
  std::span<const std::uint32_t> posting(WordId word) const;

  /// Rebuilds the inverted index from `entries`. Must be called after the
  /// entries change.
  void build_index();

 private:
  std::vector<std::uint32_t> index_offsets_;
  std::vector<std::uint32_t> index_entries_;
};

/// Integer mean per (point, word) rounded half-up, then binarized.
std::vector<double> integer_mean(const DescriptorMatrix& descriptors,
                                 std::span<const std::size_t> rows);

CompressedModel compress_model(std::span<const RawPoint> points, VisibilityGraph graph,
                               Vocabulary vocab, EmbeddingParams embedding);

}  // namespace cpfl
