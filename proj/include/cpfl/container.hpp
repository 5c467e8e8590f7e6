#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cpfl/embedding.hpp"

namespace cpfl {

inline constexpr std::uint32_t kContainerVersion = 1;

/// Little-endian binary container: "CPFL", version, then the vocabulary,
/// embedding, points, entries and visibility sections, each prefixed by its
/// 64-bit byte length. Real matrices are stored as 32-bit floats.
std::vector<std::uint8_t> serialize_model(const CompressedModel& model);
CompressedModel deserialize_model(const std::vector<std::uint8_t>& bytes);

void save_model(const CompressedModel& model, const std::string& path);
CompressedModel load_model(const std::string& path);

struct MemoryReport {
  std::size_t bits = 0;
  std::size_t num_entries = 0;
  std::size_t signature_bytes_per_entry = 0;
  std::size_t signature_payload = 0;  // entries * B / 8
  std::size_t entry_table = 0;        // entries * (4 + 4 + B / 8)
  std::size_t baseline_entry_table = 0;  // entries * (4 + 4 + 128)
  std::size_t points_section = 0;
  std::size_t visibility_section = 0;
  std::size_t vocabulary_section = 0;
  std::size_t embedding_section = 0;
  double entry_reduction = 0.0;  // baseline / actual entry table, 0 when empty

  std::size_t total() const {
    return entry_table + points_section + visibility_section + vocabulary_section +
           embedding_section;
  }
};

MemoryReport memory_report(const CompressedModel& model);

void print_memory_report(std::ostream& os, const MemoryReport& report);

}  // namespace cpfl
