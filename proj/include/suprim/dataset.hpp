#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "suprim/scenario.hpp"

namespace suprim::scenario {

inline constexpr int kDatasetFormatVersion = 1;

enum class SplitTag : std::uint8_t { Train, Test };
const char* to_string(SplitTag tag);

struct DatasetRecord {
  Scenario scenario;
  SplitTag split = SplitTag::Train;

  friend bool operator==(const DatasetRecord&, const DatasetRecord&) = default;
};

struct Dataset {
  GenConfig gen_config;
  std::uint64_t seed_begin = 0;
  std::uint64_t seed_end = 0;  // exclusive
  std::vector<DatasetRecord> records;

  /// FNV-1a of the serialized file contents; filled by save and load.
  std::uint64_t content_hash = 0;
};

/// One header line {format_version, gen_config, seed_range}, then one JSON
/// record per line. Throws IoError.
void save_dataset(const std::filesystem::path& path, Dataset& ds);

/// Throws IoError and FormatVersionMismatch.
Dataset load_dataset(const std::filesystem::path& path);

/// Generates seeds [seed_begin, seed_end); records whose seed index falls in
/// the last `test_count` positions are tagged Test. `labels`, when given,
/// receives the default-evaluator labels of every record.
Dataset generate_dataset(std::uint64_t seed_begin, std::size_t count, std::size_t test_count, const GenConfig& cfg,
                         const vocab::TrajectoryVocabulary& vocab, std::vector<eval::LabelSet>* labels = nullptr);

}  // namespace suprim::scenario
