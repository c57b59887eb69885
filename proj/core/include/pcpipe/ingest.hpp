#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pcpipe/format.hpp"

namespace pcpipe {

enum class SourceKind { kPlyAscii, kPlyBinaryLe, kObj, kXyzText, kKittiBin, kNpy };

SourceKind source_kind_from_name(const std::string& name);
const char* source_kind_name(SourceKind kind);

struct ParsedCloud {
  std::vector<std::array<float, 3>> points;
  std::vector<std::array<float, 3>> normals;  // empty when absent
  std::vector<std::array<float, 3>> colors;   // [0,1], empty when absent
  std::vector<float> intensity;               // empty when absent
  std::optional<std::int32_t> label;
  bool narrowed = false;  // true when float64 input was narrowed to float32
};

ParsedCloud parse_source(std::span<const std::uint8_t> bytes, SourceKind kind);

struct ConvertReport {
  std::uint64_t file_count = 0;
  std::uint64_t sample_count = 0;
  std::uint64_t input_bytes = 0;
  std::uint64_t output_bytes = 0;
  double ratio = 0.0;  // input_bytes / output_bytes
  bool float64_narrowed = false;
  std::vector<std::string> class_names;  // label id order

  json to_json() const;
};

struct ConvertResult {
  FileHeader header;
  ConvertReport report;
};

struct ConvertOptions {
  SourceKind kind = SourceKind::kXyzText;
  std::uint32_t slice_count = 1;
  std::uint32_t group_size = 256;
  std::optional<std::uint32_t> num_points;
  std::string stem = "dataset";
};

// Converts every parseable file under source_dir (lexicographic path order)
// into a .PcRecord dataset in out_dir. When the schema carries an int32
// "label" field, labels are 0-based ids of the sorted-unique parent
// directory names.
ConvertResult convert(const std::filesystem::path& source_dir,
                      const Schema& schema, const ConvertOptions& opts,
                      const std::filesystem::path& out_dir);

// Maps a parsed cloud onto a schema-conforming sample. Exposed for tests.
Sample cloud_to_sample(const ParsedCloud& cloud, const Schema& schema);

}  // namespace pcpipe
