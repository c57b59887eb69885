#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "pcpipe/errors.hpp"

namespace pcpipe {

using json = nlohmann::ordered_json;

enum class FieldKind { kBytes, kInt32, kInt64, kFloat32, kFloat64, kString };

const char* field_kind_name(FieldKind kind);
FieldKind field_kind_from_name(const std::string& name);

struct FieldType {
  FieldKind kind = FieldKind::kBytes;
  std::vector<std::uint32_t> shape;  // empty = scalar

  bool operator==(const FieldType&) const = default;
};

// Ordered field map. Order matters: it fixes the serialization layout.
struct Schema {
  std::vector<std::pair<std::string, FieldType>> fields;

  const FieldType* find(const std::string& name) const;
  json to_json() const;
  static Schema from_json(const json& j);
  bool operator==(const Schema&) const = default;
};

// Throws DuplicateField / EmptySchema / BadShape.
void validate_schema(const Schema& schema);

using Blob = std::vector<std::uint8_t>;
using Value = std::variant<Blob, std::vector<std::int32_t>,
                           std::vector<std::int64_t>, std::vector<float>,
                           std::vector<double>, std::string>;

FieldKind value_kind(const Value& v);

struct Sample {
  std::map<std::string, Value> values;

  bool operator==(const Sample&) const = default;
};

// Throws SchemaMismatch when the sample does not conform to the schema.
void validate_sample(const Sample& sample, const Schema& schema);

// ---------------------------------------------------------------------------
// Pages

constexpr std::uint8_t kFlagOuterLz4 = 1 << 0;
constexpr std::uint8_t kFlagInnerDelta = 1 << 1;
constexpr std::uint8_t kFlagStoredRaw = 1 << 2;

struct EncodedPage {
  std::uint8_t flags = 0;
  std::uint64_t raw_len = 0;
  Blob payload;
  std::uint32_t checksum = 0;  // CRC32 of payload

  std::size_t serialized_size() const;
  void serialize_to(Blob& out) const;
  static EncodedPage deserialize(std::span<const std::uint8_t> bytes);
};

struct ColumnRange {
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
  std::uint32_t element_width = 4;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

// XOR of consecutive element bit patterns; element 0 kept as-is.
Blob xor_delta_encode(std::span<const std::uint8_t> column,
                      std::uint32_t element_width);
Blob xor_delta_decode(std::span<const std::uint8_t> encoded,
                      std::uint32_t element_width);

EncodedPage encode_block_page(std::span<const std::uint8_t> raw,
                              std::span<const ColumnRange> coordinate_columns);
Blob decode_block_page(const EncodedPage& page,
                       std::span<const ColumnRange> coordinate_columns);

// Scalar pages get the outer LZ4 layer only.
EncodedPage encode_scalar_page(std::span<const std::uint8_t> raw);
Blob decode_scalar_page(const EncodedPage& page);

// ---------------------------------------------------------------------------
// File header

struct GroupDesc {
  std::uint32_t group_id = 0;  // local to its slice
  std::uint32_t slice = 0;
  std::uint64_t first_sample = 0;
  std::uint32_t sample_count = 0;
  // offsets are relative to the slice's data area (after the header in the
  // primary slice, from byte 0 in continuation slices)
  std::uint64_t scalar_page_offset = 0;
  std::uint64_t scalar_page_length = 0;
  std::uint64_t block_page_offset = 0;
  std::uint64_t block_page_length = 0;
  // per-sample [blob_start, blob_end) within the decoded block page, plus
  // the per-bytes-field split of each blob
  std::vector<std::array<std::uint64_t, 2>> blob_ranges;
  std::vector<std::vector<std::uint64_t>> blob_lens;

  bool operator==(const GroupDesc&) const = default;
};

struct FileHeader {
  static constexpr std::array<char, 4> kMagic = {'P', 'C', 'R', 'C'};
  static constexpr std::uint16_t kVersion = 1;

  std::uint16_t version = kVersion;
  std::uint64_t total_size_bytes = 0;  // sum over all slice files
  std::uint32_t scalar_page_size_bytes = 0;  // largest encoded scalar page
  std::uint32_t block_page_size_bytes = 0;   // largest encoded block page
  Schema schema;
  std::vector<std::string> slice_paths;  // relative to the dataset directory
  std::vector<GroupDesc> groups;

  std::uint64_t sample_count() const;
  std::uint64_t header_byte_size() const;  // magic+version+length+json
  json to_json() const;
  static FileHeader from_json(const json& j);
  void check_invariants() const;  // throws CorruptHeader
  bool operator==(const FileHeader&) const = default;
};

// ---------------------------------------------------------------------------
// Dataset writer / reader

struct WriteOptions {
  std::uint32_t slice_count = 1;
  std::uint32_t group_size = 256;
  std::string stem = "dataset";
};

// Writes the sample stream to out_dir as <stem>.pcrecord[, <stem>.pcrecordN].
FileHeader write_dataset(const std::vector<Sample>& samples,
                         const Schema& schema, const WriteOptions& opts,
                         const std::filesystem::path& out_dir);

FileHeader read_header(const std::filesystem::path& path);

struct MetadataEntry;  // metadata.hpp

class DatasetReader {
 public:
  // primary: the <stem>.pcrecord file carrying the header
  explicit DatasetReader(const std::filesystem::path& primary,
                         std::size_t group_cache_capacity = 4);
  // header known out-of-band (streaming); dir holds the slice files
  DatasetReader(FileHeader header, std::filesystem::path dir,
                std::size_t group_cache_capacity = 4);

  const FileHeader& header() const { return header_; }

  // Decodes at most one scalar page and one block page. Thread-safe.
  Sample read_sample(const MetadataEntry& entry) const;

  std::uint64_t page_decode_count() const;

 private:
  struct DecodedGroup {
    Blob scalar;
    Blob block;
  };
  const GroupDesc& group_for(std::uint32_t slice, std::uint32_t group_id) const;
  std::shared_ptr<const DecodedGroup> load_group(const GroupDesc& g) const;

  FileHeader header_;
  std::filesystem::path dir_;
  std::size_t cache_capacity_;
  // (slice, group_id) -> decoded pages, LRU
  mutable std::mutex mu_;
  mutable std::list<std::pair<std::uint64_t, std::shared_ptr<const DecodedGroup>>> cache_;
  mutable std::atomic<std::uint64_t> page_decodes_{0};
  std::vector<std::vector<const GroupDesc*>> by_slice_;
};

// Serializes one sample's scalar-page record (used by writer and tests).
void append_scalar_record(Blob& out, const Sample& sample, const Schema& schema,
                          std::uint64_t blob_start, std::uint64_t blob_end,
                          const std::vector<std::uint64_t>& blob_lens);

}  // namespace pcpipe
