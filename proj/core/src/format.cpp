#include "pcpipe/format.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <fstream>

#include "pcpipe/lz4_block.hpp"
#include "pcpipe/metadata.hpp"

namespace pcpipe {

namespace {

template <typename T>
void append_pod(Blob& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T read_pod(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  if (pos + sizeof(T) > bytes.size())
    fail(Errc::kCorruptPage, "record truncated");
  T v;
  std::memcpy(&v, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

std::uint64_t element_count(const FieldType& t) {
  std::uint64_t n = 1;
  for (auto d : t.shape) n *= d;
  return n;
}

}  // namespace

const char* field_kind_name(FieldKind kind) {
  switch (kind) {
    case FieldKind::kBytes: return "bytes";
    case FieldKind::kInt32: return "int32";
    case FieldKind::kInt64: return "int64";
    case FieldKind::kFloat32: return "float32";
    case FieldKind::kFloat64: return "float64";
    case FieldKind::kString: return "string";
  }
  return "?";
}

FieldKind field_kind_from_name(const std::string& name) {
  if (name == "bytes") return FieldKind::kBytes;
  if (name == "int32") return FieldKind::kInt32;
  if (name == "int64") return FieldKind::kInt64;
  if (name == "float32") return FieldKind::kFloat32;
  if (name == "float64") return FieldKind::kFloat64;
  if (name == "string") return FieldKind::kString;
  fail(Errc::kCorruptHeader, "unknown field type '" + name + "'");
}

const FieldType* Schema::find(const std::string& name) const {
  for (const auto& [n, t] : fields)
    if (n == name) return &t;
  return nullptr;
}

json Schema::to_json() const {
  json f = json::object();
  for (const auto& [name, t] : fields) {
    json ft;
    ft["type"] = field_kind_name(t.kind);
    if (!t.shape.empty()) ft["shape"] = t.shape;
    f[name] = ft;
  }
  return json{{"fields", f}};
}

Schema Schema::from_json(const json& j) {
  Schema s;
  if (!j.contains("fields") || !j["fields"].is_object())
    fail(Errc::kCorruptHeader, "schema missing fields");
  for (const auto& [name, ft] : j["fields"].items()) {
    FieldType t;
    t.kind = field_kind_from_name(ft.at("type").get<std::string>());
    if (ft.contains("shape")) t.shape = ft["shape"].get<std::vector<std::uint32_t>>();
    s.fields.emplace_back(name, t);
  }
  return s;
}

void validate_schema(const Schema& schema) {
  if (schema.fields.empty()) fail(Errc::kEmptySchema, "schema has no fields");
  for (std::size_t i = 0; i < schema.fields.size(); ++i) {
    const auto& [name, t] = schema.fields[i];
    if (name.empty()) fail(Errc::kBadShape, "empty field name");
    for (char c : name)
      if (static_cast<unsigned char>(c) > 127)
        fail(Errc::kBadShape, "non-ASCII field name");
    for (std::size_t k = 0; k < i; ++k)
      if (schema.fields[k].first == name)
        fail(Errc::kDuplicateField, "field '" + name + "' declared twice");
    for (auto d : t.shape)
      if (d == 0) fail(Errc::kBadShape, "zero dimension in '" + name + "'");
    if (t.kind == FieldKind::kString && !t.shape.empty())
      fail(Errc::kBadShape, "string field '" + name + "' must be scalar");
  }
}

FieldKind value_kind(const Value& v) {
  switch (v.index()) {
    case 0: return FieldKind::kBytes;
    case 1: return FieldKind::kInt32;
    case 2: return FieldKind::kInt64;
    case 3: return FieldKind::kFloat32;
    case 4: return FieldKind::kFloat64;
    default: return FieldKind::kString;
  }
}

void validate_sample(const Sample& sample, const Schema& schema) {
  if (sample.values.size() != schema.fields.size())
    fail(Errc::kSchemaMismatch, "field count mismatch");
  for (const auto& [name, t] : schema.fields) {
    auto it = sample.values.find(name);
    if (it == sample.values.end())
      fail(Errc::kSchemaMismatch, "missing field '" + name + "'");
    if (value_kind(it->second) != t.kind)
      fail(Errc::kSchemaMismatch, "type mismatch for '" + name + "'");
    const std::uint64_t n = element_count(t);
    switch (t.kind) {
      case FieldKind::kBytes: {
        const auto& b = std::get<Blob>(it->second);
        if (!t.shape.empty() && b.size() % n != 0)
          fail(Errc::kSchemaMismatch, "blob length of '" + name +
                                          "' not divisible by shape");
        break;
      }
      case FieldKind::kInt32:
        if (std::get<std::vector<std::int32_t>>(it->second).size() != n)
          fail(Errc::kSchemaMismatch, "element count mismatch for '" + name + "'");
        break;
      case FieldKind::kInt64:
        if (std::get<std::vector<std::int64_t>>(it->second).size() != n)
          fail(Errc::kSchemaMismatch, "element count mismatch for '" + name + "'");
        break;
      case FieldKind::kFloat32:
        if (std::get<std::vector<float>>(it->second).size() != n)
          fail(Errc::kSchemaMismatch, "element count mismatch for '" + name + "'");
        break;
      case FieldKind::kFloat64:
        if (std::get<std::vector<double>>(it->second).size() != n)
          fail(Errc::kSchemaMismatch, "element count mismatch for '" + name + "'");
        break;
      case FieldKind::kString:
        break;
    }
  }
}

// ---------------------------------------------------------------------------

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
}

Blob xor_delta_encode(std::span<const std::uint8_t> column,
                      std::uint32_t element_width) {
  if (element_width != 4 && element_width != 8)
    fail(Errc::kBadAlignment, "element width must be 4 or 8");
  if (column.size() % element_width != 0)
    fail(Errc::kBadAlignment, "column length not aligned");
  Blob out(column.begin(), column.end());
  for (std::size_t i = out.size(); i >= 2 * element_width; i -= element_width) {
    const std::size_t at = i - element_width;
    for (std::size_t b = 0; b < element_width; ++b)
      out[at + b] ^= column[at - element_width + b];
  }
  return out;
}

Blob xor_delta_decode(std::span<const std::uint8_t> encoded,
                      std::uint32_t element_width) {
  if (element_width != 4 && element_width != 8)
    fail(Errc::kBadAlignment, "element width must be 4 or 8");
  if (encoded.size() % element_width != 0)
    fail(Errc::kBadAlignment, "column length not aligned");
  Blob out(encoded.begin(), encoded.end());
  for (std::size_t i = element_width; i + element_width <= out.size();
       i += element_width)
    for (std::size_t b = 0; b < element_width; ++b)
      out[i + b] ^= out[i - element_width + b];
  return out;
}

namespace {

void check_columns(std::size_t raw_size, std::span<const ColumnRange> cols) {
  for (const auto& c : cols) {
    if (c.offset + c.length > raw_size)
      fail(Errc::kColumnOutOfRange, "column range outside page");
    if ((c.element_width != 4 && c.element_width != 8) ||
        c.length % c.element_width != 0)
      fail(Errc::kBadAlignment, "bad column alignment");
  }
}

EncodedPage finish_page(Blob post_inner, std::uint64_t raw_len,
                        std::uint8_t flags) {
  EncodedPage page;
  page.raw_len = raw_len;
  Blob compressed = lz4::compress(post_inner);
  if (compressed.size() < post_inner.size()) {
    page.flags = flags | kFlagOuterLz4;
    page.payload = std::move(compressed);
  } else {
    page.flags = flags | kFlagStoredRaw;
    page.payload = std::move(post_inner);
  }
  page.checksum = crc32_of(page.payload);
  return page;
}

}  // namespace

EncodedPage encode_block_page(std::span<const std::uint8_t> raw,
                              std::span<const ColumnRange> coordinate_columns) {
  check_columns(raw.size(), coordinate_columns);
  Blob work(raw.begin(), raw.end());
  std::uint8_t flags = 0;
  if (!coordinate_columns.empty()) {
    flags |= kFlagInnerDelta;
    for (const auto& c : coordinate_columns) {
      Blob enc = xor_delta_encode(
          std::span(raw.data() + c.offset, c.length), c.element_width);
      std::copy(enc.begin(), enc.end(), work.begin() + c.offset);
    }
  }
  return finish_page(std::move(work), raw.size(), flags);
}

Blob decode_block_page(const EncodedPage& page,
                       std::span<const ColumnRange> coordinate_columns) {
  if (crc32_of(page.payload) != page.checksum)
    fail(Errc::kChecksumMismatch, "block page checksum");
  Blob post_inner;
  if (page.flags & kFlagOuterLz4) {
    post_inner = lz4::decompress(page.payload, page.raw_len);
  } else if (page.flags & kFlagStoredRaw) {
    if (page.payload.size() != page.raw_len)
      fail(Errc::kCorruptPage, "stored page length mismatch");
    post_inner = page.payload;
  } else {
    fail(Errc::kCorruptPage, "no storage flag set");
  }
  if (page.flags & kFlagInnerDelta) {
    check_columns(post_inner.size(), coordinate_columns);
    for (const auto& c : coordinate_columns) {
      Blob dec = xor_delta_decode(
          std::span(post_inner.data() + c.offset, c.length), c.element_width);
      std::copy(dec.begin(), dec.end(), post_inner.begin() + c.offset);
    }
  }
  return post_inner;
}

EncodedPage encode_scalar_page(std::span<const std::uint8_t> raw) {
  return finish_page(Blob(raw.begin(), raw.end()), raw.size(), 0);
}

Blob decode_scalar_page(const EncodedPage& page) {
  return decode_block_page(page, {});
}

std::size_t EncodedPage::serialized_size() const {
  return 1 + 8 + 8 + 4 + payload.size();
}

void EncodedPage::serialize_to(Blob& out) const {
  append_pod(out, flags);
  append_pod(out, raw_len);
  append_pod(out, static_cast<std::uint64_t>(payload.size()));
  append_pod(out, checksum);
  out.insert(out.end(), payload.begin(), payload.end());
}

EncodedPage EncodedPage::deserialize(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  EncodedPage p;
  p.flags = read_pod<std::uint8_t>(bytes, pos);
  p.raw_len = read_pod<std::uint64_t>(bytes, pos);
  const auto payload_len = read_pod<std::uint64_t>(bytes, pos);
  p.checksum = read_pod<std::uint32_t>(bytes, pos);
  if (pos + payload_len > bytes.size())
    fail(Errc::kCorruptPage, "page payload truncated");
  p.payload.assign(bytes.begin() + pos, bytes.begin() + pos + payload_len);
  return p;
}

// ---------------------------------------------------------------------------

std::uint64_t FileHeader::sample_count() const {
  std::uint64_t n = 0;
  for (const auto& g : groups) n += g.sample_count;
  return n;
}

std::uint64_t FileHeader::header_byte_size() const {
  return 4 + 2 + 4 + to_json().dump().size();
}

json FileHeader::to_json() const {
  json groups_j = json::array();
  for (const auto& g : groups) {
    groups_j.push_back(json{{"group_id", g.group_id},
                            {"slice", g.slice},
                            {"first_sample", g.first_sample},
                            {"sample_count", g.sample_count},
                            {"scalar_page", {g.scalar_page_offset, g.scalar_page_length}},
                            {"block_page", {g.block_page_offset, g.block_page_length}},
                            {"blobs", g.blob_ranges},
                            {"blob_lens", g.blob_lens}});
  }
  return json{{"version", version},
              {"total_size_bytes", total_size_bytes},
              {"scalar_page_size_bytes", scalar_page_size_bytes},
              {"block_page_size_bytes", block_page_size_bytes},
              {"schema", schema.to_json()},
              {"slice_paths", slice_paths},
              {"group_index", groups_j}};
}

FileHeader FileHeader::from_json(const json& j) {
  FileHeader h;
  try {
    h.version = j.at("version").get<std::uint16_t>();
    h.total_size_bytes = j.at("total_size_bytes").get<std::uint64_t>();
    h.scalar_page_size_bytes = j.at("scalar_page_size_bytes").get<std::uint32_t>();
    h.block_page_size_bytes = j.at("block_page_size_bytes").get<std::uint32_t>();
    h.schema = Schema::from_json(j.at("schema"));
    h.slice_paths = j.at("slice_paths").get<std::vector<std::string>>();
    for (const auto& gj : j.at("group_index")) {
      GroupDesc g;
      g.group_id = gj.at("group_id").get<std::uint32_t>();
      g.slice = gj.at("slice").get<std::uint32_t>();
      g.first_sample = gj.at("first_sample").get<std::uint64_t>();
      g.sample_count = gj.at("sample_count").get<std::uint32_t>();
      g.scalar_page_offset = gj.at("scalar_page")[0].get<std::uint64_t>();
      g.scalar_page_length = gj.at("scalar_page")[1].get<std::uint64_t>();
      g.block_page_offset = gj.at("block_page")[0].get<std::uint64_t>();
      g.block_page_length = gj.at("block_page")[1].get<std::uint64_t>();
      g.blob_ranges = gj.at("blobs").get<std::vector<std::array<std::uint64_t, 2>>>();
      g.blob_lens = gj.at("blob_lens").get<std::vector<std::vector<std::uint64_t>>>();
      h.groups.push_back(std::move(g));
    }
  } catch (const json::exception& e) {
    fail(Errc::kCorruptHeader, e.what());
  }
  h.check_invariants();
  return h;
}

void FileHeader::check_invariants() const {
  if (slice_paths.empty()) fail(Errc::kCorruptHeader, "no slice paths");
  validate_schema(schema);
  for (const auto& g : groups) {
    if (g.slice >= slice_paths.size())
      fail(Errc::kCorruptHeader, "group slice out of range");
    if (g.blob_ranges.size() != g.sample_count ||
        g.blob_lens.size() != g.sample_count)
      fail(Errc::kCorruptHeader, "blob metadata count mismatch");
    for (const auto& [s, e] : g.blob_ranges)
      if (s > e) fail(Errc::kCorruptHeader, "blob range inverted");
  }
}

// ---------------------------------------------------------------------------
// Scalar record layout per sample:
//   blob_start u64, blob_end u64, n_bytes_fields u32, n x u64 blob lens,
//   then each non-bytes field in schema order (strings length-prefixed).

void append_scalar_record(Blob& out, const Sample& sample, const Schema& schema,
                          std::uint64_t blob_start, std::uint64_t blob_end,
                          const std::vector<std::uint64_t>& blob_lens) {
  append_pod(out, blob_start);
  append_pod(out, blob_end);
  append_pod(out, static_cast<std::uint32_t>(blob_lens.size()));
  for (auto l : blob_lens) append_pod(out, l);
  for (const auto& [name, t] : schema.fields) {
    const Value& v = sample.values.at(name);
    switch (t.kind) {
      case FieldKind::kBytes:
        break;  // lives in the block page
      case FieldKind::kInt32:
        for (auto x : std::get<std::vector<std::int32_t>>(v)) append_pod(out, x);
        break;
      case FieldKind::kInt64:
        for (auto x : std::get<std::vector<std::int64_t>>(v)) append_pod(out, x);
        break;
      case FieldKind::kFloat32:
        for (auto x : std::get<std::vector<float>>(v)) append_pod(out, x);
        break;
      case FieldKind::kFloat64:
        for (auto x : std::get<std::vector<double>>(v)) append_pod(out, x);
        break;
      case FieldKind::kString: {
        const auto& s = std::get<std::string>(v);
        append_pod(out, static_cast<std::uint32_t>(s.size()));
        out.insert(out.end(), s.begin(), s.end());
        break;
      }
    }
  }
}

namespace {

struct ScalarRecord {
  std::uint64_t blob_start = 0;
  std::uint64_t blob_end = 0;
  std::vector<std::uint64_t> blob_lens;
  Sample partial;  // non-bytes fields only
};

ScalarRecord parse_scalar_record(std::span<const std::uint8_t> page,
                                 std::size_t& pos, const Schema& schema) {
  ScalarRecord r;
  r.blob_start = read_pod<std::uint64_t>(page, pos);
  r.blob_end = read_pod<std::uint64_t>(page, pos);
  const auto n = read_pod<std::uint32_t>(page, pos);
  r.blob_lens.resize(n);
  for (auto& l : r.blob_lens) l = read_pod<std::uint64_t>(page, pos);
  for (const auto& [name, t] : schema.fields) {
    const std::uint64_t count = element_count(t);
    switch (t.kind) {
      case FieldKind::kBytes:
        break;
      case FieldKind::kInt32: {
        std::vector<std::int32_t> v(count);
        for (auto& x : v) x = read_pod<std::int32_t>(page, pos);
        r.partial.values[name] = std::move(v);
        break;
      }
      case FieldKind::kInt64: {
        std::vector<std::int64_t> v(count);
        for (auto& x : v) x = read_pod<std::int64_t>(page, pos);
        r.partial.values[name] = std::move(v);
        break;
      }
      case FieldKind::kFloat32: {
        std::vector<float> v(count);
        for (auto& x : v) x = read_pod<float>(page, pos);
        r.partial.values[name] = std::move(v);
        break;
      }
      case FieldKind::kFloat64: {
        std::vector<double> v(count);
        for (auto& x : v) x = read_pod<double>(page, pos);
        r.partial.values[name] = std::move(v);
        break;
      }
      case FieldKind::kString: {
        const auto len = read_pod<std::uint32_t>(page, pos);
        if (pos + len > page.size()) fail(Errc::kCorruptPage, "string truncated");
        r.partial.values[name].emplace<std::string>(
            reinterpret_cast<const char*>(page.data() + pos), len);
        pos += len;
        break;
      }
    }
  }
  return r;
}

std::vector<std::string> bytes_field_names(const Schema& schema) {
  std::vector<std::string> names;
  for (const auto& [name, t] : schema.fields)
    if (t.kind == FieldKind::kBytes) names.push_back(name);
  return names;
}

std::vector<ColumnRange> delta_columns_for_group(const GroupDesc& g) {
  std::vector<ColumnRange> cols;
  for (std::size_t s = 0; s < g.blob_ranges.size(); ++s) {
    std::uint64_t at = g.blob_ranges[s][0];
    for (auto len : g.blob_lens[s]) {
      if (len >= 8 && len % 4 == 0) cols.push_back({at, len, 4});
      at += len;
    }
  }
  return cols;
}

}  // namespace

// ---------------------------------------------------------------------------

FileHeader write_dataset(const std::vector<Sample>& samples,
                         const Schema& schema, const WriteOptions& opts,
                         const std::filesystem::path& out_dir) {
  validate_schema(schema);
  if (samples.empty()) fail(Errc::kEmptyDataset, "no samples to write");
  if (opts.slice_count < 1 || opts.group_size < 1)
    fail(Errc::kOutOfBounds, "slice_count and group_size must be >= 1");
  for (const auto& s : samples) validate_sample(s, schema);

  const auto bytes_fields = bytes_field_names(schema);
  const std::uint64_t num_groups =
      (samples.size() + opts.group_size - 1) / opts.group_size;
  // contiguous runs of groups per slice
  const std::uint64_t groups_per_slice =
      (num_groups + opts.slice_count - 1) / opts.slice_count;

  FileHeader header;
  header.schema = schema;
  header.slice_paths.resize(opts.slice_count);
  for (std::uint32_t s = 0; s < opts.slice_count; ++s)
    header.slice_paths[s] =
        s == 0 ? opts.stem + ".pcrecord" : opts.stem + ".pcrecord" + std::to_string(s);

  std::vector<Blob> slice_data(opts.slice_count);
  for (std::uint64_t gi = 0; gi < num_groups; ++gi) {
    const std::uint64_t first = gi * opts.group_size;
    const std::uint32_t count = static_cast<std::uint32_t>(
        std::min<std::uint64_t>(opts.group_size, samples.size() - first));
    const std::uint32_t slice =
        static_cast<std::uint32_t>(std::min<std::uint64_t>(
            gi / groups_per_slice, opts.slice_count - 1));

    GroupDesc g;
    g.slice = slice;
    g.first_sample = first;
    g.sample_count = count;

    Blob block_raw;
    for (std::uint32_t r = 0; r < count; ++r) {
      const Sample& s = samples[first + r];
      const std::uint64_t start = block_raw.size();
      std::vector<std::uint64_t> lens;
      for (const auto& fname : bytes_fields) {
        const auto& b = std::get<Blob>(s.values.at(fname));
        lens.push_back(b.size());
        block_raw.insert(block_raw.end(), b.begin(), b.end());
      }
      g.blob_ranges.push_back({start, block_raw.size()});
      g.blob_lens.push_back(std::move(lens));
    }

    Blob scalar_raw;
    for (std::uint32_t r = 0; r < count; ++r)
      append_scalar_record(scalar_raw, samples[first + r], schema,
                           g.blob_ranges[r][0], g.blob_ranges[r][1],
                           g.blob_lens[r]);

    const auto cols = delta_columns_for_group(g);
    EncodedPage scalar_page = encode_scalar_page(scalar_raw);
    EncodedPage block_page = encode_block_page(block_raw, cols);

    Blob& data = slice_data[slice];
    g.group_id = 0;
    for (const auto& prev : header.groups)
      if (prev.slice == slice) ++g.group_id;
    g.scalar_page_offset = data.size();
    scalar_page.serialize_to(data);
    g.scalar_page_length = data.size() - g.scalar_page_offset;
    g.block_page_offset = data.size();
    block_page.serialize_to(data);
    g.block_page_length = data.size() - g.block_page_offset;

    header.scalar_page_size_bytes =
        std::max<std::uint32_t>(header.scalar_page_size_bytes,
                                static_cast<std::uint32_t>(g.scalar_page_length));
    header.block_page_size_bytes =
        std::max<std::uint32_t>(header.block_page_size_bytes,
                                static_cast<std::uint32_t>(g.block_page_length));
    header.groups.push_back(std::move(g));
  }

  std::uint64_t data_total = 0;
  for (const auto& d : slice_data) data_total += d.size();

  // total_size_bytes participates in the header JSON, so iterate until the
  // serialized length stops moving.
  header.total_size_bytes = 0;
  for (int i = 0; i < 10; ++i) {
    const std::uint64_t total = header.header_byte_size() + data_total;
    if (total == header.total_size_bytes) break;
    header.total_size_bytes = total;
  }

  std::filesystem::create_directories(out_dir);
  for (std::uint32_t s = 0; s < opts.slice_count; ++s) {
    std::ofstream f(out_dir / header.slice_paths[s], std::ios::binary);
    if (!f) fail(Errc::kIoFailure, "cannot open " + header.slice_paths[s]);
    if (s == 0) {
      const std::string j = header.to_json().dump();
      f.write(FileHeader::kMagic.data(), 4);
      const std::uint16_t ver = header.version;
      f.write(reinterpret_cast<const char*>(&ver), 2);
      const std::uint32_t len = static_cast<std::uint32_t>(j.size());
      f.write(reinterpret_cast<const char*>(&len), 4);
      f.write(j.data(), static_cast<std::streamsize>(j.size()));
    }
    f.write(reinterpret_cast<const char*>(slice_data[s].data()),
            static_cast<std::streamsize>(slice_data[s].size()));
    if (!f) fail(Errc::kIoFailure, "short write to " + header.slice_paths[s]);
  }
  return header;
}

FileHeader read_header(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(Errc::kIoFailure, "cannot open " + path.string());
  char magic[4];
  if (!f.read(magic, 4)) fail(Errc::kCorruptHeader, "file too short");
  if (std::memcmp(magic, FileHeader::kMagic.data(), 4) != 0)
    fail(Errc::kBadMagic, "not a .pcrecord file");
  std::uint16_t version = 0;
  if (!f.read(reinterpret_cast<char*>(&version), 2))
    fail(Errc::kCorruptHeader, "file too short");
  if (version != FileHeader::kVersion)
    fail(Errc::kUnsupportedVersion, "version " + std::to_string(version));
  std::uint32_t len = 0;
  if (!f.read(reinterpret_cast<char*>(&len), 4))
    fail(Errc::kCorruptHeader, "file too short");
  std::string buf(len, '\0');
  if (!f.read(buf.data(), len)) fail(Errc::kCorruptHeader, "header truncated");
  json j = json::parse(buf, nullptr, false);
  if (j.is_discarded()) fail(Errc::kCorruptHeader, "header is not valid JSON");
  FileHeader h = FileHeader::from_json(j);

  // byte ranges must lie within the actual slice files
  const auto dir = path.parent_path();
  std::uint64_t on_disk = 0;
  std::vector<std::uint64_t> slice_sizes;
  for (std::size_t s = 0; s < h.slice_paths.size(); ++s) {
    std::error_code ec;
    const auto sz = std::filesystem::file_size(dir / h.slice_paths[s], ec);
    if (ec) fail(Errc::kCorruptHeader, "missing slice " + h.slice_paths[s]);
    slice_sizes.push_back(sz);
    on_disk += sz;
  }
  if (on_disk != h.total_size_bytes)
    fail(Errc::kCorruptHeader, "total_size_bytes does not match disk");
  for (const auto& g : h.groups) {
    const std::uint64_t base = g.slice == 0 ? h.header_byte_size() : 0;
    if (base + g.block_page_offset + g.block_page_length > slice_sizes[g.slice] ||
        base + g.scalar_page_offset + g.scalar_page_length > slice_sizes[g.slice])
      fail(Errc::kCorruptHeader, "page range outside slice file");
  }
  return h;
}

// ---------------------------------------------------------------------------

DatasetReader::DatasetReader(const std::filesystem::path& primary,
                             std::size_t group_cache_capacity)
    : DatasetReader(read_header(primary), primary.parent_path(),
                    group_cache_capacity) {}

DatasetReader::DatasetReader(FileHeader header, std::filesystem::path dir,
                             std::size_t group_cache_capacity)
    : header_(std::move(header)),
      dir_(std::move(dir)),
      cache_capacity_(group_cache_capacity) {
  by_slice_.resize(header_.slice_paths.size());
  for (const auto& g : header_.groups) {
    auto& v = by_slice_[g.slice];
    if (g.group_id >= v.size()) v.resize(g.group_id + 1, nullptr);
    v[g.group_id] = &g;
  }
}

const GroupDesc& DatasetReader::group_for(std::uint32_t slice,
                                          std::uint32_t group_id) const {
  if (slice >= by_slice_.size() || group_id >= by_slice_[slice].size() ||
      by_slice_[slice][group_id] == nullptr)
    fail(Errc::kRangeOutOfBounds, "no such group");
  return *by_slice_[slice][group_id];
}

std::uint64_t DatasetReader::page_decode_count() const {
  return page_decodes_.load();
}

std::shared_ptr<const DatasetReader::DecodedGroup> DatasetReader::load_group(
    const GroupDesc& g) const {
  const std::uint64_t key = (std::uint64_t{g.slice} << 32) | g.group_id;
  if (cache_capacity_ > 0) {
    std::lock_guard lock(mu_);
    for (auto it = cache_.begin(); it != cache_.end(); ++it) {
      if (it->first == key) {
        cache_.splice(cache_.begin(), cache_, it);
        return cache_.front().second;
      }
    }
  }

  const std::uint64_t base = g.slice == 0 ? header_.header_byte_size() : 0;
  std::ifstream f(dir_ / header_.slice_paths[g.slice], std::ios::binary);
  if (!f) fail(Errc::kIoFailure, "cannot open slice " + header_.slice_paths[g.slice]);
  auto read_page = [&](std::uint64_t off, std::uint64_t len) {
    Blob buf(len);
    f.seekg(static_cast<std::streamoff>(base + off));
    if (!f.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(len)))
      fail(Errc::kRangeOutOfBounds, "page read outside slice file");
    return EncodedPage::deserialize(buf);
  };
  const EncodedPage scalar_page = read_page(g.scalar_page_offset, g.scalar_page_length);
  const EncodedPage block_page = read_page(g.block_page_offset, g.block_page_length);

  auto decoded = std::make_shared<DecodedGroup>();
  decoded->scalar = decode_scalar_page(scalar_page);
  page_decodes_.fetch_add(1);
  const auto cols = delta_columns_for_group(g);
  decoded->block = decode_block_page(block_page, cols);
  page_decodes_.fetch_add(1);

  if (cache_capacity_ > 0) {
    std::lock_guard lock(mu_);
    cache_.emplace_front(key, decoded);
    while (cache_.size() > cache_capacity_) cache_.pop_back();
  }
  return decoded;
}

Sample DatasetReader::read_sample(const MetadataEntry& entry) const {
  const GroupDesc& g = group_for(entry.shard_id, entry.group_id);
  const std::uint32_t row = entry.scalar_meta.at("row").get<std::uint32_t>();
  if (row >= g.sample_count) fail(Errc::kRangeOutOfBounds, "row outside group");
  auto decoded = load_group(g);

  std::size_t pos = 0;
  ScalarRecord rec;
  for (std::uint32_t r = 0; r <= row; ++r)
    rec = parse_scalar_record(decoded->scalar, pos, header_.schema);

  const auto [blob_start, blob_end] = entry.sample_meta;
  if (blob_end > decoded->block.size() || blob_start > blob_end)
    fail(Errc::kRangeOutOfBounds, "blob range outside block page");

  Sample out = std::move(rec.partial);
  std::uint64_t at = blob_start;
  const auto names = bytes_field_names(header_.schema);
  if (names.size() != rec.blob_lens.size())
    fail(Errc::kCorruptPage, "blob len count mismatch");
  for (std::size_t i = 0; i < names.size(); ++i) {
    const std::uint64_t len = rec.blob_lens[i];
    if (at + len > blob_end) fail(Errc::kRangeOutOfBounds, "blob overrun");
    out.values[names[i]] =
        Blob(decoded->block.begin() + at, decoded->block.begin() + at + len);
    at += len;
  }
  return out;
}

}  // namespace pcpipe
