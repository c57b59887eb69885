#pragma once

// Shared fixtures for the unit and acceptance suites: temporary directories,
// deterministic random schemas/samples, and small synthetic point clouds.

#include <atomic>
#include <cstring>
#include <filesystem>
#include <unistd.h>
#include <random>
#include <string>
#include <vector>

#include "pcpipe/format.hpp"
#include "pcpipe/pipeline.hpp"

namespace testutil {

namespace fs = std::filesystem;
using pcpipe::Blob;
using pcpipe::FieldKind;
using pcpipe::FieldType;
using pcpipe::Sample;
using pcpipe::Schema;
using pcpipe::Value;

class TempDir {
 public:
  explicit TempDir(const std::string& prefix = "pcpipe_test") {
    static std::atomic<unsigned> counter{0};
    auto base = fs::temp_directory_path();
    path_ = base / (prefix + "_" + std::to_string(::getpid()) + "_" +
                    std::to_string(counter.fetch_add(1)));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

// N x 3 float32 coordinates packed as a blob, deterministic in `seed`.
inline Blob coord_blob(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(-1.f, 1.f);
  std::vector<float> v(n * 3);
  for (auto& x : v) x = d(rng);
  Blob b(v.size() * 4);
  std::memcpy(b.data(), v.data(), b.size());
  return b;
}

inline Schema cloud_schema(bool with_normal = false, bool with_label = true) {
  Schema s;
  s.fields.push_back({"data", FieldType{FieldKind::kBytes, {3}}});
  if (with_normal) s.fields.push_back({"normal", FieldType{FieldKind::kBytes, {3}}});
  if (with_label) s.fields.push_back({"label", FieldType{FieldKind::kInt32, {}}});
  return s;
}

inline Sample cloud_sample(std::size_t n, std::uint64_t seed,
                           bool with_normal = false, bool with_label = true) {
  Sample s;
  s.values["data"] = coord_blob(n, seed);
  if (with_normal) s.values["normal"] = coord_blob(n, seed ^ 0x9e3779b9ull);
  if (with_label)
    s.values["label"] = std::vector<std::int32_t>{
        static_cast<std::int32_t>(seed % 40)};
  return s;
}

inline Schema random_schema(std::mt19937_64& rng) {
  static const FieldKind kinds[] = {FieldKind::kBytes,   FieldKind::kInt32,
                                    FieldKind::kInt64,   FieldKind::kFloat32,
                                    FieldKind::kFloat64, FieldKind::kString};
  std::uniform_int_distribution<int> nfields(1, 5);
  std::uniform_int_distribution<int> kind_ix(0, 5);
  std::uniform_int_distribution<int> dim(1, 4);
  Schema s;
  const int n = nfields(rng);
  for (int i = 0; i < n; ++i) {
    FieldType t;
    t.kind = kinds[kind_ix(rng)];
    if (t.kind != FieldKind::kString && rng() % 2 == 0) {
      const int rank = 1 + static_cast<int>(rng() % 2);
      for (int r = 0; r < rank; ++r)
        t.shape.push_back(static_cast<std::uint32_t>(dim(rng)));
    }
    s.fields.push_back({"f" + std::to_string(i), t});
  }
  return s;
}

inline Sample random_sample(const Schema& schema, std::mt19937_64& rng) {
  Sample s;
  for (const auto& [name, t] : schema.fields) {
    std::uint64_t n = 1;
    for (auto d : t.shape) n *= d;
    switch (t.kind) {
      case FieldKind::kBytes: {
        // any multiple of the shape's element count (including zero)
        const std::uint64_t mult = t.shape.empty() ? (rng() % 64) : (rng() % 8);
        Blob b(t.shape.empty() ? mult : n * mult);
        for (auto& c : b) c = static_cast<std::uint8_t>(rng());
        s.values[name] = std::move(b);
        break;
      }
      case FieldKind::kInt32: {
        std::vector<std::int32_t> v(n);
        for (auto& x : v) x = static_cast<std::int32_t>(rng());
        s.values[name] = std::move(v);
        break;
      }
      case FieldKind::kInt64: {
        std::vector<std::int64_t> v(n);
        for (auto& x : v) x = static_cast<std::int64_t>(rng());
        s.values[name] = std::move(v);
        break;
      }
      case FieldKind::kFloat32: {
        std::uniform_real_distribution<float> d(-100.f, 100.f);
        std::vector<float> v(n);
        for (auto& x : v) x = d(rng);
        s.values[name] = std::move(v);
        break;
      }
      case FieldKind::kFloat64: {
        std::uniform_real_distribution<double> d(-100.0, 100.0);
        std::vector<double> v(n);
        for (auto& x : v) x = d(rng);
        s.values[name] = std::move(v);
        break;
      }
      case FieldKind::kString: {
        std::string str;
        const std::size_t len = rng() % 24;
        for (std::size_t i = 0; i < len; ++i)
          str.push_back(static_cast<char>('a' + rng() % 26));
        s.values[name] = std::move(str);
        break;
      }
    }
  }
  return s;
}

inline pcpipe::OpNode source_node(std::uint32_t id, std::uint32_t workers = 1,
                                  std::uint32_t cap = 8) {
  pcpipe::OpNode n;
  n.id = id;
  n.kind = pcpipe::OpNode::Kind::kSource;
  n.num_workers = workers;
  n.out_queue_capacity = cap;
  return n;
}

inline pcpipe::OpNode map_node(std::uint32_t id, pcpipe::MapKind kind,
                               std::uint32_t workers = 1, std::uint32_t cap = 8,
                               pcpipe::json params = pcpipe::json::object()) {
  pcpipe::OpNode n;
  n.id = id;
  n.kind = pcpipe::OpNode::Kind::kMap;
  n.transforms = {{kind, std::move(params)}};
  n.seed_op_ids = {id};
  n.num_workers = workers;
  n.out_queue_capacity = cap;
  return n;
}

inline pcpipe::OpNode batch_node(std::uint32_t id, std::uint32_t batch_size) {
  pcpipe::OpNode n;
  n.id = id;
  n.kind = pcpipe::OpNode::Kind::kBatch;
  n.batch_size = batch_size;
  return n;
}

inline pcpipe::OpNode sink_node(std::uint32_t id, std::uint32_t cap = 8) {
  pcpipe::OpNode n;
  n.id = id;
  n.kind = pcpipe::OpNode::Kind::kSink;
  n.out_queue_capacity = cap;
  return n;
}

inline pcpipe::PipelineGraph simple_graph(std::uint32_t batch_size,
                                          std::vector<pcpipe::OpNode> maps = {},
                                          std::uint64_t seed = 42) {
  pcpipe::PipelineGraph g;
  g.nodes.push_back(source_node(0));
  for (auto& m : maps) g.nodes.push_back(std::move(m));
  g.nodes.push_back(batch_node(90, batch_size));
  g.nodes.push_back(sink_node(91));
  g.base_seed = seed;
  return g;
}

inline std::vector<float> blob_floats(const Blob& b) {
  std::vector<float> v(b.size() / 4);
  std::memcpy(v.data(), b.data(), v.size() * 4);
  return v;
}

}  // namespace testutil
