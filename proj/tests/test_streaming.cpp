#include <fstream>

#include "doctest.h"
#include "pcpipe/metadata.hpp"
#include "pcpipe/streaming.hpp"
#include "test_util.hpp"

using namespace pcpipe;
using testutil::TempDir;

namespace {

// Dataset of `samples` clouds over `slices` slice files, plus its meta index.
struct Fixture {
  TempDir data;
  Schema schema = testutil::cloud_schema();
  std::vector<Sample> samples;
  FileHeader header;
  MetaIndex meta;

  explicit Fixture(std::size_t n = 10, std::uint32_t slices = 2,
                   std::uint32_t group = 4) {
    for (std::size_t i = 0; i < n; ++i)
      samples.push_back(testutil::cloud_sample(32, i));
    header = write_dataset(samples, schema, {slices, group, "ds"}, data.path());
    meta = build_meta_index(data.path() / "ds.pcrecord");
    write_meta_index(meta, data.path());
  }
};

Blob file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return Blob((std::istreambuf_iterator<char>(in)), {});
}

// store whose first `faults` get() calls for `target` return a flipped byte
class FlakyStore : public ObjectStore {
 public:
  FlakyStore(ObjectStore& inner, std::string target, int faults)
      : inner_(inner), target_(std::move(target)), faults_(faults) {}

  std::vector<std::string> list() override { return inner_.list(); }
  std::optional<std::uint64_t> head(const std::string& n) override {
    return inner_.head(n);
  }
  Blob get(const std::string& n) override {
    auto b = inner_.get(n);
    if (n == target_ && faults_ > 0) {
      --faults_;
      b[b.size() / 2] ^= 0x40;
    }
    return b;
  }

 private:
  ObjectStore& inner_;
  std::string target_;
  int faults_;
};

class DeadStore : public ObjectStore {
 public:
  explicit DeadStore(ObjectStore& inner) : inner_(inner) {}
  std::vector<std::string> list() override { return inner_.list(); }
  std::optional<std::uint64_t> head(const std::string& n) override {
    return inner_.head(n);
  }
  Blob get(const std::string& n) override {
    if (n != kMetaIndexName)
      fail(Errc::kStoreUnreachable, "connection refused fetching " + n);
    return inner_.get(n);
  }

 private:
  ObjectStore& inner_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Meta index

TEST_CASE("meta index summarizes every slice") {
  Fixture f;
  REQUIRE(f.meta.slices.size() == 2);
  CHECK(f.meta.header == f.header);
  std::uint64_t total_samples = 0;
  for (std::size_t i = 0; i < f.meta.slices.size(); ++i) {
    const auto& s = f.meta.slices[i];
    CHECK(s.name == f.header.slice_paths[i]);
    const auto bytes = file_bytes(f.data.path() / s.name);
    CHECK(s.bytes == bytes.size());
    CHECK(s.crc32 == crc32_of(bytes));
    total_samples += s.samples;
  }
  CHECK(total_samples == 10);
}

TEST_CASE("meta index JSON round-trip") {
  Fixture f;
  auto back = MetaIndex::from_json(f.meta.to_json());
  CHECK(back.header == f.meta.header);
  CHECK(back.slices == f.meta.slices);
}

TEST_CASE("fetch_meta_index reads the store object") {
  Fixture f;
  LocalDirStore store(f.data.path());
  auto fetched = fetch_meta_index(store);
  CHECK(fetched.header == f.meta.header);
  CHECK(fetched.slices == f.meta.slices);
}

TEST_CASE("missing meta index is reported") {
  TempDir empty;
  LocalDirStore store(empty.path());
  try {
    (void)fetch_meta_index(store);
    FAIL("expected throw");
  } catch (const PcError& e) {
    CHECK(e.code() == Errc::kMissingMetaIndex);
  }
}

// ---------------------------------------------------------------------------
// Stores

TEST_CASE("local store lists, heads, and serves objects") {
  Fixture f;
  LocalDirStore store(f.data.path());
  auto names = store.list();
  CHECK(names.size() == 3);  // two slices + meta index
  for (const auto& s : f.meta.slices) {
    auto head = store.head(s.name);
    REQUIRE(head.has_value());
    CHECK(*head == s.bytes);
    CHECK(store.get(s.name) == file_bytes(f.data.path() / s.name));
  }
  CHECK_FALSE(store.head("absent").has_value());
  CHECK_THROWS_AS((void)store.get("absent"), PcError);
}

TEST_CASE("http store speaks the mock server protocol") {
  Fixture f;
  StoreServer server(f.data.path(), "127.0.0.1", 0);
  HttpStore store("127.0.0.1", server.port());
  auto names = store.list();
  CHECK(names.size() == 3);
  const auto& s = f.meta.slices[0];
  CHECK(store.head(s.name) == s.bytes);
  CHECK(store.get(s.name) == file_bytes(f.data.path() / s.name));
  CHECK_FALSE(store.head("absent").has_value());
  server.stop();
}

// ---------------------------------------------------------------------------
// Planning

TEST_CASE("one shard requests both slices in first-use order") {
  Fixture f(6, 2, 4);  // slice 0: samples 0..3, slice 1: samples 4..5
  auto plan = plan_epoch_downloads(f.meta, {1, 0}, 0);
  REQUIRE(plan.size() == 2);
  CHECK(plan[0].object_name == f.meta.slices[0].name);
  CHECK(plan[0].first_sample_id == 0);
  CHECK(plan[0].expected_size == f.meta.slices[0].bytes);
  CHECK(plan[0].expected_crc32 == f.meta.slices[0].crc32);
  CHECK(plan[1].object_name == f.meta.slices[1].name);
  CHECK(plan[1].first_sample_id == 4);
}

TEST_CASE("a shard touching one slice requests exactly one object") {
  Fixture f(2, 2, 1);  // one sample per slice
  auto plan = plan_epoch_downloads(f.meta, {2, 1}, 0);
  REQUIRE(plan.size() == 1);
  CHECK(plan[0].object_name == f.meta.slices[1].name);
}

TEST_CASE("plans are identical across epochs") {
  Fixture f;
  auto a = plan_epoch_downloads(f.meta, {2, 0}, 0);
  auto b = plan_epoch_downloads(f.meta, {2, 0}, 5);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].object_name == b[i].object_name);
    CHECK(a[i].first_sample_id == b[i].first_sample_id);
    CHECK(b[i].epoch == 5);
  }
}

// ---------------------------------------------------------------------------
// Download

TEST_CASE("clean downloads verify on the first attempt") {
  Fixture f;
  TempDir staging;
  LocalDirStore store(f.data.path());
  auto plan = plan_epoch_downloads(f.meta, {1, 0}, 0);
  auto ev = download_object(store, plan[0], staging.path());
  CHECK(ev.verified);
  CHECK(ev.attempts == 1);
  CHECK(ev.bytes == plan[0].expected_size);
  CHECK(file_bytes(staging.path() / plan[0].object_name) ==
        store.get(plan[0].object_name));
  CHECK_FALSE(std::filesystem::exists(staging.path() /
                                      (plan[0].object_name + ".part")));
}

TEST_CASE("a transient corruption is retried once and succeeds") {
  Fixture f;
  TempDir staging;
  LocalDirStore inner(f.data.path());
  auto plan = plan_epoch_downloads(f.meta, {1, 0}, 0);
  FlakyStore store(inner, plan[0].object_name, 1);
  auto ev = download_object(store, plan[0], staging.path());
  CHECK(ev.verified);
  CHECK(ev.attempts == 2);
}

TEST_CASE("persistent corruption yields an integrity failure event") {
  Fixture f;
  TempDir staging;
  LocalDirStore inner(f.data.path());
  auto plan = plan_epoch_downloads(f.meta, {1, 0}, 0);
  FlakyStore store(inner, plan[0].object_name, 99);
  auto ev = download_object(store, plan[0], staging.path());
  CHECK_FALSE(ev.verified);
  CHECK(ev.error.find(plan[0].object_name) != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(staging.path() / plan[0].object_name));
}

// ---------------------------------------------------------------------------
// Eviction policy

TEST_CASE("pick_evictions frees oldest consumed files down to the watermark") {
  DiskBudget budget{100, 0.8, {}};
  std::vector<StagedFile> staged = {
      {"a", 40, true, 2, 0},
      {"b", 40, true, 1, 0},
      {"c", 40, false, 0, 0},
  };
  // 120 staged > 80 watermark: evicting "b" (oldest consumed) reaches 80
  CHECK(pick_evictions(staged, budget) == std::vector<std::string>{"b"});
}

TEST_CASE("pick_evictions skips files with pending reads") {
  DiskBudget budget{100, 0.5, {}};
  std::vector<StagedFile> staged = {
      {"a", 60, true, 1, 3},  // pending: must survive
      {"b", 60, true, 2, 0},
  };
  CHECK(pick_evictions(staged, budget) == std::vector<std::string>{"b"});
}

TEST_CASE("pick_evictions does nothing under the threshold") {
  DiskBudget budget{1000, 0.8, {}};
  std::vector<StagedFile> staged = {{"a", 100, true, 1, 0}};
  CHECK(pick_evictions(staged, budget).empty());
}

TEST_CASE("pick_evictions is pure") {
  DiskBudget budget{100, 0.8, {}};
  std::vector<StagedFile> staged = {{"a", 90, true, 1, 0},
                                    {"b", 90, true, 2, 0}};
  auto first = pick_evictions(staged, budget);
  CHECK(pick_evictions(staged, budget) == first);
}

// ---------------------------------------------------------------------------
// End-to-end streaming

namespace {

std::vector<Batch> local_reference(const Fixture& f, const ShardSpec& spec,
                                   const PipelineGraph& graph,
                                   std::uint64_t epochs) {
  auto padded = pad_for_shards(build_index({f.header}), spec.num_shards);
  auto shard = shard_index(padded, spec);
  DatasetReader reader(f.data.path() / "ds.pcrecord");
  SourceFn src = [&](std::uint64_t, std::uint64_t idx) {
    return reader.read_sample(shard.sample_meta_list[idx]);
  };
  PipelineOptions opts;
  opts.epochs = epochs;
  Pipeline p(graph, src, shard.size(), opts);
  p.start();
  std::vector<Batch> out;
  while (auto b = p.next_batch()) out.push_back(std::move(*b));
  return out;
}

std::uint64_t dataset_bytes(const Fixture& f) {
  std::uint64_t total = 0;
  for (const auto& s : f.meta.slices) total += s.bytes;
  return total;
}

std::uint64_t max_slice_bytes(const Fixture& f) {
  std::uint64_t mx = 0;
  for (const auto& s : f.meta.slices) mx = std::max(mx, s.bytes);
  return mx;
}

}  // namespace

TEST_CASE("streamed batches equal a local run bit-exactly") {
  Fixture f(12, 3, 2);
  auto graph = testutil::simple_graph(
      2, {testutil::map_node(1, MapKind::kTranslate, 2)});
  for (std::uint32_t shard_id : {0u, 1u}) {
    ShardSpec spec{2, shard_id};
    auto expected = local_reference(f, spec, graph, 1);
    TempDir staging;
    LocalDirStore store(f.data.path());
    DiskBudget budget{1 << 30, 0.8, staging.path()};
    auto [batches, report] = stream_dataset(store, budget, spec, graph, 1);
    CHECK(batches == expected);
    CHECK(report.evictions == 0);
  }
}

TEST_CASE("a tight quota forces evictions but never changes the output") {
  Fixture f(24, 4, 3);
  auto graph = testutil::simple_graph(3);
  ShardSpec spec{1, 0};
  auto expected = local_reference(f, spec, graph, 2);

  TempDir staging;
  LocalDirStore store(f.data.path());
  const auto quota = dataset_bytes(f) * 2 / 5;  // 40%
  DiskBudget budget{quota, 0.8, staging.path()};
  auto [batches, report] = stream_dataset(store, budget, spec, graph, 2);
  CHECK(batches == expected);
  CHECK(report.evictions > 0);
  CHECK(report.downloads > f.meta.slices.size());  // re-downloads after evicting
  CHECK(report.peak_staged_bytes <= quota + max_slice_bytes(f));
}

TEST_CASE("streaming over http matches the local reference") {
  Fixture f(8, 2, 2);
  auto graph = testutil::simple_graph(2);
  ShardSpec spec{1, 0};
  auto expected = local_reference(f, spec, graph, 1);

  StoreServer server(f.data.path(), "127.0.0.1", 0);
  HttpStore store("127.0.0.1", server.port());
  TempDir staging;
  DiskBudget budget{1 << 30, 0.8, staging.path()};
  auto [batches, report] = stream_dataset(store, budget, spec, graph, 1);
  CHECK(batches == expected);
  server.stop();
}

TEST_CASE("an unreachable store surfaces with the object named") {
  Fixture f(6, 2, 2);
  LocalDirStore inner(f.data.path());
  DeadStore store(inner);
  TempDir staging;
  DiskBudget budget{1 << 30, 0.8, staging.path()};
  try {
    (void)stream_dataset(store, budget, {1, 0}, testutil::simple_graph(2), 1);
    FAIL("expected throw");
  } catch (const PcError& e) {
    CHECK(e.code() == Errc::kStoreUnreachable);
    CHECK(std::string(e.what()).find("pcrecord") != std::string::npos);
  }
}

TEST_CASE("persistent store corruption aborts the stream") {
  Fixture f(6, 2, 2);
  LocalDirStore inner(f.data.path());
  FlakyStore store(inner, f.meta.slices[0].name, 99);
  TempDir staging;
  DiskBudget budget{1 << 30, 0.8, staging.path()};
  try {
    (void)stream_dataset(store, budget, {1, 0}, testutil::simple_graph(2), 1);
    FAIL("expected throw");
  } catch (const PcError& e) {
    CHECK(e.code() == Errc::kIntegrityFailure);
  }
}
