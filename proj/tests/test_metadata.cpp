#include <vector>

#include "doctest.h"
#include "pcpipe/metadata.hpp"
#include "test_util.hpp"

using namespace pcpipe;
using testutil::TempDir;

namespace {

// 10-sample dataset split over 2 slices with groups of 4.
struct Fixture {
  TempDir dir;
  Schema schema = testutil::cloud_schema();
  std::vector<Sample> samples;
  FileHeader header;

  Fixture() {
    for (int i = 0; i < 10; ++i) samples.push_back(testutil::cloud_sample(6, i));
    header = write_dataset(samples, schema, {2, 4, "ds"}, dir.path());
  }
};

}  // namespace

TEST_CASE("build_index yields one ordered entry per sample") {
  Fixture f;
  auto index = build_index({f.header});
  REQUIRE(index.size() == 10);
  CHECK(index.total_real_samples == 10);
  CHECK(index.task_list.size() == 10);
  for (auto t : index.task_list) CHECK(t == TaskType::kCommonTask);

  DatasetReader reader(f.dir.path() / "ds.pcrecord");
  for (std::size_t i = 0; i < 10; ++i)
    CHECK(reader.read_sample(locate(index, i)) == f.samples[i]);
}

TEST_CASE("slice boundaries map to shard and group ids") {
  // 6 samples, 2 slices, groups of 4: groups hold 4 and 2 samples, one group
  // per slice, so entry 4 is the first row of the second slice's first group.
  TempDir dir;
  auto schema = testutil::cloud_schema();
  std::vector<Sample> samples;
  for (int i = 0; i < 6; ++i) samples.push_back(testutil::cloud_sample(5, i));
  auto header = write_dataset(samples, schema, {2, 4, "ds"}, dir.path());
  auto index = build_index({header});
  REQUIRE(index.size() == 6);
  CHECK(locate(index, 4).shard_id == 1);
  CHECK(locate(index, 4).group_id == 0);
  CHECK(locate(index, 0).shard_id == 0);
  CHECK(locate(index, 3).shard_id == 0);
}

TEST_CASE("headers with different schemas conflict") {
  TempDir a, b;
  auto ha = write_dataset({testutil::cloud_sample(4, 1)},
                          testutil::cloud_schema(), {}, a.path());
  auto hb = write_dataset({testutil::cloud_sample(4, 2, true)},
                          testutil::cloud_schema(true), {}, b.path());
  try {
    (void)build_index({ha, hb});
    FAIL("expected throw");
  } catch (const PcError& e) {
    CHECK(e.code() == Errc::kSchemaConflict);
  }
}

TEST_CASE("locate bounds") {
  Fixture f;
  auto index = build_index({f.header});
  CHECK_NOTHROW((void)locate(index, 0));
  CHECK_NOTHROW((void)locate(index, 9));
  try {
    (void)locate(index, 10);
    FAIL("expected throw");
  } catch (const PcError& e) {
    CHECK(e.code() == Errc::kOutOfRange);
  }
}

TEST_CASE("index build decodes no data pages") {
  Fixture f;
  DatasetReader reader(f.dir.path() / "ds.pcrecord");
  auto index = build_index({reader.header()});
  CHECK(index.size() == 10);
  CHECK(reader.page_decode_count() == 0);
}

TEST_CASE("pad_for_shards pads 10 to 12 for 4 shards") {
  Fixture f;
  auto index = build_index({f.header});
  auto padded = pad_for_shards(index, 4);
  REQUIRE(padded.size() == 12);
  CHECK(padded.total_real_samples == 10);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(padded.task_list[i] == TaskType::kCommonTask);
    CHECK(padded.sample_meta_list[i] == index.sample_meta_list[i]);
  }
  for (std::size_t i = 10; i < 12; ++i)
    CHECK(padded.task_list[i] == TaskType::kPaddedTask);
  // padded entries duplicate the trailing real entries cyclically
  CHECK(padded.sample_meta_list[10].sample_meta ==
        index.sample_meta_list[8].sample_meta);
  CHECK(padded.sample_meta_list[11].sample_meta ==
        index.sample_meta_list[9].sample_meta);
}

TEST_CASE("pad_for_shards leaves divisible and single-shard indexes alone") {
  Fixture f;
  auto index = build_index({f.header});
  auto by5 = pad_for_shards(index, 5);
  CHECK(by5.size() == 10);
  CHECK(by5.sample_meta_list == index.sample_meta_list);
  auto by1 = pad_for_shards(index, 1);
  CHECK(by1.size() == 10);
  CHECK(by1.sample_meta_list == index.sample_meta_list);
}

TEST_CASE("dropping padded entries restores the original index") {
  Fixture f;
  auto index = build_index({f.header});
  for (std::uint32_t shards : {2u, 3u, 4u, 7u}) {
    auto padded = pad_for_shards(index, shards);
    CHECK(padded.size() % shards == 0);
    std::vector<MetadataEntry> real;
    for (std::size_t i = 0; i < padded.size(); ++i)
      if (padded.task_list[i] == TaskType::kCommonTask)
        real.push_back(padded.sample_meta_list[i]);
    CHECK(real == index.sample_meta_list);
  }
}

TEST_CASE("index over multiple headers uses global slice ids") {
  TempDir a, b;
  auto schema = testutil::cloud_schema();
  std::vector<Sample> sa, sb;
  for (int i = 0; i < 4; ++i) sa.push_back(testutil::cloud_sample(4, i));
  for (int i = 0; i < 3; ++i) sb.push_back(testutil::cloud_sample(4, 100 + i));
  auto ha = write_dataset(sa, schema, {2, 2, "a"}, a.path());
  auto hb = write_dataset(sb, schema, {1, 2, "b"}, b.path());
  auto index = build_index({ha, hb});
  REQUIRE(index.size() == 7);
  // header a contributes slices 0..1, header b's single slice becomes 2
  CHECK(locate(index, 0).shard_id == 0);
  CHECK(locate(index, 2).shard_id == 1);
  CHECK(locate(index, 4).shard_id == 2);
  CHECK(locate(index, 6).shard_id == 2);
}
