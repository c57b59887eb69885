#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pcpipe/distributed.hpp"
#include "pcpipe/object_store.hpp"
#include "pcpipe/pipeline.hpp"

namespace pcpipe {

inline constexpr const char* kMetaIndexName = "meta_index.json";

struct SliceSummary {
  std::string name;
  std::uint64_t samples = 0;
  std::uint64_t bytes = 0;
  std::uint32_t crc32 = 0;

  bool operator==(const SliceSummary&) const = default;
};

// Everything needed to build an IndexTable and verify downloads without
// touching any slice file: the full dataset header plus per-slice summaries.
struct MetaIndex {
  FileHeader header;
  std::vector<SliceSummary> slices;

  json to_json() const;
  static MetaIndex from_json(const json& j);
};

// Reads the primary slice header and stats/checksums every slice file.
MetaIndex build_meta_index(const std::filesystem::path& primary);
// Writes kMetaIndexName next to the slice files.
void write_meta_index(const MetaIndex& meta, const std::filesystem::path& dir);
// Throws MissingMetaIndex when the store has no meta-index object.
MetaIndex fetch_meta_index(ObjectStore& store);

struct DiskBudget {
  std::uint64_t quota_bytes = 0;
  double high_watermark = 0.8;  // evict when staged > quota * watermark
  std::filesystem::path staging_dir;
};

struct DownloadRequest {
  std::string object_name;
  std::uint64_t expected_size = 0;
  std::uint32_t expected_crc32 = 0;
  std::uint64_t epoch = 0;
  std::uint64_t first_sample_id = 0;  // first shard-local use

  bool operator==(const DownloadRequest&) const = default;
};

// Slices in order of first use within the epoch's shard-local sample order;
// each needed slice exactly once.
std::vector<DownloadRequest> plan_epoch_downloads(const MetaIndex& meta,
                                                  const ShardSpec& spec,
                                                  std::uint64_t epoch);

struct DownloadEvent {
  std::string object_name;
  bool verified = false;
  std::uint64_t bytes = 0;
  std::uint32_t attempts = 0;
  std::string error;
};

// Atomic download (temp file + rename) with size + CRC32 verification and a
// single retry; never throws for integrity problems — the event carries them.
// Backend failures throw StoreUnreachable.
DownloadEvent download_object(ObjectStore& store, const DownloadRequest& req,
                              const std::filesystem::path& staging);

// Pure eviction policy, unit-testable: pick consumed files with no pending
// reads, oldest-consumed first, until staged bytes fall to the watermark.
struct StagedFile {
  std::string name;
  std::uint64_t bytes = 0;
  bool consumed = false;
  std::uint64_t consumed_seq = 0;  // ascending consumption order
  std::uint32_t pending_reads = 0;
};
std::vector<std::string> pick_evictions(const std::vector<StagedFile>& staged,
                                        const DiskBudget& budget);

struct StreamReport {
  std::uint64_t peak_staged_bytes = 0;
  std::uint64_t downloads = 0;
  std::uint64_t evictions = 0;
  std::uint64_t integrity_retries = 0;
  double wall_seconds = 0;
};

// Same contract as run_pipeline over the shard's samples, but slice files are
// fetched from the store on demand and evicted under the budget. Output is
// bit-identical to a local run of the same graph on the same shard.
std::pair<std::vector<Batch>, StreamReport> stream_dataset(
    ObjectStore& store, const DiskBudget& budget, const ShardSpec& spec,
    const PipelineGraph& graph, std::uint64_t epochs = 1);

}  // namespace pcpipe
