#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "pcpipe/format.hpp"

namespace pcpipe {

enum class TaskType { kCommonTask, kPaddedTask };

struct MetadataEntry {
  TaskType task = TaskType::kCommonTask;
  std::uint32_t shard_id = 0;  // slice file index
  std::uint32_t group_id = 0;  // group index local to that slice
  std::array<std::uint64_t, 2> sample_meta = {0, 0};  // [blob_start, blob_end)
  json scalar_meta;  // {"row": n, "blob_lens": [...]}

  bool operator==(const MetadataEntry& o) const {
    return task == o.task && shard_id == o.shard_id && group_id == o.group_id &&
           sample_meta == o.sample_meta && scalar_meta == o.scalar_meta;
  }
};

struct IndexTable {
  std::vector<TaskType> task_list;
  std::vector<MetadataEntry> sample_meta_list;
  std::uint64_t total_real_samples = 0;

  std::size_t size() const { return sample_meta_list.size(); }
  json to_json() const;
};

// One entry per sample across all slices of all headers, in write order.
// Shard ids are global slice indices across the header list.
// Throws SchemaConflict when headers disagree on the schema.
IndexTable build_index(const std::vector<FileHeader>& headers);

// Constant-time lookup; throws OutOfRange.
const MetadataEntry& locate(const IndexTable& index, std::uint64_t global_id);

// Appends kPaddedTask entries (cyclic duplicates of the trailing real
// entries) until the length is a multiple of num_shards.
IndexTable pad_for_shards(const IndexTable& index, std::uint32_t num_shards);

}  // namespace pcpipe
