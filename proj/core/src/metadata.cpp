#include "pcpipe/metadata.hpp"

#include <algorithm>

namespace pcpipe {

json IndexTable::to_json() const {
  json entries = json::array();
  for (const auto& e : sample_meta_list) {
    entries.push_back(
        json{{"task", e.task == TaskType::kCommonTask ? "kCommonTask" : "kPaddedTask"},
             {"shard_id", e.shard_id},
             {"group_id", e.group_id},
             {"sample_meta", e.sample_meta},
             {"scalar_meta", e.scalar_meta}});
  }
  return json{{"total_real_samples", total_real_samples}, {"entries", entries}};
}

IndexTable build_index(const std::vector<FileHeader>& headers) {
  IndexTable index;
  if (headers.empty()) return index;
  for (const auto& h : headers)
    if (!(h.schema == headers.front().schema))
      fail(Errc::kSchemaConflict, "headers carry different schemas");

  std::uint32_t slice_base = 0;
  for (const auto& h : headers) {
    std::vector<const GroupDesc*> ordered;
    ordered.reserve(h.groups.size());
    for (const auto& g : h.groups) ordered.push_back(&g);
    std::sort(ordered.begin(), ordered.end(),
              [](const GroupDesc* a, const GroupDesc* b) {
                return a->first_sample < b->first_sample;
              });
    for (const auto* g : ordered) {
      for (std::uint32_t r = 0; r < g->sample_count; ++r) {
        MetadataEntry e;
        e.task = TaskType::kCommonTask;
        e.shard_id = slice_base + g->slice;
        e.group_id = g->group_id;
        e.sample_meta = g->blob_ranges[r];
        e.scalar_meta = json{{"row", r}, {"blob_lens", g->blob_lens[r]}};
        index.task_list.push_back(e.task);
        index.sample_meta_list.push_back(std::move(e));
      }
    }
    slice_base += static_cast<std::uint32_t>(h.slice_paths.size());
  }
  index.total_real_samples = index.sample_meta_list.size();
  return index;
}

const MetadataEntry& locate(const IndexTable& index, std::uint64_t global_id) {
  if (global_id >= index.sample_meta_list.size())
    fail(Errc::kOutOfRange, "sample id " + std::to_string(global_id));
  return index.sample_meta_list[global_id];
}

IndexTable pad_for_shards(const IndexTable& index, std::uint32_t num_shards) {
  if (num_shards < 1) fail(Errc::kOutOfBounds, "num_shards must be >= 1");
  IndexTable out = index;
  const std::size_t n = index.size();
  if (n == 0) return out;
  const std::size_t target = (n + num_shards - 1) / num_shards * num_shards;
  for (std::size_t i = n; i < target; ++i) {
    // cyclic duplicates of the trailing real entries
    MetadataEntry e = index.sample_meta_list[n - (target - i - 1) % n - 1];
    e.task = TaskType::kPaddedTask;
    out.task_list.push_back(e.task);
    out.sample_meta_list.push_back(std::move(e));
  }
  return out;
}

}  // namespace pcpipe
