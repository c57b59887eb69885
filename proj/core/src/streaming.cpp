#include "pcpipe/streaming.hpp"

#include <chrono>
#include <condition_variable>
#include <fstream>
#include <mutex>
#include <thread>

#include "pcpipe/metadata.hpp"

namespace pcpipe {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

// ---------------------------------------------------------------------------
// Meta index

json MetaIndex::to_json() const {
  json slist = json::array();
  for (const auto& s : slices)
    slist.push_back(json{{"name", s.name},
                         {"samples", s.samples},
                         {"bytes", s.bytes},
                         {"crc32", s.crc32}});
  return json{{"header", header.to_json()}, {"slices", slist}};
}

MetaIndex MetaIndex::from_json(const json& j) {
  MetaIndex m;
  m.header = FileHeader::from_json(j.at("header"));
  for (const auto& s : j.at("slices"))
    m.slices.push_back(SliceSummary{s.at("name").get<std::string>(),
                                    s.at("samples").get<std::uint64_t>(),
                                    s.at("bytes").get<std::uint64_t>(),
                                    s.at("crc32").get<std::uint32_t>()});
  return m;
}

MetaIndex build_meta_index(const fs::path& primary) {
  MetaIndex m;
  m.header = read_header(primary);
  const fs::path dir = primary.parent_path();
  for (std::size_t i = 0; i < m.header.slice_paths.size(); ++i) {
    const auto& name = m.header.slice_paths[i];
    std::ifstream in(dir / name, std::ios::binary);
    if (!in) fail(Errc::kIoFailure, "cannot read slice " + name);
    Blob data((std::istreambuf_iterator<char>(in)),
              std::istreambuf_iterator<char>());
    SliceSummary s;
    s.name = name;
    s.bytes = data.size();
    s.crc32 = crc32_of(data);
    for (const auto& g : m.header.groups)
      if (g.slice == i) s.samples += g.sample_count;
    m.slices.push_back(std::move(s));
  }
  return m;
}

void write_meta_index(const MetaIndex& meta, const fs::path& dir) {
  std::ofstream out(dir / kMetaIndexName, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::kIoFailure, "cannot write meta index");
  out << meta.to_json().dump(2);
  if (!out) fail(Errc::kIoFailure, "cannot write meta index");
}

MetaIndex fetch_meta_index(ObjectStore& store) {
  if (!store.head(kMetaIndexName))
    fail(Errc::kMissingMetaIndex, "store has no meta-index object");
  const Blob data = store.get(kMetaIndexName);
  try {
    return MetaIndex::from_json(json::parse(data.begin(), data.end()));
  } catch (const json::exception& e) {
    fail(Errc::kCorruptHeader, std::string("meta index: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Planning

std::vector<DownloadRequest> plan_epoch_downloads(const MetaIndex& meta,
                                                  const ShardSpec& spec,
                                                  std::uint64_t epoch) {
  const IndexTable index = build_index({meta.header});
  const IndexTable padded = pad_for_shards(index, spec.num_shards);
  const IndexTable shard = shard_index(padded, spec);
  std::vector<DownloadRequest> plan;
  std::vector<bool> requested(meta.slices.size(), false);
  for (std::size_t i = 0; i < shard.size(); ++i) {
    const std::uint32_t slice = shard.sample_meta_list[i].shard_id;
    if (slice >= meta.slices.size())
      fail(Errc::kCorruptHeader, "index references missing slice");
    if (requested[slice]) continue;
    requested[slice] = true;
    const auto& s = meta.slices[slice];
    plan.push_back(DownloadRequest{s.name, s.bytes, s.crc32, epoch, i});
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Download

DownloadEvent download_object(ObjectStore& store, const DownloadRequest& req,
                              const fs::path& staging) {
  DownloadEvent ev;
  ev.object_name = req.object_name;
  for (ev.attempts = 1; ev.attempts <= 2; ++ev.attempts) {
    const Blob data = store.get(req.object_name);
    if (data.size() != req.expected_size ||
        crc32_of(data) != req.expected_crc32) {
      ev.error = "integrity check failed for " + req.object_name;
      continue;
    }
    const fs::path tmp = staging / (req.object_name + ".part");
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) fail(Errc::kIoFailure, "cannot write " + tmp.string());
      out.write(reinterpret_cast<const char*>(data.data()),
                static_cast<std::streamsize>(data.size()));
      if (!out) fail(Errc::kIoFailure, "cannot write " + tmp.string());
    }
    fs::rename(tmp, staging / req.object_name);
    ev.verified = true;
    ev.bytes = data.size();
    ev.error.clear();
    return ev;
  }
  ev.attempts = 2;
  return ev;
}

// ---------------------------------------------------------------------------
// Eviction policy

std::vector<std::string> pick_evictions(const std::vector<StagedFile>& staged,
                                        const DiskBudget& budget) {
  std::uint64_t total = 0;
  for (const auto& f : staged) total += f.bytes;
  const auto threshold = static_cast<std::uint64_t>(
      static_cast<double>(budget.quota_bytes) * budget.high_watermark);
  std::vector<const StagedFile*> candidates;
  for (const auto& f : staged)
    if (f.consumed && f.pending_reads == 0) candidates.push_back(&f);
  std::sort(candidates.begin(), candidates.end(),
            [](const StagedFile* a, const StagedFile* b) {
              return a->consumed_seq < b->consumed_seq;
            });
  std::vector<std::string> out;
  for (const auto* f : candidates) {
    if (total <= threshold) break;
    out.push_back(f->name);
    total -= f->bytes;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Streaming session

namespace {

struct SliceState {
  std::uint64_t bytes = 0;
  std::uint32_t expected_per_epoch = 0;
  bool present = false;
  std::uint32_t pending = 0;
  std::map<std::uint64_t, std::uint32_t> done;  // per-epoch completed reads
  std::uint64_t consumed_epochs = 0;
  std::uint64_t planned_epochs = 0;  // download requests handled so far
  std::uint64_t consumed_seq = 0;
};

struct Session {
  std::mutex mu;
  std::condition_variable cv;
  std::vector<SliceState> slices;
  std::uint64_t seq = 0;
  std::uint64_t gen = 0;  // bumped on any state change, for the evictor
  std::uint64_t staged = 0;
  bool failed = false;
  bool done_all = false;
  Errc errc = Errc::kShutdown;
  std::string error;
  StreamReport report;

  void bump() {
    ++gen;
    cv.notify_all();
  }
  void set_failure(Errc code, const std::string& msg) {
    std::lock_guard lock(mu);
    if (!failed) {
      failed = true;
      errc = code;
      error = msg;
    }
    bump();
  }
};

}  // namespace

std::pair<std::vector<Batch>, StreamReport> stream_dataset(
    ObjectStore& store, const DiskBudget& budget, const ShardSpec& spec,
    const PipelineGraph& graph, std::uint64_t epochs) {
  if (budget.high_watermark <= 0 || budget.high_watermark > 1)
    fail(Errc::kOutOfBounds, "watermark must be in (0, 1]");
  if (epochs == 0) fail(Errc::kOutOfBounds, "epochs must be positive");
  fs::create_directories(budget.staging_dir);

  const MetaIndex meta = fetch_meta_index(store);
  const IndexTable padded =
      pad_for_shards(build_index({meta.header}), spec.num_shards);
  const IndexTable shard = shard_index(padded, spec);
  if (shard.size() == 0) fail(Errc::kEmptyDataset, "shard is empty");

  Session ses;
  ses.slices.resize(meta.slices.size());
  for (std::size_t i = 0; i < meta.slices.size(); ++i)
    ses.slices[i].bytes = meta.slices[i].bytes;
  for (const auto& e : shard.sample_meta_list)
    ++ses.slices[e.shard_id].expected_per_epoch;

  std::vector<DownloadRequest> requests;
  std::vector<std::uint32_t> request_slice;  // slice index per request
  for (std::uint64_t e = 0; e < epochs; ++e)
    for (auto& r : plan_epoch_downloads(meta, spec, e)) {
      for (std::size_t i = 0; i < meta.slices.size(); ++i)
        if (meta.slices[i].name == r.object_name) request_slice.push_back(i);
      requests.push_back(std::move(r));
    }

  const auto t0 = Clock::now();

  std::thread downloader([&] {
    try {
      for (std::size_t r = 0; r < requests.size(); ++r) {
        const std::uint32_t si = request_slice[r];
        {
          std::unique_lock lock(ses.mu);
          auto& sl = ses.slices[si];
          if (sl.present) {
            // already staged from an earlier epoch; retain it
            ++sl.planned_epochs;
            ses.bump();
            continue;
          }
          // gate so that staged bytes never exceed quota before a download
          // starts; the in-flight file is the allowed overshoot
          ses.cv.wait(lock, [&] {
            return ses.failed || ses.staged <= budget.quota_bytes;
          });
          if (ses.failed) return;
          ses.report.peak_staged_bytes =
              std::max(ses.report.peak_staged_bytes,
                       ses.staged + requests[r].expected_size);
        }
        DownloadEvent ev =
            download_object(store, requests[r], budget.staging_dir);
        if (!ev.verified) {
          ses.set_failure(Errc::kIntegrityFailure, ev.error);
          return;
        }
        std::lock_guard lock(ses.mu);
        auto& sl = ses.slices[si];
        sl.present = true;
        ++sl.planned_epochs;
        ses.staged += sl.bytes;
        ses.report.peak_staged_bytes =
            std::max(ses.report.peak_staged_bytes, ses.staged);
        ++ses.report.downloads;
        ses.report.integrity_retries += ev.attempts - 1;
        ses.bump();
      }
    } catch (const PcError& e) {
      ses.set_failure(e.code(), e.what());
    } catch (const std::exception& e) {
      ses.set_failure(Errc::kIoFailure, e.what());
    }
  });

  std::thread evictor([&] {
    std::unique_lock lock(ses.mu);
    std::uint64_t last_gen = 0;
    while (!ses.failed && !ses.done_all) {
      ses.cv.wait(lock, [&] {
        return ses.failed || ses.done_all || ses.gen != last_gen;
      });
      last_gen = ses.gen;
      if (ses.failed || ses.done_all) break;
      const auto threshold = static_cast<std::uint64_t>(
          static_cast<double>(budget.quota_bytes) * budget.high_watermark);
      if (ses.staged <= threshold) continue;
      std::vector<StagedFile> staged;
      for (std::size_t i = 0; i < ses.slices.size(); ++i) {
        const auto& sl = ses.slices[i];
        if (!sl.present) continue;
        staged.push_back(StagedFile{
            meta.slices[i].name, sl.bytes,
            sl.planned_epochs > 0 && sl.consumed_epochs >= sl.planned_epochs,
            sl.consumed_seq, sl.pending});
      }
      bool evicted = false;
      for (const auto& name : pick_evictions(staged, budget)) {
        for (std::size_t i = 0; i < ses.slices.size(); ++i) {
          if (meta.slices[i].name != name) continue;
          ses.slices[i].present = false;
          ses.staged -= ses.slices[i].bytes;
          std::error_code ec;
          fs::remove(budget.staging_dir / name, ec);
          ++ses.report.evictions;
          evicted = true;
        }
      }
      // wake the gated downloader without touching gen (bumping it here
      // would satisfy this loop's own wait predicate and spin)
      if (evicted) ses.cv.notify_all();
    }
  });

  DatasetReader reader(meta.header, budget.staging_dir);
  SourceFn src = [&](std::uint64_t epoch, std::uint64_t idx) -> Sample {
    const MetadataEntry& entry = shard.sample_meta_list[idx];
    const std::uint32_t si = entry.shard_id;
    {
      std::unique_lock lock(ses.mu);
      ses.cv.wait(lock, [&] { return ses.failed || ses.slices[si].present; });
      if (ses.failed) fail(ses.errc, ses.error);
      ++ses.slices[si].pending;
    }
    Sample s;
    try {
      s = reader.read_sample(entry);
    } catch (...) {
      std::lock_guard lock(ses.mu);
      --ses.slices[si].pending;
      ses.bump();
      throw;
    }
    std::lock_guard lock(ses.mu);
    auto& sl = ses.slices[si];
    --sl.pending;
    if (++sl.done[epoch] == sl.expected_per_epoch) {
      ++sl.consumed_epochs;
      sl.consumed_seq = ++ses.seq;
    }
    ses.bump();
    return s;
  };

  PipelineOptions opts;
  opts.epochs = epochs;
  std::vector<Batch> batches;
  try {
    Pipeline pipe(graph, src, shard.size(), opts);
    pipe.start();
    while (auto b = pipe.next_batch()) batches.push_back(std::move(*b));
    pipe.stop();
  } catch (...) {
    ses.set_failure(Errc::kShutdown, "pipeline aborted");
    {
      std::lock_guard lock(ses.mu);
      ses.done_all = true;
      ses.bump();
    }
    downloader.join();
    evictor.join();
    std::lock_guard lock(ses.mu);
    if (ses.failed && ses.errc != Errc::kShutdown) fail(ses.errc, ses.error);
    throw;
  }
  {
    std::lock_guard lock(ses.mu);
    ses.done_all = true;
    ses.bump();
  }
  downloader.join();
  evictor.join();
  {
    std::lock_guard lock(ses.mu);
    if (ses.failed) fail(ses.errc, ses.error);
  }
  ses.report.wall_seconds =
      std::chrono::duration<double>(Clock::now() - t0).count();
  return {std::move(batches), ses.report};
}

}  // namespace pcpipe
