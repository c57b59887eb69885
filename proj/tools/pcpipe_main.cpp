#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <thread>

#include "CLI11.hpp"
#include "pcpipe/autotune.hpp"
#include "pcpipe/bench.hpp"
#include "pcpipe/distributed.hpp"
#include "pcpipe/ingest.hpp"
#include "pcpipe/metadata.hpp"
#include "pcpipe/object_store.hpp"
#include "pcpipe/streaming.hpp"

namespace {

using namespace pcpipe;

std::uint64_t base_seed_from_env(std::uint64_t fallback) {
  if (const char* s = std::getenv("PCPIPE_SEED")) return std::stoull(s);
  return fallback;
}

Schema schema_from_flags(bool normals, bool colors, bool intensity,
                         bool label) {
  Schema s;
  s.fields.emplace_back("data", FieldType{FieldKind::kBytes, {}});
  if (normals) s.fields.emplace_back("normal", FieldType{FieldKind::kBytes, {}});
  if (colors) s.fields.emplace_back("color", FieldType{FieldKind::kBytes, {}});
  if (intensity)
    s.fields.emplace_back("intensity", FieldType{FieldKind::kBytes, {}});
  if (label) s.fields.emplace_back("label", FieldType{FieldKind::kInt32, {}});
  return s;
}

struct DatasetHandle {
  std::shared_ptr<DatasetReader> reader;
  std::shared_ptr<IndexTable> index;
};

DatasetHandle open_dataset(const std::string& path) {
  DatasetHandle h;
  h.reader = std::make_shared<DatasetReader>(path);
  h.index = std::make_shared<IndexTable>(build_index({h.reader->header()}));
  return h;
}

SourceFn dataset_source(const DatasetHandle& h) {
  return [h](std::uint64_t, std::uint64_t i) {
    return h.reader->read_sample(h.index->sample_meta_list[i]);
  };
}

// "name" or "name:{json params}"
std::pair<MapKind, json> parse_map_spec(const std::string& spec) {
  const auto colon = spec.find(':');
  const std::string name = spec.substr(0, colon);
  json params = json::object();
  if (colon != std::string::npos)
    params = json::parse(spec.substr(colon + 1));
  return {map_kind_from_name(name), params};
}

PipelineGraph make_graph(const std::vector<std::string>& map_specs,
                         std::uint32_t batch_size, std::uint32_t workers,
                         std::uint32_t queue, std::uint64_t base_seed) {
  PipelineGraph g;
  g.base_seed = base_seed;
  std::uint32_t id = 0;
  OpNode src;
  src.id = id++;
  src.kind = OpNode::Kind::kSource;
  src.num_workers = workers;
  src.out_queue_capacity = queue;
  g.nodes.push_back(src);
  for (const auto& spec : map_specs) {
    OpNode m;
    m.id = id++;
    m.kind = OpNode::Kind::kMap;
    m.transforms.push_back(parse_map_spec(spec));
    m.seed_op_ids.push_back(m.id);
    m.num_workers = workers;
    m.out_queue_capacity = queue;
    g.nodes.push_back(m);
  }
  OpNode batch;
  batch.id = id++;
  batch.kind = OpNode::Kind::kBatch;
  batch.batch_size = batch_size;
  batch.out_queue_capacity = queue;
  g.nodes.push_back(batch);
  OpNode sink;
  sink.id = id++;
  sink.kind = OpNode::Kind::kSink;
  g.nodes.push_back(sink);
  g.validate();
  return g;
}

std::uint64_t fnv1a(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

int run(int argc, char** argv) {
  CLI::App app{"pcpipe: point-cloud dataset toolkit"};
  app.require_subcommand(1);

  // convert
  auto* convert_cmd = app.add_subcommand("convert", "Convert raw point-cloud files");
  std::string cv_kind = "xyz_text", cv_source, cv_out, cv_stem = "dataset";
  std::uint32_t cv_slices = 1, cv_group = 256;
  std::uint32_t cv_points = 0;
  bool cv_normals = false, cv_colors = false, cv_intensity = false,
       cv_nolabel = false;
  convert_cmd->add_option("--kind", cv_kind, "ply_ascii|ply_binary_le|obj|xyz_text|kitti_bin|npy");
  convert_cmd->add_option("--source", cv_source, "input directory")->required();
  convert_cmd->add_option("--out", cv_out, "output directory")->required();
  convert_cmd->add_option("--slices", cv_slices, "slice file count");
  convert_cmd->add_option("--group-size", cv_group, "samples per group");
  convert_cmd->add_option("--num-points", cv_points, "resample clouds to N points");
  convert_cmd->add_option("--stem", cv_stem, "output file stem");
  convert_cmd->add_flag("--normals", cv_normals, "include a normal field");
  convert_cmd->add_flag("--colors", cv_colors, "include a color field");
  convert_cmd->add_flag("--intensity", cv_intensity, "include an intensity field");
  convert_cmd->add_flag("--no-label", cv_nolabel, "omit the label field");

  // inspect
  auto* inspect_cmd = app.add_subcommand("inspect", "Print dataset layout");
  std::string in_file;
  bool in_index = false;
  inspect_cmd->add_option("file", in_file, "primary .pcrecord file")->required();
  inspect_cmd->add_flag("--index", in_index, "also dump the sample index as JSON");

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Measure loading throughput");
  std::string be_data, be_json_out, be_csv_out;
  std::vector<std::string> be_maps;
  std::uint32_t be_batch = 32, be_repeats = 1, be_workers = 1, be_queue = 8,
                be_interval = 10;
  std::uint64_t be_seed = 0;
  bench_cmd->add_option("--data", be_data, "primary .pcrecord file")->required();
  bench_cmd->add_option("--map", be_maps, "map op, name[:params-json]; repeatable");
  bench_cmd->add_option("--batch-size", be_batch, "samples per batch");
  bench_cmd->add_option("--repeats", be_repeats, "full passes to time");
  bench_cmd->add_option("--workers", be_workers, "workers per op");
  bench_cmd->add_option("--queue", be_queue, "queue capacity per op");
  bench_cmd->add_option("--interval-ms", be_interval, "usage sampling cadence");
  bench_cmd->add_option("--seed", be_seed, "base seed");
  bench_cmd->add_option("--json", be_json_out, "write the JSON report here");
  bench_cmd->add_option("--csv", be_csv_out, "write the CSV report here");

  // tune
  auto* tune_cmd = app.add_subcommand("tune", "Autotune pipeline parallelism");
  std::string tu_data, tu_out = "best.json";
  std::vector<std::string> tu_maps;
  std::uint32_t tu_iters = 10, tu_batch = 32, tu_max_workers = 8,
                tu_window_ms = 300;
  std::uint64_t tu_seed = 0;
  tune_cmd->add_option("--data", tu_data, "primary .pcrecord file")->required();
  tune_cmd->add_option("--map", tu_maps, "map op, name[:params-json]; repeatable")
      ->required();
  tune_cmd->add_option("--iterations", tu_iters, "search iterations");
  tune_cmd->add_option("--interval-ms", tu_window_ms, "evaluation window");
  tune_cmd->add_option("--batch-size", tu_batch, "samples per batch");
  tune_cmd->add_option("--max-workers", tu_max_workers, "search bound");
  tune_cmd->add_option("--seed", tu_seed, "search seed");
  tune_cmd->add_option("--out", tu_out, "best-config JSON path");

  // shard-sim
  auto* shard_cmd = app.add_subcommand("shard-sim", "Simulate data-parallel training");
  std::string sh_data;
  std::uint32_t sh_shards = 2, sh_batch = 1;
  std::uint64_t sh_epochs = 1, sh_seed = 0;
  shard_cmd->add_option("--data", sh_data, "primary .pcrecord file")->required();
  shard_cmd->add_option("--num-shards", sh_shards, "simulated device count");
  shard_cmd->add_option("--epochs", sh_epochs, "training epochs");
  shard_cmd->add_option("--batch-size", sh_batch, "per-device batch size");
  shard_cmd->add_option("--seed", sh_seed, "model init seed");

  // serve-store
  auto* serve_cmd = app.add_subcommand("serve-store", "Run the mock object-store server");
  std::string sv_root, sv_host = "127.0.0.1";
  int sv_port = 8080;
  serve_cmd->add_option("--root", sv_root, "directory to serve")->required();
  serve_cmd->add_option("--host", sv_host, "bind address");
  serve_cmd->add_option("--port", sv_port, "bind port");

  // stream
  auto* stream_cmd = app.add_subcommand("stream", "Stream a dataset from an object store");
  std::string st_url, st_staging = "staging";
  std::vector<std::string> st_maps;
  std::uint64_t st_quota = 0;
  double st_watermark = 0.8;
  std::uint32_t st_batch = 32, st_shards = 1, st_shard_id = 0, st_workers = 1,
                st_queue = 8;
  std::uint64_t st_seed = 0, st_epochs = 1;
  stream_cmd->add_option("--store-url", st_url, "http://host:port or a directory")
      ->required();
  stream_cmd->add_option("--quota-bytes", st_quota, "staging disk quota")->required();
  stream_cmd->add_option("--watermark", st_watermark, "eviction threshold fraction");
  stream_cmd->add_option("--staging", st_staging, "staging directory");
  stream_cmd->add_option("--map", st_maps, "map op, name[:params-json]; repeatable");
  stream_cmd->add_option("--batch-size", st_batch, "samples per batch");
  stream_cmd->add_option("--num-shards", st_shards, "total shards");
  stream_cmd->add_option("--shard-id", st_shard_id, "this shard");
  stream_cmd->add_option("--workers", st_workers, "workers per op");
  stream_cmd->add_option("--queue", st_queue, "queue capacity per op");
  stream_cmd->add_option("--epochs", st_epochs, "epochs to stream");
  stream_cmd->add_option("--seed", st_seed, "base seed");

  CLI11_PARSE(app, argc, argv);

  if (convert_cmd->parsed()) {
    ConvertOptions opts;
    opts.kind = source_kind_from_name(cv_kind);
    opts.slice_count = cv_slices;
    opts.group_size = cv_group;
    if (cv_points > 0) opts.num_points = cv_points;
    opts.stem = cv_stem;
    const Schema schema =
        schema_from_flags(cv_normals, cv_colors, cv_intensity, !cv_nolabel);
    const auto result = convert(cv_source, schema, opts, cv_out);
    // meta index next to the slices, so the directory is servable as a store
    const auto primary =
        std::filesystem::path(cv_out) / result.header.slice_paths.front();
    write_meta_index(build_meta_index(primary), cv_out);
    std::cout << result.report.to_json().dump(2) << "\n";
    return 0;
  }

  if (inspect_cmd->parsed()) {
    const FileHeader header = read_header(in_file);
    json groups_per_slice = json::array();
    for (std::size_t i = 0; i < header.slice_paths.size(); ++i) {
      std::uint64_t n = 0, samples = 0;
      for (const auto& g : header.groups)
        if (g.slice == i) {
          ++n;
          samples += g.sample_count;
        }
      groups_per_slice.push_back(json{{"slice", header.slice_paths[i]},
                                      {"groups", n},
                                      {"samples", samples}});
    }
    json doc{{"schema", header.schema.to_json()},
             {"total_size_bytes", header.total_size_bytes},
             {"sample_count", header.sample_count()},
             {"group_count", header.groups.size()},
             {"slices", groups_per_slice}};
    if (in_index) doc["index"] = build_index({header}).to_json();
    std::cout << doc.dump(2) << "\n";
    return 0;
  }

  if (bench_cmd->parsed()) {
    const auto h = open_dataset(be_data);
    const auto graph = make_graph(be_maps, be_batch, be_workers, be_queue,
                                  base_seed_from_env(be_seed));
    const auto report = run_benchmark(graph, dataset_source(h),
                                      h.index->size(), be_repeats, be_interval);
    std::cout << report.to_json().dump(2) << "\n";
    if (!be_json_out.empty()) {
      std::ofstream out(be_json_out, std::ios::trunc);
      out << report.to_json().dump(2);
    }
    if (!be_csv_out.empty()) {
      std::ofstream out(be_csv_out, std::ios::trunc);
      out << report.to_csv();
    }
    return 0;
  }

  if (tune_cmd->parsed()) {
    const auto h = open_dataset(tu_data);
    auto graph = make_graph(tu_maps, tu_batch, 1, 8,
                            base_seed_from_env(tu_seed));
    PipelineOptions popts;
    popts.loop_forever = true;
    popts.max_workers = tu_max_workers;
    Pipeline pipe(graph, dataset_source(h), h.index->size(), popts);
    pipe.start();
    std::thread drain([&pipe] {
      try {
        while (pipe.next_batch()) {
        }
      } catch (...) {
      }
    });
    SearchSpace space;
    space.op_ids = graph.map_op_ids();
    space.max_workers = tu_max_workers;
    TuneOptions topts;
    topts.iterations = tu_iters;
    topts.eval_window = std::chrono::milliseconds(tu_window_ms);
    topts.seed = tu_seed;
    const auto result = autotune(pipe, space, topts);
    pipe.stop();
    drain.join();
    persist_best(result.best, tu_out);
    json ops = json::object();
    for (const auto& [id, wc] : result.best.ops)
      ops[std::to_string(id)] =
          json{{"workers", wc.first}, {"queue_capacity", wc.second}};
    std::cout << json{{"best_objective", result.best.objective},
                      {"ops", ops},
                      {"evaluations", result.history.size()},
                      {"out", tu_out}}
                     .dump(2)
              << "\n";
    return 0;
  }

  if (shard_cmd->parsed()) {
    const auto h = open_dataset(sh_data);
    const IndexTable padded = pad_for_shards(
        *h.index, sh_shards * sh_batch);
    std::vector<Sample> samples;
    samples.reserve(padded.size());
    for (const auto& e : padded.sample_meta_list)
      samples.push_back(h.reader->read_sample(e));
    ToyModel model;
    std::mt19937_64 rng(sh_seed);
    std::uniform_real_distribution<double> d(-0.1, 0.1);
    model.params.resize(6);
    for (auto& p : model.params) p = d(rng);
    model.learning_rate = 0.01;
    SimOptions opts;
    opts.num_devices = sh_shards;
    opts.num_epochs = sh_epochs;
    opts.per_device_batch = sh_batch;
    const auto report = simulate_data_parallel(samples, model, opts);
    const auto& fin = report.device_params.front();
    std::cout << json{{"final_params_hash",
                       fnv1a(fin.data(), fin.size() * sizeof(double))},
                      {"steps", report.steps},
                      {"wall_seconds", report.wall_seconds},
                      {"max_param_divergence", report.max_param_divergence},
                      {"step_seconds", report.step_seconds}}
                     .dump(2)
              << "\n";
    return 0;
  }

  if (serve_cmd->parsed()) {
    StoreServer server(sv_root, sv_host, sv_port);
    std::cout << "serving " << sv_root << " on " << sv_host << ":"
              << server.port() << "\n";
    server.wait();
    return 0;
  }

  if (stream_cmd->parsed()) {
    auto store = open_store(st_url);
    DiskBudget budget;
    budget.quota_bytes = st_quota;
    budget.high_watermark = st_watermark;
    budget.staging_dir = st_staging;
    ShardSpec spec{st_shards, st_shard_id};
    auto graph = make_graph(st_maps, st_batch, st_workers, st_queue,
                            base_seed_from_env(st_seed));
    const auto [batches, report] =
        stream_dataset(*store, budget, spec, graph, st_epochs);
    std::uint64_t items = 0;
    for (const auto& b : batches) items += b.samples.size();
    std::cout << json{{"batches", batches.size()},
                      {"items", items},
                      {"downloads", report.downloads},
                      {"evictions", report.evictions},
                      {"peak_staged_bytes", report.peak_staged_bytes},
                      {"wall_seconds", report.wall_seconds}}
                     .dump(2)
              << "\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const pcpipe::PcError& e) {
    std::cerr << "error (" << pcpipe::errc_name(e.code()) << "): " << e.what()
              << "\n";
    return e.code() == pcpipe::Errc::kUsage ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
