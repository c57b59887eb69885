#pragma once

#include <cstdint>
#include <vector>

#include "pcpipe/format.hpp"
#include "pcpipe/metadata.hpp"

namespace pcpipe {

struct ShardSpec {
  std::uint32_t num_shards = 1;
  std::uint32_t shard_id = 0;  // in [0, num_shards)
};

// Strided assignment: entry i belongs to shard i mod num_shards. Requires the
// index length to be a multiple of num_shards (pad_for_shards first), else
// NotPadded. Per-shard sizes are equal and the shards partition the index.
IndexTable shard_index(const IndexTable& index, const ShardSpec& spec);

// Elementwise arithmetic mean, summed in device-id order so the result is
// deterministic. Throws ShapeMismatch on unequal lengths or an empty list.
std::vector<double> allreduce_mean(const std::vector<std::vector<double>>& grads);

struct ToyModel {
  std::vector<double> params;
  double learning_rate = 0.01;
};

// Toy gradient rule (stand-in for a real model):
//   features x[j] = mean over the cloud of coordinate axis (j mod 3)
//   target   y    = sum_j x[j]
//   gradient g    = (x . params - y) * x
// Per step, every device computes per-sample gradients for its strided share
// of the global batch; device 0 reduces them in ascending global sample order
// and the mean update is applied identically on every device, so the final
// parameters do not depend on the device count.
std::vector<double> toy_gradient(const Sample& sample,
                                 const std::vector<double>& params);

struct SimOptions {
  std::uint32_t num_devices = 1;
  std::uint64_t num_epochs = 1;
  std::uint32_t per_device_batch = 1;  // global batch = devices * this
  std::uint32_t work_us = 0;  // extra CPU burn per sample, for scaling runs
};

struct SimReport {
  std::vector<std::vector<double>> device_params;  // final params per device
  std::vector<double> step_seconds;
  double wall_seconds = 0;
  std::uint64_t steps = 0;
  double max_param_divergence = 0;  // max over steps of inf-norm vs device 0
};

// Runs the data-parallel workflow on in-memory samples: broadcast model0,
// per-step gradient computation on device threads, barrier, deterministic
// mean-reduction, synchronous update. dataset size must be a multiple of the
// global batch (NotPadded otherwise).
SimReport simulate_data_parallel(const std::vector<Sample>& dataset,
                                 const ToyModel& model0, const SimOptions& opts);

}  // namespace pcpipe
