#pragma once

#include <cstdint>
#include <string>

#include "pcpipe/format.hpp"

namespace pcpipe {

enum class MapKind {
  kNormalize,
  kTranslate,
  kJitter,
  kRotate,
  kRandomScale,
  kFlipYz,
  kColorAugment,
  kRandomCrop,
  kDownsample,
};

MapKind map_kind_from_name(const std::string& name);
const char* map_kind_name(MapKind kind);

// Deterministic per-(sample, op) seed; keeps augmentation reproducible under
// any parallelism.
std::uint64_t mix_seed(std::uint64_t base_seed, std::uint64_t epoch,
                       std::uint64_t sample_index, std::uint64_t op_id);

// Applies one map operator to the sample's "data" coordinates (float32 Nx3
// blob); "normal" and "color" blobs follow where the transform affects them.
// params: {"num_points": n} for downsample, optional overrides elsewhere.
Sample apply_map(MapKind kind, const json& params, Sample sample,
                 std::uint64_t rng_seed);

}  // namespace pcpipe
