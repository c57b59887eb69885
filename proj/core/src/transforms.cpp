#include "pcpipe/transforms.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>
#include <cstring>
#include <numeric>
#include <random>

namespace pcpipe {

namespace {

struct Vec3 {
  float x, y, z;
};

std::vector<Vec3> unpack(const Blob& b, const char* field) {
  if (b.size() % 12 != 0)
    fail(Errc::kMissingField, std::string(field) + " is not an Nx3 float32 blob");
  std::vector<Vec3> v(b.size() / 12);
  std::memcpy(v.data(), b.data(), b.size());
  return v;
}

Blob pack(const std::vector<Vec3>& v) {
  Blob b(v.size() * 12);
  std::memcpy(b.data(), v.data(), b.size());
  return b;
}

std::vector<Vec3> get_points(const Sample& s) {
  auto it = s.values.find("data");
  if (it == s.values.end() || !std::holds_alternative<Blob>(it->second))
    fail(Errc::kMissingField, "sample has no 'data' coordinates");
  auto pts = unpack(std::get<Blob>(it->second), "data");
  if (pts.empty()) fail(Errc::kEmptyCloud, "zero points");
  return pts;
}

std::vector<Vec3>* maybe_unpack(Sample& s, const char* name,
                                std::vector<Vec3>& storage, bool& present) {
  auto it = s.values.find(name);
  present = it != s.values.end() && std::holds_alternative<Blob>(it->second) &&
            !std::get<Blob>(it->second).empty();
  if (!present) return nullptr;
  storage = unpack(std::get<Blob>(it->second), name);
  return &storage;
}

}  // namespace

MapKind map_kind_from_name(const std::string& name) {
  if (name == "normalize") return MapKind::kNormalize;
  if (name == "translate") return MapKind::kTranslate;
  if (name == "jitter") return MapKind::kJitter;
  if (name == "rotate") return MapKind::kRotate;
  if (name == "random_scale") return MapKind::kRandomScale;
  if (name == "flip_yz") return MapKind::kFlipYz;
  if (name == "color_augment") return MapKind::kColorAugment;
  if (name == "random_crop") return MapKind::kRandomCrop;
  if (name == "downsample") return MapKind::kDownsample;
  fail(Errc::kUnknownOp, "unknown map '" + name + "'");
}

const char* map_kind_name(MapKind kind) {
  switch (kind) {
    case MapKind::kNormalize: return "normalize";
    case MapKind::kTranslate: return "translate";
    case MapKind::kJitter: return "jitter";
    case MapKind::kRotate: return "rotate";
    case MapKind::kRandomScale: return "random_scale";
    case MapKind::kFlipYz: return "flip_yz";
    case MapKind::kColorAugment: return "color_augment";
    case MapKind::kRandomCrop: return "random_crop";
    case MapKind::kDownsample: return "downsample";
  }
  return "?";
}

std::uint64_t mix_seed(std::uint64_t base_seed, std::uint64_t epoch,
                       std::uint64_t sample_index, std::uint64_t op_id) {
  // splitmix64 chain
  auto mix = [](std::uint64_t h, std::uint64_t v) {
    h += 0x9e3779b97f4a7c15ull + v;
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
    return h ^ (h >> 31);
  };
  std::uint64_t h = mix(base_seed, 0x706370ull);
  h = mix(h, epoch);
  h = mix(h, sample_index);
  h = mix(h, op_id);
  return h;
}

Sample apply_map(MapKind kind, const json& params, Sample sample,
                 std::uint64_t rng_seed) {
  // Fixed per-item cost knobs, used to inject deterministic operator cost
  // when benchmarking or exercising bottleneck detection. "busy_us" burns
  // CPU, "sleep_us" blocks without consuming it.
  if (params.is_object()) {
    if (auto it = params.find("sleep_us"); it != params.end())
      std::this_thread::sleep_for(
          std::chrono::microseconds(it->get<std::int64_t>()));
    if (auto it = params.find("busy_us"); it != params.end()) {
      const auto until = std::chrono::steady_clock::now() +
                         std::chrono::microseconds(it->get<std::int64_t>());
      volatile std::uint64_t sink = 0;
      while (std::chrono::steady_clock::now() < until) sink += 1;
    }
  }
  std::mt19937_64 rng(rng_seed);
  auto pts = get_points(sample);
  std::vector<Vec3> normals_storage, colors_storage;
  bool has_normals = false, has_colors = false;
  auto* normals = maybe_unpack(sample, "normal", normals_storage, has_normals);
  auto* colors = maybe_unpack(sample, "color", colors_storage, has_colors);

  switch (kind) {
    case MapKind::kNormalize: {
      double cx = 0, cy = 0, cz = 0;
      for (const auto& p : pts) {
        cx += p.x;
        cy += p.y;
        cz += p.z;
      }
      const auto n = static_cast<double>(pts.size());
      cx /= n;
      cy /= n;
      cz /= n;
      double s = 0;
      for (const auto& p : pts)
        s = std::max(s, std::sqrt((p.x - cx) * (p.x - cx) +
                                  (p.y - cy) * (p.y - cy) +
                                  (p.z - cz) * (p.z - cz)));
      for (auto& p : pts) {
        if (s == 0) {
          p = {0, 0, 0};
        } else {
          p.x = static_cast<float>((p.x - cx) / s);
          p.y = static_cast<float>((p.y - cy) / s);
          p.z = static_cast<float>((p.z - cz) / s);
        }
      }
      break;
    }
    case MapKind::kTranslate: {
      std::uniform_real_distribution<float> d(-0.2f, 0.2f);
      const float tx = d(rng), ty = d(rng), tz = d(rng);
      for (auto& p : pts) {
        p.x += tx;
        p.y += ty;
        p.z += tz;
      }
      break;
    }
    case MapKind::kJitter: {
      std::normal_distribution<float> d(0.0f, 0.01f);
      auto clip = [](float v) { return std::clamp(v, -0.05f, 0.05f); };
      for (auto& p : pts) {
        p.x += clip(d(rng));
        p.y += clip(d(rng));
        p.z += clip(d(rng));
      }
      break;
    }
    case MapKind::kRotate: {
      float theta;
      if (params.contains("theta")) {
        theta = params["theta"].get<float>();  // forced angle, for tests
      } else {
        std::uniform_real_distribution<float> d(
            0.0f, static_cast<float>(2.0 * M_PI));
        theta = d(rng);
      }
      const float c = std::cos(theta), s = std::sin(theta);
      auto rot = [&](std::vector<Vec3>& v) {
        for (auto& p : v) {
          const float x = p.x * c - p.y * s;
          const float y = p.x * s + p.y * c;
          p.x = x;
          p.y = y;
        }
      };
      rot(pts);
      if (normals) rot(*normals);
      break;
    }
    case MapKind::kRandomScale: {
      std::uniform_real_distribution<float> d(0.8f, 1.25f);
      const float s = d(rng);
      for (auto& p : pts) {
        p.x *= s;
        p.y *= s;
        p.z *= s;
      }
      break;
    }
    case MapKind::kFlipYz: {
      std::uniform_real_distribution<float> d(0.0f, 1.0f);
      if (d(rng) < 0.5f) {
        for (auto& p : pts) p.x = -p.x;
        if (normals)
          for (auto& p : *normals) p.x = -p.x;
      }
      break;
    }
    case MapKind::kColorAugment: {
      if (!colors) fail(Errc::kMissingField, "color_augment needs 'color'");
      std::uniform_real_distribution<float> d(-0.1f, 0.1f);
      for (auto& c : *colors) {
        c.x = std::clamp(c.x + d(rng), 0.0f, 1.0f);
        c.y = std::clamp(c.y + d(rng), 0.0f, 1.0f);
        c.z = std::clamp(c.z + d(rng), 0.0f, 1.0f);
      }
      break;
    }
    case MapKind::kRandomCrop: {
      Vec3 lo = pts[0], hi = pts[0];
      for (const auto& p : pts) {
        lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
        hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
      }
      std::uniform_real_distribution<float> df(0.7f, 1.0f);
      std::uniform_real_distribution<float> du(0.0f, 1.0f);
      Vec3 blo, bhi;
      auto axis = [&](float l, float h, float& bl, float& bh) {
        const float extent = h - l;
        const float f = df(rng);
        const float start = l + du(rng) * extent * (1.0f - f);
        bl = start;
        bh = start + extent * f;
      };
      axis(lo.x, hi.x, blo.x, bhi.x);
      axis(lo.y, hi.y, blo.y, bhi.y);
      axis(lo.z, hi.z, blo.z, bhi.z);
      std::vector<std::size_t> keep;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto& p = pts[i];
        if (p.x >= blo.x && p.x <= bhi.x && p.y >= blo.y && p.y <= bhi.y &&
            p.z >= blo.z && p.z <= bhi.z)
          keep.push_back(i);
      }
      if (keep.empty()) break;  // fall back to the full cloud
      auto filter = [&](std::vector<Vec3>& v) {
        std::vector<Vec3> out;
        out.reserve(keep.size());
        for (auto i : keep) out.push_back(v[i]);
        v = std::move(out);
      };
      filter(pts);
      if (normals) filter(*normals);
      if (colors) filter(*colors);
      if (auto it = sample.values.find("intensity");
          it != sample.values.end() && std::holds_alternative<Blob>(it->second)) {
        auto& blob = std::get<Blob>(it->second);
        std::vector<float> in(blob.size() / 4);
        std::memcpy(in.data(), blob.data(), blob.size());
        if (in.size() >= keep.size()) {
          std::vector<float> out;
          for (auto i : keep)
            if (i < in.size()) out.push_back(in[i]);
          Blob nb(out.size() * 4);
          std::memcpy(nb.data(), out.data(), nb.size());
          blob = std::move(nb);
        }
      }
      break;
    }
    case MapKind::kDownsample: {
      const std::size_t target = params.at("num_points").get<std::size_t>();
      if (target == 0) fail(Errc::kOutOfBounds, "num_points must be positive");
      std::vector<std::size_t> idx;
      if (pts.size() >= target) {
        // uniform subsample without replacement (partial Fisher-Yates)
        std::vector<std::size_t> all(pts.size());
        std::iota(all.begin(), all.end(), 0);
        for (std::size_t i = 0; i < target; ++i) {
          std::uniform_int_distribution<std::size_t> d(i, all.size() - 1);
          std::swap(all[i], all[d(rng)]);
          idx.push_back(all[i]);
        }
      } else {
        std::uniform_int_distribution<std::size_t> d(0, pts.size() - 1);
        for (std::size_t i = 0; i < target; ++i) idx.push_back(d(rng));
      }
      auto take = [&](std::vector<Vec3>& v) {
        std::vector<Vec3> out;
        out.reserve(idx.size());
        for (auto i : idx) out.push_back(v[i]);
        v = std::move(out);
      };
      take(pts);
      if (normals) take(*normals);
      if (colors) take(*colors);
      break;
    }
  }

  sample.values["data"] = pack(pts);
  if (normals) sample.values["normal"] = pack(*normals);
  if (colors) sample.values["color"] = pack(*colors);
  return sample;
}

}  // namespace pcpipe
