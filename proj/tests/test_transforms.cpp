#include <cmath>
#include <cstring>
#include <set>

#include "doctest.h"
#include "pcpipe/transforms.hpp"
#include "test_util.hpp"

using namespace pcpipe;

namespace {

Blob pack(const std::vector<std::array<float, 3>>& pts) {
  Blob b(pts.size() * 12);
  std::memcpy(b.data(), pts.data(), b.size());
  return b;
}

std::vector<std::array<float, 3>> unpack(const Blob& b) {
  std::vector<std::array<float, 3>> v(b.size() / 12);
  std::memcpy(v.data(), b.data(), b.size());
  return v;
}

Sample make(const std::vector<std::array<float, 3>>& pts) {
  Sample s;
  s.values["data"] = pack(pts);
  return s;
}

std::vector<std::array<float, 3>> points_of(const Sample& s) {
  return unpack(std::get<Blob>(s.values.at("data")));
}

}  // namespace

TEST_CASE("normalize centers and scales to the unit sphere") {
  auto out = points_of(apply_map(MapKind::kNormalize, {}, make({{0, 0, 0}, {2, 0, 0}}), 1));
  REQUIRE(out.size() == 2);
  CHECK(out[0][0] == doctest::Approx(-1.0f));
  CHECK(out[1][0] == doctest::Approx(1.0f));
  CHECK(out[0][1] == 0.0f);
  CHECK(out[1][2] == 0.0f);
}

TEST_CASE("normalize of a repeated point yields zeros") {
  auto out = points_of(apply_map(MapKind::kNormalize, {},
                                 make({{3, 3, 3}, {3, 3, 3}, {3, 3, 3}}), 1));
  for (const auto& p : out)
    for (float c : p) CHECK(c == 0.0f);
}

TEST_CASE("normalized clouds have max radius 1") {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 20; ++i) {
    Sample s;
    s.values["data"] = testutil::coord_blob(64, rng());
    auto out = points_of(apply_map(MapKind::kNormalize, {}, s, 0));
    double mx = 0;
    for (const auto& p : out)
      mx = std::max(mx, std::sqrt(double(p[0]) * p[0] + double(p[1]) * p[1] +
                                  double(p[2]) * p[2]));
    CHECK(mx == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("rotate by theta then -theta restores coordinates") {
  std::vector<std::array<float, 3>> pts = {{1, 0, 0}, {0.3f, -0.7f, 2.f}};
  const double theta = 1.2345;
  auto fwd = apply_map(MapKind::kRotate, json{{"theta", theta}}, make(pts), 1);
  auto back = apply_map(MapKind::kRotate, json{{"theta", -theta}}, fwd, 2);
  auto out = points_of(back);
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(out[i][j] == doctest::Approx(pts[i][j]).epsilon(1e-5));
}

TEST_CASE("rotate moves normals with the points") {
  Sample s = make({{1, 0, 0}});
  s.values["normal"] = pack({{1, 0, 0}});
  auto out = apply_map(MapKind::kRotate, json{{"theta", M_PI / 2}}, s, 1);
  auto n = unpack(std::get<Blob>(out.values["normal"]));
  CHECK(n[0][0] == doctest::Approx(0.0f).epsilon(1e-6));
  CHECK(n[0][1] == doctest::Approx(1.0f));
  CHECK(n[0][2] == 0.0f);
}

TEST_CASE("rotate leaves z untouched") {
  std::mt19937_64 rng(3);
  Sample s;
  s.values["data"] = testutil::coord_blob(32, 5);
  auto before = points_of(s);
  auto after = points_of(apply_map(MapKind::kRotate, {}, s, rng()));
  for (std::size_t i = 0; i < before.size(); ++i)
    CHECK(after[i][2] == before[i][2]);
}

TEST_CASE("translate shifts every point by one shared offset") {
  auto pts = std::vector<std::array<float, 3>>{{0, 0, 0}, {1, 1, 1}};
  auto out = points_of(apply_map(MapKind::kTranslate, {}, make(pts), 7));
  const std::array<float, 3> t = {out[0][0], out[0][1], out[0][2]};
  for (int j = 0; j < 3; ++j) {
    CHECK(std::abs(t[j]) <= 0.2f);
    CHECK(out[1][j] == doctest::Approx(1.0f + t[j]));
  }
}

TEST_CASE("jitter stays within the clip bound") {
  Sample s;
  s.values["data"] = testutil::coord_blob(512, 11);
  auto before = points_of(s);
  auto after = points_of(apply_map(MapKind::kJitter, {}, s, 13));
  for (std::size_t i = 0; i < before.size(); ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(std::abs(after[i][j] - before[i][j]) <= 0.05f + 1e-6f);
}

TEST_CASE("random_scale multiplies by one factor in [0.8, 1.25]") {
  auto pts = std::vector<std::array<float, 3>>{{1, 2, 3}, {-4, 5, -6}};
  auto out = points_of(apply_map(MapKind::kRandomScale, {}, make(pts), 17));
  const float s = out[0][0] / 1.0f;
  CHECK(s >= 0.8f);
  CHECK(s <= 1.25f);
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(out[i][j] == doctest::Approx(pts[i][j] * s));
}

TEST_CASE("flip_yz negates x for about half the seeds") {
  auto pts = std::vector<std::array<float, 3>>{{1, 2, 3}};
  int flipped = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    auto out = points_of(apply_map(MapKind::kFlipYz, {}, make(pts), seed));
    CHECK(std::abs(out[0][0]) == 1.0f);
    CHECK(out[0][1] == 2.0f);
    CHECK(out[0][2] == 3.0f);
    if (out[0][0] < 0) ++flipped;
  }
  CHECK(flipped > 60);
  CHECK(flipped < 140);
}

TEST_CASE("color_augment clips to [0,1] and leaves points alone") {
  Sample s = make({{0, 0, 0}, {1, 1, 1}});
  s.values["color"] = pack({{0.0f, 0.5f, 1.0f}, {0.02f, 0.98f, 0.5f}});
  auto out = apply_map(MapKind::kColorAugment, {}, s, 23);
  CHECK(points_of(out) == points_of(s));
  auto colors = unpack(std::get<Blob>(out.values["color"]));
  auto before = unpack(std::get<Blob>(s.values["color"]));
  for (std::size_t i = 0; i < colors.size(); ++i)
    for (int j = 0; j < 3; ++j) {
      CHECK(colors[i][j] >= 0.0f);
      CHECK(colors[i][j] <= 1.0f);
      CHECK(std::abs(colors[i][j] - before[i][j]) <= 0.1f + 1e-6f);
    }
}

TEST_CASE("random_crop keeps a non-empty subset of the input") {
  Sample s;
  s.values["data"] = testutil::coord_blob(256, 29);
  auto before = points_of(s);
  std::set<std::array<float, 3>> input(before.begin(), before.end());
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto out = points_of(apply_map(MapKind::kRandomCrop, {}, s, seed));
    CHECK(!out.empty());
    CHECK(out.size() <= before.size());
    for (const auto& p : out) CHECK(input.count(p) == 1);
  }
}

TEST_CASE("random_crop filters attribute rows consistently") {
  Sample s;
  s.values["data"] = testutil::coord_blob(128, 31);
  s.values["normal"] = testutil::coord_blob(128, 32);
  auto out = apply_map(MapKind::kRandomCrop, {}, s, 3);
  CHECK(std::get<Blob>(out.values["data"]).size() ==
        std::get<Blob>(out.values["normal"]).size());
}

TEST_CASE("downsample without replacement picks distinct input points") {
  Sample s;
  s.values["data"] = testutil::coord_blob(1024, 37);
  auto before = points_of(s);
  std::set<std::array<float, 3>> input(before.begin(), before.end());
  auto out =
      points_of(apply_map(MapKind::kDownsample, json{{"num_points", 512}}, s, 41));
  REQUIRE(out.size() == 512);
  std::set<std::array<float, 3>> seen(out.begin(), out.end());
  CHECK(seen.size() == 512);  // distinct
  for (const auto& p : out) CHECK(input.count(p) == 1);
}

TEST_CASE("downsample grows with replacement when the cloud is small") {
  auto out = points_of(apply_map(MapKind::kDownsample, json{{"num_points", 8}},
                                 make({{1, 1, 1}, {2, 2, 2}}), 43));
  REQUIRE(out.size() == 8);
  for (const auto& p : out) CHECK((p[0] == 1.0f || p[0] == 2.0f));
}

TEST_CASE("missing or empty coordinates are rejected") {
  Sample empty;
  empty.values["data"] = Blob{};
  CHECK_THROWS_AS((void)apply_map(MapKind::kNormalize, {}, empty, 1), PcError);
  Sample none;
  CHECK_THROWS_AS((void)apply_map(MapKind::kNormalize, {}, none, 1), PcError);
}

TEST_CASE("mix_seed is deterministic and spreads over its arguments") {
  CHECK(mix_seed(1, 2, 3, 4) == mix_seed(1, 2, 3, 4));
  std::set<std::uint64_t> seeds;
  for (std::uint64_t e = 0; e < 4; ++e)
    for (std::uint64_t i = 0; i < 16; ++i)
      for (std::uint64_t op = 0; op < 4; ++op)
        seeds.insert(mix_seed(42, e, i, op));
  CHECK(seeds.size() == 4 * 16 * 4);
  CHECK(mix_seed(1, 0, 0, 0) != mix_seed(2, 0, 0, 0));
}

TEST_CASE("same seed gives identical outputs") {
  Sample s;
  s.values["data"] = testutil::coord_blob(64, 47);
  for (auto kind : {MapKind::kTranslate, MapKind::kJitter, MapKind::kRotate,
                    MapKind::kRandomScale, MapKind::kRandomCrop}) {
    auto a = apply_map(kind, {}, s, 777);
    auto b = apply_map(kind, {}, s, 777);
    CHECK(a == b);
  }
}

TEST_CASE("map kind names round-trip") {
  for (auto kind : {MapKind::kNormalize, MapKind::kTranslate, MapKind::kJitter,
                    MapKind::kRotate, MapKind::kRandomScale, MapKind::kFlipYz,
                    MapKind::kColorAugment, MapKind::kRandomCrop,
                    MapKind::kDownsample})
    CHECK(map_kind_from_name(map_kind_name(kind)) == kind);
  CHECK_THROWS_AS((void)map_kind_from_name("blur"), PcError);
}
