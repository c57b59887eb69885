#include <cstring>
#include <fstream>
#include <functional>

#include "doctest.h"
#include "pcpipe/ingest.hpp"
#include "pcpipe/metadata.hpp"
#include "test_util.hpp"

using namespace pcpipe;
using testutil::TempDir;

namespace {

std::span<const std::uint8_t> as_bytes(const std::string& s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const PcError& e) {
    return e.code();
  }
  FAIL("expected a PcError");
  return Errc::kUsage;
}

void write_file(const std::filesystem::path& p, const std::string& content) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

std::string npy_file(const std::string& descr, std::size_t rows,
                     std::size_t cols, const std::vector<double>& values) {
  std::string header = "{'descr': '" + descr +
                       "', 'fortran_order': False, 'shape': (" +
                       std::to_string(rows) + ", " + std::to_string(cols) +
                       "), }";
  while ((10 + header.size()) % 16 != 15) header.push_back(' ');
  header.push_back('\n');
  std::string out("\x93NUMPY", 6);
  out.push_back(1);
  out.push_back(0);
  const std::uint16_t hlen = static_cast<std::uint16_t>(header.size());
  out.append(reinterpret_cast<const char*>(&hlen), 2);
  out += header;
  for (double v : values) {
    if (descr == "<f8") {
      out.append(reinterpret_cast<const char*>(&v), 8);
    } else {
      const float f = static_cast<float>(v);
      out.append(reinterpret_cast<const char*>(&f), 4);
    }
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// PLY

static const char* kAsciiPly =
    "ply\n"
    "format ascii 1.0\n"
    "comment fixture\n"
    "element vertex 3\n"
    "property float x\nproperty float y\nproperty float z\n"
    "property float nx\nproperty float ny\nproperty float nz\n"
    "end_header\n"
    "0 0 0 0 0 1\n"
    "1 0 0 0 1 0\n"
    "0 1 0 1 0 0\n";

TEST_CASE("ascii ply with normals") {
  auto cloud = parse_source(as_bytes(kAsciiPly), SourceKind::kPlyAscii);
  REQUIRE(cloud.points.size() == 3);
  REQUIRE(cloud.normals.size() == 3);
  CHECK(cloud.points[1] == std::array<float, 3>{1, 0, 0});
  CHECK(cloud.normals[0] == std::array<float, 3>{0, 0, 1});
  CHECK(cloud.colors.empty());
  CHECK_FALSE(cloud.narrowed);
}

TEST_CASE("binary ply with uchar colors scaled to [0,1]") {
  std::string s =
      "ply\nformat binary_little_endian 1.0\nelement vertex 2\n"
      "property float x\nproperty float y\nproperty float z\n"
      "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      "end_header\n";
  auto put_vertex = [&](float x, float y, float z, std::uint8_t r,
                        std::uint8_t g, std::uint8_t b) {
    s.append(reinterpret_cast<const char*>(&x), 4);
    s.append(reinterpret_cast<const char*>(&y), 4);
    s.append(reinterpret_cast<const char*>(&z), 4);
    s.push_back(static_cast<char>(r));
    s.push_back(static_cast<char>(g));
    s.push_back(static_cast<char>(b));
  };
  put_vertex(1, 2, 3, 255, 0, 51);
  put_vertex(4, 5, 6, 0, 255, 0);
  auto cloud = parse_source(as_bytes(s), SourceKind::kPlyBinaryLe);
  REQUIRE(cloud.points.size() == 2);
  REQUIRE(cloud.colors.size() == 2);
  CHECK(cloud.points[1] == std::array<float, 3>{4, 5, 6});
  CHECK(cloud.colors[0][0] == doctest::Approx(1.0f));
  CHECK(cloud.colors[0][2] == doctest::Approx(51.0f / 255.0f));
}

TEST_CASE("ply error paths") {
  CHECK(code_of([] {
          (void)parse_source(as_bytes("solid nope\n"), SourceKind::kPlyAscii);
        }) == Errc::kMalformedHeader);
  CHECK(code_of([] {
          (void)parse_source(
              as_bytes("ply\nformat binary_big_endian 1.0\nelement vertex 1\n"
                       "property float x\nend_header\n"),
              SourceKind::kPlyBinaryLe);
        }) == Errc::kUnsupportedProperty);
  CHECK(code_of([] {
          (void)parse_source(
              as_bytes("ply\nformat ascii 1.0\nelement vertex 1\n"
                       "property list uchar int vertex_indices\nend_header\n1\n"),
              SourceKind::kPlyAscii);
        }) == Errc::kUnsupportedProperty);
  // truncated vertex data
  std::string trunc =
      "ply\nformat ascii 1.0\nelement vertex 3\n"
      "property float x\nproperty float y\nproperty float z\nend_header\n"
      "0 0 0\n";
  CHECK(code_of([&] {
          (void)parse_source(as_bytes(trunc), SourceKind::kPlyAscii);
        }) == Errc::kTruncatedPayload);
}

TEST_CASE("ply truncation never reads out of bounds") {
  const std::string full(kAsciiPly);
  for (std::size_t cut = 1; cut < full.size(); ++cut) {
    const std::string part = full.substr(0, cut);
    try {
      (void)parse_source(as_bytes(part), SourceKind::kPlyAscii);
    } catch (const PcError&) {
      // any structured error is acceptable; crashing or hanging is not
    }
  }
}

// ---------------------------------------------------------------------------
// OBJ

TEST_CASE("obj vertices and normals") {
  const std::string s =
      "# cube corner\n"
      "v 0 0 0\nv 1 0 0\nv 0 1 0\n"
      "vn 0 0 1\nvn 0 0 1\nvn 0 0 1\n"
      "f 1 2 3\n";
  auto cloud = parse_source(as_bytes(s), SourceKind::kObj);
  REQUIRE(cloud.points.size() == 3);
  CHECK(cloud.normals.size() == 3);
}

TEST_CASE("obj with per-face normals drops them") {
  const std::string s = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1 2 3\n";
  auto cloud = parse_source(as_bytes(s), SourceKind::kObj);
  CHECK(cloud.points.size() == 3);
  CHECK(cloud.normals.empty());
}

TEST_CASE("textured obj is rejected") {
  CHECK(code_of([] {
          (void)parse_source(as_bytes("v 0 0 0\nvt 0.5 0.5\n"), SourceKind::kObj);
        }) == Errc::kUnsupportedProperty);
  CHECK(code_of([] {
          (void)parse_source(as_bytes("mtllib scene.mtl\nv 0 0 0\n"),
                             SourceKind::kObj);
        }) == Errc::kUnsupportedProperty);
}

// ---------------------------------------------------------------------------
// XYZ text

TEST_CASE("xyz text with commas") {
  auto cloud = parse_source(as_bytes("0,0,0\n1,0,0"), SourceKind::kXyzText);
  REQUIRE(cloud.points.size() == 2);
  CHECK(cloud.normals.empty());
  CHECK(cloud.points[1] == std::array<float, 3>{1, 0, 0});
}

TEST_CASE("xyz text with six columns carries normals") {
  auto cloud = parse_source(as_bytes("0 0 0 0 0 1\n1 1 1 0 1 0\n"),
                            SourceKind::kXyzText);
  REQUIRE(cloud.points.size() == 2);
  REQUIRE(cloud.normals.size() == 2);
  CHECK(cloud.normals[1] == std::array<float, 3>{0, 1, 0});
}

TEST_CASE("ragged and malformed xyz rows fail") {
  CHECK(code_of([] {
          (void)parse_source(as_bytes("0 0 0\n1 1\n"), SourceKind::kXyzText);
        }) == Errc::kParseFailure);
  CHECK(code_of([] {
          (void)parse_source(as_bytes("a b c\n"), SourceKind::kXyzText);
        }) == Errc::kParseFailure);
  CHECK(code_of([] {
          (void)parse_source(as_bytes("1 2 3 4\n"), SourceKind::kXyzText);
        }) == Errc::kParseFailure);
}

// ---------------------------------------------------------------------------
// KITTI BIN

TEST_CASE("kitti bin single record") {
  float v[4] = {1.f, 2.f, 3.f, 0.5f};
  auto cloud = parse_source({reinterpret_cast<const std::uint8_t*>(v), 16},
                            SourceKind::kKittiBin);
  REQUIRE(cloud.points.size() == 1);
  REQUIRE(cloud.intensity.size() == 1);
  CHECK(cloud.points[0] == std::array<float, 3>{1, 2, 3});
  CHECK(cloud.intensity[0] == 0.5f);
}

TEST_CASE("kitti bin rejects lengths that are not multiples of 16") {
  std::vector<std::uint8_t> bytes(20, 0);
  CHECK(code_of([&] {
          (void)parse_source(bytes, SourceKind::kKittiBin);
        }) == Errc::kTruncatedPayload);
}

// ---------------------------------------------------------------------------
// NPY

TEST_CASE("npy float32 (N,3)") {
  auto file = npy_file("<f4", 2, 3, {1, 2, 3, 4, 5, 6});
  auto cloud = parse_source(as_bytes(file), SourceKind::kNpy);
  REQUIRE(cloud.points.size() == 2);
  CHECK(cloud.points[1] == std::array<float, 3>{4, 5, 6});
  CHECK_FALSE(cloud.narrowed);
}

TEST_CASE("npy float64 (N,6) narrows and carries normals") {
  auto file = npy_file("<f8", 1, 6, {0.25, 0.5, 0.75, 0, 0, 1});
  auto cloud = parse_source(as_bytes(file), SourceKind::kNpy);
  REQUIRE(cloud.points.size() == 1);
  REQUIRE(cloud.normals.size() == 1);
  CHECK(cloud.points[0] == std::array<float, 3>{0.25f, 0.5f, 0.75f});
  CHECK(cloud.narrowed);
}

TEST_CASE("npy error paths") {
  CHECK(code_of([] {
          (void)parse_source(as_bytes("not numpy data here"), SourceKind::kNpy);
        }) == Errc::kMalformedHeader);
  auto wrong_shape = npy_file("<f4", 2, 4, {1, 2, 3, 4, 5, 6, 7, 8});
  CHECK(code_of([&] {
          (void)parse_source(as_bytes(wrong_shape), SourceKind::kNpy);
        }) == Errc::kUnsupportedProperty);
  auto file = npy_file("<f4", 4, 3, std::vector<double>(12, 1.0));
  file.resize(file.size() - 8);
  CHECK(code_of([&] {
          (void)parse_source(as_bytes(file), SourceKind::kNpy);
        }) == Errc::kTruncatedPayload);
  auto i4 = npy_file("<f4", 1, 3, {1, 2, 3});
  const auto at = i4.find("<f4");
  i4.replace(at, 3, "<i4");
  CHECK(code_of([&] {
          (void)parse_source(as_bytes(i4), SourceKind::kNpy);
        }) == Errc::kUnsupportedProperty);
}

// ---------------------------------------------------------------------------
// convert

TEST_CASE("convert assigns labels from sorted class directories") {
  TempDir src, out;
  for (const char* cls : {"table", "airplane"})  // sorted: airplane=0, table=1
    for (int i = 0; i < 3; ++i)
      write_file(src.path() / cls / ("s" + std::to_string(i) + ".txt"),
                 "0 0 0\n1 1 1\n2 2 2\n");
  Schema schema = testutil::cloud_schema();

  ConvertOptions opts;
  opts.kind = SourceKind::kXyzText;
  auto result = convert(src.path(), schema, opts, out.path());

  CHECK(result.report.file_count == 6);
  CHECK(result.report.sample_count == 6);
  CHECK(result.report.class_names ==
        std::vector<std::string>{"airplane", "table"});
  CHECK(result.report.ratio > 0.0);

  DatasetReader reader(out.path() / "dataset.pcrecord");
  auto index = build_index({result.header});
  std::vector<std::int32_t> labels;
  for (std::size_t i = 0; i < index.size(); ++i) {
    auto s = reader.read_sample(locate(index, i));
    labels.push_back(std::get<std::vector<std::int32_t>>(s.values["label"])[0]);
  }
  CHECK(labels == std::vector<std::int32_t>{0, 0, 0, 1, 1, 1});
}

TEST_CASE("convert round-trips cloud bytes exactly") {
  TempDir src, out;
  write_file(src.path() / "c" / "a.txt", "0.5 1.5 -2.5\n3 4 5\n");
  Schema schema;
  schema.fields = {{"data", {FieldKind::kBytes, {3}}}};
  ConvertOptions opts;
  opts.kind = SourceKind::kXyzText;
  auto result = convert(src.path(), schema, opts, out.path());
  DatasetReader reader(out.path() / "dataset.pcrecord");
  auto index = build_index({result.header});
  auto s = reader.read_sample(locate(index, 0));
  auto pts = testutil::blob_floats(std::get<Blob>(s.values["data"]));
  CHECK(pts == std::vector<float>{0.5f, 1.5f, -2.5f, 3.f, 4.f, 5.f});
}

TEST_CASE("convert on an empty directory fails") {
  TempDir src, out;
  CHECK(code_of([&] {
          ConvertOptions opts;
          (void)convert(src.path(), testutil::cloud_schema(), opts, out.path());
        }) == Errc::kNoInputFiles);
}

TEST_CASE("convert resamples to a fixed point count") {
  TempDir src, out;
  write_file(src.path() / "c" / "a.txt", "0 0 0\n1 1 1\n2 2 2\n3 3 3\n");
  write_file(src.path() / "c" / "b.txt", "9 9 9\n");
  Schema schema;
  schema.fields = {{"data", {FieldKind::kBytes, {3}}}};
  ConvertOptions opts;
  opts.kind = SourceKind::kXyzText;
  opts.num_points = 2;
  auto result = convert(src.path(), schema, opts, out.path());
  DatasetReader reader(out.path() / "dataset.pcrecord");
  auto index = build_index({result.header});
  auto a = testutil::blob_floats(
      std::get<Blob>(reader.read_sample(locate(index, 0)).values["data"]));
  auto b = testutil::blob_floats(
      std::get<Blob>(reader.read_sample(locate(index, 1)).values["data"]));
  CHECK(a == std::vector<float>{0, 0, 0, 2, 2, 2});  // evenly spaced shrink
  CHECK(b == std::vector<float>{9, 9, 9, 9, 9, 9});  // wrap-around grow
}

TEST_CASE("convert reports float64 narrowing only when it happened") {
  TempDir src32, src64, out32, out64;
  write_file(src32.path() / "c" / "a.npy", npy_file("<f4", 1, 3, {1, 2, 3}));
  write_file(src64.path() / "c" / "a.npy", npy_file("<f8", 1, 3, {1, 2, 3}));
  Schema schema;
  schema.fields = {{"data", {FieldKind::kBytes, {3}}}};
  ConvertOptions opts;
  opts.kind = SourceKind::kNpy;
  CHECK_FALSE(convert(src32.path(), schema, opts, out32.path())
                  .report.float64_narrowed);
  CHECK(convert(src64.path(), schema, opts, out64.path())
            .report.float64_narrowed);
}

TEST_CASE("convert surfaces parse failures with the file named") {
  TempDir src, out;
  write_file(src.path() / "c" / "bad.txt", "nonsense\n");
  try {
    ConvertOptions opts;
    Schema schema;
    schema.fields = {{"data", {FieldKind::kBytes, {3}}}};
    (void)convert(src.path(), schema, opts, out.path());
    FAIL("expected throw");
  } catch (const PcError& e) {
    CHECK(e.code() == Errc::kParseFailure);
    CHECK(std::string(e.what()).find("bad.txt") != std::string::npos);
  }
}
