#include "pcpipe/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace pcpipe {

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

float parse_float(const std::string& tok, const char* ctx) {
  try {
    std::size_t used = 0;
    const float v = std::stof(tok, &used);
    if (used != tok.size()) fail(Errc::kParseFailure, std::string(ctx) + ": bad number '" + tok + "'");
    return v;
  } catch (const std::exception&) {
    fail(Errc::kParseFailure, std::string(ctx) + ": bad number '" + tok + "'");
  }
}

// ---- PLY ------------------------------------------------------------------

struct PlyProperty {
  std::string name;
  std::string type;
};

std::size_t ply_type_width(const std::string& t) {
  if (t == "char" || t == "int8" || t == "uchar" || t == "uint8") return 1;
  if (t == "short" || t == "int16" || t == "ushort" || t == "uint16") return 2;
  if (t == "int" || t == "int32" || t == "uint" || t == "uint32" ||
      t == "float" || t == "float32")
    return 4;
  if (t == "double" || t == "float64") return 8;
  fail(Errc::kUnsupportedProperty, "ply property type '" + t + "'");
}

ParsedCloud parse_ply(std::span<const std::uint8_t> bytes, bool binary_expected) {
  // header is always ASCII lines up to end_header
  std::size_t pos = 0;
  auto next_line = [&]() -> std::optional<std::string> {
    if (pos >= bytes.size()) return std::nullopt;
    std::size_t end = pos;
    while (end < bytes.size() && bytes[end] != '\n') ++end;
    std::string line(reinterpret_cast<const char*>(bytes.data() + pos), end - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pos = end < bytes.size() ? end + 1 : end;
    return line;
  };

  auto first = next_line();
  if (!first || *first != "ply") fail(Errc::kMalformedHeader, "missing ply magic");

  bool binary = false;
  bool have_format = false;
  std::size_t vertex_count = 0;
  std::vector<PlyProperty> props;
  bool in_vertex = false;
  bool saw_vertex = false;

  while (true) {
    auto line = next_line();
    if (!line) fail(Errc::kMalformedHeader, "unterminated ply header");
    auto toks = split_ws(*line);
    if (toks.empty() || toks[0] == "comment") continue;
    if (toks[0] == "format") {
      if (toks.size() < 2) fail(Errc::kMalformedHeader, "bad format line");
      if (toks[1] == "ascii") binary = false;
      else if (toks[1] == "binary_little_endian") binary = true;
      else fail(Errc::kUnsupportedProperty, "ply format " + toks[1]);
      have_format = true;
    } else if (toks[0] == "element") {
      if (toks.size() < 3) fail(Errc::kMalformedHeader, "bad element line");
      if (toks[1] == "vertex") {
        if (saw_vertex) fail(Errc::kMalformedHeader, "duplicate vertex element");
        vertex_count = std::stoull(toks[2]);
        in_vertex = true;
        saw_vertex = true;
      } else {
        if (!saw_vertex)
          fail(Errc::kUnsupportedProperty, "element before vertex data");
        in_vertex = false;  // trailing elements (faces) are ignored
      }
    } else if (toks[0] == "property") {
      if (!in_vertex) continue;
      if (toks.size() >= 2 && toks[1] == "list")
        fail(Errc::kUnsupportedProperty, "list property on vertex");
      if (toks.size() < 3) fail(Errc::kMalformedHeader, "bad property line");
      props.push_back({toks[2], toks[1]});
    } else if (toks[0] == "end_header") {
      break;
    } else {
      fail(Errc::kMalformedHeader, "unexpected header line '" + *line + "'");
    }
  }
  if (!have_format) fail(Errc::kMalformedHeader, "missing format line");
  if (!saw_vertex || vertex_count == 0)
    fail(Errc::kMalformedHeader, "no vertex element");
  if (binary != binary_expected)
    fail(Errc::kMalformedHeader, binary ? "file is binary ply" : "file is ascii ply");

  std::map<std::string, std::vector<float>> columns;
  auto store = [&](const std::string& name, const std::string& type, double v) {
    if (type == "uchar" || type == "uint8") v /= 255.0;
    columns[name].push_back(static_cast<float>(v));
  };

  if (!binary) {
    for (std::size_t i = 0; i < vertex_count; ++i) {
      auto line = next_line();
      if (!line) fail(Errc::kTruncatedPayload, "ply vertex data truncated");
      auto toks = split_ws(*line);
      if (toks.size() < props.size())
        fail(Errc::kTruncatedPayload, "short ply vertex line");
      for (std::size_t p = 0; p < props.size(); ++p)
        store(props[p].name, props[p].type, parse_float(toks[p], "ply"));
    }
  } else {
    for (std::size_t i = 0; i < vertex_count; ++i) {
      for (const auto& p : props) {
        const std::size_t w = ply_type_width(p.type);
        if (pos + w > bytes.size())
          fail(Errc::kTruncatedPayload, "ply binary data truncated");
        double v = 0;
        if (p.type == "float" || p.type == "float32") {
          float x;
          std::memcpy(&x, bytes.data() + pos, 4);
          v = x;
        } else if (p.type == "double" || p.type == "float64") {
          double x;
          std::memcpy(&x, bytes.data() + pos, 8);
          v = x;
        } else if (w == 1) {
          v = bytes[pos];
        } else {
          fail(Errc::kUnsupportedProperty, "ply integer property " + p.name);
        }
        pos += w;
        store(p.name, p.type, v);
      }
    }
  }

  auto col = [&](const char* n) -> const std::vector<float>* {
    auto it = columns.find(n);
    return it == columns.end() ? nullptr : &it->second;
  };
  const auto* x = col("x");
  const auto* y = col("y");
  const auto* z = col("z");
  if (!x || !y || !z) fail(Errc::kMalformedHeader, "ply missing x/y/z");

  ParsedCloud cloud;
  for (std::size_t i = 0; i < vertex_count; ++i)
    cloud.points.push_back({(*x)[i], (*y)[i], (*z)[i]});
  if (col("nx") && col("ny") && col("nz"))
    for (std::size_t i = 0; i < vertex_count; ++i)
      cloud.normals.push_back({(*col("nx"))[i], (*col("ny"))[i], (*col("nz"))[i]});
  if (col("red") && col("green") && col("blue"))
    for (std::size_t i = 0; i < vertex_count; ++i)
      cloud.colors.push_back({(*col("red"))[i], (*col("green"))[i], (*col("blue"))[i]});
  return cloud;
}

// ---- OBJ ------------------------------------------------------------------

ParsedCloud parse_obj(std::span<const std::uint8_t> bytes) {
  std::istringstream in(std::string(reinterpret_cast<const char*>(bytes.data()),
                                    bytes.size()));
  ParsedCloud cloud;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto toks = split_ws(line);
    if (toks.empty() || toks[0][0] == '#') continue;
    if (toks[0] == "v") {
      if (toks.size() < 4) fail(Errc::kParseFailure, "short obj vertex");
      cloud.points.push_back({parse_float(toks[1], "obj"),
                              parse_float(toks[2], "obj"),
                              parse_float(toks[3], "obj")});
    } else if (toks[0] == "vn") {
      if (toks.size() < 4) fail(Errc::kParseFailure, "short obj normal");
      cloud.normals.push_back({parse_float(toks[1], "obj"),
                               parse_float(toks[2], "obj"),
                               parse_float(toks[3], "obj")});
    } else if (toks[0] == "vt" || toks[0] == "usemtl" || toks[0] == "mtllib") {
      fail(Errc::kUnsupportedProperty, "textured obj not supported");
    }
    // faces ("f"), groups etc. carry no point data and are skipped
  }
  if (cloud.points.empty()) fail(Errc::kParseFailure, "obj has no vertices");
  if (!cloud.normals.empty() && cloud.normals.size() != cloud.points.size())
    cloud.normals.clear();  // per-face normals, not per-vertex
  return cloud;
}

// ---- XYZ / TXT / CSV ------------------------------------------------------

ParsedCloud parse_xyz_text(std::span<const std::uint8_t> bytes) {
  std::string text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  std::replace(text.begin(), text.end(), ',', ' ');
  std::istringstream in(text);
  ParsedCloud cloud;
  std::string line;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (width == 0) {
      width = toks.size();
      if (width != 3 && width != 6)
        fail(Errc::kParseFailure, "xyz rows must have 3 or 6 columns");
    }
    if (toks.size() != width) fail(Errc::kParseFailure, "ragged xyz row");
    cloud.points.push_back({parse_float(toks[0], "xyz"),
                            parse_float(toks[1], "xyz"),
                            parse_float(toks[2], "xyz")});
    if (width == 6)
      cloud.normals.push_back({parse_float(toks[3], "xyz"),
                               parse_float(toks[4], "xyz"),
                               parse_float(toks[5], "xyz")});
  }
  if (cloud.points.empty()) fail(Errc::kParseFailure, "empty xyz file");
  return cloud;
}

// ---- KITTI BIN ------------------------------------------------------------

ParsedCloud parse_kitti_bin(std::span<const std::uint8_t> bytes) {
  if (bytes.empty() || bytes.size() % 16 != 0)
    fail(Errc::kTruncatedPayload, "kitti bin length not a multiple of 16");
  ParsedCloud cloud;
  const std::size_t n = bytes.size() / 16;
  for (std::size_t i = 0; i < n; ++i) {
    float v[4];
    std::memcpy(v, bytes.data() + i * 16, 16);
    cloud.points.push_back({v[0], v[1], v[2]});
    cloud.intensity.push_back(v[3]);
  }
  return cloud;
}

// ---- NPY ------------------------------------------------------------------

ParsedCloud parse_npy(std::span<const std::uint8_t> bytes) {
  static const std::uint8_t kMagic[6] = {0x93, 'N', 'U', 'M', 'P', 'Y'};
  if (bytes.size() < 10 || std::memcmp(bytes.data(), kMagic, 6) != 0)
    fail(Errc::kMalformedHeader, "not an npy file");
  if (bytes[6] != 1 || bytes[7] != 0)
    fail(Errc::kUnsupportedProperty, "only npy version 1.0 supported");
  std::uint16_t hlen;
  std::memcpy(&hlen, bytes.data() + 8, 2);
  if (10 + std::size_t{hlen} > bytes.size())
    fail(Errc::kTruncatedPayload, "npy header truncated");
  const std::string hdr(reinterpret_cast<const char*>(bytes.data() + 10), hlen);

  auto dict_value = [&](const std::string& key) -> std::string {
    const auto at = hdr.find("'" + key + "'");
    if (at == std::string::npos)
      fail(Errc::kMalformedHeader, "npy header missing " + key);
    auto colon = hdr.find(':', at);
    auto rest = hdr.substr(colon + 1);
    return rest;
  };

  const std::string descr = dict_value("descr");
  bool is_f8;
  if (descr.find("'<f4'") != std::string::npos) is_f8 = false;
  else if (descr.find("'<f8'") != std::string::npos) is_f8 = true;
  else fail(Errc::kUnsupportedProperty, "npy dtype must be <f4 or <f8");

  const std::string fortran = dict_value("fortran_order");
  if (fortran.find("True") != std::string::npos &&
      fortran.find("True") < fortran.find(','))
    fail(Errc::kUnsupportedProperty, "fortran-order npy not supported");

  const std::string shape_s = dict_value("shape");
  const auto open = shape_s.find('(');
  const auto close = shape_s.find(')');
  if (open == std::string::npos || close == std::string::npos)
    fail(Errc::kMalformedHeader, "npy shape unparseable");
  std::vector<std::size_t> shape;
  std::string inner = shape_s.substr(open + 1, close - open - 1);
  std::replace(inner.begin(), inner.end(), ',', ' ');
  std::istringstream ss(inner);
  std::size_t d;
  while (ss >> d) shape.push_back(d);
  if (shape.size() != 2 || (shape[1] != 3 && shape[1] != 6) || shape[0] == 0)
    fail(Errc::kUnsupportedProperty, "npy shape must be (N,3) or (N,6)");

  const std::size_t width = is_f8 ? 8 : 4;
  const std::size_t need = shape[0] * shape[1] * width;
  const std::size_t data_at = 10 + hlen;
  if (data_at + need > bytes.size())
    fail(Errc::kTruncatedPayload, "npy data truncated");

  auto at = [&](std::size_t r, std::size_t c) -> float {
    const std::size_t off = data_at + (r * shape[1] + c) * width;
    if (is_f8) {
      double v;
      std::memcpy(&v, bytes.data() + off, 8);
      return static_cast<float>(v);  // round-to-nearest narrowing
    }
    float v;
    std::memcpy(&v, bytes.data() + off, 4);
    return v;
  };

  ParsedCloud cloud;
  cloud.narrowed = is_f8;
  for (std::size_t r = 0; r < shape[0]; ++r) {
    cloud.points.push_back({at(r, 0), at(r, 1), at(r, 2)});
    if (shape[1] == 6) cloud.normals.push_back({at(r, 3), at(r, 4), at(r, 5)});
  }
  return cloud;
}

}  // namespace

SourceKind source_kind_from_name(const std::string& name) {
  if (name == "ply_ascii") return SourceKind::kPlyAscii;
  if (name == "ply_binary_le") return SourceKind::kPlyBinaryLe;
  if (name == "obj") return SourceKind::kObj;
  if (name == "xyz_text") return SourceKind::kXyzText;
  if (name == "kitti_bin") return SourceKind::kKittiBin;
  if (name == "npy") return SourceKind::kNpy;
  fail(Errc::kUsage, "unknown source kind '" + name + "'");
}

const char* source_kind_name(SourceKind kind) {
  switch (kind) {
    case SourceKind::kPlyAscii: return "ply_ascii";
    case SourceKind::kPlyBinaryLe: return "ply_binary_le";
    case SourceKind::kObj: return "obj";
    case SourceKind::kXyzText: return "xyz_text";
    case SourceKind::kKittiBin: return "kitti_bin";
    case SourceKind::kNpy: return "npy";
  }
  return "?";
}

ParsedCloud parse_source(std::span<const std::uint8_t> bytes, SourceKind kind) {
  if (bytes.empty()) fail(Errc::kTruncatedPayload, "empty input");
  ParsedCloud cloud;
  switch (kind) {
    case SourceKind::kPlyAscii: cloud = parse_ply(bytes, false); break;
    case SourceKind::kPlyBinaryLe: cloud = parse_ply(bytes, true); break;
    case SourceKind::kObj: cloud = parse_obj(bytes); break;
    case SourceKind::kXyzText: cloud = parse_xyz_text(bytes); break;
    case SourceKind::kKittiBin: cloud = parse_kitti_bin(bytes); break;
    case SourceKind::kNpy: cloud = parse_npy(bytes); break;
  }
  const std::size_t n = cloud.points.size();
  if (n == 0) fail(Errc::kParseFailure, "no points parsed");
  if ((!cloud.normals.empty() && cloud.normals.size() != n) ||
      (!cloud.colors.empty() && cloud.colors.size() != n) ||
      (!cloud.intensity.empty() && cloud.intensity.size() != n))
    fail(Errc::kParseFailure, "attribute counts disagree");
  return cloud;
}

// ---------------------------------------------------------------------------

namespace {

Blob pack_vec3(const std::vector<std::array<float, 3>>& v) {
  Blob out(v.size() * 12);
  std::memcpy(out.data(), v.data(), out.size());
  return out;
}

Blob pack_floats(const std::vector<float>& v) {
  Blob out(v.size() * 4);
  std::memcpy(out.data(), v.data(), out.size());
  return out;
}

ParsedCloud resample(const ParsedCloud& in, std::uint32_t num_points) {
  ParsedCloud out;
  const std::size_t n = in.points.size();
  out.label = in.label;
  for (std::uint32_t j = 0; j < num_points; ++j) {
    // evenly spaced when shrinking, wrap-around when growing
    const std::size_t i =
        n >= num_points ? (std::size_t{j} * n) / num_points : j % n;
    out.points.push_back(in.points[i]);
    if (!in.normals.empty()) out.normals.push_back(in.normals[i]);
    if (!in.colors.empty()) out.colors.push_back(in.colors[i]);
    if (!in.intensity.empty()) out.intensity.push_back(in.intensity[i]);
  }
  return out;
}

const char* extension_for(SourceKind kind, const std::string& ext) {
  switch (kind) {
    case SourceKind::kPlyAscii:
    case SourceKind::kPlyBinaryLe:
      return ext == ".ply" ? "" : nullptr;
    case SourceKind::kObj: return ext == ".obj" ? "" : nullptr;
    case SourceKind::kXyzText:
      return (ext == ".xyz" || ext == ".txt" || ext == ".csv") ? "" : nullptr;
    case SourceKind::kKittiBin: return ext == ".bin" ? "" : nullptr;
    case SourceKind::kNpy: return ext == ".npy" ? "" : nullptr;
  }
  return nullptr;
}

}  // namespace

Sample cloud_to_sample(const ParsedCloud& cloud, const Schema& schema) {
  Sample s;
  for (const auto& [name, t] : schema.fields) {
    if (t.kind == FieldKind::kBytes) {
      if (name == "data" || name == "points" || name == "xyz")
        s.values[name] = pack_vec3(cloud.points);
      else if (name == "normal" || name == "normals")
        s.values[name] = pack_vec3(cloud.normals);
      else if (name == "color" || name == "colors")
        s.values[name] = pack_vec3(cloud.colors);
      else if (name == "intensity")
        s.values[name] = pack_floats(cloud.intensity);
      else
        fail(Errc::kSchemaMismatch, "no source attribute for '" + name + "'");
    } else if (t.kind == FieldKind::kInt32 && name == "label") {
      s.values[name] =
          std::vector<std::int32_t>{cloud.label.value_or(0)};
    } else {
      fail(Errc::kSchemaMismatch, "unsupported ingest field '" + name + "'");
    }
  }
  return s;
}

json ConvertReport::to_json() const {
  return json{{"file_count", file_count},
              {"sample_count", sample_count},
              {"input_bytes", input_bytes},
              {"output_bytes", output_bytes},
              {"ratio", ratio},
              {"float64_narrowed", float64_narrowed},
              {"class_names", class_names}};
}

ConvertResult convert(const std::filesystem::path& source_dir,
                      const Schema& schema, const ConvertOptions& opts,
                      const std::filesystem::path& out_dir) {
  validate_schema(schema);

  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(source_dir)) {
    for (const auto& e :
         std::filesystem::recursive_directory_iterator(source_dir)) {
      if (!e.is_regular_file()) continue;
      if (extension_for(opts.kind, e.path().extension().string()) != nullptr)
        files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.string() < b.string(); });
  if (files.empty()) fail(Errc::kNoInputFiles, source_dir.string());

  const bool want_label = [&] {
    const auto* t = schema.find("label");
    return t != nullptr && t->kind == FieldKind::kInt32;
  }();
  std::map<std::string, std::int32_t> class_ids;
  if (want_label) {
    std::set<std::string> classes;
    for (const auto& f : files) classes.insert(f.parent_path().filename().string());
    std::int32_t id = 0;
    for (const auto& c : classes) class_ids[c] = id++;
  }

  ConvertReport report;
  std::vector<Sample> samples;
  for (const auto& path : files) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::kIoFailure, "cannot open " + path.string());
    Blob bytes((std::istreambuf_iterator<char>(in)),
               std::istreambuf_iterator<char>());
    report.input_bytes += bytes.size();
    ParsedCloud cloud;
    try {
      cloud = parse_source(bytes, opts.kind);
    } catch (const PcError& e) {
      fail(Errc::kParseFailure, path.string() + ": " + e.what());
    }
    if (cloud.narrowed) report.float64_narrowed = true;
    if (want_label)
      cloud.label = class_ids.at(path.parent_path().filename().string());
    if (opts.num_points) cloud = resample(cloud, *opts.num_points);
    samples.push_back(cloud_to_sample(cloud, schema));
    ++report.file_count;
  }

  WriteOptions wopts;
  wopts.slice_count = opts.slice_count;
  wopts.group_size = opts.group_size;
  wopts.stem = opts.stem;
  FileHeader header = write_dataset(samples, schema, wopts, out_dir);

  report.sample_count = samples.size();
  report.output_bytes = header.total_size_bytes;
  report.ratio = report.output_bytes == 0
                     ? 0.0
                     : static_cast<double>(report.input_bytes) /
                           static_cast<double>(report.output_bytes);
  for (const auto& [name, id] : class_ids) report.class_names.push_back(name);
  return {std::move(header), std::move(report)};
}

}  // namespace pcpipe
