// hallmap: multi-sensor indoor mapping and evaluation toolkit
// SPDX-License-Identifier: Apache-2.0

#include "hallmap/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <png.h>

#include <json.hpp>

#include "hallmap/errors.hpp"
#include "json_detail.hpp"

namespace hallmap {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

[[noreturn]] void parse_fail(const fs::path& path, std::size_t line,
                             const std::string& what) {
  throw ParseError(path.string() + ": line " + std::to_string(line) + ": " +
                   what);
}

// --- little-endian scalar encoding --------------------------------------

void put_u16le(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

void put_u32le(std::string& out, std::uint32_t v) {
  put_u16le(out, static_cast<std::uint16_t>(v & 0xffff));
  put_u16le(out, static_cast<std::uint16_t>(v >> 16));
}

void put_u64le(std::string& out, std::uint64_t v) {
  put_u32le(out, static_cast<std::uint32_t>(v & 0xffffffffull));
  put_u32le(out, static_cast<std::uint32_t>(v >> 32));
}

void put_f32le(std::string& out, float v) {
  put_u32le(out, std::bit_cast<std::uint32_t>(v));
}

void put_f64le(std::string& out, double v) {
  put_u64le(out, std::bit_cast<std::uint64_t>(v));
}

std::uint64_t get_uint_le(const unsigned char* p, std::size_t size) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < size; ++i) {
    v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  }
  return v;
}

// --- PLY property table ---------------------------------------------------

enum class PlyType { i8, u8, i16, u16, i32, u32, f32, f64 };

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::f32;
  std::size_t size = 4;
};

bool ply_type_from_token(const std::string& token, PlyType& type,
                         std::size_t& size) {
  static const std::map<std::string, std::pair<PlyType, std::size_t>> table = {
      {"char", {PlyType::i8, 1}},    {"int8", {PlyType::i8, 1}},
      {"uchar", {PlyType::u8, 1}},   {"uint8", {PlyType::u8, 1}},
      {"short", {PlyType::i16, 2}},  {"int16", {PlyType::i16, 2}},
      {"ushort", {PlyType::u16, 2}}, {"uint16", {PlyType::u16, 2}},
      {"int", {PlyType::i32, 4}},    {"int32", {PlyType::i32, 4}},
      {"uint", {PlyType::u32, 4}},   {"uint32", {PlyType::u32, 4}},
      {"float", {PlyType::f32, 4}},  {"float32", {PlyType::f32, 4}},
      {"double", {PlyType::f64, 8}}, {"float64", {PlyType::f64, 8}}};
  const auto it = table.find(token);
  if (it == table.end()) return false;
  type = it->second.first;
  size = it->second.second;
  return true;
}

double decode_scalar(const unsigned char* p, PlyType type, std::size_t size) {
  const std::uint64_t raw = get_uint_le(p, size);
  switch (type) {
    case PlyType::i8:
      return static_cast<double>(static_cast<std::int8_t>(raw));
    case PlyType::u8:
      return static_cast<double>(static_cast<std::uint8_t>(raw));
    case PlyType::i16:
      return static_cast<double>(static_cast<std::int16_t>(raw));
    case PlyType::u16:
      return static_cast<double>(static_cast<std::uint16_t>(raw));
    case PlyType::i32:
      return static_cast<double>(static_cast<std::int32_t>(raw));
    case PlyType::u32:
      return static_cast<double>(static_cast<std::uint32_t>(raw));
    case PlyType::f32:
      return static_cast<double>(
          std::bit_cast<float>(static_cast<std::uint32_t>(raw)));
    case PlyType::f64:
      return std::bit_cast<double>(raw);
  }
  return 0.0;
}

struct PlyHeader {
  PlyFormat format = PlyFormat::ascii;
  std::size_t vertex_count = 0;
  std::vector<PlyProperty> properties;  // vertex element only
  std::size_t body_offset = 0;          // byte offset of first vertex record
};

PlyHeader parse_ply_header(const fs::path& path, const std::string& data) {
  PlyHeader header;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool have_format = false;
  bool in_vertex = false;
  bool seen_vertex = false;
  bool done = false;

  auto next_line = [&](std::string& line) {
    if (pos >= data.size()) return false;
    const std::size_t eol = data.find('\n', pos);
    if (eol == std::string::npos) {
      line = strip_cr(data.substr(pos));
      pos = data.size();
    } else {
      line = strip_cr(data.substr(pos, eol - pos));
      pos = eol + 1;
    }
    ++line_no;
    return true;
  };

  std::string line;
  if (!next_line(line) || line != "ply") {
    parse_fail(path, 1, "not a PLY file (missing 'ply' magic)");
  }

  while (next_line(line)) {
    std::istringstream ls(line);
    std::string keyword;
    ls >> keyword;
    if (keyword.empty() || keyword == "comment" || keyword == "obj_info") {
      continue;
    }
    if (keyword == "format") {
      std::string kind, version;
      ls >> kind >> version;
      if (kind == "ascii") {
        header.format = PlyFormat::ascii;
      } else if (kind == "binary_little_endian") {
        header.format = PlyFormat::binary_little_endian;
      } else if (kind == "binary_big_endian") {
        throw UnsupportedFormatError(path.string() +
                                     ": big-endian PLY is not supported");
      } else {
        parse_fail(path, line_no, "unknown format '" + kind + "'");
      }
      have_format = true;
    } else if (keyword == "element") {
      std::string name;
      std::size_t count = 0;
      if (!(ls >> name >> count)) {
        parse_fail(path, line_no, "malformed element declaration");
      }
      if (name == "vertex") {
        header.vertex_count = count;
        in_vertex = true;
        seen_vertex = true;
      } else {
        if (!seen_vertex) {
          throw UnsupportedFormatError(
              path.string() + ": element '" + name +
              "' precedes the vertex element; cannot skip its data");
        }
        in_vertex = false;  // trailing elements are ignored
      }
    } else if (keyword == "property") {
      if (!in_vertex) continue;
      std::string type_token, name;
      if (!(ls >> type_token)) {
        parse_fail(path, line_no, "malformed property declaration");
      }
      if (type_token == "list") {
        throw UnsupportedFormatError(
            path.string() + ": list property on the vertex element");
      }
      PlyProperty prop;
      if (!ply_type_from_token(type_token, prop.type, prop.size)) {
        parse_fail(path, line_no, "unknown property type '" + type_token + "'");
      }
      if (!(ls >> name)) {
        parse_fail(path, line_no, "property is missing a name");
      }
      prop.name = name;
      header.properties.push_back(prop);
    } else if (keyword == "end_header") {
      done = true;
      break;
    } else {
      parse_fail(path, line_no, "unknown header keyword '" + keyword + "'");
    }
  }
  if (!done) parse_fail(path, line_no, "missing end_header");
  if (!have_format) parse_fail(path, line_no, "missing format declaration");
  if (!seen_vertex) parse_fail(path, line_no, "missing vertex element");
  header.body_offset = pos;
  return header;
}

}  // namespace

PointCloud load_point_cloud(const fs::path& path) {
  const std::string data = read_file(path);
  const PlyHeader header = parse_ply_header(path, data);

  // Locate the columns we understand.
  constexpr int kMissing = -1;
  int col_xyz[3] = {kMissing, kMissing, kMissing};
  int col_rgb[3] = {kMissing, kMissing, kMissing};
  int col_t = kMissing;
  for (std::size_t c = 0; c < header.properties.size(); ++c) {
    const PlyProperty& p = header.properties[c];
    const int idx = static_cast<int>(c);
    if (p.name == "x") col_xyz[0] = idx;
    if (p.name == "y") col_xyz[1] = idx;
    if (p.name == "z") col_xyz[2] = idx;
    if (p.name == "red" || p.name == "r") col_rgb[0] = idx;
    if (p.name == "green" || p.name == "g") col_rgb[1] = idx;
    if (p.name == "blue" || p.name == "b") col_rgb[2] = idx;
    if (p.name == "t" || p.name == "time" || p.name == "timestamp") {
      col_t = idx;
    }
  }
  for (int axis = 0; axis < 3; ++axis) {
    if (col_xyz[axis] == kMissing) {
      throw ParseError(path.string() + ": vertex element lacks x/y/z");
    }
  }
  const int color_cols =
      (col_rgb[0] != kMissing) + (col_rgb[1] != kMissing) + (col_rgb[2] != kMissing);
  if (color_cols != 0 && color_cols != 3) {
    throw ParseError(path.string() + ": incomplete red/green/blue properties");
  }
  const bool with_colors = color_cols == 3;
  const bool with_time = col_t != kMissing;

  PointCloud cloud;
  cloud.points.resize(header.vertex_count);
  if (with_colors) cloud.colors.resize(header.vertex_count);
  if (with_time) cloud.times.resize(header.vertex_count);

  const std::size_t ncols = header.properties.size();
  std::vector<double> row(ncols);

  auto store = [&](std::size_t i) {
    cloud.points[i] =
        Vec3(row[static_cast<std::size_t>(col_xyz[0])],
             row[static_cast<std::size_t>(col_xyz[1])],
             row[static_cast<std::size_t>(col_xyz[2])]);
    if (with_colors) {
      for (int c = 0; c < 3; ++c) {
        const double v = row[static_cast<std::size_t>(col_rgb[c])];
        cloud.colors[i][static_cast<std::size_t>(c)] =
            static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
      }
    }
    if (with_time) cloud.times[i] = row[static_cast<std::size_t>(col_t)];
  };

  if (header.format == PlyFormat::ascii) {
    // strtof/strtod rather than stream extraction: they accept nan/inf
    // tokens (which validate() then rejects with the point index), and
    // reading float32 columns at float precision keeps save/load/save
    // byte-stable.
    const char* cursor = data.data() + header.body_offset;
    const char* const end = data.data() + data.size();
    for (std::size_t i = 0; i < header.vertex_count; ++i) {
      for (std::size_t c = 0; c < ncols; ++c) {
        while (cursor < end &&
               std::isspace(static_cast<unsigned char>(*cursor))) {
          ++cursor;
        }
        char* next = nullptr;
        if (header.properties[c].type == PlyType::f32) {
          row[c] = static_cast<double>(std::strtof(cursor, &next));
        } else {
          row[c] = std::strtod(cursor, &next);
        }
        if (next == cursor || next > end) {
          throw ParseError(path.string() + ": truncated vertex data at point " +
                           std::to_string(i));
        }
        cursor = next;
      }
      store(i);
    }
  } else {
    std::size_t record = 0;
    for (const PlyProperty& p : header.properties) record += p.size;
    if (data.size() < header.body_offset + record * header.vertex_count) {
      throw ParseError(path.string() + ": truncated binary vertex data");
    }
    const unsigned char* base =
        reinterpret_cast<const unsigned char*>(data.data()) + header.body_offset;
    for (std::size_t i = 0; i < header.vertex_count; ++i) {
      const unsigned char* rec = base + i * record;
      std::size_t offset = 0;
      for (std::size_t c = 0; c < ncols; ++c) {
        const PlyProperty& p = header.properties[c];
        row[c] = decode_scalar(rec + offset, p.type, p.size);
        offset += p.size;
      }
      store(i);
    }
  }

  cloud.validate();
  return cloud;
}

void save_point_cloud(const fs::path& path, const PointCloud& cloud,
                      PlyFormat format) {
  cloud.validate();
  std::string out;
  out.reserve(128 + cloud.size() * 32);
  out += "ply\n";
  out += format == PlyFormat::ascii ? "format ascii 1.0\n"
                                    : "format binary_little_endian 1.0\n";
  out += "element vertex " + std::to_string(cloud.size()) + "\n";
  out += "property float x\nproperty float y\nproperty float z\n";
  if (cloud.has_colors()) {
    out += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  }
  if (cloud.has_times()) {
    out += "property double t\n";
  }
  out += "end_header\n";

  char buf[64];
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    if (format == PlyFormat::ascii) {
      for (int axis = 0; axis < 3; ++axis) {
        std::snprintf(buf, sizeof(buf), "%.9g",
                      static_cast<double>(static_cast<float>(p[axis])));
        if (axis) out += ' ';
        out += buf;
      }
      if (cloud.has_colors()) {
        for (int c = 0; c < 3; ++c) {
          std::snprintf(buf, sizeof(buf), " %u",
                        static_cast<unsigned>(cloud.colors[i][static_cast<std::size_t>(c)]));
          out += buf;
        }
      }
      if (cloud.has_times()) {
        std::snprintf(buf, sizeof(buf), " %.17g", cloud.times[i]);
        out += buf;
      }
      out += '\n';
    } else {
      put_f32le(out, static_cast<float>(p.x()));
      put_f32le(out, static_cast<float>(p.y()));
      put_f32le(out, static_cast<float>(p.z()));
      if (cloud.has_colors()) {
        for (int c = 0; c < 3; ++c) {
          out.push_back(static_cast<char>(cloud.colors[i][static_cast<std::size_t>(c)]));
        }
      }
      if (cloud.has_times()) put_f64le(out, cloud.times[i]);
    }
  }
  write_file(path, out);
}

Trajectory load_trajectory(const fs::path& path,
                           std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open trajectory file: " + path.string());

  Trajectory traj;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = strip_cr(raw);
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    double t, tx, ty, tz, qx, qy, qz, qw;
    if (!(ls >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
      parse_fail(path, line_no, "expected 8 fields (t tx ty tz qx qy qz qw)");
    }
    std::string extra;
    if (ls >> extra) {
      parse_fail(path, line_no, "trailing data after 8 fields");
    }
    if (!traj.empty() && !(t > traj.back().t)) {
      parse_fail(path, line_no, "non-increasing timestamp");
    }
    Quat q(qw, qx, qy, qz);
    const double norm = q.norm();
    if (!(norm > 1e-12) || !std::isfinite(norm)) {
      parse_fail(path, line_no, "quaternion has zero or non-finite norm");
    }
    if (std::abs(norm - 1.0) > 1e-6) {
      q.normalize();
      if (warnings) {
        char msg[128];
        std::snprintf(msg, sizeof(msg),
                      "line %zu: quaternion norm %.6g, renormalized", line_no,
                      norm);
        warnings->push_back(msg);
      }
    }
    traj.push_back({t, PoseSE3(q, Vec3(tx, ty, tz))});
  }
  return traj;
}

void save_trajectory(const fs::path& path, const Trajectory& traj) {
  std::string out;
  out.reserve(traj.size() * 64);
  char buf[256];
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const TrajectoryEntry& e = traj[i];
    if (i > 0 && !(e.t > traj[i - 1].t)) {
      throw DegenerateInputError(
          "trajectory timestamps must be strictly increasing (entry " +
          std::to_string(i) + ")");
    }
    const Quat& q = e.pose.rotation;
    const Vec3& t = e.pose.translation;
    std::snprintf(buf, sizeof(buf),
                  "%.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g\n", e.t, t.x(),
                  t.y(), t.z(), q.x(), q.y(), q.z(), q.w());
    out += buf;
  }
  write_file(path, out);
}

RigCalibration load_rig_calibration(const fs::path& path) {
  using detail::parse_json_strict;
  using detail::vec3_from_json;
  const json doc = parse_json_strict(path, read_file(path));
  if (!doc.is_object()) {
    throw ParseError(path.string() + ": calibration root must be an object");
  }
  RigCalibration rig;
  for (const auto& [camera_id, entry] : doc.items()) {
    if (!entry.is_object()) {
      throw ParseError(path.string() + ": entry '" + camera_id +
                       "' must be an object");
    }
    for (const auto& [key, value] : entry.items()) {
      (void)value;
      if (key != "q" && key != "t") {
        throw ParseError(path.string() + ": entry '" + camera_id +
                         "' has unknown key '" + key + "'");
      }
    }
    if (!entry.contains("q") || !entry.contains("t")) {
      throw ParseError(path.string() + ": entry '" + camera_id +
                       "' needs 'q' and 't'");
    }
    const json& qa = entry["q"];
    if (!qa.is_array() || qa.size() != 4) {
      throw ParseError(path.string() + ": '" + camera_id +
                       "'.q must be [w,x,y,z]");
    }
    Quat q(qa[0].get<double>(), qa[1].get<double>(), qa[2].get<double>(),
           qa[3].get<double>());
    const double norm = q.norm();
    if (!(norm > 1e-12) || !std::isfinite(norm)) {
      throw ParseError(path.string() + ": '" + camera_id +
                       "'.q has zero or non-finite norm");
    }
    q.normalize();
    rig.camera_to_body[camera_id] =
        PoseSE3(q, vec3_from_json(path, entry["t"], "'" + camera_id + "'.t"));
  }
  rig.validate();
  return rig;
}

void save_rig_calibration(const fs::path& path, const RigCalibration& rig) {
  json doc = json::object();
  for (const auto& [camera_id, pose] : rig.camera_to_body) {
    doc[camera_id] = {
        {"q",
         {pose.rotation.w(), pose.rotation.x(), pose.rotation.y(),
          pose.rotation.z()}},
        {"t", {pose.translation.x(), pose.translation.y(), pose.translation.z()}}};
  }
  write_file(path, doc.dump(2) + "\n");
}

std::vector<ImuSample> load_imu(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open IMU file: " + path.string());

  std::vector<ImuSample> samples;
  std::string raw;
  std::size_t line_no = 0;
  bool first_content_line = true;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = strip_cr(raw);
    if (line.empty() || line[0] == '#') continue;

    std::vector<std::string> tokens;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      tokens.push_back(comma == std::string::npos
                           ? line.substr(start)
                           : line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    std::array<double, 7> fields{};
    bool ok = tokens.size() == 7;
    for (std::size_t i = 0; ok && i < 7; ++i) {
      try {
        std::size_t used = 0;
        fields[i] = std::stod(tokens[i], &used);
        while (used < tokens[i].size() &&
               std::isspace(static_cast<unsigned char>(tokens[i][used]))) {
          ++used;
        }
        ok = used == tokens[i].size();
      } catch (const std::exception&) {
        ok = false;
      }
    }
    if (!ok) {
      if (first_content_line) {
        // Header row ("t,ax,..."): tolerated once at the top.
        first_content_line = false;
        continue;
      }
      parse_fail(path, line_no, "expected 7 comma-separated numbers");
    }
    first_content_line = false;
    for (double v : fields) {
      if (!std::isfinite(v)) {
        parse_fail(path, line_no, "non-finite IMU value");
      }
    }
    samples.push_back({fields[0], Vec3(fields[1], fields[2], fields[3]),
                       Vec3(fields[4], fields[5], fields[6])});
  }
  std::stable_sort(samples.begin(), samples.end(),
                   [](const ImuSample& a, const ImuSample& b) { return a.t < b.t; });
  return samples;
}

void save_imu(const fs::path& path, const std::vector<ImuSample>& samples) {
  std::string out = "t,ax,ay,az,gx,gy,gz\n";
  out.reserve(out.size() + samples.size() * 80);
  char buf[256];
  for (const ImuSample& s : samples) {
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                  s.t, s.accel.x(), s.accel.y(), s.accel.z(), s.gyro.x(),
                  s.gyro.y(), s.gyro.z());
    out += buf;
  }
  write_file(path, out);
}

DepthMap load_depth_png(const fs::path& path) {
  FILE* fp = std::fopen(path.string().c_str(), "rb");
  if (!fp) throw Error("cannot open depth image: " + path.string());

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    std::fclose(fp);
    throw Error("libpng initialization failed");
  }

  DepthMap out;
  std::vector<png_byte> row;
  bool bad_layout = false;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    if (bad_layout) {
      throw ParseError(path.string() + ": expected 16-bit grayscale PNG");
    }
    throw ParseError(path.string() + ": PNG decode failed");
  }

  png_init_io(png, fp);
  png_read_info(png, info);
  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  if (png_get_bit_depth(png, info) != 16 ||
      png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY) {
    bad_layout = true;
    png_error(png, "layout");
  }
  out.resize(static_cast<int>(width), static_cast<int>(height));
  row.resize(static_cast<std::size_t>(width) * 2);
  for (png_uint_32 v = 0; v < height; ++v) {
    png_read_row(png, row.data(), nullptr);
    for (png_uint_32 u = 0; u < width; ++u) {
      const std::uint16_t mm = static_cast<std::uint16_t>(
          (static_cast<unsigned>(row[2 * u]) << 8) | row[2 * u + 1]);
      out.at(static_cast<int>(u), static_cast<int>(v)) =
          static_cast<float>(mm) / 1000.0f;
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return out;
}

void save_depth_png(const fs::path& path, const DepthMap& depth) {
  if (depth.width <= 0 || depth.height <= 0 ||
      depth.depth.size() !=
          static_cast<std::size_t>(depth.width) * depth.height) {
    throw DegenerateInputError("depth map has inconsistent dimensions");
  }
  FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw Error("cannot write depth image: " + path.string());

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    throw Error("libpng initialization failed");
  }

  std::vector<png_byte> row(static_cast<std::size_t>(depth.width) * 2);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw Error("PNG encode failed: " + path.string());
  }

  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(depth.width),
               static_cast<png_uint_32>(depth.height), 16,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      const float meters = depth.at(u, v);
      long mm = std::lround(static_cast<double>(meters) * 1000.0);
      mm = std::clamp(mm, 0l, 65535l);
      row[2 * static_cast<std::size_t>(u)] = static_cast<png_byte>(mm >> 8);
      row[2 * static_cast<std::size_t>(u) + 1] = static_cast<png_byte>(mm & 0xff);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open file for writing: " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace hallmap
