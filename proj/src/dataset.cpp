// hallmap: multi-sensor indoor mapping and evaluation toolkit
// SPDX-License-Identifier: Apache-2.0

#include "hallmap/dataset.hpp"

#include <algorithm>

#include <json.hpp>

#include "hallmap/errors.hpp"
#include "hallmap/io.hpp"
#include "json_detail.hpp"

namespace hallmap {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;
using detail::parse_json_strict;

ScanIndex load_scan_index(const fs::path& path) {
  const json doc = parse_json_strict(path, read_file(path));
  if (!doc.is_object() || !doc.contains("sweep_duration") ||
      !doc.contains("scans")) {
    throw ParseError(path.string() +
                     ": scan index needs 'sweep_duration' and 'scans'");
  }
  ScanIndex index;
  index.sweep_duration = doc["sweep_duration"].get<double>();
  if (!(index.sweep_duration > 0)) {
    throw ParseError(path.string() + ": sweep_duration must be positive");
  }
  const json& scans = doc["scans"];
  if (!scans.is_array()) {
    throw ParseError(path.string() + ": 'scans' must be an array");
  }
  index.scans.reserve(scans.size());
  for (const json& entry : scans) {
    if (!entry.is_object() || !entry.contains("file") ||
        !entry.contains("t0") || !entry.contains("t1")) {
      throw ParseError(path.string() +
                       ": scan entries need 'file', 't0', 't1'");
    }
    ScanIndexEntry e;
    e.file = entry["file"].get<std::string>();
    e.t0 = entry["t0"].get<double>();
    e.t1 = entry["t1"].get<double>();
    if (!(e.t1 > e.t0)) {
      throw ParseError(path.string() + ": scan '" + e.file +
                       "' has non-positive duration");
    }
    if (!index.scans.empty() && e.t0 < index.scans.back().t0) {
      throw ParseError(path.string() + ": scan '" + e.file +
                       "' breaks t0 ordering");
    }
    index.scans.push_back(std::move(e));
  }
  return index;
}

void save_scan_index(const ScanIndex& index, const fs::path& path) {
  ordered_json doc;
  doc["frame"] = "body";
  doc["sweep_duration"] = index.sweep_duration;
  ordered_json scans = ordered_json::array();
  for (const ScanIndexEntry& e : index.scans) {
    scans.push_back(
        ordered_json{{"file", e.file}, {"t0", e.t0}, {"t1", e.t1}});
  }
  doc["scans"] = std::move(scans);
  write_file(path, doc.dump(2) + "\n");
}

FrameIndex load_frame_index(const fs::path& path) {
  const json doc = parse_json_strict(path, read_file(path));
  if (!doc.is_object() || !doc.contains("cameras") || !doc.contains("frames")) {
    throw ParseError(path.string() +
                     ": frame index needs 'cameras' and 'frames'");
  }
  FrameIndex index;
  const json& cameras = doc["cameras"];
  if (!cameras.is_object()) {
    throw ParseError(path.string() + ": 'cameras' must be an object");
  }
  for (const auto& [id, cam] : cameras.items()) {
    DatasetCamera out;
    for (const char* key :
         {"fx", "fy", "cx", "cy", "width", "height", "max_depth"}) {
      if (!cam.contains(key)) {
        throw ParseError(path.string() + ": camera '" + id + "' missing '" +
                         key + "'");
      }
    }
    out.intrinsics.fx = cam["fx"].get<double>();
    out.intrinsics.fy = cam["fy"].get<double>();
    out.intrinsics.cx = cam["cx"].get<double>();
    out.intrinsics.cy = cam["cy"].get<double>();
    out.intrinsics.width = cam["width"].get<int>();
    out.intrinsics.height = cam["height"].get<int>();
    out.max_depth = cam["max_depth"].get<double>();
    if (!(out.intrinsics.fx > 0) || !(out.intrinsics.fy > 0) ||
        out.intrinsics.width <= 0 || out.intrinsics.height <= 0) {
      throw ParseError(path.string() + ": camera '" + id +
                       "' has non-positive dimensions");
    }
    index.cameras[id] = out;
  }
  const json& frames = doc["frames"];
  if (!frames.is_array()) {
    throw ParseError(path.string() + ": 'frames' must be an array");
  }
  index.frames.reserve(frames.size());
  for (const json& entry : frames) {
    FrameRecord rec;
    if (!entry.is_object() || !entry.contains("camera") ||
        !entry.contains("index") || !entry.contains("t") ||
        !entry.contains("flow_px")) {
      throw ParseError(path.string() +
                       ": frame entries need 'camera', 'index', 't', 'flow_px'");
    }
    rec.camera = entry["camera"].get<std::string>();
    rec.index = entry["index"].get<std::size_t>();
    rec.t = entry["t"].get<double>();
    rec.flow_px = entry["flow_px"].get<double>();
    if (entry.contains("depth_file") && !entry["depth_file"].is_null()) {
      rec.depth_file = entry["depth_file"].get<std::string>();
    }
    if (index.cameras.find(rec.camera) == index.cameras.end()) {
      throw ParseError(path.string() + ": frame references unknown camera '" +
                       rec.camera + "'");
    }
    index.frames.push_back(std::move(rec));
  }
  return index;
}

void save_frame_index(const FrameIndex& index, const fs::path& path) {
  ordered_json cameras = ordered_json::object();
  for (const auto& [id, cam] : index.cameras) {
    cameras[id] = ordered_json{{"fx", cam.intrinsics.fx},
                               {"fy", cam.intrinsics.fy},
                               {"cx", cam.intrinsics.cx},
                               {"cy", cam.intrinsics.cy},
                               {"width", cam.intrinsics.width},
                               {"height", cam.intrinsics.height},
                               {"max_depth", cam.max_depth}};
  }
  ordered_json frames = ordered_json::array();
  for (const FrameRecord& rec : index.frames) {
    ordered_json entry{{"camera", rec.camera},
                       {"index", rec.index},
                       {"t", rec.t},
                       {"flow_px", rec.flow_px}};
    if (rec.depth_file.empty()) {
      entry["depth_file"] = nullptr;
    } else {
      entry["depth_file"] = rec.depth_file;
    }
    frames.push_back(std::move(entry));
  }
  ordered_json doc;
  doc["cameras"] = std::move(cameras);
  doc["frames"] = std::move(frames);
  write_file(path, doc.dump(2) + "\n");
}

PoseSE3 load_mount(const fs::path& path) {
  const json doc = parse_json_strict(path, read_file(path));
  if (!doc.is_object() || !doc.contains("front_in_robot")) {
    throw ParseError(path.string() + ": mount file needs 'front_in_robot'");
  }
  return detail::pose_from_json(path, doc["front_in_robot"], "front_in_robot");
}

void save_mount(const PoseSE3& front_in_robot, const fs::path& path) {
  ordered_json doc;
  doc["front_in_robot"] = detail::pose_to_json(front_in_robot);
  write_file(path, doc.dump(2) + "\n");
}

}  // namespace hallmap
