// hallmap: multi-sensor indoor mapping and evaluation toolkit
// SPDX-License-Identifier: Apache-2.0
//
// Internal JSON helpers shared by the readers in this library. Not part of
// the public headers: keeps nlohmann out of the installed interface.

#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "hallmap/errors.hpp"
#include "hallmap/geometry.hpp"

namespace hallmap::detail {

/// Parse JSON and fail on duplicate object keys anywhere in the document
/// (nlohmann's default DOM keeps the last duplicate silently).
inline nlohmann::json parse_json_strict(const std::filesystem::path& path,
                                        const std::string& text) {
  using json = nlohmann::json;
  std::vector<std::set<std::string>> scopes;
  std::string duplicate;
  json::parser_callback_t cb = [&](int /*depth*/, json::parse_event_t event,
                                   json& parsed) {
    if (event == json::parse_event_t::object_start) {
      scopes.emplace_back();
    } else if (event == json::parse_event_t::object_end) {
      scopes.pop_back();
    } else if (event == json::parse_event_t::key) {
      const std::string key = parsed.get<std::string>();
      if (!scopes.empty() && !scopes.back().insert(key).second &&
          duplicate.empty()) {
        duplicate = key;
      }
    }
    return true;
  };
  json doc;
  try {
    doc = json::parse(text, cb);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  if (!duplicate.empty()) {
    throw ParseError(path.string() + ": duplicate key '" + duplicate + "'");
  }
  return doc;
}

inline Vec3 vec3_from_json(const std::filesystem::path& path,
                           const nlohmann::json& arr, const std::string& what) {
  if (!arr.is_array() || arr.size() != 3) {
    throw ParseError(path.string() + ": " + what + " must be a 3-array");
  }
  return Vec3(arr[0].get<double>(), arr[1].get<double>(), arr[2].get<double>());
}

/// Read {"q": [w,x,y,z], "t": [x,y,z]} into a pose (quaternion normalized).
inline PoseSE3 pose_from_json(const std::filesystem::path& path,
                              const nlohmann::json& obj,
                              const std::string& what) {
  if (!obj.is_object() || !obj.contains("q") || !obj.contains("t")) {
    throw ParseError(path.string() + ": " + what +
                     " must be an object with 'q' and 't'");
  }
  const nlohmann::json& qa = obj["q"];
  if (!qa.is_array() || qa.size() != 4) {
    throw ParseError(path.string() + ": " + what + ".q must be [w,x,y,z]");
  }
  Quat q(qa[0].get<double>(), qa[1].get<double>(), qa[2].get<double>(),
         qa[3].get<double>());
  const double norm = q.norm();
  if (!(norm > 1e-12) || !std::isfinite(norm)) {
    throw ParseError(path.string() + ": " + what +
                     ".q has zero or non-finite norm");
  }
  q.normalize();
  return PoseSE3(q, vec3_from_json(path, obj["t"], what + ".t"));
}

/// {"q": [...], "t": [...]} for a pose (matches pose_from_json).
inline nlohmann::json pose_to_json(const PoseSE3& pose) {
  return nlohmann::json{
      {"q",
       {pose.rotation.w(), pose.rotation.x(), pose.rotation.y(),
        pose.rotation.z()}},
      {"t",
       {pose.translation.x(), pose.translation.y(), pose.translation.z()}}};
}

}  // namespace hallmap::detail
