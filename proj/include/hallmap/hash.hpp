// hallmap: multi-sensor indoor mapping and evaluation toolkit
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

namespace hallmap {

/// SHA-256 of a byte string, as lowercase hex.
std::string sha256_hex(const std::string& data);

/// SHA-256 of a file's contents, as lowercase hex. Throws Error when the
/// file cannot be opened.
std::string sha256_file_hex(const std::filesystem::path& path);

}  // namespace hallmap
