// hallmap: multi-sensor indoor mapping and evaluation toolkit
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace hallmap {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed on-disk input (message carries file, line or point index).
class ParseError : public Error {
public:
  using Error::Error;
};

/// Well-formed file in a dialect we deliberately do not read
/// (e.g. big-endian binary PLY).
class UnsupportedFormatError : public Error {
public:
  using Error::Error;
};

/// Input that is structurally valid but geometrically unusable
/// (rank-deficient point sets, rotations at the log singularity, ...).
class DegenerateInputError : public Error {
public:
  using Error::Error;
};

/// Two clouds share no correspondences under the current gate.
class NoOverlapError : public Error {
public:
  using Error::Error;
};

/// Odometry cannot continue; the pipeline aborts with diagnostics.
class TrackingLostError : public Error {
public:
  using Error::Error;
};

/// Bad configuration file or value out of range.
class ConfigError : public Error {
public:
  using Error::Error;
};

}  // namespace hallmap
