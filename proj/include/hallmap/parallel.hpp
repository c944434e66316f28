// hallmap: multi-sensor indoor mapping and evaluation toolkit
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include <functional>

namespace hallmap {

/// Worker count used by parallel_for: the HALLMAP_THREADS environment
/// variable when set to a positive integer, otherwise the hardware
/// concurrency (minimum 1).
std::size_t worker_count();

/// Run fn(i) for i in [begin, end) across worker_count() threads.
/// Work is split into contiguous blocks; fn must be safe to call
/// concurrently for distinct indices. Falls back to a plain loop for
/// small ranges or a single worker.
void parallel_for(std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t)>& fn);

}  // namespace hallmap
