// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>

namespace deqflow {

/// Worker count: DEQFLOW_THREADS if set (>= 1), else hardware concurrency.
/// Forced to 1 while deterministic mode is on.
int worker_count();

void set_deterministic(bool on);
bool deterministic();

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index runs
/// exactly once; callers write results into per-index slots so the outcome
/// never depends on scheduling.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace deqflow
