// Copyright Contributors to the SplatHead Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>

namespace splathead {

// Number of workers used by parallel sections. Defaults to the hardware
// concurrency and is capped by the SPLATHEAD_THREADS environment variable
// (read once per process). Always at least 1.
int worker_count();

// Runs fn(i) for i in [0, n). Work is split into contiguous chunks, one per
// worker, so two calls with the same n assign identical index ranges
// regardless of scheduling. max_threads <= 0 means "use worker_count()";
// max_threads == 1 runs inline on the calling thread.
void parallel_for(int n, const std::function<void(int)>& fn, int max_threads = 0);

}  // namespace splathead
