// Copyright 2026 The MSM Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace msm {

/// Worker count: hardware concurrency capped by the MSM_THREADS environment
/// variable when set.
std::size_t worker_count();

/// Runs body(i) for i in [0, count) across workers. Results must be written to
/// per-index slots; scheduling never affects values. The first exception
/// thrown by any task is rethrown on the caller.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace msm
