#pragma once

#include <cstddef>
#include <functional>

namespace smallnoise {

/// Worker count: explicit value if positive, else SMALLNOISE_JOBS, else the
/// hardware concurrency.
int resolve_jobs(int requested);

/// Runs body(i) for i in [0, n) on up to `jobs` threads. Work is handed out
/// by index, so results written to slot i do not depend on the schedule.
/// The first exception thrown by any body is rethrown after all workers stop.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& body);

}  // namespace smallnoise
