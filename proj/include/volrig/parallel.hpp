#pragma once

#include <cstddef>
#include <functional>

namespace volrig {

/// Worker cap used by every parallel loop in the library. Defaults to 1.
void set_num_threads(int n);
int num_threads();

/// Runs fn(i) for i in [0, n). Each index is handled by exactly one worker,
/// so callers that write only to index-owned outputs get schedule-independent
/// results.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace volrig
