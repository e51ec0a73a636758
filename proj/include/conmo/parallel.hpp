#pragma once

#include <cstddef>
#include <functional>

namespace conmo {

/// Worker count from CONMO_THREADS (0 or unset = hardware concurrency).
std::size_t worker_count();

/// Runs body(k) for k in [0, n) across worker_count() threads with static
/// contiguous chunking. Bodies must write only to their own slot k; callers
/// merge slots in index order so results do not depend on the thread count.
/// `grain` is the minimum number of items worth a thread of their own.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body, std::size_t grain = 1);

}  // namespace conmo
