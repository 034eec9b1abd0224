#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace ictxot {

/// Worker count used by the parallel helpers. Defaults to ICTXOT_THREADS if
/// set, otherwise 1.
std::size_t thread_count();
void set_thread_count(std::size_t n);

/// Sum of fn(begin, end) over fixed-size chunks of [0, count). Chunk
/// boundaries do not depend on the thread count and partial sums are merged
/// in chunk order, so the result is bit-identical for any number of threads.
double deterministic_sum(std::size_t count, std::size_t chunk,
                         const std::function<double(std::size_t, std::size_t)>& fn);

/// Keeps freed blocks of the sizes the attention model churns through on the
/// heap instead of returning them to the OS after every step. No-op outside
/// glibc.
void configure_allocator();

/// Runs fn(i) for i in [0, count), writing into caller-owned slots.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace ictxot
