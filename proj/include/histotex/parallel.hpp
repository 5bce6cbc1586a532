#ifndef HISTOTEX_PARALLEL_HPP_
#define HISTOTEX_PARALLEL_HPP_

#include <cstddef>
#include <functional>

namespace histotex {

/// Worker count: HISTOTEX_THREADS if set and positive, else the hardware
/// concurrency. Read once per process.
std::size_t worker_count();

/// Overrides the worker count (0 restores the environment default).
void set_worker_count(std::size_t count);

/// Runs body(chunk) for chunk in [0, chunks). Chunk boundaries are chosen by
/// the caller, never by the worker count, so every chunk computes the same
/// bits whether it runs on one thread or many.
void parallel_for(std::size_t chunks, const std::function<void(std::size_t)>& body);

/// Keeps large tensor buffers on the heap instead of mapping and unmapping
/// them per allocation (glibc only; no-op elsewhere). Call once from main.
void tune_process_allocator();

}  // namespace histotex

#endif  // HISTOTEX_PARALLEL_HPP_
