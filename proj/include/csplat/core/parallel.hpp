#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <span>
#include <thread>
#include <vector>

namespace csplat {

// Global worker count for parallel loops. 0 means hardware concurrency.
void set_worker_count(int n);
int worker_count();

// Runs fn(begin, end) over [0, n) in fixed-size chunks pulled from an atomic
// counter. Chunk boundaries do not depend on the worker count, so any
// reduction that is per-chunk deterministic stays reproducible.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

// Pairwise (tree) summation. The reduction order depends only on the length,
// never on threading, so results are bit-stable.
double pairwise_sum(std::span<const double> values);

}  // namespace csplat
