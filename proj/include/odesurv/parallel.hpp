#pragma once

// Deterministic parallelism helpers.  Work is split into contiguous index
// chunks, each thread fills per-index slots, and reductions run serially in
// a fixed adjacent-pair tree order afterwards, so results are bit-identical
// for any worker count.

#include <functional>
#include <span>
#include <vector>

namespace odesurv {

// requested 0 -> hardware concurrency (at least 1).
int resolve_workers(int requested);

// Calls fn(begin, end) on disjoint contiguous ranges covering [0, n).
// With workers <= 1 runs inline.  The first exception (by lowest chunk
// start) is rethrown after all threads join.
void parallel_chunks(int n, int workers,
                     const std::function<void(int begin, int end)>& fn);

// Fixed-order pairwise (tree) sum: adjacent pairs are combined repeatedly,
// odd tail promoted.  Same order regardless of how values were produced.
double pairwise_sum(std::span<const double> values);

// Row-wise variant: rows is n x width row-major; returns the width-long
// componentwise pairwise sum over rows.
std::vector<double> pairwise_sum_rows(std::span<const double> rows, int n, int width);

}  // namespace odesurv
