#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "redout/graph.hpp"

namespace redout {

struct BenchRecord {
  int node_count = 0;
  int edge_count = 0;
  double wall_time_seconds = 0.0;
  long long peak_bytes = 0;  // best-effort (VmHWM), reported only
};

/// Times build_coding_tree(G, 2) on ER graphs with |E| = 2|V|, median of
/// `repeats` runs per size. Sizes must be ascending.
std::vector<BenchRecord> bench_tree_construction(const std::vector<int>& sizes, uint64_t seed,
                                                 int repeats = 3);

/// CSV: node_count,edge_count,wall_time_seconds,peak_bytes
void write_bench_csv(const std::vector<BenchRecord>& records, const std::string& path);

/// Peak resident set in bytes (VmHWM on Linux); 0 when unavailable.
long long peak_memory_bytes();

}  // namespace redout
