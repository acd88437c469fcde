#include "redout/bench.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <sstream>

#include "redout/coding_tree.hpp"

namespace redout {

long long peak_memory_bytes() {
  std::ifstream status("/proc/self/status");
  std::string line;
  while (std::getline(status, line)) {
    if (line.rfind("VmHWM:", 0) == 0) {
      std::istringstream ss(line.substr(6));
      long long kb = 0;
      ss >> kb;
      return kb * 1024;
    }
  }
  return 0;
}

std::vector<BenchRecord> bench_tree_construction(const std::vector<int>& sizes, uint64_t seed,
                                                 int repeats) {
  if (!std::is_sorted(sizes.begin(), sizes.end()))
    throw std::invalid_argument("bench: sizes must be ascending");
  if (repeats < 1) throw std::invalid_argument("bench: repeats must be >= 1");

  std::vector<BenchRecord> records;
  for (int n : sizes) {
    const Graph g = generate_er_graph(n, seed);
    std::vector<double> times;
    times.reserve(repeats);
    for (int rep = 0; rep < repeats; ++rep) {
      const auto start = std::chrono::steady_clock::now();
      CodingTree tree = build_coding_tree(g, 2);
      const auto stop = std::chrono::steady_clock::now();
      times.push_back(std::chrono::duration<double>(stop - start).count());
      if (tree.height() > 2) throw std::logic_error("bench: height contract violated");
    }
    std::sort(times.begin(), times.end());
    BenchRecord record;
    record.node_count = n;
    record.edge_count = g.edge_count();
    record.wall_time_seconds = times[times.size() / 2];
    record.peak_bytes = peak_memory_bytes();
    records.push_back(record);
  }
  return records;
}

void write_bench_csv(const std::vector<BenchRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw LoadError("bench: cannot write " + path);
  out << "node_count,edge_count,wall_time_seconds,peak_bytes\n";
  out.precision(9);
  for (const auto& r : records)
    out << r.node_count << "," << r.edge_count << "," << r.wall_time_seconds << ","
        << r.peak_bytes << "\n";
}

}  // namespace redout
