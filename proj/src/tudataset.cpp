#include "redout/tudataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace redout {

namespace fs = std::filesystem;

namespace {

// TUDataset directories conventionally hold <name>_A.txt etc., where <name>
// matches the directory. Probe for any *_A.txt so renamed copies also load.
std::string dataset_prefix(const std::string& directory) {
  if (!fs::is_directory(directory)) throw LoadError("TUDataset: no such directory: " + directory);
  for (const auto& entry : fs::directory_iterator(directory)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > 6 && name.substr(name.size() - 6) == "_A.txt")
      return name.substr(0, name.size() - 6);
  }
  throw LoadError("TUDataset: no *_A.txt found in " + directory);
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("TUDataset: cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

std::vector<double> parse_csv_row(const std::string& line, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(line);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw FormatError("TUDataset: bad number '" + tok + "' in " + what);
    }
  }
  return out;
}

}  // namespace

GraphCollection parse_tud_dataset(const std::string& directory) {
  const std::string prefix = dataset_prefix(directory);
  auto path = [&](const std::string& suffix) {
    return (fs::path(directory) / (prefix + suffix)).string();
  };

  const auto indicator_lines = read_lines(path("_graph_indicator.txt"));
  const int total_nodes = static_cast<int>(indicator_lines.size());
  if (total_nodes == 0) throw FormatError("TUDataset: empty graph indicator");

  // indicator[i] = graph id (1-based) of global node i+1
  std::vector<int> indicator(total_nodes);
  int num_graphs = 0;
  for (int i = 0; i < total_nodes; ++i) {
    int gid;
    try {
      gid = std::stoi(indicator_lines[i]);
    } catch (const std::exception&) {
      throw FormatError("TUDataset: non-integer indicator line " + std::to_string(i + 1));
    }
    indicator[i] = gid;
    num_graphs = std::max(num_graphs, gid);
  }
  std::vector<int> nodes_per_graph(num_graphs, 0);
  for (int gid : indicator) {
    if (gid < 1 || gid > num_graphs) throw FormatError("TUDataset: indicator id out of range");
    ++nodes_per_graph[gid - 1];
  }
  for (int g = 0; g < num_graphs; ++g)
    if (nodes_per_graph[g] == 0)
      throw FormatError("TUDataset: indicator gap, graph " + std::to_string(g + 1) +
                        " has zero nodes");

  // global (1-based) -> (graph index, local 0-based id)
  std::vector<int> local_id(total_nodes);
  std::vector<int> next_local(num_graphs, 0);
  for (int i = 0; i < total_nodes; ++i) local_id[i] = next_local[indicator[i] - 1]++;

  // _A.txt conventionally lists both directions of every undirected edge;
  // normalize to (min,max) pairs and keep first appearances.
  std::vector<std::set<std::pair<int, int>>> edge_sets(num_graphs);
  int self_loops = 0;
  for (const auto& line : read_lines(path("_A.txt"))) {
    if (line.empty()) continue;
    auto row = parse_csv_row(line, "_A.txt");
    if (row.size() != 2) throw FormatError("TUDataset: edge line needs two entries: " + line);
    int u = static_cast<int>(row[0]);
    int v = static_cast<int>(row[1]);
    if (u < 1 || u > total_nodes || v < 1 || v > total_nodes)
      throw FormatError("TUDataset: edge references unknown node (" + std::to_string(u) + "," +
                        std::to_string(v) + ")");
    if (indicator[u - 1] != indicator[v - 1])
      throw FormatError("TUDataset: edge crosses graphs (" + std::to_string(u) + "," +
                        std::to_string(v) + ")");
    if (u == v) {
      ++self_loops;
      continue;
    }
    int g = indicator[u - 1] - 1;
    edge_sets[g].insert(std::minmax(local_id[u - 1], local_id[v - 1]));
  }
  if (self_loops > 0)
    warn("TUDataset: dropped " + std::to_string(self_loops) + " self-loop(s) in " + prefix);

  // Features: attributes win over labels; labels one-hot; fall back to ones.
  std::vector<std::vector<double>> node_feats(total_nodes);
  if (fs::exists(path("_node_attributes.txt"))) {
    auto lines = read_lines(path("_node_attributes.txt"));
    if (static_cast<int>(lines.size()) != total_nodes)
      throw FormatError("TUDataset: node attribute count != node count");
    for (int i = 0; i < total_nodes; ++i)
      node_feats[i] = parse_csv_row(lines[i], "_node_attributes.txt");
  } else if (fs::exists(path("_node_labels.txt"))) {
    auto lines = read_lines(path("_node_labels.txt"));
    if (static_cast<int>(lines.size()) != total_nodes)
      throw FormatError("TUDataset: node label count != node count");
    std::vector<int> labels(total_nodes);
    std::map<int, int> label_index;
    for (int i = 0; i < total_nodes; ++i) {
      labels[i] = std::stoi(lines[i]);
      label_index.emplace(labels[i], 0);
    }
    int next = 0;
    for (auto& [label, idx] : label_index) idx = next++;
    for (int i = 0; i < total_nodes; ++i) {
      node_feats[i].assign(label_index.size(), 0.0);
      node_feats[i][label_index[labels[i]]] = 1.0;
    }
  } else {
    for (auto& f : node_feats) f = {1.0};
  }

  GraphCollection out;
  out.provenance = prefix;
  std::vector<std::vector<int>> graph_nodes(num_graphs);
  for (int i = 0; i < total_nodes; ++i) graph_nodes[indicator[i] - 1].push_back(i);
  for (int g = 0; g < num_graphs; ++g) {
    const int n = nodes_per_graph[g];
    const int d = static_cast<int>(node_feats[graph_nodes[g][0]].size());
    DenseMatrix x(n, d);
    for (int i : graph_nodes[g]) {
      if (static_cast<int>(node_feats[i].size()) != d)
        throw FormatError("TUDataset: ragged node features within a graph");
      for (int c = 0; c < d; ++c) x.at(local_id[i], c) = node_feats[i][c];
    }
    std::vector<std::pair<int, int>> edges(edge_sets[g].begin(), edge_sets[g].end());
    out.graphs.emplace_back(n, std::move(edges), std::move(x));
  }

  if (fs::exists(path("_graph_labels.txt"))) {
    auto lines = read_lines(path("_graph_labels.txt"));
    if (static_cast<int>(lines.size()) != num_graphs)
      throw FormatError("TUDataset: graph label count != graph count");
    std::vector<int> labels(num_graphs);
    for (int g = 0; g < num_graphs; ++g) labels[g] = std::stoi(lines[g]);
    out.labels = std::move(labels);
  }
  return out;
}

void write_tud_dataset(const GraphCollection& collection, const std::string& directory,
                       const std::string& dataset_name) {
  fs::create_directories(directory);
  auto path = [&](const std::string& suffix) {
    return (fs::path(directory) / (dataset_name + suffix)).string();
  };
  std::ofstream a(path("_A.txt")), ind(path("_graph_indicator.txt")), attr(path("_node_attributes.txt"));
  if (!a || !ind || !attr) throw LoadError("TUDataset: cannot write to " + directory);
  attr.precision(17);

  int base = 0;
  for (size_t g = 0; g < collection.graphs.size(); ++g) {
    const Graph& graph = collection.graphs[g];
    for (auto [u, v] : graph.edges()) {
      a << (base + u + 1) << ", " << (base + v + 1) << "\n";
      a << (base + v + 1) << ", " << (base + u + 1) << "\n";
    }
    for (int i = 0; i < graph.node_count(); ++i) {
      ind << (g + 1) << "\n";
      for (int c = 0; c < graph.features().cols(); ++c) {
        if (c) attr << ", ";
        attr << graph.features().at(i, c);
      }
      attr << "\n";
    }
    base += graph.node_count();
  }
  if (collection.labels) {
    std::ofstream gl(path("_graph_labels.txt"));
    for (int label : *collection.labels) gl << label << "\n";
  }
}

}  // namespace redout
