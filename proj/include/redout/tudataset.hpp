#pragma once

#include <string>

#include "redout/graph.hpp"

namespace redout {

/// Parses the TUDataset flat-file layout from `directory`:
///   <DS>_A.txt               edge list, comma separated, 1-indexed  (mandatory)
///   <DS>_graph_indicator.txt one graph id per node line             (mandatory)
///   <DS>_node_labels.txt     integer node labels                    (optional)
///   <DS>_node_attributes.txt comma separated real vectors           (optional)
///   <DS>_graph_labels.txt    integer graph labels                   (optional)
/// Node ids are remapped to 0-based per-graph local ids. When only node
/// labels exist they are one-hot encoded into the feature matrix; when
/// neither labels nor attributes exist features default to all-ones.
GraphCollection parse_tud_dataset(const std::string& directory);

/// Writes `collection` back out in the same flat-file layout (features are
/// stored as node attributes). Useful for building fixtures.
void write_tud_dataset(const GraphCollection& collection, const std::string& directory,
                       const std::string& dataset_name);

}  // namespace redout
