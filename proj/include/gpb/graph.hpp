#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace gpb::graphs {

// Immutable simple undirected graph in CSR form. Invariants, enforced by the
// builders and checked by validate():
//  - n >= 1, row_ptr.size() == n+1, col_idx sorted within each row
//  - adjacency symmetric, no self loops, no duplicate entries
//  - x has n rows and at least one column
//  - node_labels is empty or has exactly n entries
struct Graph {
  int n = 0;
  std::vector<int> row_ptr;
  std::vector<int> col_idx;
  Eigen::MatrixXd x;
  std::vector<int> node_labels;
  std::optional<double> graph_label;

  int edge_entries() const { return static_cast<int>(col_idx.size()); }
  int undirected_edges() const { return edge_entries() / 2; }
  int degree(int v) const { return row_ptr[v + 1] - row_ptr[v]; }
  std::span<const int> neighbors(int v) const {
    return {col_idx.data() + row_ptr[v],
            static_cast<size_t>(row_ptr[v + 1] - row_ptr[v])};
  }
  bool has_edge(int u, int v) const;
  Eigen::MatrixXd dense_adjacency() const;
};

// Builds a Graph from undirected edge endpoints: symmetrizes, deduplicates,
// and drops self loops. Endpoints outside [0, n) raise a dimension error.
Graph graph_from_edges(int n, const std::vector<std::pair<int, int>>& edges,
                       Eigen::MatrixXd x);

// Raises an internal error describing the first violated invariant.
void validate(const Graph& g);

// Disjoint union of graphs. `indicator[v]` gives the graph id of merged node
// v and is non-decreasing; `offsets[g]` is the first node of graph g.
struct GraphBatch {
  Graph merged;
  std::vector<int> indicator;
  std::vector<int> offsets;
  std::vector<std::optional<double>> labels;

  int num_graphs() const { return static_cast<int>(offsets.size()) - 1; }
  int nodes_of(int g) const { return offsets[g + 1] - offsets[g]; }
};

GraphBatch batch_graphs(const std::vector<Graph>& gs);
std::vector<Graph> split_batch(const GraphBatch& b);

// Flat-file dataset of graphs: `<name>_A.txt` with 1-indexed "i, j" edge
// lines, `<name>_graph_indicator.txt`, `<name>_graph_labels.txt`, and the
// optional `<name>_node_labels.txt` / `<name>_node_attributes.txt`. Node
// labels are one-hot encoded into x when no attribute file exists; with
// neither, x is a constant 1 column. Graph labels are remapped to contiguous
// 0-based integers ordered by original value.
std::vector<Graph> load_tudataset(const std::string& dir,
                                  const std::string& name);

// Single graph from a whitespace-separated 0-indexed edge list, a CSV feature
// matrix, and an integer label per node. The edge list is symmetrized and
// deduplicated; self loops are dropped.
Graph load_edgelist_graph(const std::string& edges_path,
                          const std::string& features_path,
                          const std::string& labels_path);

// Inverse of load_edgelist_graph: one "i j" line per undirected edge (i < j),
// CSV features, one label per line. Loading the output reproduces the CSR.
void save_edgelist_graph(const Graph& g, const std::string& edges_path,
                         const std::string& features_path,
                         const std::string& labels_path);

// Per-node BFS distances; -1 marks unreachable nodes.
std::vector<int> bfs_distances(const Graph& g, int source);

// Component id per node, ids assigned in order of lowest contained node.
std::vector<int> connected_components(const Graph& g, int* count = nullptr);

// Fraction of closed neighbor pairs; 0 for degree < 2.
std::vector<double> local_clustering(const Graph& g);

// Longest shortest path within the largest connected component (ties between
// components break toward the one with the lowest node id).
int diameter_largest_component(const Graph& g);

// 1 / sum of BFS distances to every reachable node; 0 for nodes that reach
// nothing.
std::vector<double> closeness_centrality(const Graph& g);

struct DatasetStats {
  int graph_count = 0;
  int class_count = 0;
  double avg_nodes = 0;
  double avg_edges = 0;  // directed CSR entries per graph
  double avg_degree = 0;  // mean over graphs of (entries / nodes)
  double avg_clustering = 0;
  double avg_diameter = 0;
};

DatasetStats dataset_stats(const std::vector<Graph>& gs);

// "name,graphs,classes,avg_nodes,avg_edges,avg_diameter,avg_degree,avg_cc"
// with two-decimal averages.
std::string stats_csv_row(const std::string& name, const DatasetStats& s);

}  // namespace gpb::graphs
