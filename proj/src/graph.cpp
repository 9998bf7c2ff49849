#include "gpb/graph.hpp"

#include <algorithm>
#include <cstdio>
#include <deque>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "gpb/error.hpp"

namespace gpb::graphs {

namespace {

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::ingestion, "cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

bool blank(const std::string& s) {
  return s.find_first_not_of(" \t") == std::string::npos;
}

// Splits on commas and runs of whitespace; both file families use this.
std::vector<std::string> tokens(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

long parse_int(const std::string& tok, const std::string& path, size_t lineno) {
  size_t pos = 0;
  long v = 0;
  try {
    v = std::stol(tok, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != tok.size())
    fail(ErrorCategory::format,
         path + ":" + std::to_string(lineno) + ": expected integer, got '" +
             tok + "'");
  return v;
}

double parse_real(const std::string& tok, const std::string& path,
                  size_t lineno) {
  size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(tok, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != tok.size())
    fail(ErrorCategory::format,
         path + ":" + std::to_string(lineno) + ": expected number, got '" +
             tok + "'");
  return v;
}

std::string shape_str(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

bool Graph::has_edge(int u, int v) const {
  auto nb = neighbors(u);
  return std::binary_search(nb.begin(), nb.end(), v);
}

Eigen::MatrixXd Graph::dense_adjacency() const {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (int u = 0; u < n; ++u)
    for (int v : neighbors(u)) a(u, v) = 1.0;
  return a;
}

Graph graph_from_edges(int n, const std::vector<std::pair<int, int>>& edges,
                       Eigen::MatrixXd x) {
  if (n < 1) fail(ErrorCategory::dimension, "graph needs at least one node");
  if (x.rows() != n || x.cols() < 1)
    fail(ErrorCategory::dimension,
         "feature matrix " + shape_str(x.rows(), x.cols()) +
             " does not match node count " + std::to_string(n));
  std::vector<std::set<int>> adj(n);
  for (auto [u, v] : edges) {
    if (u < 0 || u >= n || v < 0 || v >= n)
      fail(ErrorCategory::dimension,
           "edge endpoint out of range: (" + std::to_string(u) + "," +
               std::to_string(v) + ") with n=" + std::to_string(n));
    if (u == v) continue;
    adj[u].insert(v);
    adj[v].insert(u);
  }
  Graph g;
  g.n = n;
  g.x = std::move(x);
  g.row_ptr.assign(n + 1, 0);
  for (int v = 0; v < n; ++v)
    g.row_ptr[v + 1] = g.row_ptr[v] + static_cast<int>(adj[v].size());
  g.col_idx.reserve(g.row_ptr[n]);
  for (int v = 0; v < n; ++v)
    g.col_idx.insert(g.col_idx.end(), adj[v].begin(), adj[v].end());
  return g;
}

void validate(const Graph& g) {
  auto bad = [](const std::string& m) {
    fail(ErrorCategory::internal, "graph invariant violated: " + m);
  };
  if (g.n < 1) bad("n >= 1");
  if (static_cast<int>(g.row_ptr.size()) != g.n + 1) bad("row_ptr size");
  if (g.row_ptr.front() != 0 ||
      g.row_ptr.back() != static_cast<int>(g.col_idx.size()))
    bad("row_ptr bounds");
  for (int v = 0; v < g.n; ++v) {
    if (g.row_ptr[v] > g.row_ptr[v + 1]) bad("row_ptr monotone");
    int prev = -1;
    for (int u : g.neighbors(v)) {
      if (u < 0 || u >= g.n) bad("neighbor in range");
      if (u == v) bad("no self loops");
      if (u <= prev) bad("sorted unique neighbor lists");
      prev = u;
    }
  }
  for (int v = 0; v < g.n; ++v)
    for (int u : g.neighbors(v))
      if (!g.has_edge(u, v)) bad("symmetry");
  if (g.x.rows() != g.n || g.x.cols() < 1) bad("feature shape");
  if (!g.node_labels.empty() &&
      static_cast<int>(g.node_labels.size()) != g.n)
    bad("node label count");
}

GraphBatch batch_graphs(const std::vector<Graph>& gs) {
  if (gs.empty()) fail(ErrorCategory::dimension, "cannot batch zero graphs");
  Eigen::Index d = gs[0].x.cols();
  int total = 0, entries = 0;
  for (const Graph& g : gs) {
    if (g.x.cols() != d)
      fail(ErrorCategory::dimension,
           "feature widths differ across batch: " + std::to_string(d) +
               " vs " + std::to_string(g.x.cols()));
    total += g.n;
    entries += g.edge_entries();
  }
  GraphBatch b;
  b.merged.n = total;
  b.merged.x.resize(total, d);
  b.merged.row_ptr.assign(total + 1, 0);
  b.merged.col_idx.reserve(entries);
  b.offsets.assign(1, 0);
  b.indicator.reserve(total);
  bool any_node_labels =
      std::any_of(gs.begin(), gs.end(),
                  [](const Graph& g) { return !g.node_labels.empty(); });
  int base = 0;
  for (size_t gi = 0; gi < gs.size(); ++gi) {
    const Graph& g = gs[gi];
    b.merged.x.middleRows(base, g.n) = g.x;
    for (int v = 0; v < g.n; ++v) {
      b.indicator.push_back(static_cast<int>(gi));
      for (int u : g.neighbors(v)) b.merged.col_idx.push_back(u + base);
      b.merged.row_ptr[base + v + 1] =
          static_cast<int>(b.merged.col_idx.size());
    }
    if (any_node_labels) {
      for (int v = 0; v < g.n; ++v)
        b.merged.node_labels.push_back(
            g.node_labels.empty() ? 0 : g.node_labels[v]);
    }
    b.labels.push_back(g.graph_label);
    base += g.n;
    b.offsets.push_back(base);
  }
  return b;
}

std::vector<Graph> split_batch(const GraphBatch& b) {
  std::vector<Graph> out;
  for (int gi = 0; gi < b.num_graphs(); ++gi) {
    int base = b.offsets[gi];
    int n = b.nodes_of(gi);
    std::vector<std::pair<int, int>> edges;
    for (int v = 0; v < n; ++v)
      for (int u : b.merged.neighbors(base + v))
        edges.emplace_back(v, u - base);
    Graph g = graph_from_edges(n, edges, b.merged.x.middleRows(base, n));
    if (!b.merged.node_labels.empty())
      g.node_labels.assign(b.merged.node_labels.begin() + base,
                           b.merged.node_labels.begin() + base + n);
    g.graph_label = b.labels[gi];
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<Graph> load_tudataset(const std::string& dir,
                                  const std::string& name) {
  auto path = [&](const std::string& suffix) {
    return dir + "/" + name + "_" + suffix + ".txt";
  };
  auto a_path = path("A");
  auto ind_path = path("graph_indicator");
  auto glab_path = path("graph_labels");

  auto ind_lines = read_lines(ind_path);
  std::vector<int> indicator;  // 0-based graph id per 0-based node
  for (size_t i = 0; i < ind_lines.size(); ++i) {
    if (blank(ind_lines[i])) continue;
    indicator.push_back(
        static_cast<int>(parse_int(ind_lines[i], ind_path, i + 1)) - 1);
  }
  int total_nodes = static_cast<int>(indicator.size());
  if (total_nodes == 0)
    fail(ErrorCategory::ingestion, ind_path + " lists no nodes");
  int num_graphs = *std::max_element(indicator.begin(), indicator.end()) + 1;
  for (size_t i = 0; i < indicator.size(); ++i)
    if (indicator[i] < 0)
      fail(ErrorCategory::format,
           ind_path + ":" + std::to_string(i + 1) + ": graph ids are 1-based");

  auto glab_lines = read_lines(glab_path);
  std::vector<long> raw_glabels;
  for (size_t i = 0; i < glab_lines.size(); ++i) {
    if (blank(glab_lines[i])) continue;
    raw_glabels.push_back(parse_int(glab_lines[i], glab_path, i + 1));
  }
  if (static_cast<int>(raw_glabels.size()) != num_graphs)
    fail(ErrorCategory::ingestion,
         glab_path + " has " + std::to_string(raw_glabels.size()) +
             " labels for " + std::to_string(num_graphs) + " graphs");
  std::vector<long> distinct(raw_glabels);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()),
                 distinct.end());
  std::map<long, int> glabel_of;
  for (size_t i = 0; i < distinct.size(); ++i)
    glabel_of[distinct[i]] = static_cast<int>(i);

  // Per-graph local numbering in node-id order.
  std::vector<int> local_id(total_nodes), graph_size(num_graphs, 0);
  for (int v = 0; v < total_nodes; ++v)
    local_id[v] = graph_size[indicator[v]]++;

  std::vector<std::vector<std::pair<int, int>>> edges(num_graphs);
  auto a_lines = read_lines(a_path);
  for (size_t i = 0; i < a_lines.size(); ++i) {
    if (blank(a_lines[i])) continue;
    auto toks = tokens(a_lines[i]);
    if (toks.size() != 2)
      fail(ErrorCategory::format,
           a_path + ":" + std::to_string(i + 1) + ": expected 'i, j'");
    long u = parse_int(toks[0], a_path, i + 1) - 1;
    long v = parse_int(toks[1], a_path, i + 1) - 1;
    if (u < 0 || u >= total_nodes || v < 0 || v >= total_nodes)
      fail(ErrorCategory::format,
           a_path + ":" + std::to_string(i + 1) + ": node id out of range");
    if (indicator[u] != indicator[v])
      fail(ErrorCategory::format,
           a_path + ":" + std::to_string(i + 1) +
               ": edge joins nodes of different graphs");
    edges[indicator[u]].emplace_back(local_id[u], local_id[v]);
  }

  // Node labels (one-hot alphabet over the whole dataset) or attributes.
  std::vector<int> node_labels;
  bool have_node_labels = false;
  {
    std::ifstream probe(path("node_labels"));
    if (probe) {
      have_node_labels = true;
      auto nl_path = path("node_labels");
      auto nl_lines = read_lines(nl_path);
      for (size_t i = 0; i < nl_lines.size(); ++i) {
        if (blank(nl_lines[i])) continue;
        node_labels.push_back(
            static_cast<int>(parse_int(nl_lines[i], nl_path, i + 1)));
      }
      if (static_cast<int>(node_labels.size()) != total_nodes)
        fail(ErrorCategory::ingestion,
             nl_path + " has " + std::to_string(node_labels.size()) +
                 " labels for " + std::to_string(total_nodes) + " nodes");
    }
  }
  Eigen::MatrixXd attrs;
  bool have_attrs = false;
  {
    std::ifstream probe(path("node_attributes"));
    if (probe) {
      have_attrs = true;
      auto at_path = path("node_attributes");
      auto at_lines = read_lines(at_path);
      std::vector<std::vector<double>> rows;
      for (size_t i = 0; i < at_lines.size(); ++i) {
        if (blank(at_lines[i])) continue;
        auto toks = tokens(at_lines[i]);
        std::vector<double> row;
        for (const auto& t : toks) row.push_back(parse_real(t, at_path, i + 1));
        if (!rows.empty() && rows[0].size() != row.size())
          fail(ErrorCategory::format,
               at_path + ":" + std::to_string(i + 1) +
                   ": attribute width differs from first row");
        rows.push_back(std::move(row));
      }
      if (static_cast<int>(rows.size()) != total_nodes)
        fail(ErrorCategory::ingestion,
             at_path + " has " + std::to_string(rows.size()) +
                 " rows for " + std::to_string(total_nodes) + " nodes");
      attrs.resize(total_nodes, static_cast<Eigen::Index>(rows[0].size()));
      for (int r = 0; r < total_nodes; ++r)
        for (size_t c = 0; c < rows[r].size(); ++c)
          attrs(r, static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }

  std::vector<int> label_alphabet;
  std::map<int, int> label_col;
  if (have_node_labels && !have_attrs) {
    label_alphabet = node_labels;
    std::sort(label_alphabet.begin(), label_alphabet.end());
    label_alphabet.erase(
        std::unique(label_alphabet.begin(), label_alphabet.end()),
        label_alphabet.end());
    for (size_t i = 0; i < label_alphabet.size(); ++i)
      label_col[label_alphabet[i]] = static_cast<int>(i);
  }

  // Global node id per (graph, local id), for feature slicing.
  std::vector<std::vector<int>> members(num_graphs);
  for (int v = 0; v < total_nodes; ++v)
    members[indicator[v]].push_back(v);

  std::vector<Graph> out;
  out.reserve(num_graphs);
  for (int gi = 0; gi < num_graphs; ++gi) {
    int n = graph_size[gi];
    if (n == 0)
      fail(ErrorCategory::ingestion,
           ind_path + " skips graph id " + std::to_string(gi + 1));
    Eigen::MatrixXd x;
    if (have_attrs) {
      x.resize(n, attrs.cols());
      for (int v = 0; v < n; ++v) x.row(v) = attrs.row(members[gi][v]);
    } else if (have_node_labels) {
      x = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(
                                       label_alphabet.size()));
      for (int v = 0; v < n; ++v)
        x(v, label_col.at(node_labels[members[gi][v]])) = 1.0;
    } else {
      x = Eigen::MatrixXd::Ones(n, 1);
    }
    Graph g = graph_from_edges(n, edges[gi], std::move(x));
    if (have_node_labels) {
      g.node_labels.resize(n);
      for (int v = 0; v < n; ++v)
        g.node_labels[v] = node_labels[members[gi][v]];
    }
    g.graph_label = glabel_of.at(raw_glabels[gi]);
    out.push_back(std::move(g));
  }
  return out;
}

Graph load_edgelist_graph(const std::string& edges_path,
                          const std::string& features_path,
                          const std::string& labels_path) {
  auto feat_lines = read_lines(features_path);
  std::vector<std::vector<double>> rows;
  for (size_t i = 0; i < feat_lines.size(); ++i) {
    if (blank(feat_lines[i])) continue;
    auto toks = tokens(feat_lines[i]);
    std::vector<double> row;
    for (const auto& t : toks)
      row.push_back(parse_real(t, features_path, i + 1));
    if (!rows.empty() && rows[0].size() != row.size())
      fail(ErrorCategory::format,
           features_path + ":" + std::to_string(i + 1) +
               ": feature width differs from first row");
    rows.push_back(std::move(row));
  }
  if (rows.empty())
    fail(ErrorCategory::ingestion, features_path + " has no feature rows");
  int n = static_cast<int>(rows.size());
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(rows[0].size()));
  for (int r = 0; r < n; ++r)
    for (size_t c = 0; c < rows[r].size(); ++c)
      x(r, static_cast<Eigen::Index>(c)) = rows[r][c];

  auto lab_lines = read_lines(labels_path);
  std::vector<int> labels;
  for (size_t i = 0; i < lab_lines.size(); ++i) {
    if (blank(lab_lines[i])) continue;
    labels.push_back(
        static_cast<int>(parse_int(lab_lines[i], labels_path, i + 1)));
  }
  if (static_cast<int>(labels.size()) != n)
    fail(ErrorCategory::ingestion,
         labels_path + " has " + std::to_string(labels.size()) +
             " labels for " + std::to_string(n) + " feature rows");

  auto edge_lines = read_lines(edges_path);
  std::vector<std::pair<int, int>> edges;
  for (size_t i = 0; i < edge_lines.size(); ++i) {
    if (blank(edge_lines[i])) continue;
    auto toks = tokens(edge_lines[i]);
    if (toks.size() != 2)
      fail(ErrorCategory::format,
           edges_path + ":" + std::to_string(i + 1) + ": expected 'u v'");
    long u = parse_int(toks[0], edges_path, i + 1);
    long v = parse_int(toks[1], edges_path, i + 1);
    if (u < 0 || u >= n || v < 0 || v >= n)
      fail(ErrorCategory::format,
           edges_path + ":" + std::to_string(i + 1) +
               ": node id out of range for n=" + std::to_string(n));
    edges.emplace_back(static_cast<int>(u), static_cast<int>(v));
  }
  Graph g = graph_from_edges(n, edges, std::move(x));
  g.node_labels = std::move(labels);
  return g;
}

void save_edgelist_graph(const Graph& g, const std::string& edges_path,
                         const std::string& features_path,
                         const std::string& labels_path) {
  auto open = [](const std::string& p) {
    std::ofstream out(p);
    if (!out) fail(ErrorCategory::io, "cannot write file: " + p);
    return out;
  };
  auto eo = open(edges_path);
  for (int u = 0; u < g.n; ++u)
    for (int v : g.neighbors(u))
      if (u < v) eo << u << " " << v << "\n";
  auto fo = open(features_path);
  fo.precision(17);
  for (int r = 0; r < g.n; ++r) {
    for (Eigen::Index c = 0; c < g.x.cols(); ++c) {
      if (c) fo << ",";
      fo << g.x(r, c);
    }
    fo << "\n";
  }
  auto lo = open(labels_path);
  for (int r = 0; r < g.n; ++r)
    lo << (g.node_labels.empty() ? 0 : g.node_labels[r]) << "\n";
}

std::vector<int> bfs_distances(const Graph& g, int source) {
  std::vector<int> dist(g.n, -1);
  std::deque<int> queue{source};
  dist[source] = 0;
  while (!queue.empty()) {
    int v = queue.front();
    queue.pop_front();
    for (int u : g.neighbors(v)) {
      if (dist[u] < 0) {
        dist[u] = dist[v] + 1;
        queue.push_back(u);
      }
    }
  }
  return dist;
}

std::vector<int> connected_components(const Graph& g, int* count) {
  std::vector<int> comp(g.n, -1);
  int next = 0;
  for (int s = 0; s < g.n; ++s) {
    if (comp[s] >= 0) continue;
    comp[s] = next;
    std::deque<int> queue{s};
    while (!queue.empty()) {
      int v = queue.front();
      queue.pop_front();
      for (int u : g.neighbors(v)) {
        if (comp[u] < 0) {
          comp[u] = next;
          queue.push_back(u);
        }
      }
    }
    ++next;
  }
  if (count) *count = next;
  return comp;
}

std::vector<double> local_clustering(const Graph& g) {
  std::vector<double> cc(g.n, 0.0);
  for (int v = 0; v < g.n; ++v) {
    int d = g.degree(v);
    if (d < 2) continue;
    auto nb = g.neighbors(v);
    int closed = 0;
    for (size_t i = 0; i < nb.size(); ++i)
      for (size_t j = i + 1; j < nb.size(); ++j)
        if (g.has_edge(nb[i], nb[j])) ++closed;
    cc[v] = 2.0 * closed / (static_cast<double>(d) * (d - 1));
  }
  return cc;
}

int diameter_largest_component(const Graph& g) {
  int count = 0;
  auto comp = connected_components(g, &count);
  std::vector<int> size(count, 0);
  for (int c : comp) ++size[c];
  int target = static_cast<int>(
      std::max_element(size.begin(), size.end()) - size.begin());
  int diameter = 0;
  for (int v = 0; v < g.n; ++v) {
    if (comp[v] != target) continue;
    auto dist = bfs_distances(g, v);
    for (int u = 0; u < g.n; ++u)
      if (comp[u] == target) diameter = std::max(diameter, dist[u]);
  }
  return diameter;
}

std::vector<double> closeness_centrality(const Graph& g) {
  std::vector<double> out(g.n, 0.0);
  for (int v = 0; v < g.n; ++v) {
    auto dist = bfs_distances(g, v);
    long long total = 0;
    for (int u = 0; u < g.n; ++u)
      if (u != v && dist[u] > 0) total += dist[u];
    if (total > 0) out[v] = 1.0 / static_cast<double>(total);
  }
  return out;
}

DatasetStats dataset_stats(const std::vector<Graph>& gs) {
  if (gs.empty())
    fail(ErrorCategory::dimension, "dataset statistics need at least one graph");
  DatasetStats s;
  s.graph_count = static_cast<int>(gs.size());
  std::set<long> classes;
  for (const Graph& g : gs) {
    s.avg_nodes += g.n;
    s.avg_edges += g.edge_entries();
    s.avg_degree += static_cast<double>(g.edge_entries()) / g.n;
    auto cc = local_clustering(g);
    double mean_cc = 0;
    for (double c : cc) mean_cc += c;
    s.avg_clustering += mean_cc / g.n;
    s.avg_diameter += diameter_largest_component(g);
    if (g.graph_label) classes.insert(std::llround(*g.graph_label));
  }
  s.class_count = static_cast<int>(classes.size());
  double count = s.graph_count;
  s.avg_nodes /= count;
  s.avg_edges /= count;
  s.avg_degree /= count;
  s.avg_clustering /= count;
  s.avg_diameter /= count;
  return s;
}

std::string stats_csv_row(const std::string& name, const DatasetStats& s) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%d,%d,%.2f,%.2f,%.2f,%.2f,%.2f",
                name.c_str(), s.graph_count, s.class_count, s.avg_nodes,
                s.avg_edges, s.avg_diameter, s.avg_degree, s.avg_clustering);
  return buf;
}

}  // namespace gpb::graphs
