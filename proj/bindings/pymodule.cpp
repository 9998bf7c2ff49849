// Python surface of the benchmark engine. Exposes the graph loaders and
// statistics, the pooling selection/coarsening primitives and their
// value-level regularizers, the perturbations, the split generators, the
// evaluation metrics, and a config-text driver for whole experiments.
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "gpb/error.hpp"
#include "gpb/gnn.hpp"
#include "gpb/graph.hpp"
#include "gpb/harness.hpp"
#include "gpb/metrics.hpp"
#include "gpb/perturb.hpp"
#include "gpb/pooling.hpp"
#include "gpb/splits.hpp"
#include "gpb/synthetic.hpp"
#include "gpb/tensor.hpp"

namespace py = pybind11;

namespace {

using gpb::ad::Matrix;
using gpb::ad::Tensor;

std::map<std::string, double> to_values(
    const std::map<std::string, Tensor>& named) {
  std::map<std::string, double> out;
  for (const auto& [key, tensor] : named) out[key] = tensor.value()(0, 0);
  return out;
}

std::vector<std::pair<int, int>> directed_entries(const gpb::graphs::Graph& g) {
  std::vector<std::pair<int, int>> out;
  out.reserve(static_cast<size_t>(g.edge_entries()));
  for (int v = 0; v < g.n; ++v)
    for (int u : g.neighbors(v)) out.emplace_back(v, u);
  return out;
}

py::dict record_to_dict(const gpb::harness::ResultRecord& r) {
  py::dict d;
  d["config"] = r.config;
  d["seed"] = r.seed;
  d["fold"] = r.fold;
  d["train_loss"] = r.train_loss;
  d["metrics"] = r.metrics;
  d["wall_seconds"] = r.wall_seconds;
  d["peak_rss_bytes"] = r.peak_rss_bytes;
  d["failure"] = r.failure;
  return d;
}

}  // namespace

PYBIND11_MODULE(_gpbench, m) {
  m.doc() =
      "Benchmark engine for hierarchical graph pooling: graph ingestion and "
      "statistics, pooling primitives, perturbations, data splits, metrics, "
      "and a config-driven experiment runner.";
  m.attr("__version__") = "0.1.0";

  static py::handle engine_error =
      py::exception<gpb::Error>(m, "EngineError").release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const gpb::Error& e) {
      const std::string msg =
          std::string(gpb::to_string(e.category())) + ": " + e.what();
      py::set_error(engine_error, msg.c_str());
    }
  });

  // --- graphs ---------------------------------------------------------------
  py::class_<gpb::graphs::Graph>(m, "Graph")
      .def_readonly("n", &gpb::graphs::Graph::n)
      .def_property_readonly(
          "x", [](const gpb::graphs::Graph& g) { return Matrix(g.x); })
      .def_readonly("node_labels", &gpb::graphs::Graph::node_labels)
      .def_property_readonly("graph_label",
                             [](const gpb::graphs::Graph& g) -> py::object {
                               if (g.graph_label)
                                 return py::float_(*g.graph_label);
                               return py::none();
                             })
      .def("edge_entries", &gpb::graphs::Graph::edge_entries)
      .def("undirected_edges", &gpb::graphs::Graph::undirected_edges)
      .def("degree", &gpb::graphs::Graph::degree)
      .def("has_edge", &gpb::graphs::Graph::has_edge)
      .def("dense_adjacency", &gpb::graphs::Graph::dense_adjacency)
      .def("edges", &directed_entries,
           "All directed adjacency entries as (i, j) pairs.");

  py::class_<gpb::graphs::DatasetStats>(m, "DatasetStats")
      .def_readonly("graph_count", &gpb::graphs::DatasetStats::graph_count)
      .def_readonly("class_count", &gpb::graphs::DatasetStats::class_count)
      .def_readonly("avg_nodes", &gpb::graphs::DatasetStats::avg_nodes)
      .def_readonly("avg_edges", &gpb::graphs::DatasetStats::avg_edges)
      .def_readonly("avg_degree", &gpb::graphs::DatasetStats::avg_degree)
      .def_readonly("avg_clustering",
                    &gpb::graphs::DatasetStats::avg_clustering)
      .def_readonly("avg_diameter", &gpb::graphs::DatasetStats::avg_diameter);

  m.def(
      "graph_from_edges",
      [](int n, const std::vector<std::pair<int, int>>& edges, Matrix x) {
        return gpb::graphs::graph_from_edges(n, edges, std::move(x));
      },
      py::arg("n"), py::arg("edges"), py::arg("x"),
      "Build a symmetric, deduplicated, loop-free graph from endpoint pairs.");
  m.def("load_tudataset", &gpb::graphs::load_tudataset, py::arg("dir"),
        py::arg("name"));
  m.def("load_edgelist_graph", &gpb::graphs::load_edgelist_graph,
        py::arg("edges_path"), py::arg("features_path"),
        py::arg("labels_path"));
  m.def("dataset_stats", &gpb::graphs::dataset_stats, py::arg("graphs"));
  m.def("stats_csv_row", &gpb::graphs::stats_csv_row, py::arg("name"),
        py::arg("stats"));
  m.def("closeness_centrality", &gpb::graphs::closeness_centrality,
        py::arg("graph"),
        "Per node: 1 / (sum of shortest-path lengths to reachable nodes); "
        "0 for isolated nodes.");
  m.def("local_clustering", &gpb::graphs::local_clustering, py::arg("graph"));
  m.def("diameter_largest_component", &gpb::graphs::diameter_largest_component,
        py::arg("graph"));

  // --- synthetic fixtures -----------------------------------------------------
  m.def("separable_two_class", &gpb::synth::separable_two_class,
        py::arg("count"), py::arg("seed"));
  m.def("feature_mean_regression", &gpb::synth::feature_mean_regression,
        py::arg("count"), py::arg("seed"));
  m.def("two_community_graph", &gpb::synth::two_community_graph,
        py::arg("community_size"), py::arg("seed"));

  // --- pooling primitives -----------------------------------------------------
  m.def("gcn_norm_dense", &gpb::nn::gcn_norm_dense, py::arg("a"),
        "Symmetric renormalization of a dense adjacency with self-loops.");
  m.def("keep_count", &gpb::pool::keep_count, py::arg("n"), py::arg("ratio"));
  m.def("select_topk", &gpb::pool::select_topk, py::arg("scores"),
        py::arg("ratio"),
        "Ascending indices of the keep_count largest scores; ties go to the "
        "lower index.");
  m.def(
      "kmis_select",
      [](const Matrix& a, const std::vector<double>& scores, int k) {
        auto sel = gpb::pool::kmis_select(a, scores, k);
        return py::make_tuple(sel.idx, sel.cluster);
      },
      py::arg("a"), py::arg("scores"), py::arg("k"),
      "Greedy distance-k independent set: returns (anchor indices, node -> "
      "anchor position).");
  m.def(
      "coarsen_cluster",
      [](const Matrix& h, const Matrix& a, const Matrix& s) {
        auto [hp, ap] =
            gpb::pool::coarsen_cluster(Tensor(h), Tensor(a), Tensor(s));
        return py::make_tuple(Matrix(hp.value()), Matrix(ap.value()));
      },
      py::arg("h"), py::arg("a"), py::arg("s"),
      "Cluster-weighted coarsening: returns (S^T H, S^T A S).");
  m.def(
      "diffpool_losses",
      [](const Matrix& a, const Matrix& s) {
        return to_values(gpb::pool::diffpool_losses(Tensor(a), Tensor(s)));
      },
      py::arg("a"), py::arg("s"));
  m.def(
      "mincut_losses",
      [](const Matrix& a, const Matrix& s) {
        return to_values(gpb::pool::mincut_losses(Tensor(a), Tensor(s)));
      },
      py::arg("a"), py::arg("s"));
  m.def(
      "dmon_losses",
      [](const Matrix& a, const Matrix& s) {
        return to_values(gpb::pool::dmon_losses(Tensor(a), Tensor(s)));
      },
      py::arg("a"), py::arg("s"));
  m.def(
      "justbalance_loss",
      [](const Matrix& s) {
        return gpb::pool::justbalance_loss(Tensor(s)).value()(0, 0);
      },
      py::arg("s"));
  m.def("pooler_names", [] { return gpb::pool::pooler_names(); });
  m.def("pooler_is_index_based", &gpb::pool::pooler_is_index_based,
        py::arg("name"));

  // --- perturbations ----------------------------------------------------------
  m.def("add_edges", &gpb::perturb::add_edges, py::arg("graph"),
        py::arg("rate"), py::arg("seed"));
  m.def("drop_edges", &gpb::perturb::drop_edges, py::arg("graph"),
        py::arg("rate"), py::arg("seed"));
  m.def("mask_features", &gpb::perturb::mask_features, py::arg("graph"),
        py::arg("rate"), py::arg("seed"));
  m.def("knn_rewire", &gpb::perturb::knn_rewire, py::arg("graph"),
        py::arg("k"));
  m.def("flip_labels", &gpb::perturb::flip_labels, py::arg("labels"),
        py::arg("rate"), py::arg("class_count"), py::arg("seed"));

  // --- splits -----------------------------------------------------------------
  py::class_<gpb::splits::Split>(m, "Split")
      .def_readonly("train", &gpb::splits::Split::train)
      .def_readonly("val", &gpb::splits::Split::val)
      .def_readonly("test", &gpb::splits::Split::test);
  m.def(
      "random_split",
      [](int n_items, double train_frac, double val_frac, double test_frac,
         uint64_t seed) {
        return gpb::splits::random_split(
            n_items, {train_frac, val_frac, test_frac}, seed);
      },
      py::arg("n_items"), py::arg("train_frac"), py::arg("val_frac"),
      py::arg("test_frac"), py::arg("seed"));
  m.def("kfold", &gpb::splits::kfold, py::arg("n_items"), py::arg("k"),
        py::arg("seed"));
  m.def("size_split", &gpb::splits::size_split, py::arg("graphs"));
  m.def("density_split", &gpb::splits::density_split, py::arg("graphs"));
  m.def("degree_split", &gpb::splits::degree_split, py::arg("graph"));
  m.def("closeness_split", &gpb::splits::closeness_split, py::arg("graph"));

  // --- metrics ----------------------------------------------------------------
  m.def("accuracy", &gpb::metrics::accuracy, py::arg("pred"), py::arg("truth"));
  m.def("micro_f1", &gpb::metrics::micro_f1, py::arg("pred"), py::arg("truth"));
  m.def("macro_f1", &gpb::metrics::macro_f1, py::arg("pred"), py::arg("truth"));
  m.def("average_precision", &gpb::metrics::average_precision,
        py::arg("scores"), py::arg("truth"));
  m.def("auroc", &gpb::metrics::auroc, py::arg("scores"), py::arg("truth"));
  m.def("rmse", &gpb::metrics::rmse, py::arg("pred"), py::arg("truth"));
  m.def("mae", &gpb::metrics::mae, py::arg("pred"), py::arg("truth"));
  m.def("mean_of", &gpb::metrics::mean_of, py::arg("values"));
  m.def("population_std", &gpb::metrics::population_std, py::arg("values"));

  // --- experiment driver --------------------------------------------------------
  m.def(
      "canonical_config",
      [](const std::string& text) {
        auto cfg = gpb::harness::parse_config_text(text);
        gpb::harness::validate(cfg);
        return gpb::harness::canonical_text(cfg);
      },
      py::arg("config_text"),
      "Parse, validate, and reserialize a config in canonical key order.");
  m.def(
      "config_digest",
      [](const std::string& text) {
        auto cfg = gpb::harness::parse_config_text(text);
        gpb::harness::validate(cfg);
        return gpb::harness::config_digest(cfg);
      },
      py::arg("config_text"));
  m.def(
      "load_dataset",
      [](const std::string& text) {
        auto cfg = gpb::harness::parse_config_text(text);
        gpb::harness::validate(cfg);
        auto data = gpb::harness::load_dataset(cfg);
        py::dict d;
        d["graphs"] = data.graphs;
        d["node_task"] = data.node_task;
        d["regression"] = data.regression;
        d["feature_dim"] = data.feature_dim;
        d["class_count"] = data.class_count;
        return d;
      },
      py::arg("config_text"),
      "Load the dataset a config names; returns graphs plus task facts.");
  m.def(
      "run_experiment",
      [](const std::string& text) {
        auto cfg = gpb::harness::parse_config_text(text);
        gpb::harness::validate(cfg);
        auto records = gpb::harness::run_experiment(cfg);
        py::list out;
        for (const auto& r : records) out.append(record_to_dict(r));
        return out;
      },
      py::arg("config_text"),
      "Run every (seed, fold) an experiment config describes; returns one "
      "record dict per run.");
}
