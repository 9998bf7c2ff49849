// Command-line front end for the pooling benchmark engine. Every failure
// leaves a single JSON line on stderr and an exit code that names its
// category; success is exit code 0.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gpb/error.hpp"
#include "gpb/graph.hpp"
#include "gpb/harness.hpp"
#include "gpb/splits.hpp"

namespace {

using json = nlohmann::json;
using namespace gpb;

int exit_code(ErrorCategory cat) {
  switch (cat) {
    case ErrorCategory::config: return 2;
    case ErrorCategory::ingestion: return 3;
    case ErrorCategory::format: return 4;
    case ErrorCategory::dimension: return 5;
    case ErrorCategory::numeric: return 6;
    case ErrorCategory::unsupported: return 7;
    case ErrorCategory::io: return 8;
    case ErrorCategory::internal: return 9;
  }
  return 9;
}

void print_error(const char* category, const std::string& message) {
  json j;
  j["error"] = category;
  j["message"] = message;
  std::cerr << j.dump() << '\n';
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCategory::io, "cannot open output file: " + path);
  out << text;
  if (!out) fail(ErrorCategory::io, "failed writing output file: " + path);
}

// Print to stdout, or to --out when given.
void deliver(const std::string& out_path, const std::string& text) {
  if (out_path.empty())
    std::cout << text;
  else
    write_text(out_path, text);
}

harness::ExperimentConfig load_config(const std::string& path, bool have_seed,
                                      uint64_t seed) {
  harness::ExperimentConfig cfg = harness::load_config_file(path);
  if (have_seed) cfg.seeds = {seed};
  return cfg;
}

int cmd_train(const harness::ExperimentConfig& cfg, std::string out_path) {
  auto records = harness::run_experiment(cfg);
  if (out_path.empty()) out_path = "results.jsonl";
  harness::save_results(records, out_path);
  std::cout << harness::summary_csv(records);
  return 0;
}

int cmd_eval(harness::ExperimentConfig cfg, const std::string& out_path) {
  cfg.seeds = {cfg.seeds[0]};  // one-shot evaluation of a single seed
  auto records = harness::run_experiment(cfg);
  json arr = json::array();
  for (const auto& rec : records) {
    json j;
    j["config"] = rec.config;
    j["seed"] = rec.seed;
    j["fold"] = rec.fold;
    j["metrics"] = rec.metrics;
    j["wall_seconds"] = rec.wall_seconds;
    j["failure"] = rec.failure;
    arr.push_back(j);
  }
  deliver(out_path, arr.dump(2) + "\n");
  return 0;
}

int cmd_perturb(const harness::ExperimentConfig& cfg, std::string out_path) {
  harness::validate(cfg);
  harness::LoadedData data = harness::load_dataset(cfg);
  uint64_t seed = cfg.seeds[0];
  splits::Split sp = harness::make_splits(cfg, data, seed)[0];
  harness::LoadedData out = harness::perturbed_dataset(cfg, data, sp, seed);
  std::string text;
  for (size_t i = 0; i < out.graphs.size(); ++i) {
    const graphs::Graph& g = out.graphs[i];
    json j;
    j["index"] = i;
    j["nodes"] = g.n;
    json edges = json::array();
    for (int v = 0; v < g.n; ++v)
      for (int u : g.neighbors(v))
        if (v < u) edges.push_back({v, u});
    j["edges"] = edges;
    json x = json::array();
    for (int r = 0; r < g.n; ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < g.x.cols(); ++c) row.push_back(g.x(r, c));
      x.push_back(row);
    }
    j["x"] = x;
    if (!g.node_labels.empty()) j["node_labels"] = g.node_labels;
    if (g.graph_label.has_value()) j["graph_label"] = *g.graph_label;
    text += j.dump() + "\n";
  }
  if (out_path.empty()) out_path = "perturbed.jsonl";
  write_text(out_path, text);
  return 0;
}

int cmd_split(const harness::ExperimentConfig& cfg, const std::string& out_path) {
  harness::validate(cfg);
  harness::LoadedData data = harness::load_dataset(cfg);
  uint64_t seed = cfg.seeds[0];
  auto sps = harness::make_splits(cfg, data, seed);
  json arr = json::array();
  for (const auto& sp : sps) {
    json j;
    j["kind"] = splits::split_kind_name(sp.kind);
    j["seed"] = seed;
    j["train"] = sp.train;
    j["val"] = sp.val;
    j["test"] = sp.test;
    arr.push_back(j);
  }
  deliver(out_path, arr.dump(2) + "\n");
  return 0;
}

int cmd_stats(const harness::ExperimentConfig& cfg, const std::string& out_path) {
  harness::LoadedData data = harness::load_dataset(cfg);
  graphs::DatasetStats s = graphs::dataset_stats(data.graphs);
  std::string text =
      "name,graphs,classes,avg_nodes,avg_edges,avg_diameter,avg_degree,avg_cc\n" +
      graphs::stats_csv_row(cfg.dataset, s) + "\n";
  deliver(out_path, text);
  return 0;
}

int cmd_export(const harness::ExperimentConfig& cfg, std::string out_path) {
  if (out_path.empty()) out_path = "embeddings.csv";
  harness::export_embeddings(cfg, out_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"benchmark engine for hierarchical graph pooling"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_path;
  uint64_t seed_val = 0;

  const char* names[] = {"train", "eval", "perturb", "split", "stats",
                         "export-embeddings"};
  const char* briefs[] = {
      "run the full protocol and persist one result record per run",
      "run a single seed and print its metrics as JSON",
      "write the perturbed dataset as self-contained JSON lines",
      "write the train/val/test index lists as JSON",
      "print dataset statistics as CSV",
      "train once and write per-entity embeddings with labels"};
  for (int i = 0; i < 6; ++i) {
    CLI::App* sub = app.add_subcommand(names[i], briefs[i]);
    sub->add_option("--config", config_path, "experiment config file")->required();
    sub->add_option("--seed", seed_val, "override the config's seed list");
    sub->add_option("--out", out_path, "output path");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("config", e.what());
    return 2;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    bool have_seed = sub->count("--seed") > 0;
    harness::ExperimentConfig cfg = load_config(config_path, have_seed, seed_val);
    const std::string& name = sub->get_name();
    if (name == "train") return cmd_train(cfg, out_path);
    if (name == "eval") return cmd_eval(cfg, out_path);
    if (name == "perturb") return cmd_perturb(cfg, out_path);
    if (name == "split") return cmd_split(cfg, out_path);
    if (name == "stats") return cmd_stats(cfg, out_path);
    if (name == "export-embeddings") return cmd_export(cfg, out_path);
    print_error("internal", "unhandled subcommand: " + name);
    return 9;
  } catch (const gpb::Error& e) {
    print_error(to_string(e.category()), e.what());
    return exit_code(e.category());
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 9;
  }
}
