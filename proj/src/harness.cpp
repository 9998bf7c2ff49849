#include "gpb/harness.hpp"

#include <sys/resource.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gpb/error.hpp"
#include "gpb/metrics.hpp"
#include "gpb/models.hpp"
#include "gpb/perturb.hpp"
#include "gpb/rng.hpp"
#include "gpb/synthetic.hpp"
#include "gpb/tensor.hpp"

namespace gpb::harness {
namespace {

using json = nlohmann::json;

// --- small helpers -----------------------------------------------------------

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> parts;
  size_t start = 0;
  while (true) {
    size_t pos = s.find(sep, start);
    if (pos == std::string::npos) {
      parts.push_back(s.substr(start));
      break;
    }
    parts.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return parts;
}

long long to_int(const std::string& s, const std::string& what) {
  try {
    size_t pos = 0;
    long long v = std::stoll(s, &pos);
    if (pos != s.size()) fail(ErrorCategory::config, "");
    return v;
  } catch (const std::exception&) {
    fail(ErrorCategory::config, what + " is not an integer: '" + s + "'");
  }
}

double to_double(const std::string& s, const std::string& what) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size() || !std::isfinite(v)) fail(ErrorCategory::config, "");
    return v;
  } catch (const std::exception&) {
    fail(ErrorCategory::config, what + " is not a finite number: '" + s + "'");
  }
}

uint64_t to_seed(const std::string& s, const std::string& what) {
  if (s.empty() || s[0] == '-')
    fail(ErrorCategory::config, what + " is not a non-negative integer: '" + s + "'");
  try {
    size_t pos = 0;
    uint64_t v = std::stoull(s, &pos);
    if (pos != s.size()) fail(ErrorCategory::config, "");
    return v;
  } catch (const std::exception&) {
    fail(ErrorCategory::config, what + " is not a non-negative integer: '" + s + "'");
  }
}

std::string fmt_full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// Independent deterministic sub-streams of one run seed.
uint64_t sub_seed(uint64_t seed, uint64_t salt) {
  uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

long long peak_rss_bytes_now() {
  struct rusage ru{};
  if (getrusage(RUSAGE_SELF, &ru) != 0) return 0;
  return static_cast<long long>(ru.ru_maxrss) * 1024LL;  // ru_maxrss is KiB here
}

// --- split / perturbation spec parsing ---------------------------------------

struct SplitSpec {
  enum class Kind { random, kfold, size, density, degree, closeness };
  Kind kind = Kind::random;
  std::array<double, 3> fractions{0.7, 0.15, 0.15};
  int k = 5;
};

SplitSpec parse_split_spec(const std::string& spec) {
  auto parts = split_on(spec, ':');
  SplitSpec out;
  const std::string& name = parts[0];
  if (name == "random") {
    out.kind = SplitSpec::Kind::random;
    if (parts.size() == 4) {
      for (int i = 0; i < 3; ++i)
        out.fractions[i] = to_double(parts[i + 1], "split fraction");
      double sum = out.fractions[0] + out.fractions[1] + out.fractions[2];
      for (double f : out.fractions)
        if (f <= 0.0)
          fail(ErrorCategory::config, "split fractions must be positive");
      if (std::abs(sum - 1.0) > 1e-9)
        fail(ErrorCategory::config,
             "split fractions must sum to 1, got " + fmt_short(sum));
    } else if (parts.size() != 1) {
      fail(ErrorCategory::config,
           "random split takes zero or three fractions: '" + spec + "'");
    }
  } else if (name == "kfold") {
    out.kind = SplitSpec::Kind::kfold;
    if (parts.size() != 2)
      fail(ErrorCategory::config, "kfold split needs a fold count: '" + spec + "'");
    out.k = static_cast<int>(to_int(parts[1], "fold count"));
    if (out.k < 2) fail(ErrorCategory::config, "fold count must be at least 2");
  } else if (name == "size" || name == "density" || name == "degree" ||
             name == "closeness") {
    if (parts.size() != 1)
      fail(ErrorCategory::config, "split '" + name + "' takes no arguments");
    out.kind = name == "size"      ? SplitSpec::Kind::size
               : name == "density" ? SplitSpec::Kind::density
               : name == "degree"  ? SplitSpec::Kind::degree
                                   : SplitSpec::Kind::closeness;
  } else {
    fail(ErrorCategory::config, "unknown split kind: '" + name + "'");
  }
  return out;
}

struct PerturbSpec {
  enum class Kind { none, add, drop, mask, flip, knn };
  Kind kind = Kind::none;
  double rate = 0.0;
  int k = 1;
};

PerturbSpec parse_perturb_spec(const std::string& spec) {
  auto parts = split_on(spec, ':');
  PerturbSpec out;
  const std::string& name = parts[0];
  if (name == "none") {
    if (parts.size() != 1)
      fail(ErrorCategory::config, "perturbation 'none' takes no arguments");
    return out;
  }
  if (name == "knn") {
    if (parts.size() != 2)
      fail(ErrorCategory::config,
           "knn perturbation needs a neighbor count: '" + spec + "'");
    out.kind = PerturbSpec::Kind::knn;
    out.k = static_cast<int>(to_int(parts[1], "neighbor count"));
    if (out.k < 1)
      fail(ErrorCategory::config, "neighbor count must be at least 1");
    return out;
  }
  if (name == "add" || name == "drop" || name == "mask" || name == "flip") {
    if (parts.size() != 2)
      fail(ErrorCategory::config,
           "perturbation '" + name + "' needs a rate: '" + spec + "'");
    out.kind = name == "add"    ? PerturbSpec::Kind::add
               : name == "drop" ? PerturbSpec::Kind::drop
               : name == "mask" ? PerturbSpec::Kind::mask
                                : PerturbSpec::Kind::flip;
    out.rate = to_double(parts[1], "perturbation rate");
    if (out.rate < 0.0 || out.rate > 1.0)
      fail(ErrorCategory::config, "perturbation rate must lie in [0, 1]");
    return out;
  }
  fail(ErrorCategory::config, "unknown perturbation kind: '" + name + "'");
}

bool is_node_task(const ExperimentConfig& cfg) {
  return cfg.task == "node-classification";
}

// --- config assembly ----------------------------------------------------------

void assign_key(ExperimentConfig& cfg, const std::string& key,
                const std::string& value) {
  if (key == "task") cfg.task = value;
  else if (key == "dataset") cfg.dataset = value;
  else if (key == "pooler") cfg.pooler = value;
  else if (key == "ratio") cfg.ratio = to_double(value, "ratio");
  else if (key == "k") cfg.k = static_cast<int>(to_int(value, "k"));
  else if (key == "clusters")
    cfg.clusters = static_cast<int>(to_int(value, "clusters"));
  else if (key == "stage2_clusters")
    cfg.stage2_clusters = static_cast<int>(to_int(value, "stage2_clusters"));
  else if (key == "hidden") cfg.hidden = static_cast<int>(to_int(value, "hidden"));
  else if (key == "head_mid")
    cfg.head_mid = static_cast<int>(to_int(value, "head_mid"));
  else if (key == "epochs") cfg.epochs = static_cast<int>(to_int(value, "epochs"));
  else if (key == "lr") cfg.lr = to_double(value, "lr");
  else if (key == "batch_size")
    cfg.batch_size = static_cast<int>(to_int(value, "batch_size"));
  else if (key == "split") cfg.split = value;
  else if (key == "perturb") cfg.perturb = value;
  else if (key == "perturb_target") cfg.perturb_target = value;
  else if (key == "fusion") cfg.fusion = value;
  else if (key == "selection") cfg.selection = value;
  else if (key == "seeds") {
    cfg.seeds.clear();
    for (const std::string& tok : split_on(value, ',')) {
      std::string t = trim(tok);
      if (t.empty())
        fail(ErrorCategory::config, "empty entry in seeds list: '" + value + "'");
      cfg.seeds.push_back(to_seed(t, "seed"));
    }
  } else {
    fail(ErrorCategory::config, "unknown config key: '" + key + "'");
  }
}

}  // namespace

// --- config parsing -----------------------------------------------------------

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::set<std::string> seen;
  int line_no = 0;
  for (const std::string& raw : split_on(text, '\n')) {
    ++line_no;
    std::string line = raw;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorCategory::config,
           "config line " + std::to_string(line_no) + ": expected key=value, got '" +
               line + "'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      fail(ErrorCategory::config,
           "config line " + std::to_string(line_no) + ": empty key");
    if (!seen.insert(key).second)
      fail(ErrorCategory::config,
           "config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    assign_key(cfg, key, value);
  }
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    fail(ErrorCategory::io, "cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.task != "graph-classification" && cfg.task != "graph-regression" &&
      cfg.task != "node-classification")
    fail(ErrorCategory::config, "unknown task: '" + cfg.task + "'");
  if (cfg.dataset.empty())
    fail(ErrorCategory::config, "config needs a dataset");
  if (!pool::pooler_name_known(cfg.pooler))
    fail(ErrorCategory::config, "unknown pooling operator: '" + cfg.pooler + "'");
  if (is_node_task(cfg) && !pool::pooler_is_index_based(cfg.pooler))
    fail(ErrorCategory::config,
         "node tasks unpool by kept-node indices; pooling operator '" +
             cfg.pooler + "' keeps none (use topk, sag, or kmis)");
  if (cfg.epochs < 1) fail(ErrorCategory::config, "epochs must be at least 1");
  if (cfg.hidden < 1) fail(ErrorCategory::config, "hidden must be at least 1");
  if (cfg.head_mid < 1) fail(ErrorCategory::config, "head_mid must be at least 1");
  if (cfg.batch_size < 1)
    fail(ErrorCategory::config, "batch_size must be at least 1");
  if (!(cfg.lr > 0.0) || !std::isfinite(cfg.lr))
    fail(ErrorCategory::config, "lr must be a positive finite number");
  if (!(cfg.ratio > 0.0) || cfg.ratio > 1.0)
    fail(ErrorCategory::config, "ratio must lie in (0, 1]");
  if (cfg.k < 1) fail(ErrorCategory::config, "k must be at least 1");
  if (cfg.clusters < 1)
    fail(ErrorCategory::config, "clusters must be at least 1");
  if (cfg.stage2_clusters < 1)
    fail(ErrorCategory::config, "stage2_clusters must be at least 1");
  if (cfg.seeds.empty()) fail(ErrorCategory::config, "seeds must be nonempty");
  if (cfg.fusion != "sum" && cfg.fusion != "concat")
    fail(ErrorCategory::config, "fusion must be 'sum' or 'concat'");
  if (cfg.selection != "final" && cfg.selection != "best_val")
    fail(ErrorCategory::config, "selection must be 'final' or 'best_val'");

  SplitSpec ss = parse_split_spec(cfg.split);
  bool node = is_node_task(cfg);
  if ((ss.kind == SplitSpec::Kind::size || ss.kind == SplitSpec::Kind::density) &&
      node)
    fail(ErrorCategory::config, "split '" + cfg.split + "' orders whole graphs; "
                                "node tasks hold a single graph");
  if ((ss.kind == SplitSpec::Kind::degree ||
       ss.kind == SplitSpec::Kind::closeness) &&
      !node)
    fail(ErrorCategory::config,
         "split '" + cfg.split + "' orders nodes; use it with node tasks");

  PerturbSpec ps = parse_perturb_spec(cfg.perturb);
  if (ps.kind == PerturbSpec::Kind::flip && cfg.task == "graph-regression")
    fail(ErrorCategory::config, "label flipping needs a classification task");
  if (cfg.perturb_target != "train" && cfg.perturb_target != "test" &&
      cfg.perturb_target != "all")
    fail(ErrorCategory::config,
         "perturb_target must be 'train', 'test', or 'all'");
}

std::string canonical_text(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "batch_size=" << cfg.batch_size << '\n';
  out << "clusters=" << cfg.clusters << '\n';
  out << "dataset=" << cfg.dataset << '\n';
  out << "epochs=" << cfg.epochs << '\n';
  out << "fusion=" << cfg.fusion << '\n';
  out << "head_mid=" << cfg.head_mid << '\n';
  out << "hidden=" << cfg.hidden << '\n';
  out << "k=" << cfg.k << '\n';
  out << "lr=" << fmt_full(cfg.lr) << '\n';
  out << "perturb=" << cfg.perturb << '\n';
  out << "perturb_target=" << cfg.perturb_target << '\n';
  out << "pooler=" << cfg.pooler << '\n';
  out << "ratio=" << fmt_full(cfg.ratio) << '\n';
  out << "seeds=";
  for (size_t i = 0; i < cfg.seeds.size(); ++i)
    out << (i ? "," : "") << cfg.seeds[i];
  out << '\n';
  out << "selection=" << cfg.selection << '\n';
  out << "split=" << cfg.split << '\n';
  out << "stage2_clusters=" << cfg.stage2_clusters << '\n';
  out << "task=" << cfg.task << '\n';
  return out.str();
}

std::string config_digest(const ExperimentConfig& cfg) {
  std::string text = canonical_text(cfg);
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// --- datasets -----------------------------------------------------------------

LoadedData load_dataset(const ExperimentConfig& cfg) {
  auto parts = split_on(cfg.dataset, ':');
  LoadedData out;
  const std::string& scheme = parts[0];
  if (scheme == "synthetic") {
    if (parts.size() != 3)
      fail(ErrorCategory::config,
           "synthetic dataset spec is synthetic:<name>:<count>: '" + cfg.dataset + "'");
    const std::string& name = parts[1];
    int count = static_cast<int>(to_int(parts[2], "synthetic dataset size"));
    if (name == "separable2") {
      if (cfg.task != "graph-classification")
        fail(ErrorCategory::config,
             "dataset '" + cfg.dataset + "' is a graph-classification set");
      out.graphs = synth::separable_two_class(count, 101);
      out.class_count = 2;
    } else if (name == "regression") {
      if (cfg.task != "graph-regression")
        fail(ErrorCategory::config,
             "dataset '" + cfg.dataset + "' is a graph-regression set");
      out.graphs = synth::feature_mean_regression(count, 202);
      out.regression = true;
    } else if (name == "two_community") {
      if (cfg.task != "node-classification")
        fail(ErrorCategory::config,
             "dataset '" + cfg.dataset + "' is a node-classification graph");
      out.graphs.push_back(synth::two_community_graph(count, 303));
      out.node_task = true;
      out.class_count = 2;
    } else {
      fail(ErrorCategory::config, "unknown synthetic dataset: '" + name + "'");
    }
  } else if (scheme == "tudataset") {
    if (parts.size() != 2 && parts.size() != 3)
      fail(ErrorCategory::config,
           "tudataset spec is tudataset:<dir>[:<name>]: '" + cfg.dataset + "'");
    if (cfg.task != "graph-classification")
      fail(ErrorCategory::config,
           "flat-file graph sets carry integer graph labels; task must be "
           "graph-classification");
    std::string dir = parts[1];
    std::string name = parts.size() == 3
                           ? parts[2]
                           : std::filesystem::path(dir).filename().string();
    out.graphs = graphs::load_tudataset(dir, name);
    int max_label = -1;
    for (const auto& g : out.graphs) {
      if (!g.graph_label.has_value())
        fail(ErrorCategory::ingestion, "graph without a label in " + dir);
      max_label = std::max(max_label,
                           static_cast<int>(std::llround(*g.graph_label)));
    }
    out.class_count = max_label + 1;
  } else if (scheme == "edgelist") {
    if (parts.size() != 4)
      fail(ErrorCategory::config,
           "edgelist spec is edgelist:<edges>:<features>:<labels>: '" +
               cfg.dataset + "'");
    if (cfg.task != "node-classification")
      fail(ErrorCategory::config,
           "edge-list datasets are single labeled graphs; task must be "
           "node-classification");
    out.graphs.push_back(
        graphs::load_edgelist_graph(parts[1], parts[2], parts[3]));
    out.node_task = true;
    const auto& labels = out.graphs[0].node_labels;
    if (labels.empty())
      fail(ErrorCategory::ingestion, "edge-list graph has no node labels");
    int max_label = -1;
    for (int l : labels) {
      if (l < 0)
        fail(ErrorCategory::format, "negative node label in " + parts[3]);
      max_label = std::max(max_label, l);
    }
    out.class_count = max_label + 1;
  } else {
    fail(ErrorCategory::config, "unknown dataset scheme: '" + scheme + "'");
  }

  if (out.graphs.empty())
    fail(ErrorCategory::ingestion, "dataset '" + cfg.dataset + "' is empty");
  out.feature_dim = static_cast<int>(out.graphs[0].x.cols());
  for (const auto& g : out.graphs)
    if (g.x.cols() != out.feature_dim)
      fail(ErrorCategory::dimension,
           "graphs disagree on feature width: " + std::to_string(out.feature_dim) +
               " vs " + std::to_string(g.x.cols()));
  if (!out.regression && out.class_count < 2)
    fail(ErrorCategory::config,
         "classification needs at least two classes; dataset has " +
             std::to_string(out.class_count));
  return out;
}

std::vector<splits::Split> make_splits(const ExperimentConfig& cfg,
                                       const LoadedData& data, uint64_t seed) {
  SplitSpec spec = parse_split_spec(cfg.split);
  int count = data.node_task ? data.graphs[0].n
                             : static_cast<int>(data.graphs.size());
  switch (spec.kind) {
    case SplitSpec::Kind::random:
      return {splits::random_split(count, spec.fractions, seed)};
    case SplitSpec::Kind::kfold:
      return splits::kfold(count, spec.k, seed);
    case SplitSpec::Kind::size:
      return {splits::size_split(data.graphs)};
    case SplitSpec::Kind::density:
      return {splits::density_split(data.graphs)};
    case SplitSpec::Kind::degree:
      return {splits::degree_split(data.graphs[0])};
    case SplitSpec::Kind::closeness:
      return {splits::closeness_split(data.graphs[0])};
  }
  fail(ErrorCategory::internal, "unhandled split kind");
}

// --- perturbation -------------------------------------------------------------

namespace {

std::vector<int> designated_indices(const ExperimentConfig& cfg,
                                    const splits::Split& sp, int count) {
  if (cfg.perturb_target == "train") return sp.train;
  if (cfg.perturb_target == "test") return sp.test;
  std::vector<int> all(count);
  for (int i = 0; i < count; ++i) all[i] = i;
  return all;
}

LoadedData apply_perturbation(const ExperimentConfig& cfg, const LoadedData& data,
                              const splits::Split& sp, uint64_t seed) {
  PerturbSpec ps = parse_perturb_spec(cfg.perturb);
  if (ps.kind == PerturbSpec::Kind::none) return data;
  LoadedData out = data;

  if (!data.node_task) {
    std::vector<int> chosen = designated_indices(
        cfg, sp, static_cast<int>(data.graphs.size()));
    if (ps.kind == PerturbSpec::Kind::flip) {
      std::vector<int> subset;
      subset.reserve(chosen.size());
      for (int i : chosen)
        subset.push_back(static_cast<int>(std::llround(*out.graphs[i].graph_label)));
      std::vector<int> flipped = perturb::flip_labels(
          subset, ps.rate, data.class_count, sub_seed(seed, 7));
      for (size_t j = 0; j < chosen.size(); ++j)
        out.graphs[chosen[j]].graph_label = flipped[j];
      return out;
    }
    for (int i : chosen) {
      graphs::Graph& g = out.graphs[i];
      uint64_t s = sub_seed(seed, 0x5EED + static_cast<uint64_t>(i));
      switch (ps.kind) {
        case PerturbSpec::Kind::add: g = perturb::add_edges(g, ps.rate, s); break;
        case PerturbSpec::Kind::drop: g = perturb::drop_edges(g, ps.rate, s); break;
        case PerturbSpec::Kind::mask: g = perturb::mask_features(g, ps.rate, s); break;
        case PerturbSpec::Kind::knn: g = perturb::knn_rewire(g, ps.k); break;
        default: fail(ErrorCategory::internal, "unhandled perturbation kind");
      }
    }
    return out;
  }

  // Node task: structure belongs to the one shared graph, so structural
  // perturbations ignore the partition choice; label flips stay inside it.
  graphs::Graph& g = out.graphs[0];
  uint64_t s = sub_seed(seed, 0x5EED);
  switch (ps.kind) {
    case PerturbSpec::Kind::add: g = perturb::add_edges(g, ps.rate, s); break;
    case PerturbSpec::Kind::drop: g = perturb::drop_edges(g, ps.rate, s); break;
    case PerturbSpec::Kind::mask: g = perturb::mask_features(g, ps.rate, s); break;
    case PerturbSpec::Kind::knn: g = perturb::knn_rewire(g, ps.k); break;
    case PerturbSpec::Kind::flip: {
      std::vector<int> chosen = designated_indices(cfg, sp, g.n);
      std::vector<int> subset;
      subset.reserve(chosen.size());
      for (int i : chosen) subset.push_back(g.node_labels[i]);
      std::vector<int> flipped = perturb::flip_labels(
          subset, ps.rate, data.class_count, sub_seed(seed, 7));
      for (size_t j = 0; j < chosen.size(); ++j)
        g.node_labels[chosen[j]] = flipped[j];
      break;
    }
    default: fail(ErrorCategory::internal, "unhandled perturbation kind");
  }
  return out;
}

// --- training and evaluation ---------------------------------------------------

void check_metric_ranges(const std::map<std::string, double>& values) {
  for (const auto& [key, v] : values) {
    if (!std::isfinite(v))
      fail(ErrorCategory::internal, "metric '" + key + "' is not finite");
    bool unbounded = key.size() >= 4 && (key.compare(key.size() - 4, 4, "rmse") == 0 ||
                                         key.compare(key.size() - 3, 3, "mae") == 0);
    if (unbounded) {
      if (v < 0.0)
        fail(ErrorCategory::internal, "metric '" + key + "' is negative");
    } else if (v < -1e-12 || v > 1.0 + 1e-12) {
      fail(ErrorCategory::internal, "metric '" + key + "' outside [0, 1]");
    }
  }
}

int argmax_row(const ad::Matrix& m, int row) {
  int best = 0;
  for (int c = 1; c < m.cols(); ++c)
    if (m(row, c) > m(row, best)) best = c;
  return best;
}

bool has_both_classes(const std::vector<int>& truth) {
  bool zero = false, one = false;
  for (int t : truth) {
    zero |= t == 0;
    one |= t == 1;
  }
  return zero && one;
}

struct PartitionEval {
  std::vector<int> pred, truth;       // classification
  std::vector<double> score;          // binary positive-class probability
  std::vector<double> pred_d, truth_d;  // regression
};

// Snapshot / restore for best-validation-epoch selection.
std::vector<ad::Matrix> snapshot_params(
    const std::vector<std::pair<std::string, ad::Matrix*>>& named) {
  std::vector<ad::Matrix> out;
  out.reserve(named.size());
  for (const auto& [name, ptr] : named) out.push_back(*ptr);
  return out;
}

void restore_params(const std::vector<std::pair<std::string, ad::Matrix*>>& named,
                    const std::vector<ad::Matrix>& saved) {
  for (size_t i = 0; i < named.size(); ++i) *named[i].second = saved[i];
}

void emit_classification_metrics(const PartitionEval& ev, const std::string& prefix,
                                 int class_count,
                                 std::map<std::string, double>& out) {
  out[prefix + "accuracy"] = metrics::accuracy(ev.pred, ev.truth);
  out[prefix + "micro_f1"] = metrics::micro_f1(ev.pred, ev.truth);
  out[prefix + "macro_f1"] = metrics::macro_f1(ev.pred, ev.truth);
  if (class_count == 2 && has_both_classes(ev.truth)) {
    out[prefix + "ap"] = metrics::average_precision(ev.score, ev.truth);
    out[prefix + "auroc"] = metrics::auroc(ev.score, ev.truth);
  }
}

// Graph-level tasks: hierarchical pool-twice model over independent graphs.
class GraphTaskRun {
 public:
  GraphTaskRun(const ExperimentConfig& cfg, const LoadedData& data, uint64_t seed)
      : cfg_(cfg), data_(data) {
    models::HierarchicalConfig mc;
    mc.in_dim = data.feature_dim;
    mc.hidden = cfg.hidden;
    mc.head_mid = cfg.head_mid;
    mc.out_dim = data.regression ? 1 : data.class_count;
    mc.classification = !data.regression;
    mc.pooler = cfg.pooler;
    mc.stage1 = pool::PoolerSettings{cfg.ratio, cfg.k, cfg.clusters};
    mc.stage2_clusters = cfg.stage2_clusters;
    Rng init(sub_seed(seed, 1));
    model_ = std::make_unique<models::HierarchicalModel>(mc, init);
    for (const auto& g : data.graphs) {
      if (data.regression)
        targets_.push_back(*g.graph_label);
      else
        labels_.push_back(static_cast<int>(std::llround(*g.graph_label)));
    }
  }

  bool train(const splits::Split& sp, uint64_t seed, ResultRecord& rec) {
    ad::Adam opt(ad::AdamConfig{cfg_.lr, 0.9, 0.999, 1e-8});
    Rng shuffle_rng(sub_seed(seed, 2));
    auto named = model_->named_params();
    bool track_best = cfg_.selection == "best_val" && !sp.val.empty();
    bool have_best = false;
    double best = 0.0;
    std::vector<ad::Matrix> best_params;
    size_t bs = static_cast<size_t>(cfg_.batch_size);
    try {
      for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
        std::vector<int> order = sp.train;
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        for (size_t start = 0; start < order.size(); start += bs) {
          size_t stop = std::min(order.size(), start + bs);
          std::vector<int> batch(order.begin() + start, order.begin() + stop);
          ad::Tape tape;
          ad::ParamBinder pb(tape);
          std::vector<graphs::Graph> gs;
          gs.reserve(batch.size());
          for (int i : batch) gs.push_back(data_.graphs[i]);
          auto out = model_->forward(pb, gs);
          ad::Tensor loss =
              data_.regression
                  ? models::mse_loss(out.predictions, gather_d(targets_, batch))
                  : models::nll_loss(out.predictions, gather_i(labels_, batch));
          for (const auto& [name, aux] : out.aux) loss = ad::add(loss, aux);
          double lv = loss.value()(0, 0);
          if (!std::isfinite(lv))
            fail(ErrorCategory::numeric, "non-finite training loss");
          loss_sum += lv * static_cast<double>(batch.size());
          tape.backward(loss);
          opt.step(pb.params(), pb.grads());
        }
        rec.train_loss.push_back(loss_sum / static_cast<double>(sp.train.size()));
        if (track_best) {
          PartitionEval ev = eval_partition(sp.val);
          double m = data_.regression ? metrics::rmse(ev.pred_d, ev.truth_d)
                                      : metrics::accuracy(ev.pred, ev.truth);
          bool better = !have_best || (data_.regression ? m < best : m > best);
          if (better) {
            best = m;
            have_best = true;
            best_params = snapshot_params(named);
          }
        }
      }
    } catch (const Error& e) {
      if (e.category() == ErrorCategory::numeric) {
        rec.failure = "nan_loss";
        rec.metrics.clear();
        return false;
      }
      throw;
    }
    if (track_best && have_best) restore_params(named, best_params);
    return true;
  }

  void evaluate(const splits::Split& sp, ResultRecord& rec) {
    auto emit = [&](const std::string& prefix, const std::vector<int>& part) {
      if (part.empty()) return;
      PartitionEval ev = eval_partition(part);
      if (data_.regression) {
        rec.metrics[prefix + "rmse"] = metrics::rmse(ev.pred_d, ev.truth_d);
        rec.metrics[prefix + "mae"] = metrics::mae(ev.pred_d, ev.truth_d);
      } else {
        emit_classification_metrics(ev, prefix, data_.class_count, rec.metrics);
      }
    };
    emit("val_", sp.val);
    emit("test_", sp.test);
    check_metric_ranges(rec.metrics);
  }

  // One embedding row per dataset graph, in dataset order.
  ad::Matrix all_embeddings() {
    int count = static_cast<int>(data_.graphs.size());
    ad::Matrix out;
    size_t bs = static_cast<size_t>(cfg_.batch_size);
    int filled = 0;
    for (int start = 0; start < count; start += static_cast<int>(bs)) {
      int stop = std::min(count, start + static_cast<int>(bs));
      std::vector<graphs::Graph> gs(data_.graphs.begin() + start,
                                    data_.graphs.begin() + stop);
      ad::Tape tape;
      ad::ParamBinder pb(tape);
      auto mo = model_->forward(pb, gs);
      const ad::Matrix& emb = mo.embeddings.value();
      if (out.size() == 0) out.resize(count, emb.cols());
      out.middleRows(filled, emb.rows()) = emb;
      filled += static_cast<int>(emb.rows());
    }
    return out;
  }

 private:
  static std::vector<int> gather_i(const std::vector<int>& v,
                                   const std::vector<int>& idx) {
    std::vector<int> out;
    out.reserve(idx.size());
    for (int i : idx) out.push_back(v[i]);
    return out;
  }
  static std::vector<double> gather_d(const std::vector<double>& v,
                                      const std::vector<int>& idx) {
    std::vector<double> out;
    out.reserve(idx.size());
    for (int i : idx) out.push_back(v[i]);
    return out;
  }

  PartitionEval eval_partition(const std::vector<int>& part) {
    PartitionEval ev;
    size_t bs = static_cast<size_t>(cfg_.batch_size);
    for (size_t start = 0; start < part.size(); start += bs) {
      size_t stop = std::min(part.size(), start + bs);
      std::vector<int> batch(part.begin() + start, part.begin() + stop);
      ad::Tape tape;
      ad::ParamBinder pb(tape);
      std::vector<graphs::Graph> gs;
      gs.reserve(batch.size());
      for (int i : batch) gs.push_back(data_.graphs[i]);
      auto out = model_->forward(pb, gs);
      const ad::Matrix& p = out.predictions.value();
      for (size_t r = 0; r < batch.size(); ++r) {
        int i = batch[r];
        if (data_.regression) {
          ev.pred_d.push_back(p(static_cast<int>(r), 0));
          ev.truth_d.push_back(targets_[i]);
        } else {
          ev.pred.push_back(argmax_row(p, static_cast<int>(r)));
          ev.truth.push_back(labels_[i]);
          if (data_.class_count == 2)
            ev.score.push_back(std::exp(p(static_cast<int>(r), 1)));
        }
      }
    }
    return ev;
  }

  const ExperimentConfig& cfg_;
  const LoadedData& data_;
  std::unique_ptr<models::HierarchicalModel> model_;
  std::vector<int> labels_;
  std::vector<double> targets_;
};

// Node-level task: encoder-decoder over the single shared graph.
class NodeTaskRun {
 public:
  NodeTaskRun(const ExperimentConfig& cfg, const LoadedData& data, uint64_t seed)
      : cfg_(cfg), data_(data), g_(data.graphs[0]) {
    models::UNetConfig uc;
    uc.in_dim = data.feature_dim;
    uc.hidden = cfg.hidden;
    uc.out_dim = data.class_count;
    uc.pooler = cfg.pooler;
    uc.settings = pool::PoolerSettings{cfg.ratio, cfg.k, cfg.clusters};
    uc.concat_fusion = cfg.fusion == "concat";
    Rng init(sub_seed(seed, 1));
    model_ = std::make_unique<models::UNetModel>(uc, init);
  }

  bool train(const splits::Split& sp, uint64_t seed, ResultRecord& rec) {
    (void)seed;  // full-batch: no per-epoch sampling beyond the model itself
    ad::Adam opt(ad::AdamConfig{cfg_.lr, 0.9, 0.999, 1e-8});
    auto named = model_->named_params();
    bool track_best = cfg_.selection == "best_val" && !sp.val.empty();
    bool have_best = false;
    double best = 0.0;
    std::vector<ad::Matrix> best_params;
    std::vector<int> train_labels;
    train_labels.reserve(sp.train.size());
    for (int i : sp.train) train_labels.push_back(g_.node_labels[i]);
    try {
      for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
        ad::Tape tape;
        ad::ParamBinder pb(tape);
        auto out = model_->forward(pb, g_);
        ad::Tensor train_lp = ad::slice_rows(out.predictions, sp.train);
        ad::Tensor loss = models::nll_loss(train_lp, train_labels);
        for (const auto& [name, aux] : out.aux) loss = ad::add(loss, aux);
        double lv = loss.value()(0, 0);
        if (!std::isfinite(lv))
          fail(ErrorCategory::numeric, "non-finite training loss");
        rec.train_loss.push_back(lv);
        tape.backward(loss);
        opt.step(pb.params(), pb.grads());
        if (track_best) {
          PartitionEval ev = eval_partition(sp.val);
          double m = metrics::accuracy(ev.pred, ev.truth);
          if (!have_best || m > best) {
            best = m;
            have_best = true;
            best_params = snapshot_params(named);
          }
        }
      }
    } catch (const Error& e) {
      if (e.category() == ErrorCategory::numeric) {
        rec.failure = "nan_loss";
        rec.metrics.clear();
        return false;
      }
      throw;
    }
    if (track_best && have_best) restore_params(named, best_params);
    return true;
  }

  void evaluate(const splits::Split& sp, ResultRecord& rec) {
    auto emit = [&](const std::string& prefix, const std::vector<int>& part) {
      if (part.empty()) return;
      PartitionEval ev = eval_partition(part);
      emit_classification_metrics(ev, prefix, data_.class_count, rec.metrics);
    };
    emit("val_", sp.val);
    emit("test_", sp.test);
    check_metric_ranges(rec.metrics);
  }

  // One embedding row per node: the fused pre-output features.
  ad::Matrix all_embeddings() {
    ad::Tape tape;
    ad::ParamBinder pb(tape);
    auto out = model_->forward(pb, g_);
    return out.embeddings.value();
  }

 private:
  PartitionEval eval_partition(const std::vector<int>& part) {
    ad::Tape tape;
    ad::ParamBinder pb(tape);
    auto out = model_->forward(pb, g_);
    const ad::Matrix& p = out.predictions.value();
    PartitionEval ev;
    for (int i : part) {
      ev.pred.push_back(argmax_row(p, i));
      ev.truth.push_back(g_.node_labels[i]);
      if (data_.class_count == 2) ev.score.push_back(std::exp(p(i, 1)));
    }
    return ev;
  }

  const ExperimentConfig& cfg_;
  const LoadedData& data_;
  const graphs::Graph& g_;
  std::unique_ptr<models::UNetModel> model_;
};

ResultRecord run_single(const ExperimentConfig& cfg, const LoadedData& data,
                        const std::string& digest, uint64_t seed, int fold,
                        const splits::Split& sp) {
  ResultRecord rec;
  rec.config = digest;
  rec.seed = seed;
  rec.fold = fold;
  LoadedData prepared = apply_perturbation(cfg, data, sp, seed);
  auto t0 = std::chrono::steady_clock::now();
  if (prepared.node_task) {
    NodeTaskRun run(cfg, prepared, seed);
    if (run.train(sp, seed, rec)) run.evaluate(sp, rec);
  } else {
    GraphTaskRun run(cfg, prepared, seed);
    if (run.train(sp, seed, rec)) run.evaluate(sp, rec);
  }
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  rec.peak_rss_bytes = peak_rss_bytes_now();
  return rec;
}

}  // namespace

LoadedData perturbed_dataset(const ExperimentConfig& cfg, const LoadedData& data,
                             const splits::Split& sp, uint64_t seed) {
  return apply_perturbation(cfg, data, sp, seed);
}

std::vector<ResultRecord> run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  LoadedData data = load_dataset(cfg);
  std::string digest = config_digest(cfg);
  SplitSpec spec = parse_split_spec(cfg.split);
  bool folded = spec.kind == SplitSpec::Kind::kfold;
  std::vector<ResultRecord> records;
  for (uint64_t seed : cfg.seeds) {
    std::vector<splits::Split> sps = make_splits(cfg, data, seed);
    for (size_t fi = 0; fi < sps.size(); ++fi)
      records.push_back(run_single(cfg, data, digest, seed,
                                   folded ? static_cast<int>(fi) : -1, sps[fi]));
  }
  return records;
}

TimingReport time_training(const ExperimentConfig& cfg) {
  validate(cfg);
  LoadedData data = load_dataset(cfg);
  uint64_t seed = cfg.seeds[0];
  splits::Split sp = make_splits(cfg, data, seed)[0];
  LoadedData prepared = apply_perturbation(cfg, data, sp, seed);
  ResultRecord scratch;
  TimingReport report;
  if (prepared.node_task) {
    NodeTaskRun run(cfg, prepared, seed);
    auto t0 = std::chrono::steady_clock::now();
    run.train(sp, seed, scratch);
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  } else {
    GraphTaskRun run(cfg, prepared, seed);
    auto t0 = std::chrono::steady_clock::now();
    run.train(sp, seed, scratch);
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  report.peak_rss_bytes = peak_rss_bytes_now();
  return report;
}

// --- persistence ----------------------------------------------------------------

void save_results(const std::vector<ResultRecord>& records,
                  const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCategory::io, "cannot open result file for writing: " + path);
  for (const ResultRecord& rec : records) {
    json j;
    j["config"] = rec.config;
    j["seed"] = rec.seed;
    j["fold"] = rec.fold;
    j["train_loss"] = rec.train_loss;
    j["metrics"] = rec.metrics;
    j["wall_seconds"] = rec.wall_seconds;
    j["peak_rss_bytes"] = rec.peak_rss_bytes;
    j["failure"] = rec.failure;
    out << j.dump() << '\n';
  }
  if (!out) fail(ErrorCategory::io, "failed writing result file: " + path);
}

std::vector<ResultRecord> load_results(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::io, "cannot open result file: " + path);
  std::vector<ResultRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto bad = [&](const std::string& what) -> void {
      fail(ErrorCategory::format,
           "result file " + path + " line " + std::to_string(line_no) + ": " + what);
    };
    if (trim(line).empty()) bad("empty line");
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) bad("not a JSON object");
    try {
      ResultRecord rec;
      rec.config = j.at("config").get<std::string>();
      rec.seed = j.at("seed").get<uint64_t>();
      rec.fold = j.at("fold").get<int>();
      rec.train_loss = j.at("train_loss").get<std::vector<double>>();
      rec.metrics = j.at("metrics").get<std::map<std::string, double>>();
      rec.wall_seconds = j.at("wall_seconds").get<double>();
      rec.peak_rss_bytes = j.at("peak_rss_bytes").get<long long>();
      rec.failure = j.at("failure").get<std::string>();
      records.push_back(std::move(rec));
    } catch (const json::exception& e) {
      bad(std::string("bad record field: ") + e.what());
    }
  }
  return records;
}

std::string summary_csv(const std::vector<ResultRecord>& records) {
  std::map<std::string, std::map<std::string, std::vector<double>>> grouped;
  for (const ResultRecord& rec : records) {
    if (!rec.failure.empty()) continue;
    for (const auto& [key, v] : rec.metrics) grouped[rec.config][key].push_back(v);
  }
  std::ostringstream out;
  out << "config,metric,runs,mean,population_std,mean_plus_minus_population_std\n";
  for (const auto& [digest, by_metric] : grouped) {
    for (const auto& [key, vals] : by_metric) {
      double mean = metrics::mean_of(vals);
      double sd = metrics::population_std(vals);
      out << digest << ',' << key << ',' << vals.size() << ',' << fmt_full(mean)
          << ',' << fmt_full(sd) << ',' << fmt_short(mean) << "±"
          << fmt_short(sd) << '\n';
    }
  }
  return out.str();
}

void save_summary_csv(const std::vector<ResultRecord>& records,
                      const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCategory::io, "cannot open summary file for writing: " + path);
  out << summary_csv(records);
  if (!out) fail(ErrorCategory::io, "failed writing summary file: " + path);
}

void export_embeddings(const ExperimentConfig& cfg, const std::string& path) {
  validate(cfg);
  LoadedData data = load_dataset(cfg);
  uint64_t seed = cfg.seeds[0];
  splits::Split sp = make_splits(cfg, data, seed)[0];
  LoadedData prepared = apply_perturbation(cfg, data, sp, seed);
  ResultRecord scratch;
  ad::Matrix emb;
  std::vector<double> label_col;
  if (prepared.node_task) {
    NodeTaskRun run(cfg, prepared, seed);
    if (!run.train(sp, seed, scratch))
      fail(ErrorCategory::numeric, "training diverged; no trained model to export");
    emb = run.all_embeddings();
    for (int l : prepared.graphs[0].node_labels)
      label_col.push_back(static_cast<double>(l));
  } else {
    GraphTaskRun run(cfg, prepared, seed);
    if (!run.train(sp, seed, scratch))
      fail(ErrorCategory::numeric, "training diverged; no trained model to export");
    emb = run.all_embeddings();
    for (const auto& g : prepared.graphs) label_col.push_back(*g.graph_label);
  }
  if (emb.rows() != static_cast<Eigen::Index>(label_col.size()))
    fail(ErrorCategory::internal, "embedding rows disagree with label count");
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCategory::io, "cannot open embedding file for writing: " + path);
  for (Eigen::Index r = 0; r < emb.rows(); ++r) {
    for (Eigen::Index c = 0; c < emb.cols(); ++c)
      out << fmt_full(emb(r, c)) << ',';
    out << fmt_full(label_col[static_cast<size_t>(r)]) << '\n';
  }
  if (!out) fail(ErrorCategory::io, "failed writing embedding file: " + path);
}

}  // namespace gpb::harness
