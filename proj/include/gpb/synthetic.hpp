#pragma once

#include <cstdint>
#include <vector>

#include "gpb/graph.hpp"

namespace gpb::synth {

/// Balanced two-class graph set over varied random topologies. Node features
/// carry the class signal: class means -1/+1 plus mild noise, so a mean
/// readout separates the classes linearly.
std::vector<graphs::Graph> separable_two_class(int count, uint64_t seed);

/// Graph-regression set whose target is the mean of the first feature
/// column, a quantity a mean readout plus a linear head can represent.
std::vector<graphs::Graph> feature_mean_regression(int count, uint64_t seed);

/// Two cliques of `community_size` nodes joined by a single bridge edge.
/// Node labels are community ids; features are the community mean plus
/// noise, so structure and features both inform the labels.
graphs::Graph two_community_graph(int community_size, uint64_t seed);

}  // namespace gpb::synth
