#pragma once

#include <span>
#include <vector>

#include "fscl/network.hpp"

namespace fscl {

// Per-parameter consolidation bookkeeping over the embedding partition.
// cumulative[i] is the running sum of activity tags a_{1:t,i}; gate[i] is
// the sigmoid-squashed, threshold-centered value in (0,1) that scales the
// quadratic displacement penalty.
struct ActivityState {
  std::vector<double> cumulative;
  int tasks_seen = 0;
  std::vector<double> per_layer_mean;  // (1/t)(1/N_l) sum_i cumulative_i
  std::vector<double> gate;
  double gate_scale = 1.0;      // m
  double penalty_weight = 1e-10;  // lambda

  // embedding layer boundaries as [begin, end) into cumulative
  std::vector<std::pair<size_t, size_t>> layer_spans;
};

ActivityState make_activity_state(const WeightState& w, double gate_scale,
                                  double penalty_weight);

// Activity tag of each embedding parameter on one task: the absolute value
// of the full-batch mean gradient of the loss at the given weights.
std::vector<double> compute_activity(const WeightState& slow,
                                     const NetworkSpec& spec, const Matrix& x,
                                     std::span<const int> y);

// cumulative += a_t, tasks_seen += 1, per-layer means recomputed.
void update_cumulative(ActivityState& state, const std::vector<double>& a_t);

// per_layer_mean[l] = (1/t)(1/N_l) sum of the layer's cumulative entries;
// exposed so a restored state reproduces the live one exactly.
void recompute_layer_means(ActivityState& state);

// gate[i] = sigmoid(m * (cumulative[i] - layer_threshold)), where the layer
// threshold is the layer's cumulative mean divided by tasks_seen. Values are
// nudged into the open interval (0,1) at sigmoid saturation.
const std::vector<double>& compute_gate(ActivityState& state);

// penalty = lambda * sum_i gate[i] * (fast[i] - slow[i])^2 over the
// embedding partition; gradient (wrt fast only) appended into grad_out.
// slow and gate are constants: no gradient flows into them.
double stc_penalty(std::span<const double> fast_e,
                   std::span<const double> slow_e,
                   std::span<const double> gate, double lambda,
                   std::vector<double>& grad_out);

}  // namespace fscl
