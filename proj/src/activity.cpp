#include "fscl/activity.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace fscl {

namespace {

// Logistic function saturating into the open interval (0,1): finite inputs
// never produce an exact 0 or 1 gate.
double gate_sigmoid(double x) {
  double s;
  if (x >= 0.0) {
    s = 1.0 / (1.0 + std::exp(-x));
  } else {
    double e = std::exp(x);
    s = e / (1.0 + e);
  }
  const double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  const double lo = std::numeric_limits<double>::min();
  if (s > hi) return hi;
  if (s < lo) return lo;
  return s;
}

}  // namespace

ActivityState make_activity_state(const WeightState& w, double gate_scale,
                                  double penalty_weight) {
  if (gate_scale <= 0.0)
    throw std::invalid_argument("gate scale m must be > 0");
  if (penalty_weight < 0.0)
    throw std::invalid_argument("penalty weight lambda must be >= 0");
  ActivityState s;
  s.cumulative.assign(w.embedding_params, 0.0);
  s.gate.assign(w.embedding_params, 0.0);
  s.gate_scale = gate_scale;
  s.penalty_weight = penalty_weight;
  for (const auto& l : w.layout) {
    if (l.is_output) continue;
    s.layer_spans.emplace_back(l.weight_offset,
                               l.weight_offset + l.param_count());
  }
  s.per_layer_mean.assign(s.layer_spans.size(), 0.0);
  return s;
}

std::vector<double> compute_activity(const WeightState& slow,
                                     const NetworkSpec& spec, const Matrix& x,
                                     std::span<const int> y) {
  if (x.rows == 0) throw std::invalid_argument("compute_activity: empty task");
  GradientVector grad;
  loss_and_grad(slow, spec, x, y, GradScope::embedding_only, grad);
  std::vector<double> a(slow.embedding_params);
  for (size_t i = 0; i < slow.embedding_params; ++i)
    a[i] = std::fabs(grad.values[i]);
  return a;
}

void update_cumulative(ActivityState& state, const std::vector<double>& a_t) {
  if (a_t.size() != state.cumulative.size())
    throw std::invalid_argument(
        "update_cumulative: activity length " + std::to_string(a_t.size()) +
        " does not match state length " +
        std::to_string(state.cumulative.size()));
  for (double v : a_t)
    if (!(v >= 0.0))
      throw std::invalid_argument("update_cumulative: negative activity");
  for (size_t i = 0; i < a_t.size(); ++i) state.cumulative[i] += a_t[i];
  state.tasks_seen += 1;
  recompute_layer_means(state);
}

void recompute_layer_means(ActivityState& state) {
  if (state.tasks_seen < 1) return;
  const double inv_t = 1.0 / static_cast<double>(state.tasks_seen);
  for (size_t l = 0; l < state.layer_spans.size(); ++l) {
    auto [begin, end] = state.layer_spans[l];
    double sum = 0.0;
    for (size_t i = begin; i < end; ++i) sum += state.cumulative[i];
    state.per_layer_mean[l] = inv_t * sum / static_cast<double>(end - begin);
  }
}

const std::vector<double>& compute_gate(ActivityState& state) {
  if (state.tasks_seen < 1)
    throw std::logic_error("compute_gate: no tasks seen yet");
  for (size_t l = 0; l < state.layer_spans.size(); ++l) {
    auto [begin, end] = state.layer_spans[l];
    const double threshold = state.per_layer_mean[l];
    for (size_t i = begin; i < end; ++i)
      state.gate[i] =
          gate_sigmoid(state.gate_scale * (state.cumulative[i] - threshold));
  }
  return state.gate;
}

double stc_penalty(std::span<const double> fast_e,
                   std::span<const double> slow_e,
                   std::span<const double> gate, double lambda,
                   std::vector<double>& grad_out) {
  if (lambda < 0.0) throw std::invalid_argument("stc_penalty: negative lambda");
  if (fast_e.size() != slow_e.size() || fast_e.size() != gate.size())
    throw std::invalid_argument("stc_penalty: misaligned embedding vectors");
  grad_out.assign(fast_e.size(), 0.0);
  double penalty = 0.0;
  for (size_t i = 0; i < fast_e.size(); ++i) {
    const double diff = fast_e[i] - slow_e[i];
    penalty += gate[i] * diff * diff;
    grad_out[i] = 2.0 * lambda * gate[i] * diff;
  }
  return lambda * penalty;
}

}  // namespace fscl
