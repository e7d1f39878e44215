#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "fscl/network.hpp"
#include "fscl/rng.hpp"

namespace fscl::test {

// Central finite differences of an arbitrary scalar function of the
// weights; the independent oracle for every analytic-gradient check.
inline std::vector<double> finite_diff(
    const WeightState& w, double step,
    const std::function<double(const WeightState&)>& f) {
  std::vector<double> grad(w.size());
  WeightState probe = w;
  for (size_t i = 0; i < w.size(); ++i) {
    const double saved = probe.values[i];
    probe.values[i] = saved + step;
    const double up = f(probe);
    probe.values[i] = saved - step;
    const double down = f(probe);
    probe.values[i] = saved;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

inline double rel_err(double a, double b) {
  const double denom = std::max({std::fabs(a), std::fabs(b), 1e-6});
  return std::fabs(a - b) / denom;
}

inline double max_rel_err(const std::vector<double>& a,
                          const std::vector<double>& b) {
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, rel_err(a[i], b[i]));
  return worst;
}

// Small random network + batch for gradient checks.
struct RandomInstance {
  NetworkSpec spec;
  WeightState weights;
  Matrix x;
  std::vector<int> y;
};

inline RandomInstance random_instance(uint64_t seed, int max_hidden = 8,
                                      int max_batch = 8) {
  Rng rng(seed);
  RandomInstance inst;
  inst.spec.input_dim = 2 + static_cast<int>(rng.next_below(4));
  const int layers = 1 + static_cast<int>(rng.next_below(2));
  for (int l = 0; l < layers; ++l)
    inst.spec.hidden.push_back(
        {2 + static_cast<int>(rng.next_below(static_cast<uint64_t>(max_hidden - 1))),
         rng.next_below(2) == 0 ? Activation::relu : Activation::tanh_});
  inst.spec.output_classes = 2 + static_cast<int>(rng.next_below(4));
  inst.spec.seed = rng.next_u64();
  inst.weights = initial_weights(inst.spec, inst.spec.seed);
  // nonzero biases so their gradients are exercised too
  for (double& v : inst.weights.values)
    if (v == 0.0) v = 0.1 * rng.next_normal();

  const size_t batch = 1 + rng.next_below(static_cast<uint64_t>(max_batch));
  inst.x = Matrix(batch, static_cast<size_t>(inst.spec.input_dim));
  for (double& v : inst.x.data) v = rng.next_normal();
  inst.y.resize(batch);
  for (auto& label : inst.y)
    label = static_cast<int>(
        rng.next_below(static_cast<uint64_t>(inst.spec.output_classes)));
  return inst;
}

}  // namespace fscl::test
