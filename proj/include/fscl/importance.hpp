#pragma once

#include <span>
#include <vector>

#include "fscl/network.hpp"
#include "fscl/training.hpp"

namespace fscl {

enum class ImportanceKind { fisher, mas, si, constant };

// Non-negative per-parameter importance aligned with a WeightState layout.
struct ImportanceMap {
  std::vector<double> values;
  ImportanceKind kind = ImportanceKind::constant;
};

// Diagonal empirical Fisher with observed labels:
//   F_i = mean over examples of (d log p(y|x) / d theta_i)^2.
ImportanceMap estimate_fisher(const WeightState& w, const NetworkSpec& spec,
                              const Matrix& x, std::span<const int> y);

// Memory-aware-synapses importance (unsupervised):
//   Omega_i = mean over examples of |d ||f(x)||^2 / d theta_i|,
// where f(x) is the logit vector.
ImportanceMap estimate_mas(const WeightState& w, const NetworkSpec& spec,
                           const Matrix& x);

struct SiStepRecord {
  std::vector<double> grad;
  std::vector<double> delta;
};

// Synaptic-intelligence path integral: omega_i = sum_steps(-grad_i*delta_i)
// clamped at >= 0, divided by ((theta_end - theta_start)^2 + xi) per
// coordinate at task end.
ImportanceMap accumulate_si(const std::vector<SiStepRecord>& trajectory,
                            const std::vector<double>& theta_start,
                            const std::vector<double>& theta_end, double xi);

// Same normalization applied to a streaming accumulator (the training loop
// records steps through SiPathAccumulator).
ImportanceMap finalize_si(const SiPathAccumulator& path,
                          const std::vector<double>& theta_start,
                          const std::vector<double>& theta_end, double xi);

// Mean importance per layer, in layout order.
std::vector<double> layer_means(const ImportanceMap& map,
                                const WeightState& w);

}  // namespace fscl
