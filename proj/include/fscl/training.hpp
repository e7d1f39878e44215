#pragma once

#include <span>
#include <vector>

#include "fscl/network.hpp"
#include "fscl/rng.hpp"

namespace fscl {

// Optional quadratic attraction toward an anchor:
//   strength * sum_i coefficients[i] * (w[i] - anchor[i])^2
// Both vectors are full parameter length; scope restrictions are encoded as
// zero coefficients. strength == 0 skips the term entirely so such runs are
// bit-identical to unpenalized ones.
struct QuadraticPenalty {
  const std::vector<double>* anchor = nullptr;
  const std::vector<double>* coefficients = nullptr;
  double strength = 0.0;
};

// Streaming path-integral recorder for synaptic-intelligence importance:
// accumulates sum_steps(-grad_i * delta_i) over the task's training steps.
class SiPathAccumulator {
 public:
  explicit SiPathAccumulator(size_t n) : path_(n, 0.0) {}

  void record_step(std::span<const double> grad,
                   std::span<const double> delta) {
    if (grad.size() != path_.size() || delta.size() != path_.size())
      throw std::invalid_argument("si path: mismatched trajectory lengths");
    for (size_t i = 0; i < path_.size(); ++i)
      path_[i] += -grad[i] * delta[i];
  }

  const std::vector<double>& path() const { return path_; }

 private:
  std::vector<double> path_;
};

struct TrainOptions {
  GradScope scope = GradScope::all;
  int max_epochs = 500;
  double plateau_tol = 1e-4;
  int plateau_patience = 3;
  int batch_size = 25;
  AdamConfig adam;
  QuadraticPenalty penalty;
  SiPathAccumulator* si = nullptr;
};

struct TrainStats {
  int epochs_run = 0;
  double final_epoch_loss = 0.0;
};

// Mini-batch Adam over shuffled epochs (Fisher-Yates with the given rng;
// the last batch of an epoch may be short). Stops when the epoch-mean
// objective improves by less than plateau_tol (relative) for
// plateau_patience consecutive epochs, or at max_epochs, whichever first.
// A fresh Adam state is created per call.
TrainStats train_epochs(WeightState& w, const NetworkSpec& spec,
                        const Matrix& x, std::span<const int> y,
                        const TrainOptions& opts, Rng& rng);

}  // namespace fscl
