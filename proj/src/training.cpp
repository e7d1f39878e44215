#include "fscl/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace fscl {

TrainStats train_epochs(WeightState& w, const NetworkSpec& spec,
                        const Matrix& x, std::span<const int> y,
                        const TrainOptions& opts, Rng& rng) {
  if (x.rows == 0) throw std::invalid_argument("train_epochs: empty dataset");
  if (opts.batch_size < 1)
    throw std::invalid_argument("train_epochs: batch_size must be >= 1");
  const bool penalized =
      opts.penalty.strength > 0.0 && opts.penalty.coefficients != nullptr;
  if (penalized && (opts.penalty.anchor->size() != w.size() ||
                    opts.penalty.coefficients->size() != w.size()))
    throw std::invalid_argument("train_epochs: penalty vectors misaligned");

  AdamState opt = AdamState::fresh(w.size(), opts.adam);
  std::vector<size_t> order(x.rows);
  std::iota(order.begin(), order.end(), size_t{0});

  GradientVector grad;
  Matrix xb;
  std::vector<int> yb;
  std::vector<double> before;

  TrainStats stats;
  double prev = std::numeric_limits<double>::infinity();
  int streak = 0;
  for (int epoch = 0; epoch < opts.max_epochs; ++epoch) {
    rng.shuffle(order);
    double ce_sum = 0.0;
    double pen_sum = 0.0;
    int steps = 0;
    size_t pos = 0;
    while (pos < x.rows) {
      const size_t bn =
          std::min(static_cast<size_t>(opts.batch_size), x.rows - pos);
      xb = Matrix(bn, x.cols);
      yb.resize(bn);
      for (size_t b = 0; b < bn; ++b) {
        const size_t src = order[pos + b];
        std::copy(x.row(src), x.row(src) + x.cols, xb.row(b));
        yb[b] = y[src];
      }
      const double ce = loss_and_grad(w, spec, xb, yb, opts.scope, grad);
      ce_sum += ce * static_cast<double>(bn);
      if (penalized) {
        const auto& anchor = *opts.penalty.anchor;
        const auto& coeff = *opts.penalty.coefficients;
        double pen = 0.0;
        for (size_t i = 0; i < w.size(); ++i) {
          const double c = coeff[i];
          if (c == 0.0) continue;
          const double diff = w.values[i] - anchor[i];
          pen += c * diff * diff;
          grad.values[i] += 2.0 * opts.penalty.strength * c * diff;
        }
        pen_sum += opts.penalty.strength * pen;
      }
      if (opts.si) before = w.values;
      adam_step(w, grad, opt);
      if (opts.si) {
        for (size_t i = 0; i < before.size(); ++i)
          before[i] = w.values[i] - before[i];
        opts.si->record_step(grad.values, before);
      }
      pos += bn;
      ++steps;
    }
    stats.epochs_run = epoch + 1;
    stats.final_epoch_loss = ce_sum / static_cast<double>(x.rows) +
                             (steps > 0 ? pen_sum / steps : 0.0);
    const double rel = std::isfinite(prev)
                           ? (prev - stats.final_epoch_loss) /
                                 std::max(std::fabs(prev), 1e-12)
                           : std::numeric_limits<double>::infinity();
    streak = rel < opts.plateau_tol ? streak + 1 : 0;
    prev = stats.final_epoch_loss;
    if (streak >= opts.plateau_patience) break;
  }
  return stats;
}

}  // namespace fscl
