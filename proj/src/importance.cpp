#include "fscl/importance.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fscl {

ImportanceMap estimate_fisher(const WeightState& w, const NetworkSpec& spec,
                              const Matrix& x, std::span<const int> y) {
  if (x.rows == 0) throw std::invalid_argument("estimate_fisher: empty data");
  ImportanceMap map;
  map.kind = ImportanceKind::fisher;
  map.values.assign(w.size(), 0.0);
  GradientVector grad;
  Matrix xb(1, x.cols);
  int yb[1];
  for (size_t b = 0; b < x.rows; ++b) {
    std::copy(x.row(b), x.row(b) + x.cols, xb.row(0));
    yb[0] = y[b];
    // per-example grad of the CE loss = -d log p(y|x); squaring removes
    // the sign so the empirical Fisher comes out directly
    loss_and_grad(w, spec, xb, std::span<const int>(yb, 1), GradScope::all,
                  grad);
    for (size_t i = 0; i < map.values.size(); ++i)
      map.values[i] += grad.values[i] * grad.values[i];
  }
  const double inv_n = 1.0 / static_cast<double>(x.rows);
  for (double& v : map.values) v *= inv_n;
  return map;
}

ImportanceMap estimate_mas(const WeightState& w, const NetworkSpec& spec,
                           const Matrix& x) {
  if (x.rows == 0) throw std::invalid_argument("estimate_mas: empty data");
  ImportanceMap map;
  map.kind = ImportanceKind::mas;
  map.values.assign(w.size(), 0.0);
  GradientVector grad;
  Matrix xb(1, x.cols);
  for (size_t b = 0; b < x.rows; ++b) {
    std::copy(x.row(b), x.row(b) + x.cols, xb.row(0));
    Matrix logits = forward(w, spec, xb);
    Matrix dlogits(1, logits.cols);
    for (size_t c = 0; c < logits.cols; ++c)
      dlogits.at(0, c) = 2.0 * logits.at(0, c);
    backprop_from_logit_grad(w, spec, xb, dlogits, GradScope::all, grad);
    for (size_t i = 0; i < map.values.size(); ++i)
      map.values[i] += std::fabs(grad.values[i]);
  }
  const double inv_n = 1.0 / static_cast<double>(x.rows);
  for (double& v : map.values) v *= inv_n;
  return map;
}

ImportanceMap accumulate_si(const std::vector<SiStepRecord>& trajectory,
                            const std::vector<double>& theta_start,
                            const std::vector<double>& theta_end, double xi) {
  SiPathAccumulator path(theta_start.size());
  for (const auto& step : trajectory) path.record_step(step.grad, step.delta);
  return finalize_si(path, theta_start, theta_end, xi);
}

ImportanceMap finalize_si(const SiPathAccumulator& path,
                          const std::vector<double>& theta_start,
                          const std::vector<double>& theta_end, double xi) {
  if (theta_start.size() != path.path().size() ||
      theta_end.size() != path.path().size())
    throw std::invalid_argument("si: mismatched trajectory lengths");
  if (xi <= 0.0) throw std::invalid_argument("si: damping xi must be > 0");
  ImportanceMap map;
  map.kind = ImportanceKind::si;
  map.values.resize(path.path().size());
  for (size_t i = 0; i < map.values.size(); ++i) {
    const double omega = std::max(0.0, path.path()[i]);
    const double move = theta_end[i] - theta_start[i];
    map.values[i] = omega / (move * move + xi);
  }
  return map;
}

std::vector<double> layer_means(const ImportanceMap& map,
                                const WeightState& w) {
  if (map.values.size() != w.size())
    throw std::invalid_argument("importance map misaligned with weights");
  std::vector<double> means;
  means.reserve(w.layout.size());
  for (const auto& l : w.layout) {
    const size_t n = l.param_count();
    if (n == 0) {
      means.push_back(0.0);
      continue;
    }
    double sum = 0.0;
    for (size_t i = l.weight_offset; i < l.weight_offset + n; ++i)
      sum += map.values[i];
    means.push_back(sum / static_cast<double>(n));
  }
  return means;
}

}  // namespace fscl
