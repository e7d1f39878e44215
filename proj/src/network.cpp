#include "fscl/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fscl/rng.hpp"

namespace fscl {

std::string to_string(Activation a) {
  return a == Activation::relu ? "relu" : "tanh";
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh_;
  throw std::invalid_argument("unknown activation '" + s +
                              "' (expected relu or tanh)");
}

void NetworkSpec::validate() const {
  if (input_dim < 1) throw std::invalid_argument("input_dim must be >= 1");
  if (hidden.empty())
    throw std::invalid_argument("at least one hidden layer is required");
  for (const auto& h : hidden)
    if (h.width < 1)
      throw std::invalid_argument("hidden layer width must be >= 1");
  if (output_classes < 0)
    throw std::invalid_argument("output_classes must be >= 0");
}

std::vector<LayerLayout> build_layout(const NetworkSpec& spec) {
  spec.validate();
  std::vector<LayerLayout> layout;
  size_t offset = 0;
  size_t in = static_cast<size_t>(spec.input_dim);
  for (const auto& h : spec.hidden) {
    LayerLayout l;
    l.rows = static_cast<size_t>(h.width);
    l.cols = in;
    l.weight_offset = offset;
    l.bias_offset = offset + l.rows * l.cols;
    l.is_output = false;
    offset += l.param_count();
    layout.push_back(l);
    in = l.rows;
  }
  LayerLayout out;
  out.rows = static_cast<size_t>(spec.output_classes);
  out.cols = in;
  out.weight_offset = offset;
  out.bias_offset = offset + out.rows * out.cols;
  out.is_output = true;
  layout.push_back(out);
  return layout;
}

WeightState zero_weights(const NetworkSpec& spec) {
  WeightState w;
  w.layout = build_layout(spec);
  size_t total = 0;
  for (const auto& l : w.layout) total += l.param_count();
  w.values.assign(total, 0.0);
  w.embedding_params = w.layout.back().weight_offset;
  return w;
}

WeightState initial_weights(const NetworkSpec& spec, uint64_t seed) {
  WeightState w = zero_weights(spec);
  Rng rng(seed);
  for (const auto& l : w.layout) {
    if (l.rows == 0) continue;
    double limit = std::sqrt(6.0 / static_cast<double>(l.rows + l.cols));
    for (size_t i = 0; i < l.rows * l.cols; ++i)
      w.values[l.weight_offset + i] = rng.next_uniform(-limit, limit);
    // biases stay zero
  }
  return w;
}

void require_finite(const WeightState& w, const char* where) {
  for (double v : w.values)
    if (!std::isfinite(v))
      throw std::runtime_error(std::string("non-finite weight after ") +
                               where);
}

namespace {

void check_batch_dims(const NetworkSpec& spec, const Matrix& x) {
  if (spec.output_classes < 1)
    throw std::invalid_argument("network has no output classes yet");
  if (x.cols != static_cast<size_t>(spec.input_dim))
    throw std::invalid_argument(
        "batch dimension mismatch: expected " +
        std::to_string(spec.input_dim) + " features, got " +
        std::to_string(x.cols));
}

// z = W h + b for one layer, one example row.
inline void layer_affine(const double* values, const LayerLayout& l,
                         const double* in, double* out) {
  for (size_t r = 0; r < l.rows; ++r) {
    double acc = values[l.bias_offset + r];
    const double* wrow = values + l.weight_offset + r * l.cols;
    for (size_t c = 0; c < l.cols; ++c) acc += wrow[c] * in[c];
    out[r] = acc;
  }
}

inline void apply_activation(Activation a, double* v, size_t n) {
  if (a == Activation::relu) {
    for (size_t i = 0; i < n; ++i) v[i] = v[i] > 0.0 ? v[i] : 0.0;
  } else {
    for (size_t i = 0; i < n; ++i) v[i] = std::tanh(v[i]);
  }
}

// Post-activation outputs of every hidden layer plus the logits. acts[l]
// has one row per example; acts.back() are the logits.
void forward_collect(const WeightState& w, const NetworkSpec& spec,
                     const Matrix& x, std::vector<Matrix>& acts) {
  acts.clear();
  acts.reserve(w.layout.size());
  const Matrix* prev = &x;
  for (size_t li = 0; li < w.layout.size(); ++li) {
    const LayerLayout& l = w.layout[li];
    Matrix h(x.rows, l.rows);
    for (size_t b = 0; b < x.rows; ++b)
      layer_affine(w.values.data(), l, prev->row(b), h.row(b));
    if (!l.is_output)
      apply_activation(spec.hidden[li].act, h.data.data(), h.data.size());
    acts.push_back(std::move(h));
    prev = &acts.back();
  }
}

// Derivative of the activation expressed through the post-activation value:
// relu' = [h > 0], tanh' = 1 - h^2.
inline double act_derivative(Activation a, double h) {
  return a == Activation::relu ? (h > 0.0 ? 1.0 : 0.0) : 1.0 - h * h;
}

// Shared backward pass. dlogits has one row per example and is already the
// gradient of the objective wrt the logits (any upstream scaling included).
void backward(const WeightState& w, const NetworkSpec& spec, const Matrix& x,
              const std::vector<Matrix>& acts, const Matrix& dlogits,
              GradScope scope, GradientVector& grad_out) {
  grad_out.values.assign(w.size(), 0.0);
  const size_t L = w.layout.size();
  Matrix dz = dlogits;
  for (size_t li = L; li-- > 0;) {
    const LayerLayout& l = w.layout[li];
    const Matrix& input = li == 0 ? x : acts[li - 1];
    const bool write_grads = scope == GradScope::all ||
                             (scope == GradScope::embedding_only &&
                              !l.is_output) ||
                             (scope == GradScope::output_only && l.is_output);
    if (write_grads) {
      for (size_t b = 0; b < x.rows; ++b) {
        const double* dzr = dz.row(b);
        const double* inr = input.row(b);
        for (size_t r = 0; r < l.rows; ++r) {
          double g = dzr[r];
          double* wg = grad_out.values.data() + l.weight_offset + r * l.cols;
          for (size_t c = 0; c < l.cols; ++c) wg[c] += g * inr[c];
          grad_out.values[l.bias_offset + r] += g;
        }
      }
    }
    if (li == 0) break;
    if (scope == GradScope::output_only && l.is_output) break;
    // propagate dz to the previous layer through W^T and the activation
    Matrix dprev(x.rows, l.cols);
    Activation act = spec.hidden[li - 1].act;
    for (size_t b = 0; b < x.rows; ++b) {
      const double* dzr = dz.row(b);
      const double* hr = acts[li - 1].row(b);
      double* dpr = dprev.row(b);
      for (size_t c = 0; c < l.cols; ++c) {
        double acc = 0.0;
        for (size_t r = 0; r < l.rows; ++r)
          acc += w.values[l.weight_offset + r * l.cols + c] * dzr[r];
        dpr[c] = acc * act_derivative(act, hr[c]);
      }
    }
    dz = std::move(dprev);
  }
}

}  // namespace

Matrix forward(const WeightState& w, const NetworkSpec& spec,
               const Matrix& batch) {
  check_batch_dims(spec, batch);
  std::vector<Matrix> acts;
  forward_collect(w, spec, batch, acts);
  return std::move(acts.back());
}

Matrix embed(const WeightState& w, const NetworkSpec& spec,
             const Matrix& batch) {
  if (batch.cols != static_cast<size_t>(spec.input_dim))
    throw std::invalid_argument(
        "batch dimension mismatch: expected " +
        std::to_string(spec.input_dim) + " features, got " +
        std::to_string(batch.cols));
  const Matrix* prev = &batch;
  Matrix h;
  for (size_t li = 0; li + 1 < w.layout.size(); ++li) {
    const LayerLayout& l = w.layout[li];
    Matrix next(batch.rows, l.rows);
    for (size_t b = 0; b < batch.rows; ++b)
      layer_affine(w.values.data(), l, prev->row(b), next.row(b));
    apply_activation(spec.hidden[li].act, next.data.data(),
                     next.data.size());
    h = std::move(next);
    prev = &h;
  }
  return h;
}

double loss_and_grad(const WeightState& w, const NetworkSpec& spec,
                     const Matrix& x, std::span<const int> y, GradScope scope,
                     GradientVector& grad_out) {
  check_batch_dims(spec, x);
  if (x.rows == 0) throw std::invalid_argument("empty batch");
  if (y.size() != x.rows)
    throw std::invalid_argument("label count does not match batch rows");
  for (int label : y)
    if (label < 0 || label >= spec.output_classes)
      throw std::invalid_argument(
          "label " + std::to_string(label) + " outside [0, " +
          std::to_string(spec.output_classes) + ")");

  std::vector<Matrix> acts;
  forward_collect(w, spec, x, acts);
  Matrix& logits = acts.back();
  const size_t C = logits.cols;
  const double inv_b = 1.0 / static_cast<double>(x.rows);

  Matrix dlogits(x.rows, C);
  double loss = 0.0;
  std::vector<double> p(C);
  for (size_t b = 0; b < x.rows; ++b) {
    const double* z = logits.row(b);
    double zmax = z[0];
    for (size_t c = 1; c < C; ++c) zmax = std::max(zmax, z[c]);
    double denom = 0.0;
    for (size_t c = 0; c < C; ++c) {
      p[c] = std::exp(z[c] - zmax);
      denom += p[c];
    }
    const size_t label = static_cast<size_t>(y[b]);
    loss -= std::log(p[label] / denom);
    double* dr = dlogits.row(b);
    for (size_t c = 0; c < C; ++c)
      dr[c] = (p[c] / denom - (c == label ? 1.0 : 0.0)) * inv_b;
  }
  loss *= inv_b;

  backward(w, spec, x, acts, dlogits, scope, grad_out);
  return loss;
}

void backprop_from_logit_grad(const WeightState& w, const NetworkSpec& spec,
                              const Matrix& x, const Matrix& dlogits,
                              GradScope scope, GradientVector& grad_out) {
  check_batch_dims(spec, x);
  if (dlogits.rows != x.rows ||
      dlogits.cols != static_cast<size_t>(spec.output_classes))
    throw std::invalid_argument("dlogits shape mismatch");
  std::vector<Matrix> acts;
  forward_collect(w, spec, x, acts);
  backward(w, spec, x, acts, dlogits, scope, grad_out);
}

AdamState AdamState::fresh(size_t n, const AdamConfig& cfg) {
  AdamState s;
  s.cfg = cfg;
  s.first_moment.assign(n, 0.0);
  s.second_moment.assign(n, 0.0);
  s.step_count = 0;
  return s;
}

void adam_step(WeightState& w, const GradientVector& grad, AdamState& opt) {
  const size_t n = w.size();
  if (grad.values.size() != n || opt.first_moment.size() != n ||
      opt.second_moment.size() != n)
    throw std::invalid_argument("adam_step: misaligned layout");
  opt.step_count += 1;
  const double b1 = opt.cfg.beta1;
  const double b2 = opt.cfg.beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(opt.step_count));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(opt.step_count));
  for (size_t i = 0; i < n; ++i) {
    const double g = grad.values[i];
    double m = b1 * opt.first_moment[i] + (1.0 - b1) * g;
    double v = b2 * opt.second_moment[i] + (1.0 - b2) * g * g;
    opt.first_moment[i] = m;
    opt.second_moment[i] = v;
    const double mhat = m / corr1;
    const double vhat = v / corr2;
    w.values[i] -= opt.cfg.lr * mhat / (std::sqrt(vhat) + opt.cfg.epsilon);
  }
  require_finite(w, "adam_step");
}

void grow_output(WeightState& w, NetworkSpec& spec, int new_classes,
                 double init_scale, uint64_t seed) {
  if (new_classes < 1)
    throw std::invalid_argument("grow_output: new_classes must be >= 1");
  NetworkSpec grown = spec;
  grown.output_classes += new_classes;
  std::vector<LayerLayout> layout = build_layout(grown);

  const LayerLayout& old_out = w.layout.back();
  const LayerLayout& new_out = layout.back();
  std::vector<double> values(new_out.bias_offset + new_out.rows, 0.0);

  // embedding prefix and existing output rows are preserved bit-for-bit
  std::copy(w.values.begin(), w.values.begin() + old_out.weight_offset,
            values.begin());
  std::copy(w.values.begin() + old_out.weight_offset,
            w.values.begin() + old_out.weight_offset +
                old_out.rows * old_out.cols,
            values.begin() + new_out.weight_offset);
  std::copy(w.values.begin() + old_out.bias_offset,
            w.values.begin() + old_out.bias_offset + old_out.rows,
            values.begin() + new_out.bias_offset);

  Rng rng(seed);
  for (size_t i = old_out.rows * new_out.cols; i < new_out.rows * new_out.cols;
       ++i)
    values[new_out.weight_offset + i] =
        init_scale * rng.next_uniform(-1.0, 1.0);
  for (size_t r = old_out.rows; r < new_out.rows; ++r)
    values[new_out.bias_offset + r] = init_scale * rng.next_uniform(-1.0, 1.0);

  spec = grown;
  w.layout = std::move(layout);
  w.values = std::move(values);
  w.embedding_params = w.layout.back().weight_offset;
}

}  // namespace fscl
