#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fscl/matrix.hpp"

namespace fscl {

enum class Activation { relu, tanh_ };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct HiddenLayer {
  int width = 0;
  Activation act = Activation::relu;
};

// Feed-forward classifier shape. The hidden stack is the feature embedding;
// the final linear layer (softmax classifier) is the output partition and
// grows as classes arrive. output_classes == 0 is legal only before the
// first task is registered.
struct NetworkSpec {
  int input_dim = 0;
  std::vector<HiddenLayer> hidden;
  int output_classes = 0;
  uint64_t seed = 0;

  void validate() const;
  int embedding_dim() const { return hidden.back().width; }
};

struct LayerLayout {
  size_t weight_offset = 0;
  size_t rows = 0;  // output width
  size_t cols = 0;  // input width
  size_t bias_offset = 0;
  bool is_output = false;

  size_t param_count() const { return rows * cols + rows; }
};

std::vector<LayerLayout> build_layout(const NetworkSpec& spec);

// Flat parameter vector plus its per-layer index. Embedding parameters are
// the contiguous prefix [0, embedding_params); exactly the final layer is
// tagged output.
struct WeightState {
  std::vector<double> values;
  std::vector<LayerLayout> layout;
  size_t embedding_params = 0;

  size_t size() const { return values.size(); }
  size_t embedding_layer_count() const { return layout.size() - 1; }
};

WeightState zero_weights(const NetworkSpec& spec);
// Glorot-uniform weights, zero biases, deterministic in the seed.
WeightState initial_weights(const NetworkSpec& spec, uint64_t seed);

// Throws when a NaN/Inf appears; call sites keep the all-finite invariant.
void require_finite(const WeightState& w, const char* where);

struct GradientVector {
  std::vector<double> values;
};

enum class GradScope { all, embedding_only, output_only };

// Logits for a batch (rows = examples). Requires output_classes >= 1.
Matrix forward(const WeightState& w, const NetworkSpec& spec,
               const Matrix& batch);

// Final hidden activations (the embedding e(x)); same arithmetic as the
// hidden portion of forward().
Matrix embed(const WeightState& w, const NetworkSpec& spec,
             const Matrix& batch);

// Mean cross-entropy over the batch and its analytic gradient. Entries
// outside the scope are exactly zero; within scope the gradient is that of
// the mean loss.
double loss_and_grad(const WeightState& w, const NetworkSpec& spec,
                     const Matrix& x, std::span<const int> y, GradScope scope,
                     GradientVector& grad_out);

// Backprop of an arbitrary per-example logit gradient (rows aligned with
// the batch). Used by the Fisher / MAS importance estimators.
void backprop_from_logit_grad(const WeightState& w, const NetworkSpec& spec,
                              const Matrix& x, const Matrix& dlogits,
                              GradScope scope, GradientVector& grad_out);

struct AdamConfig {
  double lr = 0.0005;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig cfg;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  long step_count = 0;

  static AdamState fresh(size_t n, const AdamConfig& cfg);
};

// Standard bias-corrected Adam update, in place; step_count increments by
// exactly one.
void adam_step(WeightState& w, const GradientVector& grad, AdamState& opt);

// Appends new_classes rows to the output layer. Pre-existing values stay
// bit-identical; new weight rows and biases are drawn from
// Uniform(-init_scale, +init_scale) with the given seed (all new weights
// first, row-major, then the new biases).
void grow_output(WeightState& w, NetworkSpec& spec, int new_classes,
                 double init_scale, uint64_t seed);

}  // namespace fscl
