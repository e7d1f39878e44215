#include "fscl/baselines.hpp"

#include <algorithm>
#include <stdexcept>

#include "fscl/training.hpp"

namespace fscl {

std::string to_string(Method m) {
  switch (m) {
    case Method::jt: return "jt";
    case Method::st: return "st";
    case Method::mr: return "mr";
    case Method::cp: return "cp";
    case Method::ewc_m: return "ewc_m";
    case Method::mas_m: return "mas_m";
    case Method::si_m: return "si_m";
    case Method::tsc: return "tsc";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  if (s == "jt") return Method::jt;
  if (s == "st") return Method::st;
  if (s == "mr") return Method::mr;
  if (s == "cp") return Method::cp;
  if (s == "ewc_m") return Method::ewc_m;
  if (s == "mas_m") return Method::mas_m;
  if (s == "si_m") return Method::si_m;
  if (s == "tsc") return Method::tsc;
  throw std::invalid_argument("unknown method '" + s +
                              "' (jt|st|mr|cp|ewc_m|mas_m|si_m|tsc)");
}

bool is_regularized(Method m) {
  return m == Method::cp || m == Method::ewc_m || m == Method::mas_m ||
         m == Method::si_m;
}

void MethodConfig::validate() const {
  if (reg_strength < 0.0)
    throw std::invalid_argument("method: reg_strength must be >= 0");
  if (epochs < 0) throw std::invalid_argument("method: epochs must be >= 0");
  if (batch_size < 1)
    throw std::invalid_argument("method: batch_size must be >= 1");
  if (si_xi <= 0.0) throw std::invalid_argument("method: si_xi must be > 0");
}

namespace {

// Re-lays a per-parameter vector after head growth: the embedding prefix
// and existing output rows keep their values, new coordinates get `fill`.
std::vector<double> remap_after_growth(const std::vector<double>& old_vals,
                                       const WeightState& old_w,
                                       const WeightState& new_w, double fill) {
  std::vector<double> out(new_w.size(), fill);
  const LayerLayout& o = old_w.layout.back();
  const LayerLayout& n = new_w.layout.back();
  std::copy(old_vals.begin(), old_vals.begin() + o.weight_offset, out.begin());
  std::copy(old_vals.begin() + o.weight_offset,
            old_vals.begin() + o.weight_offset + o.rows * o.cols,
            out.begin() + n.weight_offset);
  std::copy(old_vals.begin() + o.bias_offset,
            old_vals.begin() + o.bias_offset + o.rows,
            out.begin() + n.bias_offset);
  return out;
}

// Penalty coefficients: accumulated importance (or a constant 1 for CP),
// zeroed outside the regularized scope.
std::vector<double> penalty_coefficients(const BaselineState& state,
                                         const MethodConfig& cfg) {
  std::vector<double> coeff(state.weights.size(), 0.0);
  const size_t limit =
      cfg.reg_full_scope ? state.weights.size() : state.weights.embedding_params;
  for (size_t i = 0; i < limit; ++i)
    coeff[i] = cfg.method == Method::cp ? 1.0 : state.importance[i];
  return coeff;
}

void add_importance(std::vector<double>& accum, const ImportanceMap& map) {
  for (size_t i = 0; i < accum.size(); ++i) accum[i] += map.values[i];
}

}  // namespace

BaselineState make_baseline_state(const NetworkSpec& spec,
                                  const WeightState& pretrained,
                                  const MethodConfig& cfg) {
  cfg.validate();
  if (cfg.method == Method::tsc)
    throw std::invalid_argument(
        "baseline state cannot drive the tsc method (use TscState)");
  BaselineState s;
  s.spec = spec;
  s.weights = pretrained;
  s.pretrained = pretrained;
  s.pretrained_spec = spec;
  s.importance.assign(pretrained.size(), 0.0);
  s.anchor = pretrained.values;
  return s;
}

void baseline_task_step(BaselineState& state, const TaskSplit& task,
                        const MethodConfig& cfg, uint64_t run_seed) {
  const int t = state.task_index + 1;
  if (task.train.task_index != t)
    throw std::logic_error("baseline_task_step: expected task " +
                           std::to_string(t) + ", got " +
                           std::to_string(task.train.task_index));

  const int added = state.classes.register_task(task.train);
  state.added_per_task.push_back(added);

  if (cfg.method == Method::jt) {
    // fresh model from the pretrained checkpoint, head regrown task by task
    state.spec = state.pretrained_spec;
    state.weights = state.pretrained;
    for (int i = 1; i <= t; ++i) {
      const int n_i = state.added_per_task[static_cast<size_t>(i - 1)];
      if (n_i > 0)
        grow_output(state.weights, state.spec, n_i, cfg.head_init_scale,
                    mix_seed(run_seed, "grow", static_cast<uint64_t>(i)));
    }
  } else if (added > 0) {
    WeightState before = state.weights;
    grow_output(state.weights, state.spec, added, cfg.head_init_scale,
                mix_seed(run_seed, "grow", static_cast<uint64_t>(t)));
    if (is_regularized(cfg.method)) {
      state.importance =
          remap_after_growth(state.importance, before, state.weights, 0.0);
      std::vector<double> anchor =
          remap_after_growth(state.anchor, before, state.weights, 0.0);
      // anchor the brand-new rows at their initial values
      const LayerLayout& n = state.weights.layout.back();
      const size_t first_new = n.rows - static_cast<size_t>(added);
      for (size_t i = first_new * n.cols; i < n.rows * n.cols; ++i)
        anchor[n.weight_offset + i] = state.weights.values[n.weight_offset + i];
      for (size_t r = first_new; r < n.rows; ++r)
        anchor[n.bias_offset + r] = state.weights.values[n.bias_offset + r];
      state.anchor = std::move(anchor);
    }
  }

  if (cfg.method != Method::st) state.replay.extend(task.train);

  const std::vector<LabeledExample>& train_examples =
      cfg.method == Method::st ? task.train.examples
                               : state.replay.examples();
  LabeledMatrix data = to_labeled_matrix(train_examples, state.classes);

  TrainOptions opts;
  opts.scope = GradScope::all;
  opts.max_epochs = cfg.epochs;
  opts.plateau_tol = cfg.plateau_tol;
  opts.batch_size = cfg.batch_size;
  opts.adam = cfg.adam;

  std::vector<double> coeff;
  if (is_regularized(cfg.method) && cfg.reg_strength > 0.0) {
    coeff = penalty_coefficients(state, cfg);
    opts.penalty.anchor = &state.anchor;
    opts.penalty.coefficients = &coeff;
    opts.penalty.strength = cfg.reg_strength;
  }

  SiPathAccumulator si_path(state.weights.size());
  std::vector<double> theta_start;
  if (cfg.method == Method::si_m) {
    opts.si = &si_path;
    theta_start = state.weights.values;
  }

  Rng rng(mix_seed(run_seed, "train", static_cast<uint64_t>(t)));
  train_epochs(state.weights, state.spec, data.x, data.y, opts, rng);

  if (is_regularized(cfg.method)) {
    LabeledMatrix dt = to_labeled_matrix(task.train.examples, state.classes);
    switch (cfg.method) {
      case Method::ewc_m:
        add_importance(state.importance,
                       estimate_fisher(state.weights, state.spec, dt.x, dt.y));
        break;
      case Method::mas_m:
        add_importance(state.importance,
                       estimate_mas(state.weights, state.spec, dt.x));
        break;
      case Method::si_m:
        add_importance(state.importance,
                       finalize_si(si_path, theta_start, state.weights.values,
                                   cfg.si_xi));
        break;
      default:
        break;  // cp keeps its constant coefficients
    }
    state.anchor = state.weights.values;
  }

  state.task_index = t;
}

MetricsRecord evaluate_baseline(const BaselineState& state,
                                const TaskStream& stream) {
  std::vector<TaskDataset> tests;
  for (int i = 1; i <= state.task_index; ++i)
    tests.push_back(sample_task(stream, i).test);
  MetricsRecord rec =
      evaluate_single_head(state.weights, state.spec, state.classes, tests);
  rec.task_index = state.task_index;
  return rec;
}

namespace {

std::vector<MetricsRecord> run_stream(const TaskStream& stream,
                                      const NetworkSpec& spec,
                                      const WeightState& pretrained,
                                      const MethodConfig& cfg,
                                      uint64_t run_seed) {
  BaselineState state = make_baseline_state(spec, pretrained, cfg);
  std::vector<MetricsRecord> records;
  std::vector<std::vector<double>> r_matrix;
  for (int t = 1; t <= stream.config.tasks; ++t) {
    baseline_task_step(state, sample_task(stream, t), cfg, run_seed);
    MetricsRecord rec = evaluate_baseline(state, stream);
    r_matrix.push_back(rec.per_task_accuracy);
    if (t >= 2) rec.bwt = compute_bwt(r_matrix);
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace

std::vector<MetricsRecord> run_sequential(const TaskStream& stream,
                                          const NetworkSpec& spec,
                                          const WeightState& pretrained,
                                          const MethodConfig& cfg,
                                          uint64_t run_seed) {
  MethodConfig c = cfg;
  c.method = Method::st;
  return run_stream(stream, spec, pretrained, c, run_seed);
}

std::vector<MetricsRecord> run_memory_replay(const TaskStream& stream,
                                             const NetworkSpec& spec,
                                             const WeightState& pretrained,
                                             const MethodConfig& cfg,
                                             uint64_t run_seed) {
  MethodConfig c = cfg;
  c.method = Method::mr;
  return run_stream(stream, spec, pretrained, c, run_seed);
}

std::vector<MetricsRecord> run_regularized_replay(const TaskStream& stream,
                                                  const NetworkSpec& spec,
                                                  const WeightState& pretrained,
                                                  const MethodConfig& cfg,
                                                  uint64_t run_seed) {
  if (!is_regularized(cfg.method))
    throw std::invalid_argument(
        "run_regularized_replay needs method cp|ewc_m|mas_m|si_m");
  return run_stream(stream, spec, pretrained, cfg, run_seed);
}

std::pair<WeightState, MetricsRecord> run_joint_training(
    const TaskStream& stream, int t, const NetworkSpec& spec,
    const WeightState& pretrained, const MethodConfig& cfg,
    uint64_t run_seed) {
  if (t < 1 || t > stream.config.tasks)
    throw std::out_of_range("run_joint_training: t outside the stream");
  MethodConfig c = cfg;
  c.method = Method::jt;
  BaselineState state = make_baseline_state(spec, pretrained, c);
  // tasks before t contribute data and classes only; JT trains once, from
  // the pretrained checkpoint, on the full union
  for (int i = 1; i < t; ++i) {
    TaskSplit split = sample_task(stream, i);
    state.added_per_task.push_back(state.classes.register_task(split.train));
    state.replay.extend(split.train);
    state.task_index = i;
  }
  baseline_task_step(state, sample_task(stream, t), c, run_seed);
  MetricsRecord rec = evaluate_baseline(state, stream);
  return {state.weights, rec};
}

}  // namespace fscl
