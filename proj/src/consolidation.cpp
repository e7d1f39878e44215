#include "fscl/consolidation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "fscl/training.hpp"

namespace fscl {

void TscConfig::validate() const {
  if (beta < 0.0 || beta > 1.0)
    throw std::invalid_argument("tsc: beta must be in [0,1]");
  if (k < 0) throw std::invalid_argument("tsc: k must be >= 0");
  if (lambda < 0.0) throw std::invalid_argument("tsc: lambda must be >= 0");
  if (gate_scale <= 0.0) throw std::invalid_argument("tsc: m must be > 0");
  if (head_max_epochs < 0)
    throw std::invalid_argument("tsc: head_max_epochs must be >= 0");
  if (batch_size < 1)
    throw std::invalid_argument("tsc: batch_size must be >= 1");
}

TscState make_tsc_state(const NetworkSpec& spec, const WeightState& pretrained,
                        const TscConfig& cfg) {
  cfg.validate();
  TscState s;
  s.spec = spec;
  s.slow = pretrained;
  s.fast = pretrained;
  s.activity = make_activity_state(pretrained, cfg.gate_scale, cfg.lambda);
  return s;
}

void train_embedding_step(TscState& state, const ReplayBuffer& replay,
                          const TscConfig& cfg, uint64_t rng_seed) {
  if (replay.empty())
    throw std::invalid_argument("train_embedding_step: empty replay dataset");
  if (cfg.k == 0) return;

  LabeledMatrix all = to_labeled_matrix(replay.examples(), state.classes);
  const size_t n = all.x.rows;
  const size_t bn = std::min(static_cast<size_t>(cfg.batch_size), n);
  const bool full_batch = static_cast<size_t>(cfg.batch_size) >= n;

  const std::vector<double>* gate = nullptr;
  std::vector<double> ones;
  if (cfg.lambda > 0.0) {
    if (cfg.gate_mode == GateMode::stc) {
      if (state.activity.tasks_seen < 1)
        throw std::logic_error("train_embedding_step: gate not computed yet");
      gate = &state.activity.gate;
    } else {
      ones.assign(state.fast.embedding_params, 1.0);
      gate = &ones;
    }
  }

  Rng rng(rng_seed);
  AdamState opt = AdamState::fresh(state.fast.size(), cfg.adam);
  GradientVector grad;
  Matrix xb(bn, all.x.cols);
  std::vector<int> yb(bn);
  const GradScope scope =
      cfg.joint_step2 ? GradScope::all : GradScope::embedding_only;
  for (int iter = 0; iter < cfg.k; ++iter) {
    for (size_t b = 0; b < bn; ++b) {
      const size_t src = full_batch ? b : static_cast<size_t>(rng.next_below(n));
      std::copy(all.x.row(src), all.x.row(src) + all.x.cols, xb.row(b));
      yb[b] = all.y[src];
    }
    loss_and_grad(state.fast, state.spec, xb, yb, scope, grad);
    if (gate) {
      for (size_t i = 0; i < state.fast.embedding_params; ++i)
        grad.values[i] += 2.0 * cfg.lambda * (*gate)[i] *
                          (state.fast.values[i] - state.slow.values[i]);
    }
    adam_step(state.fast, grad, opt);
  }
}

void train_output_head(TscState& state, const ReplayBuffer& replay,
                       const TscConfig& cfg, uint64_t rng_seed) {
  if (replay.empty())
    throw std::invalid_argument("train_output_head: empty replay dataset");
  LabeledMatrix all = to_labeled_matrix(replay.examples(), state.classes);
  TrainOptions opts;
  opts.scope = GradScope::output_only;
  opts.max_epochs = cfg.head_max_epochs;
  opts.plateau_tol = cfg.head_plateau_tol;
  opts.batch_size = cfg.batch_size;
  opts.adam = cfg.adam;
  Rng rng(rng_seed);
  train_epochs(state.fast, state.spec, all.x, all.y, opts, rng);
}

void consolidate_slow(TscState& state, double beta) {
  if (beta < 0.0 || beta > 1.0)
    throw std::invalid_argument("consolidate_slow: beta must be in [0,1]");
  WeightState& slow = state.slow;
  const WeightState& fast = state.fast;
  if (slow.size() != fast.size())
    throw std::invalid_argument(
        "consolidate_slow: layout mismatch after row alignment (slow " +
        std::to_string(slow.size()) + ", fast " + std::to_string(fast.size()) +
        ")");

  // brand-new class rows take the fast values outright
  if (state.new_classes_this_task > 0) {
    const LayerLayout& out = slow.layout.back();
    const size_t new_rows = static_cast<size_t>(state.new_classes_this_task);
    const size_t first = out.rows - new_rows;
    std::copy(fast.values.begin() + out.weight_offset + first * out.cols,
              fast.values.begin() + out.weight_offset + out.rows * out.cols,
              slow.values.begin() + out.weight_offset + first * out.cols);
    std::copy(fast.values.begin() + out.bias_offset + first,
              fast.values.begin() + out.bias_offset + out.rows,
              slow.values.begin() + out.bias_offset + first);
  }

  if (beta == 0.0) return;
  if (beta == 1.0) {
    slow.values = fast.values;
    return;
  }
  for (size_t i = 0; i < slow.values.size(); ++i)
    slow.values[i] += beta * (fast.values[i] - slow.values[i]);
}

MetricsRecord run_tsc_task(TscState& state, const TaskSplit& task,
                           const TaskStream& stream, ReplayBuffer& replay,
                           const TscConfig& cfg, uint64_t run_seed) {
  cfg.validate();
  const int t = state.task_index + 1;
  if (task.train.task_index != t)
    throw std::logic_error("run_tsc_task: expected task " + std::to_string(t) +
                           ", got " + std::to_string(task.train.task_index));

  // (a) grow the head for the task's new classes
  const int added = state.classes.register_task(task.train);
  state.new_classes_this_task = added;
  if (added > 0)
    grow_output(state.slow, state.spec, added, cfg.head_init_scale,
                mix_seed(run_seed, "grow", static_cast<uint64_t>(t)));

  // (b) replay dataset D^R_{1:t} = D_t united with the history
  replay.extend(task.train);

  // (c) Step 1: tag on the current task only, then gate
  LabeledMatrix dt = to_labeled_matrix(task.train.examples, state.classes);
  std::vector<double> a_t =
      compute_activity(state.slow, state.spec, dt.x, dt.y);
  update_cumulative(state.activity, a_t);
  compute_gate(state.activity);

  // (d) transfer slow -> fast
  state.fast = state.slow;

  // (e) Step 2: embedding iterations, then head training
  train_embedding_step(state, replay, cfg,
                       mix_seed(run_seed, "emb", static_cast<uint64_t>(t)));
  train_output_head(state, replay, cfg,
                    mix_seed(run_seed, "head", static_cast<uint64_t>(t)));

  // (f) slow-weight consolidation
  consolidate_slow(state, cfg.beta);
  state.task_index = t;

  // inference on the task sequence uses the fast weights
  std::vector<TaskDataset> tests;
  for (int i = 1; i <= t; ++i) tests.push_back(sample_task(stream, i).test);
  MetricsRecord rec =
      evaluate_single_head(state.fast, state.spec, state.classes, tests);
  rec.task_index = t;
  return rec;
}

std::vector<MetricsRecord> run_new_instance(TscState& state,
                                            const TaskStream& stream,
                                            const TscConfig& cfg,
                                            const ProbeConfig& probes,
                                            uint64_t run_seed) {
  cfg.validate();
  if (stream.config.mode != StreamMode::new_instance)
    throw std::logic_error("run_new_instance: stream is not in new_instance mode");

  const std::vector<long> no_forbidden;  // fresh batches reuse stream classes
  auto fresh_batch_probe = [&]() -> std::optional<double> {
    if (!probes.enabled) return std::nullopt;
    double sum = 0.0;
    for (int j = 0; j < probes.count; ++j) {
      TaskSplit p = sample_fresh_batch(stream, static_cast<uint64_t>(j));
      const WeightState& start = probes.from_slow ? state.slow : state.fast;
      sum += run_probe(start, state.spec, p, probes, no_forbidden);
    }
    return sum / probes.count;
  };

  std::vector<MetricsRecord> records;
  std::vector<std::vector<double>> r_matrix;

  if (probes.enabled) {
    MetricsRecord baseline;
    baseline.task_index = 0;
    baseline.a_top1 = std::numeric_limits<double>::quiet_NaN();
    baseline.a_top5 = std::numeric_limits<double>::quiet_NaN();
    baseline.probe_nc = fresh_batch_probe();  // probes only use the embedding
    records.push_back(std::move(baseline));
  }

  ReplayBuffer batch_only;
  for (int t = 1; t <= stream.config.tasks; ++t) {
    TaskSplit split = sample_task(stream, t);
    const int added = state.classes.register_task(split.train);
    if (t == 1) {
      state.new_classes_this_task = added;
      if (added > 0)
        grow_output(state.slow, state.spec, added, cfg.head_init_scale,
                    mix_seed(run_seed, "grow", static_cast<uint64_t>(t)));
    } else {
      state.new_classes_this_task = 0;
      if (added != 0)
        throw std::logic_error("run_new_instance: class set changed at batch " +
                               std::to_string(t));
    }

    batch_only.clear();
    batch_only.extend(split.train);  // no union with old batches

    LabeledMatrix dt = to_labeled_matrix(split.train.examples, state.classes);
    std::vector<double> a_t =
        compute_activity(state.slow, state.spec, dt.x, dt.y);
    update_cumulative(state.activity, a_t);
    compute_gate(state.activity);

    state.fast = state.slow;
    train_embedding_step(state, batch_only, cfg,
                         mix_seed(run_seed, "emb", static_cast<uint64_t>(t)));
    train_output_head(state, batch_only, cfg,
                      mix_seed(run_seed, "head", static_cast<uint64_t>(t)));
    consolidate_slow(state, cfg.beta);
    state.task_index = t;

    std::vector<TaskDataset> tests;
    for (int i = 1; i <= t; ++i) tests.push_back(sample_task(stream, i).test);
    MetricsRecord rec =
        evaluate_single_head(state.fast, state.spec, state.classes, tests);
    rec.task_index = t;
    r_matrix.push_back(rec.per_task_accuracy);
    if (t >= 2) rec.bwt = compute_bwt(r_matrix);
    rec.probe_nc = fresh_batch_probe();
    rec.fisher_layer_means =
        fisher_trace_report(state.fast, state.spec, dt.x, dt.y);
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace fscl
