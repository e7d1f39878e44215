#include "fscl/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fscl {

namespace {

// Index of the largest logit; earlier index wins ties so predictions are
// deterministic.
int argmax_row(const double* z, size_t c) {
  size_t best = 0;
  for (size_t i = 1; i < c; ++i)
    if (z[i] > z[best]) best = i;
  return static_cast<int>(best);
}

bool in_top5(const double* z, size_t c, int label) {
  // rank of the label under (logit desc, index asc) ordering
  const double lz = z[static_cast<size_t>(label)];
  int better = 0;
  for (size_t i = 0; i < c; ++i) {
    if (z[i] > lz || (z[i] == lz && static_cast<int>(i) < label)) ++better;
    if (better >= 5) return false;
  }
  return true;
}

}  // namespace

MetricsRecord evaluate_single_head(const WeightState& w,
                                   const NetworkSpec& spec,
                                   const ClassIndex& classes,
                                   const std::vector<TaskDataset>& test_sets) {
  if (test_sets.empty())
    throw std::invalid_argument("evaluate_single_head: no test sets");
  const int C = spec.output_classes;
  if (C < 1) throw std::invalid_argument("evaluate_single_head: empty head");

  MetricsRecord rec;
  rec.task_index = static_cast<int>(test_sets.size());
  rec.top5_defined = C >= 6;

  std::vector<std::vector<long>> confusion(
      static_cast<size_t>(C), std::vector<long>(static_cast<size_t>(C), 0));
  long correct1 = 0, correct5 = 0, total = 0;
  for (const auto& task : test_sets) {
    LabeledMatrix data = to_labeled_matrix(task.examples, classes);
    Matrix logits = forward(w, spec, data.x);
    long task_correct = 0;
    for (size_t b = 0; b < logits.rows; ++b) {
      const int label = data.y[b];
      const int pred = argmax_row(logits.row(b), logits.cols);
      confusion[static_cast<size_t>(label)][static_cast<size_t>(pred)] += 1;
      if (pred == label) ++task_correct;
      if (rec.top5_defined && in_top5(logits.row(b), logits.cols, label))
        ++correct5;
    }
    correct1 += task_correct;
    total += static_cast<long>(logits.rows);
    rec.per_task_accuracy.push_back(static_cast<double>(task_correct) /
                                    static_cast<double>(logits.rows));
  }
  rec.a_top1 = static_cast<double>(correct1) / static_cast<double>(total);
  rec.a_top5 = rec.top5_defined
                   ? static_cast<double>(correct5) / static_cast<double>(total)
                   : 1.0;
  rec.confusion = std::move(confusion);
  return rec;
}

double compute_bwt(const std::vector<std::vector<double>>& r_matrix) {
  const size_t T = r_matrix.size();
  if (T < 2)
    throw std::invalid_argument("compute_bwt: need at least two tasks");
  for (size_t t = 0; t < T; ++t)
    if (r_matrix[t].size() < t + 1)
      throw std::invalid_argument("compute_bwt: R_{" + std::to_string(t + 1) +
                                  ",i} rows incomplete");
  double sum = 0.0;
  for (size_t i = 0; i + 1 < T; ++i)
    sum += r_matrix[T - 1][i] - r_matrix[i][i];
  return sum / static_cast<double>(T - 1);
}

namespace {

// Head-only probe fine-tuning on cached embeddings: the feature extractor
// is frozen, so e(x) is computed once and the head trains as a full-batch
// softmax regression.
double probe_head_only(const WeightState& start, const NetworkSpec& spec,
                       const Matrix& x_train, const std::vector<int>& y_train,
                       const Matrix& x_test, const std::vector<int>& y_test,
                       int ways, const ProbeConfig& cfg) {
  const Matrix e_train = embed(start, spec, x_train);
  const Matrix e_test = embed(start, spec, x_test);
  const size_t edim = e_train.cols;
  const size_t n = e_train.rows;

  std::vector<double> head(static_cast<size_t>(ways) * edim +
                               static_cast<size_t>(ways),
                           0.0);
  const size_t bias_off = static_cast<size_t>(ways) * edim;
  AdamConfig adam;
  std::vector<double> m(head.size(), 0.0), v(head.size(), 0.0);

  Matrix logits(n, static_cast<size_t>(ways));
  std::vector<double> grad(head.size());
  std::vector<double> p(static_cast<size_t>(ways));
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int step = 1; step <= cfg.epochs; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (size_t b = 0; b < n; ++b) {
      const double* e = e_train.row(b);
      double* z = logits.row(b);
      for (int r = 0; r < ways; ++r) {
        double acc = head[bias_off + static_cast<size_t>(r)];
        const double* wr = head.data() + static_cast<size_t>(r) * edim;
        for (size_t c = 0; c < edim; ++c) acc += wr[c] * e[c];
        z[static_cast<size_t>(r)] = acc;
      }
      double zmax = z[0];
      for (int r = 1; r < ways; ++r)
        zmax = std::max(zmax, z[static_cast<size_t>(r)]);
      double denom = 0.0;
      for (int r = 0; r < ways; ++r) {
        p[static_cast<size_t>(r)] = std::exp(z[static_cast<size_t>(r)] - zmax);
        denom += p[static_cast<size_t>(r)];
      }
      for (int r = 0; r < ways; ++r) {
        const double d =
            (p[static_cast<size_t>(r)] / denom -
             (r == y_train[b] ? 1.0 : 0.0)) *
            inv_n;
        double* gr = grad.data() + static_cast<size_t>(r) * edim;
        for (size_t c = 0; c < edim; ++c) gr[c] += d * e[c];
        grad[bias_off + static_cast<size_t>(r)] += d;
      }
    }
    const double corr1 = 1.0 - std::pow(adam.beta1, step);
    const double corr2 = 1.0 - std::pow(adam.beta2, step);
    for (size_t i = 0; i < head.size(); ++i) {
      m[i] = adam.beta1 * m[i] + (1.0 - adam.beta1) * grad[i];
      v[i] = adam.beta2 * v[i] + (1.0 - adam.beta2) * grad[i] * grad[i];
      head[i] -=
          adam.lr * (m[i] / corr1) / (std::sqrt(v[i] / corr2) + adam.epsilon);
    }
  }

  long correct = 0;
  std::vector<double> z(static_cast<size_t>(ways));
  for (size_t b = 0; b < e_test.rows; ++b) {
    const double* e = e_test.row(b);
    for (int r = 0; r < ways; ++r) {
      double acc = head[bias_off + static_cast<size_t>(r)];
      const double* wr = head.data() + static_cast<size_t>(r) * edim;
      for (size_t c = 0; c < edim; ++c) acc += wr[c] * e[c];
      z[static_cast<size_t>(r)] = acc;
    }
    if (argmax_row(z.data(), z.size()) == y_test[b]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(e_test.rows);
}

}  // namespace

double run_probe(const WeightState& start, const NetworkSpec& spec,
                 const TaskSplit& probe, const ProbeConfig& cfg,
                 const std::vector<long>& forbidden_ids) {
  // leakage check: probe classes must be disjoint from the stream's classes
  for (const auto& e : probe.train.examples)
    if (std::find(forbidden_ids.begin(), forbidden_ids.end(), e.class_id) !=
        forbidden_ids.end())
      throw std::runtime_error("probe class " + std::to_string(e.class_id) +
                               " leaks into the stream");

  // probe-local class slots in order of first appearance
  ClassIndex probe_classes;
  probe_classes.register_task(probe.train);
  const int ways = probe_classes.size();
  LabeledMatrix train = to_labeled_matrix(probe.train.examples, probe_classes);
  LabeledMatrix test = to_labeled_matrix(probe.test.examples, probe_classes);

  if (!cfg.full_finetune)
    return probe_head_only(start, spec, train.x, train.y, test.x, test.y,
                           ways, cfg);

  // full fine-tune: clone, swap in a fresh head, full-batch training
  NetworkSpec probe_spec = spec;
  probe_spec.output_classes = 0;
  WeightState w = zero_weights(probe_spec);
  std::copy(start.values.begin(),
            start.values.begin() + start.embedding_params, w.values.begin());
  grow_output(w, probe_spec, ways, 0.0, 0);

  TrainOptions opts;
  opts.scope = GradScope::all;
  opts.max_epochs = cfg.epochs;
  opts.plateau_patience = cfg.epochs + 1;  // fixed-length recipe, no early stop
  opts.batch_size = static_cast<int>(train.x.rows);
  Rng rng(0);  // full-batch: shuffle order is irrelevant
  train_epochs(w, probe_spec, train.x, train.y, opts, rng);

  Matrix logits = forward(w, probe_spec, test.x);
  long correct = 0;
  for (size_t b = 0; b < logits.rows; ++b)
    if (argmax_row(logits.row(b), logits.cols) == test.y[b]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(logits.rows);
}

std::vector<std::vector<long>> confusion_matrix(std::span<const int> predictions,
                                                std::span<const int> labels,
                                                int C) {
  if (predictions.size() != labels.size())
    throw std::invalid_argument("confusion_matrix: length mismatch");
  std::vector<std::vector<long>> counts(
      static_cast<size_t>(C), std::vector<long>(static_cast<size_t>(C), 0));
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= C || predictions[i] < 0 ||
        predictions[i] >= C)
      throw std::out_of_range("confusion_matrix: label " +
                              std::to_string(labels[i]) + "/prediction " +
                              std::to_string(predictions[i]) +
                              " outside [0, " + std::to_string(C) + ")");
    counts[static_cast<size_t>(labels[i])]
          [static_cast<size_t>(predictions[i])] += 1;
  }
  return counts;
}

std::vector<std::vector<double>> confusion_row_normalized(
    const std::vector<std::vector<long>>& counts) {
  std::vector<std::vector<double>> out(counts.size());
  for (size_t r = 0; r < counts.size(); ++r) {
    long row_sum = 0;
    for (long c : counts[r]) row_sum += c;
    out[r].resize(counts[r].size(), 0.0);
    if (row_sum == 0) continue;
    for (size_t c = 0; c < counts[r].size(); ++c)
      out[r][c] =
          static_cast<double>(counts[r][c]) / static_cast<double>(row_sum);
  }
  return out;
}

std::vector<double> fisher_trace_report(const WeightState& w,
                                        const NetworkSpec& spec,
                                        const Matrix& x,
                                        std::span<const int> y) {
  ImportanceMap fisher = estimate_fisher(w, spec, x, y);
  std::vector<double> all = layer_means(fisher, w);
  all.resize(w.embedding_layer_count());  // feature-extractor layers only
  return all;
}

}  // namespace fscl
