#pragma once

#include <optional>
#include <span>
#include <vector>

#include "fscl/importance.hpp"
#include "fscl/network.hpp"
#include "fscl/replay.hpp"
#include "fscl/taskgen.hpp"

namespace fscl {

// Per-task evaluation snapshot under single-head evaluation (predictions
// over every class seen so far, no task label at test time).
struct MetricsRecord {
  int task_index = 0;
  double a_top1 = 0.0;
  double a_top5 = 1.0;
  // true when at least 6 classes are live; otherwise a_top5 is recorded as
  // 1.0 and this flag marks it as degenerate
  bool top5_defined = false;
  std::vector<double> per_task_accuracy;  // R_{t,i} for i = 1..t
  std::optional<double> bwt;
  std::optional<double> probe_nc;
  std::optional<double> probe_bc;
  std::optional<std::vector<double>> fisher_layer_means;
  std::optional<std::vector<std::vector<long>>> confusion;
  double wall_ms = 0.0;
};

struct RunSummary {
  uint64_t seed = 0;
  std::string method;
  std::vector<MetricsRecord> records;
};

// Pools the given per-task test sets, predicts over the full head, and
// fills A_t (top-1 / top-5), R_{t,i}, and the confusion matrix. A_t is the
// example-weighted mean of the per-task accuracies.
MetricsRecord evaluate_single_head(const WeightState& w,
                                   const NetworkSpec& spec,
                                   const ClassIndex& classes,
                                   const std::vector<TaskDataset>& test_sets);

// BWT = (1/(T-1)) * sum_{i<T} (R_{T,i} - R_{i,i}) over the triangular
// accuracy matrix (row t holds R_{t,1..t}).
double compute_bwt(const std::vector<std::vector<double>>& r_matrix);

struct ProbeConfig {
  bool enabled = true;
  int count = 8;  // probe tasks averaged per measurement
  int ways = 5;
  int shots = 5;
  int test_shots = 50;
  int epochs = 200;
  bool full_finetune = false;
  // start probes from the slow weights instead of the fast (inference)
  // weights; the new-instance runner reads this too
  bool from_slow = false;
};

// Clones the start weights, attaches a fresh zero-initialized N-way head,
// fine-tunes per the probe recipe (head-only full-batch by default, the
// whole network when full_finetune), and reports test top-1. The clone is
// discarded; the caller's state is untouched. forbidden_ids are the
// stream's query classes; any overlap with probe classes is leakage.
double run_probe(const WeightState& start, const NetworkSpec& spec,
                 const TaskSplit& probe, const ProbeConfig& cfg,
                 const std::vector<long>& forbidden_ids);

// counts[y][y_hat] over aligned prediction/label vectors; labels must be in
// [0, C).
std::vector<std::vector<long>> confusion_matrix(std::span<const int> predictions,
                                                std::span<const int> labels,
                                                int C);

std::vector<std::vector<double>> confusion_row_normalized(
    const std::vector<std::vector<long>>& counts);

// Per-embedding-layer mean of the diagonal empirical Fisher on the given
// data (the feature-extractor stability diagnostic).
std::vector<double> fisher_trace_report(const WeightState& w,
                                        const NetworkSpec& spec,
                                        const Matrix& x,
                                        std::span<const int> y);

}  // namespace fscl
