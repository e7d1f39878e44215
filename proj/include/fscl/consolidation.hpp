#pragma once

#include <cstdint>
#include <vector>

#include "fscl/activity.hpp"
#include "fscl/evalkit.hpp"
#include "fscl/network.hpp"
#include "fscl/replay.hpp"
#include "fscl/taskgen.hpp"

namespace fscl {

// Gate source for the displacement penalty: the sigmoid-of-activity gate,
// or a constant coefficient of 1 per parameter (the CP ablation control).
enum class GateMode { stc, constant };

struct TscConfig {
  double beta = 0.01;    // slow-weight step in [0,1]
  int k = 100;           // embedding iterations per task
  double lambda = 1e-10; // displacement penalty weight
  double gate_scale = 1.0;  // m
  GateMode gate_mode = GateMode::stc;
  int head_max_epochs = 500;
  double head_plateau_tol = 1e-4;
  int batch_size = 25;
  AdamConfig adam;
  // Step 2's first phase also carries the cross-entropy gradient into the
  // output head (the loss term depends on both partitions); false restricts
  // those k iterations to the embedding.
  bool joint_step2 = true;
  double head_init_scale = 0.0;

  void validate() const;
};

// Fast / slow weight pair plus the consolidation bookkeeping for one run.
// fast and slow share the layout; after each task's consolidation they are
// structurally identical.
struct TscState {
  NetworkSpec spec;
  WeightState slow;
  WeightState fast;
  ActivityState activity;
  ClassIndex classes;
  int task_index = 0;
  // output rows added by the current task; consolidate_slow gives these
  // rows fast's values outright
  int new_classes_this_task = 0;
};

TscState make_tsc_state(const NetworkSpec& spec, const WeightState& pretrained,
                        const TscConfig& cfg);

// Step 2a: exactly k Adam iterations on the fast weights over the replay
// dataset. Each iteration samples a mini-batch uniformly with replacement
// (batches at least as large as the dataset use the full set in stored
// order), takes the cross-entropy gradient per joint_step2, and adds the
// gated displacement penalty gradient on the embedding partition. k == 0
// leaves the fast weights untouched.
void train_embedding_step(TscState& state, const ReplayBuffer& replay,
                          const TscConfig& cfg, uint64_t rng_seed);

// Step 2b: cross-entropy training of the output head with the embedding
// frozen; epoch/plateau recipe from cfg (head_max_epochs, head_plateau_tol,
// 3-epoch patience), shuffled mini-batches of cfg.batch_size.
void train_output_head(TscState& state, const ReplayBuffer& replay,
                       const TscConfig& cfg, uint64_t rng_seed);

// slow <- slow - beta * (slow - fast), element-wise over the full vector.
// Output rows created this task take fast's values exactly; beta == 0 and
// beta == 1 are bit-exact no-op / copy.
void consolidate_slow(TscState& state, double beta);

// One full task of the consolidation loop: grow the head for the task's
// new classes, extend the replay dataset, tag + gate (Step 1, on the task
// data only), copy slow into fast, run Step 2, consolidate, and evaluate
// the fast weights single-head over the test sets of tasks 1..t.
MetricsRecord run_tsc_task(TscState& state, const TaskSplit& task,
                           const TaskStream& stream, ReplayBuffer& replay,
                           const TscConfig& cfg, uint64_t run_seed);

// New-instance regime: the same per-batch pipeline, but the replay set for
// batch t is that batch alone and the head grows once at batch 1. Each
// step is followed by a fresh-batch few-shot probe (reported in probe_nc;
// the record at index 0 holds the pre-stream probe only).
std::vector<MetricsRecord> run_new_instance(TscState& state,
                                            const TaskStream& stream,
                                            const TscConfig& cfg,
                                            const ProbeConfig& probes,
                                            uint64_t run_seed);

}  // namespace fscl
