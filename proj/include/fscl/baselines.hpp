#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fscl/evalkit.hpp"
#include "fscl/importance.hpp"
#include "fscl/network.hpp"
#include "fscl/replay.hpp"
#include "fscl/taskgen.hpp"

namespace fscl {

enum class Method { jt, st, mr, cp, ewc_m, mas_m, si_m, tsc };

std::string to_string(Method m);
Method method_from_string(const std::string& s);
bool is_regularized(Method m);

struct MethodConfig {
  Method method = Method::tsc;
  double reg_strength = 0.1;
  int epochs = 500;
  double plateau_tol = 1e-4;
  int batch_size = 25;
  double si_xi = 0.01;  // SI damping
  // regularizers act on the embedding partition by default; true extends
  // the penalty to the output head
  bool reg_full_scope = false;
  AdamConfig adam;
  double head_init_scale = 0.0;

  void validate() const;
};

// Single-weight-set continual learner shared by every non-TSC method.
// JT rebuilds from the pretrained checkpoint each task; the others carry
// `weights` forward. Regularized replay keeps the accumulated importance
// and the post-previous-task anchor.
struct BaselineState {
  NetworkSpec spec;
  WeightState weights;
  WeightState pretrained;
  NetworkSpec pretrained_spec;
  ClassIndex classes;
  ReplayBuffer replay;
  int task_index = 0;
  std::vector<int> added_per_task;  // head growth log (JT regrows from it)
  std::vector<double> importance;   // accumulated, aligned with weights
  std::vector<double> anchor;       // theta*
};

BaselineState make_baseline_state(const NetworkSpec& spec,
                                  const WeightState& pretrained,
                                  const MethodConfig& cfg);

// Advances the configured method by one task (growth, replay bookkeeping,
// training, importance update). Evaluation is the caller's job.
void baseline_task_step(BaselineState& state, const TaskSplit& task,
                        const MethodConfig& cfg, uint64_t run_seed);

// Shared single-head evaluation over the test sets of tasks 1..t.
MetricsRecord evaluate_baseline(const BaselineState& state,
                                const TaskStream& stream);

// Whole-stream runners for the reference methods; all drive the same task
// step so cross-method differences isolate the method.
std::vector<MetricsRecord> run_sequential(const TaskStream& stream,
                                          const NetworkSpec& spec,
                                          const WeightState& pretrained,
                                          const MethodConfig& cfg,
                                          uint64_t run_seed);
std::vector<MetricsRecord> run_memory_replay(const TaskStream& stream,
                                             const NetworkSpec& spec,
                                             const WeightState& pretrained,
                                             const MethodConfig& cfg,
                                             uint64_t run_seed);
std::vector<MetricsRecord> run_regularized_replay(const TaskStream& stream,
                                                  const NetworkSpec& spec,
                                                  const WeightState& pretrained,
                                                  const MethodConfig& cfg,
                                                  uint64_t run_seed);

// Joint training of tasks 1..t from the pretrained checkpoint; the t-th
// point of the JT curve.
std::pair<WeightState, MetricsRecord> run_joint_training(
    const TaskStream& stream, int t, const NetworkSpec& spec,
    const WeightState& pretrained, const MethodConfig& cfg,
    uint64_t run_seed);

}  // namespace fscl
