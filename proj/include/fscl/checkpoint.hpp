#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fscl/network.hpp"

namespace fscl {

// Everything a run needs to restart at a task boundary, in one
// self-describing JSON container: network spec, layout, full-precision
// values, optimizer state, plus the consolidation bookkeeping and run
// progress when present. Doubles round-trip value-exactly.
struct CheckpointData {
  NetworkSpec spec;
  std::vector<double> values;

  std::optional<AdamState> optimizer;

  bool has_activity = false;
  std::vector<double> cumulative;
  int tasks_seen = 0;
  double gate_scale = 1.0;
  double penalty_weight = 0.0;

  bool has_run = false;
  std::string method;
  uint64_t seed = 0;
  int task_index = 0;
  std::vector<long> class_ids;
  std::vector<int> added_per_task;
  std::vector<double> r_diag;  // R_{i,i} history, for BWT after resume
  std::optional<std::vector<double>> anchor;
  std::optional<std::vector<double>> importance;
};

std::string checkpoint_to_json(const CheckpointData& data);
CheckpointData checkpoint_from_json(const std::string& text);

void save_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData load_checkpoint(const std::string& path);

// Rebuilds the flat WeightState from the checkpoint's spec + values,
// validating the recorded layout against the derived one.
WeightState weights_from_checkpoint(const CheckpointData& data);

}  // namespace fscl
