#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fscl/checkpoint.hpp"
#include "fscl/config.hpp"
#include "fscl/evalkit.hpp"

namespace fscl {

// Embedding trained on the support pool; the pool classifier head is
// discarded, so the spec carries zero output classes.
struct PretrainResult {
  NetworkSpec spec;
  WeightState weights;
};

PretrainResult pretrain(const RunConfig& config, uint64_t seed);

struct SeedRunResult {
  uint64_t seed = 0;
  std::string method_label;
  std::vector<MetricsRecord> records;  // index 0 is the pre-stream probe row
  std::string stream_manifest_text;
  // per-record Fisher layer means live inside records
};

// Runs the configured method over the stream for one seed, evaluating after
// every task. Probes (when enabled) run before task 1 and after each task.
// checkpoint_dir empty disables checkpoints; resume (when given) continues
// from a task boundary.
SeedRunResult run_method_for_seed(const RunConfig& config, uint64_t seed,
                                  const PretrainResult& pretrained,
                                  const CheckpointData* resume = nullptr,
                                  const std::string& checkpoint_dir = "",
                                  const std::string& method_label = "");

// Full artifact emission for every configured seed: manifest, per-seed
// metrics/confusion/fisher CSVs, stream manifests, checkpoints, and the
// merged metrics.csv. A failing seed is recorded in failures.csv and the
// remaining seeds proceed. method_label overrides the method column (sweep
// variants label themselves this way).
void run_experiment(const ConfigMap& cm, const std::string& method_label = "");

// Joins the metrics.csv of completed run directories and writes per
// (method, t) means and sample standard deviations to out_path.
void emit_report(const std::vector<std::string>& run_dirs,
                 const std::string& out_path);

// Metrics CSV schema (column order is part of the contract):
// seed,method,t,a_top1,a_top5,bwt,probe_nc,probe_bc,wall_ms,r_1..r_T
std::string metrics_csv_header(int tasks);
std::string metrics_csv_row(uint64_t seed, const std::string& method,
                            const MetricsRecord& rec, int tasks);

// Resolves the output root: the config value, else $FSCL_OUT, else
// "fscl_out".
std::string resolve_out_dir(const std::string& configured);

}  // namespace fscl
