#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fscl/matrix.hpp"
#include "fscl/rng.hpp"

namespace fscl {

enum class Origin { support, query };

struct LabeledExample {
  std::vector<double> features;
  long class_id = 0;
  Origin origin = Origin::query;
};

// One N-way K-shot episode: exactly `ways` distinct class_ids with `shots`
// examples each, class-major order.
struct TaskDataset {
  int task_index = 0;
  std::vector<LabeledExample> examples;
  int ways = 0;
  int shots = 0;
};

struct TaskSplit {
  TaskDataset train;
  TaskDataset test;
};

enum class StreamMode { new_class, new_instance };

std::string to_string(StreamMode m);
StreamMode stream_mode_from_string(const std::string& s);

struct StreamConfig {
  int tasks = 10;  // T
  int ways = 5;    // N
  int shots = 5;   // K
  StreamMode mode = StreamMode::new_class;
  int input_dim = 16;
  double shift = 0.3;  // in [0,1]; displacement of query-class means from S
  double class_spread = 1.0;
  double within_class_noise = 0.9;
  int test_shots = 50;
  int pool_classes = 100;
  uint64_t seed = 0;

  void validate() const;
};

// One synthetic (or CSV-backed) class. Parametric classes are Gaussian
// clusters sampled on demand; fixed classes carry their example list.
struct ClassSampler {
  long class_id = 0;
  std::vector<double> mean;
  double noise = 0.0;
  std::vector<std::vector<double>> fixed_examples;  // empty => parametric

  bool parametric() const { return fixed_examples.empty(); }
};

struct SupportPool {
  int input_dim = 0;
  std::vector<ClassSampler> classes;
};

// Deterministic view of the whole query stream. Class parameters are pure
// functions of (config.seed, indices) so task data never depends on
// sampling order.
struct TaskStream {
  StreamConfig config;
  std::vector<double> shift_direction;  // unit vector
  // task_classes[t-1] holds task t's samplers; in new_instance mode every
  // entry aliases the same fixed class set.
  std::vector<std::vector<ClassSampler>> task_classes;

  std::vector<long> all_class_ids() const;
};

std::pair<SupportPool, TaskStream> make_generator(const StreamConfig& config);

// Train split has K shots/class, test split test_shots/class, both fresh
// i.i.d. draws from the class samplers, deterministic in (seed, t).
TaskSplit sample_task(const TaskStream& stream, int t);

enum class ProbeSource { novel_query, base_support };

// A fresh N-way K-shot train/test pair never used in the stream.
// novel_query draws brand-new classes from the query-region distribution;
// base_support picks N distinct pool classes.
TaskSplit sample_probe_task(ProbeSource source, const TaskStream& stream,
                            const SupportPool& pool, int ways, int shots,
                            int test_shots, uint64_t probe_seed);

// Fresh instances of the stream's fixed class set (new_instance mode only).
TaskSplit sample_fresh_batch(const TaskStream& stream, uint64_t probe_seed);

// Mini-batch of pool examples for pretraining: labels are pool-local class
// indexes in [0, classes.size()).
void sample_pool_batch(const SupportPool& pool, Rng& rng, int batch_size,
                       Matrix& x_out, std::vector<int>& y_out);

struct CsvDataset {
  SupportPool pool;
  std::vector<std::pair<long, int>> class_counts;  // (class_id, examples)
};

// Rows are `class_id,feat_0,...,feat_{d-1}` under a one-line header; the
// feature dimension is inferred from the header and validated per row
// (expected_dim = 0 skips the cross-check against a caller-supplied value).
CsvDataset load_csv_dataset(const std::string& path, int expected_dim = 0);

// Plain-text audit record of every class parameter and the seeds involved.
std::string stream_manifest(const SupportPool& pool, const TaskStream& stream);

// Flattens a dataset into a feature matrix plus raw class ids.
void dataset_to_matrix(const std::vector<LabeledExample>& examples,
                       Matrix& x_out, std::vector<long>& ids_out);

}  // namespace fscl
