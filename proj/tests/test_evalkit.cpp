#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fscl/evalkit.hpp"
#include "fscl/checkpoint.hpp"
#include "helpers.hpp"

using namespace fscl;
using namespace fscl::test;

namespace {

// network that passes one-hot inputs through to matching logits: relu
// hidden with identity weights, identity head
struct OracleNet {
  NetworkSpec spec;
  WeightState weights;
};

OracleNet perfect_net(int classes) {
  OracleNet net;
  net.spec.input_dim = classes;
  net.spec.hidden = {{classes, Activation::relu}};
  net.spec.output_classes = classes;
  net.weights = zero_weights(net.spec);
  const LayerLayout& l0 = net.weights.layout[0];
  const LayerLayout& l1 = net.weights.layout[1];
  for (int i = 0; i < classes; ++i) {
    net.weights.values[l0.weight_offset + static_cast<size_t>(i) * l0.cols + i] = 1.0;
    net.weights.values[l1.weight_offset + static_cast<size_t>(i) * l1.cols + i] = 1.0;
  }
  return net;
}

TaskDataset onehot_task(int task_index, const std::vector<long>& ids,
                        int shots, int classes) {
  TaskDataset d;
  d.task_index = task_index;
  d.ways = static_cast<int>(ids.size());
  d.shots = shots;
  for (long id : ids)
    for (int k = 0; k < shots; ++k) {
      LabeledExample e;
      e.class_id = id;
      e.features.assign(static_cast<size_t>(classes), 0.0);
      e.features[static_cast<size_t>(id)] = 5.0;
      d.examples.push_back(std::move(e));
    }
  return d;
}

}  // namespace

TEST_CASE("single-head: perfect predictions give A_t = 1 and a diagonal confusion") {
  OracleNet net = perfect_net(6);
  ClassIndex classes;
  TaskDataset t1 = onehot_task(1, {0, 1, 2}, 4, 6);
  TaskDataset t2 = onehot_task(2, {3, 4, 5}, 4, 6);
  classes.register_task(t1);
  classes.register_task(t2);
  MetricsRecord rec = evaluate_single_head(net.weights, net.spec, classes,
                                           {t1, t2});
  CHECK(rec.a_top1 == 1.0);
  CHECK(rec.a_top5 == 1.0);
  CHECK(rec.top5_defined);
  REQUIRE(rec.per_task_accuracy.size() == 2);
  CHECK(rec.per_task_accuracy[0] == 1.0);
  CHECK(rec.per_task_accuracy[1] == 1.0);
  const auto& conf = *rec.confusion;
  for (size_t y = 0; y < conf.size(); ++y)
    for (size_t p = 0; p < conf.size(); ++p)
      CHECK(conf[y][p] == (y == p ? 4 : 0));
}

TEST_CASE("single-head: t=1 means A_1 equals R_{1,1}") {
  OracleNet net = perfect_net(4);
  // corrupt one head row so accuracy is not trivially 1
  net.weights.values[net.weights.layout[1].weight_offset] = -1.0;
  ClassIndex classes;
  TaskDataset t1 = onehot_task(1, {0, 1, 2, 3}, 5, 4);
  classes.register_task(t1);
  MetricsRecord rec =
      evaluate_single_head(net.weights, net.spec, classes, {t1});
  CHECK(rec.a_top1 == rec.per_task_accuracy[0]);
}

TEST_CASE("single-head: random-guess head matches binomial expectations") {
  const int C = 10;
  NetworkSpec spec;
  spec.input_dim = 6;
  spec.hidden = {{8, Activation::tanh_}};
  spec.output_classes = C;
  WeightState w = initial_weights(spec, 12345);

  // labels drawn independently of the inputs: accuracy is a Bernoulli(1/C)
  TaskDataset task;
  task.task_index = 1;
  task.ways = C;
  task.shots = 600;
  Rng rng(777);
  ClassIndex classes;
  for (int c = 0; c < C; ++c)
    for (int k = 0; k < 600; ++k) {
      LabeledExample e;
      e.class_id = c;
      e.features.resize(6);
      for (double& v : e.features) v = rng.next_normal();
      task.examples.push_back(std::move(e));
    }
  classes.register_task(task);
  MetricsRecord rec = evaluate_single_head(w, spec, classes, {task});

  const double n = 6000.0;
  const double se1 = std::sqrt(0.1 * 0.9 / n);
  const double se5 = std::sqrt(0.5 * 0.5 / n);
  CHECK(std::fabs(rec.a_top1 - 0.1) < 3.0 * se1);
  CHECK(std::fabs(rec.a_top5 - 0.5) < 3.0 * se5);
  CHECK(rec.a_top5 >= rec.a_top1);
}

TEST_CASE("single-head: A_t invariant under example permutation") {
  OracleNet net = perfect_net(5);
  net.weights.values[net.weights.layout[1].weight_offset + 2] = 0.8;
  ClassIndex classes;
  TaskDataset t1 = onehot_task(1, {0, 1, 2, 3, 4}, 6, 5);
  classes.register_task(t1);
  MetricsRecord a = evaluate_single_head(net.weights, net.spec, classes, {t1});
  TaskDataset shuffled = t1;
  Rng rng(4);
  rng.shuffle(shuffled.examples);
  MetricsRecord b =
      evaluate_single_head(net.weights, net.spec, classes, {shuffled});
  CHECK(a.a_top1 == b.a_top1);
  CHECK(a.a_top5 == b.a_top5);
}

TEST_CASE("single-head: fewer than six classes flags top-5 as degenerate") {
  OracleNet net = perfect_net(3);
  ClassIndex classes;
  TaskDataset t1 = onehot_task(1, {0, 1, 2}, 2, 3);
  classes.register_task(t1);
  MetricsRecord rec =
      evaluate_single_head(net.weights, net.spec, classes, {t1});
  CHECK_FALSE(rec.top5_defined);
  CHECK(rec.a_top5 == 1.0);
}

TEST_CASE("single-head: class outside the head is an error") {
  OracleNet net = perfect_net(3);
  ClassIndex classes;
  TaskDataset t1 = onehot_task(1, {0, 1}, 2, 3);
  classes.register_task(t1);
  TaskDataset stray = onehot_task(2, {2}, 2, 3);  // class 2 never registered
  CHECK_THROWS_AS(
      evaluate_single_head(net.weights, net.spec, classes, {t1, stray}),
      std::out_of_range);
}

TEST_CASE("bwt: hand-worked three-task example gives -0.1") {
  std::vector<std::vector<double>> r{
      {0.8}, {0.6, 0.7}, {0.6, 0.7, 0.9}};
  CHECK(compute_bwt(r) == doctest::Approx(-0.1).epsilon(1e-15));
}

TEST_CASE("bwt: frozen snapshots give exactly zero") {
  std::vector<std::vector<double>> r{
      {0.5}, {0.5, 0.7}, {0.5, 0.7, 0.2}};
  CHECK(compute_bwt(r) == 0.0);
}

TEST_CASE("bwt: uniform +0.05 improvement") {
  std::vector<std::vector<double>> r{
      {0.5}, {0.55, 0.6}, {0.55, 0.65, 0.4}};
  CHECK(compute_bwt(r) == doctest::Approx(0.05).epsilon(1e-12));
}

TEST_CASE("bwt: fewer than two tasks is an error") {
  std::vector<std::vector<double>> r{{0.5}};
  CHECK_THROWS_AS(compute_bwt(r), std::invalid_argument);
}

TEST_CASE("confusion_matrix: hand tallies and error paths") {
  std::vector<int> preds{0, 0, 2};
  std::vector<int> labels{0, 1, 2};
  auto counts = confusion_matrix(preds, labels, 3);
  CHECK(counts[0][0] == 1);
  CHECK(counts[1][0] == 1);
  CHECK(counts[2][2] == 1);
  CHECK(counts[1][1] == 0);

  // all predictions = class 0: single nonzero column
  std::vector<int> zeros{0, 0, 0};
  auto col = confusion_matrix(zeros, labels, 3);
  for (size_t y = 0; y < 3; ++y)
    for (size_t p = 1; p < 3; ++p) CHECK(col[y][p] == 0);

  std::vector<int> bad{3};
  std::vector<int> one{0};
  CHECK_THROWS_AS(confusion_matrix(bad, one, 3), std::out_of_range);

  auto norm = confusion_row_normalized(counts);
  for (size_t y = 0; y < 3; ++y) {
    double sum = 0.0;
    for (double v : norm[y]) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("run_probe: separable probe task reaches accuracy 1.0") {
  NetworkSpec spec;
  spec.input_dim = 4;
  spec.hidden = {{8, Activation::relu}};
  spec.output_classes = 0;
  WeightState w = initial_weights(spec, 3);

  // three classes with distinct means and zero within-class noise
  TaskSplit probe;
  auto make = [&](TaskDataset& d, int shots) {
    d.ways = 3;
    d.shots = shots;
    for (long c = 0; c < 3; ++c)
      for (int k = 0; k < shots; ++k) {
        LabeledExample e;
        e.class_id = 100 + c;
        e.features.assign(4, 0.0);
        e.features[static_cast<size_t>(c)] = 3.0;
        d.examples.push_back(std::move(e));
      }
  };
  make(probe.train, 5);
  make(probe.test, 10);

  ProbeConfig cfg;
  cfg.epochs = 300;
  double acc = run_probe(w, spec, probe, cfg, {});
  CHECK(acc == 1.0);

  // determinism: the same probe twice gives the identical accuracy
  CHECK(run_probe(w, spec, probe, cfg, {}) == acc);

  // leakage: a forbidden id inside the probe is rejected
  CHECK_THROWS_AS(run_probe(w, spec, probe, cfg, {100}), std::runtime_error);

  // the full fine-tune recipe also separates it
  ProbeConfig full = cfg;
  full.full_finetune = true;
  full.epochs = 200;
  CHECK(run_probe(w, spec, probe, full, {}) == 1.0);
}

TEST_CASE("run_probe: run state serialization identical before and after") {
  NetworkSpec spec;
  spec.input_dim = 4;
  spec.hidden = {{6, Activation::relu}};
  spec.output_classes = 3;
  WeightState w = initial_weights(spec, 21);

  CheckpointData snap;
  snap.spec = spec;
  snap.values = w.values;
  const std::string before = checkpoint_to_json(snap);

  TaskSplit probe;
  for (long c = 0; c < 2; ++c)
    for (int k = 0; k < 4; ++k) {
      LabeledExample e;
      e.class_id = 500 + c;
      e.features.assign(4, static_cast<double>(c));
      probe.train.examples.push_back(e);
      probe.test.examples.push_back(e);
    }
  probe.train.ways = probe.test.ways = 2;
  ProbeConfig cfg;
  cfg.epochs = 20;
  run_probe(w, spec, probe, cfg, {});

  snap.values = w.values;
  CHECK(checkpoint_to_json(snap) == before);
}

TEST_CASE("fisher_trace_report: embedding layer count and delegation") {
  RandomInstance inst = random_instance(900);
  std::vector<double> report =
      fisher_trace_report(inst.weights, inst.spec, inst.x, inst.y);
  CHECK(report.size() == inst.weights.embedding_layer_count());
  for (double v : report) CHECK(v >= 0.0);

  ImportanceMap f = estimate_fisher(inst.weights, inst.spec, inst.x, inst.y);
  std::vector<double> all = layer_means(f, inst.weights);
  for (size_t l = 0; l < report.size(); ++l) CHECK(report[l] == all[l]);
}
