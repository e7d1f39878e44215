#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fscl/baselines.hpp"
#include "helpers.hpp"

using namespace fscl;
using namespace fscl::test;

namespace {

StreamConfig mini_stream(uint64_t seed, int tasks = 3) {
  StreamConfig cfg;
  cfg.tasks = tasks;
  cfg.ways = 3;
  cfg.shots = 3;
  cfg.input_dim = 6;
  cfg.test_shots = 10;
  cfg.pool_classes = 10;
  cfg.within_class_noise = 0.6;
  cfg.seed = seed;
  return cfg;
}

NetworkSpec mini_spec() {
  NetworkSpec spec;
  spec.input_dim = 6;
  spec.hidden = {{10, Activation::relu}, {8, Activation::relu}};
  spec.output_classes = 0;
  return spec;
}

MethodConfig fast_method(Method m) {
  MethodConfig cfg;
  cfg.method = m;
  cfg.epochs = 25;
  cfg.batch_size = 9;
  return cfg;
}

}  // namespace

TEST_CASE("JT, MR and ST coincide bit-exactly at t=1") {
  StreamConfig scfg = mini_stream(1);
  auto [pool, stream] = make_generator(scfg);
  NetworkSpec spec = mini_spec();
  WeightState pre = initial_weights(spec, 77);

  auto one_step = [&](Method m) {
    MethodConfig cfg = fast_method(m);
    BaselineState state = make_baseline_state(spec, pre, cfg);
    baseline_task_step(state, sample_task(stream, 1), cfg, 9);
    return state.weights.values;
  };
  auto jt = one_step(Method::jt);
  auto mr = one_step(Method::mr);
  auto st = one_step(Method::st);
  CHECK(jt == mr);
  CHECK(mr == st);
}

TEST_CASE("ST never consults the replay buffer") {
  StreamConfig scfg = mini_stream(2);
  auto [pool, stream] = make_generator(scfg);
  MethodConfig cfg = fast_method(Method::st);
  BaselineState state = make_baseline_state(mini_spec(),
                                            initial_weights(mini_spec(), 3),
                                            cfg);
  for (int t = 1; t <= 3; ++t)
    baseline_task_step(state, sample_task(stream, t), cfg, 4);
  CHECK(state.replay.size() == 0);
}

TEST_CASE("MR buffer holds exactly the union of training sets") {
  StreamConfig scfg = mini_stream(3);
  auto [pool, stream] = make_generator(scfg);
  MethodConfig cfg = fast_method(Method::mr);
  BaselineState state = make_baseline_state(mini_spec(),
                                            initial_weights(mini_spec(), 5),
                                            cfg);
  for (int t = 1; t <= 3; ++t) {
    baseline_task_step(state, sample_task(stream, t), cfg, 4);
    CHECK(state.replay.size() ==
          static_cast<size_t>(t * scfg.ways * scfg.shots));
  }
  // insertion order stable: tags are non-decreasing task indices
  const auto& tags = state.replay.task_of_origin();
  for (size_t i = 1; i < tags.size(); ++i) CHECK(tags[i - 1] <= tags[i]);
}

TEST_CASE("sequential training forgets task 1 (mean over seeds)") {
  double drop_sum = 0.0;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    StreamConfig scfg = mini_stream(100 + seed, 5);
    auto [pool, stream] = make_generator(scfg);
    MethodConfig cfg = fast_method(Method::st);
    cfg.epochs = 60;
    std::vector<MetricsRecord> recs = run_sequential(
        stream, mini_spec(), initial_weights(mini_spec(), seed), cfg, seed);
    drop_sum += recs.front().per_task_accuracy[0] -
                recs.back().per_task_accuracy[0];
  }
  CHECK(drop_sum / 10.0 > 0.0);
}

TEST_CASE("memory replay reaches perfect training accuracy on separable data") {
  // two tasks of well-separated noiseless clusters
  StreamConfig scfg = mini_stream(4, 2);
  scfg.within_class_noise = 0.0;
  scfg.class_spread = 3.0;
  auto [pool, stream] = make_generator(scfg);
  MethodConfig cfg = fast_method(Method::mr);
  cfg.epochs = 400;
  NetworkSpec spec = mini_spec();
  BaselineState state =
      make_baseline_state(spec, initial_weights(spec, 6), cfg);
  for (int t = 1; t <= 2; ++t)
    baseline_task_step(state, sample_task(stream, t), cfg, 2);
  LabeledMatrix data =
      to_labeled_matrix(state.replay.examples(), state.classes);
  Matrix logits = forward(state.weights, state.spec, data.x);
  int correct = 0;
  for (size_t b = 0; b < logits.rows; ++b) {
    size_t best = 0;
    for (size_t c = 1; c < logits.cols; ++c)
      if (logits.at(b, c) > logits.at(b, best)) best = c;
    correct += static_cast<int>(best) == data.y[b];
  }
  CHECK(correct == static_cast<int>(logits.rows));
}

TEST_CASE("regularized replay with zero strength is bit-identical to MR") {
  StreamConfig scfg = mini_stream(5);
  auto [pool, stream] = make_generator(scfg);
  NetworkSpec spec = mini_spec();
  WeightState pre = initial_weights(spec, 9);

  MethodConfig mr = fast_method(Method::mr);
  MethodConfig cp = fast_method(Method::cp);
  cp.reg_strength = 0.0;

  BaselineState s1 = make_baseline_state(spec, pre, mr);
  BaselineState s2 = make_baseline_state(spec, pre, cp);
  for (int t = 1; t <= 3; ++t) {
    baseline_task_step(s1, sample_task(stream, t), mr, 12);
    baseline_task_step(s2, sample_task(stream, t), cp, 12);
  }
  CHECK(s1.weights.values == s2.weights.values);
}

TEST_CASE("huge constant penalty pins embedding weights to the anchor") {
  StreamConfig scfg = mini_stream(6, 2);
  auto [pool, stream] = make_generator(scfg);
  NetworkSpec spec = mini_spec();
  WeightState pre = initial_weights(spec, 10);
  MethodConfig cfg = fast_method(Method::cp);
  cfg.reg_strength = 1e9;
  cfg.epochs = 60;

  BaselineState state = make_baseline_state(spec, pre, cfg);
  baseline_task_step(state, sample_task(stream, 1), cfg, 3);
  // anchor during task 1 was the pretrained vector (CP regularizes the
  // embedding scope by default)
  double worst = 0.0;
  for (size_t i = 0; i < state.weights.embedding_params; ++i)
    worst = std::max(worst, std::fabs(state.weights.values[i] - pre.values[i]));
  CHECK(worst < 1e-3);
}

TEST_CASE("importance maps stay non-negative and aligned across a run") {
  for (Method m : {Method::ewc_m, Method::mas_m, Method::si_m}) {
    StreamConfig scfg = mini_stream(7);
    auto [pool, stream] = make_generator(scfg);
    NetworkSpec spec = mini_spec();
    MethodConfig cfg = fast_method(m);
    cfg.reg_strength = 0.5;
    std::vector<MetricsRecord> recs = run_regularized_replay(
        stream, spec, initial_weights(spec, 21), cfg, 3);
    CHECK(recs.size() == 3);
    for (const auto& r : recs) {
      CHECK(r.a_top5 >= r.a_top1);
      for (double acc : r.per_task_accuracy) {
        CHECK(acc >= 0.0);
        CHECK(acc <= 1.0);
      }
    }
  }
}

TEST_CASE("JT trains on the full union and is deterministic") {
  StreamConfig scfg = mini_stream(8);
  auto [pool, stream] = make_generator(scfg);
  NetworkSpec spec = mini_spec();
  WeightState pre = initial_weights(spec, 30);
  MethodConfig cfg = fast_method(Method::jt);

  auto [w1, rec1] = run_joint_training(stream, 3, spec, pre, cfg, 7);
  auto [w2, rec2] = run_joint_training(stream, 3, spec, pre, cfg, 7);
  CHECK(w1.values == w2.values);
  CHECK(rec1.a_top1 == rec2.a_top1);
  CHECK(rec1.per_task_accuracy.size() == 3);

  // the JT step at t consumed all 3*N*K examples
  BaselineState state = make_baseline_state(spec, pre, cfg);
  for (int t = 1; t <= 3; ++t)
    baseline_task_step(state, sample_task(stream, t), cfg, 7);
  CHECK(state.replay.size() ==
        static_cast<size_t>(3 * scfg.ways * scfg.shots));
  CHECK(state.weights.values == w1.values);
}

TEST_CASE("method parsing round-trips") {
  for (Method m : {Method::jt, Method::st, Method::mr, Method::cp,
                   Method::ewc_m, Method::mas_m, Method::si_m, Method::tsc})
    CHECK(method_from_string(to_string(m)) == m);
  CHECK_THROWS_AS(method_from_string("nope"), std::invalid_argument);
}
