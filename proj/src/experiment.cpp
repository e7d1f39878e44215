#include "fscl/experiment.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "fscl/textio.hpp"

namespace fscl {

namespace fs = std::filesystem;

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

SupportPool build_pool(const RunConfig& config, uint64_t seed) {
  if (!config.csv_path.empty()) {
    CsvDataset ds = load_csv_dataset(config.csv_path, config.input_dim);
    return std::move(ds.pool);
  }
  return make_generator(config.stream_config(seed)).first;
}

std::string cell(double v) {
  return std::isnan(v) ? std::string() : format_double(v);
}

std::string cell(const std::optional<double>& v) {
  return v.has_value() ? format_double(*v) : std::string();
}

}  // namespace

PretrainResult pretrain(const RunConfig& config, uint64_t seed) {
  SupportPool pool = build_pool(config, seed);
  if (pool.classes.empty()) throw std::runtime_error("pretrain: empty pool");

  NetworkSpec spec = config.base_network(mix_seed(seed, "init"));
  spec.output_classes = static_cast<int>(pool.classes.size());
  WeightState w = initial_weights(spec, spec.seed);

  Rng rng(mix_seed(seed, "pretrain"));
  AdamState opt = AdamState::fresh(w.size(), config.adam);
  GradientVector grad;
  Matrix xb;
  std::vector<int> yb;
  for (int e = 0; e < config.pretrain.epochs; ++e) {
    for (int ep = 0; ep < config.pretrain.episodes_per_epoch; ++ep) {
      sample_pool_batch(pool, rng, config.pretrain.batch_size, xb, yb);
      loss_and_grad(w, spec, xb, yb, GradScope::all, grad);
      adam_step(w, grad, opt);
    }
  }

  // discard the pool classifier head; the embedding is the MT product
  PretrainResult out;
  out.spec = spec;
  out.spec.output_classes = 0;
  out.weights = zero_weights(out.spec);
  std::copy(w.values.begin(), w.values.begin() + w.embedding_params,
            out.weights.values.begin());
  return out;
}

namespace {

struct ProbeRunner {
  const RunConfig* config;
  const TaskStream* stream;
  const SupportPool* pool;
  std::vector<long> forbidden;

  void fill(MetricsRecord& rec, const WeightState& w,
            const NetworkSpec& spec) const {
    if (!config->probe.enabled) return;
    const ProbeConfig& p = config->probe;
    double nc = 0.0, bc = 0.0;
    for (int j = 0; j < p.count; ++j) {
      nc += run_probe(w, spec,
                      sample_probe_task(ProbeSource::novel_query, *stream,
                                        *pool, p.ways, p.shots, p.test_shots,
                                        static_cast<uint64_t>(j)),
                      p, forbidden);
      bc += run_probe(w, spec,
                      sample_probe_task(ProbeSource::base_support, *stream,
                                        *pool, p.ways, p.shots, p.test_shots,
                                        static_cast<uint64_t>(j)),
                      p, forbidden);
    }
    rec.probe_nc = nc / p.count;
    rec.probe_bc = bc / p.count;
  }
};

std::vector<std::vector<double>> seed_r_matrix(const std::vector<double>& diag) {
  // reconstructed history rows: only the diagonal is known (and only the
  // diagonal is ever read back)
  std::vector<std::vector<double>> m;
  for (size_t i = 0; i < diag.size(); ++i) {
    std::vector<double> row(i + 1, kNan);
    row[i] = diag[i];
    m.push_back(std::move(row));
  }
  return m;
}

CheckpointData tsc_checkpoint(const TscState& state, uint64_t seed,
                              const std::string& label,
                              const std::vector<double>& r_diag) {
  CheckpointData d;
  d.spec = state.spec;
  d.values = state.slow.values;
  d.has_activity = true;
  d.cumulative = state.activity.cumulative;
  d.tasks_seen = state.activity.tasks_seen;
  d.gate_scale = state.activity.gate_scale;
  d.penalty_weight = state.activity.penalty_weight;
  d.has_run = true;
  d.method = label;
  d.seed = seed;
  d.task_index = state.task_index;
  d.class_ids = state.classes.ids();
  d.r_diag = r_diag;
  return d;
}

CheckpointData baseline_checkpoint(const BaselineState& state, uint64_t seed,
                                   const std::string& label,
                                   const std::vector<double>& r_diag,
                                   bool regularized) {
  CheckpointData d;
  d.spec = state.spec;
  d.values = state.weights.values;
  d.has_run = true;
  d.method = label;
  d.seed = seed;
  d.task_index = state.task_index;
  d.class_ids = state.classes.ids();
  d.added_per_task = state.added_per_task;
  d.r_diag = r_diag;
  if (regularized) {
    d.anchor = state.anchor;
    d.importance = state.importance;
  }
  return d;
}

}  // namespace

SeedRunResult run_method_for_seed(const RunConfig& config, uint64_t seed,
                                  const PretrainResult& pretrained,
                                  const CheckpointData* resume,
                                  const std::string& checkpoint_dir,
                                  const std::string& method_label) {
  const Method method = config.method.method;
  SeedRunResult out;
  out.seed = seed;
  out.method_label =
      method_label.empty() ? to_string(method) : method_label;

  StreamConfig scfg = config.stream_config(seed);
  auto [pool, stream] = make_generator(scfg);
  out.stream_manifest_text = stream_manifest(pool, stream);

  if (scfg.mode == StreamMode::new_instance) {
    if (method != Method::tsc)
      throw std::invalid_argument(
          "new_instance streams are driven by the tsc method");
    if (resume)
      throw std::invalid_argument(
          "resume is supported for new_class runs only");
    TscState state = make_tsc_state(pretrained.spec, pretrained.weights,
                                    config.tsc);
    out.records =
        run_new_instance(state, stream, config.tsc, config.probe, seed);
    return out;
  }

  ProbeRunner probes{&config, &stream, &pool, stream.all_class_ids()};

  const bool timing = config.record_wall_time;
  auto maybe_checkpoint = [&](int t, const CheckpointData& d) {
    if (checkpoint_dir.empty() || config.checkpoint_every <= 0) return;
    if (t % config.checkpoint_every != 0 && t != scfg.tasks) return;
    fs::path p = fs::path(checkpoint_dir) /
                 ("seed" + std::to_string(seed) + "_task" + std::to_string(t) +
                  ".json");
    save_checkpoint(p.string(), d);
  };

  if (method == Method::tsc) {
    TscState state;
    std::vector<double> r_diag;
    int t0 = 0;
    if (resume) {
      state.spec = resume->spec;
      state.slow = weights_from_checkpoint(*resume);
      state.fast = state.slow;
      state.activity = make_activity_state(state.slow, resume->gate_scale,
                                           resume->penalty_weight);
      if (!resume->has_activity)
        throw std::runtime_error("checkpoint lacks the consolidation state");
      state.activity.cumulative = resume->cumulative;
      state.activity.tasks_seen = resume->tasks_seen;
      recompute_layer_means(state.activity);
      state.classes.set_ids(resume->class_ids);
      state.task_index = resume->task_index;
      r_diag = resume->r_diag;
      t0 = resume->task_index;
    } else {
      state = make_tsc_state(pretrained.spec, pretrained.weights, config.tsc);
      if (config.probe.enabled) {
        MetricsRecord pre;
        pre.task_index = 0;
        pre.a_top1 = kNan;
        pre.a_top5 = kNan;
        probes.fill(pre, state.slow, state.spec);
        out.records.push_back(std::move(pre));
      }
    }

    ReplayBuffer replay;
    for (int i = 1; i <= t0; ++i) replay.extend(sample_task(stream, i).train);
    std::vector<std::vector<double>> r_matrix = seed_r_matrix(r_diag);

    for (int t = t0 + 1; t <= scfg.tasks; ++t) {
      auto t_start = std::chrono::steady_clock::now();
      TaskSplit split = sample_task(stream, t);
      MetricsRecord rec =
          run_tsc_task(state, split, stream, replay, config.tsc, seed);
      r_matrix.push_back(rec.per_task_accuracy);
      r_diag.push_back(rec.per_task_accuracy.back());
      if (t >= 2) rec.bwt = compute_bwt(r_matrix);
      const WeightState& probe_start =
          config.probe.from_slow ? state.slow : state.fast;
      probes.fill(rec, probe_start, state.spec);
      if (config.fisher_report) {
        LabeledMatrix dt =
            to_labeled_matrix(split.train.examples, state.classes);
        rec.fisher_layer_means =
            fisher_trace_report(state.fast, state.spec, dt.x, dt.y);
      }
      if (timing)
        rec.wall_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t_start)
                          .count();
      out.records.push_back(std::move(rec));
      maybe_checkpoint(t, tsc_checkpoint(state, seed, out.method_label, r_diag));
    }
    return out;
  }

  // reference methods share one state/task-step path
  BaselineState state;
  std::vector<double> r_diag;
  int t0 = 0;
  if (resume) {
    state = make_baseline_state(resume->spec, weights_from_checkpoint(*resume),
                                config.method);
    // make_baseline_state treats its weights as the pretrained anchor; put
    // the real artifacts back
    PretrainResult pre = pretrained;
    state.pretrained = pre.weights;
    state.pretrained_spec = pre.spec;
    state.classes.set_ids(resume->class_ids);
    state.added_per_task = resume->added_per_task;
    state.task_index = resume->task_index;
    if (resume->anchor) state.anchor = *resume->anchor;
    if (resume->importance) state.importance = *resume->importance;
    r_diag = resume->r_diag;
    t0 = resume->task_index;
    if (config.method.method != Method::st)
      for (int i = 1; i <= t0; ++i)
        state.replay.extend(sample_task(stream, i).train);
  } else {
    state =
        make_baseline_state(pretrained.spec, pretrained.weights, config.method);
    if (config.probe.enabled) {
      MetricsRecord pre;
      pre.task_index = 0;
      pre.a_top1 = kNan;
      pre.a_top5 = kNan;
      probes.fill(pre, state.weights, state.spec);
      out.records.push_back(std::move(pre));
    }
  }

  std::vector<std::vector<double>> r_matrix = seed_r_matrix(r_diag);
  for (int t = t0 + 1; t <= scfg.tasks; ++t) {
    auto t_start = std::chrono::steady_clock::now();
    TaskSplit split = sample_task(stream, t);
    baseline_task_step(state, split, config.method, seed);
    MetricsRecord rec = evaluate_baseline(state, stream);
    r_matrix.push_back(rec.per_task_accuracy);
    r_diag.push_back(rec.per_task_accuracy.back());
    if (t >= 2) rec.bwt = compute_bwt(r_matrix);
    probes.fill(rec, state.weights, state.spec);
    if (timing)
      rec.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t_start)
                        .count();
    out.records.push_back(std::move(rec));
    maybe_checkpoint(t, baseline_checkpoint(state, seed, out.method_label,
                                            r_diag,
                                            is_regularized(config.method.method)));
  }
  return out;
}

std::string metrics_csv_header(int tasks) {
  std::ostringstream os;
  os << "seed,method,t,a_top1,a_top5,bwt,probe_nc,probe_bc,wall_ms";
  for (int i = 1; i <= tasks; ++i) os << ",r_" << i;
  return os.str();
}

std::string metrics_csv_row(uint64_t seed, const std::string& method,
                            const MetricsRecord& rec, int tasks) {
  std::ostringstream os;
  os << seed << ',' << method << ',' << rec.task_index << ','
     << cell(rec.a_top1) << ',' << cell(rec.a_top5) << ',' << cell(rec.bwt)
     << ',' << cell(rec.probe_nc) << ',' << cell(rec.probe_bc) << ','
     << format_double(rec.wall_ms);
  for (int i = 1; i <= tasks; ++i) {
    os << ',';
    if (i <= static_cast<int>(rec.per_task_accuracy.size()))
      os << format_double(rec.per_task_accuracy[static_cast<size_t>(i - 1)]);
  }
  return os.str();
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_seed_files(const fs::path& dir, const SeedRunResult& r, int tasks) {
  std::ostringstream metrics;
  metrics << metrics_csv_header(tasks) << '\n';
  for (const auto& rec : r.records)
    metrics << metrics_csv_row(r.seed, r.method_label, rec, tasks) << '\n';
  write_text(dir / ("metrics_seed" + std::to_string(r.seed) + ".csv"),
             metrics.str());

  write_text(dir / ("stream_manifest_seed" + std::to_string(r.seed) + ".txt"),
             r.stream_manifest_text);

  std::ostringstream confusion;
  confusion << "t,y_true,y_pred,count,row_frac\n";
  bool any_conf = false;
  for (const auto& rec : r.records) {
    if (!rec.confusion) continue;
    any_conf = true;
    auto norm = confusion_row_normalized(*rec.confusion);
    for (size_t y = 0; y < rec.confusion->size(); ++y)
      for (size_t p = 0; p < (*rec.confusion)[y].size(); ++p)
        confusion << rec.task_index << ',' << y << ',' << p << ','
                  << (*rec.confusion)[y][p] << ',' << format_double(norm[y][p])
                  << '\n';
  }
  if (any_conf)
    write_text(dir / ("confusion_seed" + std::to_string(r.seed) + ".csv"),
               confusion.str());

  std::ostringstream fisher;
  fisher << "t,layer,mean_fisher\n";
  bool any_fisher = false;
  for (const auto& rec : r.records) {
    if (!rec.fisher_layer_means) continue;
    any_fisher = true;
    for (size_t l = 0; l < rec.fisher_layer_means->size(); ++l)
      fisher << rec.task_index << ',' << l << ','
             << format_double((*rec.fisher_layer_means)[l]) << '\n';
  }
  if (any_fisher)
    write_text(dir / ("fisher_seed" + std::to_string(r.seed) + ".csv"),
               fisher.str());
}

}  // namespace

std::string resolve_out_dir(const std::string& configured) {
  if (!configured.empty()) return configured;
  if (const char* env = std::getenv("FSCL_OUT"); env && *env) return env;
  return "fscl_out";
}

void run_experiment(const ConfigMap& cm, const std::string& method_label) {
  RunConfig config = cm.materialize();
  const fs::path out_dir = resolve_out_dir(config.out_dir);
  fs::create_directories(out_dir);
  fs::create_directories(out_dir / "checkpoints");
  write_text(out_dir / "manifest.txt", cm.manifest());

  std::optional<CheckpointData> resume;
  if (!config.resume_from.empty()) {
    resume = load_checkpoint(config.resume_from);
    if (!resume->has_run)
      throw std::runtime_error("checkpoint has no run section, cannot resume");
    config.seeds = {resume->seed};
  }

  struct SeedOutcome {
    bool ok = false;
    SeedRunResult result;
    std::string error;
  };
  std::vector<SeedOutcome> outcomes(config.seeds.size());

  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const size_t idx = next.fetch_add(1);
      if (idx >= config.seeds.size()) return;
      const uint64_t seed = config.seeds[idx];
      try {
        PretrainResult pre = pretrain(config, seed);
        outcomes[idx].result = run_method_for_seed(
            config, seed, pre, resume ? &*resume : nullptr,
            (out_dir / "checkpoints").string(), method_label);
        outcomes[idx].ok = true;
      } catch (const std::exception& e) {
        outcomes[idx].error = e.what();
      }
    }
  };
  const size_t n_threads =
      std::min<size_t>(static_cast<size_t>(config.threads),
                       config.seeds.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (size_t i = 0; i < n_threads; ++i) threads.emplace_back(worker);
    for (auto& th : threads) th.join();
  }

  std::ostringstream merged;
  merged << metrics_csv_header(config.stream.tasks) << '\n';
  std::ostringstream failures;
  failures << "seed,method,error\n";
  bool any_failure = false;
  for (size_t idx = 0; idx < config.seeds.size(); ++idx) {
    const SeedOutcome& o = outcomes[idx];
    if (!o.ok) {
      any_failure = true;
      std::string msg = o.error;
      for (char& c : msg)
        if (c == ',' || c == '\n') c = ';';
      failures << config.seeds[idx] << ',' << to_string(config.method.method)
               << ',' << msg << '\n';
      continue;
    }
    write_seed_files(out_dir, o.result, config.stream.tasks);
    for (const auto& rec : o.result.records)
      merged << metrics_csv_row(o.result.seed, o.result.method_label, rec,
                                config.stream.tasks)
             << '\n';
  }
  write_text(out_dir / "metrics.csv", merged.str());
  if (any_failure) write_text(out_dir / "failures.csv", failures.str());
}

namespace {

struct Accum {
  std::vector<double> vals;
  void add(const std::string& s) {
    if (!s.empty()) vals.push_back(parse_double(s));
  }
  double mean() const {
    double m = 0.0;
    for (double v : vals) m += v;
    return m / static_cast<double>(vals.size());
  }
  double stddev() const {  // sample standard deviation
    if (vals.size() < 2) return 0.0;
    const double m = mean();
    double ss = 0.0;
    for (double v : vals) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(vals.size() - 1));
  }
};

}  // namespace

void emit_report(const std::vector<std::string>& run_dirs,
                 const std::string& out_path) {
  if (run_dirs.empty()) throw std::invalid_argument("report: no run directories");

  std::string header;
  // (method, t) -> column accumulators
  std::map<std::pair<std::string, int>, std::array<Accum, 5>> groups;
  for (const auto& dir : run_dirs) {
    const fs::path file = fs::path(dir) / "metrics.csv";
    std::ifstream in(file);
    if (!in) throw std::runtime_error("report: cannot open " + file.string());
    std::string line;
    if (!std::getline(in, line))
      throw std::runtime_error("report: empty metrics file " + file.string());
    if (header.empty()) {
      header = line;
      if (header.rfind("seed,method,t,a_top1,a_top5,bwt,probe_nc,probe_bc,wall_ms",
                       0) != 0)
        throw std::runtime_error("report: unexpected schema in " +
                                 file.string());
    } else if (line != header) {
      throw std::runtime_error("report: schema mismatch in " + file.string());
    }
    while (std::getline(in, line)) {
      if (trim(line).empty()) continue;
      auto f = split(line, ',');
      if (f.size() < 9)
        throw std::runtime_error("report: short row in " + file.string());
      const std::string method(f[1]);
      const int t = static_cast<int>(parse_long(f[2]));
      auto& acc = groups[{method, t}];
      acc[0].add(std::string(f[3]));  // a_top1
      acc[1].add(std::string(f[4]));  // a_top5
      acc[2].add(std::string(f[5]));  // bwt
      acc[3].add(std::string(f[6]));  // probe_nc
      acc[4].add(std::string(f[7]));  // probe_bc
    }
  }

  std::ostringstream os;
  os << "method,t,n,a_top1_mean,a_top1_std,a_top5_mean,a_top5_std,"
        "bwt_mean,bwt_std,probe_nc_mean,probe_nc_std,probe_bc_mean,"
        "probe_bc_std\n";
  for (const auto& [key, acc] : groups) {
    os << key.first << ',' << key.second << ',' << acc[0].vals.size();
    for (const auto& a : acc) {
      os << ',';
      if (!a.vals.empty())
        os << format_double(a.mean()) << ',' << format_double(a.stddev());
      else
        os << ',';
    }
    os << '\n';
  }
  write_text(out_path, os.str());
}

}  // namespace fscl
