#include "fscl/taskgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "fscl/textio.hpp"

namespace fscl {

namespace {

// Probe classes live far above any id the stream can produce, so NC probes
// are disjoint from the stream by construction.
constexpr long kProbeIdBase = 1000000000L;

}  // namespace

std::string to_string(StreamMode m) {
  return m == StreamMode::new_class ? "new_class" : "new_instance";
}

StreamMode stream_mode_from_string(const std::string& s) {
  if (s == "new_class" || s == "new-class") return StreamMode::new_class;
  if (s == "new_instance" || s == "new-instance")
    return StreamMode::new_instance;
  throw std::invalid_argument("unknown stream mode '" + s + "'");
}

void StreamConfig::validate() const {
  if (tasks < 1) throw std::invalid_argument("stream: T must be >= 1");
  if (ways < 1) throw std::invalid_argument("stream: N must be >= 1");
  if (shots < 1) throw std::invalid_argument("stream: K must be >= 1");
  if (input_dim < 1) throw std::invalid_argument("stream: input_dim must be >= 1");
  if (shift < 0.0 || shift > 1.0)
    throw std::invalid_argument("stream: shift must be in [0,1]");
  if (class_spread <= 0.0)
    throw std::invalid_argument("stream: class_spread must be > 0");
  if (within_class_noise < 0.0)
    throw std::invalid_argument("stream: within_class_noise must be >= 0");
  if (test_shots < 1) throw std::invalid_argument("stream: test_shots must be >= 1");
  if (pool_classes < 1)
    throw std::invalid_argument("stream: pool_classes must be >= 1");
}

std::vector<long> TaskStream::all_class_ids() const {
  std::vector<long> ids;
  for (const auto& task : task_classes)
    for (const auto& c : task) ids.push_back(c.class_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

namespace {

std::vector<double> draw_mean_support(const StreamConfig& cfg, Rng& rng) {
  std::vector<double> m(cfg.input_dim);
  for (double& v : m) v = cfg.class_spread * rng.next_normal();
  return m;
}

// Query-region class mean: blend of a support-region draw and a draw from a
// region displaced by 2*class_spread along the stream direction.
std::vector<double> draw_mean_query(const StreamConfig& cfg,
                                    const std::vector<double>& direction,
                                    Rng& rng) {
  std::vector<double> g1(cfg.input_dim), g2(cfg.input_dim);
  for (double& v : g1) v = cfg.class_spread * rng.next_normal();
  for (int i = 0; i < cfg.input_dim; ++i)
    g2[i] = 2.0 * cfg.class_spread * direction[i] +
            cfg.class_spread * rng.next_normal();
  std::vector<double> m(cfg.input_dim);
  for (int i = 0; i < cfg.input_dim; ++i)
    m[i] = (1.0 - cfg.shift) * g1[i] + cfg.shift * g2[i];
  return m;
}

std::vector<double> draw_direction(const StreamConfig& cfg) {
  Rng rng(mix_seed(cfg.seed, "shift.direction"));
  std::vector<double> u(cfg.input_dim);
  double norm2 = 0.0;
  for (double& v : u) {
    v = rng.next_normal();
    norm2 += v * v;
  }
  double inv = 1.0 / std::sqrt(norm2);
  for (double& v : u) v *= inv;
  return u;
}

ClassSampler make_query_class(const StreamConfig& cfg,
                              const std::vector<double>& direction,
                              uint64_t t_tag, int j, long class_id) {
  ClassSampler c;
  c.class_id = class_id;
  c.noise = cfg.within_class_noise;
  Rng rng(mix_seed(cfg.seed, "query.class", t_tag, static_cast<uint64_t>(j)));
  c.mean = draw_mean_query(cfg, direction, rng);
  return c;
}

LabeledExample draw_example(const ClassSampler& c, int input_dim, Rng& rng,
                            Origin origin) {
  LabeledExample e;
  e.class_id = c.class_id;
  e.origin = origin;
  if (c.parametric()) {
    e.features.resize(input_dim);
    for (int i = 0; i < input_dim; ++i)
      e.features[i] = c.mean[i] + c.noise * rng.next_normal();
  } else {
    size_t idx = static_cast<size_t>(rng.next_below(c.fixed_examples.size()));
    e.features = c.fixed_examples[idx];
  }
  return e;
}

TaskDataset sample_episode(const std::vector<const ClassSampler*>& classes,
                           int input_dim, int shots, Rng& rng, Origin origin,
                           int task_index) {
  TaskDataset d;
  d.task_index = task_index;
  d.ways = static_cast<int>(classes.size());
  d.shots = shots;
  d.examples.reserve(classes.size() * static_cast<size_t>(shots));
  for (const ClassSampler* c : classes)
    for (int k = 0; k < shots; ++k)
      d.examples.push_back(draw_example(*c, input_dim, rng, origin));
  return d;
}

// Train/test episode over fixed-example classes: a deterministic shuffle of
// each class's stored examples split into shots + test_shots, so the two
// splits never overlap.
TaskSplit split_fixed_episode(const std::vector<const ClassSampler*>& classes,
                              int shots, int test_shots, Rng& rng,
                              Origin origin) {
  TaskSplit out;
  out.train.ways = out.test.ways = static_cast<int>(classes.size());
  out.train.shots = shots;
  out.test.shots = test_shots;
  for (const ClassSampler* c : classes) {
    const size_t need = static_cast<size_t>(shots + test_shots);
    if (c->fixed_examples.size() < need)
      throw std::runtime_error(
          "class " + std::to_string(c->class_id) + " has only " +
          std::to_string(c->fixed_examples.size()) + " examples, need " +
          std::to_string(need));
    std::vector<size_t> idx(c->fixed_examples.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    rng.shuffle(idx);
    for (int k = 0; k < shots; ++k) {
      LabeledExample e{c->fixed_examples[idx[k]], c->class_id, origin};
      out.train.examples.push_back(std::move(e));
    }
    for (int k = 0; k < test_shots; ++k) {
      LabeledExample e{c->fixed_examples[idx[shots + k]], c->class_id, origin};
      out.test.examples.push_back(std::move(e));
    }
  }
  return out;
}

}  // namespace

std::pair<SupportPool, TaskStream> make_generator(const StreamConfig& config) {
  config.validate();

  SupportPool pool;
  pool.input_dim = config.input_dim;
  pool.classes.reserve(static_cast<size_t>(config.pool_classes));
  for (int c = 0; c < config.pool_classes; ++c) {
    ClassSampler s;
    s.class_id = c;
    s.noise = config.within_class_noise;
    Rng rng(mix_seed(config.seed, "pool.class", static_cast<uint64_t>(c)));
    s.mean = draw_mean_support(config, rng);
    pool.classes.push_back(std::move(s));
  }

  TaskStream stream;
  stream.config = config;
  stream.shift_direction = draw_direction(config);
  stream.task_classes.resize(static_cast<size_t>(config.tasks));
  const long query_base = config.pool_classes;
  if (config.mode == StreamMode::new_class) {
    for (int t = 1; t <= config.tasks; ++t) {
      auto& task = stream.task_classes[static_cast<size_t>(t - 1)];
      for (int j = 0; j < config.ways; ++j)
        task.push_back(make_query_class(
            config, stream.shift_direction, static_cast<uint64_t>(t), j,
            query_base + static_cast<long>(t - 1) * config.ways + j));
    }
  } else {
    std::vector<ClassSampler> shared;
    for (int j = 0; j < config.ways; ++j)
      shared.push_back(make_query_class(config, stream.shift_direction, 0, j,
                                        query_base + j));
    for (auto& task : stream.task_classes) task = shared;
  }
  return {std::move(pool), std::move(stream)};
}

TaskSplit sample_task(const TaskStream& stream, int t) {
  const StreamConfig& cfg = stream.config;
  if (t < 1 || t > cfg.tasks)
    throw std::out_of_range("task index " + std::to_string(t) +
                            " outside [1, " + std::to_string(cfg.tasks) + "]");
  const auto& owned = stream.task_classes[static_cast<size_t>(t - 1)];
  std::vector<const ClassSampler*> classes;
  for (const auto& c : owned) classes.push_back(&c);

  TaskSplit out;
  Rng train_rng(mix_seed(cfg.seed, "task.train", static_cast<uint64_t>(t)));
  out.train = sample_episode(classes, cfg.input_dim, cfg.shots, train_rng,
                             Origin::query, t);
  Rng test_rng(mix_seed(cfg.seed, "task.test", static_cast<uint64_t>(t)));
  out.test = sample_episode(classes, cfg.input_dim, cfg.test_shots, test_rng,
                            Origin::query, t);
  return out;
}

TaskSplit sample_probe_task(ProbeSource source, const TaskStream& stream,
                            const SupportPool& pool, int ways, int shots,
                            int test_shots, uint64_t probe_seed) {
  const StreamConfig& cfg = stream.config;
  if (ways < 1 || shots < 1 || test_shots < 1)
    throw std::invalid_argument("probe: ways/shots/test_shots must be >= 1");

  if (source == ProbeSource::novel_query) {
    std::vector<ClassSampler> owned;
    for (int j = 0; j < ways; ++j) {
      ClassSampler c;
      c.class_id = kProbeIdBase +
                   static_cast<long>(probe_seed % 1000000ULL) * ways + j;
      c.noise = cfg.within_class_noise;
      Rng rng(mix_seed(cfg.seed, "probe.nc.class", probe_seed,
                       static_cast<uint64_t>(j)));
      c.mean = draw_mean_query(cfg, stream.shift_direction, rng);
      owned.push_back(std::move(c));
    }
    std::vector<const ClassSampler*> classes;
    for (const auto& c : owned) classes.push_back(&c);
    TaskSplit out;
    Rng train_rng(mix_seed(cfg.seed, "probe.nc.train", probe_seed));
    out.train = sample_episode(classes, cfg.input_dim, shots, train_rng,
                               Origin::query, 0);
    Rng test_rng(mix_seed(cfg.seed, "probe.nc.test", probe_seed));
    out.test = sample_episode(classes, cfg.input_dim, test_shots, test_rng,
                              Origin::query, 0);
    return out;
  }

  // base_support: pick N distinct pool classes
  if (static_cast<size_t>(ways) > pool.classes.size())
    throw std::runtime_error("probe: class supply exhausted (need " +
                             std::to_string(ways) + " of " +
                             std::to_string(pool.classes.size()) +
                             " pool classes)");
  Rng pick_rng(mix_seed(cfg.seed, "probe.bc.pick", probe_seed));
  std::vector<size_t> order(pool.classes.size());
  std::iota(order.begin(), order.end(), size_t{0});
  pick_rng.shuffle(order);
  std::vector<const ClassSampler*> classes;
  bool any_fixed = false;
  for (int j = 0; j < ways; ++j) {
    classes.push_back(&pool.classes[order[static_cast<size_t>(j)]]);
    any_fixed |= !classes.back()->parametric();
  }
  Rng data_rng(mix_seed(cfg.seed, "probe.bc.data", probe_seed));
  if (any_fixed)
    return split_fixed_episode(classes, shots, test_shots, data_rng,
                               Origin::support);
  TaskSplit out;
  out.train = sample_episode(classes, pool.input_dim, shots, data_rng,
                             Origin::support, 0);
  out.test = sample_episode(classes, pool.input_dim, test_shots, data_rng,
                            Origin::support, 0);
  return out;
}

TaskSplit sample_fresh_batch(const TaskStream& stream, uint64_t probe_seed) {
  const StreamConfig& cfg = stream.config;
  if (cfg.mode != StreamMode::new_instance)
    throw std::logic_error("sample_fresh_batch requires a new_instance stream");
  std::vector<const ClassSampler*> classes;
  for (const auto& c : stream.task_classes.front()) classes.push_back(&c);
  TaskSplit out;
  Rng train_rng(mix_seed(cfg.seed, "batch.fresh.train", probe_seed));
  out.train = sample_episode(classes, cfg.input_dim, cfg.shots, train_rng,
                             Origin::query, 0);
  Rng test_rng(mix_seed(cfg.seed, "batch.fresh.test", probe_seed));
  out.test = sample_episode(classes, cfg.input_dim, cfg.test_shots, test_rng,
                            Origin::query, 0);
  return out;
}

void sample_pool_batch(const SupportPool& pool, Rng& rng, int batch_size,
                       Matrix& x_out, std::vector<int>& y_out) {
  if (pool.classes.empty()) throw std::runtime_error("support pool is empty");
  x_out = Matrix(static_cast<size_t>(batch_size),
                 static_cast<size_t>(pool.input_dim));
  y_out.resize(static_cast<size_t>(batch_size));
  for (int b = 0; b < batch_size; ++b) {
    size_t ci = static_cast<size_t>(rng.next_below(pool.classes.size()));
    LabeledExample e =
        draw_example(pool.classes[ci], pool.input_dim, rng, Origin::support);
    std::copy(e.features.begin(), e.features.end(),
              x_out.row(static_cast<size_t>(b)));
    y_out[static_cast<size_t>(b)] = static_cast<int>(ci);
  }
}

CsvDataset load_csv_dataset(const std::string& path, int expected_dim) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);

  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error(path + ": empty file (missing header)");
  auto header = split(trim(line), ',');
  if (header.empty() || trim(header[0]) != "class_id")
    throw std::runtime_error(path + ":1: unknown header (expected class_id,feat_0,...)");
  const int dim = static_cast<int>(header.size()) - 1;
  if (dim < 1)
    throw std::runtime_error(path + ":1: unknown header (no feature columns)");
  for (int i = 0; i < dim; ++i) {
    std::string expect = "feat_" + std::to_string(i);
    if (trim(header[static_cast<size_t>(i) + 1]) != expect)
      throw std::runtime_error(path + ":1: unknown header (column " +
                               std::to_string(i + 1) + " should be " + expect +
                               ")");
  }
  if (expected_dim > 0 && dim != expected_dim)
    throw std::runtime_error(path + ":1: dataset has " + std::to_string(dim) +
                             " features, expected " +
                             std::to_string(expected_dim));

  CsvDataset out;
  out.pool.input_dim = dim;
  std::vector<long> order;  // class ids by first appearance
  size_t line_no = 1;
  size_t data_rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view sv = trim(line);
    if (sv.empty()) continue;
    auto fields = split(sv, ',');
    if (static_cast<int>(fields.size()) != dim + 1)
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected " + std::to_string(dim + 1) +
                               " fields, got " +
                               std::to_string(fields.size()));
    long cid;
    std::vector<double> feats(static_cast<size_t>(dim));
    try {
      cid = parse_long(trim(fields[0]));
      for (int i = 0; i < dim; ++i)
        feats[static_cast<size_t>(i)] =
            parse_double(trim(fields[static_cast<size_t>(i) + 1]));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " +
                               e.what());
    }
    if (cid < 0)
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": class_id must be non-negative");
    auto it = std::find(order.begin(), order.end(), cid);
    size_t ci;
    if (it == order.end()) {
      ci = order.size();
      order.push_back(cid);
      ClassSampler s;
      s.class_id = cid;
      out.pool.classes.push_back(std::move(s));
    } else {
      ci = static_cast<size_t>(it - order.begin());
    }
    out.pool.classes[ci].fixed_examples.push_back(std::move(feats));
    ++data_rows;
  }
  if (data_rows == 0) throw std::runtime_error(path + ": no data rows");
  for (const auto& c : out.pool.classes)
    out.class_counts.emplace_back(c.class_id,
                                  static_cast<int>(c.fixed_examples.size()));
  return out;
}

namespace {

void append_class(std::ostringstream& os, const ClassSampler& c) {
  os << "class " << c.class_id << " noise " << format_double(c.noise)
     << " mean";
  for (double v : c.mean) os << ' ' << format_double(v);
  os << '\n';
}

}  // namespace

std::string stream_manifest(const SupportPool& pool,
                            const TaskStream& stream) {
  const StreamConfig& cfg = stream.config;
  std::ostringstream os;
  os << "fscl-stream-manifest v1\n";
  os << "seed = " << cfg.seed << '\n';
  os << "mode = " << to_string(cfg.mode) << '\n';
  os << "tasks = " << cfg.tasks << '\n';
  os << "ways = " << cfg.ways << '\n';
  os << "shots = " << cfg.shots << '\n';
  os << "test_shots = " << cfg.test_shots << '\n';
  os << "input_dim = " << cfg.input_dim << '\n';
  os << "shift = " << format_double(cfg.shift) << '\n';
  os << "class_spread = " << format_double(cfg.class_spread) << '\n';
  os << "within_class_noise = " << format_double(cfg.within_class_noise)
     << '\n';
  os << "pool_classes = " << cfg.pool_classes << '\n';
  os << "shift_direction =";
  for (double v : stream.shift_direction) os << ' ' << format_double(v);
  os << '\n';
  os << "[support]\n";
  for (const auto& c : pool.classes) append_class(os, c);
  if (cfg.mode == StreamMode::new_instance) {
    os << "[classes]\n";
    for (const auto& c : stream.task_classes.front()) append_class(os, c);
  } else {
    for (int t = 1; t <= cfg.tasks; ++t) {
      os << "[task " << t << "]\n";
      for (const auto& c : stream.task_classes[static_cast<size_t>(t - 1)])
        append_class(os, c);
    }
  }
  return os.str();
}

void dataset_to_matrix(const std::vector<LabeledExample>& examples,
                       Matrix& x_out, std::vector<long>& ids_out) {
  if (examples.empty()) throw std::invalid_argument("empty dataset");
  const size_t dim = examples.front().features.size();
  x_out = Matrix(examples.size(), dim);
  ids_out.resize(examples.size());
  for (size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].features.size() != dim)
      throw std::invalid_argument("inconsistent feature dimensions");
    std::copy(examples[i].features.begin(), examples[i].features.end(),
              x_out.row(i));
    ids_out[i] = examples[i].class_id;
  }
}

}  // namespace fscl
