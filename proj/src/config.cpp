#include "fscl/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "fscl/textio.hpp"

namespace fscl {

NetworkSpec RunConfig::base_network(uint64_t seed) const {
  NetworkSpec spec;
  spec.input_dim = input_dim;
  for (size_t i = 0; i < hidden_widths.size(); ++i)
    spec.hidden.push_back({hidden_widths[i], activations[i]});
  spec.output_classes = 0;
  spec.seed = seed;
  return spec;
}

StreamConfig RunConfig::stream_config(uint64_t seed) const {
  StreamConfig s = stream;
  s.input_dim = input_dim;
  s.seed = seed;
  return s;
}

namespace {

struct KeySpec {
  const char* key;
  const char* default_value;
};

// The full key registry. Defaults follow the canonical benchmark: ten
// 5-way 5-shot tasks, shift 0.3, a 2x64 relu backbone, Adam(5e-4, 0.5,
// 0.999), beta=0.01, k=100, lambda=1e-10, m=1, 500-epoch head budget.
const KeySpec kKeys[] = {
    {"network.input_dim", "16"},
    {"network.hidden_widths", "64,64"},
    {"network.activations", "relu"},
    {"stream.tasks", "10"},
    {"stream.ways", "5"},
    {"stream.shots", "5"},
    {"stream.mode", "new_class"},
    {"stream.shift", "0.3"},
    {"stream.class_spread", "1"},
    {"stream.within_class_noise", "0.9"},
    {"stream.test_shots", "50"},
    {"stream.pool_classes", "100"},
    {"tsc.beta", "0.01"},
    {"tsc.k", "100"},
    {"tsc.lambda", "1e-10"},
    {"tsc.m", "1"},
    {"tsc.gate_mode", "stc"},
    {"tsc.joint_step2", "true"},
    {"tsc.head_max_epochs", "500"},
    {"tsc.head_plateau_tol", "0.0001"},
    {"tsc.batch_size", "25"},
    {"tsc.head_init_scale", "0"},
    {"method.name", "tsc"},
    {"method.reg_strength", "0.1"},
    {"method.epochs", "500"},
    {"method.plateau_tol", "0.0001"},
    {"method.batch_size", "25"},
    {"method.si_xi", "0.01"},
    {"method.reg_full_scope", "false"},
    {"adam.lr", "0.0005"},
    {"adam.beta1", "0.5"},
    {"adam.beta2", "0.999"},
    {"adam.epsilon", "1e-08"},
    {"pretrain.epochs", "10"},
    {"pretrain.episodes_per_epoch", "100"},
    {"pretrain.batch_size", "50"},
    {"probe.enabled", "true"},
    {"probe.count", "8"},
    {"probe.ways", "5"},
    {"probe.shots", "5"},
    {"probe.test_shots", "50"},
    {"probe.epochs", "200"},
    {"probe.full_finetune", "false"},
    {"probe.from", "fast"},
    {"data.csv_path", ""},
    {"run.out_dir", ""},
    {"run.seeds", "0..9"},
    {"run.checkpoint_every", "1"},
    {"run.record_wall_time", "false"},
    {"run.resume_from", ""},
    {"run.threads", "1"},
    {"run.fisher_report", "true"},
};

int to_int(const std::string& key, const std::string& v) {
  try {
    return static_cast<int>(parse_long(trim(v)));
  } catch (const std::exception&) {
    throw std::invalid_argument(key + ": expected an integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    return parse_double(trim(v));
  } catch (const std::exception&) {
    throw std::invalid_argument(key + ": expected a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  std::string t(trim(v));
  if (t == "true" || t == "1") return true;
  if (t == "false" || t == "0") return false;
  throw std::invalid_argument(key + ": expected true/false, got '" + v + "'");
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (auto part : split(v, ','))
    out.push_back(to_int(key, std::string(trim(part))));
  return out;
}

}  // namespace

std::vector<uint64_t> parse_seed_list(const std::string& text) {
  std::vector<uint64_t> seeds;
  for (auto part : split(text, ',')) {
    std::string_view p = trim(part);
    if (p.empty()) continue;
    size_t dots = p.find("..");
    if (dots != std::string_view::npos) {
      uint64_t lo = static_cast<uint64_t>(parse_long(p.substr(0, dots)));
      uint64_t hi = static_cast<uint64_t>(parse_long(p.substr(dots + 2)));
      if (hi < lo)
        throw std::invalid_argument("seed range '" + std::string(p) +
                                    "' is decreasing");
      for (uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
    } else {
      seeds.push_back(static_cast<uint64_t>(parse_long(p)));
    }
  }
  if (seeds.empty()) throw std::invalid_argument("empty seed list");
  return seeds;
}

ConfigMap::ConfigMap() {
  for (const auto& k : kKeys) values_[k.key] = k.default_value;
}

const std::vector<std::string>& ConfigMap::known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& k : kKeys) out.push_back(k.key);
    return out;
  }();
  return keys;
}

void ConfigMap::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view sv = trim(line);
    if (sv.empty() || sv.front() == '#') continue;
    size_t eq = sv.find('=');
    if (eq == std::string_view::npos)
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected `key = value`");
    std::string key(trim(sv.substr(0, eq)));
    std::string value(trim(sv.substr(eq + 1)));
    try {
      set(key, value);
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " +
                               e.what());
    }
  }
}

void ConfigMap::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end())
    throw std::invalid_argument("unknown config key '" + key + "'");
  it->second = value;
}

const std::string& ConfigMap::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end())
    throw std::invalid_argument("unknown config key '" + key + "'");
  return it->second;
}

bool ConfigMap::has_key(const std::string& key) const {
  return values_.count(key) != 0;
}

std::string ConfigMap::manifest() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << " = " << v << '\n';
  return os.str();
}

RunConfig ConfigMap::materialize() const {
  RunConfig c;
  c.input_dim = to_int("network.input_dim", get("network.input_dim"));
  c.hidden_widths =
      to_int_list("network.hidden_widths", get("network.hidden_widths"));
  if (c.hidden_widths.empty())
    throw std::invalid_argument("network.hidden_widths: need at least one");

  c.activations.clear();
  for (auto part : split(get("network.activations"), ','))
    c.activations.push_back(activation_from_string(std::string(trim(part))));
  if (c.activations.size() == 1)
    c.activations.assign(c.hidden_widths.size(), c.activations.front());
  if (c.activations.size() != c.hidden_widths.size())
    throw std::invalid_argument(
        "network.activations: give one activation or one per hidden layer");

  c.stream.tasks = to_int("stream.tasks", get("stream.tasks"));
  c.stream.ways = to_int("stream.ways", get("stream.ways"));
  c.stream.shots = to_int("stream.shots", get("stream.shots"));
  c.stream.mode = stream_mode_from_string(get("stream.mode"));
  c.stream.shift = to_double("stream.shift", get("stream.shift"));
  c.stream.class_spread =
      to_double("stream.class_spread", get("stream.class_spread"));
  c.stream.within_class_noise =
      to_double("stream.within_class_noise", get("stream.within_class_noise"));
  c.stream.test_shots = to_int("stream.test_shots", get("stream.test_shots"));
  c.stream.pool_classes =
      to_int("stream.pool_classes", get("stream.pool_classes"));
  c.stream.input_dim = c.input_dim;
  c.stream.validate();

  c.adam.lr = to_double("adam.lr", get("adam.lr"));
  c.adam.beta1 = to_double("adam.beta1", get("adam.beta1"));
  c.adam.beta2 = to_double("adam.beta2", get("adam.beta2"));
  c.adam.epsilon = to_double("adam.epsilon", get("adam.epsilon"));

  c.tsc.beta = to_double("tsc.beta", get("tsc.beta"));
  c.tsc.k = to_int("tsc.k", get("tsc.k"));
  c.tsc.lambda = to_double("tsc.lambda", get("tsc.lambda"));
  c.tsc.gate_scale = to_double("tsc.m", get("tsc.m"));
  {
    const std::string& gm = get("tsc.gate_mode");
    if (gm == "stc")
      c.tsc.gate_mode = GateMode::stc;
    else if (gm == "constant")
      c.tsc.gate_mode = GateMode::constant;
    else
      throw std::invalid_argument("tsc.gate_mode: expected stc|constant");
  }
  c.tsc.joint_step2 = to_bool("tsc.joint_step2", get("tsc.joint_step2"));
  c.tsc.head_max_epochs =
      to_int("tsc.head_max_epochs", get("tsc.head_max_epochs"));
  c.tsc.head_plateau_tol =
      to_double("tsc.head_plateau_tol", get("tsc.head_plateau_tol"));
  c.tsc.batch_size = to_int("tsc.batch_size", get("tsc.batch_size"));
  c.tsc.head_init_scale =
      to_double("tsc.head_init_scale", get("tsc.head_init_scale"));
  c.tsc.adam = c.adam;
  c.tsc.validate();

  c.method.method = method_from_string(get("method.name"));
  c.method.reg_strength =
      to_double("method.reg_strength", get("method.reg_strength"));
  c.method.epochs = to_int("method.epochs", get("method.epochs"));
  c.method.plateau_tol =
      to_double("method.plateau_tol", get("method.plateau_tol"));
  c.method.batch_size = to_int("method.batch_size", get("method.batch_size"));
  c.method.si_xi = to_double("method.si_xi", get("method.si_xi"));
  c.method.reg_full_scope =
      to_bool("method.reg_full_scope", get("method.reg_full_scope"));
  c.method.adam = c.adam;
  c.method.head_init_scale = c.tsc.head_init_scale;
  c.method.validate();

  c.pretrain.epochs = to_int("pretrain.epochs", get("pretrain.epochs"));
  c.pretrain.episodes_per_epoch =
      to_int("pretrain.episodes_per_epoch", get("pretrain.episodes_per_epoch"));
  c.pretrain.batch_size =
      to_int("pretrain.batch_size", get("pretrain.batch_size"));

  c.probe.enabled = to_bool("probe.enabled", get("probe.enabled"));
  c.probe.count = to_int("probe.count", get("probe.count"));
  c.probe.ways = to_int("probe.ways", get("probe.ways"));
  c.probe.shots = to_int("probe.shots", get("probe.shots"));
  c.probe.test_shots = to_int("probe.test_shots", get("probe.test_shots"));
  c.probe.epochs = to_int("probe.epochs", get("probe.epochs"));
  c.probe.full_finetune =
      to_bool("probe.full_finetune", get("probe.full_finetune"));
  {
    const std::string& from = get("probe.from");
    if (from == "slow")
      c.probe.from_slow = true;
    else if (from == "fast")
      c.probe.from_slow = false;
    else
      throw std::invalid_argument("probe.from: expected slow|fast");
  }

  c.csv_path = get("data.csv_path");
  c.out_dir = get("run.out_dir");
  c.seeds = parse_seed_list(get("run.seeds"));
  c.checkpoint_every =
      to_int("run.checkpoint_every", get("run.checkpoint_every"));
  c.record_wall_time =
      to_bool("run.record_wall_time", get("run.record_wall_time"));
  c.resume_from = get("run.resume_from");
  c.threads = to_int("run.threads", get("run.threads"));
  if (c.threads < 1) throw std::invalid_argument("run.threads must be >= 1");
  c.fisher_report = to_bool("run.fisher_report", get("run.fisher_report"));
  return c;
}

}  // namespace fscl
