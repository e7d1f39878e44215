#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fscl/baselines.hpp"
#include "fscl/consolidation.hpp"
#include "fscl/evalkit.hpp"
#include "fscl/network.hpp"
#include "fscl/taskgen.hpp"

namespace fscl {

struct PretrainConfig {
  int epochs = 10;
  int episodes_per_epoch = 100;
  int batch_size = 50;
};

// Fully-resolved experiment configuration. Every knob has a default; the
// manifest echoes the complete resolved key set so a run is reproducible
// from its artifacts alone.
struct RunConfig {
  // network
  int input_dim = 16;
  std::vector<int> hidden_widths{64, 64};
  std::vector<Activation> activations{Activation::relu, Activation::relu};

  // stream (seed filled per run seed)
  StreamConfig stream;

  TscConfig tsc;
  MethodConfig method;
  AdamConfig adam;
  PretrainConfig pretrain;
  ProbeConfig probe;

  std::string csv_path;  // optional CSV support pool substitution

  // run control
  std::string out_dir;
  std::vector<uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  int checkpoint_every = 1;  // tasks between checkpoints; 0 disables
  bool record_wall_time = false;
  std::string resume_from;
  int threads = 1;
  bool fisher_report = true;

  NetworkSpec base_network(uint64_t seed) const;
  StreamConfig stream_config(uint64_t seed) const;
};

// Flat `key = value` store with dotted section prefixes. Unknown keys are
// rejected; values are validated when the typed RunConfig is materialized.
class ConfigMap {
 public:
  ConfigMap();  // all keys at their defaults

  void load_file(const std::string& path);
  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  bool has_key(const std::string& key) const;

  // every key in sorted order, resolved value included
  std::string manifest() const;

  RunConfig materialize() const;

  static const std::vector<std::string>& known_keys();

 private:
  std::map<std::string, std::string> values_;
};

std::vector<uint64_t> parse_seed_list(const std::string& text);

}  // namespace fscl
