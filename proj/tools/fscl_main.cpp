// Experiment driver for the few-shot continual learning lab.
//
// Subcommands: pretrain, run, sweep, report, inspect-checkpoint. Every
// config key doubles as a --dotted.flag override; a config file supplies
// the base values and flags win.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fscl/checkpoint.hpp"
#include "fscl/config.hpp"
#include "fscl/experiment.hpp"
#include "fscl/textio.hpp"

namespace fs = std::filesystem;
using namespace fscl;

namespace {

struct KeyFlags {
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
};

void register_config_flags(CLI::App* sub, KeyFlags& kf) {
  for (const auto& key : ConfigMap::known_keys()) {
    auto& slot = kf.values[key];
    kf.options[key] = sub->add_option("--" + key, slot)->group("config keys");
  }
}

void apply_flags(ConfigMap& cm, const KeyFlags& kf) {
  for (const auto& [key, opt] : kf.options)
    if (opt->count() > 0) cm.set(key, kf.values.at(key));
}

ConfigMap assemble(const std::string& config_file, const KeyFlags& kf,
                   const std::string& method, const std::string& mode,
                   const std::string& seeds, const std::string& out) {
  ConfigMap cm;
  if (!config_file.empty()) cm.load_file(config_file);
  apply_flags(cm, kf);
  if (!method.empty()) cm.set("method.name", method);
  if (!mode.empty()) cm.set("stream.mode", mode);
  if (!seeds.empty()) cm.set("run.seeds", seeds);
  if (!out.empty()) cm.set("run.out_dir", out);
  return cm;
}

int cmd_pretrain(const ConfigMap& cm) {
  RunConfig config = cm.materialize();
  fs::path out_dir = resolve_out_dir(config.out_dir);
  fs::create_directories(out_dir);
  std::ofstream manifest(out_dir / "manifest.txt");
  manifest << cm.manifest();
  for (uint64_t seed : config.seeds) {
    PretrainResult pre = pretrain(config, seed);
    CheckpointData d;
    d.spec = pre.spec;
    d.values = pre.weights.values;
    fs::path path = out_dir / ("pretrain_seed" + std::to_string(seed) + ".json");
    save_checkpoint(path.string(), d);
    std::cout << "wrote " << path.string() << "\n";
  }
  return 0;
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s)
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '.' ||
                          c == '-' || c == '_'
                      ? c
                      : '_');
  return out;
}

int cmd_sweep(ConfigMap base, const std::map<std::string, std::string>& axes) {
  // cross product over the swept keys, one run_experiment per variant
  struct Axis {
    std::string key;
    std::vector<std::string> values;
  };
  std::vector<Axis> grid;
  for (const auto& [key, list] : axes) {
    Axis a{key, {}};
    for (auto part : split(list, ','))
      a.values.emplace_back(trim(part));
    if (a.values.empty())
      throw std::invalid_argument("sweep: empty value list for " + key);
    grid.push_back(std::move(a));
  }
  if (grid.empty()) throw std::invalid_argument("sweep: no axes given");

  RunConfig resolved = base.materialize();
  fs::path root = resolve_out_dir(resolved.out_dir);
  fs::create_directories(root);

  std::vector<std::map<std::string, std::string>> combos{{}};
  for (const auto& axis : grid) {
    std::vector<std::map<std::string, std::string>> next;
    for (const auto& combo : combos)
      for (const auto& v : axis.values) {
        auto c = combo;
        c[axis.key] = v;
        next.push_back(std::move(c));
      }
    combos = std::move(next);
  }

  std::string merged;
  bool first = true;
  for (const auto& combo : combos) {
    ConfigMap cm = base;
    std::string label = cm.get("method.name") + "(";
    bool first_kv = true;
    for (const auto& [key, v] : combo) {
      cm.set(key, v);
      // short axis name: text after the last dot
      std::string short_key = key.substr(key.rfind('.') + 1);
      label += (first_kv ? "" : ",") + short_key + "=" + v;
      first_kv = false;
    }
    label += ")";
    fs::path variant_dir = root / "variants" / sanitize(label);
    cm.set("run.out_dir", variant_dir.string());
    run_experiment(cm, label);
    std::ifstream in(variant_dir / "metrics.csv");
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
      if (header) {
        if (first) merged += line + "\n";
        header = false;
        continue;
      }
      merged += line + "\n";
    }
    first = false;
    std::cout << "variant " << label << " done\n";
  }
  std::ofstream out(root / "metrics.csv");
  out << merged;
  std::cout << "sweep metrics: " << (root / "metrics.csv").string() << "\n";
  return 0;
}

int cmd_inspect(const std::string& path) {
  CheckpointData d = load_checkpoint(path);
  WeightState w = weights_from_checkpoint(d);
  std::cout << "checkpoint: " << path << "\n";
  std::cout << "network: input_dim=" << d.spec.input_dim << " hidden=";
  for (size_t i = 0; i < d.spec.hidden.size(); ++i)
    std::cout << (i ? "," : "") << d.spec.hidden[i].width << ":"
              << to_string(d.spec.hidden[i].act);
  std::cout << " output_classes=" << d.spec.output_classes << "\n";
  std::cout << "parameters: " << w.size() << " (embedding "
            << w.embedding_params << ")\n";
  for (size_t l = 0; l < w.layout.size(); ++l) {
    const auto& ll = w.layout[l];
    double norm = 0.0;
    for (size_t i = ll.weight_offset; i < ll.weight_offset + ll.param_count();
         ++i)
      norm += w.values[i] * w.values[i];
    std::cout << "  layer " << l << (ll.is_output ? " [output]" : " [embed]")
              << " " << ll.rows << "x" << ll.cols
              << " l2=" << format_double(std::sqrt(norm)) << "\n";
  }
  if (d.has_activity) {
    double cmin = 0.0, cmax = 0.0, csum = 0.0;
    if (!d.cumulative.empty()) {
      cmin = cmax = d.cumulative.front();
      for (double v : d.cumulative) {
        cmin = std::min(cmin, v);
        cmax = std::max(cmax, v);
        csum += v;
      }
    }
    std::cout << "activity: tasks_seen=" << d.tasks_seen
              << " m=" << format_double(d.gate_scale)
              << " lambda=" << format_double(d.penalty_weight)
              << " cumulative[min=" << format_double(cmin)
              << " mean=" << format_double(csum / d.cumulative.size())
              << " max=" << format_double(cmax) << "]\n";
  }
  if (d.has_run) {
    std::cout << "run: method=" << d.method << " seed=" << d.seed
              << " task_index=" << d.task_index << " classes="
              << d.class_ids.size() << "\n";
  }
  if (d.optimizer)
    std::cout << "optimizer: step_count=" << d.optimizer->step_count << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"few-shot continual learning lab"};
  app.require_subcommand(1);

  std::string config_file, method, mode, seeds, out;

  auto add_common = [&](CLI::App* sub, KeyFlags& kf) {
    sub->add_option("--config", config_file, "flat key = value config file");
    sub->add_option("--method", method, "jt|st|mr|cp|ewc_m|mas_m|si_m|tsc");
    sub->add_option("--mode", mode, "new-class|new-instance");
    sub->add_option("--seeds", seeds, "e.g. 0..9 or 0,3,7");
    sub->add_option("--out", out, "output directory");
    register_config_flags(sub, kf);
  };

  KeyFlags kf_pre, kf_run, kf_sweep;
  CLI::App* sub_pretrain =
      app.add_subcommand("pretrain", "train the support-pool embedding");
  add_common(sub_pretrain, kf_pre);

  CLI::App* sub_run =
      app.add_subcommand("run", "run one method over the task stream");
  add_common(sub_run, kf_run);

  CLI::App* sub_sweep =
      app.add_subcommand("sweep", "grid sweep over beta/k/lambda/m/shift");
  add_common(sub_sweep, kf_sweep);
  std::string sweep_beta, sweep_k, sweep_lambda, sweep_m, sweep_shift;
  sub_sweep->add_option("--sweep.beta", sweep_beta, "comma list of beta values");
  sub_sweep->add_option("--sweep.k", sweep_k, "comma list of k values");
  sub_sweep->add_option("--sweep.lambda", sweep_lambda,
                        "comma list of lambda values");
  sub_sweep->add_option("--sweep.m", sweep_m, "comma list of m values");
  sub_sweep->add_option("--sweep.shift", sweep_shift,
                        "comma list of shift values");

  CLI::App* sub_report =
      app.add_subcommand("report", "aggregate completed runs into summary.csv");
  std::vector<std::string> report_dirs;
  std::string report_out = "summary.csv";
  sub_report->add_option("dirs", report_dirs, "run directories")->required();
  sub_report->add_option("--out", report_out, "output CSV path");

  CLI::App* sub_inspect =
      app.add_subcommand("inspect-checkpoint", "print a checkpoint summary");
  std::string inspect_path;
  sub_inspect->add_option("file", inspect_path, "checkpoint file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sub_pretrain->parsed())
      return cmd_pretrain(assemble(config_file, kf_pre, method, mode, seeds, out));
    if (sub_run->parsed()) {
      run_experiment(assemble(config_file, kf_run, method, mode, seeds, out));
      return 0;
    }
    if (sub_sweep->parsed()) {
      std::map<std::string, std::string> axes;
      if (!sweep_beta.empty()) axes["tsc.beta"] = sweep_beta;
      if (!sweep_k.empty()) axes["tsc.k"] = sweep_k;
      if (!sweep_lambda.empty()) axes["tsc.lambda"] = sweep_lambda;
      if (!sweep_m.empty()) axes["tsc.m"] = sweep_m;
      if (!sweep_shift.empty()) axes["stream.shift"] = sweep_shift;
      return cmd_sweep(assemble(config_file, kf_sweep, method, mode, seeds, out),
                       axes);
    }
    if (sub_report->parsed()) {
      emit_report(report_dirs, report_out);
      std::cout << "wrote " << report_out << "\n";
      return 0;
    }
    if (sub_inspect->parsed()) return cmd_inspect(inspect_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
