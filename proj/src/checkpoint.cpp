#include "fscl/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace fscl {

namespace {

using nlohmann::json;

json spec_to_json(const NetworkSpec& spec) {
  json hidden = json::array();
  for (const auto& h : spec.hidden)
    hidden.push_back({{"width", h.width}, {"act", to_string(h.act)}});
  return json{{"input_dim", spec.input_dim},
              {"hidden", hidden},
              {"output_classes", spec.output_classes},
              {"seed", spec.seed}};
}

NetworkSpec spec_from_json(const json& j) {
  NetworkSpec spec;
  spec.input_dim = j.at("input_dim").get<int>();
  for (const auto& h : j.at("hidden"))
    spec.hidden.push_back({h.at("width").get<int>(),
                           activation_from_string(h.at("act").get<std::string>())});
  spec.output_classes = j.at("output_classes").get<int>();
  spec.seed = j.at("seed").get<uint64_t>();
  spec.validate();
  return spec;
}

json layout_to_json(const std::vector<LayerLayout>& layout) {
  json out = json::array();
  for (const auto& l : layout)
    out.push_back({{"weight_offset", l.weight_offset},
                   {"rows", l.rows},
                   {"cols", l.cols},
                   {"bias_offset", l.bias_offset},
                   {"partition", l.is_output ? "output" : "embedding"}});
  return out;
}

void require_finite_vector(const std::vector<double>& v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x))
      throw std::runtime_error(std::string("checkpoint: non-finite value in ") +
                               what);
}

}  // namespace

std::string checkpoint_to_json(const CheckpointData& data) {
  require_finite_vector(data.values, "values");
  json j;
  j["format"] = "fscl-checkpoint";
  j["version"] = 1;
  j["network"] = spec_to_json(data.spec);
  j["layout"] = layout_to_json(build_layout(data.spec));
  j["values"] = data.values;

  if (data.optimizer) {
    const AdamState& o = *data.optimizer;
    j["optimizer"] = {{"lr", o.cfg.lr},
                      {"beta1", o.cfg.beta1},
                      {"beta2", o.cfg.beta2},
                      {"epsilon", o.cfg.epsilon},
                      {"step_count", o.step_count},
                      {"first_moment", o.first_moment},
                      {"second_moment", o.second_moment}};
  } else {
    j["optimizer"] = nullptr;
  }

  if (data.has_activity) {
    j["activity"] = {{"tasks_seen", data.tasks_seen},
                     {"gate_scale", data.gate_scale},
                     {"penalty_weight", data.penalty_weight},
                     {"cumulative", data.cumulative}};
  } else {
    j["activity"] = nullptr;
  }

  if (data.has_run) {
    json run = {{"method", data.method},
                {"seed", data.seed},
                {"task_index", data.task_index},
                {"class_ids", data.class_ids},
                {"added_per_task", data.added_per_task},
                {"r_diag", data.r_diag}};
    run["anchor"] = data.anchor ? json(*data.anchor) : json(nullptr);
    run["importance"] = data.importance ? json(*data.importance) : json(nullptr);
    j["run"] = run;
  } else {
    j["run"] = nullptr;
  }
  return j.dump(2);
}

CheckpointData checkpoint_from_json(const std::string& text) {
  json j = json::parse(text);
  if (j.value("format", "") != "fscl-checkpoint")
    throw std::runtime_error("not an fscl checkpoint");
  CheckpointData data;
  data.spec = spec_from_json(j.at("network"));
  data.values = j.at("values").get<std::vector<double>>();

  // cross-check the recorded layout against the derived one
  std::vector<LayerLayout> layout = build_layout(data.spec);
  const json& jl = j.at("layout");
  if (jl.size() != layout.size())
    throw std::runtime_error("checkpoint layout does not match the spec");
  for (size_t i = 0; i < layout.size(); ++i) {
    if (jl[i].at("weight_offset").get<size_t>() != layout[i].weight_offset ||
        jl[i].at("rows").get<size_t>() != layout[i].rows ||
        jl[i].at("cols").get<size_t>() != layout[i].cols ||
        jl[i].at("bias_offset").get<size_t>() != layout[i].bias_offset)
      throw std::runtime_error("checkpoint layout does not match the spec");
  }

  if (!j.at("optimizer").is_null()) {
    const json& jo = j.at("optimizer");
    AdamState o;
    o.cfg.lr = jo.at("lr").get<double>();
    o.cfg.beta1 = jo.at("beta1").get<double>();
    o.cfg.beta2 = jo.at("beta2").get<double>();
    o.cfg.epsilon = jo.at("epsilon").get<double>();
    o.step_count = jo.at("step_count").get<long>();
    o.first_moment = jo.at("first_moment").get<std::vector<double>>();
    o.second_moment = jo.at("second_moment").get<std::vector<double>>();
    data.optimizer = std::move(o);
  }

  if (!j.at("activity").is_null()) {
    const json& ja = j.at("activity");
    data.has_activity = true;
    data.tasks_seen = ja.at("tasks_seen").get<int>();
    data.gate_scale = ja.at("gate_scale").get<double>();
    data.penalty_weight = ja.at("penalty_weight").get<double>();
    data.cumulative = ja.at("cumulative").get<std::vector<double>>();
  }

  if (!j.at("run").is_null()) {
    const json& jr = j.at("run");
    data.has_run = true;
    data.method = jr.at("method").get<std::string>();
    data.seed = jr.at("seed").get<uint64_t>();
    data.task_index = jr.at("task_index").get<int>();
    data.class_ids = jr.at("class_ids").get<std::vector<long>>();
    data.added_per_task = jr.at("added_per_task").get<std::vector<int>>();
    data.r_diag = jr.at("r_diag").get<std::vector<double>>();
    if (!jr.at("anchor").is_null())
      data.anchor = jr.at("anchor").get<std::vector<double>>();
    if (!jr.at("importance").is_null())
      data.importance = jr.at("importance").get<std::vector<double>>();
  }
  return data;
}

void save_checkpoint(const std::string& path, const CheckpointData& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << checkpoint_to_json(data);
  out << '\n';
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return checkpoint_from_json(text);
}

WeightState weights_from_checkpoint(const CheckpointData& data) {
  WeightState w = zero_weights(data.spec);
  if (data.values.size() != w.size())
    throw std::runtime_error("checkpoint values length " +
                             std::to_string(data.values.size()) +
                             " does not match the spec's " +
                             std::to_string(w.size()));
  w.values = data.values;
  return w;
}

}  // namespace fscl
