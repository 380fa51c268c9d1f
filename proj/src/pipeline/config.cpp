#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "perfalign/error.hpp"
#include "perfalign/pipeline.hpp"

namespace perfalign {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

/// Visits every configurable field as (dotted key, reference). The same list
/// drives reading, writing and unknown-key detection.
template <typename Cfg, typename V>
void visit_fields(Cfg& c, V&& v) {
  v("paths.corpus", c.corpus);
  v("paths.workdir", c.workdir);
  v("seed", c.seed);
  v("workers", c.workers);

  v("backend.kind", c.backend.kind);
  v("backend.command", c.backend.process.command);
  v("backend.compile_command", c.backend.process.compile_command);
  v("backend.wall_limit_ms", c.backend.process.wall_limit_ms);
  v("backend.memory_limit_mb", c.backend.process.memory_limit_mb);
  v("backend.repeat", c.backend.process.repeat);

  v("model.layers", c.model.layers);
  v("model.heads", c.model.heads);
  v("model.width", c.model.width);
  v("model.context", c.model.context);

  v("split.sft", c.split.sft);
  v("split.reward_of_rest", c.split.reward_of_rest);
  v("split.eval", c.split.eval);
  v("split.held_out_contest", c.split.held_out_contest);

  v("triplets.fastest_pool", c.triplets.fastest_pool);
  v("triplets.slow_fraction", c.triplets.slow_fraction);
  v("triplets.incorrect_fraction", c.triplets.incorrect_fraction);
  v("triplets.draws_per_problem", c.triplets.draws_per_problem);

  v("sft.lr", c.sft.adam.lr);
  v("sft.weight_decay", c.sft.adam.weight_decay);
  v("sft.grad_clip", c.sft.adam.grad_clip);
  v("sft.epochs", c.sft.epochs);
  v("sft.batch_size", c.sft.batch_size);

  v("reward.lr", c.reward.adam.lr);
  v("reward.weight_decay", c.reward.adam.weight_decay);
  v("reward.grad_clip", c.reward.adam.grad_clip);
  v("reward.epochs", c.reward.epochs);
  v("reward.batch_size", c.reward.batch_size);
  v("reward.lambda_max", c.margin.lambda_max);

  v("rlpf.lr", c.rlpf.adam.lr);
  v("rlpf.weight_decay", c.rlpf.adam.weight_decay);
  v("rlpf.grad_clip", c.rlpf.adam.grad_clip);
  v("rlpf.epochs", c.rlpf.epochs);
  v("rlpf.batch_size", c.rlpf.batch_size);
  v("rlpf.kl_coeff", c.rlpf.kl_coeff);
  v("rlpf.clip_eps", c.rlpf.clip_eps);
  v("rlpf.gae_lambda", c.rlpf.gae_lambda);
  v("rlpf.discount", c.rlpf.discount);
  v("rlpf.value_coeff", c.rlpf.value_coeff);
  v("rlpf.ppo_passes", c.rlpf.ppo_passes);
  v("rlpf.temperature", c.rlpf.rollout.temperature);
  v("rlpf.top_k", c.rlpf.rollout.top_k);
  v("rlpf.top_p", c.rlpf.rollout.top_p);
  v("rlpf.max_new_tokens", c.rlpf.rollout.max_new_tokens);

  v("dpa.lr", c.dpa.adam.lr);
  v("dpa.weight_decay", c.dpa.adam.weight_decay);
  v("dpa.grad_clip", c.dpa.adam.grad_clip);
  v("dpa.epochs", c.dpa.epochs);
  v("dpa.batch_size", c.dpa.batch_size);
  v("dpa.beta", c.dpa.beta);

  v("eval.samples", c.eval.samples);
  v("eval.temperature", c.eval.sampling.temperature);
  v("eval.top_p", c.eval.sampling.top_p);
  v("eval.top_k", c.eval.sampling.top_k);
  v("eval.max_new_tokens", c.eval.sampling.max_new_tokens);
  v("eval.ks", c.eval.ks);
  v("eval.models", c.eval.models);

  v("synth.endpoint", c.synth.endpoint);
  v("synth.model", c.synth.model);
  v("synth.credentials_env", c.synth.credentials_env);
  v("synth.fixture", c.synth.fixture);
  v("synth.max_requests", c.synth.max_requests);
  v("synth.retries", c.synth.retries);
  v("synth.include", c.synth.include);
}

json::json_pointer pointer_of(const std::string& key) {
  std::string p;
  std::stringstream ss(key);
  for (std::string part; std::getline(ss, part, '.');) p += "/" + part;
  return json::json_pointer(p);
}

const char* type_name(const json& j) { return j.type_name(); }

template <typename T>
void read_value(const std::string& key, const json& j, T& out) {
  auto fail = [&](const char* expected) {
    throw ConfigError("config field '" + key + "': expected " + expected + ", got " + type_name(j));
  };
  if constexpr (std::is_same_v<T, bool>) {
    if (!j.is_boolean()) fail("a boolean");
    out = j.get<bool>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!j.is_string()) fail("a string");
    out = j.get<std::string>();
  } else if constexpr (std::is_same_v<T, fs::path>) {
    if (!j.is_string()) fail("a path string");
    out = j.get<std::string>();
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!j.is_number()) fail("a number");
    out = j.get<T>();
  } else if constexpr (std::is_unsigned_v<T>) {
    if (!j.is_number_unsigned()) fail("a nonnegative integer");
    out = j.get<T>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!j.is_number_integer()) fail("an integer");
    out = j.get<T>();
  } else if constexpr (std::is_same_v<T, std::vector<int>>) {
    if (!j.is_array()) fail("an array of integers");
    out.clear();
    for (const auto& e : j) {
      if (!e.is_number_integer()) fail("an array of integers");
      out.push_back(e.get<int>());
    }
  } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
    if (!j.is_array()) fail("an array of strings");
    out.clear();
    for (const auto& e : j) {
      if (!e.is_string()) fail("an array of strings");
      out.push_back(e.get<std::string>());
    }
  }
}

template <typename T>
json write_value(const T& v) {
  if constexpr (std::is_same_v<T, fs::path>) {
    return v.string();
  } else {
    return v;
  }
}

void collect_leaves(const json& j, const std::string& prefix, std::vector<std::string>& out) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) collect_leaves(v, prefix.empty() ? k : prefix + "." + k, out);
  } else {
    out.push_back(prefix);
  }
}

std::set<std::string> known_keys() {
  PipelineConfig c;
  std::set<std::string> keys;
  visit_fields(c, [&](const std::string& key, auto&) { keys.insert(key); });
  return keys;
}

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute()) return p;
  return (base / p).lexically_normal();
}

void resolve_paths(json& j, const fs::path& base) {
  for (const char* key : {"paths.corpus", "paths.workdir", "synth.fixture"}) {
    const auto ptr = pointer_of(key);
    if (j.contains(ptr) && j.at(ptr).is_string()) j[ptr] = resolve(j.at(ptr).get<std::string>(), base).string();
  }
}

void validate(const PipelineConfig& c) {
  auto check = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("config field " + what);
  };
  check(!c.corpus.empty(), "'paths.corpus': required");
  check(fs::exists(c.corpus), "'paths.corpus': no such file " + c.corpus.string());
  check(c.synth.fixture.empty() || fs::exists(c.synth.fixture),
        "'synth.fixture': no such file " + c.synth.fixture.string());
  check(c.backend.kind == "minilang" || c.backend.kind == "process", "'backend.kind': must be minilang or process");
  check(c.backend.kind != "process" || !c.backend.process.command.empty(),
        "'backend.command': required for the process backend");
  check(c.workers >= 1, "'workers': must be at least 1");
  check(c.model.layers > 0 && c.model.heads > 0 && c.model.width > 0 && c.model.context > 0,
        "'model': dimensions must be positive");
  check(c.model.width % c.model.heads == 0, "'model.width': must be divisible by model.heads");
  check(c.split.sft > 0.0 && c.split.sft < 1.0, "'split.sft': must lie in (0, 1)");
  check(c.split.reward_of_rest > 0.0 && c.split.reward_of_rest < 1.0, "'split.reward_of_rest': must lie in (0, 1)");
  check(c.split.eval >= 0.0 && c.split.eval < 1.0, "'split.eval': must lie in [0, 1)");
  check(c.triplets.fastest_pool >= 1, "'triplets.fastest_pool': must be at least 1");
  check(c.triplets.slow_fraction > 0.0 && c.triplets.slow_fraction <= 1.0, "'triplets.slow_fraction': (0, 1]");
  check(c.triplets.incorrect_fraction >= 0.0 && c.triplets.incorrect_fraction <= 1.0,
        "'triplets.incorrect_fraction': [0, 1]");
  check(c.sft.epochs >= 0 && c.sft.batch_size > 0, "'sft': epochs >= 0 and batch_size > 0");
  check(c.reward.epochs >= 0 && c.reward.batch_size > 0, "'reward': epochs >= 0 and batch_size > 0");
  check(c.dpa.epochs >= 0 && c.dpa.batch_size > 0 && c.dpa.beta >= 0.0, "'dpa': epochs, batch_size, beta");
  check(c.eval.samples >= 1, "'eval.samples': must be at least 1");
  for (int k : c.eval.ks) check(k >= 1 && k <= c.eval.samples, "'eval.ks': each k must lie in [1, eval.samples]");
  for (const auto& m : c.eval.models) {
    check(m == "sft" || m == "rlpf" || m == "dpa" || m == "base", "'eval.models': unknown model '" + m + "'");
  }
  try {
    c.margin.validate();
    c.rlpf.validate();
    c.eval.sampling.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

}  // namespace

PipelineConfig parse_config(std::string_view json_text, const fs::path& base_dir,
                            const std::vector<std::string>& overrides) {
  json j;
  try {
    j = json_text.empty() ? json::object() : json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  resolve_paths(j, base_dir);

  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + ov + "' is not key=value");
    const std::string key = ov.substr(0, eq);
    const std::string text = ov.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    json one = json::object();
    one[pointer_of(key)] = value;
    resolve_paths(one, fs::current_path());
    j.merge_patch(one);
  }

  const auto known = known_keys();
  std::vector<std::string> leaves;
  collect_leaves(j, "", leaves);
  for (const auto& key : leaves) {
    if (!known.count(key)) throw ConfigError("unknown config field '" + key + "'");
  }

  PipelineConfig cfg;
  visit_fields(cfg, [&](const std::string& key, auto& field) {
    const auto ptr = pointer_of(key);
    if (j.contains(ptr)) read_value(key, j.at(ptr), field);
  });
  cfg.dpa.seed = cfg.reward.seed = cfg.sft.seed = cfg.rlpf.seed = cfg.seed;
  validate(cfg);
  return cfg;
}

PipelineConfig load_config(const fs::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), fs::absolute(path).parent_path(), overrides);
}

std::string config_snapshot(const PipelineConfig& cfg) {
  json j = json::object();
  visit_fields(cfg, [&](const std::string& key, const auto& field) { j[pointer_of(key)] = write_value(field); });
  return j.dump(2);
}

ExecBackend make_backend(const BackendConfig& cfg) {
  if (cfg.kind == "process") return cfg.process;
  return MinilangBackend{};
}

}  // namespace perfalign
