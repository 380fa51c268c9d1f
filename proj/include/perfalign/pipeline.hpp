#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "perfalign/align.hpp"
#include "perfalign/corpus.hpp"
#include "perfalign/executor.hpp"
#include "perfalign/metrics.hpp"
#include "perfalign/model/training.hpp"
#include "perfalign/reward.hpp"

namespace perfalign {

// ---------------------------------------------------------------- toy corpus

struct ToyCorpusOptions {
  std::uint64_t seed = 1;
  std::size_t contest_problems = 150;
  std::size_t synthetic_problems = 20;
};

/// Parameterized arithmetic problems, each with closed-form, loop and broken
/// solutions. Solutions start unverified; expected outputs come from the
/// formulas directly, not from the interpreter.
Corpus make_toy_corpus(const ToyCorpusOptions& options = {});

// ---------------------------------------------------------------- config

struct BackendConfig {
  std::string kind = "minilang";  // or "process"
  ProcessBackend process;
};

ExecBackend make_backend(const BackendConfig& cfg);

struct EvalConfig {
  int samples = 20;
  SampleConfig sampling{.temperature = 0.2, .top_p = 0.95, .top_k = 0, .max_new_tokens = 128, .seed = 0};
  std::vector<int> ks{1};
  std::vector<std::string> models{"sft", "rlpf", "dpa"};
};

struct SynthConfig {
  std::string endpoint;
  std::string model;
  std::string credentials_env = "PERFALIGN_PROVIDER_KEY";
  std::filesystem::path fixture;  // replay file; when set no network is used
  std::size_t max_requests = 20;
  int retries = 2;
  bool include = false;  // merge generated samples into the split input
};

struct PipelineConfig {
  std::filesystem::path corpus;
  std::filesystem::path workdir = "work";
  std::uint64_t seed = 0;
  unsigned workers = 1;
  BackendConfig backend;
  ModelConfig model;
  SplitFractions split;
  TripletOptions triplets;
  SftConfig sft;
  RewardTrainConfig reward;
  MarginConfig margin;
  AlignConfig rlpf;
  DpaConfig dpa;
  EvalConfig eval;
  SynthConfig synth;
};

/// Reads a JSON config. Unknown keys and wrong types raise ConfigError naming
/// the field. Each override is "dotted.key=value" (value parsed as JSON when
/// possible, otherwise taken as a string). Relative paths resolve against the
/// config file's directory.
PipelineConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
PipelineConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir,
                            const std::vector<std::string>& overrides = {});
/// Canonical JSON of every field, used in manifests.
std::string config_snapshot(const PipelineConfig& cfg);

// ---------------------------------------------------------------- synthetic provider

class SynthProvider {
 public:
  virtual ~SynthProvider() = default;
  /// Raw completion text for the request; throws Error on transport failure.
  virtual std::string complete(const GenerationRequest& request) = 0;
};

/// Replays recorded responses from JSONL lines {"prompt": ..., "response": ...}.
class FixtureProvider : public SynthProvider {
 public:
  explicit FixtureProvider(const std::filesystem::path& path);
  std::string complete(const GenerationRequest& request) override;

 private:
  std::map<std::string, std::string> responses_;
};

/// POSTs {"model", "prompt"} as JSON to the endpoint and reads the "text"
/// field of the reply. The bearer token comes from an environment variable.
class HttpProvider : public SynthProvider {
 public:
  HttpProvider(std::string endpoint, std::string model, std::string api_key);
  std::string complete(const GenerationRequest& request) override;

 private:
  std::string endpoint_;
  std::string model_;
  std::string api_key_;
};

std::unique_ptr<SynthProvider> make_provider(const SynthConfig& cfg);

// ---------------------------------------------------------------- stages

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

struct StageReport {
  std::string stage;
  std::filesystem::path dir;
  std::vector<std::filesystem::path> outputs;
  std::string summary;
};

/// Stage names: "data label", "data split", "data triplets", "data synth",
/// "train sft", "train reward", "train rlpf", "train dpa", "eval generate",
/// "eval optimize", "eval report". Artifacts land in <workdir>/<stage>/ next
/// to a manifest.json. Missing inputs raise PrerequisiteError naming the file.
StageReport run_stage(const std::string& stage, const PipelineConfig& cfg);

/// Every stage except "data synth", in order.
std::vector<StageReport> run_pipeline(const PipelineConfig& cfg);

const std::vector<std::string>& stage_names();

/// Where a stage writes, e.g. <workdir>/train/sft.
std::filesystem::path stage_dir(const PipelineConfig& cfg, const std::string& stage);

}  // namespace perfalign
