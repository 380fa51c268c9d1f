#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

#include "json.hpp"
#include "perfalign/error.hpp"
#include "perfalign/minilang.hpp"
#include "perfalign/model/sampling.hpp"
#include "perfalign/pipeline.hpp"
#include "perfalign/rng.hpp"

namespace perfalign {

using nlohmann::json;
namespace fs = std::filesystem;

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return out.str();
}

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PrerequisiteError("missing input " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, std::string_view text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

/// Fails with the stage that produces the file when it is absent.
void require(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path)) {
    throw PrerequisiteError("missing " + path.string() + "; run `perfalign " + producer + "` first");
  }
}

std::uint64_t stage_seed(const PipelineConfig& cfg, const std::string& stage) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : stage) h = (h ^ c) * 1099511628211ULL;
  return Rng::mix(cfg.seed, h);
}

struct StageContext {
  const PipelineConfig& cfg;
  std::string stage;
  fs::path dir;
  std::uint64_t seed;
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;
  json extra = json::object();

  fs::path input(const fs::path& p, const std::string& producer) {
    require(p, producer);
    inputs.push_back(p);
    return p;
  }
  void output(const std::string& name, std::string_view text) {
    write_file(dir / name, text);
    outputs.push_back(dir / name);
  }
  void output_checkpoint(const std::string& name, const Checkpoint& ckpt) {
    save_checkpoint(ckpt, dir / name);
    outputs.push_back(dir / name);
  }
};

void write_manifest(StageContext& ctx) {
  json inputs = json::array();
  for (const auto& p : ctx.inputs) inputs.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
  json outputs = json::array();
  for (const auto& p : ctx.outputs) outputs.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
  const json manifest{{"stage", ctx.stage},         {"tool_version", PERFALIGN_VERSION},
                      {"seed", ctx.seed},           {"config", json::parse(config_snapshot(ctx.cfg))},
                      {"inputs", inputs},           {"outputs", outputs},
                      {"details", ctx.extra}};
  write_file(ctx.dir / "manifest.json", manifest.dump(2) + "\n");
}

// Artifact locations shared between stages.
fs::path labeled_corpus(const PipelineConfig& c) { return stage_dir(c, "data label") / "corpus.jsonl"; }
fs::path split_file(const PipelineConfig& c) { return stage_dir(c, "data split") / "split.json"; }
fs::path triplet_file(const PipelineConfig& c, const std::string& name) {
  return stage_dir(c, "data triplets") / (name + ".jsonl");
}
fs::path synth_file(const PipelineConfig& c) { return stage_dir(c, "data synth") / "synthetic.jsonl"; }
fs::path model_file(const PipelineConfig& c, const std::string& model) {
  return stage_dir(c, "train " + model) / "model.ckpt";
}

Corpus load_labeled(StageContext& ctx) { return parse_corpus(read_file(ctx.input(labeled_corpus(ctx.cfg), "data label"))); }
SplitAssignment load_split(StageContext& ctx) { return parse_split(read_file(ctx.input(split_file(ctx.cfg), "data split"))); }
std::vector<Triplet> load_triplets(StageContext& ctx, const std::string& name) {
  return parse_triplets(read_file(ctx.input(triplet_file(ctx.cfg, name), "data triplets")));
}
Checkpoint load_model(StageContext& ctx, const std::string& model) {
  return load_checkpoint(ctx.input(model_file(ctx.cfg, model), "train " + model));
}

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(6);
  out << v;
  return out.str();
}

// ---------------------------------------------------------------- data stages

std::string data_label(StageContext& ctx) {
  Corpus corpus = parse_corpus(read_file(ctx.input(ctx.cfg.corpus, "data toy")));
  if (ctx.cfg.synth.include && fs::exists(synth_file(ctx.cfg))) {
    const Corpus extra = parse_corpus(read_file(ctx.input(synth_file(ctx.cfg), "data synth")));
    auto problems = corpus.problems();
    auto solutions = corpus.solutions();
    problems.insert(problems.end(), extra.problems().begin(), extra.problems().end());
    solutions.insert(solutions.end(), extra.solutions().begin(), extra.solutions().end());
    corpus = Corpus(std::move(problems), std::move(solutions));
  }
  LabelSummary summary;
  const Corpus labeled = label_corpus(corpus, make_backend(ctx.cfg.backend), ctx.cfg.workers, &summary);
  ctx.output("corpus.jsonl", serialize_corpus(labeled));
  json stats = json::array();
  for (const auto& s : summary.stats) {
    stats.push_back({{"problem_id", s.problem_id}, {"correct", s.runtimes.size()}, {"median_runtime", s.median_runtime}});
  }
  const json j{{"evaluated", summary.evaluated},
               {"relabeled_incorrect", summary.relabeled_incorrect},
               {"failures", summary.failures},
               {"problems", stats}};
  ctx.output("summary.json", j.dump(2) + "\n");
  const auto incorrect = std::count_if(labeled.solutions().begin(), labeled.solutions().end(),
                                       [](const Solution& s) { return s.label == SolutionLabel::incorrect; });
  return std::to_string(summary.evaluated) + " solutions executed, " + std::to_string(incorrect) + " incorrect";
}

std::string data_split(StageContext& ctx) {
  const Corpus corpus = load_labeled(ctx);
  const SplitAssignment split = split_dataset(corpus, ctx.seed, ctx.cfg.split);
  ctx.output("split.json", serialize_split(split));
  std::ostringstream s;
  for (Split sp : {Split::sft, Split::reward, Split::rl_dpa, Split::held_out}) {
    s << to_string(sp) << '=' << split.members(corpus, sp).size() << ' ';
  }
  return s.str();
}

std::string data_triplets(StageContext& ctx) {
  const Corpus corpus = load_labeled(ctx);
  const SplitAssignment split = load_split(ctx);
  json summary = json::object();
  std::ostringstream s;
  std::uint64_t salt = 0;
  for (auto [sp, name] : {std::pair{Split::reward, "reward"}, std::pair{Split::rl_dpa, "dpa"}}) {
    for (auto [part, suffix] : {std::pair{SplitAssignment::Part::train, "_train"},
                                std::pair{SplitAssignment::Part::eval, "_eval"}}) {
      const auto ids = split.members(corpus, sp, part);
      const TripletSet set = build_triplets(corpus, ids, Rng::mix(ctx.seed, salt++), ctx.cfg.triplets);
      const std::string file = std::string(name) + suffix;
      ctx.output(file + ".jsonl", serialize_triplets(set.triplets));
      summary[file] = {{"problems", ids.size()},
                       {"triplets", set.triplets.size()},
                       {"skipped_problems", set.skipped_problems},
                       {"injected_incorrect", set.injected_incorrect}};
      s << file << '=' << set.triplets.size() << ' ';
    }
  }
  ctx.output("summary.json", summary.dump(2) + "\n");
  return s.str();
}

std::string data_synth(StageContext& ctx) {
  const Corpus corpus = load_labeled(ctx);
  auto provider = make_provider(ctx.cfg.synth);
  if (!ctx.cfg.synth.fixture.empty()) ctx.inputs.push_back(ctx.cfg.synth.fixture);

  // Seed snippets: correct solutions, cut to at most 15 lines.
  std::vector<const Solution*> pool;
  for (const auto& s : corpus.solutions()) {
    if (s.label == SolutionLabel::correct) pool.push_back(&s);
  }
  if (pool.empty()) throw PrerequisiteError("no correct solutions to seed synthetic generation");
  Rng rng(ctx.seed);
  std::vector<Problem> problems;
  std::vector<Solution> solutions;
  json failures = json::array();
  for (std::size_t r = 0; r < ctx.cfg.synth.max_requests; ++r) {
    const Solution& seed_solution = *pool[rng.below(pool.size())];
    std::string snippet;
    int lines = 0;
    std::istringstream in(seed_solution.source_code);
    for (std::string line; lines < 15 && std::getline(in, line); ++lines) snippet += line + "\n";
    const GenerationRequest request = synth_request(snippet);
    std::optional<SynthSample> sample;
    std::string last_error;
    for (int attempt = 0; attempt <= ctx.cfg.synth.retries && !sample; ++attempt) {
      try {
        sample = parse_synth_response(provider->complete(request));
      } catch (const Error& e) {
        last_error = e.what();
      }
    }
    if (!sample) {
      failures.push_back({{"request", r}, {"error", last_error}});
      continue;
    }
    Problem p;
    p.id = "synth-" + std::to_string(r);
    p.statement = sample->statement;
    p.source = ProblemSource::synthetic;
    solutions.push_back({p.id, p.id + "/fast", sample->fast_code, SolutionLabel::unverified, {}, PairRole::fast});
    solutions.push_back({p.id, p.id + "/slow", sample->slow_code, SolutionLabel::unverified, {}, PairRole::slow});
    problems.push_back(std::move(p));
  }
  const std::size_t made = problems.size();
  ctx.output("synthetic.jsonl", serialize_corpus(Corpus(std::move(problems), std::move(solutions))));
  ctx.output("failures.json", failures.dump(2) + "\n");
  return std::to_string(made) + " synthetic problems, " + std::to_string(failures.size()) + " failed requests";
}

// ---------------------------------------------------------------- training stages

std::vector<SftExample> sft_examples(const Tokenizer& tok, const PromptSet& set, int context) {
  std::vector<SftExample> out;
  for (const auto& r : set.records) {
    out.push_back(make_sft_example(tok, r));
    if (static_cast<int>(out.back().tokens.size()) > context) {
      throw ConfigError("config field 'model.context': prompt for " + r.problem_id + " needs " +
                        std::to_string(out.back().tokens.size()) + " tokens");
    }
  }
  return out;
}

std::string prompts_jsonl(const PromptSet& set) {
  std::string out;
  for (const auto& r : set.records) {
    out += json{{"kind", r.kind == PromptKind::generate ? "generate" : "optimize"},
                {"problem_id", r.problem_id},
                {"instruction", r.instruction},
                {"response", r.response}}
               .dump() +
           "\n";
  }
  return out;
}

std::string train_sft(StageContext& ctx) {
  const Corpus corpus = load_labeled(ctx);
  const SplitAssignment split = load_split(ctx);
  const Tokenizer tok;
  const Checkpoint base = make_base_checkpoint(ctx.cfg.model, tok, Rng::mix(ctx.seed, 1));
  const int context = ctx.cfg.model.context;

  const PromptSet train_set =
      build_sft_prompts(corpus, split.members(corpus, Split::sft, SplitAssignment::Part::train), Rng::mix(ctx.seed, 2));
  const PromptSet eval_set =
      build_sft_prompts(corpus, split.members(corpus, Split::sft, SplitAssignment::Part::eval), Rng::mix(ctx.seed, 3));
  if (train_set.records.empty()) throw PrerequisiteError("SFT split yields no prompts");
  const auto train = sft_examples(tok, train_set, context);
  const auto eval = sft_examples(tok, eval_set, context);

  SftConfig sc = ctx.cfg.sft;
  sc.seed = Rng::mix(ctx.seed, 4);
  std::vector<TrainLogRow> log;
  Checkpoint sft;
  sft.tokenizer = tok;
  sft.role = Role::sft;
  const double before = eval.empty() ? NAN : perplexity(base.weights, eval);
  sft.weights = sft_train(base.weights, train, sc, &log);
  const double after = eval.empty() ? NAN : perplexity(sft.weights, eval);

  ctx.output_checkpoint("model.ckpt", sft);
  ctx.output("prompts.jsonl", prompts_jsonl(train_set));
  ctx.output("train_log.csv", train_log_csv(log));
  json m{{"train_prompts", train.size()}, {"eval_prompts", eval.size()}, {"steps", log.size()}};
  if (!eval.empty()) {
    m["eval_perplexity_before"] = before;
    m["eval_perplexity_after"] = after;
  }
  ctx.output("metrics.json", m.dump(2) + "\n");
  return std::to_string(train.size()) + " prompts, " + std::to_string(log.size()) + " steps" +
         (eval.empty() ? "" : ", eval perplexity " + fmt(before) + " -> " + fmt(after));
}

std::string train_reward(StageContext& ctx) {
  const Corpus corpus = load_labeled(ctx);
  const Checkpoint sft = load_model(ctx, "sft");
  const auto train_t = load_triplets(ctx, "reward_train");
  const auto eval_t = load_triplets(ctx, "reward_eval");
  if (train_t.empty()) throw PrerequisiteError("no reward training triplets");
  const int context = sft.weights.config.context;
  const auto train = reward_examples(corpus, train_t, sft.tokenizer, context, ctx.cfg.margin);
  const auto eval = reward_examples(corpus, eval_t, sft.tokenizer, context, ctx.cfg.margin);

  RewardTrainConfig rc = ctx.cfg.reward;
  rc.seed = Rng::mix(ctx.seed, 1);
  RewardModel model = make_reward_model(sft, Rng::mix(ctx.seed, 2));
  const double before = eval.empty() ? NAN : reward_accuracy(model, eval);
  std::vector<RewardLogRow> log;
  model = train_reward_model(std::move(model), train, eval, rc, &log);
  const double after = eval.empty() ? NAN : reward_accuracy(model, eval);
  const double train_acc = reward_accuracy(model, train);

  ctx.output_checkpoint("model.ckpt", to_checkpoint(model));
  ctx.output("train_log.csv", reward_log_csv(log));
  json m{{"train_triplets", train.size()}, {"eval_triplets", eval.size()}, {"train_accuracy", train_acc}};
  if (!eval.empty()) {
    m["eval_accuracy_before"] = before;
    m["eval_accuracy_after"] = after;
  }
  ctx.output("metrics.json", m.dump(2) + "\n");
  return "train accuracy " + fmt(train_acc) + (eval.empty() ? "" : ", eval accuracy " + fmt(after));
}

Checkpoint policy_checkpoint(const PolicyState& p, const Tokenizer& tok, Role role) {
  Checkpoint c;
  c.weights = p.weights;
  c.tokenizer = tok;
  c.role = role;
  c.extras["value_head.weight"] = p.value_head.weight;
  c.extras["value_head.bias"] = p.value_head.bias;
  return c;
}

std::string train_rlpf(StageContext& ctx) {
  const Corpus corpus = load_labeled(ctx);
  const SplitAssignment split = load_split(ctx);
  const Checkpoint sft = load_model(ctx, "sft");
  const RewardModel rm = reward_model_from(load_model(ctx, "reward"));
  if (sft.role != Role::sft) throw PrerequisiteError("train rlpf expects an sft checkpoint");

  std::vector<const Problem*> problems;
  for (const auto& id : split.members(corpus, Split::rl_dpa, SplitAssignment::Part::train)) {
    const Problem& p = corpus.problem(id);
    // Contest problems without any correct solution have no baseline.
    if (p.source == ProblemSource::contest && !p.median_runtime) continue;
    problems.push_back(&p);
  }
  if (problems.empty()) throw PrerequisiteError("RL_DPA split has no usable problems");

  AlignConfig ac = ctx.cfg.rlpf;
  ac.seed = Rng::mix(ctx.seed, 1);
  ac.rollout.seed = Rng::mix(ctx.seed, 2);
  const fs::path out = ctx.dir / "model.ckpt";
  auto on_epoch = [&](const PolicyState& p, int) { save_checkpoint(policy_checkpoint(p, sft.tokenizer, Role::rlpf), out); };
  save_checkpoint(policy_checkpoint(make_policy(sft.weights), sft.tokenizer, Role::rlpf), out);
  const RlpfResult result =
      rlpf_train(sft.weights, sft.tokenizer, problems, make_backend(ctx.cfg.backend), &rm, ac, on_epoch);
  ctx.output_checkpoint("model.ckpt", policy_checkpoint(result.policy, sft.tokenizer, Role::rlpf));
  ctx.output("history.csv", align_history_csv(result.history));

  std::map<int, std::pair<double, int>> per_epoch;
  double max_kl = 0.0;
  for (const auto& r : result.history) {
    per_epoch[r.epoch].first += r.mean_reward;
    per_epoch[r.epoch].second += 1;
    max_kl = std::max(max_kl, std::abs(r.kl_estimate));
  }
  json epochs = json::array();
  for (const auto& [e, v] : per_epoch) epochs.push_back({{"epoch", e}, {"mean_reward", v.first / v.second}});
  ctx.output("metrics.json", json{{"problems", problems.size()}, {"epochs", epochs}, {"max_abs_kl", max_kl}}.dump(2) + "\n");
  std::string s = std::to_string(problems.size()) + " problems";
  if (!per_epoch.empty()) {
    s += ", mean reward " + fmt(per_epoch.begin()->second.first / per_epoch.begin()->second.second) + " -> " +
         fmt(per_epoch.rbegin()->second.first / per_epoch.rbegin()->second.second);
  }
  return s;
}

std::string train_dpa(StageContext& ctx) {
  const Corpus corpus = load_labeled(ctx);
  const Checkpoint sft = load_model(ctx, "sft");
  if (sft.role != Role::sft) throw PrerequisiteError("train dpa expects an sft checkpoint");
  const auto train_t = load_triplets(ctx, "dpa_train");
  const auto eval_t = load_triplets(ctx, "dpa_eval");
  if (train_t.empty()) throw PrerequisiteError("no DPA training triplets");
  auto train = dpa_examples(corpus, train_t, sft.tokenizer, ctx.cfg.margin);
  auto eval = dpa_examples(corpus, eval_t, sft.tokenizer, ctx.cfg.margin);

  DpaConfig dc = ctx.cfg.dpa;
  dc.seed = Rng::mix(ctx.seed, 1);
  const DpaResult result = dpa_train(sft.weights, std::move(train), dc);
  Checkpoint out;
  out.weights = result.policy;
  out.tokenizer = sft.tokenizer;
  out.role = Role::dpa;
  ctx.output_checkpoint("model.ckpt", out);
  ctx.output("history.csv", align_history_csv(result.history));
  json m{{"train_triplets", train_t.size()}, {"eval_triplets", eval.size()}};
  std::string s = std::to_string(train_t.size()) + " triplets";
  if (!eval.empty()) {
    const double before = dpa_accuracy(sft.weights, sft.weights, eval);
    const double after = dpa_accuracy(result.policy, sft.weights, eval);
    m["eval_accuracy_before"] = before;
    m["eval_accuracy_after"] = after;
    s += ", eval accuracy " + fmt(before) + " -> " + fmt(after);
  }
  ctx.output("metrics.json", m.dump(2) + "\n");
  return s;
}

// ---------------------------------------------------------------- evaluation stages

struct EvalTask {
  const Problem* problem;
  std::vector<int> prompt;
  double baseline;
};

json metrics_json(const EvalReport& r) {
  json m = json::array();
  for (const auto& row : r.metrics) m.push_back({{"k", row.k}, {"pass", row.pass}, {"speedup", row.speedup}});
  return m;
}

std::string run_eval(StageContext& ctx, bool optimize) {
  const Corpus corpus = load_labeled(ctx);
  const SplitAssignment split = load_split(ctx);
  const ExecBackend backend = make_backend(ctx.cfg.backend);
  const Tokenizer tok;

  std::vector<EvalTask> tasks;
  for (const auto& id : split.members(corpus, Split::held_out)) {
    const Problem& p = corpus.problem(id);
    if (p.source != ProblemSource::contest || !p.median_runtime) continue;
    if (!optimize) {
      tasks.push_back({&p, generation_prompt(tok, p), *p.median_runtime});
      continue;
    }
    // The slowest correct program is the input and its runtime the baseline.
    const Solution* slowest = nullptr;
    for (std::size_t i : corpus.solutions_of(id)) {
      const Solution& s = corpus.solutions()[i];
      if (s.label != SolutionLabel::correct) continue;
      if (slowest == nullptr || *s.runtime > *slowest->runtime ||
          (*s.runtime == *slowest->runtime && s.submission_id < slowest->submission_id)) {
        slowest = &s;
      }
    }
    if (slowest == nullptr) continue;
    std::vector<int> prompt{Tokenizer::kBos};
    const auto body = tok.encode(render_prompt_prefix(optimize_instruction(p, slowest->source_code)));
    prompt.insert(prompt.end(), body.begin(), body.end());
    tasks.push_back({&p, std::move(prompt), *slowest->runtime});
  }
  if (tasks.empty()) throw PrerequisiteError("no labeled held-out problems to evaluate");

  json summary = json::object();
  std::ostringstream s;
  for (const auto& name : ctx.cfg.eval.models) {
    const Checkpoint ckpt = name == "base" ? make_base_checkpoint(ctx.cfg.model, tok, Rng::mix(stage_seed(ctx.cfg, "train sft"), 1))
                                          : load_model(ctx, name);
    std::vector<ProblemSamples> per_problem;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      ProblemSamples ps{tasks[t].problem->id, tasks[t].baseline, {}};
      for (int j = 1; j <= ctx.cfg.eval.samples; ++j) {
        // Identical sampling streams for every model.
        Rng rng(Rng::mix(ctx.seed, t * 1000003ULL + static_cast<std::uint64_t>(j)));
        const auto completion = sample(ckpt.weights, tasks[t].prompt, ctx.cfg.eval.sampling, rng);
        SampleResult r;
        r.problem_id = ps.problem_id;
        r.index = j;
        r.code = completion_code(tok, completion);
        const Verdict v = evaluate(r.code, *tasks[t].problem, backend);
        r.correct = v.status == VerdictStatus::correct;
        if (r.correct) r.runtime = v.avg_runtime;
        ps.samples.push_back(std::move(r));
      }
      per_problem.push_back(std::move(ps));
    }
    const EvalReport report = aggregate(std::move(per_problem), ctx.cfg.eval.ks);
    ctx.output(name + ".json", report_to_json(report));
    ctx.output(name + ".csv", report_to_csv(report));
    summary[name] = metrics_json(report);
    for (const auto& row : report.metrics) {
      s << name << ": pass@" << row.k << '=' << fmt(row.pass) << " speedup@" << row.k << '=' << fmt(row.speedup)
        << "  ";
    }
  }
  ctx.extra["problems"] = tasks.size();
  ctx.output("metrics.json", json{{"problems", tasks.size()}, {"samples", ctx.cfg.eval.samples}, {"models", summary}}.dump(2) + "\n");
  return s.str();
}

std::string eval_generate(StageContext& ctx) { return run_eval(ctx, false); }
std::string eval_optimize(StageContext& ctx) { return run_eval(ctx, true); }

std::string eval_report(StageContext& ctx) {
  json report = json::object();
  std::ostringstream md;
  md << "| task | model | k | pass@k | speedup@k |\n|---|---|---|---|---|\n";
  for (const char* task : {"generate", "optimize"}) {
    const fs::path dir = stage_dir(ctx.cfg, std::string("eval ") + task);
    if (!fs::exists(dir / "metrics.json")) continue;
    json models = json::object();
    for (const auto& name : ctx.cfg.eval.models) {
      const fs::path file = dir / (name + ".json");
      if (!fs::exists(file)) continue;
      const EvalReport r = report_from_json(read_file(ctx.input(file, std::string("eval ") + task)));
      models[name] = metrics_json(r);
      for (const auto& row : r.metrics) {
        md << "| " << task << " | " << name << " | " << row.k << " | " << fmt(row.pass) << " | " << fmt(row.speedup)
           << " |\n";
      }
    }
    report[task] = models;
  }
  if (report.empty()) throw PrerequisiteError("no evaluation results; run `perfalign eval generate` first");
  ctx.output("report.json", report.dump(2) + "\n");
  ctx.output("report.md", md.str());
  return md.str();
}

using StageFn = std::function<std::string(StageContext&)>;

const std::vector<std::pair<std::string, StageFn>>& registry() {
  static const std::vector<std::pair<std::string, StageFn>> stages{
      {"data label", data_label},       {"data split", data_split},       {"data triplets", data_triplets},
      {"data synth", data_synth},       {"train sft", train_sft},         {"train reward", train_reward},
      {"train rlpf", train_rlpf},       {"train dpa", train_dpa},         {"eval generate", eval_generate},
      {"eval optimize", eval_optimize}, {"eval report", eval_report}};
  return stages;
}

}  // namespace

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [name, fn] : registry()) n.push_back(name);
    return n;
  }();
  return names;
}

fs::path stage_dir(const PipelineConfig& cfg, const std::string& stage) {
  fs::path dir = cfg.workdir;
  std::istringstream in(stage);
  for (std::string part; in >> part;) dir /= part;
  return dir;
}

StageReport run_stage(const std::string& stage, const PipelineConfig& cfg) {
  for (const auto& [name, fn] : registry()) {
    if (name != stage) continue;
    StageContext ctx{cfg, stage, stage_dir(cfg, stage), stage_seed(cfg, stage), {}, {}};
    fs::create_directories(ctx.dir);
    const std::string summary = fn(ctx);
    write_manifest(ctx);
    return {stage, ctx.dir, ctx.outputs, summary};
  }
  throw ConfigError("unknown stage '" + stage + "'");
}

std::vector<StageReport> run_pipeline(const PipelineConfig& cfg) {
  std::vector<StageReport> reports;
  for (const auto& name : stage_names()) {
    if (name == "data synth") continue;
    reports.push_back(run_stage(name, cfg));
  }
  return reports;
}

}  // namespace perfalign
