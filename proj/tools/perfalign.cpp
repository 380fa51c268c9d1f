#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "perfalign/error.hpp"
#include "perfalign/pipeline.hpp"

namespace {

using namespace perfalign;

struct Options {
  std::string config;
  std::vector<std::string> overrides;
  unsigned workers = 0;
  std::string workdir;
};

PipelineConfig resolve(const Options& opt) {
  std::vector<std::string> overrides = opt.overrides;
  if (opt.workers > 0) overrides.push_back("workers=" + std::to_string(opt.workers));
  if (!opt.workdir.empty()) overrides.push_back("paths.workdir=\"" + opt.workdir + "\"");
  return load_config(opt.config, overrides);
}

void print(const StageReport& r) {
  std::cout << "[" << r.stage << "] " << r.summary << "\n";
  for (const auto& p : r.outputs) std::cout << "  " << p.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Performance-aligned code model pipeline", "perfalign"};
  app.set_version_flag("--version", std::string(PERFALIGN_VERSION));
  app.require_subcommand(1);

  Options opt;
  auto common = [&opt](CLI::App* cmd) {
    cmd->add_option("-c,--config", opt.config, "pipeline config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--set", opt.overrides, "override a config key, e.g. --set sft.epochs=2");
    cmd->add_option("--workers", opt.workers, "cap on parallel workers");
    cmd->add_option("--workdir", opt.workdir, "artifact directory");
  };

  std::string stage;
  std::vector<CLI::App*> stage_commands;
  for (const char* group : {"data", "train", "eval"}) {
    CLI::App* g = app.add_subcommand(group, std::string(group) + " stages");
    g->require_subcommand(1);
    for (const auto& name : stage_names()) {
      if (name.rfind(std::string(group) + " ", 0) != 0) continue;
      CLI::App* cmd = g->add_subcommand(name.substr(name.find(' ') + 1), "run stage '" + name + "'");
      common(cmd);
      cmd->callback([&stage, name] { stage = name; });
    }
  }

  ToyCorpusOptions toy;
  std::string toy_out;
  CLI::App* toy_cmd = app.get_subcommand("data")->add_subcommand("toy", "write the bundled toy corpus");
  toy_cmd->add_option("-o,--output", toy_out, "output JSONL")->required();
  toy_cmd->add_option("--seed", toy.seed, "problem shuffle seed");
  toy_cmd->add_option("--contest", toy.contest_problems, "problems with tests");
  toy_cmd->add_option("--synthetic", toy.synthetic_problems, "synthetic problems without tests");

  CLI::App* pipeline_cmd = app.add_subcommand("pipeline", "run every stage except data synth");
  common(pipeline_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  PipelineConfig cfg;
  if (!toy_cmd->parsed()) {
    try {
      cfg = resolve(opt);
    } catch (const Error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }

  try {
    if (toy_cmd->parsed()) {
      std::ofstream out(toy_out, std::ios::binary);
      if (!out) throw Error("cannot write " + toy_out);
      out << serialize_corpus(make_toy_corpus(toy));
      std::cout << "wrote " << toy_out << "\n";
    } else if (pipeline_cmd->parsed()) {
      for (const auto& name : stage_names()) {
        if (name == "data synth") continue;
        print(run_stage(name, cfg));
      }
    } else {
      print(run_stage(stage, cfg));
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
