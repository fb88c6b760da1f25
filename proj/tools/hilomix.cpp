#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "hilomix/eval/pipeline.hpp"

namespace {

constexpr int kUsageError = 2;
constexpr int kRuntimeError = 1;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HiLoMix: frequency-aware, noise-robust mixer address association"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "runs";
  for (const char* name : {"generate", "train", "stack", "eval", "report", "all"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "key = value configuration file")->required();
    sub->add_option("--seed", seed, "run a single seed instead of eval.seeds");
    sub->add_option("--out", out_dir, "run directory")->capture_default_str();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  hilomix::eval::PipelineConfig cfg;
  try {
    cfg = hilomix::eval::load_config(config_path);
    if (seed) cfg.eval.seeds = {*seed};
  } catch (const hilomix::Error& e) {
    std::cerr << "hilomix: " << e.what() << "\n";
    return kUsageError;
  }

  try {
    hilomix::eval::run_command(cmd, cfg, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "hilomix " << cmd << ": " << e.what() << "\n";
    return kRuntimeError;
  }
  return 0;
}
