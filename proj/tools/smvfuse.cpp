// Batch front-end: smvfuse <subcommand> [--config PATH] [--set key=value ...]

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "smvfuse/smvfuse.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

int run(const std::string &command, const std::string &config_path, const std::vector<std::string> &sets) {
  smvfuse::ConfigMap map;
  if (!config_path.empty()) map.load(config_path);
  for (const auto &s : sets) map.apply(s);
  smvfuse::Pipeline p(smvfuse::RunConfig::from(map), [](const std::string &msg) { std::cerr << msg << '\n'; });

  if (command == "synth") p.synth();
  else if (command == "multiview") p.multiview();
  else if (command == "select") p.select();
  else if (command == "fuse") p.fuse_stage();
  else if (command == "evaluate") p.evaluate();
  else if (command == "ablate") p.ablate();
  else if (command == "pipeline") p.pipeline();
  return kExitOk;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Single-view / multi-view depth fusion"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> sets;
  app.add_option("--config", config_path, "key=value configuration file");
  app.add_option("--set", sets, "override one key (repeatable)")->take_all()->allow_extra_args(false);

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"synth", "render a synthetic planar sequence with ground truth and single-view depth"},
      {"multiview", "per-keyframe semi-dense multi-view depth and candidate list"},
      {"select", "top-fraction and consensus selection of anchor points"},
      {"fuse", "fuse single-view depth with the anchor points"},
      {"evaluate", "error metrics against ground truth"},
      {"ablate", "fusion with W1, W1*W2 and all weights"},
      {"pipeline", "multiview, select, fuse and evaluate"},
  };
  for (const auto &[name, help] : commands) {
    auto *sub = app.add_subcommand(name, help);
    sub->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    return run(app.get_subcommands().front()->get_name(), config_path, sets);
  } catch (const smvfuse::ConfigError &e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const smvfuse::IoError &e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const smvfuse::StageError &e) {
    std::cerr << "stage " << e.what() << '\n';
    return kExitStage;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInternal;
  }
}
