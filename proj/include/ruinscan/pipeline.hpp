#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ruinscan/config.hpp"

namespace ruinscan {

struct RunContext {
  Config config;
  std::filesystem::path workspace;
  int threads = 1;
};

// Each stage reads its predecessors' artifacts from the workspace and writes
// its own, plus <stage>/manifest.json carrying the stage's config hash.
void run_synth(const RunContext& ctx);
void run_grid(const RunContext& ctx);
void run_localize(const RunContext& ctx);
void run_segment(const RunContext& ctx);
void run_label(const RunContext& ctx);
void run_chips(const RunContext& ctx);
void run_train(const RunContext& ctx);
void run_score(const RunContext& ctx);
void run_eval(const RunContext& ctx);
/// synth (only when no input point cloud is configured) through eval.
void run_pipeline(const RunContext& ctx);

/// Command-line entry: `<subcommand> [--workspace DIR] [--config FILE]
/// [--set key=value]... [--threads N] [--seed S]`. Returns the exit status.
int run_cli(const std::vector<std::string>& args);

}  // namespace ruinscan
