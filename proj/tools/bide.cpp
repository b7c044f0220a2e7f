#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "bide/harness.hpp"

namespace {

struct SubcommandArgs {
  std::string config;
  bide::CommonOptions options;
};

void add_common_flags(CLI::App* cmd, SubcommandArgs& args) {
  cmd->add_option("--config", args.config, "Path to the JSON config file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option_function<std::string>(
      "--out", [&args](const std::string& v) { args.options.out_dir = v; },
      "Output directory (overrides the config)");
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&args](std::uint64_t v) { args.options.seed = v; },
      "Seed (overrides the config)");
  cmd->add_option_function<unsigned>(
      "--workers", [&args](unsigned v) { args.options.workers = v; },
      "Worker count cap (overrides the config)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Long-term body identification experiment harness"};
  app.require_subcommand(1);

  SubcommandArgs synth_args, split_args, train_args, eval_args, ablate_args;

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic identity world");
  add_common_flags(synth, synth_args);

  CLI::App* split = app.add_subcommand("split", "Build a gallery/probe split");
  add_common_flags(split, split_args);

  CLI::App* train = app.add_subcommand("train", "Train an embedding head");
  add_common_flags(train, train_args);

  CLI::App* eval = app.add_subcommand("eval", "Score a split and emit metric reports");
  add_common_flags(eval, eval_args);
  eval->add_option_function<std::string>(
          "--metric", [&](const std::string& v) { eval_args.options.metric = v; },
          "Similarity metric")
      ->check(CLI::IsMember({"cosine", "euclidean"}));
  eval->add_option_function<std::string>(
          "--subset", [&](const std::string& v) { eval_args.options.subset = v; },
          "Evaluate a single probe subset")
      ->check(CLI::IsMember(
          {"all", "face_included", "face_restricted", "long_range", "uav"}));

  CLI::App* ablate = app.add_subcommand("ablate", "Run an ablation grid");
  add_common_flags(ablate, ablate_args);
  ablate
      ->add_option_function<std::string>(
          "--metric", [&](const std::string& v) { ablate_args.options.metric = v; },
          "Similarity metric for run cells")
      ->check(CLI::IsMember({"cosine", "euclidean"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) bide::cmd_synth(synth_args.config, synth_args.options);
    if (split->parsed()) bide::cmd_split(split_args.config, split_args.options);
    if (train->parsed()) bide::cmd_train(train_args.config, train_args.options);
    if (eval->parsed()) bide::cmd_eval(eval_args.config, eval_args.options);
    if (ablate->parsed()) bide::cmd_ablate(ablate_args.config, ablate_args.options);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
