// Copyright 2026 The MSM Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>
#include <cstdint>
#include <cstdio>
#include <string>

#include "msm/msm.h"

int main(int argc, char** argv) {
  CLI::App app{"Measurement score-based diffusion lab"};
  app.set_version_flag("--version", std::string(msm_version()));
  app.require_subcommand(1, 1);

  std::string config;
  std::string outdir = "runs";
  std::uint64_t seed = 0;
  for (std::size_t i = 0; i < msm_command_count(); ++i) {
    CLI::App* sub = app.add_subcommand(msm_command_name(i));
    sub->add_option("--config", config, "JSON config file")->required();
    sub->add_option("--seed", seed, "Seed; overrides the config's seed");
    sub->add_option("--outdir", outdir, "Parent directory of the run directory");
  }
  CLI11_PARSE(app, argc, argv);

  const std::string command = app.get_subcommands().front()->get_name();
  const bool seed_given = app.get_subcommands().front()->count("--seed") > 0;
  char run_dir[4096];
  char summary[1024];
  const msm_status status = msm_run_command(command.c_str(), config.c_str(), seed_given ? &seed : nullptr,
                                            outdir.c_str(), run_dir, sizeof run_dir, summary, sizeof summary);
  if (status != MSM_OK) {
    std::fprintf(stderr, "msm %s: %s\n", command.c_str(), msm_last_error());
    return msm_exit_code(status);
  }
  std::printf("%s\n%s\n", run_dir, summary);
  return 0;
}
