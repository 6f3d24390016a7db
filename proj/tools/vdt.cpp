// SPDX-License-Identifier: Apache-2.0
// vdt: command-line front end for the variational digital-twin experiments.
#include "vdt/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char **argv) {
  CLI::App app{"Variational digital twin experiments"};
  app.require_subcommand(1, 1);
  vdt::CommandOptions options;
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  for (const auto &name : vdt::command_names()) {
    auto *sub = app.add_subcommand(name);
    sub->add_option("--config", config, "flat key = value config file");
    sub->add_option("--seed", seed, "seed (beats VDT_SEED and the config)");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--jobs", options.jobs, "worker threads for independent trials")->check(CLI::PositiveNumber);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  }
  const CLI::App *sub = app.get_subcommands().front();
  options.config = config;
  if (sub->count("--seed")) options.seed = seed;
  if (sub->count("--out")) options.out = out;
  try {
    return vdt::run_command(sub->get_name(), options, std::cout);
  } catch (const std::exception &e) {
    std::string msg = e.what();
    for (char &ch : msg)
      if (ch == '\n') ch = ' ';
    std::cerr << "error: " << msg << "\n";
    return 1;
  }
}
