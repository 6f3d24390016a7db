// SPDX-License-Identifier: Apache-2.0
/**
 * @file   commands.hpp
 * @brief  Experiment commands behind the `vdt` executable.
 *
 * Each command reads a flat config, rejects unknown keys before doing any
 * work, writes `config.resolved` (every key it used, defaults included, and
 * the effective seed) and its artifacts into the output directory. Files are
 * written atomically.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace vdt {

struct CommandOptions {
  std::filesystem::path config;           ///< empty: all defaults
  std::optional<std::uint64_t> seed;      ///< --seed, beats VDT_SEED and the config
  std::optional<std::filesystem::path> out;
  std::size_t jobs = 1;
};

const std::vector<std::string> &command_names();

/// Runs one command; throws on any failure. Returns the process exit code.
int run_command(const std::string &name, const CommandOptions &options, std::ostream &report);

/// Effective seed: --seed, else VDT_SEED, else the config value.
std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, const char *env, std::uint64_t config_value);

} // namespace vdt
