// SPDX-License-Identifier: Apache-2.0
/**
 * @file   gradsuite.hpp
 * @brief  Central-difference checks of every differentiable unit on small
 *         random instances.
 */
#pragma once

#include "vdt/backbones.hpp"

#include <string>
#include <vector>

namespace vdt {

/// dense, vanilla_rnn, lstm, gru, variational, pinn_rollout, battnn
const std::vector<std::string> &gradcheck_units();

/// One random instance of `unit` built from `seed`.
GradCheckReport check_unit(const std::string &unit, std::uint64_t seed, double tolerance, double h = 1e-6);

struct UnitCheck {
  std::string unit;
  std::size_t instances = 0;
  double worst = 0.0;
  std::string worst_parameter;
  bool passed = false;
};

/// `instances` seeds per unit, starting at base_seed.
std::vector<UnitCheck> run_gradcheck_suite(std::size_t instances, double tolerance, std::uint64_t base_seed = 0,
                                           double h = 1e-6);

} // namespace vdt
