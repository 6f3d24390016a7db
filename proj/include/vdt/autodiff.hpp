// SPDX-License-Identifier: Apache-2.0
/**
 * @file   autodiff.hpp
 * @brief  Matrix-level reverse-mode gradient tape.
 *
 * Every op appends one node holding its primal value and a closure that
 * pushes the upstream gradient into its inputs. Nodes are evaluated in
 * creation order, so backward() is a single reverse sweep. A tape built with
 * record=false keeps the values only and is used for inference.
 */
#pragma once

#include "vdt/numkit.hpp"

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <string>
#include <unordered_map>
#include <vector>

namespace vdt {

enum class ParamRole : std::uint8_t { weight, bias, variational };

/// A named trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor2 value;
  Tensor2 grad;
  ParamRole role = ParamRole::weight;

  Parameter() = default;
  Parameter(std::string n, Tensor2 v, ParamRole r = ParamRole::weight)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()), role(r) {}

  /// Decoupled weight decay never touches variational means/scales.
  bool decays() const noexcept { return role != ParamRole::variational; }
  void zero_grad() { grad = Tensor2(value.rows(), value.cols()); }
};

using ParameterList = std::vector<Parameter *>;

class Tape;

struct Var {
  Tape *tape = nullptr;
  std::uint32_t id = 0;
};

class Tape {
public:
  using Backward = std::function<void(Tape &, std::uint32_t self)>;

  explicit Tape(bool record = true) : record_(record) { nodes_.reserve(256); }
  Tape(const Tape &) = delete;
  Tape &operator=(const Tape &) = delete;

  bool recording() const noexcept { return record_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var constant(Tensor2 value);
  /// Leaf bound to a parameter; repeated calls return the same node.
  Var param(Parameter &p);

  const Tensor2 &value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }

  /// Gradient of the last backward() target with respect to v (zeros if unreached).
  Tensor2 grad(Var v) const;

  /// Gradient buffer for node id, allocated on first use. Used by op closures.
  Tensor2 &grad_buffer(std::uint32_t id);
  const Tensor2 &upstream(std::uint32_t id) const { return nodes_[id].grad; }

  /// Seeds d(loss)/d(loss)=1, sweeps in reverse and adds parameter gradients
  /// into Parameter::grad. loss must be 1×1.
  void backward(Var loss);

  Var push(Tensor2 value, std::span<const Var> inputs, Backward back);
  Var push(Tensor2 value, std::initializer_list<Var> inputs, Backward back) {
    return push(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(back));
  }

private:
  struct Node {
    Tensor2 value;
    Tensor2 grad;
    Backward back;
    bool requires_grad = false;
    Parameter *param = nullptr;
  };
  bool record_;
  std::vector<Node> nodes_;
  std::unordered_map<Parameter *, std::uint32_t> param_nodes_;
};

// ---- ops ------------------------------------------------------------------
// Shapes are checked; mismatches throw std::invalid_argument naming both.

/// a·wᵀ for a (n×k), w (m×k).
Var matmul_nt(Var a, Var w);
/// x·Wᵀ + b with b (1×m) broadcast over rows.
Var affine(Var x, Var w, Var b);
/// x·Wᵀ + h·Uᵀ + b (the gate pre-activation of recurrent cells).
Var affine2(Var x, Var w, Var h, Var u, Var b);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// a + b with b (1×m) broadcast over rows of a.
Var add_row(Var a, Var b);
/// a ⊙ b with b (n×1) broadcast over columns of a.
Var mul_col(Var a, Var b);
Var scale(Var a, double c);
Var shift(Var a, double c);
/// 1 - a
Var one_minus(Var a);

Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var softplus(Var a);
Var log(Var a);
Var square(Var a);

Var sum(Var a);
Var mean(Var a);
/// Mean of squared differences over all entries.
Var mse(Var pred, Var target);

Var concat_cols(Var a, Var b);
Var column(Var a, std::size_t j);
/// Row-wise stack of equally wide nodes.
Var stack_rows(std::span<const Var> parts);

/// mu + softplus(rho) ⊙ eps, eps constant.
Var reparameterize(Var mu, Var rho, const Tensor2 &eps);
/// Σ KL(N(mu, softplus(rho)²) ‖ N(0, prior_sigma²)) as a 1×1 node.
Var gaussian_kl(Var mu, Var rho, double prior_sigma);

// Scalar helpers shared with the plain (non-tape) code paths.
double softplus(double x) noexcept;
double sigmoid(double x) noexcept;
double inverse_softplus(double y);

} // namespace vdt
