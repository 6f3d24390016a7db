// SPDX-License-Identifier: Apache-2.0
/**
 * @file   pinn.hpp
 * @brief  Physics-informed latent rollouts and the variational battery model.
 *
 * A latent state x_n advances by explicit Euler, x_{n+1} = x_n + f(x_n, u_n)·dt,
 * and is decoded to observations by h(x_n). The loss combines the data error
 * with the mean squared residual of the difference quotient against f:
 *
 *     L = mean‖y_n − h(x_n)‖² + λ · mean‖(x_{n+1} − x_n)/dt − f(x_n, u_n)‖²
 *
 * Both means run over time steps and vector components.
 *
 * The battery instance uses a three-state equivalent circuit: bulk charge
 * q_b, surface-overpotential charge q_sp and diffusion charge q_s, with
 *
 *     q_b'  = −i
 *     q_sp' = i − (1/R_sp)·q_sp/C_sp
 *     q_s'  = i − q_s/τ_s
 *     V     = V_b(q_b, SOC) − i·R_s − q_sp/C_sp − q_s/C_s
 *
 * SOC, V_b and 1/R_sp come from three small networks, each ending in a
 * variational layer. 1/C_s defaults to 0, which drops the diffusion term
 * from the terminal voltage.
 */
#pragma once

#include "vdt/backbones.hpp"
#include "vdt/train.hpp"
#include "vdt/varlayer.hpp"

#include <span>
#include <string>
#include <vector>

namespace vdt {

/// One discharge: uniformly spaced time stamps, current (A) and voltage (V).
struct DischargeProfile {
  int id = 0;
  std::vector<double> t;
  std::vector<double> current;
  std::vector<double> voltage;

  std::size_t size() const noexcept { return t.size(); }
  /// Throws on unequal lengths, fewer than 2 steps or non-uniform spacing.
  void validate() const;
  double dt() const;
};

// ---- generic model ---------------------------------------------------------------

class PinnModel {
public:
  PinnModel(const std::string &name, std::size_t state_dim, std::size_t input_dim, std::size_t output_dim,
            std::vector<std::size_t> f_hidden, std::vector<std::size_t> h_hidden, double dt,
            double lambda = 1.0);

  std::size_t state_dim() const noexcept { return state_dim_; }
  std::size_t input_dim() const noexcept { return input_dim_; }
  double dt() const noexcept { return dt_; }
  double lambda() const noexcept { return lambda_; }
  void set_lambda(double lambda);
  Mlp &f_net() noexcept { return f_net_; }
  Mlp &h_net() noexcept { return h_net_; }

  void init(RngStream &rng);
  void collect(ParameterList &out);

  /// f(x, u) for B×d states and B×u inputs.
  Var vector_field(Var x, Var u);
  Var euler_step(Var x, Var u);
  Tensor2 euler_step(const Tensor2 &x, const Tensor2 &u);
  Var decode(Var x);

  /// Returns inputs.size() + 1 states starting with x0.
  std::vector<Var> rollout(Var x0, std::span<const Var> inputs);
  /// Plain rollout of one trajectory: x0 is 1×d, inputs N×u; returns (N+1)×d.
  Tensor2 rollout(const Tensor2 &x0, const Tensor2 &inputs);

  /// Mean squared difference-quotient residual over steps and components.
  /// Needs at least two states and states.size() − 1 inputs.
  Var physics_loss(std::span<const Var> states, std::span<const Var> inputs);
  /// Same on a supplied N×d trajectory with N×u (or (N−1)×u) inputs.
  Var physics_loss(Tape &tape, const Tensor2 &states, const Tensor2 &inputs);

  /// L_data(h(states), targets) + λ·L_phys(states, inputs) on supplied states.
  Var total_loss(Tape &tape, const Tensor2 &states, const Tensor2 &inputs, const Tensor2 &targets);
  /// Same with the states produced by rolling out from x0 (targets align with
  /// states 0..N−1 of the rollout, inputs are N×u).
  Var rollout_loss(Tape &tape, const Tensor2 &x0, const Tensor2 &inputs, const Tensor2 &targets);

private:
  std::size_t state_dim_;
  std::size_t input_dim_;
  double dt_;
  double lambda_;
  Mlp f_net_;
  Mlp h_net_;
};

/// Plain-value physics loss on an N×d trajectory.
double physics_loss(PinnModel &model, const Tensor2 &states, const Tensor2 &inputs);

// ---- battery -------------------------------------------------------------------------

struct EcmConstants {
  double q_max = 7200.0;   ///< charge at full SOC (C); networks see q_b / q_max
  double c_sp = 1200.0;    ///< surface capacitance (F)
  double r_s = 0.04;       ///< series resistance (Ω)
  double tau_s = 600.0;    ///< diffusion relaxation time (s)
  double inv_cs = 0.0;     ///< 1/C_s (1/F), 0 drops the diffusion voltage
  double v_nominal = 3.7;  ///< offset added to the V_b network output

  void validate() const;
};

/// The three state-dependent pieces of the circuit, as differentiable maps.
class CellComponents {
public:
  virtual ~CellComponents() = default;
  /// SOC from normalized bulk charge (B×1 → B×1).
  virtual Var soc(Var q_norm, const RngStream *eps) = 0;
  /// V_b from normalized bulk charge and SOC.
  virtual Var open_circuit(Var q_norm, Var soc, const RngStream *eps) = 0;
  /// 1/R_sp from SOC.
  virtual Var inv_rsp(Var soc, const RngStream *eps) = 0;
};

struct CellLatent {
  Var q_b, q_sp, q_s;
};

struct CellRollout {
  std::vector<Var> voltage;       ///< N entries, B×1
  std::vector<CellLatent> states; ///< N + 1 entries
  std::vector<CellLatent> rates;  ///< N entries, f(x_n, i_n)
};

/**
 * Explicit-Euler rollout of the circuit for B equal-length current profiles
 * (currents is B×N). Starts fully charged and relaxed: q_b = q_max, q_sp = q_s = 0.
 */
CellRollout simulate_cell(Tape &tape, CellComponents &cell, const EcmConstants &ecm, const Tensor2 &currents,
                          double dt, const RngStream *eps);

/// Physics residual of a rollout, mean over steps and the three components.
Var cell_physics_loss(const CellRollout &roll, double dt);

/// Analytic cell used to generate synthetic discharges. Capacity fades and
/// the surface resistance grows with the discharge index.
class ReferenceCell final : public CellComponents {
public:
  struct Ageing {
    double capacity_fade = 0.0;  ///< fraction of q_max lost per discharge
    double resistance_growth = 0.0; ///< fractional R_sp growth per discharge
  };
  ReferenceCell(const EcmConstants &ecm, Ageing ageing, std::size_t discharge_index);

  Var soc(Var q_norm, const RngStream *eps) override;
  Var open_circuit(Var q_norm, Var soc, const RngStream *eps) override;
  Var inv_rsp(Var soc, const RngStream *eps) override;

  static constexpr double kRsp0 = 0.05;

private:
  double capacity_ratio_; ///< q_max / effective capacity
  double conductance_;    ///< 1/R_sp at this age
};

/// Voltages of one discharge simulated with the given components (deterministic).
std::vector<double> simulate_voltage(CellComponents &cell, const EcmConstants &ecm,
                                     std::span<const double> current, double dt);

/// The variational battery model: three subnets, each ending in a variational layer.
class BattNN final : public CellComponents {
public:
  explicit BattNN(const EcmConstants &ecm = {}, double scale = 1.0);

  void init(RngStream &rng);
  const EcmConstants &ecm() const noexcept { return ecm_; }
  double lambda() const noexcept { return lambda_; }
  void set_lambda(double l) { lambda_ = l; }

  Var soc(Var q_norm, const RngStream *eps) override;
  Var open_circuit(Var q_norm, Var soc, const RngStream *eps) override;
  Var inv_rsp(Var soc, const RngStream *eps) override;

  /// B×N predicted voltages for B equal-length current profiles; one θ per call.
  CellRollout forward(Tape &tape, const Tensor2 &currents, double dt, const RngStream *eps);
  /// Sum of the three heads' KL terms.
  Var kl(Tape &tape, const IsotropicPrior &prior);

  ParameterList trainable();
  /// Trainable parameters plus the observation-noise buffer.
  ParameterList state();
  Parameter &noise() noexcept { return noise_; }

  VariationalLinear &soc_head() noexcept { return soc_head_; }
  VariationalLinear &vb_head() noexcept { return vb_head_; }
  VariationalLinear &rsp_head() noexcept { return rsp_head_; }

private:
  EcmConstants ecm_;
  double lambda_ = 1.0;
  Mlp soc_net_, vb_net_, rsp_net_;
  VariationalLinear soc_head_, vb_head_, rsp_head_;
  Parameter noise_;
};

/// Voltage prediction of one profile (posterior mean when eps is null).
std::vector<double> battnn_forward(BattNN &model, const DischargeProfile &profile, const RngStream *eps = nullptr);

/// Mean squared voltage error + λ·L_phys + β·KL over the given profiles.
/// Profiles of equal length are rolled out together.
Var battnn_total_loss(Tape &tape, BattNN &model, std::span<const DischargeProfile *const> profiles,
                      double beta, const IsotropicPrior &prior, const RngStream *eps);

/// Minibatch training over whole profiles; then sets the noise buffer to the
/// RMS posterior-mean residual when fit_noise is true.
FitResult train_battnn(BattNN &model, std::span<const DischargeProfile> profiles, const TrainConfig &cfg,
                       AdamState *optimizer = nullptr, bool fit_noise = true);

/// Per-profile predictive summaries (T×1 each), S passes per profile group.
std::vector<PredictiveSummary> predict_battnn(BattNN &model, std::span<const DischargeProfile> profiles,
                                              std::size_t samples, const RngStream &stream,
                                              bool observation_noise = true);

} // namespace vdt
