// SPDX-License-Identifier: Apache-2.0
/**
 * @file   varlayer.hpp
 * @brief  Mean-field Gaussian variational last layer.
 *
 * The weights and bias of the final linear map carry a factorized Gaussian
 * posterior N(mu, softplus(rho)^2) against an isotropic N(0, prior_sigma^2)
 * prior. Training draws one reparameterized sample per batch and minimizes
 *
 *     loss = mean squared error + beta * KL(q || p),
 *
 * i.e. the negated ELBO with a unit-variance Gaussian likelihood (constants
 * dropped). Prediction runs S independent passes, each drawing its own
 * sample from a derived substream, and summarizes them by the mean and the
 * 2.5% / 97.5% quantiles.
 */
#pragma once

#include "vdt/autodiff.hpp"

#include <functional>
#include <string>
#include <vector>

namespace vdt {

struct GaussianPosterior {
  std::vector<double> mu;
  std::vector<double> rho;

  std::size_t size() const noexcept { return mu.size(); }
  double sigma(std::size_t i) const { return softplus(rho.at(i)); }
};

struct IsotropicPrior {
  double prior_sigma = 1.0;
};

/// θ = mu + softplus(rho) ⊙ ε with ε drawn from a copy of `stream`.
std::vector<double> sample_theta(const GaussianPosterior &post, const RngStream &stream);

/// Closed-form Σ_i ln(s_p/σ_i) + (σ_i² + μ_i²)/(2 s_p²) − ½.
double kl_divergence(const GaussianPosterior &post, const IsotropicPrior &prior);

/// MSE(pred, target) + beta · KL(post ‖ prior).
double vdt_loss(const Tensor2 &pred, const Tensor2 &target, const GaussianPosterior &post,
                const IsotropicPrior &prior, double beta);

class VariationalLinear {
public:
  static constexpr double kInitSigma = 0.05;

  VariationalLinear() = default;
  VariationalLinear(const std::string &name, std::size_t in, std::size_t out);

  std::size_t in_dim() const noexcept { return mu_w_.value.cols(); }
  std::size_t out_dim() const noexcept { return mu_w_.value.rows(); }
  std::size_t parameter_count() const noexcept { return mu_w_.value.size() + mu_b_.value.size(); }

  /// Means use the fan-in uniform init; every scale starts at softplus(rho) = 0.05.
  void init(RngStream &rng);

  /// Sampled forward when eps != nullptr (ε drawn from a copy of *eps),
  /// posterior-mean forward otherwise.
  Var forward(Tape &tape, Var x, const RngStream *eps);
  Var kl(Tape &tape, const IsotropicPrior &prior);

  GaussianPosterior posterior() const;
  void set_posterior(const GaussianPosterior &post);

  /// Per-output observation noise scale added to predictive draws.
  Parameter &noise() noexcept { return noise_; }
  const Parameter &noise() const noexcept { return noise_; }

  Parameter &mu_weight() noexcept { return mu_w_; }
  Parameter &rho_weight() noexcept { return rho_w_; }
  Parameter &mu_bias() noexcept { return mu_b_; }
  Parameter &rho_bias() noexcept { return rho_b_; }

  void collect(ParameterList &out);
  void collect_buffers(ParameterList &out) { out.push_back(&noise_); }

private:
  Parameter mu_w_, rho_w_, mu_b_, rho_b_;
  Parameter noise_;
};

struct PredictiveSummary {
  Tensor2 mean;  ///< N×O, average of the draws
  Tensor2 lower; ///< N×O, 2.5% quantile
  Tensor2 upper; ///< N×O, 97.5% quantile
  std::vector<Tensor2> draws; ///< S entries of N×O
  std::size_t samples = 0;

  /// Draws of input row `row`, output `col`, in pass order.
  std::vector<double> draws_at(std::size_t row, std::size_t col) const;
};

/// Builds the summary from an already collected draw set (S ≥ 2).
PredictiveSummary summarize_draws(std::vector<Tensor2> draws);

/// One stochastic pass: returns N×O predictions for the given pass stream.
using SampledForward = std::function<Tensor2(const RngStream &pass_stream)>;

/// S passes, pass s using stream.derive(s). Throws when S < 2.
PredictiveSummary predict_with_ci(const SampledForward &pass, std::size_t samples,
                                  const RngStream &stream);

/// Per input row: mean over outputs of the population std of the draws.
std::vector<double> uncertainty_score(const PredictiveSummary &summary);

} // namespace vdt
