// SPDX-License-Identifier: Apache-2.0
#include "vdt/varlayer.hpp"

#include "vdt/backbones.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vdt {

std::vector<double> sample_theta(const GaussianPosterior &post, const RngStream &stream) {
  if (post.mu.size() != post.rho.size()) throw std::invalid_argument("sample_theta: mu/rho length mismatch");
  const auto eps = gaussian_draw(stream, post.size());
  std::vector<double> theta(post.size());
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = post.mu[i] + softplus(post.rho[i]) * eps[i];
  return theta;
}

double kl_divergence(const GaussianPosterior &post, const IsotropicPrior &prior) {
  if (!(prior.prior_sigma > 0.0)) throw std::invalid_argument("prior_sigma must be positive");
  if (post.mu.size() != post.rho.size()) throw std::invalid_argument("kl_divergence: mu/rho length mismatch");
  const double p = prior.prior_sigma, p2 = p * p;
  double acc = 0.0;
  for (std::size_t i = 0; i < post.size(); ++i) {
    const double s = softplus(post.rho[i]);
    acc += std::log(p / s) + (s * s + post.mu[i] * post.mu[i]) / (2.0 * p2) - 0.5;
  }
  return acc;
}

double vdt_loss(const Tensor2 &pred, const Tensor2 &target, const GaussianPosterior &post,
                const IsotropicPrior &prior, double beta) {
  if (!pred.same_shape(target)) {
    throw std::invalid_argument("vdt_loss: shape mismatch " + pred.shape_string() + " vs " +
                                target.shape_string());
  }
  if (beta < 0.0) throw std::invalid_argument("vdt_loss: beta must be non-negative");
  if (pred.empty()) throw std::invalid_argument("vdt_loss: empty batch");
  double sq = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sq += (pred[i] - target[i]) * (pred[i] - target[i]);
  const double mse = sq / static_cast<double>(pred.size());
  if (beta == 0.0) return mse;
  return mse + beta * kl_divergence(post, prior);
}

// ---- VariationalLinear ----------------------------------------------------------

VariationalLinear::VariationalLinear(const std::string &name, std::size_t in, std::size_t out)
    : mu_w_(name + ".mu_W", Tensor2(out, in), ParamRole::variational),
      rho_w_(name + ".rho_W", Tensor2(out, in), ParamRole::variational),
      mu_b_(name + ".mu_b", Tensor2(1, out), ParamRole::variational),
      rho_b_(name + ".rho_b", Tensor2(1, out), ParamRole::variational),
      noise_(name + ".noise", Tensor2(1, out), ParamRole::variational) {}

void VariationalLinear::init(RngStream &rng) {
  init_uniform_fan_in(mu_w_.value, in_dim(), rng);
  mu_b_.value.fill(0.0);
  const double rho0 = inverse_softplus(kInitSigma);
  rho_w_.value.fill(rho0);
  rho_b_.value.fill(rho0);
  noise_.value.fill(0.0);
}

Var VariationalLinear::forward(Tape &tape, Var x, const RngStream *eps) {
  const Tensor2 &xv = tape.value(x);
  if (xv.cols() != in_dim()) {
    throw std::invalid_argument("variational layer: input shape " + xv.shape_string() +
                                " incompatible with weight shape " + mu_w_.value.shape_string());
  }
  Var mw = tape.param(mu_w_), mb = tape.param(mu_b_);
  if (eps == nullptr) return affine(x, mw, mb);
  const auto draws = gaussian_draw(*eps, parameter_count());
  const std::size_t nw = mu_w_.value.size();
  Tensor2 ew(mu_w_.value.rows(), mu_w_.value.cols(),
             std::vector<double>(draws.begin(), draws.begin() + static_cast<std::ptrdiff_t>(nw)));
  Tensor2 eb(1, out_dim(), std::vector<double>(draws.begin() + static_cast<std::ptrdiff_t>(nw), draws.end()));
  Var w = reparameterize(mw, tape.param(rho_w_), ew);
  Var b = reparameterize(mb, tape.param(rho_b_), eb);
  return affine(x, w, b);
}

Var VariationalLinear::kl(Tape &tape, const IsotropicPrior &prior) {
  return add(gaussian_kl(tape.param(mu_w_), tape.param(rho_w_), prior.prior_sigma),
             gaussian_kl(tape.param(mu_b_), tape.param(rho_b_), prior.prior_sigma));
}

GaussianPosterior VariationalLinear::posterior() const {
  GaussianPosterior p;
  p.mu.assign(mu_w_.value.data().begin(), mu_w_.value.data().end());
  p.mu.insert(p.mu.end(), mu_b_.value.data().begin(), mu_b_.value.data().end());
  p.rho.assign(rho_w_.value.data().begin(), rho_w_.value.data().end());
  p.rho.insert(p.rho.end(), rho_b_.value.data().begin(), rho_b_.value.data().end());
  return p;
}

void VariationalLinear::set_posterior(const GaussianPosterior &post) {
  if (post.mu.size() != parameter_count() || post.rho.size() != parameter_count())
    throw std::invalid_argument("set_posterior: size mismatch");
  const std::size_t nw = mu_w_.value.size();
  for (std::size_t i = 0; i < nw; ++i) {
    mu_w_.value[i] = post.mu[i];
    rho_w_.value[i] = post.rho[i];
  }
  for (std::size_t i = 0; i < out_dim(); ++i) {
    mu_b_.value[i] = post.mu[nw + i];
    rho_b_.value[i] = post.rho[nw + i];
  }
}

void VariationalLinear::collect(ParameterList &out) {
  out.push_back(&mu_w_);
  out.push_back(&rho_w_);
  out.push_back(&mu_b_);
  out.push_back(&rho_b_);
}

// ---- prediction ---------------------------------------------------------------

std::vector<double> PredictiveSummary::draws_at(std::size_t row, std::size_t col) const {
  std::vector<double> v(draws.size());
  for (std::size_t s = 0; s < draws.size(); ++s) v[s] = draws[s](row, col);
  return v;
}

PredictiveSummary summarize_draws(std::vector<Tensor2> draws) {
  if (draws.size() < 2) throw std::invalid_argument("need >=2 samples for quantiles");
  const std::size_t n = draws.front().rows(), o = draws.front().cols();
  for (const auto &d : draws)
    if (d.rows() != n || d.cols() != o) throw std::invalid_argument("summarize_draws: ragged draws");
  PredictiveSummary s;
  s.samples = draws.size();
  s.mean = Tensor2(n, o);
  s.lower = Tensor2(n, o);
  s.upper = Tensor2(n, o);
  std::vector<double> column(draws.size());
  for (std::size_t i = 0; i < n * o; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < draws.size(); ++k) {
      column[k] = draws[k][i];
      acc += column[k];
    }
    s.mean[i] = acc / static_cast<double>(draws.size());
    std::sort(column.begin(), column.end());
    s.lower[i] = quantile_sorted(column, 0.025);
    s.upper[i] = quantile_sorted(column, 0.975);
  }
  s.draws = std::move(draws);
  return s;
}

PredictiveSummary predict_with_ci(const SampledForward &pass, std::size_t samples,
                                  const RngStream &stream) {
  if (samples < 2) throw std::invalid_argument("need >=2 samples for quantiles");
  std::vector<Tensor2> draws;
  draws.reserve(samples);
  for (std::size_t s = 0; s < samples; ++s) draws.push_back(pass(stream.derive(s)));
  return summarize_draws(std::move(draws));
}

std::vector<double> uncertainty_score(const PredictiveSummary &summary) {
  const std::size_t n = summary.mean.rows(), o = summary.mean.cols();
  std::vector<double> score(n, 0.0);
  if (summary.draws.empty() || o == 0) return score;
  const double S = static_cast<double>(summary.draws.size());
  for (std::size_t r = 0; r < n; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < o; ++c) {
      const double m = summary.mean(r, c);
      double var = 0.0;
      for (const auto &d : summary.draws) var += (d(r, c) - m) * (d(r, c) - m);
      acc += std::sqrt(var / S);
    }
    score[r] = acc / static_cast<double>(o);
  }
  return score;
}

} // namespace vdt
