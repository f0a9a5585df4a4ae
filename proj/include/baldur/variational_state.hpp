#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "baldur/linalg.hpp"

namespace baldur {

// Gamma(shape, rate) prior parameters.
struct GammaPrior {
  double alpha0 = 1e-14;
  double beta0 = 1e-14;
};

struct HyperPriors {
  GammaPrior tau;
  GammaPrior psi;
  GammaPrior omega;
  GammaPrior delta;
  GammaPrior gamma;
};

// q(theta) = prod_i Gamma(theta_i | alpha_i, beta_i), rate parameterisation.
struct GammaQ {
  Vector alpha;
  Vector beta;

  static GammaQ from_prior(Index n, const GammaPrior& prior);

  Index size() const { return alpha.size(); }
  Vector mean() const { return alpha.cwiseQuotient(beta); }
  double mean(Index i) const { return alpha(i) / beta(i); }
  // <ln theta> = digamma(alpha) - ln(beta)
  Vector log_mean() const;
  // Sum of the per-element entropies.
  double entropy() const;
  // Sum over elements of E_q[ln Gamma(theta | prior)].
  double expected_log_prior(const GammaPrior& prior) const;

  bool valid() const;
};

// Elementwise alpha / beta.
Vector gamma_mean(const GammaQ& g);

// Gaussian over the rows of an R x K matrix, all rows sharing one K x K
// covariance (q(Z) over samples, q(V) over outputs).
struct SharedCovGaussian {
  Matrix mean;
  Matrix cov;
};

// Independent Gaussian per factor: column k of `mean` is the k-th factor's
// vector and cov[k] its covariance. Primal weights store <W>^T (D x K) with
// D x D blocks; dual weights store <A> (N~ x K) with N~ x N~ blocks.
struct FactorGaussian {
  Matrix mean;
  std::vector<Matrix> cov;
  // log|cov[k]|, kept from the factorisation of the precision. Dual blocks
  // can be too ill-conditioned to factor cov itself.
  std::vector<double> log_det;
};

// Independent scalar Gaussians, one per entry (q(Y) with diagonal covariance).
struct DiagonalGaussian {
  Matrix mean;
  Matrix var;
};

// <M^T M> = mean^T mean + rows * cov
Matrix second_moment(const SharedCovGaussian& q);
// <f_k f_k^T> = mean_k mean_k^T + cov_k
Matrix second_moment(const FactorGaussian& q, Index k);
// Elementwise <x^2> = mean^2 + var
Matrix second_moment(const DiagonalGaussian& q);

struct ViewState {
  std::string name;
  bool dual = false;
  FactorGaussian weights;
  GammaQ delta;  // K, factor-wise ARD
  GammaQ gamma;  // D_m, feature-wise ARD
  GammaPrior delta_prior;
  GammaPrior gamma_prior;
  Matrix H;  // N x K cached projection of this view
};

struct ModelState {
  Index K = 0;
  std::vector<ViewState> views;
  SharedCovGaussian Z;  // N x K
  SharedCovGaussian V;  // C x K
  DiagonalGaussian Y;   // N x C
  GammaQ tau;
  GammaQ psi;
  GammaQ omega;  // K
  Matrix xi;     // N x C
  GammaPrior tau_prior;
  GammaPrior psi_prior;
  GammaPrior omega_prior;

  // Sum of the cached projections of every view.
  Matrix H_sum() const;
  // Sum of the cached projections of every view but `m`.
  Matrix H_except(std::size_t m) const;

  // Shape and positivity invariants; returns an empty string when valid.
  std::string check_invariants() const;
};

}  // namespace baldur
