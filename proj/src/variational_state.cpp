#include "baldur/variational_state.hpp"

#include <cmath>
#include <sstream>

#include <boost/math/special_functions/digamma.hpp>

namespace baldur {

GammaQ GammaQ::from_prior(Index n, const GammaPrior& prior) {
  return {Vector::Constant(n, prior.alpha0), Vector::Constant(n, prior.beta0)};
}

Vector GammaQ::log_mean() const {
  Vector out(alpha.size());
  for (Index i = 0; i < alpha.size(); ++i) {
    out(i) = boost::math::digamma(alpha(i)) - std::log(beta(i));
  }
  return out;
}

double GammaQ::entropy() const {
  double h = 0.0;
  for (Index i = 0; i < alpha.size(); ++i) {
    const double a = alpha(i);
    h += a - std::log(beta(i)) + std::lgamma(a) + (1.0 - a) * boost::math::digamma(a);
  }
  return h;
}

double GammaQ::expected_log_prior(const GammaPrior& prior) const {
  const double norm = prior.alpha0 * std::log(prior.beta0) - std::lgamma(prior.alpha0);
  double out = 0.0;
  for (Index i = 0; i < alpha.size(); ++i) {
    const double log_mean = boost::math::digamma(alpha(i)) - std::log(beta(i));
    out += norm + (prior.alpha0 - 1.0) * log_mean - prior.beta0 * alpha(i) / beta(i);
  }
  return out;
}

bool GammaQ::valid() const {
  return alpha.size() == beta.size() && (alpha.array() > 0.0).all() &&
         (beta.array() > 0.0).all() && alpha.allFinite() && beta.allFinite();
}

Vector gamma_mean(const GammaQ& g) { return g.mean(); }

Matrix second_moment(const SharedCovGaussian& q) {
  return q.mean.transpose() * q.mean + static_cast<double>(q.mean.rows()) * q.cov;
}

Matrix second_moment(const FactorGaussian& q, Index k) {
  return q.mean.col(k) * q.mean.col(k).transpose() + q.cov[static_cast<std::size_t>(k)];
}

Matrix second_moment(const DiagonalGaussian& q) {
  return q.mean.array().square().matrix() + q.var;
}

Matrix ModelState::H_sum() const {
  Matrix out = Matrix::Zero(Z.mean.rows(), K);
  for (const auto& v : views) out += v.H;
  return out;
}

Matrix ModelState::H_except(std::size_t m) const {
  Matrix out = Matrix::Zero(Z.mean.rows(), K);
  for (std::size_t i = 0; i < views.size(); ++i) {
    if (i != m) out += views[i].H;
  }
  return out;
}

std::string ModelState::check_invariants() const {
  std::ostringstream err;
  const Index n = Z.mean.rows();
  const auto check_cov = [&](const Matrix& c, Index dim, const std::string& what) {
    if (c.rows() != dim || c.cols() != dim) {
      err << what << " covariance has wrong shape; ";
    } else if (!is_symmetric(c) || !is_positive_definite(c)) {
      err << what << " covariance is not symmetric PD; ";
    }
  };
  if (Z.mean.cols() != K) err << "Z has " << Z.mean.cols() << " columns, K=" << K << "; ";
  check_cov(Z.cov, K, "Z");
  if (V.mean.cols() != K) err << "V has wrong K; ";
  check_cov(V.cov, K, "V");
  if (omega.size() != K) err << "omega has wrong K; ";
  for (const auto* g : {&tau, &psi, &omega}) {
    if (!g->valid()) err << "invalid Gamma factor; ";
  }
  if ((xi.array() < 0.0).any()) err << "negative xi; ";
  if ((Y.var.array() <= 0.0).any()) err << "non-positive Y variance; ";
  for (const auto& v : views) {
    if (v.weights.mean.cols() != K || static_cast<Index>(v.weights.cov.size()) != K ||
        v.weights.log_det.size() != v.weights.cov.size()) {
      err << "view " << v.name << " weights have wrong K; ";
      continue;
    }
    for (Index k = 0; k < K; ++k) {
      check_cov(v.weights.cov[static_cast<std::size_t>(k)], v.weights.mean.rows(),
                "view " + v.name + " factor " + std::to_string(k));
    }
    if (v.delta.size() != K) err << "view " << v.name << " delta has wrong K; ";
    if (!v.delta.valid() || !v.gamma.valid()) err << "view " << v.name << " invalid ARD; ";
    if (v.H.rows() != n || v.H.cols() != K) err << "view " << v.name << " H has wrong shape; ";
  }
  return err.str();
}

}  // namespace baldur
