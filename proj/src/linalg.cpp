#include "baldur/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "baldur/errors.hpp"

namespace baldur {

namespace {

std::vector<Index> kept_indices(Index n, const std::vector<Index>& drop) {
  std::vector<Index> keep;
  keep.reserve(static_cast<std::size_t>(n));
  auto it = drop.begin();
  for (Index i = 0; i < n; ++i) {
    while (it != drop.end() && *it < i) ++it;
    if (it != drop.end() && *it == i) continue;
    keep.push_back(i);
  }
  return keep;
}

}  // namespace

CovarianceFromPrecision invert_precision(const Matrix& precision, const JitterPolicy& policy) {
  const Index n = precision.rows();
  CovarianceFromPrecision out;
  if (n == 0) return out;
  if (!precision.allFinite()) {
    throw Error(ErrorKind::NumericalBreakdown, "non-finite entry in precision matrix");
  }
  const double mean_diag = std::abs(precision.diagonal().mean());
  double jitter = 0.0;
  Eigen::LLT<Matrix> llt;
  for (;;) {
    if (jitter == 0.0) {
      llt.compute(precision);
    } else {
      Matrix p = precision;
      p.diagonal().array() += jitter;
      llt.compute(p);
    }
    if (llt.info() == Eigen::Success && llt.matrixLLT().diagonal().minCoeff() > 0.0) break;
    const double next = jitter == 0.0 ? policy.initial_rel * mean_diag : jitter * policy.growth;
    if (!(next > 0.0) || next > policy.max_rel * mean_diag) {
      std::ostringstream msg;
      msg << "Cholesky failed for " << n << "x" << n << " precision after jitter escalation";
      throw Error(ErrorKind::NumericalBreakdown, msg.str());
    }
    jitter = next;
  }
  const Matrix l_inv = llt.matrixL().solve(Matrix::Identity(n, n));
  out.covariance = l_inv.transpose() * l_inv;
  out.log_det_covariance = -2.0 * llt.matrixLLT().diagonal().array().log().sum();
  out.jitter_used = jitter;
  return out;
}

double log_det_spd(const Matrix& s) {
  if (s.rows() == 0) return 0.0;
  Eigen::LLT<Matrix> llt(s);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::NumericalBreakdown, "log-determinant of a non-PD matrix");
  }
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

bool is_symmetric(const Matrix& m, double tol) {
  if (m.rows() != m.cols()) return false;
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * std::max(1.0, m.cwiseAbs().maxCoeff());
}

bool is_positive_definite(const Matrix& m) {
  if (m.rows() != m.cols()) return false;
  if (m.rows() == 0) return true;
  Eigen::LLT<Matrix> llt(m);
  return llt.info() == Eigen::Success && llt.matrixLLT().diagonal().minCoeff() > 0.0;
}

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

Matrix drop_rows_cols(const Matrix& m, const std::vector<Index>& drop) {
  const auto keep = kept_indices(m.rows(), drop);
  return m(keep, keep);
}

Matrix drop_cols(const Matrix& m, const std::vector<Index>& drop) {
  return m(Eigen::all, kept_indices(m.cols(), drop));
}

Matrix drop_rows(const Matrix& m, const std::vector<Index>& drop) {
  return m(kept_indices(m.rows(), drop), Eigen::all);
}

Vector drop_entries(const Vector& v, const std::vector<Index>& drop) {
  return v(kept_indices(v.size(), drop));
}

}  // namespace baldur
