#pragma once

#include <vector>

#include <Eigen/Dense>

namespace baldur {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

struct JitterPolicy {
  double initial_rel = 1e-8;  // relative to the mean diagonal
  double max_rel = 1e-2;
  double growth = 10.0;
};

// Inverse of a symmetric positive-definite precision matrix together with
// log|precision^-1|. The factorization is attempted as given first; on failure
// a diagonal jitter is added and escalated per `policy`, and NumericalBreakdown
// is raised once it is exhausted.
struct CovarianceFromPrecision {
  Matrix covariance;
  double log_det_covariance = 0.0;
  double jitter_used = 0.0;
};

CovarianceFromPrecision invert_precision(const Matrix& precision,
                                         const JitterPolicy& policy = {});

// log|S| for a symmetric positive-definite S (NumericalBreakdown otherwise).
double log_det_spd(const Matrix& s);

bool is_symmetric(const Matrix& m, double tol = 1e-10);
bool is_positive_definite(const Matrix& m);

Matrix symmetrize(const Matrix& m);

// Removes the listed rows and columns (sorted, unique) from a square matrix.
Matrix drop_rows_cols(const Matrix& m, const std::vector<Index>& drop);
Matrix drop_cols(const Matrix& m, const std::vector<Index>& drop);
Matrix drop_rows(const Matrix& m, const std::vector<Index>& drop);
Vector drop_entries(const Vector& v, const std::vector<Index>& drop);

}  // namespace baldur
