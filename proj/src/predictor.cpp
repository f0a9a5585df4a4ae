#include "baldur/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "baldur/errors.hpp"
#include "baldur/logistic_bound.hpp"

namespace baldur {

Index FittedView::active_count() const { return std::count(active.begin(), active.end(), true); }

std::vector<Index> FittedView::active_indices() const {
  std::vector<Index> out;
  for (std::size_t j = 0; j < active.size(); ++j) {
    if (active[j]) out.push_back(static_cast<Index>(j));
  }
  return out;
}

Matrix FittedView::implied_weights() const {
  if (pruned) return {};
  if (dual) return (relevance_vectors.transpose() * weights).transpose();
  return weights;
}

Matrix project_new(const FittedModel& model, const MultiViewDataset& x_star) {
  const Index n = x_star.n_samples();
  Matrix proj = Matrix::Zero(n, model.K);
  for (const auto& fv : model.views) {
    if (fv.pruned) continue;
    auto it = std::find_if(x_star.views.begin(), x_star.views.end(),
                           [&](const ViewMatrix& v) { return v.view_name == fv.name; });
    if (it == x_star.views.end()) {
      throw Error(ErrorKind::ViewMissing, "input lacks view '" + fv.name + "'");
    }
    if (it->cols() != fv.original_features()) {
      throw Error(ErrorKind::FeatureCountMismatch,
                  "view '" + fv.name + "' has " + std::to_string(it->cols()) + " features, model expects " +
                      std::to_string(fv.original_features()));
    }
    const Matrix x = apply_standardizer(it->values, fv.standardizer)(Eigen::all,
                                                                    fv.active_indices());
    if (fv.dual) {
      proj += (x * fv.relevance_vectors.transpose()) * fv.weights;
    } else {
      proj += x * fv.weights.transpose();
    }
  }
  return proj;
}

RegressionMoments predictive_regression_from_projection(const FittedModel& model,
                                                        const Matrix& projection) {
  RegressionMoments out;
  out.mean = projection * model.V_mean.transpose();
  const Vector head_power = model.V_mean.rowwise().squaredNorm();
  const Vector var = (1.0 / model.psi_mean + head_power.array() / model.tau_mean).matrix();
  out.var = var.transpose().replicate(projection.rows(), 1);
  return out;
}

RegressionMoments predictive_regression(const FittedModel& model, const MultiViewDataset& x_star) {
  return predictive_regression_from_projection(model, project_new(model, x_star));
}

double moderated_sigmoid(double mean, double var) {
  const double p = sigmoid(mean / std::sqrt(1.0 + std::numbers::pi / 8.0 * var));
  // Kept strictly inside (0, 1) so labels and log-losses stay well defined.
  return std::clamp(p, std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
}

Matrix moderated_sigmoid(const Matrix& mean, const Matrix& var) {
  Matrix p(mean.rows(), mean.cols());
  for (Index j = 0; j < mean.cols(); ++j) {
    for (Index i = 0; i < mean.rows(); ++i) p(i, j) = moderated_sigmoid(mean(i, j), var(i, j));
  }
  return p;
}

Prediction predict_proba(const FittedModel& model, const MultiViewDataset& x_star) {
  auto moments = predictive_regression(model, x_star);
  Prediction out;
  out.probabilities = moderated_sigmoid(moments.mean, moments.var);
  out.regression_mean = std::move(moments.mean);
  out.regression_var = std::move(moments.var);
  return out;
}

Matrix predict_label(const Matrix& probabilities, double threshold) {
  return (probabilities.array() >= threshold).cast<double>().matrix();
}

}  // namespace baldur
