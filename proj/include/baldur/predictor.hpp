#pragma once

#include <string>
#include <vector>

#include "baldur/data_model.hpp"
#include "baldur/linalg.hpp"

namespace baldur {

// A view as frozen after training. Pruned views are kept (with `pruned` set
// and no weights) so feature accounting still sees their original width.
struct FittedView {
  std::string name;
  bool dual = false;
  bool pruned = false;
  std::vector<std::string> feature_names;  // all original columns
  Standardizer standardizer;               // all original columns
  std::vector<bool> active;                // over original columns
  Matrix weights;             // primal: <W> (K x D_active); dual: <A> (N~ x K)
  Matrix relevance_vectors;   // dual only: standardized X~ (N~ x D_active)

  Index original_features() const { return static_cast<Index>(feature_names.size()); }
  Index active_count() const;
  std::vector<Index> active_indices() const;
  // K x D_active weights; X~^T <A> transposed for dual views.
  Matrix implied_weights() const;
};

struct FittedModel {
  Index K = 0;
  std::vector<FittedView> views;
  std::vector<std::string> class_names;
  Matrix V_mean;  // C x K
  Matrix V_cov;   // K x K
  double tau_mean = 1.0;
  double psi_mean = 1.0;

  Index n_classes() const { return V_mean.rows(); }
};

struct Prediction {
  Matrix probabilities;    // N* x C
  Matrix regression_mean;  // N* x C
  Matrix regression_var;   // N* x C
};

// Sum over retained views of the standardized, masked projection
// x* <W>^T (primal) or x* X~^T <A> (dual). Views are matched by name; views
// the model pruned are ignored whether present or not.
Matrix project_new(const FittedModel& model, const MultiViewDataset& x_star);

// mean_c = proj <v_c>^T, var_c = 1/<psi> + <v_c><v_c>^T / <tau>.
struct RegressionMoments {
  Matrix mean;
  Matrix var;
};
RegressionMoments predictive_regression(const FittedModel& model, const MultiViewDataset& x_star);
RegressionMoments predictive_regression_from_projection(const FittedModel& model,
                                                        const Matrix& projection);

// sigmoid(mean / sqrt(1 + pi/8 var)), elementwise.
double moderated_sigmoid(double mean, double var);
Matrix moderated_sigmoid(const Matrix& mean, const Matrix& var);

Prediction predict_proba(const FittedModel& model, const MultiViewDataset& x_star);

// p >= threshold -> 1.
Matrix predict_label(const Matrix& probabilities, double threshold = 0.5);

}  // namespace baldur
