#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "baldur/data_model.hpp"
#include "baldur/inference.hpp"
#include "baldur/predictor.hpp"

namespace baldur {

// Forward sampler of the generative model:
//   X_m ~ N(0, I), W_m sparse, Z = sum_m X_m W_m^T + e_Z, Y = Z V^T + e_Y,
//   t ~ Bernoulli(sigmoid(Y)).
struct SynthConfig {
  Index n_samples = 200;
  std::vector<Index> view_widths{20, 20};
  std::vector<Index> relevant{5, 5};
  Index K_true = 2;
  Index n_classes = 1;
  double tau_true = 10.0;
  double psi_true = 10.0;
  double weight_sd = 1.0;
  // t = 1[y > 0] instead of a Bernoulli draw. With large tau/psi this gives
  // linearly separable labels.
  bool hard_labels = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthResult {
  MultiViewDataset dataset;
  std::vector<Matrix> W_true;                    // K_true x D_m per view
  std::vector<std::vector<bool>> relevant_mask;  // D_m per view
  Matrix V_true;                                 // C x K_true
};

SynthResult synth_generate(const SynthConfig& config);

struct MetricsReport {
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<double> auc;  // absent when only one class is present
  std::optional<double> percent_features_selected;
};

// Rank-statistic AUC with average ranks for ties. SingleClassInput if y_true
// holds a single class.
double compute_auc(const Vector& y_true, const Vector& y_prob);

// Threshold rule as predict_label (ties positive). Precision with no
// predicted positives is reported as 0.
MetricsReport compute_metrics(const Vector& y_true, const Vector& y_prob, double threshold = 0.5);

// Macro average of compute_metrics over the columns of an N x C problem.
MetricsReport compute_metrics(const Matrix& y_true, const Matrix& y_prob, double threshold = 0.5);

// 100 * (active features across surviving views) / (all original features).
double percent_features_selected(const FittedModel& model);

struct FeatureWeight {
  std::string name;
  std::vector<double> abs_weight;  // one per latent factor
  double total = 0.0;
};

struct ViewFeatureReport {
  std::string view;
  std::vector<FeatureWeight> features;  // sorted by descending total
};

// Surviving views only; features whose weights are all zero are omitted.
std::vector<ViewFeatureReport> feature_report(const FittedModel& model);

struct FoldResult {
  Index fold = 0;
  MetricsReport metrics;
  bool converged = false;
  int iterations = 0;
  Index K = 0;
  // Every factor was pruned; the fold was scored with the training base rate.
  bool null_model = false;
};

struct AggregateMetric {
  double mean = 0.0;
  double stddev = 0.0;  // sample (n - 1) standard deviation
  Index count = 0;
};

struct CvReport {
  std::vector<FoldResult> folds;
  std::vector<Fold> splits;
  AggregateMetric accuracy, balanced_accuracy, precision, recall, f1, auc, percent_features;
};

// Fits on each training split (standardizers refit per fold) and evaluates on
// the held-out split. A fold whose fit ends in AllFactorsPruned predicts the
// training positive rate for every test row (AUC 0.5, no features selected)
// instead of aborting the whole run.
CvReport cross_validate(const MultiViewDataset& dataset, const FitConfig& config, Index n_folds,
                        std::uint64_t seed, double threshold = 0.5);

AggregateMetric aggregate(const std::vector<double>& values);

}  // namespace baldur
