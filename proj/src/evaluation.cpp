#include "baldur/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "baldur/errors.hpp"
#include "baldur/logistic_bound.hpp"

namespace baldur {

void SynthConfig::validate() const {
  const auto bad = [](const std::string& what) { throw Error(ErrorKind::InvalidConfig, what); };
  if (n_samples < 2) bad("need at least 2 samples");
  if (view_widths.empty()) bad("need at least one view");
  if (relevant.size() != view_widths.size()) bad("one relevant count per view is required");
  for (std::size_t m = 0; m < view_widths.size(); ++m) {
    if (view_widths[m] < 1) bad("view widths must be >= 1");
    if (relevant[m] < 0 || relevant[m] > view_widths[m]) bad("relevant count must lie in [0, D]");
  }
  if (K_true < 1) bad("K_true must be >= 1");
  if (n_classes < 1) bad("need at least one class column");
  if (!(tau_true > 0.0 && psi_true > 0.0)) bad("noise precisions must be > 0");
  if (!(weight_sd > 0.0)) bad("weight_sd must be > 0");
}

SynthResult synth_generate(const SynthConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const Index n = config.n_samples;
  const Index k = config.K_true;
  const Index c = config.n_classes;

  SynthResult out;
  Matrix z = Matrix::Zero(n, k);
  for (std::size_t m = 0; m < config.view_widths.size(); ++m) {
    const Index d = config.view_widths[m];
    ViewMatrix view;
    view.view_name = "view" + std::to_string(m);
    for (Index j = 0; j < d; ++j) view.feature_names.push_back(view.view_name + "_f" + std::to_string(j));
    view.values.resize(n, d);
    for (Index j = 0; j < d; ++j) {
      for (Index i = 0; i < n; ++i) view.values(i, j) = normal(rng);
    }

    std::vector<Index> order(static_cast<std::size_t>(d));
    std::iota(order.begin(), order.end(), Index{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<bool> mask(static_cast<std::size_t>(d), false);
    for (Index r = 0; r < config.relevant[m]; ++r) mask[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] = true;

    Matrix w = Matrix::Zero(k, d);
    for (Index j = 0; j < d; ++j) {
      if (!mask[static_cast<std::size_t>(j)]) continue;
      for (Index f = 0; f < k; ++f) w(f, j) = config.weight_sd * normal(rng);
    }
    z += view.values * w.transpose();
    out.W_true.push_back(std::move(w));
    out.relevant_mask.push_back(std::move(mask));
    out.dataset.views.push_back(std::move(view));
    out.dataset.options.emplace_back();
  }
  const double z_sd = 1.0 / std::sqrt(config.tau_true);
  for (Index j = 0; j < k; ++j) {
    for (Index i = 0; i < n; ++i) z(i, j) += z_sd * normal(rng);
  }
  out.V_true.resize(c, k);
  for (Index j = 0; j < k; ++j) {
    for (Index i = 0; i < c; ++i) out.V_true(i, j) = normal(rng);
  }
  Matrix y = z * out.V_true.transpose();
  const double y_sd = 1.0 / std::sqrt(config.psi_true);
  Matrix t(n, c);
  for (Index j = 0; j < c; ++j) {
    for (Index i = 0; i < n; ++i) {
      y(i, j) += y_sd * normal(rng);
      const double u = uniform(rng);
      t(i, j) = (config.hard_labels ? y(i, j) > 0.0 : u < sigmoid(y(i, j))) ? 1.0 : 0.0;
    }
    const double pos = t.col(j).sum();
    if (pos == 0.0 || pos == static_cast<double>(n)) {
      throw Error(ErrorKind::DegenerateLabels,
                  "synthetic labels for class " + std::to_string(j) +
                      " contain a single value; try another seed");
    }
  }
  out.dataset.targets.values = std::move(t);
  for (Index j = 0; j < c; ++j) out.dataset.targets.class_names.push_back("class" + std::to_string(j));
  return out;
}

double compute_auc(const Vector& y_true, const Vector& y_prob) {
  const Index n = y_true.size();
  if (y_prob.size() != n) throw Error(ErrorKind::ShapeMismatch, "label/score length mismatch");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return y_prob(a) < y_prob(b); });
  std::vector<double> rank(static_cast<std::size_t>(n));
  for (Index i = 0; i < n;) {
    Index j = i;
    while (j + 1 < n && y_prob(order[static_cast<std::size_t>(j + 1)]) == y_prob(order[static_cast<std::size_t>(i)])) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Index r = i; r <= j; ++r) rank[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] = avg;
    i = j + 1;
  }
  double pos = 0.0;
  double rank_sum = 0.0;
  for (Index i = 0; i < n; ++i) {
    if (y_true(i) == 1.0) {
      pos += 1.0;
      rank_sum += rank[static_cast<std::size_t>(i)];
    }
  }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) {
    throw Error(ErrorKind::SingleClassInput, "AUC needs both classes");
  }
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

MetricsReport compute_metrics(const Vector& y_true, const Vector& y_prob, double threshold) {
  if (y_true.size() != y_prob.size()) throw Error(ErrorKind::ShapeMismatch, "label/score length mismatch");
  double tp = 0, tn = 0, fp = 0, fn = 0;
  for (Index i = 0; i < y_true.size(); ++i) {
    const bool truth = y_true(i) == 1.0;
    const bool pred = y_prob(i) >= threshold;
    if (truth && pred) ++tp;
    else if (truth) ++fn;
    else if (pred) ++fp;
    else ++tn;
  }
  MetricsReport r;
  const double n = tp + tn + fp + fn;
  r.accuracy = n > 0 ? (tp + tn) / n : 0.0;
  r.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  r.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  r.f1 = r.precision + r.recall > 0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  double recall_sum = 0.0;
  int classes = 0;
  if (tp + fn > 0) {
    recall_sum += tp / (tp + fn);
    ++classes;
  }
  if (tn + fp > 0) {
    recall_sum += tn / (tn + fp);
    ++classes;
  }
  r.balanced_accuracy = classes > 0 ? recall_sum / classes : 0.0;
  try {
    r.auc = compute_auc(y_true, y_prob);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::SingleClassInput) throw;
  }
  return r;
}

MetricsReport compute_metrics(const Matrix& y_true, const Matrix& y_prob, double threshold) {
  if (y_true.cols() == 1) return compute_metrics(Vector(y_true.col(0)), Vector(y_prob.col(0)), threshold);
  MetricsReport avg;
  double auc_sum = 0.0;
  int auc_count = 0;
  for (Index c = 0; c < y_true.cols(); ++c) {
    const auto r = compute_metrics(Vector(y_true.col(c)), Vector(y_prob.col(c)), threshold);
    avg.accuracy += r.accuracy;
    avg.balanced_accuracy += r.balanced_accuracy;
    avg.precision += r.precision;
    avg.recall += r.recall;
    avg.f1 += r.f1;
    if (r.auc) {
      auc_sum += *r.auc;
      ++auc_count;
    }
  }
  const double cn = static_cast<double>(y_true.cols());
  avg.accuracy /= cn;
  avg.balanced_accuracy /= cn;
  avg.precision /= cn;
  avg.recall /= cn;
  avg.f1 /= cn;
  if (auc_count > 0) avg.auc = auc_sum / auc_count;
  return avg;
}

double percent_features_selected(const FittedModel& model) {
  double total = 0.0;
  double active = 0.0;
  for (const auto& v : model.views) {
    total += static_cast<double>(v.original_features());
    if (!v.pruned) active += static_cast<double>(v.active_count());
  }
  return total > 0.0 ? 100.0 * active / total : 0.0;
}

std::vector<ViewFeatureReport> feature_report(const FittedModel& model) {
  std::vector<ViewFeatureReport> out;
  for (const auto& v : model.views) {
    if (v.pruned) continue;
    const Matrix w = v.implied_weights().cwiseAbs();
    const auto idx = v.active_indices();
    ViewFeatureReport r;
    r.view = v.name;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const auto col = static_cast<Index>(j);
      FeatureWeight fw;
      fw.name = v.feature_names[static_cast<std::size_t>(idx[j])];
      fw.abs_weight.assign(w.col(col).data(), w.col(col).data() + w.rows());
      fw.total = w.col(col).sum();
      if (fw.total > 0.0) r.features.push_back(std::move(fw));
    }
    std::stable_sort(r.features.begin(), r.features.end(),
                     [](const FeatureWeight& a, const FeatureWeight& b) { return a.total > b.total; });
    if (!r.features.empty()) out.push_back(std::move(r));
  }
  return out;
}

AggregateMetric aggregate(const std::vector<double>& values) {
  AggregateMetric a;
  a.count = static_cast<Index>(values.size());
  if (values.empty()) return a;
  // Identical folds report their value and a zero spread exactly.
  if (std::adjacent_find(values.begin(), values.end(), std::not_equal_to<>()) == values.end()) {
    a.mean = values.front();
    return a;
  }
  a.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return a;
}

CvReport cross_validate(const MultiViewDataset& dataset, const FitConfig& config, Index n_folds,
                        std::uint64_t seed, double threshold) {
  CvReport report;
  report.splits = split_folds(dataset, n_folds, seed, true);
  std::vector<double> acc, bacc, prec, rec, f1, auc, pct;
  for (std::size_t f = 0; f < report.splits.size(); ++f) {
    const auto& split = report.splits[f];
    FoldResult fr;
    fr.fold = static_cast<Index>(f);
    try {
      const auto train = dataset.subset(split.train);
      const auto test = dataset.subset(split.test);
      try {
        const auto result = fit(train, config);
        const auto pred = predict_proba(result.model, test);
        fr.metrics = compute_metrics(test.targets.values, pred.probabilities, threshold);
        fr.metrics.percent_features_selected = percent_features_selected(result.model);
        fr.converged = result.converged;
        fr.iterations = result.iterations;
        fr.K = result.model.K;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::AllFactorsPruned) throw;
        const Matrix& t = train.targets.values;
        Matrix prob(test.n_samples(), t.cols());
        for (Index c = 0; c < t.cols(); ++c) prob.col(c).setConstant(t.col(c).mean());
        fr.metrics = compute_metrics(test.targets.values, prob, threshold);
        fr.metrics.percent_features_selected = 0.0;
        fr.null_model = true;
      }
    } catch (const Error& e) {
      throw Error(e.kind(), "fold " + std::to_string(f) + ": " + e.what());
    }
    acc.push_back(fr.metrics.accuracy);
    bacc.push_back(fr.metrics.balanced_accuracy);
    prec.push_back(fr.metrics.precision);
    rec.push_back(fr.metrics.recall);
    f1.push_back(fr.metrics.f1);
    if (fr.metrics.auc) auc.push_back(*fr.metrics.auc);
    pct.push_back(*fr.metrics.percent_features_selected);
    report.folds.push_back(std::move(fr));
  }
  report.accuracy = aggregate(acc);
  report.balanced_accuracy = aggregate(bacc);
  report.precision = aggregate(prec);
  report.recall = aggregate(rec);
  report.f1 = aggregate(f1);
  report.auc = aggregate(auc);
  report.percent_features = aggregate(pct);
  return report;
}

}  // namespace baldur
