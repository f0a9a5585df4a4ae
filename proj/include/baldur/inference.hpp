#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "baldur/data_model.hpp"
#include "baldur/linalg.hpp"
#include "baldur/predictor.hpp"
#include "baldur/variational_state.hpp"

namespace baldur {

// Standardized, masked view data plus the Gram products the updates reuse.
struct ViewData {
  std::string name;
  bool dual = false;
  std::vector<std::string> all_feature_names;
  Standardizer standardizer;        // over original columns
  std::vector<Index> feature_index;  // original column of each model column
  std::vector<Index> rv_indices;
  Matrix X;        // N x D_active
  Matrix X_rv;     // dual: N~ x D_active
  Matrix gram;     // primal: X^T X (D x D); dual: X X~^T (N x N~)
  Matrix rv_gram;  // dual: X~ X^T X X~^T (N~ x N~)
  double dual_ridge = 0.0;
  // dual: orthonormal basis (N~ x r) of the range of X~. Centering leaves
  // X~^T 1 = 0 when X~ holds all training rows; along such directions only
  // the ridge pins q(A), and traces are taken inside this range instead.
  Matrix rv_range;
  Matrix X_rv_range;  // X~^T rv_range, D_active x r
  // Largest square matrix built while fitting this view.
  mutable Index largest_square = 0;
  // X~ diag(gamma) X~^T, memoised on the gamma means it was built from.
  mutable Matrix weighted_rv_gram_cache;
  mutable Matrix weighted_rv_gram_range_cache;  // Q^T G Q
  mutable Vector weighted_rv_gram_key;

  Index n_features() const { return X.cols(); }
  Index n_rv() const { return X_rv.rows(); }
  Index weight_dim() const { return dual ? n_rv() : n_features(); }
  void note_square(Index n) const;
  void refresh_grams();
  const Matrix& weighted_rv_gram(const Vector& gamma_mean) const;
  // The same, projected onto rv_range.
  const Matrix& weighted_rv_gram_in_range(const Vector& gamma_mean) const;
};

struct TrainingData {
  std::vector<ViewData> views;
  // Views removed before or during fitting, kept for reporting.
  std::vector<FittedView> pruned_views;
  // Original view order and widths, for reporting.
  std::vector<std::string> original_view_names;
  std::vector<Index> original_widths;
  Matrix T;  // N x C, {0,1}
  std::vector<std::string> class_names;

  Index n_samples() const { return T.rows(); }
  Index n_classes() const { return T.cols(); }
};

struct PrepareOptions {
  double ratio_threshold = 1.0;
  double dual_ridge_rel = 1e-6;
  std::uint64_t seed = 0;
};

// Standardizes every view on all rows of `dataset`, masks zero-variance
// columns, decides primal/dual per view and picks relevance vectors.
TrainingData prepare_training_data(const MultiViewDataset& dataset, const PrepareOptions& options);

struct PruneConfig {
  double weight_power_rel_threshold = 1e-10;
  int burn_in_iters = 10;
  bool view_prune_enabled = true;
};

struct ElboTraceEntry {
  int iteration = 0;
  double elbo = 0.0;
  Index K = 0;
  std::vector<Index> active_features;  // per original view, 0 once pruned
  double wall_seconds = 0.0;
  bool after_prune = false;  // model dimensions changed since the previous entry
};

struct FitConfig {
  Index K_init = 20;
  int max_iters = 500;
  double elbo_rel_tol = 1e-6;
  int converge_window = 3;
  HyperPriors hyperpriors;
  PruneConfig prune;
  double ratio_threshold = 1.0;
  double dual_ridge_rel = 1e-6;
  JitterPolicy jitter;
  std::uint64_t seed = 0;
  // Label-aligned start applied on top of init_state (see warm_start).
  bool warm_start = true;
  // Called after every sweep with the new trace entry; also sees the sweeps
  // of a fit that later aborts. Not serialized.
  std::function<void(const ElboTraceEntry&)> on_iteration;

  void validate() const;
};

ModelState init_state(const TrainingData& data, const FitConfig& config);

// Puts the direction X X^T (2t_c - 1), rescaled to RMS 3, into column c of the
// Z mean for each class c < K, shrinks the other random columns by 100x and
// sets V(c, c) = 1/2. Covariances and Gamma factors are left as initialised.
// Without it V = 0 hides the labels from the first Z update and fits on weak
// data tend to slide into the all-zero fixed point.
void warm_start(ModelState& state, const TrainingData& data);

// ---- coordinate updates -------------------------------------------------

Matrix compute_H(const ModelState& state, const TrainingData& data, std::size_t m);
void update_W(ModelState& state, const TrainingData& data, std::size_t m, const JitterPolicy& j = {});
void update_A(ModelState& state, const TrainingData& data, std::size_t m, const JitterPolicy& j = {});
// Dispatches to update_W or update_A according to the view's width flag.
void update_weights(ModelState& state, const TrainingData& data, std::size_t m,
                    const JitterPolicy& j = {});
void update_delta(ModelState& state, const TrainingData& data, std::size_t m);
void update_gamma(ModelState& state, const TrainingData& data, std::size_t m);
void update_Z(ModelState& state, const TrainingData& data, const JitterPolicy& j = {});
void update_tau(ModelState& state, const TrainingData& data);
void update_V(ModelState& state, const JitterPolicy& j = {});
void update_omega(ModelState& state);
void update_psi(ModelState& state);
void update_Y_and_xi(ModelState& state, const TrainingData& data);

// ---- lower bound --------------------------------------------------------

struct ElboTerms {
  double output_bound = 0.0;   // E[ln h(y, xi)], the only xi-dependent part
  double y_likelihood = 0.0;   // E[ln N(Y | Z V^T, 1/psi)]
  double z_likelihood = 0.0;   // E[ln N(Z | sum_m H_m, 1/tau)]
  double weight_prior = 0.0;   // E[ln p(W | delta, gamma)] (+ dual ridge)
  double v_prior = 0.0;        // E[ln p(V | omega)]
  double gamma_priors = 0.0;   // E[ln p] of every Gamma-distributed precision
  double entropy = 0.0;        // H[q]

  double total() const {
    return output_bound + y_likelihood + z_likelihood + weight_prior + v_prior + gamma_priors +
           entropy;
  }
};

ElboTerms elbo_terms(const ModelState& state, const TrainingData& data);
double compute_elbo(const ModelState& state, const TrainingData& data);

// ---- pruning ------------------------------------------------------------

struct PruneReport {
  std::vector<Index> removed_factors;
  // (view name, original column indices)
  std::vector<std::pair<std::string, std::vector<Index>>> removed_features;
  std::vector<std::string> removed_views;

  bool empty() const {
    return removed_factors.empty() && removed_features.empty() && removed_views.empty();
  }
};

// Per-feature mean power sum_k <w_kd>^2 (implied weights for dual views).
Vector feature_power(const ModelState& state, const TrainingData& data, std::size_t m);
// Per-factor power summed over every view's weights and V.
Vector factor_power(const ModelState& state, const TrainingData& data);

PruneReport prune(ModelState& state, TrainingData& data, const PruneConfig& config);

// ---- driver -------------------------------------------------------------


struct ElboTrace {
  std::vector<ElboTraceEntry> entries;
  std::vector<std::string> view_names;

  // Largest relative decrease between consecutive entries not separated by a
  // prune event (0 when monotone).
  double worst_relative_decrease() const;
};

struct FitResult {
  FittedModel model;
  ElboTrace trace;
  bool converged = false;
  int iterations = 0;
  std::vector<std::string> warnings;
  // Largest square matrix built for each view that survived (by name).
  std::vector<std::pair<std::string, Index>> largest_square;
  std::vector<std::pair<std::string, bool>> view_dual;
};

FittedModel freeze(const ModelState& state, const TrainingData& data);

FitResult fit(const MultiViewDataset& dataset, const FitConfig& config);

// One full pass of coordinate updates in the fixed order
// [per view: W or A, delta, gamma] -> Z -> tau -> V -> omega -> psi -> Y & xi.
void sweep(ModelState& state, const TrainingData& data, const JitterPolicy& jitter = {});

// The fit loop on already prepared data and state.
FitResult fit_prepared(TrainingData data, ModelState state, const FitConfig& config);

void write_trace_csv(const std::string& path, const ElboTrace& trace);

}  // namespace baldur
