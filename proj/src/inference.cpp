#include "baldur/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "baldur/csv.hpp"
#include "baldur/errors.hpp"
#include "baldur/logistic_bound.hpp"

namespace baldur {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double scalar_mean(const GammaQ& g) { return g.mean(0); }

// Entropy of a d-dimensional Gaussian given log|cov|.
double gaussian_entropy(double log_det, Index d) {
  return 0.5 * log_det + 0.5 * static_cast<double>(d) * (1.0 + kLog2Pi);
}

// sum_{ij} A_ij B_ij, i.e. tr(A B) for symmetric A, B.
double trace_product(const Matrix& a, const Matrix& b) { return a.cwiseProduct(b).sum(); }

// Expected squared residual of the latent regression,
//   sum_n <|| z_n - sum_m P_m(n) ||^2>,
// with second moments for the same view and means across views.
double z_residual(const ModelState& s, const TrainingData& data) {
  const double n = static_cast<double>(s.Z.mean.rows());
  double r = (s.Z.mean - s.H_sum()).squaredNorm() + n * s.Z.cov.trace();
  for (std::size_t m = 0; m < s.views.size(); ++m) {
    const auto& vd = data.views[m];
    const Matrix& g = vd.dual ? vd.rv_gram : vd.gram;
    for (const auto& c : s.views[m].weights.cov) r += trace_product(g, c);
  }
  return r;
}

// sum_n <|| y_n - z_n V^T ||^2>
double y_residual(const ModelState& s) {
  const double n = static_cast<double>(s.Z.mean.rows());
  const double c = static_cast<double>(s.V.mean.rows());
  const Matrix vtv_mean = s.V.mean.transpose() * s.V.mean;
  const Matrix ztz_mean = s.Z.mean.transpose() * s.Z.mean;
  return (s.Y.mean - s.Z.mean * s.V.mean.transpose()).squaredNorm() + s.Y.var.sum() +
         n * trace_product(vtv_mean, s.Z.cov) + c * trace_product(s.V.cov, ztz_mean) +
         n * c * trace_product(s.V.cov, s.Z.cov);
}

// sum_d gamma_d <w_kd^2> for factor k of view m.
double weighted_factor_power(const ViewState& v, const ViewData& vd, const Vector& gamma_mean,
                             Index k) {
  const auto ku = static_cast<std::size_t>(k);
  if (vd.dual) {
    // Mean part through the implied weights X~^T mu, covariance part inside
    // the range of X~ (see ViewData::rv_range).
    const Vector w = vd.X_rv.transpose() * v.weights.mean.col(k);
    const Matrix& q = vd.rv_range;
    const double trace = trace_product(vd.weighted_rv_gram_in_range(gamma_mean),
                                       q.transpose() * v.weights.cov[ku] * q);
    // Exact value is >= 0; at the rounding floor (weights gone, gamma huge)
    // the trace can come out slightly negative.
    return (gamma_mean.array() * w.array().square()).sum() + std::max(trace, 0.0);
  }
  return (gamma_mean.array() *
          (v.weights.mean.col(k).array().square() + v.weights.cov[ku].diagonal().array()))
      .sum();
}

// sum_k delta_k <w_kd^2> for every feature d of view m.
Vector weighted_feature_power(const ViewState& v, const ViewData& vd, const Vector& delta_mean) {
  const Index k_count = v.weights.mean.cols();
  if (vd.dual) {
    // Means through X~^T <A>, covariances inside the range of X~; the result
    // is a sum of non-negative terms, so rounding may not push it below 0.
    const Index nr = vd.n_rv();
    vd.note_square(nr);
    Matrix s = Matrix::Zero(nr, nr);
    for (Index k = 0; k < k_count; ++k) s += delta_mean(k) * v.weights.cov[static_cast<std::size_t>(k)];
    const Matrix sq = vd.rv_range.transpose() * s * vd.rv_range;
    const Matrix w = vd.X_rv.transpose() * v.weights.mean;
    const Vector mean_part = (w.array().square().rowwise() * delta_mean.transpose().array()).rowwise().sum();
    const Vector cov_part = vd.X_rv_range.cwiseProduct(vd.X_rv_range * sq).rowwise().sum();
    return mean_part + cov_part.cwiseMax(0.0);
  }
  Vector out = Vector::Zero(vd.n_features());
  for (Index k = 0; k < k_count; ++k) {
    out.array() += delta_mean(k) * (v.weights.mean.col(k).array().square() +
                                    v.weights.cov[static_cast<std::size_t>(k)].diagonal().array());
  }
  return out;
}

void check_beta(const GammaQ& g, const char* what) {
  if (!((g.beta.array() > 0.0).all()) || !g.beta.allFinite()) {
    throw Error(ErrorKind::NegativeBeta, std::string("non-positive rate in q(") + what + ")");
  }
}

std::vector<Index> original_columns(const ViewData& vd, const std::vector<Index>& model_cols) {
  std::vector<Index> out;
  for (Index c : model_cols) out.push_back(vd.feature_index[static_cast<std::size_t>(c)]);
  return out;
}

FittedView pruned_record(const ViewData& vd) {
  FittedView fv;
  fv.name = vd.name;
  fv.dual = vd.dual;
  fv.pruned = true;
  fv.feature_names = vd.all_feature_names;
  fv.standardizer = vd.standardizer;
  fv.active.assign(vd.all_feature_names.size(), false);
  return fv;
}

}  // namespace

// ---- data ---------------------------------------------------------------

void ViewData::note_square(Index n) const { largest_square = std::max(largest_square, n); }

void ViewData::refresh_grams() {
  weighted_rv_gram_key.resize(0);
  if (dual) {
    gram = X * X_rv.transpose();
    note_square(n_rv());
    rv_gram = gram.transpose() * gram;
    const Eigen::SelfAdjointEigenSolver<Matrix> es(X_rv * X_rv.transpose());
    const Vector& ev = es.eigenvalues();
    const double cut = 1e-10 * std::max(ev.maxCoeff(), 0.0);
    Index r = 0;
    while (r < ev.size() && ev(ev.size() - 1 - r) > cut) ++r;
    rv_range = es.eigenvectors().rightCols(r);
    X_rv_range = X_rv.transpose() * rv_range;
  } else {
    note_square(n_features());
    gram = X.transpose() * X;
    rv_gram.resize(0, 0);
  }
}

const Matrix& ViewData::weighted_rv_gram(const Vector& gamma_mean) const {
  if (weighted_rv_gram_key.size() != gamma_mean.size() || weighted_rv_gram_key != gamma_mean) {
    note_square(n_rv());
    const Matrix scaled = X_rv * gamma_mean.cwiseSqrt().asDiagonal();
    weighted_rv_gram_cache = scaled * scaled.transpose();
    weighted_rv_gram_range_cache = rv_range.transpose() * weighted_rv_gram_cache * rv_range;
    weighted_rv_gram_key = gamma_mean;
  }
  return weighted_rv_gram_cache;
}

const Matrix& ViewData::weighted_rv_gram_in_range(const Vector& gamma_mean) const {
  weighted_rv_gram(gamma_mean);
  return weighted_rv_gram_range_cache;
}

TrainingData prepare_training_data(const MultiViewDataset& dataset, const PrepareOptions& options) {
  dataset.validate();
  if (!dataset.has_targets()) throw Error(ErrorKind::ShapeMismatch, "training data has no targets");
  const Index n = dataset.n_samples();
  for (Index c = 0; c < dataset.n_classes(); ++c) {
    const double pos = dataset.targets.values.col(c).sum();
    if (pos == 0.0 || pos == static_cast<double>(n)) {
      throw Error(ErrorKind::DegenerateLabels,
                  "target column " + std::to_string(c) + " contains a single class");
    }
  }
  std::vector<Index> rows(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) rows[static_cast<std::size_t>(i)] = i;

  TrainingData data;
  data.T = dataset.targets.values;
  data.class_names = dataset.targets.class_names;
  for (std::size_t m = 0; m < dataset.views.size(); ++m) {
    const auto& raw = dataset.views[m];
    const auto& opt = dataset.options[m];
    data.original_view_names.push_back(raw.view_name);
    data.original_widths.push_back(raw.cols());

    auto std_view = standardize_fit_transform(raw, rows);
    ViewData vd;
    vd.name = raw.view_name;
    vd.all_feature_names = raw.feature_names;
    vd.standardizer = std_view.standardizer;
    for (Index j = 0; j < raw.cols(); ++j) {
      if (std_view.active_features[static_cast<std::size_t>(j)]) vd.feature_index.push_back(j);
    }
    const auto d = static_cast<Index>(vd.feature_index.size());
    vd.dual = opt.force_dual.value_or(decide_width(n, d, options.ratio_threshold));
    if (d == 0) {
      data.pruned_views.push_back(pruned_record(vd));
      continue;
    }
    vd.X = std_view.view.values(Eigen::all, vd.feature_index);
    if (vd.dual) {
      vd.rv_indices =
          select_relevance_vectors(n, opt.rv_strategy, opt.rv_k, options.seed + 7919 * m);
      vd.X_rv = vd.X(vd.rv_indices, Eigen::all);
      vd.dual_ridge = options.dual_ridge_rel * vd.X_rv.rowwise().squaredNorm().mean();
      if (!(vd.dual_ridge > 0.0)) vd.dual_ridge = options.dual_ridge_rel;
    }
    vd.refresh_grams();
    data.views.push_back(std::move(vd));
  }
  if (data.views.empty()) {
    throw Error(ErrorKind::InvalidConfig, "every view is constant on the training rows");
  }
  return data;
}

void FitConfig::validate() const {
  const auto bad = [](const std::string& what) { throw Error(ErrorKind::InvalidConfig, what); };
  if (K_init < 1) bad("K_init must be >= 1");
  if (max_iters < 1) bad("max_iters must be >= 1");
  if (!(elbo_rel_tol > 0.0)) bad("elbo tolerance must be > 0");
  if (converge_window < 1) bad("convergence window must be >= 1");
  if (!(prune.weight_power_rel_threshold >= 0.0 && prune.weight_power_rel_threshold < 1.0)) {
    bad("prune threshold must lie in [0, 1)");
  }
  if (prune.burn_in_iters < 0) bad("burn-in must be >= 0");
  if (!(ratio_threshold > 0.0)) bad("ratio threshold must be > 0");
  for (const auto* p : {&hyperpriors.tau, &hyperpriors.psi, &hyperpriors.omega, &hyperpriors.delta,
                        &hyperpriors.gamma}) {
    if (!(p->alpha0 > 0.0 && p->beta0 > 0.0)) bad("hyperpriors must be strictly positive");
  }
}

ModelState init_state(const TrainingData& data, const FitConfig& config) {
  if (config.K_init < 1) throw Error(ErrorKind::InvalidConfig, "K_init must be >= 1");
  const Index n = data.n_samples();
  const Index c = data.n_classes();
  const Index k = config.K_init;
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto draw = [&](Index rows, Index cols, double sd) {
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j) {
      for (Index i = 0; i < rows; ++i) m(i, j) = sd * normal(rng);
    }
    return m;
  };

  ModelState s;
  s.K = k;
  s.tau_prior = config.hyperpriors.tau;
  s.psi_prior = config.hyperpriors.psi;
  s.omega_prior = config.hyperpriors.omega;
  s.Z.mean = draw(n, k, 1.0);
  s.Z.cov = Matrix::Identity(k, k);
  for (const auto& vd : data.views) {
    ViewState v;
    v.name = vd.name;
    v.dual = vd.dual;
    const Index dim = vd.weight_dim();
    v.weights.mean = draw(dim, k, std::sqrt(1.0 / static_cast<double>(dim)));
    v.weights.cov.assign(static_cast<std::size_t>(k), Matrix::Identity(dim, dim));
    v.weights.log_det.assign(static_cast<std::size_t>(k), 0.0);
    vd.note_square(dim);
    v.delta_prior = config.hyperpriors.delta;
    v.gamma_prior = config.hyperpriors.gamma;
    v.delta = GammaQ::from_prior(k, v.delta_prior);
    v.gamma = GammaQ::from_prior(vd.n_features(), v.gamma_prior);
    s.views.push_back(std::move(v));
  }
  for (std::size_t m = 0; m < s.views.size(); ++m) s.views[m].H = compute_H(s, data, m);
  s.V.mean = Matrix::Zero(c, k);
  s.V.cov = Matrix::Identity(k, k);
  s.Y.mean = (2.0 * data.T.array() - 1.0).matrix();
  s.Y.var = Matrix::Ones(n, c);
  s.xi = Matrix::Ones(n, c);
  s.tau = GammaQ::from_prior(1, s.tau_prior);
  s.psi = GammaQ::from_prior(1, s.psi_prior);
  s.omega = GammaQ::from_prior(k, s.omega_prior);
  return s;
}

void warm_start(ModelState& state, const TrainingData& data) {
  const Index n = data.n_samples();
  const Index lead = std::min(state.K, data.n_classes());
  for (Index k = lead; k < state.K; ++k) state.Z.mean.col(k) *= 0.01;
  for (Index c = 0; c < lead; ++c) {
    const Vector y = (2.0 * data.T.col(c).array() - 1.0).matrix();
    Vector h = Vector::Zero(n);
    for (const auto& vd : data.views) h += vd.X * (vd.X.transpose() * y);
    const double rms = std::sqrt(h.squaredNorm() / static_cast<double>(n));
    if (!(rms > 0.0) || !std::isfinite(rms)) {
      state.Z.mean.col(c) *= 0.01;
      continue;
    }
    state.Z.mean.col(c) = (3.0 / rms) * h;
    state.V.mean(c, c) = 0.5;
  }
}

// ---- updates ------------------------------------------------------------

Matrix compute_H(const ModelState& state, const TrainingData& data, std::size_t m) {
  const auto& vd = data.views[m];
  const auto& w = state.views[m].weights.mean;
  return vd.dual ? Matrix(vd.gram * w) : Matrix(vd.X * w);
}

void update_W(ModelState& state, const TrainingData& data, std::size_t m, const JitterPolicy& j) {
  auto& v = state.views[m];
  const auto& vd = data.views[m];
  if (vd.dual) throw Error(ErrorKind::InvalidConfig, "update_W called on a dual view");
  const double tau = scalar_mean(state.tau);
  const Vector gamma = v.gamma.mean();
  const Matrix xt_r = vd.X.transpose() * (state.Z.mean - state.H_except(m));
  const Index d = vd.n_features();
  vd.note_square(d);
  for (Index k = 0; k < state.K; ++k) {
    Matrix precision = tau * vd.gram;
    precision.diagonal() += v.delta.mean(k) * gamma;
    auto inv = invert_precision(precision, j);
    v.weights.mean.col(k) = tau * (inv.covariance * xt_r.col(k));
    v.weights.cov[static_cast<std::size_t>(k)] = std::move(inv.covariance);
    v.weights.log_det[static_cast<std::size_t>(k)] = inv.log_det_covariance;
  }
  v.H = compute_H(state, data, m);
}

void update_A(ModelState& state, const TrainingData& data, std::size_t m, const JitterPolicy& j) {
  auto& v = state.views[m];
  const auto& vd = data.views[m];
  if (!vd.dual) throw Error(ErrorKind::InvalidConfig, "update_A called on a primal view");
  const double tau = scalar_mean(state.tau);
  const Matrix& g = vd.weighted_rv_gram(v.gamma.mean());
  const Matrix kt_r = vd.gram.transpose() * (state.Z.mean - state.H_except(m));
  const Index nr = vd.n_rv();
  vd.note_square(nr);
  for (Index k = 0; k < state.K; ++k) {
    Matrix precision = tau * vd.rv_gram + v.delta.mean(k) * g;
    precision.diagonal().array() += vd.dual_ridge;
    auto inv = invert_precision(precision, j);
    v.weights.mean.col(k) = tau * (inv.covariance * kt_r.col(k));
    v.weights.cov[static_cast<std::size_t>(k)] = std::move(inv.covariance);
    v.weights.log_det[static_cast<std::size_t>(k)] = inv.log_det_covariance;
  }
  v.H = compute_H(state, data, m);
}

void update_weights(ModelState& state, const TrainingData& data, std::size_t m,
                    const JitterPolicy& j) {
  if (data.views[m].dual) {
    update_A(state, data, m, j);
  } else {
    update_W(state, data, m, j);
  }
}

void update_delta(ModelState& state, const TrainingData& data, std::size_t m) {
  auto& v = state.views[m];
  const auto& vd = data.views[m];
  const Vector gamma = v.gamma.mean();
  const double alpha = static_cast<double>(vd.n_features()) / 2.0 + v.delta_prior.alpha0;
  v.delta.alpha = Vector::Constant(state.K, alpha);
  v.delta.beta.resize(state.K);
  for (Index k = 0; k < state.K; ++k) {
    v.delta.beta(k) = v.delta_prior.beta0 + 0.5 * weighted_factor_power(v, vd, gamma, k);
  }
  check_beta(v.delta, "delta");
}

void update_gamma(ModelState& state, const TrainingData& data, std::size_t m) {
  auto& v = state.views[m];
  const auto& vd = data.views[m];
  const double alpha = static_cast<double>(state.K) / 2.0 + v.gamma_prior.alpha0;
  v.gamma.alpha = Vector::Constant(vd.n_features(), alpha);
  v.gamma.beta = (v.gamma_prior.beta0 +
                  0.5 * weighted_feature_power(v, vd, v.delta.mean()).array())
                     .matrix();
  check_beta(v.gamma, "gamma");
}

void update_Z(ModelState& state, const TrainingData& data, const JitterPolicy& j) {
  (void)data;
  const double tau = scalar_mean(state.tau);
  const double psi = scalar_mean(state.psi);
  Matrix precision = psi * second_moment(state.V);
  precision.diagonal().array() += tau;
  auto inv = invert_precision(precision, j);
  state.Z.mean = (tau * state.H_sum() + psi * state.Y.mean * state.V.mean) * inv.covariance;
  state.Z.cov = std::move(inv.covariance);
}

void update_tau(ModelState& state, const TrainingData& data) {
  const double n = static_cast<double>(state.Z.mean.rows());
  state.tau.alpha = Vector::Constant(1, n * static_cast<double>(state.K) / 2.0 + state.tau_prior.alpha0);
  state.tau.beta = Vector::Constant(1, state.tau_prior.beta0 + 0.5 * z_residual(state, data));
  check_beta(state.tau, "tau");
}

void update_V(ModelState& state, const JitterPolicy& j) {
  const double psi = scalar_mean(state.psi);
  Matrix precision = psi * second_moment(state.Z);
  precision.diagonal() += state.omega.mean();
  auto inv = invert_precision(precision, j);
  state.V.mean = psi * state.Y.mean.transpose() * state.Z.mean * inv.covariance;
  state.V.cov = std::move(inv.covariance);
}

void update_omega(ModelState& state) {
  const double c = static_cast<double>(state.V.mean.rows());
  state.omega.alpha = Vector::Constant(state.K, c / 2.0 + state.omega_prior.alpha0);
  state.omega.beta = (state.omega_prior.beta0 +
                      0.5 * (state.V.mean.colwise().squaredNorm().transpose().array() +
                             c * state.V.cov.diagonal().array()))
                         .matrix();
  check_beta(state.omega, "omega");
}

void update_psi(ModelState& state) {
  const double n = static_cast<double>(state.Y.mean.rows());
  const double c = static_cast<double>(state.Y.mean.cols());
  state.psi.alpha = Vector::Constant(1, n * c / 2.0 + state.psi_prior.alpha0);
  state.psi.beta = Vector::Constant(1, state.psi_prior.beta0 + 0.5 * y_residual(state));
  check_beta(state.psi, "psi");
}

void update_Y_and_xi(ModelState& state, const TrainingData& data) {
  const double psi = scalar_mean(state.psi);
  const Matrix head = state.Z.mean * state.V.mean.transpose();
  for (Index c = 0; c < state.Y.mean.cols(); ++c) {
    for (Index i = 0; i < state.Y.mean.rows(); ++i) {
      const double var = 1.0 / (psi + 2.0 * jaakkola_lambda(state.xi(i, c)));
      state.Y.var(i, c) = var;
      state.Y.mean(i, c) = (data.T(i, c) - 0.5 + psi * head(i, c)) * var;
    }
  }
  state.xi = (state.Y.mean.array().square() + state.Y.var.array()).sqrt().matrix();
}

void sweep(ModelState& state, const TrainingData& data, const JitterPolicy& jitter) {
  for (std::size_t m = 0; m < state.views.size(); ++m) {
    update_weights(state, data, m, jitter);
    update_delta(state, data, m);
    update_gamma(state, data, m);
  }
  update_Z(state, data, jitter);
  update_tau(state, data);
  update_V(state, jitter);
  update_omega(state);
  update_psi(state);
  update_Y_and_xi(state, data);
}

// ---- lower bound --------------------------------------------------------

ElboTerms elbo_terms(const ModelState& s, const TrainingData& data) {
  ElboTerms t;
  const Index n = s.Z.mean.rows();
  const Index c = s.Y.mean.cols();
  const double nd = static_cast<double>(n);
  const double cd = static_cast<double>(c);
  const double kd = static_cast<double>(s.K);

  for (Index j = 0; j < c; ++j) {
    for (Index i = 0; i < n; ++i) {
      const double xi = s.xi(i, j);
      const double mu = s.Y.mean(i, j);
      const double y2 = mu * mu + s.Y.var(i, j);
      t.output_bound += log_sigmoid(xi) + mu * data.T(i, j) - 0.5 * (mu + xi) -
                        jaakkola_lambda(xi) * (y2 - xi * xi);
    }
  }

  const double tau = scalar_mean(s.tau);
  const double psi = scalar_mean(s.psi);
  t.y_likelihood = 0.5 * nd * cd * (s.psi.log_mean()(0) - kLog2Pi) - 0.5 * psi * y_residual(s);
  t.z_likelihood = 0.5 * nd * kd * (s.tau.log_mean()(0) - kLog2Pi) - 0.5 * tau * z_residual(s, data);

  for (std::size_t m = 0; m < s.views.size(); ++m) {
    const auto& v = s.views[m];
    const auto& vd = data.views[m];
    const double d = static_cast<double>(vd.n_features());
    const Vector gamma = v.gamma.mean();
    const Vector delta = v.delta.mean();
    double quad = 0.0;
    for (Index k = 0; k < s.K; ++k) quad += delta(k) * weighted_factor_power(v, vd, gamma, k);

    t.weight_prior += -0.5 * d * kd * kLog2Pi + 0.5 * d * v.delta.log_mean().sum() +
                      0.5 * kd * v.gamma.log_mean().sum() - 0.5 * quad;
    if (vd.dual) {
      const double nr = static_cast<double>(vd.n_rv());
      for (Index k = 0; k < s.K; ++k) {
        const double sq = v.weights.mean.col(k).squaredNorm() +
                          v.weights.cov[static_cast<std::size_t>(k)].trace();
        t.weight_prior += 0.5 * nr * (std::log(vd.dual_ridge) - kLog2Pi) - 0.5 * vd.dual_ridge * sq;
      }
    }
    t.gamma_priors += v.delta.expected_log_prior(v.delta_prior) +
                      v.gamma.expected_log_prior(v.gamma_prior);
    for (Index k = 0; k < s.K; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      t.entropy += gaussian_entropy(v.weights.log_det[ku], v.weights.cov[ku].rows());
    }
    t.entropy += v.delta.entropy() + v.gamma.entropy();
  }

  const Vector omega = s.omega.mean();
  const Vector log_omega = s.omega.log_mean();
  for (Index k = 0; k < s.K; ++k) {
    const double vk2 = s.V.mean.col(k).squaredNorm() + cd * s.V.cov(k, k);
    t.v_prior += 0.5 * cd * (log_omega(k) - kLog2Pi) - 0.5 * omega(k) * vk2;
  }

  t.gamma_priors += s.tau.expected_log_prior(s.tau_prior) + s.psi.expected_log_prior(s.psi_prior) +
                    s.omega.expected_log_prior(s.omega_prior);

  t.entropy += nd * gaussian_entropy(log_det_spd(s.Z.cov), s.K);
  t.entropy += cd * gaussian_entropy(log_det_spd(s.V.cov), s.K);
  t.entropy += 0.5 * s.Y.var.array().log().sum() + 0.5 * nd * cd * (1.0 + kLog2Pi);
  t.entropy += s.tau.entropy() + s.psi.entropy() + s.omega.entropy();

  if (!std::isfinite(t.total())) {
    throw Error(ErrorKind::NumericalBreakdown, "lower bound is not finite");
  }
  return t;
}

double compute_elbo(const ModelState& state, const TrainingData& data) {
  return elbo_terms(state, data).total();
}

// ---- pruning ------------------------------------------------------------

Vector feature_power(const ModelState& state, const TrainingData& data, std::size_t m) {
  const auto& vd = data.views[m];
  const auto& w = state.views[m].weights.mean;
  if (vd.dual) return (vd.X_rv.transpose() * w).rowwise().squaredNorm();
  return w.rowwise().squaredNorm();
}

Vector factor_power(const ModelState& state, const TrainingData& data) {
  Vector p = state.V.mean.colwise().squaredNorm().transpose();
  for (std::size_t m = 0; m < state.views.size(); ++m) {
    const auto& vd = data.views[m];
    const auto& w = state.views[m].weights.mean;
    if (vd.dual) {
      p += (vd.X_rv.transpose() * w).colwise().squaredNorm().transpose();
    } else {
      p += w.colwise().squaredNorm().transpose();
    }
  }
  return p;
}

PruneReport prune(ModelState& state, TrainingData& data, const PruneConfig& config) {
  PruneReport report;
  const double thr = config.weight_power_rel_threshold;
  if (!(thr > 0.0)) return report;

  const Vector fp = factor_power(state, data);
  const double fmax = fp.maxCoeff();
  for (Index k = 0; k < fp.size(); ++k) {
    if (fp(k) < thr * fmax) report.removed_factors.push_back(k);
  }
  if (static_cast<Index>(report.removed_factors.size()) == state.K) {
    throw Error(ErrorKind::AllFactorsPruned, "every latent factor has negligible power");
  }

  std::vector<std::vector<Index>> drop_features(state.views.size());
  std::vector<bool> drop_view(state.views.size(), false);
  std::vector<double> view_power(state.views.size(), 0.0);
  for (std::size_t m = 0; m < state.views.size(); ++m) {
    const Vector p = feature_power(state, data, m);
    view_power[m] = p.sum();
    const double pmax = p.maxCoeff();
    for (Index d = 0; d < p.size(); ++d) {
      if (p(d) < thr * pmax || pmax == 0.0) drop_features[m].push_back(d);
    }
    if (static_cast<Index>(drop_features[m].size()) == p.size()) drop_view[m] = true;
  }
  if (config.view_prune_enabled) {
    const double vmax = *std::max_element(view_power.begin(), view_power.end());
    for (std::size_t m = 0; m < view_power.size(); ++m) {
      if (view_power[m] < thr * vmax) drop_view[m] = true;
    }
  }
  if (std::all_of(drop_view.begin(), drop_view.end(), [](bool b) { return b; })) {
    throw Error(ErrorKind::AllFactorsPruned, "every view has negligible weight power");
  }

  // Factors first: they touch every K-indexed structure.
  if (!report.removed_factors.empty()) {
    const auto& drop = report.removed_factors;
    state.Z.mean = drop_cols(state.Z.mean, drop);
    state.Z.cov = drop_rows_cols(state.Z.cov, drop);
    state.V.mean = drop_cols(state.V.mean, drop);
    state.V.cov = drop_rows_cols(state.V.cov, drop);
    state.omega.alpha = drop_entries(state.omega.alpha, drop);
    state.omega.beta = drop_entries(state.omega.beta, drop);
    for (auto& v : state.views) {
      v.weights.mean = drop_cols(v.weights.mean, drop);
      for (auto it = drop.rbegin(); it != drop.rend(); ++it) {
        v.weights.cov.erase(v.weights.cov.begin() + *it);
        v.weights.log_det.erase(v.weights.log_det.begin() + *it);
      }
      v.delta.alpha = drop_entries(v.delta.alpha, drop);
      v.delta.beta = drop_entries(v.delta.beta, drop);
      v.H = drop_cols(v.H, drop);
    }
    state.K -= static_cast<Index>(drop.size());
  }

  for (std::size_t m = 0; m < state.views.size(); ++m) {
    if (drop_view[m] || drop_features[m].empty()) continue;
    auto& v = state.views[m];
    auto& vd = data.views[m];
    const auto& drop = drop_features[m];
    report.removed_features.emplace_back(vd.name, original_columns(vd, drop));
    if (!vd.dual) {
      v.weights.mean = drop_rows(v.weights.mean, drop);
      for (std::size_t k = 0; k < v.weights.cov.size(); ++k) {
        v.weights.cov[k] = drop_rows_cols(v.weights.cov[k], drop);
        v.weights.log_det[k] = log_det_spd(v.weights.cov[k]);
      }
    }
    v.gamma.alpha = drop_entries(v.gamma.alpha, drop);
    v.gamma.beta = drop_entries(v.gamma.beta, drop);
    vd.X = drop_cols(vd.X, drop);
    if (vd.dual) vd.X_rv = drop_cols(vd.X_rv, drop);
    std::vector<Index> kept;
    for (std::size_t i = 0, j = 0; i < vd.feature_index.size(); ++i) {
      if (j < drop.size() && drop[j] == static_cast<Index>(i)) {
        ++j;
        continue;
      }
      kept.push_back(vd.feature_index[i]);
    }
    vd.feature_index = std::move(kept);
    vd.refresh_grams();
    v.H = compute_H(state, data, m);
  }

  for (std::size_t m = state.views.size(); m-- > 0;) {
    if (!drop_view[m]) continue;
    report.removed_views.push_back(data.views[m].name);
    data.pruned_views.push_back(pruned_record(data.views[m]));
    data.pruned_views.back().weights.resize(0, 0);
    state.views.erase(state.views.begin() + static_cast<std::ptrdiff_t>(m));
    data.views.erase(data.views.begin() + static_cast<std::ptrdiff_t>(m));
  }
  std::reverse(report.removed_views.begin(), report.removed_views.end());
  return report;
}

// ---- driver -------------------------------------------------------------

double ElboTrace::worst_relative_decrease() const {
  double worst = 0.0;
  for (std::size_t i = 1; i < entries.size(); ++i) {
    if (entries[i].after_prune) continue;
    const double prev = entries[i - 1].elbo;
    const double drop = (prev - entries[i].elbo) / std::max(1.0, std::abs(prev));
    worst = std::max(worst, drop);
  }
  return worst;
}

FittedModel freeze(const ModelState& state, const TrainingData& data) {
  FittedModel model;
  model.K = state.K;
  model.class_names = data.class_names;
  model.V_mean = state.V.mean;
  model.V_cov = state.V.cov;
  model.tau_mean = scalar_mean(state.tau);
  model.psi_mean = scalar_mean(state.psi);
  for (const auto& name : data.original_view_names) {
    auto live = std::find_if(data.views.begin(), data.views.end(),
                             [&](const ViewData& vd) { return vd.name == name; });
    if (live == data.views.end()) {
      auto dead = std::find_if(data.pruned_views.begin(), data.pruned_views.end(),
                               [&](const FittedView& fv) { return fv.name == name; });
      model.views.push_back(*dead);
      continue;
    }
    const auto m = static_cast<std::size_t>(live - data.views.begin());
    FittedView fv;
    fv.name = name;
    fv.dual = live->dual;
    fv.feature_names = live->all_feature_names;
    fv.standardizer = live->standardizer;
    fv.active.assign(live->all_feature_names.size(), false);
    for (Index j : live->feature_index) fv.active[static_cast<std::size_t>(j)] = true;
    if (live->dual) {
      fv.weights = state.views[m].weights.mean;
      fv.relevance_vectors = live->X_rv;
    } else {
      fv.weights = state.views[m].weights.mean.transpose();
    }
    model.views.push_back(std::move(fv));
  }
  return model;
}

namespace {

ElboTraceEntry make_entry(int it, double elbo, const ModelState& state, const TrainingData& data,
                          double seconds, bool after_prune) {
  ElboTraceEntry e;
  e.iteration = it;
  e.elbo = elbo;
  e.K = state.K;
  e.wall_seconds = seconds;
  e.after_prune = after_prune;
  for (const auto& name : data.original_view_names) {
    Index active = 0;
    for (const auto& vd : data.views) {
      if (vd.name == name) active = vd.n_features();
    }
    e.active_features.push_back(active);
  }
  return e;
}

}  // namespace

FitResult fit_prepared(TrainingData data, ModelState state, const FitConfig& config) {
  config.validate();
  FitResult result;
  result.trace.view_names = data.original_view_names;
  const auto start = std::chrono::steady_clock::now();
  const auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  double prev = 0.0;
  int stable = 0;
  bool after_prune = false;
  for (int it = 1; it <= config.max_iters; ++it) {
    sweep(state, data, config.jitter);
    const double elbo = compute_elbo(state, data);
    result.trace.entries.push_back(make_entry(it, elbo, state, data, elapsed(), after_prune));
    result.iterations = it;
    if (config.on_iteration) config.on_iteration(result.trace.entries.back());

    if (it > 1 && !after_prune) {
      const double rel = std::abs(elbo - prev) / std::max(1e-300, std::abs(prev));
      stable = rel < config.elbo_rel_tol ? stable + 1 : 0;
      if (elbo < prev - 1e-8 * std::abs(prev)) {
        std::ostringstream msg;
        msg << "lower bound decreased at iteration " << it << " (" << format_double(prev) << " -> "
            << format_double(elbo) << ")";
        result.warnings.push_back(msg.str());
      }
    } else {
      stable = 0;
    }
    after_prune = false;
    prev = elbo;

    if (it > config.prune.burn_in_iters) {
      const auto report = prune(state, data, config.prune);
      if (!report.empty()) {
        after_prune = true;
        stable = 0;
      }
    }
    if (stable >= config.converge_window && it > config.prune.burn_in_iters) {
      result.converged = true;
      break;
    }
  }
  if (!result.converged) {
    result.warnings.push_back("no convergence within " + std::to_string(config.max_iters) +
                              " iterations");
  }
  const auto diag = state.check_invariants();
  if (!diag.empty()) throw Error(ErrorKind::NumericalBreakdown, "invalid final state: " + diag);

  result.model = freeze(state, data);
  for (const auto& vd : data.views) {
    result.largest_square.emplace_back(vd.name, vd.largest_square);
    result.view_dual.emplace_back(vd.name, vd.dual);
  }
  return result;
}

FitResult fit(const MultiViewDataset& dataset, const FitConfig& config) {
  config.validate();
  PrepareOptions prep;
  prep.ratio_threshold = config.ratio_threshold;
  prep.dual_ridge_rel = config.dual_ridge_rel;
  prep.seed = config.seed;
  auto data = prepare_training_data(dataset, prep);
  auto state = init_state(data, config);
  if (config.warm_start) warm_start(state, data);
  return fit_prepared(std::move(data), std::move(state), config);
}

void write_trace_csv(const std::string& path, const ElboTrace& trace) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::MissingFile, "cannot write " + path);
  out << "iteration,elbo,K,after_prune";
  for (const auto& name : trace.view_names) out << ",active_" << name;
  out << '\n';
  for (const auto& e : trace.entries) {
    out << e.iteration << ',' << format_double(e.elbo) << ',' << e.K << ',' << (e.after_prune ? 1 : 0);
    for (Index a : e.active_features) out << ',' << a;
    out << '\n';
  }
}

}  // namespace baldur
