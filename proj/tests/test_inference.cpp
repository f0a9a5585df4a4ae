#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "baldur/evaluation.hpp"
#include "baldur/inference.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace baldur;
using testing_support::Problem;
using testing_support::perturbations;
using testing_support::random_problem;

namespace {

void set_gamma_mean(GammaQ& g, double mean) {
  g.alpha.setConstant(1.0);
  g.beta.setConstant(1.0 / mean);
}

Problem single_view(Index n, Index d, bool dual, std::uint64_t seed, Index k = 1) {
  auto syn = testing_support::small_synth(n, {d}, {std::min<Index>(d, 2)}, seed);
  syn.dataset.options[0].force_dual = dual;
  PrepareOptions po;
  Problem p{prepare_training_data(syn.dataset, po), {}};
  FitConfig cfg;
  cfg.K_init = k;
  cfg.seed = seed;
  p.state = init_state(p.data, cfg);
  return p;
}

}  // namespace

TEST_CASE("compute_H examples") {
  auto p = single_view(6, 3, false, 1, 2);
  p.state.views[0].weights.mean.setZero();
  CHECK(compute_H(p.state, p.data, 0).isZero());
  auto q = single_view(6, 30, true, 1, 2);
  q.state.views[0].weights.mean.setZero();
  CHECK(compute_H(q.state, q.data, 0).isZero());

  auto s = single_view(2, 1, false, 3, 1);
  s.data.views[0].X = Matrix::Constant(1, 1, 2.0);
  s.data.views[0].refresh_grams();
  s.state.views[0].weights.mean = Matrix::Constant(1, 1, 3.0);
  CHECK(compute_H(s.state, s.data, 0)(0, 0) == 6.0);
}

TEST_CASE("update_W approaches least squares as tau grows") {
  auto p = single_view(30, 4, false, 2, 1);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  for (Index i = 0; i < 30; ++i) p.state.Z.mean(i, 0) = nd(rng);
  set_gamma_mean(p.state.tau, 1e8);
  set_gamma_mean(p.state.views[0].delta, 1e-8);
  set_gamma_mean(p.state.views[0].gamma, 1.0);
  update_W(p.state, p.data, 0);
  const Matrix& x = p.data.views[0].X;
  const Vector ls = x.colPivHouseholderQr().solve(Vector(p.state.Z.mean.col(0)));
  CHECK((p.state.views[0].weights.mean.col(0) - ls).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("update_W with infinite prior precision shrinks to zero") {
  auto p = single_view(30, 4, false, 2, 2);
  set_gamma_mean(p.state.views[0].delta, 1e12);
  set_gamma_mean(p.state.views[0].gamma, 1e12);
  update_W(p.state, p.data, 0);
  CHECK(p.state.views[0].weights.mean.cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("dual update reconstructs the primal projection") {
  auto syn = testing_support::small_synth(20, {5}, {5}, 8);
  PrepareOptions po;
  auto as_primal = syn.dataset;
  as_primal.options[0].force_dual = false;
  auto as_dual = syn.dataset;
  as_dual.options[0].force_dual = true;
  auto dp = prepare_training_data(as_primal, po);
  auto dd = prepare_training_data(as_dual, po);
  FitConfig cfg;
  cfg.K_init = 1;
  auto sp = init_state(dp, cfg);
  auto sd = init_state(dd, cfg);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  Matrix z(20, 1);
  for (Index i = 0; i < 20; ++i) z(i, 0) = nd(rng);
  for (auto* s : {&sp, &sd}) {
    s->Z.mean = z;
    set_gamma_mean(s->tau, 5.0);
    set_gamma_mean(s->views[0].delta, 1.0);
    set_gamma_mean(s->views[0].gamma, 1.0);
  }
  update_W(sp, dp, 0);
  update_A(sd, dd, 0);
  const Vector hp = sp.views[0].H.col(0);
  const Vector hd = sd.views[0].H.col(0);
  CHECK((hp - hd).norm() / hp.norm() <= 5e-2);
  CHECK_THROWS_AS(update_A(sp, dp, 0), Error);
  CHECK_THROWS_AS(update_W(sd, dd, 0), Error);
}

TEST_CASE("dual update with zero residual keeps a zero mean") {
  auto p = single_view(10, 40, true, 4, 2);
  p.state.views[0].weights.mean.setZero();
  p.state.views[0].H.setZero();
  p.state.Z.mean.setZero();
  update_A(p.state, p.data, 0);
  CHECK(p.state.views[0].weights.mean.isZero());
}

TEST_CASE("Gamma shape parameters follow the closed forms") {
  auto syn = testing_support::small_synth(10, {4, 50}, {1, 1}, 3, 2);
  syn.dataset.options[1].force_dual = true;
  PrepareOptions po;
  auto data = prepare_training_data(syn.dataset, po);
  FitConfig cfg;
  cfg.K_init = 3;
  auto s = init_state(data, cfg);
  sweep(s, data);
  const double a0 = 1e-14;
  CHECK(s.views[0].delta.alpha(0) == 4.0 / 2.0 + a0);
  CHECK(s.views[1].delta.alpha(2) == 50.0 / 2.0 + a0);
  CHECK(s.views[0].gamma.alpha(1) == 3.0 / 2.0 + a0);
  CHECK(s.tau.alpha(0) == 15.0 + a0);
  CHECK(s.psi.alpha(0) == 10.0 * 2.0 / 2.0 + a0);
  CHECK(s.omega.alpha(0) == 2.0 / 2.0 + a0);
  CHECK(s.views[0].delta.alpha(0) == 2.00000000000001);
}

TEST_CASE("shrinkage fixed point of delta") {
  auto p = single_view(10, 4, false, 1, 2);
  p.state.views[0].weights.mean.setZero();
  for (auto& c : p.state.views[0].weights.cov) c.setZero();
  update_delta(p.state, p.data, 0);
  CHECK(p.state.views[0].delta.beta(0) == 1e-14);
  CHECK(p.state.views[0].delta.mean(0) == doctest::Approx((2.0 + 1e-14) / 1e-14));
}

TEST_CASE("update_Z decoupled and scalar cases") {
  auto p = single_view(8, 3, false, 6, 2);
  update_W(p.state, p.data, 0);
  p.state.V.mean.setZero();
  p.state.V.cov.setZero();
  set_gamma_mean(p.state.tau, 4.0);
  update_Z(p.state, p.data);
  CHECK(p.state.Z.cov.isApprox(0.25 * Matrix::Identity(2, 2), 1e-12));
  CHECK(p.state.Z.mean.isApprox(p.state.H_sum(), 1e-12));

  auto q = single_view(5, 2, false, 7, 1);
  update_W(q.state, q.data, 0);
  q.state.V.mean = Matrix::Constant(1, 1, 0.7);
  q.state.V.cov = Matrix::Constant(1, 1, 0.2);
  set_gamma_mean(q.state.tau, 3.0);
  set_gamma_mean(q.state.psi, 2.0);
  update_Z(q.state, q.data);
  const double prec = 3.0 + 2.0 * (0.49 + 0.2);
  CHECK(q.state.Z.cov(0, 0) == doctest::Approx(1.0 / prec).epsilon(1e-14));
  for (Index i = 0; i < 5; ++i) {
    const double want = (3.0 * q.state.views[0].H(i, 0) + 2.0 * q.state.Y.mean(i, 0) * 0.7) / prec;
    CHECK(q.state.Z.mean(i, 0) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("update_V with no latent signal") {
  auto p = single_view(8, 3, false, 6, 3);
  p.state.Z.mean.setZero();
  p.state.Z.cov.setZero();
  p.state.omega.alpha = Vector::Constant(3, 1.0);
  p.state.omega.beta = (Vector(3) << 0.5, 1.0, 4.0).finished();
  update_V(p.state);
  CHECK(p.state.V.mean.isZero());
  const Vector var = (Vector(3) << 0.5, 1.0, 4.0).finished();
  CHECK(p.state.V.cov.isApprox(Matrix(var.asDiagonal()), 1e-12));
}

TEST_CASE("tau rate equals the prior rate for a perfect, certain fit") {
  auto p = single_view(10, 3, false, 2, 3);
  p.state.Z.mean = p.state.H_sum();
  p.state.Z.cov.setZero();
  for (auto& c : p.state.views[0].weights.cov) c.setZero();
  update_tau(p.state, p.data);
  CHECK(p.state.tau.beta(0) == 1e-14);
}

TEST_CASE("Y and xi updates") {
  auto p = single_view(12, 3, false, 9, 2);
  sweep(p.state, p.data);
  set_gamma_mean(p.state.psi, 1e12);
  update_Y_and_xi(p.state, p.data);
  const Matrix head = p.state.Z.mean * p.state.V.mean.transpose();
  CHECK((p.state.Y.mean - head).cwiseAbs().maxCoeff() <= 1e-9);
  const Matrix xi2 = p.state.Y.mean.array().square() + p.state.Y.var.array();
  CHECK((p.state.xi.array().square() - xi2.array()).abs().maxCoeff() <= 1e-12);
  CHECK((p.state.xi.array() >= 0.0).all());
}

TEST_CASE("every update is a coordinate-ascent step on reachable states") {
  const auto ups = testing_support::all_updates();
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    auto p = random_problem(seed);
    for (const auto& u : ups) {
      auto s = p.state;
      const double before = compute_elbo(s, p.data);
      u.apply(s, p.data);
      const double after = compute_elbo(s, p.data);
      worst = std::max(worst, before - after);
      INFO("seed " << seed << " update " << u.name << " decrease " << before - after << " of " << before);
      CHECK(after >= before - 1e-9);
    }
  }
  MESSAGE("largest single-update decrease: " << worst);
}

TEST_CASE("the just-updated factor is a local optimum") {
  const auto ups = testing_support::all_updates();
  const auto perturbs = perturbations();
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    auto p = random_problem(seed);
    for (const auto& u : ups) {
      auto s = p.state;
      u.apply(s, p.data);
      const double opt = compute_elbo(s, p.data);
      const auto& list = perturbs.at(u.name);
      for (std::size_t i = 0; i < list.size(); ++i) {
        for (double e : {1e-3, -1e-3}) {
          auto t = s;
          list[i](t, p.data, e);
          const double moved = compute_elbo(t, p.data);
          INFO("seed " << seed << " update " << u.name << " perturbation " << i << " eps " << e);
          CHECK(moved <= opt + 1e-9);
        }
      }
    }
  }
}

TEST_CASE("xi maximises the output term entrywise") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto p = random_problem(seed);
    update_Y_and_xi(p.state, p.data);
    const double base = elbo_terms(p.state, p.data).output_bound;
    for (Index c = 0; c < p.state.xi.cols(); ++c) {
      for (Index i = 0; i < p.state.xi.rows(); ++i) {
        for (double e : {1e-3, -1e-3}) {
          auto s = p.state;
          s.xi(i, c) = std::abs(s.xi(i, c) + e);
          CHECK(elbo_terms(s, p.data).output_bound <= base + 1e-12);
        }
      }
    }
  }
}

TEST_CASE("ELBO is deterministic") {
  auto p = random_problem(3);
  auto copy = p.state;
  CHECK(compute_elbo(p.state, p.data) == compute_elbo(copy, p.data));
}

TEST_CASE("prune with threshold zero removes nothing") {
  auto p = random_problem(4);
  PruneConfig pc;
  pc.weight_power_rel_threshold = 0.0;
  const Index k = p.state.K;
  const auto report = prune(p.state, p.data, pc);
  CHECK(report.empty());
  CHECK(p.state.K == k);
}

TEST_CASE("prune contracts every shape consistently") {
  auto p = random_problem(6);
  sweep(p.state, p.data);
  const Index k = p.state.K;
  // Kill factor 0 and the first feature of the primal view.
  p.state.V.mean.col(0).setZero();
  for (auto& v : p.state.views) v.weights.mean.col(0).setZero();
  p.state.views[0].weights.mean.row(0).setZero();
  PruneConfig pc;
  if (k > 1) {
    const auto report = prune(p.state, p.data, pc);
    CHECK(report.removed_factors == std::vector<Index>{0});
    CHECK(p.state.K == k - 1);
    CHECK(p.state.check_invariants().empty());
    REQUIRE_FALSE(report.removed_features.empty());
    CHECK(report.removed_features[0].first == p.data.views[0].name);
    sweep(p.state, p.data);
    CHECK(p.state.check_invariants().empty());
  } else {
    CHECK_THROWS_AS(prune(p.state, p.data, pc), Error);
  }
}

TEST_CASE("stored weight log-determinants track the covariances") {
  auto p = random_problem(8);
  const auto agree = [](const ModelState& s) {
    for (const auto& v : s.views) {
      REQUIRE(v.weights.log_det.size() == v.weights.cov.size());
      for (std::size_t k = 0; k < v.weights.cov.size(); ++k) {
        CHECK(v.weights.log_det[k] == doctest::Approx(log_det_spd(v.weights.cov[k])).epsilon(1e-9));
      }
    }
  };
  sweep(p.state, p.data);
  agree(p.state);
  // Feature pruning in the primal view recomputes the determinant of the
  // remaining block; factor pruning drops entries.
  p.state.views[0].weights.mean.row(0).setZero();
  p.state.V.mean.col(0).setZero();
  for (auto& v : p.state.views) v.weights.mean.col(0).setZero();
  if (p.state.K > 1) {
    prune(p.state, p.data, PruneConfig{});
    agree(p.state);
  }
}

namespace {

// One view, 100 features; labels depend on features 0..4 only.
MultiViewDataset planted_dataset() {
  const Index n = 300, d = 100;
  std::mt19937_64 rng(12);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud;
  MultiViewDataset ds;
  ViewMatrix v{"x", {}, Matrix(n, d)};
  for (Index j = 0; j < d; ++j) v.feature_names.push_back("f" + std::to_string(j));
  for (Index j = 0; j < d; ++j) {
    for (Index i = 0; i < n; ++i) v.values(i, j) = nd(rng);
  }
  ds.targets.class_names = {"y"};
  ds.targets.values.resize(n, 1);
  for (Index i = 0; i < n; ++i) {
    const double y = 2.0 * v.values.row(i).head(5).sum();
    ds.targets.values(i, 0) = ud(rng) < 1.0 / (1.0 + std::exp(-y)) ? 1.0 : 0.0;
  }
  ds.views.push_back(std::move(v));
  ds.options.emplace_back();
  ds.options[0].force_dual = false;
  return ds;
}

}  // namespace

TEST_CASE("planted zero-weight features lose their weight and get pruned") {
  const auto ds = planted_dataset();
  FitConfig cfg;
  cfg.seed = 3;
  // After 50 sweeps the planted zeros carry < 1e-6 of the top feature power;
  // the default 1e-10 cut removes them a little later.
  cfg.max_iters = 50;
  const auto early = fit(ds, cfg);
  const auto& v = early.model.views[0];
  const Vector power = v.implied_weights().colwise().squaredNorm().transpose();
  const auto active = v.active_indices();
  for (std::size_t i = 0; i < active.size(); ++i) {
    if (active[i] >= 5) CHECK(power(static_cast<Index>(i)) <= 1e-6 * power.maxCoeff());
  }
  cfg.prune.weight_power_rel_threshold = 1e-6;
  CHECK(fit(ds, cfg).model.views[0].active_indices() == std::vector<Index>{0, 1, 2, 3, 4});

  cfg.prune.weight_power_rel_threshold = 1e-10;
  cfg.max_iters = 150;
  CHECK(fit(ds, cfg).model.views[0].active_indices() == std::vector<Index>{0, 1, 2, 3, 4});
}

TEST_CASE("fit is deterministic, monotone between prunes and records its trace") {
  auto syn = testing_support::small_synth(80, {6, 150}, {3, 3}, 21);
  FitConfig cfg;
  cfg.K_init = 6;
  cfg.seed = 5;
  cfg.max_iters = 120;
  const auto a = fit(syn.dataset, cfg);
  const auto b = fit(syn.dataset, cfg);
  REQUIRE(a.trace.entries.size() == b.trace.entries.size());
  for (std::size_t i = 0; i < a.trace.entries.size(); ++i) {
    CHECK(a.trace.entries[i].elbo == b.trace.entries[i].elbo);
  }
  CHECK(a.model.V_mean == b.model.V_mean);
  CHECK(a.trace.worst_relative_decrease() <= 1e-8);
  CHECK(a.iterations == static_cast<int>(a.trace.entries.size()));
  for (const auto& w : a.warnings) CHECK(w.find("decreased") == std::string::npos);

  std::vector<int> seen;
  auto watched = cfg;
  watched.on_iteration = [&seen](const ElboTraceEntry& e) { seen.push_back(e.iteration); };
  const auto c = fit(syn.dataset, watched);
  REQUIRE(seen.size() == c.trace.entries.size());
  for (std::size_t i = 0; i < seen.size(); ++i) CHECK(seen[i] == static_cast<int>(i) + 1);
  CHECK(c.model.V_mean == a.model.V_mean);

  const auto dir = testing_support::fresh_dir("trace");
  write_trace_csv((dir / "trace.csv").string(), a.trace);
  std::ifstream in(dir / "trace.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "iteration,elbo,K,after_prune,active_view0,active_view1");
  int lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == a.iterations);
}

TEST_CASE("converges and stops early on a clear sparse problem") {
  FitConfig cfg;
  cfg.seed = 3;
  cfg.max_iters = 2000;
  const auto r = fit(planted_dataset(), cfg);
  CHECK(r.converged);
  CHECK(r.iterations < 2000);
  CHECK(r.iterations > cfg.prune.burn_in_iters);
  CHECK(r.warnings.empty());
}

TEST_CASE("separable two-view data is fitted well") {
  // The bound optimum prunes aggressively here: training AUC is around 0.98
  // rather than 1, and sparser states score a higher bound.
  std::vector<double> aucs;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SynthConfig sc;
    sc.n_samples = 200;
    sc.K_true = 1;
    sc.relevant = {2, 2};
    sc.tau_true = 1e8;
    sc.psi_true = 1e8;
    sc.hard_labels = true;
    sc.seed = seed;
    const auto syn = synth_generate(sc);
    FitConfig cfg;
    cfg.seed = seed;
    const auto r = fit(syn.dataset, cfg);
    const auto pred = predict_proba(r.model, syn.dataset);
    aucs.push_back(
        compute_auc(Vector(syn.dataset.targets.values.col(0)), Vector(pred.probabilities.col(0))));
  }
  std::sort(aucs.begin(), aucs.end());
  CHECK(aucs[2] >= 0.95);
  CHECK(aucs[0] >= 0.9);
}

TEST_CASE("dual views never build a D x D matrix") {
  auto syn = testing_support::small_synth(20, {3, 500}, {1, 2}, 2);
  FitConfig cfg;
  cfg.max_iters = 30;
  cfg.K_init = 4;
  const auto r = fit(syn.dataset, cfg);
  for (const auto& [name, sq] : r.largest_square) {
    if (name == "view1") CHECK(sq <= 20);
  }
  for (const auto& [name, dual] : r.view_dual) {
    if (name == "view1") CHECK(dual);
    if (name == "view0") CHECK_FALSE(dual);
  }
}

TEST_CASE("warm start only touches the means of Z and V") {
  auto syn = testing_support::small_synth(30, {4, 5}, {2, 2}, 7, 2);
  PrepareOptions po;
  auto data = prepare_training_data(syn.dataset, po);
  FitConfig cfg;
  cfg.K_init = 4;
  const auto plain = init_state(data, cfg);
  auto warm = plain;
  warm_start(warm, data);
  CHECK(warm.Z.cov == plain.Z.cov);
  CHECK(warm.V.cov == plain.V.cov);
  CHECK(warm.views[0].weights.mean == plain.views[0].weights.mean);
  for (Index c = 0; c < 2; ++c) {
    const Vector y = (2.0 * data.T.col(c).array() - 1.0).matrix();
    Vector h = Vector::Zero(30);
    for (const auto& vd : data.views) h += vd.X * (vd.X.transpose() * y);
    const Vector zc = warm.Z.mean.col(c);
    CHECK(std::sqrt(zc.squaredNorm() / 30.0) == doctest::Approx(3.0));
    CHECK(zc.normalized().dot(h.normalized()) == doctest::Approx(1.0));
    CHECK(warm.V.mean(c, c) == 0.5);
  }
  CHECK(warm.Z.mean.col(3).isApprox(0.01 * plain.Z.mean.col(3)));
}

TEST_CASE("config validation") {
  FitConfig c;
  c.max_iters = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = FitConfig{};
  c.elbo_rel_tol = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = FitConfig{};
  c.prune.weight_power_rel_threshold = 1.0;
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK_NOTHROW(FitConfig{}.validate());
}
