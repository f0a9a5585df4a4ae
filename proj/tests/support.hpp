#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "baldur/errors.hpp"
#include "baldur/evaluation.hpp"
#include "baldur/inference.hpp"

namespace testing_support {

using namespace baldur;

inline std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("baldur_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Small synthetic problem; draws a new seed until both classes appear.
inline SynthResult small_synth(Index n, std::vector<Index> widths, std::vector<Index> relevant,
                               std::uint64_t seed, Index classes = 1) {
  SynthConfig c;
  c.n_samples = n;
  c.view_widths = std::move(widths);
  c.relevant = std::move(relevant);
  c.n_classes = classes;
  for (std::uint64_t s = seed;; s += 1000) {
    c.seed = s;
    try {
      return synth_generate(c);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::DegenerateLabels) throw;
    }
  }
}

struct Update {
  std::string name;
  std::function<void(ModelState&, const TrainingData&)> apply;
};

// The ten coordinate updates, per view where it applies (view 0 primal,
// view 1 dual in random_problem()).
inline std::vector<Update> all_updates() {
  return {
      {"W", [](ModelState& s, const TrainingData& d) { update_W(s, d, 0); }},
      {"A", [](ModelState& s, const TrainingData& d) { update_A(s, d, 1); }},
      {"delta0", [](ModelState& s, const TrainingData& d) { update_delta(s, d, 0); }},
      {"delta1", [](ModelState& s, const TrainingData& d) { update_delta(s, d, 1); }},
      {"gamma0", [](ModelState& s, const TrainingData& d) { update_gamma(s, d, 0); }},
      {"gamma1", [](ModelState& s, const TrainingData& d) { update_gamma(s, d, 1); }},
      {"Z", [](ModelState& s, const TrainingData& d) { update_Z(s, d); }},
      {"tau", [](ModelState& s, const TrainingData& d) { update_tau(s, d); }},
      {"V", [](ModelState& s, const TrainingData&) { update_V(s); }},
      {"omega", [](ModelState& s, const TrainingData&) { update_omega(s); }},
      {"psi", [](ModelState& s, const TrainingData&) { update_psi(s); }},
      {"Y_xi", [](ModelState& s, const TrainingData& d) { update_Y_and_xi(s, d); }},
  };
}

struct Problem {
  TrainingData data;
  ModelState state;
};

// A reachable state on a two-view problem (primal view 0, dual view 1): the
// initial state, one full sweep so every Gamma factor has seen data, then a
// random number of randomly chosen single updates.
inline Problem random_problem(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto pick = [&](Index lo, Index hi) {
    return std::uniform_int_distribution<Index>(lo, hi)(rng);
  };
  const Index n = pick(12, 30);
  const Index classes = pick(1, 2);
  auto syn = small_synth(n, {pick(2, 6), pick(n + 5, 2 * n + 10)}, {1, 2}, seed, classes);
  syn.dataset.options[1].force_dual = true;
  syn.dataset.options[0].force_dual = false;

  PrepareOptions po;
  po.seed = seed;
  Problem p{prepare_training_data(syn.dataset, po), {}};
  FitConfig cfg;
  cfg.K_init = pick(1, 4);
  cfg.seed = seed;
  p.state = init_state(p.data, cfg);
  if (seed % 2 == 0) warm_start(p.state, p.data);
  sweep(p.state, p.data);
  const auto ups = all_updates();
  const Index extra = pick(0, 25);
  for (Index i = 0; i < extra; ++i) {
    ups[static_cast<std::size_t>(pick(0, static_cast<Index>(ups.size()) - 1))].apply(p.state, p.data);
  }
  return p;
}

// Perturbations of the factor a given update just wrote. Each entry applies
// a +/- eps change in place.
using Perturb = std::function<void(ModelState&, const TrainingData&, double)>;

inline Matrix pattern(Index r, Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Matrix m(r, c);
  for (Index j = 0; j < c; ++j) {
    for (Index i = 0; i < r; ++i) m(i, j) = (rng() & 1) ? 1.0 : -1.0;
  }
  return m;
}

inline std::vector<Perturb> gamma_perturbs(std::function<GammaQ&(ModelState&)> get) {
  return {[get](ModelState& s, const TrainingData&, double e) { get(s).alpha *= (1.0 + e); },
          [get](ModelState& s, const TrainingData&, double e) { get(s).beta *= (1.0 + e); }};
}

inline std::vector<Perturb> weight_perturbs(std::size_t m) {
  return {[m](ModelState& s, const TrainingData& d, double e) {
            auto& w = s.views[m].weights.mean;
            w += e * pattern(w.rows(), w.cols(), 17);
            s.views[m].H = compute_H(s, d, m);
          },
          [m](ModelState& s, const TrainingData&, double e) {
            auto& w = s.views[m].weights;
            for (auto& c : w.cov) c *= (1.0 + e);
            for (auto& l : w.log_det) l += static_cast<double>(w.mean.rows()) * std::log1p(e);
          }};
}

inline std::vector<Perturb> shared_perturbs(std::function<SharedCovGaussian&(ModelState&)> get) {
  return {[get](ModelState& s, const TrainingData&, double e) {
            auto& q = get(s);
            q.mean += e * pattern(q.mean.rows(), q.mean.cols(), 23);
          },
          [get](ModelState& s, const TrainingData&, double e) { get(s).cov *= (1.0 + e); }};
}

inline std::map<std::string, std::vector<Perturb>> perturbations() {
  std::map<std::string, std::vector<Perturb>> p;
  p["W"] = weight_perturbs(0);
  p["A"] = weight_perturbs(1);
  p["delta0"] = gamma_perturbs([](ModelState& s) -> GammaQ& { return s.views[0].delta; });
  p["delta1"] = gamma_perturbs([](ModelState& s) -> GammaQ& { return s.views[1].delta; });
  p["gamma0"] = gamma_perturbs([](ModelState& s) -> GammaQ& { return s.views[0].gamma; });
  p["gamma1"] = gamma_perturbs([](ModelState& s) -> GammaQ& { return s.views[1].gamma; });
  p["tau"] = gamma_perturbs([](ModelState& s) -> GammaQ& { return s.tau; });
  p["psi"] = gamma_perturbs([](ModelState& s) -> GammaQ& { return s.psi; });
  p["omega"] = gamma_perturbs([](ModelState& s) -> GammaQ& { return s.omega; });
  p["Z"] = shared_perturbs([](ModelState& s) -> SharedCovGaussian& { return s.Z; });
  p["V"] = shared_perturbs([](ModelState& s) -> SharedCovGaussian& { return s.V; });
  // Y is optimal for the xi it was computed with, xi for the new Y; the
  // just-written quantity is xi.
  p["Y_xi"] = {[](ModelState& s, const TrainingData&, double e) {
    s.xi = (s.xi.array() + e * pattern(s.xi.rows(), s.xi.cols(), 31).array()).abs().matrix();
  }};
  return p;
}

}  // namespace testing_support
