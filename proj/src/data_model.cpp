#include "baldur/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "json.hpp"

#include "baldur/csv.hpp"
#include "baldur/errors.hpp"

namespace baldur {

using nlohmann::json;

Index MultiViewDataset::n_samples() const {
  if (!views.empty()) return views.front().rows();
  return targets.values.rows();
}

MultiViewDataset MultiViewDataset::subset(std::span<const Index> rows) const {
  std::vector<Index> idx(rows.begin(), rows.end());
  MultiViewDataset out;
  out.options = options;
  for (const auto& v : views) {
    out.views.push_back({v.view_name, v.feature_names, v.values(idx, Eigen::all)});
  }
  out.targets.class_names = targets.class_names;
  if (has_targets()) {
    out.targets.values = targets.values(idx, Eigen::all);
  } else {
    out.targets.values = Matrix(static_cast<Index>(idx.size()), 0);
  }
  return out;
}

void MultiViewDataset::validate() const {
  if (views.empty()) throw Error(ErrorKind::ShapeMismatch, "dataset has no views");
  if (options.size() != views.size()) {
    throw Error(ErrorKind::ShapeMismatch, "view options do not match view count");
  }
  const Index n = views.front().rows();
  std::set<std::string> names;
  for (const auto& v : views) {
    if (v.rows() != n) {
      throw Error(ErrorKind::ShapeMismatch, "view '" + v.view_name + "' has " +
                                                std::to_string(v.rows()) + " rows, expected " +
                                                std::to_string(n));
    }
    if (v.cols() < 1) throw Error(ErrorKind::ShapeMismatch, "view '" + v.view_name + "' is empty");
    if (static_cast<Index>(v.feature_names.size()) != v.cols()) {
      throw Error(ErrorKind::ShapeMismatch, "view '" + v.view_name + "' header/column mismatch");
    }
    if (!v.values.allFinite()) {
      throw Error(ErrorKind::NonFiniteValue, "view '" + v.view_name + "' has non-finite values");
    }
    if (!names.insert(v.view_name).second) {
      throw Error(ErrorKind::ShapeMismatch, "duplicate view name '" + v.view_name + "'");
    }
  }
  if (has_targets()) {
    if (targets.values.rows() != n) {
      throw Error(ErrorKind::ShapeMismatch, "targets have " +
                                                std::to_string(targets.values.rows()) +
                                                " rows, expected " + std::to_string(n));
    }
    if (static_cast<Index>(targets.class_names.size()) != targets.values.cols()) {
      throw Error(ErrorKind::ShapeMismatch, "target header/column mismatch");
    }
    for (Index i = 0; i < targets.values.size(); ++i) {
      const double t = targets.values.data()[i];
      if (t != 0.0 && t != 1.0) {
        throw Error(ErrorKind::NonBinaryTarget, "target value " + format_double(t));
      }
    }
  }
}

Index ViewDescriptor::active_count() const {
  return std::count(active_features.begin(), active_features.end(), true);
}

namespace {

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) {
      throw Error(ErrorKind::InvalidConfig, "unknown key '" + key + "' in " + where);
    }
  }
}

}  // namespace

MultiViewDataset load_dataset(const std::filesystem::path& manifest, bool require_targets) {
  std::ifstream in(manifest);
  if (!in) throw Error(ErrorKind::MissingFile, "manifest not found: " + manifest.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, manifest.string() + ": " + e.what());
  }
  const auto base = manifest.parent_path();
  const auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
  };

  MultiViewDataset ds;
  try {
    if (!doc.is_object()) throw Error(ErrorKind::ParseError, "manifest must be an object");
    reject_unknown_keys(doc, {"views", "targets"}, "manifest");
    if (!doc.contains("views") || !doc["views"].is_array() || doc["views"].empty()) {
      throw Error(ErrorKind::ParseError, "manifest needs a non-empty 'views' array");
    }
    for (const auto& entry : doc["views"]) {
      reject_unknown_keys(entry, {"name", "path", "force_dual", "rv_strategy", "rv_k"},
                          "view entry");
      const auto path = resolve(entry.at("path").get<std::string>());
      auto table = read_numeric_csv(path);
      ViewMatrix view;
      view.view_name = entry.value("name", path.stem().string());
      view.feature_names = std::move(table.header);
      view.values = std::move(table.values);
      ViewOptions opt;
      if (entry.contains("force_dual")) opt.force_dual = entry["force_dual"].get<bool>();
      const auto strategy = entry.value("rv_strategy", std::string("all"));
      if (strategy == "all") {
        opt.rv_strategy = RvStrategy::All;
      } else if (strategy == "random-k") {
        opt.rv_strategy = RvStrategy::RandomK;
        opt.rv_k = entry.at("rv_k").get<Index>();
      } else {
        throw Error(ErrorKind::InvalidConfig, "unknown rv_strategy '" + strategy + "'");
      }
      ds.views.push_back(std::move(view));
      ds.options.push_back(opt);
    }
    if (doc.contains("targets")) {
      auto table = read_numeric_csv(resolve(doc["targets"].get<std::string>()));
      ds.targets.class_names = std::move(table.header);
      ds.targets.values = std::move(table.values);
    } else if (require_targets) {
      throw Error(ErrorKind::ParseError, "manifest has no 'targets' entry");
    } else {
      ds.targets.values = Matrix(ds.views.front().rows(), 0);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, manifest.string() + ": " + e.what());
  }
  ds.validate();
  return ds;
}

void write_dataset(const MultiViewDataset& dataset, const std::filesystem::path& dir,
                   const std::string& manifest_name) {
  std::filesystem::create_directories(dir);
  json doc;
  doc["views"] = json::array();
  for (std::size_t m = 0; m < dataset.views.size(); ++m) {
    const auto& v = dataset.views[m];
    const std::string file = v.view_name + ".csv";
    write_numeric_csv(dir / file, v.feature_names, v.values);
    json entry{{"name", v.view_name}, {"path", file}};
    if (m < dataset.options.size()) {
      const auto& opt = dataset.options[m];
      if (opt.force_dual) entry["force_dual"] = *opt.force_dual;
      if (opt.rv_strategy == RvStrategy::RandomK) {
        entry["rv_strategy"] = "random-k";
        entry["rv_k"] = opt.rv_k;
      }
    }
    doc["views"].push_back(entry);
  }
  if (dataset.has_targets()) {
    write_numeric_csv(dir / "targets.csv", dataset.targets.class_names, dataset.targets.values);
    doc["targets"] = "targets.csv";
  }
  std::ofstream out(dir / manifest_name);
  out << doc.dump(2) << '\n';
}

StandardizedView standardize_fit_transform(const ViewMatrix& view, std::span<const Index> train_rows) {
  if (train_rows.empty()) throw Error(ErrorKind::InvalidConfig, "standardization needs train rows");
  const std::vector<Index> idx(train_rows.begin(), train_rows.end());
  const Matrix train = view.values(idx, Eigen::all);
  const double n = static_cast<double>(train.rows());

  StandardizedView out;
  out.standardizer.mean = train.colwise().mean().transpose();
  out.standardizer.stddev.resize(view.cols());
  out.active_features.assign(static_cast<std::size_t>(view.cols()), true);
  for (Index j = 0; j < view.cols(); ++j) {
    const double mu = out.standardizer.mean(j);
    const double var = (train.col(j).array() - mu).square().sum() / n;
    const double sd = std::sqrt(var);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mu)))) {
      out.standardizer.stddev(j) = 0.0;
      out.active_features[static_cast<std::size_t>(j)] = false;
    } else {
      out.standardizer.stddev(j) = sd;
    }
  }
  out.view.view_name = view.view_name;
  out.view.feature_names = view.feature_names;
  out.view.values = apply_standardizer(view.values, out.standardizer);
  return out;
}

Matrix apply_standardizer(const Matrix& raw, const Standardizer& standardizer) {
  Matrix out(raw.rows(), raw.cols());
  for (Index j = 0; j < raw.cols(); ++j) {
    const double sd = standardizer.stddev(j);
    if (sd > 0.0) {
      out.col(j) = (raw.col(j).array() - standardizer.mean(j)) / sd;
    } else {
      out.col(j).setZero();
    }
  }
  return out;
}

bool decide_width(Index n_train, Index d, double ratio_threshold) {
  return static_cast<double>(d) > ratio_threshold * static_cast<double>(n_train);
}

std::vector<Index> select_relevance_vectors(Index n_train, RvStrategy strategy, Index k,
                                            std::uint64_t seed) {
  std::vector<Index> all(static_cast<std::size_t>(n_train));
  std::iota(all.begin(), all.end(), Index{0});
  if (strategy == RvStrategy::All) return all;
  if (k > n_train) {
    throw Error(ErrorKind::KTooLarge, "requested " + std::to_string(k) +
                                          " relevance vectors from " + std::to_string(n_train) +
                                          " training rows");
  }
  if (k < 1) throw Error(ErrorKind::InvalidConfig, "rv_k must be at least 1");
  std::mt19937_64 rng(seed);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(static_cast<std::size_t>(k));
  std::sort(all.begin(), all.end());
  return all;
}

std::vector<Fold> split_folds(const MultiViewDataset& dataset, Index n_folds, std::uint64_t seed,
                              bool stratified) {
  const Index n = dataset.n_samples();
  if (n_folds < 2) throw Error(ErrorKind::InvalidConfig, "need at least 2 folds");
  if (n_folds > n) throw Error(ErrorKind::InvalidConfig, "more folds than samples");

  std::vector<std::vector<Index>> groups;
  if (stratified && dataset.has_targets()) {
    std::vector<Index> pos;
    std::vector<Index> neg;
    for (Index i = 0; i < n; ++i) (dataset.targets.values(i, 0) == 1.0 ? pos : neg).push_back(i);
    for (auto* g : {&pos, &neg}) {
      if (static_cast<Index>(g->size()) < n_folds) {
        throw Error(ErrorKind::InsufficientClassMembers,
                    "a class has " + std::to_string(g->size()) + " members for " +
                        std::to_string(n_folds) + " folds");
      }
    }
    groups = {std::move(pos), std::move(neg)};
  } else {
    std::vector<Index> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), Index{0});
    groups = {std::move(all)};
  }

  std::mt19937_64 rng(seed);
  std::vector<std::vector<Index>> test(static_cast<std::size_t>(n_folds));
  std::size_t next = 0;
  for (auto& g : groups) {
    std::shuffle(g.begin(), g.end(), rng);
    for (Index i : g) {
      test[next].push_back(i);
      next = (next + 1) % test.size();
    }
  }

  std::vector<Fold> folds;
  for (auto& t : test) {
    std::sort(t.begin(), t.end());
    Fold f;
    f.test = t;
    std::vector<bool> in_test(static_cast<std::size_t>(n), false);
    for (Index i : t) in_test[static_cast<std::size_t>(i)] = true;
    for (Index i = 0; i < n; ++i) {
      if (!in_test[static_cast<std::size_t>(i)]) f.train.push_back(i);
    }
    folds.push_back(std::move(f));
  }
  return folds;
}

void write_folds(const std::filesystem::path& path, const std::vector<Fold>& folds) {
  json doc = json::array();
  for (const auto& f : folds) doc.push_back({{"train", f.train}, {"test", f.test}});
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::MissingFile, "cannot write " + path.string());
  out << doc.dump(1) << '\n';
}

std::vector<Fold> read_folds(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingFile, "fold file not found: " + path.string());
  try {
    const json doc = json::parse(in);
    std::vector<Fold> folds;
    for (const auto& f : doc) {
      folds.push_back({f.at("train").get<std::vector<Index>>(), f.at("test").get<std::vector<Index>>()});
    }
    return folds;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
}

}  // namespace baldur
