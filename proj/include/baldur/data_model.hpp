#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "baldur/linalg.hpp"

namespace baldur {

// One feature block. Rows are samples, columns features.
struct ViewMatrix {
  std::string view_name;
  std::vector<std::string> feature_names;
  Matrix values;

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }
};

// N x C matrix of {0,1} labels.
struct TargetMatrix {
  std::vector<std::string> class_names;
  Matrix values;
};

enum class RvStrategy { All, RandomK };

// Per-view settings that come from the manifest.
struct ViewOptions {
  std::optional<bool> force_dual;
  RvStrategy rv_strategy = RvStrategy::All;
  Index rv_k = 0;
};

struct MultiViewDataset {
  std::vector<ViewMatrix> views;
  std::vector<ViewOptions> options;  // parallel to views
  TargetMatrix targets;              // may be empty (0 columns) for prediction inputs

  Index n_samples() const;
  Index n_views() const { return static_cast<Index>(views.size()); }
  Index n_classes() const { return targets.values.cols(); }
  bool has_targets() const { return targets.values.cols() > 0; }

  // Row subset of every view and of the targets.
  MultiViewDataset subset(std::span<const Index> rows) const;

  // ShapeMismatch / NonBinaryTarget / NonFiniteValue on violation.
  void validate() const;
};

struct Standardizer {
  Vector mean;
  Vector stddev;  // 0 for masked (zero-variance) columns
};

struct ViewDescriptor {
  bool dual = false;
  std::vector<Index> rv_indices;  // rows of the training split; empty unless dual
  Standardizer standardizer;
  std::vector<bool> active_features;

  Index active_count() const;
};

// Reads a JSON manifest:
//   {"views": [{"name": "...", "path": "a.csv", "force_dual": true,
//               "rv_strategy": "all" | "random-k", "rv_k": 30}, ...],
//    "targets": "t.csv"}
// Relative paths resolve against the manifest's directory. With
// `require_targets == false` the "targets" entry may be omitted.
MultiViewDataset load_dataset(const std::filesystem::path& manifest, bool require_targets = true);

// Writes the views and targets as CSV files next to a manifest that
// load_dataset() reads back.
void write_dataset(const MultiViewDataset& dataset, const std::filesystem::path& dir,
                   const std::string& manifest_name = "manifest.json");

struct StandardizedView {
  ViewMatrix view;  // every row transformed; masked columns are zero
  Standardizer standardizer;
  std::vector<bool> active_features;
};

// z-scores each column with the mean and population std of `train_rows`.
// Zero-variance columns are masked inactive.
StandardizedView standardize_fit_transform(const ViewMatrix& view, std::span<const Index> train_rows);

// Applies a stored standardizer to raw values (masked columns map to zero).
Matrix apply_standardizer(const Matrix& raw, const Standardizer& standardizer);

// Dual (wide) treatment iff d > ratio_threshold * n_train.
bool decide_width(Index n_train, Index d, double ratio_threshold = 1.0);

// Sorted row indices into the training split.
std::vector<Index> select_relevance_vectors(Index n_train, RvStrategy strategy, Index k,
                                            std::uint64_t seed);

struct Fold {
  std::vector<Index> train;
  std::vector<Index> test;
};

// Stratification uses the first target column.
std::vector<Fold> split_folds(const MultiViewDataset& dataset, Index n_folds, std::uint64_t seed,
                              bool stratified = true);

void write_folds(const std::filesystem::path& path, const std::vector<Fold>& folds);
std::vector<Fold> read_folds(const std::filesystem::path& path);

}  // namespace baldur
