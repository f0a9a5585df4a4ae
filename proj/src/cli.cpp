#include "baldur/cli.hpp"

#include <filesystem>
#include <fstream>
#include <new>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "baldur/csv.hpp"
#include "baldur/errors.hpp"
#include "baldur/evaluation.hpp"
#include "baldur/inference.hpp"
#include "baldur/model_io.hpp"
#include "json.hpp"

namespace baldur {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct FitFlags {
  FitConfig config;
  std::vector<std::string> dual_views;
  std::vector<std::string> primal_views;
  bool no_view_prune = false;
  bool no_warm_start = false;
};

void add_fit_flags(CLI::App* cmd, FitFlags& f) {
  cmd->add_option("--seed", f.config.seed, "Random seed")->capture_default_str();
  cmd->add_option("--k-init", f.config.K_init, "Initial number of latent factors")
      ->check(CLI::Range(Index{1}, Index{100000}))
      ->capture_default_str();
  cmd->add_option("--max-iters", f.config.max_iters, "Maximum number of sweeps")
      ->check(CLI::Range(1, 100000000))
      ->capture_default_str();
  cmd->add_option("--elbo-tol", f.config.elbo_rel_tol, "Relative lower-bound change for convergence")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--prune-threshold", f.config.prune.weight_power_rel_threshold,
                  "Relative weight power below which components are pruned")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  cmd->add_option("--burn-in", f.config.prune.burn_in_iters, "Sweeps before pruning starts")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_flag("--no-view-prune", f.no_view_prune, "Only drop views once all their features are gone");
  cmd->add_flag("--no-warm-start", f.no_warm_start,
                "Start from the plain random initialisation (V = 0, Z ~ N(0, 1))");
  cmd->add_option("--ratio-threshold", f.config.ratio_threshold,
                  "A view is treated as wide when D > ratio * N")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--dual", f.dual_views, "Force the dual formulation for the named view");
  cmd->add_option("--primal", f.primal_views, "Force the primal formulation for the named view");
}

FitConfig finish_fit_flags(FitFlags& f, MultiViewDataset& ds) {
  f.config.prune.view_prune_enabled = !f.no_view_prune;
  f.config.warm_start = !f.no_warm_start;
  const auto apply = [&](const std::vector<std::string>& names, bool dual) {
    for (const auto& name : names) {
      bool found = false;
      for (std::size_t m = 0; m < ds.views.size(); ++m) {
        if (ds.views[m].view_name == name) {
          ds.options[m].force_dual = dual;
          found = true;
        }
      }
      if (!found) throw Error(ErrorKind::InvalidConfig, "no view named '" + name + "' in the manifest");
    }
  };
  apply(f.dual_views, true);
  apply(f.primal_views, false);
  f.config.validate();
  return f.config;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::MissingFile, "cannot write " + path.string());
  out << text;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json metrics_json(const MetricsReport& r) {
  return json{{"accuracy", r.accuracy},
              {"balanced_accuracy", r.balanced_accuracy},
              {"precision", r.precision},
              {"recall", r.recall},
              {"f1", r.f1},
              {"auc", optional_number(r.auc)},
              {"percent_features_selected", optional_number(r.percent_features_selected)}};
}

json aggregate_json(const AggregateMetric& a) {
  return json{{"mean", a.mean}, {"std", a.stddev}, {"n", a.count}};
}

void write_feature_report(const fs::path& path, const FittedModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::MissingFile, "cannot write " + path.string());
  out << "view,feature,total";
  for (Index k = 0; k < model.K; ++k) out << ",abs_w" << k;
  out << '\n';
  for (const auto& view : feature_report(model)) {
    for (const auto& f : view.features) {
      out << view.view << ',' << f.name << ',' << format_double(f.total);
      for (double w : f.abs_weight) out << ',' << format_double(w);
      out << '\n';
    }
  }
}

json model_summary(const FittedModel& model) {
  json views = json::array();
  for (const auto& v : model.views) {
    views.push_back(json{{"name", v.name},
                         {"dual", v.dual},
                         {"pruned", v.pruned},
                         {"features", v.original_features()},
                         {"active", v.pruned ? Index{0} : v.active_count()}});
  }
  return json{{"K", model.K},
              {"percent_features_selected", percent_features_selected(model)},
              {"views", std::move(views)}};
}

int cmd_train(const std::string& manifest, const fs::path& dir, FitFlags& flags, double threshold,
              std::ostream& out) {
  auto ds = load_dataset(manifest);
  const auto config = finish_fit_flags(flags, ds);
  fs::create_directories(dir);
  const auto result = fit(ds, config);
  auto record = make_record(result, config);
  for (const auto& v : result.model.views) {
    if (v.pruned) record.warnings.push_back("view '" + v.name + "' was pruned entirely");
  }
  save_model(dir / "model.json", record);
  write_trace_csv((dir / "trace.csv").string(), result.trace);
  write_feature_report(dir / "features.csv", result.model);
  const auto pred = predict_proba(result.model, ds);
  write_predictions_csv(dir / "train_predictions.csv", pred, result.model.class_names, threshold);
  json warnings{{"converged", result.converged},
                {"iterations", result.iterations},
                {"warnings", record.warnings}};
  write_text(dir / "warnings.json", warnings.dump(1) + "\n");

  out << "iterations " << result.iterations << (result.converged ? " (converged)" : " (not converged)")
      << ", K " << result.model.K << ", features selected "
      << format_double(percent_features_selected(result.model)) << "%\n";
  for (const auto& w : record.warnings) out << "warning: " << w << '\n';
  return kExitOk;
}

int cmd_predict(const std::string& model_path, const std::string& manifest, const fs::path& dir,
                double threshold, std::ostream& out) {
  const auto record = load_model(model_path);
  const auto ds = load_dataset(manifest, false);
  fs::create_directories(dir);
  const auto pred = predict_proba(record.model, ds);
  write_predictions_csv(dir / "predictions.csv", pred, record.model.class_names, threshold);
  out << "wrote " << pred.probabilities.rows() << " predictions\n";
  if (ds.has_targets()) {
    if (ds.targets.values.cols() != pred.probabilities.cols()) {
      throw Error(ErrorKind::ShapeMismatch, "target columns do not match the model's classes");
    }
    const auto m = compute_metrics(ds.targets.values, pred.probabilities, threshold);
    write_text(dir / "metrics.json", metrics_json(m).dump(1) + "\n");
    out << "accuracy " << format_double(m.accuracy) << ", auc "
        << (m.auc ? format_double(*m.auc) : std::string("n/a")) << '\n';
  }
  return kExitOk;
}

int cmd_cv(const std::string& manifest, const fs::path& dir, FitFlags& flags, Index folds,
           double threshold, std::ostream& out) {
  auto ds = load_dataset(manifest);
  const auto config = finish_fit_flags(flags, ds);
  fs::create_directories(dir);
  const auto report = cross_validate(ds, config, folds, config.seed, threshold);
  write_folds(dir / "folds.json", report.splits);

  std::ofstream csv(dir / "cv_folds.csv", std::ios::binary);
  if (!csv) throw Error(ErrorKind::MissingFile, "cannot write " + (dir / "cv_folds.csv").string());
  csv << "fold,accuracy,balanced_accuracy,precision,recall,f1,auc,percent_features,converged,iterations,K,null_model\n";
  json records = json::array();
  for (const auto& f : report.folds) {
    const auto& m = f.metrics;
    csv << f.fold << ',' << format_double(m.accuracy) << ',' << format_double(m.balanced_accuracy) << ','
        << format_double(m.precision) << ',' << format_double(m.recall) << ',' << format_double(m.f1) << ','
        << (m.auc ? format_double(*m.auc) : std::string()) << ','
        << format_double(*m.percent_features_selected) << ',' << (f.converged ? 1 : 0) << ','
        << f.iterations << ',' << f.K << ',' << (f.null_model ? 1 : 0) << '\n';
    auto rec = metrics_json(m);
    rec["fold"] = f.fold;
    rec["converged"] = f.converged;
    rec["iterations"] = f.iterations;
    rec["K"] = f.K;
    rec["null_model"] = f.null_model;
    records.push_back(std::move(rec));
  }
  json doc{{"folds", std::move(records)},
           {"aggregate",
            {{"accuracy", aggregate_json(report.accuracy)},
             {"balanced_accuracy", aggregate_json(report.balanced_accuracy)},
             {"precision", aggregate_json(report.precision)},
             {"recall", aggregate_json(report.recall)},
             {"f1", aggregate_json(report.f1)},
             {"auc", aggregate_json(report.auc)},
             {"percent_features_selected", aggregate_json(report.percent_features)}}}};
  write_text(dir / "cv_report.json", doc.dump(1) + "\n");

  out << report.folds.size() << " folds: accuracy " << format_double(report.accuracy.mean) << " +/- "
      << format_double(report.accuracy.stddev) << ", auc " << format_double(report.auc.mean) << " +/- "
      << format_double(report.auc.stddev) << '\n';
  return kExitOk;
}

int cmd_synth(const SynthConfig& config, const fs::path& dir, std::ostream& out) {
  const auto result = synth_generate(config);
  fs::create_directories(dir);
  write_dataset(result.dataset, dir);
  std::ofstream gt(dir / "ground_truth.csv", std::ios::binary);
  if (!gt) throw Error(ErrorKind::MissingFile, "cannot write " + (dir / "ground_truth.csv").string());
  gt << "view,feature,relevant\n";
  Index total = 0;
  for (std::size_t m = 0; m < result.dataset.views.size(); ++m) {
    const auto& v = result.dataset.views[m];
    for (std::size_t j = 0; j < v.feature_names.size(); ++j) {
      gt << v.view_name << ',' << v.feature_names[j] << ',' << (result.relevant_mask[m][j] ? 1 : 0) << '\n';
      ++total;
    }
  }
  out << "wrote " << result.dataset.n_samples() << " samples, " << total << " features to "
      << (dir / "manifest.json").string() << '\n';
  return kExitOk;
}

int cmd_report(const std::string& model_path, const fs::path& dir, std::ostream& out) {
  const auto record = load_model(model_path);
  fs::create_directories(dir);
  write_feature_report(dir / "features.csv", record.model);
  auto summary = model_summary(record.model);
  summary["converged"] = record.converged;
  summary["iterations"] = record.iterations;
  summary["final_elbo"] = record.final_elbo;
  summary["warnings"] = record.warnings;
  write_text(dir / "summary.json", summary.dump(1) + "\n");
  out << "K " << record.model.K << ", features selected "
      << format_double(percent_features_selected(record.model)) << "%\n";
  for (const auto& view : feature_report(record.model)) {
    out << view.view << ": " << view.features.size() << " features\n";
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-view sparse Bayesian classifier"};
  app.require_subcommand(1);

  std::string manifest;
  std::string model_path;
  std::string out_dir = ".";
  double threshold = 0.5;
  Index folds = 5;
  FitFlags train_flags;
  FitFlags cv_flags;
  SynthConfig synth;

  const auto add_threshold = [&](CLI::App* cmd) {
    cmd->add_option("--threshold", threshold, "Decision threshold on the predictive probability")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
  };

  auto* train = app.add_subcommand("train", "Fit a model");
  train->add_option("--manifest", manifest, "Dataset manifest")->required();
  train->add_option("--out", out_dir, "Output directory")->capture_default_str();
  add_fit_flags(train, train_flags);
  add_threshold(train);

  auto* predict = app.add_subcommand("predict", "Predict with a saved model");
  predict->add_option("--model", model_path, "Model file")->required();
  predict->add_option("--manifest", manifest, "Dataset manifest (targets optional)")->required();
  predict->add_option("--out", out_dir, "Output directory")->capture_default_str();
  add_threshold(predict);

  auto* cv = app.add_subcommand("cv", "Stratified k-fold cross-validation");
  cv->add_option("--manifest", manifest, "Dataset manifest")->required();
  cv->add_option("--out", out_dir, "Output directory")->capture_default_str();
  cv->add_option("--folds", folds, "Number of folds")->check(CLI::Range(Index{2}, Index{100000}))->capture_default_str();
  add_fit_flags(cv, cv_flags);
  add_threshold(cv);

  auto* syn = app.add_subcommand("synth", "Sample a synthetic dataset");
  syn->add_option("--out", out_dir, "Output directory")->capture_default_str();
  syn->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
  syn->add_option("--n", synth.n_samples, "Number of samples")->capture_default_str();
  syn->add_option("--widths", synth.view_widths, "Features per view")->delimiter(',')->capture_default_str();
  syn->add_option("--relevant", synth.relevant, "Relevant features per view")->delimiter(',')->capture_default_str();
  syn->add_option("--k-true", synth.K_true, "Number of true latent factors")->capture_default_str();
  syn->add_option("--classes", synth.n_classes, "Number of target columns")->capture_default_str();
  syn->add_option("--tau", synth.tau_true, "Latent noise precision")->capture_default_str();
  syn->add_option("--psi", synth.psi_true, "Output noise precision")->capture_default_str();
  syn->add_option("--weight-sd", synth.weight_sd, "Std of the relevant weights")->capture_default_str();
  syn->add_flag("--hard-labels", synth.hard_labels, "Threshold y at 0 instead of sampling the labels");

  auto* report = app.add_subcommand("report", "Summarize a saved model");
  report->add_option("--model", model_path, "Model file")->required();
  report->add_option("--out", out_dir, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    const fs::path dir(out_dir);
    if (train->parsed()) return cmd_train(manifest, dir, train_flags, threshold, out);
    if (predict->parsed()) return cmd_predict(model_path, manifest, dir, threshold, out);
    if (cv->parsed()) return cmd_cv(manifest, dir, cv_flags, folds, threshold, out);
    if (syn->parsed()) return cmd_synth(synth, dir, out);
    if (report->parsed()) return cmd_report(model_path, dir, out);
  } catch (const Error& e) {
    err << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return is_numerical(e.kind()) ? kExitNumerical : kExitInput;
  } catch (const std::bad_alloc&) {
    err << "error: out of memory\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}

}  // namespace baldur
