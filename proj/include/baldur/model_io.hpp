#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "baldur/inference.hpp"
#include "baldur/predictor.hpp"

namespace baldur {

inline constexpr int kModelFormatVersion = 1;

// Everything stored next to the fitted parameters.
struct ModelRecord {
  FittedModel model;
  FitConfig config;
  bool converged = false;
  int iterations = 0;
  double final_elbo = 0.0;
  Index trace_length = 0;
  std::vector<std::string> warnings;
};

ModelRecord make_record(const FitResult& result, const FitConfig& config);

// JSON text; matrices are {"shape": [r, c], "data": [...row-major...]} and
// doubles are written in shortest round-trip form.
std::string serialize_model(const ModelRecord& record);
// ParseError on malformed content, VersionMismatch on an unknown format.
ModelRecord deserialize_model(const std::string& text);

void save_model(const std::filesystem::path& path, const ModelRecord& record);
ModelRecord load_model(const std::filesystem::path& path);

// sample, then p_<class> and label_<class> for each class.
void write_predictions_csv(const std::filesystem::path& path, const Prediction& prediction,
                           const std::vector<std::string>& class_names, double threshold);

}  // namespace baldur
