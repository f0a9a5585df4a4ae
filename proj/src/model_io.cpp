#include "baldur/model_io.hpp"

#include <fstream>
#include <sstream>

#include "baldur/csv.hpp"
#include "baldur/errors.hpp"
#include "json.hpp"

namespace baldur {

using nlohmann::json;

namespace {

json encode(const Matrix& m) {
  json data = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  }
  return json{{"shape", {m.rows(), m.cols()}}, {"data", std::move(data)}};
}

json encode(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Matrix decode_matrix(const json& j) {
  const auto shape = j.at("shape").get<std::vector<Index>>();
  if (shape.size() != 2 || shape[0] < 0 || shape[1] < 0) {
    throw Error(ErrorKind::ParseError, "matrix shape must be [rows, cols]");
  }
  const auto& data = j.at("data");
  if (static_cast<Index>(data.size()) != shape[0] * shape[1]) {
    throw Error(ErrorKind::ParseError, "matrix data length does not match its shape");
  }
  Matrix m(shape[0], shape[1]);
  std::size_t k = 0;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index c = 0; c < m.cols(); ++c) m(i, c) = data[k++].get<double>();
  }
  return m;
}

Vector decode_vector(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

json encode(const GammaPrior& p) { return json{{"alpha0", p.alpha0}, {"beta0", p.beta0}}; }

GammaPrior decode_prior(const json& j) {
  return GammaPrior{j.at("alpha0").get<double>(), j.at("beta0").get<double>()};
}

json encode(const FitConfig& c) {
  return json{{"K_init", c.K_init},
              {"max_iters", c.max_iters},
              {"elbo_rel_tol", c.elbo_rel_tol},
              {"converge_window", c.converge_window},
              {"warm_start", c.warm_start},
              {"hyperpriors",
               {{"tau", encode(c.hyperpriors.tau)},
                {"psi", encode(c.hyperpriors.psi)},
                {"omega", encode(c.hyperpriors.omega)},
                {"delta", encode(c.hyperpriors.delta)},
                {"gamma", encode(c.hyperpriors.gamma)}}},
              {"prune",
               {{"threshold", c.prune.weight_power_rel_threshold},
                {"burn_in", c.prune.burn_in_iters},
                {"view_prune", c.prune.view_prune_enabled}}},
              {"ratio_threshold", c.ratio_threshold},
              {"dual_ridge_rel", c.dual_ridge_rel},
              {"jitter",
               {{"initial_rel", c.jitter.initial_rel},
                {"max_rel", c.jitter.max_rel},
                {"growth", c.jitter.growth}}},
              {"seed", c.seed}};
}

FitConfig decode_config(const json& j) {
  FitConfig c;
  c.K_init = j.at("K_init").get<Index>();
  c.max_iters = j.at("max_iters").get<int>();
  c.elbo_rel_tol = j.at("elbo_rel_tol").get<double>();
  c.converge_window = j.at("converge_window").get<int>();
  c.warm_start = j.value("warm_start", true);
  const auto& h = j.at("hyperpriors");
  c.hyperpriors.tau = decode_prior(h.at("tau"));
  c.hyperpriors.psi = decode_prior(h.at("psi"));
  c.hyperpriors.omega = decode_prior(h.at("omega"));
  c.hyperpriors.delta = decode_prior(h.at("delta"));
  c.hyperpriors.gamma = decode_prior(h.at("gamma"));
  const auto& p = j.at("prune");
  c.prune.weight_power_rel_threshold = p.at("threshold").get<double>();
  c.prune.burn_in_iters = p.at("burn_in").get<int>();
  c.prune.view_prune_enabled = p.at("view_prune").get<bool>();
  c.ratio_threshold = j.at("ratio_threshold").get<double>();
  c.dual_ridge_rel = j.at("dual_ridge_rel").get<double>();
  const auto& jt = j.at("jitter");
  c.jitter.initial_rel = jt.at("initial_rel").get<double>();
  c.jitter.max_rel = jt.at("max_rel").get<double>();
  c.jitter.growth = jt.at("growth").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

json encode(const FittedView& v) {
  std::vector<int> active(v.active.begin(), v.active.end());
  return json{{"name", v.name},
              {"dual", v.dual},
              {"pruned", v.pruned},
              {"feature_names", v.feature_names},
              {"standardizer_mean", encode(v.standardizer.mean)},
              {"standardizer_sd", encode(v.standardizer.stddev)},
              {"active", active},
              {"weights", encode(v.weights)},
              {"relevance_vectors", encode(v.relevance_vectors)}};
}

FittedView decode_view(const json& j) {
  FittedView v;
  v.name = j.at("name").get<std::string>();
  v.dual = j.at("dual").get<bool>();
  v.pruned = j.at("pruned").get<bool>();
  v.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  v.standardizer.mean = decode_vector(j.at("standardizer_mean"));
  v.standardizer.stddev = decode_vector(j.at("standardizer_sd"));
  for (int a : j.at("active").get<std::vector<int>>()) v.active.push_back(a != 0);
  v.weights = decode_matrix(j.at("weights"));
  v.relevance_vectors = decode_matrix(j.at("relevance_vectors"));
  const auto d = v.feature_names.size();
  if (v.active.size() != d || static_cast<std::size_t>(v.standardizer.mean.size()) != d ||
      static_cast<std::size_t>(v.standardizer.stddev.size()) != d) {
    throw Error(ErrorKind::ParseError, "view '" + v.name + "' has inconsistent feature arrays");
  }
  return v;
}

}  // namespace

ModelRecord make_record(const FitResult& result, const FitConfig& config) {
  ModelRecord r;
  r.model = result.model;
  r.config = config;
  r.converged = result.converged;
  r.iterations = result.iterations;
  r.final_elbo = result.trace.entries.empty() ? 0.0 : result.trace.entries.back().elbo;
  r.trace_length = static_cast<Index>(result.trace.entries.size());
  r.warnings = result.warnings;
  return r;
}

std::string serialize_model(const ModelRecord& record) {
  const auto& m = record.model;
  json views = json::array();
  for (const auto& v : m.views) views.push_back(encode(v));
  json doc{{"format_version", kModelFormatVersion},
           {"K", m.K},
           {"class_names", m.class_names},
           {"V_mean", encode(m.V_mean)},
           {"V_cov", encode(m.V_cov)},
           {"tau_mean", m.tau_mean},
           {"psi_mean", m.psi_mean},
           {"views", std::move(views)},
           {"config", encode(record.config)},
           {"trace",
            {{"converged", record.converged},
             {"iterations", record.iterations},
             {"final_elbo", record.final_elbo},
             {"length", record.trace_length}}},
           {"warnings", record.warnings}};
  return doc.dump(1) + "\n";
}

ModelRecord deserialize_model(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    if (!doc.is_object() || !doc.contains("format_version")) {
      throw Error(ErrorKind::ParseError, "model file lacks format_version");
    }
    const int version = doc.at("format_version").get<int>();
    if (version != kModelFormatVersion) {
      throw Error(ErrorKind::VersionMismatch, "unsupported model format version " +
                                                  std::to_string(version) + " (expected " +
                                                  std::to_string(kModelFormatVersion) + ")");
    }
    ModelRecord r;
    auto& m = r.model;
    m.K = doc.at("K").get<Index>();
    m.class_names = doc.at("class_names").get<std::vector<std::string>>();
    m.V_mean = decode_matrix(doc.at("V_mean"));
    m.V_cov = decode_matrix(doc.at("V_cov"));
    m.tau_mean = doc.at("tau_mean").get<double>();
    m.psi_mean = doc.at("psi_mean").get<double>();
    for (const auto& v : doc.at("views")) m.views.push_back(decode_view(v));
    r.config = decode_config(doc.at("config"));
    const auto& t = doc.at("trace");
    r.converged = t.at("converged").get<bool>();
    r.iterations = t.at("iterations").get<int>();
    r.final_elbo = t.at("final_elbo").get<double>();
    r.trace_length = t.at("length").get<Index>();
    r.warnings = doc.at("warnings").get<std::vector<std::string>>();
    if (m.V_mean.cols() != m.K || m.V_cov.rows() != m.K || m.V_cov.cols() != m.K ||
        static_cast<std::size_t>(m.V_mean.rows()) != m.class_names.size()) {
      throw Error(ErrorKind::ParseError, "model file has inconsistent output shapes");
    }
    for (const auto& v : m.views) {
      if (v.pruned) continue;
      const Index d = v.active_count();
      const bool ok = v.dual ? (v.weights.cols() == m.K && v.relevance_vectors.cols() == d &&
                                v.relevance_vectors.rows() == v.weights.rows())
                             : (v.weights.rows() == m.K && v.weights.cols() == d);
      if (!ok) throw Error(ErrorKind::ParseError, "view '" + v.name + "' has inconsistent weight shapes");
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("malformed model file: ") + e.what());
  }
}

void save_model(const std::filesystem::path& path, const ModelRecord& record) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::MissingFile, "cannot write " + path.string());
  out << serialize_model(record);
}

ModelRecord load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingFile, "cannot open model file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_model(buf.str());
}

void write_predictions_csv(const std::filesystem::path& path, const Prediction& prediction,
                           const std::vector<std::string>& class_names, double threshold) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::MissingFile, "cannot write " + path.string());
  const Matrix& p = prediction.probabilities;
  out << "sample";
  for (const auto& c : class_names) out << ",p_" << c;
  for (const auto& c : class_names) out << ",label_" << c;
  out << '\n';
  const Matrix labels = predict_label(p, threshold);
  for (Index i = 0; i < p.rows(); ++i) {
    out << i;
    for (Index c = 0; c < p.cols(); ++c) out << ',' << format_double(p(i, c));
    for (Index c = 0; c < p.cols(); ++c) out << ',' << static_cast<int>(labels(i, c));
    out << '\n';
  }
}

}  // namespace baldur
