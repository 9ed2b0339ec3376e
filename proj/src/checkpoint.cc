#include <fstream>
#include <json.hpp>
#include <sstream>

#include "hbayes/io.hpp"

namespace hbayes {

using nlohmann::json;

namespace {

json vec(const Vector& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Vector to_vec(const json& arr) {
  if (!arr.is_array()) throw InvariantError("checkpoint: expected a numeric array");
  Vector v(static_cast<Eigen::Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number()) throw InvariantError("checkpoint: expected a number");
    v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
  }
  return v;
}

json mat(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(vec(m.row(r).transpose()));
  return rows;
}

Matrix to_mat(const json& rows, Eigen::Index cols) {
  if (!rows.is_array()) throw InvariantError("checkpoint: expected an array of rows");
  Matrix m(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Vector row = to_vec(rows[r]);
    if (row.size() != cols) throw InvariantError("checkpoint: ragged matrix");
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

json gaussian(const GaussianPosterior& g) {
  json obj{{"mean", vec(g.mean())}};
  if (g.is_isotropic()) {
    obj["variance"] = g.variance();
  } else {
    obj["covariance"] = mat(g.covariance());
  }
  return obj;
}

GaussianPosterior to_gaussian(const json& obj) {
  Vector mean = to_vec(obj.at("mean"));
  if (obj.contains("variance")) {
    return GaussianPosterior::isotropic(std::move(mean), obj.at("variance").get<double>());
  }
  Matrix cov = to_mat(obj.at("covariance"), mean.size());
  if (cov.rows() != mean.size()) throw InvariantError("checkpoint: covariance shape mismatch");
  return GaussianPosterior::full(std::move(mean), std::move(cov));
}

json gamma(const GammaPosterior& g) { return {{"shape", g.shape}, {"rate", g.rate}}; }

GammaPosterior to_gamma(const json& obj) {
  return {obj.at("shape").get<double>(), obj.at("rate").get<double>()};
}

json gaussians(const std::vector<GaussianPosterior>& factors) {
  json arr = json::array();
  for (const GaussianPosterior& g : factors) arr.push_back(gaussian(g));
  return arr;
}

std::vector<GaussianPosterior> to_gaussians(const json& arr) {
  std::vector<GaussianPosterior> out;
  for (const json& obj : arr) out.push_back(to_gaussian(obj));
  return out;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& cp) {
  cp.state.validate();
  const VariationalState& s = cp.state;
  const HyperParams& hp = cp.hyperparams;
  json doc;
  doc["schema_version"] = cp.schema_version;
  doc["dims"] = {{"users", cp.num_users},
                 {"brands", cp.num_brands},
                 {"styles", cp.num_styles},
                 {"feature_dim", cp.feature_dim}};
  doc["hyperparams"] = {{"num_styles", hp.num_styles}, {"feature_dim", hp.feature_dim},
                        {"gamma0", vec(hp.gamma0)},    {"alpha0", hp.alpha0},
                        {"beta0", hp.beta0},           {"max_iters", hp.max_iters},
                        {"rel_tol", hp.rel_tol}};
  doc["user_ids"] = cp.user_ids;
  doc["brand_ids"] = cp.brand_ids;
  doc["state"] = {{"users", gaussians(s.users)},
                  {"brands", gaussians(s.brands)},
                  {"styles", gaussians(s.styles)},
                  {"w", gaussian(s.w)},
                  {"theta_gamma", vec(s.theta_gamma)},
                  {"responsibilities", mat(s.resp)},
                  {"precisions",
                   {{"user", gamma(s.prec_u)},
                    {"brand", gamma(s.prec_b)},
                    {"style", gamma(s.prec_s)},
                    {"w", gamma(s.prec_w)}}},
                  {"xi", vec(s.xi)}};
  doc["fit_report"] = {{"elbo_trace", cp.report.elbo_trace},
                       {"iterations_run", cp.report.iterations_run},
                       {"converged", cp.report.converged}};
  return doc.dump(2) + "\n";
}

Checkpoint parse_checkpoint(const std::string& text) {
  Checkpoint cp;
  try {
    const json doc = json::parse(text);
    cp.schema_version = doc.at("schema_version").get<int>();
    if (cp.schema_version != Checkpoint::kSchemaVersion) {
      throw InvariantError("checkpoint schema_version " + std::to_string(cp.schema_version) +
                           " is not supported (expected " +
                           std::to_string(Checkpoint::kSchemaVersion) + ")");
    }
    const json& dims = doc.at("dims");
    cp.num_users = dims.at("users").get<int>();
    cp.num_brands = dims.at("brands").get<int>();
    cp.num_styles = dims.at("styles").get<int>();
    cp.feature_dim = dims.at("feature_dim").get<int>();

    const json& hp = doc.at("hyperparams");
    cp.hyperparams.num_styles = hp.at("num_styles").get<int>();
    cp.hyperparams.feature_dim = hp.at("feature_dim").get<int>();
    cp.hyperparams.gamma0 = to_vec(hp.at("gamma0"));
    cp.hyperparams.alpha0 = hp.at("alpha0").get<double>();
    cp.hyperparams.beta0 = hp.at("beta0").get<double>();
    cp.hyperparams.max_iters = hp.at("max_iters").get<int>();
    cp.hyperparams.rel_tol = hp.at("rel_tol").get<double>();

    cp.user_ids = doc.at("user_ids").get<std::vector<std::string>>();
    cp.brand_ids = doc.at("brand_ids").get<std::vector<std::string>>();

    const json& s = doc.at("state");
    cp.state.users = to_gaussians(s.at("users"));
    cp.state.brands = to_gaussians(s.at("brands"));
    cp.state.styles = to_gaussians(s.at("styles"));
    cp.state.w = to_gaussian(s.at("w"));
    cp.state.theta_gamma = to_vec(s.at("theta_gamma"));
    cp.state.resp = to_mat(s.at("responsibilities"), cp.num_styles);
    const json& prec = s.at("precisions");
    cp.state.prec_u = to_gamma(prec.at("user"));
    cp.state.prec_b = to_gamma(prec.at("brand"));
    cp.state.prec_s = to_gamma(prec.at("style"));
    cp.state.prec_w = to_gamma(prec.at("w"));
    cp.state.xi = to_vec(s.at("xi"));

    const json& report = doc.at("fit_report");
    cp.report.elbo_trace = report.at("elbo_trace").get<std::vector<double>>();
    cp.report.iterations_run = report.at("iterations_run").get<int>();
    cp.report.converged = report.at("converged").get<bool>();
  } catch (const json::exception& err) {
    throw InvariantError(std::string("malformed checkpoint: ") + err.what());
  } catch (const InputError& err) {
    throw InvariantError(std::string("malformed checkpoint: ") + err.what());
  }

  cp.hyperparams.validate();
  cp.state.validate();
  if (cp.state.num_users() != cp.num_users || cp.state.num_brands() != cp.num_brands ||
      cp.state.num_styles() != cp.num_styles || cp.state.feature_dim() != cp.feature_dim ||
      cp.hyperparams.num_styles != cp.num_styles || cp.hyperparams.feature_dim != cp.feature_dim) {
    throw InvariantError("checkpoint dimensions are inconsistent");
  }
  if (static_cast<int>(cp.user_ids.size()) != cp.num_users ||
      static_cast<int>(cp.brand_ids.size()) != cp.num_brands) {
    throw InvariantError("checkpoint id dictionaries do not match dimensions");
  }
  if (static_cast<int>(cp.report.elbo_trace.size()) != cp.report.iterations_run) {
    throw InvariantError("checkpoint fit report trace length mismatch");
  }
  return cp;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const std::string text = serialize_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  out << text;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string() + " for reading");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_checkpoint(buffer.str());
}

}  // namespace hbayes
