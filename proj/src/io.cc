#include "hbayes/io.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <sstream>
#include <unordered_map>

namespace hbayes {

using nlohmann::json;

namespace {

std::ifstream open_for_read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string() + " for reading");
  return in;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  return out;
}

json vector_json(const Vector& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(vector_json(m.row(r).transpose()));
  return rows;
}

Vector vector_from(const json& arr) {
  if (!arr.is_array()) throw InvariantError("expected a numeric array");
  Vector v(static_cast<Eigen::Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number()) throw InvariantError("expected a numeric array");
    v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
  }
  return v;
}

Matrix matrix_from(const json& rows, Eigen::Index cols) {
  if (!rows.is_array()) throw InvariantError("expected an array of rows");
  Matrix m(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Vector row = vector_from(rows[r]);
    if (row.size() != cols) throw InvariantError("ragged matrix");
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

}  // namespace

std::string default_user_id(int k) { return "u" + std::to_string(k); }
std::string default_brand_id(int i) { return "b" + std::to_string(i); }

LoadedEvents read_events(std::istream& in) {
  LoadedEvents out;
  Dataset& data = out.dataset;
  std::unordered_map<std::string, int> user_index, brand_index;
  auto encode = [](std::unordered_map<std::string, int>& index, std::vector<std::string>& names,
                   const std::string& id) {
    const auto [it, inserted] = index.try_emplace(id, static_cast<int>(names.size()));
    if (inserted) names.push_back(id);
    return it->second;
  };

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& err) {
      throw ParseError(line_no, std::string("malformed JSON: ") + err.what());
    }
    if (!obj.is_object()) throw ParseError(line_no, "expected a JSON object");
    for (const char* key : {"user", "brand", "y", "x"}) {
      if (!obj.contains(key)) throw ParseError(line_no, std::string("missing field '") + key + "'");
    }
    if (!obj["user"].is_string()) throw ParseError(line_no, "'user' must be a string");
    if (!obj["brand"].is_string()) throw ParseError(line_no, "'brand' must be a string");
    const json& label = obj["y"];
    if (!label.is_number_integer() || (label.get<long long>() != 0 && label.get<long long>() != 1)) {
      throw ParseError(line_no, "'y' must be 0 or 1");
    }
    const json& features = obj["x"];
    if (!features.is_array()) throw ParseError(line_no, "'x' must be an array");
    if (data.events.empty()) {
      if (features.empty()) throw ParseError(line_no, "'x' must not be empty");
      data.feature_dim = static_cast<int>(features.size());
    } else if (static_cast<int>(features.size()) != data.feature_dim) {
      throw ParseError(line_no, "ragged feature length: expected " +
                                    std::to_string(data.feature_dim) + ", got " +
                                    std::to_string(features.size()));
    }
    EventRecord e;
    e.x.resize(data.feature_dim);
    for (int i = 0; i < data.feature_dim; ++i) {
      if (!features[i].is_number()) throw ParseError(line_no, "'x' entries must be numbers");
      e.x[i] = features[i].get<double>();
      if (!std::isfinite(e.x[i])) throw ParseError(line_no, "'x' entries must be finite");
    }
    e.y = static_cast<int>(label.get<long long>());
    e.user = encode(user_index, out.user_ids, obj["user"].get<std::string>());
    e.brand = encode(brand_index, out.brand_ids, obj["brand"].get<std::string>());
    data.events.push_back(std::move(e));
  }
  if (data.events.empty()) throw InputError("empty dataset");
  data.num_users = static_cast<int>(out.user_ids.size());
  data.num_brands = static_cast<int>(out.brand_ids.size());
  return out;
}

LoadedEvents load_events(const std::filesystem::path& path) {
  std::ifstream in = open_for_read(path);
  return read_events(in);
}

void write_events(std::ostream& out, const Dataset& data, const std::vector<std::string>& user_ids,
                  const std::vector<std::string>& brand_ids) {
  for (const EventRecord& e : data.events) {
    json obj;
    obj["user"] = user_ids.empty() ? default_user_id(e.user) : user_ids.at(e.user);
    obj["brand"] = brand_ids.empty() ? default_brand_id(e.brand) : brand_ids.at(e.brand);
    obj["y"] = e.y;
    obj["x"] = vector_json(e.x);
    out << obj.dump() << '\n';
  }
}

void save_events(const std::filesystem::path& path, const Dataset& data,
                 const std::vector<std::string>& user_ids,
                 const std::vector<std::string>& brand_ids) {
  std::ofstream out = open_for_write(path);
  write_events(out, data, user_ids, brand_ids);
  if (!out) throw InputError("failed writing " + path.string());
}

std::uint64_t feature_hash(const std::string& name, const std::string& value) {
  std::uint64_t h = 14695981039346656037ULL;
  auto mix_in = [&h](unsigned char c) {
    h ^= c;
    h *= 1099511628211ULL;
  };
  for (unsigned char c : name) mix_in(c);
  mix_in(0x1f);
  for (unsigned char c : value) mix_in(c);
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  h *= 0xc4ceb9fe1a85ec53ULL;
  h ^= h >> 33;
  return h;
}

Vector hash_features(const std::vector<std::pair<std::string, std::string>>& tokens, int width) {
  if (width < 1) throw InputError("hash_features: width must be >= 1");
  Vector out = Vector::Zero(width);
  for (const auto& [name, value] : tokens) {
    const std::uint64_t h = feature_hash(name, value);
    const auto bucket = static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(width));
    out[bucket] += (h >> 63) ? -1.0 : 1.0;
  }
  return out;
}

void save_ground_truth(const std::filesystem::path& path, const GroundTruth& truth) {
  json doc;
  doc["style_vectors"] = matrix_json(truth.style_vectors);
  doc["brand_vectors"] = matrix_json(truth.brand_vectors);
  doc["user_vectors"] = matrix_json(truth.user_vectors);
  doc["style_assignments"] = truth.style_assignments;
  doc["theta"] = vector_json(truth.theta);
  doc["w"] = vector_json(truth.w);
  std::ofstream out = open_for_write(path);
  out << doc.dump(2) << '\n';
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
  std::ifstream in = open_for_read(path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& err) {
    throw InvariantError(std::string("ground truth: ") + err.what());
  }
  GroundTruth truth;
  truth.w = vector_from(doc.at("w"));
  const Eigen::Index d = truth.w.size();
  truth.style_vectors = matrix_from(doc.at("style_vectors"), d);
  truth.brand_vectors = matrix_from(doc.at("brand_vectors"), d);
  truth.user_vectors = matrix_from(doc.at("user_vectors"), d);
  truth.style_assignments = doc.at("style_assignments").get<std::vector<int>>();
  truth.theta = vector_from(doc.at("theta"));
  return truth;
}

void save_trace_csv(const std::filesystem::path& path, const FitReport& report) {
  std::ofstream out = open_for_write(path);
  out << "iteration,elbo\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < report.elbo_trace.size(); ++i) {
    out << (i + 1) << ',' << report.elbo_trace[i] << '\n';
  }
}

namespace {

json metric_json(const MetricReport& m) {
  return {{"k", m.k},
          {"precision", m.precision},
          {"recall", m.recall},
          {"ndcg", m.ndcg},
          {"num_users_evaluated", m.num_users_evaluated}};
}

}  // namespace

std::string metrics_report_json(const CrossValidationReport& report) {
  json doc;
  doc["folds"] = report.folds;
  doc["ks"] = report.ks;
  json per_fold = json::array();
  for (std::size_t f = 0; f < report.per_fold.size(); ++f) {
    json metrics = json::array();
    for (const MetricReport& m : report.per_fold[f]) metrics.push_back(metric_json(m));
    per_fold.push_back({{"fold", f}, {"metrics", metrics}});
  }
  doc["per_fold"] = per_fold;
  json mean = json::array(), sd = json::array();
  for (const MetricReport& m : report.mean) mean.push_back(metric_json(m));
  for (const MetricReport& m : report.stddev) sd.push_back(metric_json(m));
  doc["mean"] = mean;
  doc["std"] = sd;
  return doc.dump(2) + "\n";
}

void save_metrics_report(const std::filesystem::path& path, const CrossValidationReport& report) {
  std::ofstream out = open_for_write(path);
  out << metrics_report_json(report);
}

}  // namespace hbayes
