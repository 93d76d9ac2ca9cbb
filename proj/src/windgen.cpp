#include "caplf/windgen.hpp"

#include "caplf/error.hpp"
#include "caplf/util.hpp"

#include <Eigen/Eigenvalues>

#include "json.hpp"

#include <cmath>
#include <iostream>
#include <sstream>

namespace caplf {

using nlohmann::json;

void WindSpec::validate() const {
  const int f = farms();
  if (f < 1) throw ValidationError("wind spec has no farms");
  if (capacity.size() != f) throw ValidationError("wind spec: capacity count differs from farm count");
  if ((capacity.array() <= 0).any()) throw ValidationError("wind spec: capacity must be positive");
  const auto J = weights.size();
  if (J < 1) throw ValidationError("wind spec has no mixture components");
  if (static_cast<Eigen::Index>(means.size()) != J || static_cast<Eigen::Index>(stds.size()) != J) {
    throw ValidationError("wind spec: weights, means and stds differ in count");
  }
  if ((weights.array() < 0).any() || std::abs(weights.sum() - 1.0) > 1e-9) {
    throw ValidationError("wind spec: weights must be non-negative and sum to 1");
  }
  for (Eigen::Index j = 0; j < J; ++j) {
    const auto& m = means[static_cast<std::size_t>(j)];
    const auto& s = stds[static_cast<std::size_t>(j)];
    if (m.size() != f || s.size() != f) throw ValidationError("wind spec: component has wrong length");
    if ((s.array() < 0).any()) throw ValidationError("wind spec: standard deviations must be non-negative");
  }
  if (n_samples < 1) throw ValidationError("wind spec: n_samples must be positive");
  if (correlation.rows() != f || correlation.cols() != f) throw ValidationError("wind spec: correlation has wrong shape");
  std::ostringstream diag;
  diag << "\n" << correlation.format(Eigen::IOFormat(6, 0, ", ", "\n", "  [", "]"));
  if ((correlation - correlation.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw ValidationError("wind spec: correlation matrix is not symmetric:" + diag.str());
  }
  if ((correlation.diagonal().array() - 1.0).abs().maxCoeff() > 1e-12) {
    throw ValidationError("wind spec: correlation matrix must have a unit diagonal:" + diag.str());
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(correlation);
  const double lmin = es.eigenvalues().minCoeff();
  if (lmin < -1e-10) {
    std::ostringstream os;
    os << "wind spec: correlation matrix is not positive semidefinite (smallest eigenvalue " << lmin
       << "):" << diag.str();
    throw ValidationError(os.str());
  }
}

Gmm WindSpec::truth() const {
  validate();
  Gmm g;
  g.weights = weights;
  for (std::size_t j = 0; j < means.size(); ++j) {
    const Eigen::VectorXd sd = stds[j].cwiseProduct(capacity);
    g.means.push_back(means[j].cwiseProduct(capacity));
    Eigen::MatrixXd c = sd.asDiagonal() * correlation * sd.asDiagonal();
    enforce_psd(c);
    g.covs.push_back(std::move(c));
  }
  return g;
}

std::vector<std::string> wind_presets() { return {"unimodal-skewed", "bimodal", "nine-farm-maryland-like"}; }

WindSpec wind_preset(const std::string& name, double capacity, int n_samples, std::uint64_t seed) {
  WindSpec s;
  s.n_samples = n_samples;
  s.seed = seed;
  auto add = [&](double w, std::vector<double> mean, std::vector<double> sd) {
    const auto w0 = s.weights.size();
    s.weights.conservativeResize(w0 + 1);
    s.weights[w0] = w;
    s.means.emplace_back(Eigen::Map<Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size())));
    s.stds.emplace_back(Eigen::Map<Eigen::VectorXd>(sd.data(), static_cast<Eigen::Index>(sd.size())));
  };
  if (name == "unimodal-skewed") {
    s.names = {"wf1", "wf2"};
    // Heavy mode at low output with a long right tail.
    add(0.55, {0.22, 0.25}, {0.06, 0.07});
    add(0.30, {0.42, 0.45}, {0.09, 0.09});
    add(0.15, {0.68, 0.70}, {0.10, 0.10});
    s.correlation.resize(2, 2);
    s.correlation << 1.0, 0.8, 0.8, 1.0;
  } else if (name == "bimodal") {
    s.names = {"wf1", "wf2"};
    add(0.5, {0.20, 0.22}, {0.06, 0.06});
    add(0.5, {0.68, 0.70}, {0.08, 0.08});
    s.correlation.resize(2, 2);
    s.correlation << 1.0, 0.7, 0.7, 1.0;
  } else if (name == "nine-farm-maryland-like") {
    const int f = 9;
    for (int i = 0; i < f; ++i) s.names.push_back("wf" + std::to_string(i + 1));
    std::vector<double> m1, m2, m3, s1, s2, s3;
    for (int i = 0; i < f; ++i) {
      const double shift = 0.01 * (i % 3) - 0.01;
      m1.push_back(0.20 + shift);
      m2.push_back(0.45 + shift);
      m3.push_back(0.74 + shift);
      s1.push_back(0.06);
      s2.push_back(0.09);
      s3.push_back(0.08);
    }
    add(0.50, m1, s1);
    add(0.32, m2, s2);
    add(0.18, m3, s3);
    s.correlation.resize(f, f);
    for (int i = 0; i < f; ++i)
      for (int j = 0; j < f; ++j) s.correlation(i, j) = std::pow(0.9, std::abs(i - j));
  } else {
    std::string list;
    for (const auto& p : wind_presets()) list += (list.empty() ? "" : ", ") + p;
    throw ValidationError("unknown wind preset '" + name + "' (available: " + list + ")");
  }
  s.capacity = Eigen::VectorXd::Constant(s.farms(), capacity);
  s.validate();
  return s;
}

WindHistory generate(const WindSpec& spec) {
  const Gmm g = spec.truth();
  WindHistory h;
  h.names = spec.names;
  h.values = sample(g, spec.n_samples, spec.seed);
  Eigen::Index clipped = 0;
  for (Eigen::Index r = 0; r < h.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < h.values.cols(); ++c) {
      double& v = h.values(r, c);
      if (v < 0) {
        v = 0;
        ++clipped;
      } else if (v > spec.capacity[c]) {
        v = spec.capacity[c];
        ++clipped;
      }
    }
  }
  h.clipped_fraction = static_cast<double>(clipped) / static_cast<double>(h.values.size());
  if (h.clipped_fraction > 0.05) {
    std::cerr << "warning: " << h.clipped_fraction * 100 << "% of synthetic wind values were clipped to bounds\n";
  }
  return h;
}

WindHistory parse_wind_csv(const std::string& text) {
  WindHistory h;
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
      const auto comma = t.find(',', start);
      cells.push_back(trim(t.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (!header) {
      for (auto c : cells) {
        if (c.empty()) throw ParseError("empty farm name in header", lineno);
        h.names.emplace_back(c);
      }
      header = true;
      continue;
    }
    if (cells.size() != h.names.size()) {
      throw ParseError("expected " + std::to_string(h.names.size()) + " values, found " + std::to_string(cells.size()),
                       lineno);
    }
    std::vector<double> row;
    for (auto c : cells) {
      double v = 0;
      if (!parse_double(c, v) || !std::isfinite(v)) throw ParseError("bad number '" + std::string(c) + "'", lineno);
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  if (!header) throw ParseError("wind history has no header row");
  if (rows.empty()) throw ParseError("wind history has no data rows");
  h.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(h.names.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      h.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return h;
}

WindHistory read_wind_csv(const std::filesystem::path& path) {
  try {
    return parse_wind_csv(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string format_wind_csv(const WindHistory& h, const std::string& comment) {
  std::string out;
  if (!comment.empty()) out += "# " + comment + "\n";
  for (std::size_t c = 0; c < h.names.size(); ++c) out += (c ? "," : "") + h.names[c];
  out += "\n";
  for (Eigen::Index r = 0; r < h.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < h.values.cols(); ++c) {
      if (c) out += ',';
      out += format_double(h.values(r, c));
    }
    out += '\n';
  }
  return out;
}

namespace {

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd json_vec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string wind_spec_to_json(const WindSpec& spec) {
  json j;
  j["names"] = spec.names;
  j["capacity"] = vec_json(spec.capacity);
  j["weights"] = vec_json(spec.weights);
  j["means"] = json::array();
  j["stds"] = json::array();
  for (const auto& m : spec.means) j["means"].push_back(vec_json(m));
  for (const auto& s : spec.stds) j["stds"].push_back(vec_json(s));
  j["correlation"] = json::array();
  for (Eigen::Index r = 0; r < spec.correlation.rows(); ++r) j["correlation"].push_back(vec_json(spec.correlation.row(r)));
  j["n_samples"] = spec.n_samples;
  j["seed"] = spec.seed;
  return j.dump(2) + "\n";
}

WindSpec wind_spec_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("wind spec: ") + e.what());
  }
  WindSpec s;
  try {
    s.names = j.at("names").get<std::vector<std::string>>();
    const int f = s.farms();
    if (j.contains("capacity")) {
      if (j["capacity"].is_number()) {
        s.capacity = Eigen::VectorXd::Constant(f, j["capacity"].get<double>());
      } else {
        s.capacity = json_vec(j["capacity"]);
      }
    } else {
      s.capacity = Eigen::VectorXd::Ones(f);
    }
    s.weights = json_vec(j.at("weights"));
    for (const auto& m : j.at("means")) s.means.push_back(json_vec(m));
    for (const auto& sd : j.at("stds")) s.stds.push_back(json_vec(sd));
    const auto& R = j.at("correlation");
    s.correlation.resize(static_cast<Eigen::Index>(R.size()), f);
    for (std::size_t r = 0; r < R.size(); ++r) {
      const Eigen::VectorXd row = json_vec(R[r]);
      if (row.size() != f) throw ValidationError("wind spec: correlation row has wrong length");
      s.correlation.row(static_cast<Eigen::Index>(r)) = row.transpose();
    }
    s.n_samples = j.value("n_samples", 20000);
    s.seed = j.value("seed", std::uint64_t{1});
  } catch (const json::exception& e) {
    throw ParseError(std::string("wind spec: ") + e.what());
  }
  s.validate();
  return s;
}

}  // namespace caplf
