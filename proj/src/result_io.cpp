#include "caplf/error.hpp"
#include "caplf/plf.hpp"

#include "json.hpp"

namespace caplf {

using nlohmann::json;

namespace {

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json mat_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const Eigen::RowVectorXd r = m.row(i);
    rows.push_back(std::vector<double>(r.data(), r.data() + r.size()));
  }
  return rows;
}

Eigen::VectorXd vec_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd mat_from(const json& j, Eigen::Index cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto r = j[i].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(r.size()) != cols) throw ParseError("ragged matrix in JSON");
    for (Eigen::Index c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(i), c) = r[static_cast<std::size_t>(c)];
  }
  return m;
}

json gmm_json(const Gmm& g) {
  json j;
  j["weights"] = vec_json(g.weights);
  j["means"] = json::array();
  j["covs"] = json::array();
  for (int c = 0; c < g.size(); ++c) {
    j["means"].push_back(vec_json(g.means[static_cast<std::size_t>(c)]));
    j["covs"].push_back(mat_json(g.covs[static_cast<std::size_t>(c)]));
  }
  return j;
}

Gmm gmm_from(const json& j) {
  Gmm g;
  g.weights = vec_from(j.at("weights"));
  for (const auto& m : j.at("means")) g.means.push_back(vec_from(m));
  for (const auto& c : j.at("covs")) g.covs.push_back(mat_from(c, g.dim()));
  if (static_cast<int>(g.means.size()) != g.size() || static_cast<int>(g.covs.size()) != g.size()) {
    throw ParseError("mixture JSON has inconsistent component counts");
  }
  g.validate();
  return g;
}

template <class T>
json arr3(const std::array<T, 3>& a) {
  return json::array({a[0], a[1], a[2]});
}

json vec3_json(const std::array<Eigen::VectorXd, 3>& a) {
  return json::array({vec_json(a[0]), vec_json(a[1]), vec_json(a[2])});
}

std::array<Eigen::VectorXd, 3> vec3_from(const json& j) {
  if (j.size() != 3) throw ParseError("expected three per-segment vectors");
  return {vec_from(j[0]), vec_from(j[1]), vec_from(j[2])};
}

}  // namespace

std::string gmm_to_json(const Gmm& g) { return gmm_json(g).dump(2); }

Gmm gmm_from_json(const std::string& text) {
  try {
    return gmm_from(json::parse(text));
  } catch (const json::exception& e) {
    throw ParseError(std::string("mixture JSON: ") + e.what());
  }
}

std::string result_to_json(const PlfResult& r) {
  json j;
  j["method"] = method_name(r.method);
  j["L"] = r.L;
  j["J"] = r.J;
  j["n_states"] = r.n_states;
  j["n_flows"] = r.n_flows;
  j["labels"] = r.labels;
  j["segment_probs"] = arr3(r.segment_probs);
  j["segment_counts"] = arr3(r.segment_counts);
  j["segment_J"] = arr3(r.segment_J);
  j["exceeded"] = r.exceeded;
  j["info"] = r.info;

  const auto& c = r.correction;
  json cj;
  cj["mode"] = correction_name(c.mode);
  cj["H"] = c.H;
  cj["rho"] = vec3_json(c.rho);
  cj["varsigma"] = vec3_json(c.varsigma);
  cj["rho_flow"] = vec3_json(c.rho_flow);
  cj["varsigma_flow"] = vec3_json(c.varsigma_flow);
  cj["samples"] = arr3(c.samples);
  cj["constant_rows"] = arr3(c.constant_rows);
  cj["ac_failures"] = c.ac_failures;
  j["correction"] = cj;

  j["wind_gmm"] = gmm_json(r.wind_gmm);
  j["maps"] = json::array({mat_json(r.maps[0]), mat_json(r.maps[1]), mat_json(r.maps[2])});
  j["offsets"] = vec3_json(r.offsets);
  j["latent_covs"] = json::array();
  for (const auto& m : r.latent_covs) j["latent_covs"].push_back(mat_json(m));
  j["components"] = json::array();
  for (const auto& lc : r.components) {
    j["components"].push_back({{"weight", lc.weight}, {"segment", lc.segment}, {"cov", lc.cov}, {"mean", vec_json(lc.mean)}});
  }
  return j.dump(1);
}

PlfResult result_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    PlfResult r;
    r.method = parse_method(j.at("method").get<std::string>());
    r.L = j.at("L").get<int>();
    r.J = j.at("J").get<int>();
    r.n_states = j.at("n_states").get<int>();
    r.n_flows = j.at("n_flows").get<int>();
    r.labels = j.at("labels").get<std::vector<std::string>>();
    r.segment_probs = j.at("segment_probs").get<std::array<double, 3>>();
    r.segment_counts = j.at("segment_counts").get<std::array<int, 3>>();
    r.segment_J = j.at("segment_J").get<std::array<int, 3>>();
    r.exceeded = j.at("exceeded").get<int>();
    r.info = j.at("info").get<std::map<std::string, std::string>>();

    const auto& cj = j.at("correction");
    auto& c = r.correction;
    c.mode = parse_correction(cj.at("mode").get<std::string>());
    c.H = cj.at("H").get<int>();
    c.rho = vec3_from(cj.at("rho"));
    c.varsigma = vec3_from(cj.at("varsigma"));
    c.rho_flow = vec3_from(cj.at("rho_flow"));
    c.varsigma_flow = vec3_from(cj.at("varsigma_flow"));
    c.samples = cj.at("samples").get<std::array<int, 3>>();
    c.constant_rows = cj.at("constant_rows").get<std::array<int, 3>>();
    c.ac_failures = cj.at("ac_failures").get<int>();

    r.wind_gmm = gmm_from(j.at("wind_gmm"));
    const Eigen::Index k = r.wind_gmm.dim();
    for (std::size_t s = 0; s < 3; ++s) r.maps[s] = mat_from(j.at("maps")[s], k);
    r.offsets = vec3_from(j.at("offsets"));
    for (const auto& m : j.at("latent_covs")) r.latent_covs.push_back(mat_from(m, k));
    for (const auto& cmp : j.at("components")) {
      r.components.push_back({cmp.at("weight").get<double>(), cmp.at("segment").get<int>(), cmp.at("cov").get<int>(),
                              vec_from(cmp.at("mean"))});
    }
    r.validate();
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("result JSON: ") + e.what());
  }
}

}  // namespace caplf
