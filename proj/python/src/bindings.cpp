#include "caplf/acpf.hpp"
#include "caplf/cli.hpp"
#include "caplf/dlpf.hpp"
#include "caplf/error.hpp"
#include "caplf/experiment.hpp"
#include "caplf/gmm.hpp"
#include "caplf/netcase.hpp"
#include "caplf/plf.hpp"
#include "caplf/windgen.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <string>
#include <vector>

namespace py = pybind11;
using namespace caplf;

namespace {

py::dict group(const GroupMetrics& g) {
  py::dict d;
  d["cdf_rmse"] = g.cdf_rmse;
  d["mean_rel_error"] = g.mean_rel_error;
  d["var_rel_error"] = g.var_rel_error;
  d["included"] = g.included;
  d["skipped"] = g.skipped;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "caplf core bindings";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<ConvergenceError>(m, "ConvergenceError", base.ptr());
  py::register_exception<CapacityError>(m, "CapacityError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<StageError>(m, "StageError", base.ptr());

  py::class_<Gmm>(m, "Gmm")
      .def(py::init([](const Eigen::VectorXd& w, std::vector<Eigen::VectorXd> means, std::vector<Eigen::MatrixXd> covs) {
             Gmm g{w, std::move(means), std::move(covs)};
             g.validate();
             return g;
           }),
           py::arg("weights"), py::arg("means"), py::arg("covs"))
      .def_readonly("weights", &Gmm::weights)
      .def_readonly("means", &Gmm::means)
      .def_readonly("covs", &Gmm::covs)
      .def_property_readonly("size", &Gmm::size)
      .def_property_readonly("dim", &Gmm::dim)
      .def("cdf", [](const Gmm& g, int k, double t) { return marginal_cdf(g, k, t); }, py::arg("k"), py::arg("t"))
      .def("condition_on_sum", [](const Gmm& g, const Eigen::VectorXd& e, double z) { return condition_on_sum(g, e, z); },
           py::arg("direction"), py::arg("z"))
      .def("affine_map", [](const Gmm& g, const Eigen::MatrixXd& A, const Eigen::VectorXd& b) { return affine_map(g, A, b); },
           py::arg("A"), py::arg("b"))
      .def("to_json", &gmm_to_json)
      .def_static("from_json", &gmm_from_json);

  m.def("em_fit", [](const Eigen::MatrixXd& X, int J, std::uint64_t seed) { return em_fit(X, J, seed); }, py::arg("X"),
        py::arg("J"), py::arg("seed") = 1, "Fit a J-component mixture to the rows of X.");
  m.def("sample", &sample, py::arg("gmm"), py::arg("n"), py::arg("seed"));

  py::class_<PlfResult>(m, "Result")
      .def_property_readonly("method", [](const PlfResult& r) { return std::string(method_name(r.method)); })
      .def_readonly("L", &PlfResult::L)
      .def_readonly("J", &PlfResult::J)
      .def_readonly("n_states", &PlfResult::n_states)
      .def_readonly("n_flows", &PlfResult::n_flows)
      .def_readonly("labels", &PlfResult::labels)
      .def_readonly("segment_probs", &PlfResult::segment_probs)
      .def_readonly("segment_J", &PlfResult::segment_J)
      .def_readonly("wind_gmm", &PlfResult::wind_gmm)
      .def_readonly("info", &PlfResult::info)
      .def_property_readonly("n_components", [](const PlfResult& r) { return r.components.size(); })
      .def("mean", &PlfResult::mean)
      .def("variance", &PlfResult::variance)
      .def("cdf",
           [](const PlfResult& r, int row, const std::vector<double>& t) {
             const ScalarMixture s = r.marginal(row);
             std::vector<double> out;
             out.reserve(t.size());
             for (double v : t) out.push_back(s.cdf(v));
             return out;
           },
           py::arg("row"), py::arg("t"))
      .def("y_gmm", &PlfResult::y_gmm)
      .def("flow_gmm", &PlfResult::flow_gmm)
      .def("to_json", &result_to_json)
      .def_static("from_json", &result_from_json);

  m.def(
      "run",
      [](const std::string& case_path, const std::string& sidecar, std::optional<std::string> wind, const std::string& method,
         int L, int J, int H, const std::string& correction, std::uint64_t seed_gmm, std::uint64_t seed_sampling,
         std::uint64_t seed_correction, int threads) {
        PlfOptions o;
        o.method = parse_method(method);
        o.L = L;
        o.J = J;
        o.H = H;
        o.correction = parse_correction(correction);
        o.seed_gmm = seed_gmm;
        o.seed_sampling = seed_sampling;
        o.seed_correction = seed_correction;
        o.threads = threads;
        std::optional<std::filesystem::path> w;
        if (wind) w = *wind;
        py::gil_scoped_release nogil;
        const Experiment ex = prepare_experiment(case_path, sidecar, w);
        return run_algorithm1(ex.ctx, ex.history, o);
      },
      py::arg("case"), py::arg("sidecar"), py::arg("wind") = py::none(), py::arg("method") = "indirect", py::arg("L") = 0,
      py::arg("J") = 5, py::arg("H") = 12, py::arg("correction") = "polynomial", py::arg("seed_gmm") = 1,
      py::arg("seed_sampling") = 2, py::arg("seed_correction") = 3, py::arg("threads") = 0,
      "Fit the wind mixture and compute the state and flow distribution.");

  m.def(
      "benchmark",
      [](const std::string& case_path, const std::string& sidecar, const PlfResult& result, int n, std::uint64_t seed,
         std::optional<std::string> wind, int threads) {
        if (n < 1000) throw ValidationError("benchmark needs at least 1000 samples (got " + std::to_string(n) + ")");
        std::optional<std::filesystem::path> w;
        if (wind) w = *wind;
        Benchmark b;
        Metrics mt;
        {
          py::gil_scoped_release nogil;
          const Experiment ex = prepare_experiment(case_path, sidecar, w);
          b = acmc_benchmark(ex.ctx, result.wind_gmm, n, seed, threads);
          mt = metrics_cdf_rmse(result, b, threads);
        }
        py::dict d;
        d["angle"] = group(mt.angle);
        d["voltage"] = group(mt.voltage);
        d["flow"] = group(mt.flow);
        d["rmse"] = mt.rmse;
        d["failures"] = b.failures;
        d["seconds"] = b.seconds;
        d["states"] = b.states;
        d["flows"] = b.flows;
        return d;
      },
      py::arg("case"), py::arg("sidecar"), py::arg("result"), py::arg("n") = 20000, py::arg("seed") = 4,
      py::arg("wind") = py::none(), py::arg("threads") = 0, "AC Monte Carlo benchmark and metrics against a result.");

  m.def(
      "solve_ac",
      [](const std::string& case_path) {
        const NetworkCase net = load_case(case_path);
        const AcSolution s = solve_ac(net, base_injections(net));
        py::dict d;
        d["theta_S"] = s.state.theta_S;
        d["V_L"] = s.state.V_L;
        d["iterations"] = s.iterations;
        d["mismatch"] = s.mismatch;
        return d;
      },
      py::arg("case"), "Newton-Raphson solve at the scheduled injections.");

  m.def(
      "dlpf",
      [](const std::string& case_path) {
        const NetworkCase net = load_case(case_path);
        const LinearPfModel lin = build_dlpf(net, build_admittance(net));
        py::dict d;
        d["Lambda"] = Eigen::MatrixXd(lin.Lambda);
        d["C"] = Eigen::MatrixXd(lin.C);
        d["boundary"] = lin.boundary;
        d["y"] = lin.solve(stack_injections(base_injections(net)));
        return d;
      },
      py::arg("case"), "DLPF matrices and the state at the scheduled injections.");

  m.def(
      "windgen",
      [](const std::string& preset, double capacity, int samples, std::uint64_t seed) {
        const WindHistory h = generate(wind_preset(preset, capacity, samples, seed));
        return py::make_tuple(h.names, h.values);
      },
      py::arg("preset"), py::arg("capacity") = 1.0, py::arg("samples") = 20000, py::arg("seed") = 1,
      "Synthetic wind history (farm names, samples x farms).");

  m.def(
      "main",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "caplf");
        std::vector<char*> argv;
        for (auto& a : args) argv.push_back(a.data());
        return cli_main(static_cast<int>(argv.size()), argv.data());
      },
      py::arg("args"), "Run the command-line interface; returns the exit code.");
}
