#include "caplf/acpf.hpp"

#include "caplf/error.hpp"

#include <Eigen/SparseLU>

#include <cmath>
#include <sstream>

namespace caplf {

Eigen::VectorXd StateVector::y() const {
  Eigen::VectorXd out(theta_S.size() + V_L.size());
  out << theta_S, V_L;
  return out;
}

Eigen::VectorXcd StateVector::voltages(const NetworkCase& net) const {
  const int n = net.n_buses();
  Eigen::VectorXd va(n), vm(n);
  va[net.slack] = slack_theta;
  for (int k = 0; k < net.N(); ++k) va[net.S[k]] = theta_S[k];
  for (int k = 0; k < net.M(); ++k) vm[net.L[k]] = V_L[k];
  for (std::size_t k = 0; k < net.T.size(); ++k) vm[net.T[k]] = V_T[k];
  Eigen::VectorXcd v(n);
  for (int i = 0; i < n; ++i) v[i] = std::polar(vm[i], va[i]);
  return v;
}

InjectionSet base_injections(const NetworkCase& net) {
  const Eigen::VectorXd pg = net.scheduled_pg();
  const Eigen::VectorXd qg = net.scheduled_qg();
  InjectionSet inj;
  inj.P.resize(net.N());
  inj.Q.resize(net.M());
  for (int k = 0; k < net.N(); ++k) inj.P[k] = pg[net.S[k]] - net.buses[net.S[k]].Pd;
  for (int k = 0; k < net.M(); ++k) inj.Q[k] = qg[net.L[k]] - net.buses[net.L[k]].Qd;
  return inj;
}

StateVector flat_start(const NetworkCase& net) {
  StateVector s;
  s.slack_theta = net.buses[net.slack].Va_init;
  s.theta_S = Eigen::VectorXd::Constant(net.N(), s.slack_theta);
  s.V_L = Eigen::VectorXd::Ones(net.M());
  s.V_T = net.fixed_magnitudes();
  return s;
}

StateVector state_from_y(const NetworkCase& net, const Eigen::VectorXd& y) {
  if (y.size() != net.N() + net.M()) throw ValidationError("state vector has wrong dimension");
  StateVector s;
  s.slack_theta = net.buses[net.slack].Va_init;
  s.theta_S = y.head(net.N());
  s.V_L = y.tail(net.M());
  s.V_T = net.fixed_magnitudes();
  return s;
}

AcSolver::AcSolver(const NetworkCase& net) : AcSolver(net, build_admittance(net)) {}

AcSolver::AcSolver(const NetworkCase& net, Admittance adm) : net_(&net), adm_(std::move(adm)) {}

Eigen::VectorXcd AcSolver::bus_power(const Eigen::VectorXcd& v) const {
  const Eigen::VectorXcd current = adm_.Y * v;
  return v.cwiseProduct(current.conjugate());
}

namespace {

Eigen::VectorXcd scheduled_power(const NetworkCase& net, const InjectionSet& inj) {
  Eigen::VectorXcd s = Eigen::VectorXcd::Zero(net.n_buses());
  for (int k = 0; k < net.N(); ++k) s[net.S[k]].real(inj.P[k]);
  for (int k = 0; k < net.M(); ++k) s[net.L[k]].imag(inj.Q[k]);
  return s;
}

Eigen::VectorXd mismatch_vector(const NetworkCase& net, const Eigen::VectorXcd& calc, const Eigen::VectorXcd& sched) {
  Eigen::VectorXd f(net.N() + net.M());
  for (int k = 0; k < net.N(); ++k) f[k] = calc[net.S[k]].real() - sched[net.S[k]].real();
  for (int k = 0; k < net.M(); ++k) f[net.N() + k] = calc[net.L[k]].imag() - sched[net.L[k]].imag();
  return f;
}

void check_injections(const NetworkCase& net, const InjectionSet& inj) {
  if (inj.P.size() != net.N() || inj.Q.size() != net.M()) throw ValidationError("injection set has wrong dimensions");
  if (!inj.P.allFinite() || !inj.Q.allFinite()) throw ValidationError("injection set contains non-finite values");
}

}  // namespace

double AcSolver::mismatch(const StateVector& state, const InjectionSet& inj) const {
  const NetworkCase& net = *net_;
  check_injections(net, inj);
  const Eigen::VectorXcd v = state.voltages(net);
  return mismatch_vector(net, bus_power(v), scheduled_power(net, inj)).lpNorm<Eigen::Infinity>();
}

AcSolution AcSolver::solve(const InjectionSet& inj, const AcOptions& opts) const {
  using cd = std::complex<double>;
  const NetworkCase& net = *net_;
  check_injections(net, inj);
  const int n = net.n_buses();
  const int N = net.N();
  const int M = net.M();
  const int dim = N + M;

  StateVector st = opts.warm_start ? *opts.warm_start : flat_start(net);
  st.slack_theta = net.buses[net.slack].Va_init;
  st.V_T = net.fixed_magnitudes();

  Eigen::VectorXd va(n), vm(n);
  {
    const Eigen::VectorXcd v0 = st.voltages(net);
    for (int i = 0; i < n; ++i) {
      va[i] = std::arg(v0[i]);
      vm[i] = std::abs(v0[i]);
    }
    va[net.slack] = st.slack_theta;
  }

  const Eigen::VectorXcd sched = scheduled_power(net, inj);
  const bool dense = n <= opts.dense_bus_limit;
  const auto& Y = adm_.Y;

  AcSolution out;
  Eigen::VectorXcd v(n);
  auto refresh = [&] {
    for (int i = 0; i < n; ++i) v[i] = std::polar(vm[i], va[i]);
  };
  refresh();

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(Y.nonZeros()) * 4);
  Eigen::SparseMatrix<double> jac(dim, dim);
  Eigen::SparseLU<Eigen::SparseMatrix<double>> sparse_lu;
  bool pattern_ready = false;

  for (int it = 0;; ++it) {
    const Eigen::VectorXcd current = Y * v;
    const Eigen::VectorXcd calc = v.cwiseProduct(current.conjugate());
    const Eigen::VectorXd f = mismatch_vector(net, calc, sched);
    const double norm = f.lpNorm<Eigen::Infinity>();
    out.mismatch_history.push_back(norm);
    if (!std::isfinite(norm)) {
      throw ConvergenceError("AC power flow diverged (non-finite mismatch)", it, norm);
    }
    if (norm <= opts.tolerance) {
      out.iterations = it;
      out.mismatch = norm;
      break;
    }
    if (it >= opts.max_iterations) {
      std::ostringstream os;
      os << "AC power flow did not converge in " << opts.max_iterations << " iterations (final mismatch " << norm
         << " p.u.)";
      throw ConvergenceError(os.str(), it, norm);
    }

    // Jacobian blocks from dS/dVa and dS/dVm, restricted to (S|L) rows and
    // (theta_S|V_L) columns.
    trip.clear();
    for (int k = 0; k < Y.outerSize(); ++k) {
      for (Eigen::SparseMatrix<cd>::InnerIterator e(Y, k); e; ++e) {
        const int i = static_cast<int>(e.row());
        const int j = static_cast<int>(e.col());
        const cd yij = e.value();
        const cd vn_j = v[j] / vm[j];
        cd ds_dva = cd(0.0, 1.0) * v[i] * (-std::conj(yij * v[j]));
        cd ds_dvm = v[i] * std::conj(yij * vn_j);
        if (i == j) {
          ds_dva += cd(0.0, 1.0) * v[i] * std::conj(current[i]);
          ds_dvm += std::conj(current[i]) * (v[i] / vm[i]);
        }
        const int ps = net.pos_S(i), pl = net.pos_L(i);
        const int cs = net.pos_S(j), cl = net.pos_L(j);
        if (ps >= 0 && cs >= 0) trip.emplace_back(ps, cs, ds_dva.real());
        if (ps >= 0 && cl >= 0) trip.emplace_back(ps, N + cl, ds_dvm.real());
        if (pl >= 0 && cs >= 0) trip.emplace_back(N + pl, cs, ds_dva.imag());
        if (pl >= 0 && cl >= 0) trip.emplace_back(N + pl, N + cl, ds_dvm.imag());
      }
    }
    jac.setFromTriplets(trip.begin(), trip.end());

    Eigen::VectorXd dx;
    if (dense) {
      const Eigen::MatrixXd jd(jac);
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(jd);
      if (!(lu.rcond() > 1e-14)) throw ConvergenceError("singular Jacobian in AC power flow", it, norm);
      dx = lu.solve(-f);
    } else {
      jac.makeCompressed();
      if (!pattern_ready) {
        sparse_lu.analyzePattern(jac);
        pattern_ready = true;
      }
      sparse_lu.factorize(jac);
      if (sparse_lu.info() != Eigen::Success) throw ConvergenceError("singular Jacobian in AC power flow", it, norm);
      dx = sparse_lu.solve(-f);
    }
    if (!dx.allFinite()) throw ConvergenceError("singular Jacobian in AC power flow", it, norm);
    for (int k = 0; k < N; ++k) va[net.S[k]] += dx[k];
    for (int k = 0; k < M; ++k) vm[net.L[k]] += dx[N + k];
    refresh();
  }

  st.theta_S.resize(N);
  st.V_L.resize(M);
  for (int k = 0; k < N; ++k) st.theta_S[k] = va[net.S[k]];
  for (int k = 0; k < M; ++k) st.V_L[k] = vm[net.L[k]];
  out.state = std::move(st);
  for (int k = 0; k < M; ++k) {
    if (!(out.state.V_L[k] > 0.0)) {
      throw ConvergenceError("AC power flow converged to a non-physical voltage", out.iterations, out.mismatch);
    }
  }
  return out;
}

AcSolution solve_ac(const NetworkCase& net, const InjectionSet& inj, const AcOptions& opts) {
  return AcSolver(net).solve(inj, opts);
}

std::vector<BranchFlow> branch_flows_ac(const NetworkCase& net, const StateVector& state) {
  const Eigen::VectorXcd v = state.voltages(net);
  std::vector<BranchFlow> flows;
  flows.reserve(net.branches.size());
  for (const auto& br : net.branches) {
    BranchFlow f;
    if (br.status) {
      const BranchAdmittance a = branch_admittance(br);
      const auto vf = v[br.from], vt = v[br.to];
      const auto sf = vf * std::conj(a.ff * vf + a.ft * vt);
      const auto st = vt * std::conj(a.tf * vf + a.tt * vt);
      f = {sf.real(), sf.imag(), st.real(), st.imag()};
    }
    flows.push_back(f);
  }
  return flows;
}

}  // namespace caplf
