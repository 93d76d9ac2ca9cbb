#include "caplf/dlpf.hpp"

#include "caplf/error.hpp"

#include <Eigen/SparseLU>

#include <cmath>

namespace caplf {

namespace {

using Trip = Eigen::Triplet<double>;

// Position of a column bus in the boundary vector [theta_R; V_T].
int boundary_V(const NetworkCase& net, int bus) {
  const int t = net.pos_T(bus);
  return t < 0 ? -1 : 1 + t;
}

}  // namespace

Eigen::VectorXd LinearPfModel::solve(const Eigen::VectorXd& injections) const {
  if (injections.size() != dim()) throw ValidationError("injection vector has wrong dimension");
  return Lambda_inv * injections + offset;
}

Eigen::VectorXd stack_injections(const InjectionSet& inj) {
  Eigen::VectorXd x(inj.P.size() + inj.Q.size());
  x << inj.P, inj.Q;
  return x;
}

LinearPfModel build_dlpf(const NetworkCase& net, const Admittance& adm) {
  LinearPfModel m;
  m.N = net.N();
  m.M = net.M();
  const int N = m.N;
  const int nb = 1 + static_cast<int>(net.T.size());

  std::vector<Trip> lam, cc;
  auto scan = [&](const Eigen::SparseMatrix<double>& mat, auto&& fn) {
    for (int k = 0; k < mat.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator e(mat, k); e; ++e)
        fn(static_cast<int>(e.row()), static_cast<int>(e.col()), e.value());
  };

  // Angle rows (S): -B' on theta columns, +G on V columns.
  scan(adm.B_noshunt, [&](int i, int j, double v) {
    const int r = net.pos_S(i);
    if (r < 0) return;
    if (const int c = net.pos_S(j); c >= 0) lam.emplace_back(r, c, -v);
    if (j == net.slack) cc.emplace_back(r, 0, v);
  });
  scan(adm.G, [&](int i, int j, double v) {
    if (const int r = net.pos_S(i); r >= 0) {
      if (const int c = net.pos_L(j); c >= 0) lam.emplace_back(r, N + c, v);
      if (const int t = boundary_V(net, j); t >= 0) cc.emplace_back(r, t, -v);
    }
    if (const int r = net.pos_L(i); r >= 0) {
      if (const int c = net.pos_S(j); c >= 0) lam.emplace_back(N + r, c, -v);
      if (j == net.slack) cc.emplace_back(N + r, 0, v);
    }
  });
  // Magnitude rows (L): -B on V columns.
  scan(adm.B, [&](int i, int j, double v) {
    const int r = net.pos_L(i);
    if (r < 0) return;
    if (const int c = net.pos_L(j); c >= 0) lam.emplace_back(N + r, N + c, -v);
    if (const int t = boundary_V(net, j); t >= 0) cc.emplace_back(N + r, t, v);
  });

  const int d = m.dim();
  m.Lambda.resize(d, d);
  m.Lambda.setFromTriplets(lam.begin(), lam.end());
  m.Lambda.makeCompressed();
  m.C.resize(d, nb);
  m.C.setFromTriplets(cc.begin(), cc.end());
  m.C.makeCompressed();

  m.boundary.resize(nb);
  m.boundary[0] = net.buses[net.slack].Va_init;
  m.boundary.tail(nb - 1) = net.fixed_magnitudes();

  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(m.Lambda);
  if (lu.info() != Eigen::Success) {
    throw NumericalError("DLPF matrix is singular (is the network connected?)");
  }
  m.Lambda_inv = lu.solve(Eigen::MatrixXd::Identity(d, d));
  if (!m.Lambda_inv.allFinite()) throw NumericalError("DLPF matrix is singular (is the network connected?)");
  const double resid = (m.Lambda * m.Lambda_inv - Eigen::MatrixXd::Identity(d, d)).lpNorm<Eigen::Infinity>();
  if (!(resid < 1e-6)) throw NumericalError("DLPF matrix is numerically singular");
  m.offset = m.Lambda_inv * (m.C * m.boundary);
  return m;
}

StateVector solve_dlpf(const NetworkCase& net, const LinearPfModel& model, const InjectionSet& inj) {
  if (inj.P.size() != model.N || inj.Q.size() != model.M) throw ValidationError("injection set has wrong dimensions");
  return state_from_y(net, model.solve(stack_injections(inj)));
}

FlowMap branch_flow_matrix(const NetworkCase& net, const Admittance&) {
  const int nbr = static_cast<int>(net.branches.size());
  const int N = net.N();
  const Eigen::VectorXd vt = net.fixed_magnitudes();
  const double th_r = net.buses[net.slack].Va_init;

  FlowMap fm;
  fm.f0 = Eigen::VectorXd::Zero(nbr);
  std::vector<Trip> trip;
  for (int k = 0; k < nbr; ++k) {
    const Branch& br = net.branches[k];
    if (!br.status) continue;
    const BranchAdmittance a = branch_admittance(br);
    // P_f = g_ff Vf^2 + Vf Vt (G cos(th) + B sin(th)), th = th_f - th_t.
    const double gff = a.ff.real();
    const double G = a.ft.real();
    const double B = a.ft.imag();
    double f0 = gff + G;
    auto add_theta = [&](int bus, double coef) {
      if (const int c = net.pos_S(bus); c >= 0) {
        trip.emplace_back(k, c, coef);
      } else {
        f0 += coef * th_r;
      }
    };
    auto add_v = [&](int bus, double coef) {
      f0 -= coef;
      if (const int c = net.pos_L(bus); c >= 0) {
        trip.emplace_back(k, N + c, coef);
      } else {
        f0 += coef * vt[net.pos_T(bus)];
      }
    };
    add_theta(br.from, B);
    add_theta(br.to, -B);
    add_v(br.from, 2.0 * gff + G);
    add_v(br.to, G);
    fm.f0[k] = f0;
  }
  fm.F.resize(nbr, N + net.M());
  fm.F.setFromTriplets(trip.begin(), trip.end());
  fm.F.makeCompressed();
  return fm;
}

}  // namespace caplf
