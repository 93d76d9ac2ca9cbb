"""Reference values frozen into the unit tests.

AC values come from PYPOWER (makeYbus, runpf). The linear-model and mixture
values are recomputed here with numpy/scipy only, independent of the C++ code.
"""
import numpy as np
from scipy.stats import norm
from pypower.api import case14, ppoption, runpf
from pypower.makeYbus import makeYbus
from pypower.ext2int import ext2int


def ac_case14():
    ppc = ext2int(case14())
    Y, Yf, Yt = makeYbus(ppc["baseMVA"], ppc["bus"], ppc["branch"])
    Y = Y.toarray()
    print("Ybus[0,0]", repr(Y[0, 0]))
    print("Ybus[0,1]", repr(Y[0, 1]))
    print("Ybus[3,6]", repr(Y[3, 6]))
    print("Ybus[8,8]", repr(Y[8, 8]))
    res, ok = runpf(case14(), ppoption(VERBOSE=0, OUT_ALL=0))
    assert ok
    print("Vm", [round(v, 10) for v in res["bus"][:, 7]])
    print("Va_deg", [round(v, 10) for v in res["bus"][:, 8]])
    br = res["branch"][0]
    print("branch1-2 PF QF PT QT (MW)", br[13], br[14], br[15], br[16])
    print("slack Pg", res["gen"][0, 1])


def dlpf_two_bus():
    # slack bus 1 (V=1), PQ bus 2, line x=0.1 r=0: Lambda = diag(10, 10).
    B = np.array([[-10.0, 10.0], [10.0, -10.0]])
    lam = np.array([[10.0, 0.0], [0.0, 10.0]])
    P, Q = -0.5, -0.2
    # theta_2 = P/10, V_2 = 1 + Q/10 (V_1 = 1 boundary).
    print("two-bus theta, V", P / 10, 1 + Q / 10)


def gmm_conditioning():
    w = np.array([0.3, 0.7])
    mu = [np.array([0.1, 0.2, 0.3]), np.array([0.6, 0.4, 0.5])]
    A = np.array([[0.04, 0.01, 0.0], [0.01, 0.09, 0.02], [0.0, 0.02, 0.05]])
    S = [A, 0.5 * A + 0.01 * np.eye(3)]
    e = np.ones(3)
    z = 1.0
    lam, means, covs = [], [], []
    for wj, m, s in zip(w, mu, S):
        se = s @ e
        v = e @ se
        lam.append(wj * norm.pdf(z, e @ m, np.sqrt(v)))
        means.append(m + se / v * (z - e @ m))
        covs.append(s - np.outer(se, se) / v)
    lam = np.array(lam) / sum(lam)
    print("cond weights", [repr(x) for x in lam])
    print("cond mean0", [repr(x) for x in means[0]])
    print("cond mean1", [repr(x) for x in means[1]])
    print("cond cov0 row0", [repr(x) for x in covs[0][0]])
    # marginal CDF of coordinate 1 at t = 0.35
    cdf = sum(wj * norm.cdf(0.35, m[1], np.sqrt(s[1, 1])) for wj, m, s in zip(w, mu, S))
    print("marginal cdf x1<=0.35", repr(cdf))


if __name__ == "__main__":
    ac_case14()
    dlpf_two_bus()
    gmm_conditioning()
