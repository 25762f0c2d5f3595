"""Independent reference computations used only by the tests."""
import math

import numpy as np
import scipy.integrate

cp = None
try:
    import cvxpy as cp
except ImportError:  # pragma: no cover
    pass


def reference_tsr(members):
    """Robustness program solved by a general-purpose conic solver (CVXOPT through cvxpy).

    Hermitian variables are handled by cvxpy's own complex-to-real reduction,
    so nothing of the package's solver is shared.
    """
    members = np.asarray(members)
    n_x, n_a, d, _ = members.shape
    strategies = list(np.ndindex(*([n_a] * n_x)))
    blocks = [cp.Variable((d, d), hermitian=True) for _ in strategies]
    cons = [b >> 0 for b in blocks]
    for x in range(n_x):
        for a in range(n_a):
            chosen = [b for lam, b in zip(strategies, blocks) if lam[x] == a]
            cons.append(sum(chosen) - members[x, a] >> 0)
    objective = cp.Minimize(cp.real(sum(cp.trace(b) for b in blocks)) - 1)
    prob = cp.Problem(objective, cons)
    prob.solve(solver="CVXOPT")
    return float(prob.value)


def taylor_expm(a, terms=60):
    """Truncated Taylor series, accurate for matrices of small norm."""
    a = np.asarray(a, dtype=complex)
    out = np.eye(len(a), dtype=complex)
    term = out.copy()
    for k in range(1, terms):
        term = term @ a / k
        out = out + term
    return out


def lindblad_rhs_dense(h, jumps):
    """Master-equation right-hand side written out with explicit matrix products."""

    def rhs(_t, y):
        d = len(h)
        rho = y.reshape(d, d)
        out = -1j * (h @ rho - rho @ h)
        for op, rate in jumps:
            opd = op.conj().T
            out = out + rate * (op @ rho @ opd - 0.5 * (opd @ op @ rho + rho @ opd @ op))
        return out.ravel()

    return rhs


def integrate_lindblad(h, jumps, rho0, t):
    """Adams/BDF integration of the dense right-hand side (an integrator the package does not use)."""
    rhs = lindblad_rhs_dense(np.asarray(h, dtype=complex), jumps)
    sol = scipy.integrate.solve_ivp(
        rhs, (0, t), np.asarray(rho0, dtype=complex).ravel(), method="BDF",
        rtol=1e-11, atol=1e-13,
    )
    d = len(h)
    return sol.y[:, -1].reshape(d, d)


def random_density(rng, d, rank=None):
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho)


def random_unitary(rng, d):
    z = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))
