"""Lindblad generators for the coupled-qubit and radical-pair models, and time propagation.

Units: Hamiltonians are angular frequencies with hbar = 1 and rates are in
inverse time, so ``H * t`` and ``rate * t`` are dimensionless.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.constants
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from . import qmat
from .qmat import IDENTITY_2, SIGMA_X, SIGMA_Y, SIGMA_Z, SpaceLabel

#: mu_B g_s / (2 hbar) with g_s = 2, in rad s^-1 T^-1
GYROMAGNETIC = scipy.constants.physical_constants["Bohr magneton"][0] / scipy.constants.hbar

EARTH_FIELD = 47e-6

SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)  # |g><e| in the (g, e) basis
SIGMA_PLUS = SIGMA_MINUS.conj().T


class IntegrationError(RuntimeError):
    """The adaptive integrator could not meet its tolerance."""


class FullyDecayedError(ValueError):
    """Postselection onto a subspace whose population has vanished."""


@dataclass(frozen=True)
class Liouvillian:
    """Hamiltonian plus a list of ``(jump operator, rate)`` Lindblad terms.

    The generated dynamics is
    ``d rho/dt = -i[H, rho] + sum_k r_k (L_k rho L_k^+ - {L_k^+ L_k, rho}/2)``.
    """

    hamiltonian: np.ndarray
    collapse: tuple[tuple[np.ndarray, float], ...] = ()
    label: SpaceLabel | None = None

    def __post_init__(self):
        h = qmat.hermitian(self.hamiltonian, tol=1e-12 * max(1.0, np.abs(self.hamiltonian).max()))
        object.__setattr__(self, "hamiltonian", h)
        terms = []
        for op, rate in self.collapse:
            if rate < 0:
                raise ValueError(f"negative Lindblad rate {rate}")
            op = np.asarray(op, dtype=complex)
            if op.shape != h.shape:
                raise ValueError("jump operator shape does not match the Hamiltonian")
            terms.append((op, float(rate)))
        object.__setattr__(self, "collapse", tuple(terms))
        if self.label is None:
            object.__setattr__(self, "label", SpaceLabel(("system",), (h.shape[0],)))
        self.label.check(h)

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    @cached_property
    def sparse_superoperator(self) -> sp.csr_matrix:
        """Generator acting on row-major ``rho.reshape(-1)``; ``vec(A X B) = (A kron B^T) vec X``."""
        d = self.dim
        eye = sp.identity(d, dtype=complex, format="csr")
        h = sp.csr_matrix(self.hamiltonian)
        out = -1j * (sp.kron(h, eye) - sp.kron(eye, h.T))
        for op, rate in self.collapse:
            if rate == 0:
                continue
            c = sp.csr_matrix(op)
            cdc = (c.conj().T @ c).tocsr()
            out = out + rate * (
                sp.kron(c, c.conj()) - 0.5 * sp.kron(cdc, eye) - 0.5 * sp.kron(eye, cdc.T)
            )
        out = sp.csr_matrix(out)
        out.eliminate_zeros()
        return out

    def superoperator(self) -> np.ndarray:
        """Dense generator matrix, row-major vectorization."""
        return self.sparse_superoperator.toarray()

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """Evaluate the right-hand side of the master equation at ``rho``."""
        h = self.hamiltonian
        out = -1j * (h @ rho - rho @ h)
        for op, rate in self.collapse:
            cdc = op.conj().T @ op
            out += rate * (op @ rho @ op.conj().T - 0.5 * (cdc @ rho + rho @ cdc))
        return out


@dataclass(frozen=True)
class CoupledQubitParams:
    g: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if not self.g > 0:
            raise ValueError("coupling g must be positive")
        if self.gamma < 0:
            raise ValueError("decay rate gamma must be non-negative")


COUPLED_QUBIT_LABEL = SpaceLabel(("qubit1", "qubit2"), (2, 2))


def build_coupled_qubit_liouvillian(p: CoupledQubitParams) -> Liouvillian:
    """Two exchange-coupled qubits, each with amplitude damping at rate ``gamma``.

    Basis ordering is |gg>, |ge>, |eg>, |ee>.
    """
    sm1 = qmat.kron(SIGMA_MINUS, IDENTITY_2)
    sm2 = qmat.kron(IDENTITY_2, SIGMA_MINUS)
    h = p.g * (sm1.conj().T @ sm2 + sm1 @ sm2.conj().T)
    return Liouvillian(h, ((sm1, p.gamma), (sm2, p.gamma)), COUPLED_QUBIT_LABEL)


@dataclass(frozen=True)
class RadicalPairParams:
    """Radical pair: two electrons, one nucleus coupled to electron 1, shelving ancillas.

    ``hyperfine`` holds the diagonal of the hyperfine tensor as angular
    frequencies. Spin operators are Pauli matrices for electrons and nucleus.
    With ``shelving=False`` the ancillas are dropped and ``kappa`` must be 0.
    """

    b0: float = EARTH_FIELD
    theta: float = 0.0
    phi: float = 0.0
    hyperfine: tuple[float, float, float] = (0.0, 0.0, 1e5)
    kappa: float = 1e4
    gamma_dephasing: float = 1e3
    gyromagnetic: float = GYROMAGNETIC
    shelving: bool = True

    def __post_init__(self):
        if self.b0 < 0:
            raise ValueError("field magnitude b0 must be non-negative")
        if not -1e-12 <= self.theta <= math.pi / 2 + 1e-12:
            raise ValueError("theta must lie in [0, pi/2]")
        if self.kappa < 0 or self.gamma_dephasing < 0:
            raise ValueError("rates must be non-negative")
        if not self.shelving and self.kappa != 0:
            raise ValueError("recombination (kappa > 0) needs the shelving ancillas")
        object.__setattr__(self, "hyperfine", tuple(float(a) for a in self.hyperfine))

    @property
    def field(self) -> np.ndarray:
        st = math.sin(self.theta)
        return self.b0 * np.array(
            [math.cos(self.phi) * st, math.sin(self.phi) * st, math.cos(self.theta)]
        )


RADICAL_PAIR_LABEL = SpaceLabel(
    ("electron1", "electron2", "nucleus", "ancillaS", "ancillaT"), (2, 2, 2, 2, 2)
)
SPIN_LABEL = SpaceLabel(("electron1", "electron2", "nucleus"), (2, 2, 2))
ELECTRONS = ("electron1", "electron2")


def electron_pair_states() -> dict[str, np.ndarray]:
    """Singlet and triplet kets of two spins, index 0 = up."""
    up, dn = qmat.ket(0, 2), qmat.ket(1, 2)
    ud, du = np.kron(up, dn), np.kron(dn, up)
    return {
        "s": (ud - du) / math.sqrt(2),
        "t0": (ud + du) / math.sqrt(2),
        "t-1": np.kron(dn, dn),
        "t+1": np.kron(up, up),
    }


def singlet_triplet_basis() -> np.ndarray:
    """Unitary whose columns are |s>, |t0>, |t-1>, |t+1> in the product basis."""
    st = electron_pair_states()
    return np.column_stack([st[k] for k in ("s", "t0", "t-1", "t+1")])


def recombination_operators() -> list[np.ndarray]:
    """Eight shelving jumps: singlet flips ancilla S, triplets flip ancilla T.

    One operator per (pair state, nuclear state); all leave the spin state intact.
    """
    s0, s1 = qmat.ket(0, 2), qmat.ket(1, 2)
    ops = []
    for name, pair in electron_pair_states().items():
        for nuc in (qmat.ket(0, 2), qmat.ket(1, 2)):
            spin = np.kron(pair, nuc)
            before = qmat.kron(spin, s0, s0)
            after = qmat.kron(spin, s1, s0) if name == "s" else qmat.kron(spin, s0, s1)
            ops.append(np.outer(after, before.conj()))
    return ops


def undecayed_projector(label: SpaceLabel = RADICAL_PAIR_LABEL) -> np.ndarray:
    """Projector onto ancillas in S0, T0 (population that has not recombined)."""
    p0 = qmat.projector(qmat.ket(0, 2))
    return qmat.embed(np.kron(p0, p0), label, ("ancillaS", "ancillaT"))


def radical_pair_hamiltonian(p: RadicalPairParams, label: SpaceLabel) -> np.ndarray:
    paulis = (SIGMA_X, SIGMA_Y, SIGMA_Z)
    bvec = p.gyromagnetic * p.field
    h = np.zeros((label.dim, label.dim), dtype=complex)
    for b, s in zip(bvec, paulis):
        if b:
            h += b * (qmat.embed(s, label, ["electron1"]) + qmat.embed(s, label, ["electron2"]))
    for a, s in zip(p.hyperfine, paulis):
        if a:
            h += a * qmat.embed(np.kron(s, s), label, ["nucleus", "electron1"])
    return h


def build_radical_pair_liouvillian(p: RadicalPairParams) -> Liouvillian:
    label = RADICAL_PAIR_LABEL if p.shelving else SPIN_LABEL
    h = radical_pair_hamiltonian(p, label)
    terms = []
    if p.shelving:
        terms += [(op, p.kappa) for op in recombination_operators()]
    terms += [(qmat.embed(SIGMA_Z, label, [e]), p.gamma_dephasing) for e in ELECTRONS]
    return Liouvillian(h, tuple(terms), label)


def _as_stack(rho) -> tuple[np.ndarray, bool]:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim == 2:
        return rho[None], True
    if rho.ndim == 3:
        return rho, False
    raise ValueError(f"expected a matrix or a stack of matrices, got shape {rho.shape}")


def _check_times(times) -> np.ndarray:
    times = np.asarray(times, dtype=float).reshape(-1)
    if times.size == 0:
        raise ValueError("empty time list")
    if times[0] < 0 or np.any(np.diff(times) < 0):
        raise ValueError("times must be non-negative and ascending")
    return times


def propagate(
    l: Liouvillian,
    rho0,
    times: Sequence[float],
    method: str = "DOP853",
    rtol: float = 1e-9,
    atol: float = 1e-12,
    clip: bool = True,
):
    """States at each of ``times`` starting from ``rho0`` at t = 0.

    ``rho0`` may be a single matrix or a stack ``(k, d, d)``; the return value
    is a list of matrices or a list of stacks accordingly. ``method`` is an
    adaptive Runge-Kutta scheme name understood by ``scipy.integrate.solve_ivp``
    or ``"expm"`` for exact exponential stepping of the time-independent generator.
    """
    stack, single = _as_stack(rho0)
    k, d, _ = stack.shape
    if d != l.dim:
        raise ValueError(f"state dimension {d} does not match generator dimension {l.dim}")
    times = _check_times(times)
    y0 = stack.reshape(k, d * d).T  # columns are vectorized states

    if method == "expm":
        ys = _propagate_expm(l, y0, times)
    else:
        ys = _propagate_ode(l, y0, times, method, rtol, atol)

    out = []
    for t, y in zip(times, ys):
        if t == 0:
            states = stack.copy()
        else:
            states = y.T.reshape(k, d, d)
            if clip:
                states = np.array([qmat.clip_psd(s) for s in states])
        out.append(states[0] if single else states)
    return out


def _propagate_ode(l, y0, times, method, rtol, atol):
    gen = l.sparse_superoperator
    shape = y0.shape

    def rhs(_t, y):
        return (gen @ y.reshape(shape)).ravel()

    t_end = times[-1]
    if t_end == 0:
        return [y0] * len(times)
    sol = solve_ivp(
        rhs, (0.0, t_end), y0.ravel(), method=method, t_eval=times, rtol=rtol, atol=atol
    )
    if sol.status != 0:
        raise IntegrationError(sol.message)
    return [sol.y[:, i].reshape(shape) for i in range(len(times))]


def _propagate_expm(l, y0, times):
    gen = l.superoperator()
    cache: dict[float, np.ndarray] = {}
    ys, y, t_prev = [], y0, 0.0
    for t in times:
        dt = t - t_prev
        if dt > 0:
            key = float(f"{dt:.12e}")
            if key not in cache:
                cache[key] = qmat.expm(gen * dt)
            y = cache[key] @ y
        ys.append(y)
        t_prev = t
    return ys


def exact_evolution(l: Liouvillian, rho0, t: float) -> np.ndarray:
    """Reference: ``expm(L t)`` applied to the vectorized state (no clipping)."""
    rho0 = np.asarray(rho0, dtype=complex)
    v = qmat.expm(l.superoperator() * t) @ rho0.reshape(-1)
    return v.reshape(rho0.shape)


@dataclass(frozen=True)
class ReductionSpec:
    """How to turn a full-space state into the state on the observed subsystems.

    ``mode="trace-out"`` traces ``traced``. ``mode="project"`` first applies
    ``projector`` and renormalizes, then traces ``traced``.
    """

    mode: str = "trace-out"
    traced: frozenset[str] = field(default_factory=frozenset)
    projector: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "traced", frozenset(self.traced))
        if self.mode not in ("trace-out", "project"):
            raise ValueError(f"unknown reduction mode {self.mode!r}")
        if self.mode == "project":
            if self.projector is None:
                raise ValueError("project mode needs a projector")
            p = np.asarray(self.projector, dtype=complex)
            if np.max(np.abs(p @ p - p)) > 1e-10:
                raise ValueError("projector is not idempotent")
            object.__setattr__(self, "projector", p)

    def kept(self, label: SpaceLabel) -> tuple[str, ...]:
        for name in self.traced:
            label.index(name)
        return tuple(n for n in label.names if n not in self.traced)


def radical_pair_reduction(mode: str = "trace-out") -> ReductionSpec:
    """Keep the two electrons; optionally postselect on undecayed population first."""
    traced = frozenset(n for n in RADICAL_PAIR_LABEL.names if n not in ELECTRONS)
    if mode == "trace-out":
        return ReductionSpec("trace-out", traced)
    return ReductionSpec("project", traced, undecayed_projector())


def project(rho, spec: ReductionSpec) -> np.ndarray:
    p = spec.projector
    return p @ rho @ p


def reduce(rho, label: SpaceLabel, spec: ReductionSpec, norm: float | None = None) -> np.ndarray:
    """Reduced state per ``spec``.

    In project mode the result is divided by ``tr(P rho P)``, or by ``norm``
    when given (used to keep subnormalized assemblage members on a common scale).
    """
    rho = np.asarray(rho, dtype=complex)
    label.check(rho)
    if spec.mode == "project":
        rho = project(rho, spec)
        if norm is None:
            norm = float(np.trace(rho).real)
        if norm < 1e-12:
            raise FullyDecayedError(f"postselected population {norm:.3e} is below 1e-12")
        rho = rho / norm
    kept = spec.kept(label)
    if len(kept) == len(label.names):
        return rho
    return qmat.partial_trace(rho, label, kept)
