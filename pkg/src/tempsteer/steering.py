"""Measurements, temporal assemblages and deterministic response strategies."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import dynamics, qmat
from .qmat import SpaceLabel

ASSEMBLAGE_FORMAT = "tempsteer-assemblage"
ASSEMBLAGE_VERSION = 1
MAX_STRATEGIES = 10**6


class MubError(ValueError):
    """A basis table failed the mutual-unbiasedness check."""


def _mub_vectors_d4(verbatim: bool = False) -> np.ndarray:
    """Kets of the five d = 4 MUBs as an array ``[x, a, component]``."""
    i = 1j
    rows = [
        [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]],
        [[1, 1, 1, 1], [1, 1, -1, -1], [1, -1, -1, 1], [1, -1, 1, -1]],
        [[1, -1, -i, -i], [1, -1, i, i], [1, 1, i, -i], [1, 1, -i, i]],
        [[1, -i, -i, -1], [1, -i, i, 1], [1, i, i, -1], [1, i, -i, 1]],
        [[1, -i, -1, -i], [1, -i, 1, i], [1, i, -1, i], [1, i, 1, -i]],
    ]
    v = np.array(rows, dtype=complex)
    if verbatim:
        # the widely reprinted table lists this ket with +|4> instead of +i|4>
        v[2, 3] = [1, 1, -i, 1]
    v[1:] /= 2
    return v


@dataclass(frozen=True)
class MeasurementSet:
    """Projectors ``M[x, a]`` (settings x, outcomes a) on a ``dim``-level system."""

    projectors: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.projectors, dtype=complex)
        if p.ndim != 4 or p.shape[2] != p.shape[3]:
            raise ValueError(f"projectors must have shape (n_x, n_a, d, d), got {p.shape}")
        object.__setattr__(self, "projectors", p)

    @property
    def n_settings(self) -> int:
        return self.projectors.shape[0]

    @property
    def n_outcomes(self) -> int:
        return self.projectors.shape[1]

    @property
    def dim(self) -> int:
        return self.projectors.shape[2]

    @classmethod
    def from_kets(cls, kets) -> "MeasurementSet":
        kets = np.asarray(kets, dtype=complex)
        return cls(np.einsum("xai,xaj->xaij", kets, kets.conj()))

    def select(self, settings: Iterable[int]) -> "MeasurementSet":
        """Keep the given settings, numbered from 1."""
        idx = [int(s) - 1 for s in settings]
        if not idx or min(idx) < 0 or max(idx) >= self.n_settings:
            raise ValueError(f"settings must be a non-empty subset of 1..{self.n_settings}")
        return MeasurementSet(self.projectors[idx])

    def in_frame(self, u) -> "MeasurementSet":
        """Rotate every projector by ``u``, so ket |k> of the table becomes column k of ``u``."""
        u = np.asarray(u, dtype=complex)
        return MeasurementSet(u @ self.projectors @ u.conj().T)

    def is_valid(self, tol: float = 1e-10) -> bool:
        eye = np.eye(self.dim)
        complete = np.abs(self.projectors.sum(axis=1) - eye).max() < tol
        p = self.projectors
        idem = np.abs(p @ p - p).max() < tol
        return bool(complete and idem)


def build_mubs_d4(verbatim: bool = False) -> MeasurementSet:
    """The five mutually unbiased bases of C^4 as rank-one projectors.

    ``verbatim=True`` reproduces the misprinted table (one ket is not a valid
    basis vector) and exists only so the checker can be shown to reject it.
    """
    return MeasurementSet.from_kets(_mub_vectors_d4(verbatim))


def pauli_xz() -> MeasurementSet:
    """Qubit measurements of sigma_z then sigma_x."""
    s = 1 / math.sqrt(2)
    return MeasurementSet.from_kets([[[1, 0], [0, 1]], [[s, s], [s, -s]]])


def pauli_xyz() -> MeasurementSet:
    s = 1 / math.sqrt(2)
    return MeasurementSet.from_kets(
        [[[1, 0], [0, 1]], [[s, s], [s, -s]], [[s, 1j * s], [s, -1j * s]]]
    )


@dataclass(frozen=True)
class MubReport:
    orthonormality: float
    completeness: float
    unbiasedness: float
    worst_pair: tuple[int, int, int, int] | None
    tol: float = 1e-10

    @property
    def passed(self) -> bool:
        return max(self.orthonormality, self.completeness, self.unbiasedness) < self.tol

    def lines(self) -> list[str]:
        status = "PASS" if self.passed else "FAIL"
        out = [
            f"orthonormality deviation  {self.orthonormality:.3e}",
            f"completeness deviation    {self.completeness:.3e}",
            f"unbiasedness deviation    {self.unbiasedness:.3e}",
        ]
        if not self.passed and self.worst_pair is not None:
            x, a, y, b = self.worst_pair
            out.append(f"worst pair: phi_{a + 1}|{x + 1} vs phi_{b + 1}|{y + 1}")
        out.append(f"mub check: {status}")
        return out


def verify_mub(meas: MeasurementSet, d: int | None = None, tol: float = 1e-10) -> MubReport:
    """Maximum deviations from orthonormality, completeness and unbiasedness.

    Kets are recovered from the rank-one projectors; overlaps are computed
    from the projectors directly as ``tr(M_a M_b)`` so no phase choice enters.
    """
    d = meas.dim if d is None else d
    p = meas.projectors
    if p.shape[2] != d:
        raise ValueError(f"measurement dimension {p.shape[2]} differs from d = {d}")
    n_x, n_a = p.shape[:2]
    overlap = np.einsum("xaij,ybji->xayb", p, p).real  # |<phi_a|x|phi_b|y>|^2
    ortho = unbiased = 0.0
    worst, worst_dev = None, -1.0
    for x, y in itertools.product(range(n_x), repeat=2):
        block = overlap[x, :, y, :]
        if x == y:
            dev = float(np.abs(block - np.eye(n_a)).max())
            ortho = max(ortho, dev)
        else:
            dev = float(np.abs(block - 1.0 / d).max())
            unbiased = max(unbiased, dev)
        if dev > worst_dev:
            a, b = np.unravel_index(np.argmax(np.abs(block - (np.eye(n_a) if x == y else 1 / d))), block.shape)
            worst, worst_dev = (x, int(a), y, int(b)), dev
    complete = float(np.abs(p.sum(axis=1) - np.eye(d)).max())
    idem = float(np.abs(p @ p - p).max())
    return MubReport(max(ortho, idem), complete, unbiased, worst, tol)


def require_mub(meas: MeasurementSet) -> MeasurementSet:
    report = verify_mub(meas)
    if not report.passed:
        raise MubError("; ".join(report.lines()))
    return meas


@dataclass(frozen=True)
class Assemblage:
    """Subnormalized conditional states ``members[x, a] = p(a|x) rho_{a|x}``."""

    members: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.members, dtype=complex)
        if m.ndim != 4 or m.shape[2] != m.shape[3]:
            raise ValueError(f"members must have shape (n_x, n_a, d, d), got {m.shape}")
        object.__setattr__(self, "members", m)

    @property
    def n_settings(self) -> int:
        return self.members.shape[0]

    @property
    def n_outcomes(self) -> int:
        return self.members.shape[1]

    @property
    def dim(self) -> int:
        return self.members.shape[2]

    @property
    def probabilities(self) -> np.ndarray:
        """``p(a|x)`` as an ``(n_x, n_a)`` array."""
        return np.einsum("xaii->xa", self.members).real

    @property
    def marginal(self) -> np.ndarray:
        """``sum_a sigma_{a|x}`` averaged over x."""
        return self.members.sum(axis=1).mean(axis=0)

    def signaling(self) -> float:
        """Largest Frobenius distance between the outcome-summed states of two settings."""
        sums = self.members.sum(axis=1)
        return max(
            (float(np.linalg.norm(sums[x] - sums[y])) for x in range(len(sums)) for y in range(x)),
            default=0.0,
        )

    def select(self, settings: Iterable[int]) -> "Assemblage":
        """Keep the given settings, numbered from 1."""
        idx = [int(s) - 1 for s in settings]
        if not idx or min(idx) < 0 or max(idx) >= self.n_settings:
            raise ValueError(f"settings must be a non-empty subset of 1..{self.n_settings}")
        return Assemblage(self.members[idx])

    def map(self, channel) -> "Assemblage":
        """Apply ``channel`` (a function on d x d matrices) to every member."""
        n_x, n_a, d, _ = self.members.shape
        flat = [channel(m) for m in self.members.reshape(-1, d, d)]
        return Assemblage(np.array(flat).reshape(n_x, n_a, *np.shape(flat[0])))

    def validate(self, tol: float = 1e-8) -> None:
        """Raise ``ValueError`` unless the assemblage is physical within ``tol``."""
        m = self.members
        if np.abs(m - qmat.dagger(m)).max() > tol:
            raise ValueError("assemblage members are not Hermitian")
        herm = (m + qmat.dagger(m)) / 2
        lo = np.linalg.eigvalsh(herm).min()
        if lo < -tol:
            raise ValueError(f"assemblage member has eigenvalue {lo:.3e}")
        total = self.probabilities.sum(axis=1)
        if np.abs(total - 1).max() > tol:
            raise ValueError(f"outcome probabilities do not sum to one: {total}")
        if self.signaling() > tol:
            raise ValueError(f"assemblage is signaling (deviation {self.signaling():.3e})")

    def to_dict(self) -> dict:
        members = [
            [[[float(z.real), float(z.imag)] for z in m.reshape(-1)] for m in row]
            for row in self.members
        ]
        return {
            "format": ASSEMBLAGE_FORMAT,
            "version": ASSEMBLAGE_VERSION,
            "dimension": self.dim,
            "n_settings": self.n_settings,
            "n_outcomes": self.n_outcomes,
            "members": members,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Assemblage":
        if data.get("format") != ASSEMBLAGE_FORMAT:
            raise ValueError(f"not an assemblage file (format={data.get('format')!r})")
        if data.get("version") != ASSEMBLAGE_VERSION:
            raise ValueError(f"unsupported assemblage version {data.get('version')!r}")
        d, n_x, n_a = (int(data[k]) for k in ("dimension", "n_settings", "n_outcomes"))
        pairs = np.asarray(data["members"], dtype=float)
        if pairs.shape != (n_x, n_a, d * d, 2):
            raise ValueError(
                f"members have shape {pairs.shape}, expected {(n_x, n_a, d * d, 2)}"
            )
        return cls((pairs[..., 0] + 1j * pairs[..., 1]).reshape(n_x, n_a, d, d))


def save_assemblage(asm: Assemblage, path) -> None:
    Path(path).write_text(json.dumps(asm.to_dict(), indent=1) + "\n")


def load_assemblage(path) -> Assemblage:
    return Assemblage.from_dict(json.loads(Path(path).read_text()))


def initial_assemblage(
    rho0,
    meas: MeasurementSet,
    label: SpaceLabel | None = None,
    measured: Sequence[str] | None = None,
) -> Assemblage:
    """Post-measurement states ``(M_{a|x} (x) 1) rho0 (M_{a|x} (x) 1)^+``, weights kept.

    ``measured`` names the subsystems the projectors act on, in the order the
    projectors expect them; by default they act on the whole space.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    if label is None:
        label = SpaceLabel(("system",), (rho0.shape[0],))
        measured = ("system",)
    label.check(rho0)
    measured = tuple(label.names if measured is None else measured)
    mdim = int(np.prod([label.dims[label.index(n)] for n in measured]))
    if meas.dim != mdim:
        raise ValueError(f"measurements act on dimension {meas.dim}, subsystems have {mdim}")
    lifted = np.array(
        [[qmat.embed(p, label, measured) for p in row] for row in meas.projectors]
    )
    members = lifted @ rho0 @ qmat.dagger(lifted)
    return Assemblage(members)


def evolve_assemblage(
    asm0: Assemblage,
    l: dynamics.Liouvillian,
    times: Sequence[float],
    spec: dynamics.ReductionSpec | None = None,
    method: str = "DOP853",
) -> list[Assemblage]:
    """Propagate every member through the channel and reduce it.

    Members are propagated together as one stack. In project mode each time
    slice is renormalized by the surviving population of the unconditioned
    state so the result is again a normalized, non-signaling assemblage.
    """
    n_x, n_a, d, _ = asm0.members.shape
    label = l.label
    states = dynamics.propagate(l, asm0.members.reshape(-1, d, d), times, method=method)
    out = []
    for stack in states:
        if spec is None:
            reduced = stack
        else:
            norm = None
            if spec.mode == "project":
                total = stack.reshape(n_x, n_a, d, d).sum(axis=1).mean(axis=0)
                norm = float(np.trace(dynamics.project(total, spec)).real)
            reduced = np.array([dynamics.reduce(s, label, spec, norm=norm) for s in stack])
        out.append(Assemblage(reduced.reshape(n_x, n_a, *reduced.shape[1:])))
    return out


@dataclass(frozen=True)
class DeterministicStrategySet:
    """All maps ``lambda: x -> a`` in lexicographic order.

    ``outcomes[l, x]`` is the outcome strategy ``l`` assigns to setting ``x``.
    """

    outcomes: np.ndarray
    n_outcomes: int

    @property
    def n_settings(self) -> int:
        return self.outcomes.shape[1]

    def __len__(self) -> int:
        return self.outcomes.shape[0]

    @property
    def table(self) -> np.ndarray:
        """``D[l, x, a]`` in {0, 1}."""
        return (self.outcomes[:, :, None] == np.arange(self.n_outcomes)).astype(float)


def enumerate_strategies(n_x: int, n_a: int) -> DeterministicStrategySet:
    if n_x < 1 or n_a < 1:
        raise ValueError("need at least one setting and one outcome")
    if n_a**n_x > MAX_STRATEGIES:
        raise ValueError(f"{n_a}^{n_x} strategies exceed the limit of {MAX_STRATEGIES}")
    grid = np.array(list(itertools.product(range(n_a), repeat=n_x)), dtype=int)
    return DeterministicStrategySet(grid.reshape(n_a**n_x, n_x), n_a)
