"""Negativity, the closed-form hyperfine-only radical pair, and nonmonotonicity of time series."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import qmat
from .dynamics import SPIN_LABEL, electron_pair_states
from .qmat import SIGMA_Z, SpaceLabel


@dataclass(frozen=True)
class TimeSeries:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).reshape(-1)
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if t.shape != v.shape:
            raise ValueError(f"{t.size} times but {v.size} values")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly ascending")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.times.size

    def to_csv(self, header=("time", "value")) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for t, v in zip(self.times, self.values):
            w.writerow([repr(float(t)), repr(float(v))])
        return buf.getvalue()

    def amplitude(self) -> float:
        return float(self.values.max() - self.values.min())


def negativity(rho, label: SpaceLabel, party: str) -> float:
    """``(||rho^{T_party}||_1 - tr rho) / 2``: the singlet has negativity 1/2."""
    pt = qmat.partial_transpose(rho, label, party)
    w = qmat.hermitian_eigenvalues(pt)
    return float(-w[w < 0].sum())


def nonmonotonicity(series: TimeSeries | np.ndarray) -> float:
    """Sum of all rises between consecutive samples; zero iff nonincreasing."""
    values = series.values if isinstance(series, TimeSeries) else np.asarray(series, dtype=float)
    if values.size < 2:
        raise ValueError("need at least two samples")
    return float(np.clip(np.diff(values), 0, None).sum())


def largest_rise(series: TimeSeries | np.ndarray) -> float:
    values = series.values if isinstance(series, TimeSeries) else np.asarray(series, dtype=float)
    return float(max(0.0, np.diff(values).max()))


@dataclass(frozen=True)
class SimplifiedRpParams:
    """Nuclear polarization weight ``a`` (probability of spin up) and hyperfine ``a_z``."""

    a: float
    a_z: float = 1e5

    def __post_init__(self):
        if not 0 <= self.a <= 1:
            raise ValueError("nuclear weight a must lie in [0, 1]")


def _electron1_rotation(a_z: float, t: float) -> np.ndarray:
    return qmat.expm(1j * a_z * t * qmat.kron(SIGMA_Z, np.eye(2)))


def simplified_rp_state(p: SimplifiedRpParams, t: float) -> np.ndarray:
    """Electron pair (x) nucleus at time ``t``, starting from singlet (x) mixed nucleus.

    Nuclear spin up rotates electron 1 by ``exp(+i a_z sigma_z t)``, spin down
    by the inverse rotation; the nucleus itself does not evolve. This is
    ``exp(-iHt)`` of the field-free, decay-free full model with hyperfine
    tensor ``diag(0, 0, -a_z)``.
    """
    singlet = qmat.projector(electron_pair_states()["s"])
    u = _electron1_rotation(p.a_z, t)
    up = qmat.projector(qmat.ket(0, 2))
    down = qmat.projector(qmat.ket(1, 2))
    rho1 = u @ singlet @ u.conj().T
    rho2 = u.conj().T @ singlet @ u
    return p.a * np.kron(rho1, up) + (1 - p.a) * np.kron(rho2, down)


def simplified_rp_channel(p: SimplifiedRpParams, t: float) -> Callable[[np.ndarray], np.ndarray]:
    """Two-electron map ``X -> Tr_nucleus[U (X (x) rho_nu) U^+]`` of the same model."""
    u = _electron1_rotation(p.a_z, t)
    ud = u.conj().T

    def channel(x):
        return p.a * (u @ x @ ud) + (1 - p.a) * (ud @ x @ u)

    return channel


def electron_negativity(rho, label: SpaceLabel = SPIN_LABEL) -> float:
    """Negativity between the two electrons after tracing out everything else."""
    pair = qmat.partial_trace(rho, label, ("electron1", "electron2"))
    return negativity(pair, SpaceLabel(("electron1", "electron2"), (2, 2)), "electron2")


def nucleus_electron_negativity(rho, electron: str = "electron1", label: SpaceLabel = SPIN_LABEL) -> float:
    """Negativity between the nucleus and one electron, the other electron traced out."""
    sub = label.sub({"nucleus", electron})
    reduced = qmat.partial_trace(rho, label, sub.names)
    return negativity(reduced, sub, "nucleus")
