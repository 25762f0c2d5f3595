"""Dense complex linear algebra for small multipartite Hilbert spaces.

Matrices are plain ``numpy`` complex arrays. Subsystem structure is carried
separately by :class:`SpaceLabel`, so the kernels below stay pure functions.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

HERMITIAN_TOL = 1e-12

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class SpaceLabel:
    """Ordered names and dimensions of the tensor factors of a Hilbert space.

    The first factor is the most significant one in the flattened index,
    matching ``numpy.kron`` ordering.
    """

    names: tuple[str, ...]
    dims: tuple[int, ...]

    def __post_init__(self):
        if len(self.names) != len(self.dims):
            raise ValueError("names and dims must have equal length")
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"duplicate subsystem names in {self.names}")
        if any(d < 1 for d in self.dims):
            raise ValueError(f"subsystem dimensions must be positive: {self.dims}")

    @classmethod
    def of(cls, **factors: int) -> "SpaceLabel":
        """Build a label from keyword arguments, e.g. ``SpaceLabel.of(a=2, b=2)``."""
        return cls(tuple(factors), tuple(factors.values()))

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown subsystem {name!r}; have {self.names}") from None

    def sub(self, keep: Iterable[str]) -> "SpaceLabel":
        """Label of the kept subsystems, in their original order."""
        keep = set(keep)
        for name in keep:
            self.index(name)
        pairs = [(n, d) for n, d in zip(self.names, self.dims) if n in keep]
        return SpaceLabel(tuple(n for n, _ in pairs), tuple(d for _, d in pairs))

    def check(self, m: np.ndarray) -> None:
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] != self.dim:
            raise ValueError(
                f"matrix of shape {m.shape} does not match space {self.names}{self.dims}"
            )


def hermitian(m, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Return ``(m + m^dagger)/2`` after checking ``m`` is Hermitian within ``tol``.

    The tolerance is absolute on the largest element-wise deviation.
    """
    m = np.asarray(m, dtype=complex)
    dev = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
    if dev > tol:
        raise ValueError(f"matrix is not Hermitian (max |M - M^dagger| = {dev:.3e})")
    return (m + m.conj().T) / 2


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def kron(*ops) -> np.ndarray:
    """Kronecker product of any number of matrices, left factor most significant."""
    if not ops:
        raise ValueError("kron needs at least one operand")
    return reduce(np.kron, (np.asarray(o, dtype=complex) for o in ops))


def embed(op, label: SpaceLabel, targets: Sequence[str]) -> np.ndarray:
    """Lift ``op`` acting on ``targets`` (in the given order) to the full space."""
    targets = list(targets)
    positions = [label.index(t) for t in targets]
    if len(set(positions)) != len(positions):
        raise ValueError("repeated target subsystem")
    op = np.asarray(op, dtype=complex)
    tdims = [label.dims[p] for p in positions]
    if op.shape != (int(np.prod(tdims)),) * 2:
        raise ValueError(f"operator shape {op.shape} does not fit targets {targets}")
    rest = [i for i in range(len(label.dims)) if i not in positions]
    full = kron(op, np.eye(int(np.prod([label.dims[i] for i in rest])), dtype=complex))
    # full acts on ordering targets + rest; permute back to the label ordering
    order = positions + rest
    n = len(order)
    dims = [label.dims[i] for i in order]
    t = full.reshape(dims + dims)
    inv = np.argsort(order)
    t = t.transpose(list(inv) + [n + i for i in inv])
    return t.reshape(label.dim, label.dim)


def partial_trace(m, label: SpaceLabel, keep: Iterable[str]) -> np.ndarray:
    """Trace out every subsystem of ``label`` not listed in ``keep``."""
    m = np.asarray(m, dtype=complex)
    label.check(m)
    keep = set(keep)
    keep_idx = [label.index(k) for k in keep]
    n = len(label.dims)
    t = m.reshape(label.dims + label.dims)
    # contract traced subsystems pairwise, highest index first so axes stay valid
    for i in sorted(set(range(n)) - set(keep_idx), reverse=True):
        nleft = t.ndim // 2
        t = np.trace(t, axis1=i, axis2=nleft + i)
    d = int(np.prod([label.dims[i] for i in sorted(keep_idx)]))
    return t.reshape(d, d)


def partial_transpose(m, label: SpaceLabel, transposed: str | Iterable[str]) -> np.ndarray:
    """Transpose the named factor(s) only."""
    m = np.asarray(m, dtype=complex)
    label.check(m)
    names = [transposed] if isinstance(transposed, str) else list(transposed)
    n = len(label.dims)
    axes = list(range(2 * n))
    for name in names:
        i = label.index(name)
        axes[i], axes[n + i] = axes[n + i], axes[i]
    t = m.reshape(label.dims + label.dims).transpose(axes)
    return t.reshape(label.dim, label.dim)


def hermitian_eigenvalues(m, vectors: bool = False, tol: float = 1e-10):
    """Ascending real spectrum of a Hermitian matrix.

    ``tol`` is relative to the largest entry of ``m``; inputs further from
    Hermitian than that raise ``ValueError``.
    """
    m = np.asarray(m, dtype=complex)
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    m = hermitian(m, tol=tol * scale)
    if vectors:
        return np.linalg.eigh(m)
    return np.linalg.eigvalsh(m)


def expm(m) -> np.ndarray:
    """Matrix exponential of a general square matrix (Pade scaling and squaring)."""
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expm needs a square matrix, got shape {m.shape}")
    return scipy.linalg.expm(m)


def ket(index: int, dim: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def projector(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex).reshape(-1)
    return np.outer(v, v.conj())


def fidelity_pure(rho: np.ndarray, psi) -> float:
    """<psi| rho |psi> for a normalized ket ``psi``."""
    psi = np.asarray(psi, dtype=complex)
    return float(np.real(psi.conj() @ rho @ psi))


def is_density_matrix(rho, tol: float = 1e-8) -> bool:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        return False
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        return False
    if abs(np.trace(rho) - 1) > tol:
        return False
    return np.linalg.eigvalsh((rho + rho.conj().T) / 2)[0] >= -tol


def clip_psd(rho, floor: float = 1e-8) -> np.ndarray:
    """Symmetrize, zero eigenvalues in ``[-floor, 0)`` and restore the trace.

    Eigenvalues below ``-floor`` are left untouched so real violations surface.
    """
    rho = np.asarray(rho, dtype=complex)
    rho = (rho + rho.conj().T) / 2
    w, v = np.linalg.eigh(rho)
    if w[0] >= 0:
        return rho
    tr = np.trace(rho).real
    w = np.where((w < 0) & (w >= -floor), 0.0, w)
    out = (v * w) @ v.conj().T
    new_tr = np.trace(out).real
    if new_tr > 0 and tr > 0:
        out *= tr / new_tr
    return (out + out.conj().T) / 2
