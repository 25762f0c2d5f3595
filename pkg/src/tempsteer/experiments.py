"""Configured sweeps: measure, evolve, reduce, then TSR and negativity per grid point.

A run writes ``tsr.csv``, ``negativity.csv`` and ``probabilities.csv`` plus a
``manifest.json`` holding the fully resolved configuration, per-curve solver
statistics, vanish times and library versions. CSV content depends only on
the configuration, so identical configurations give byte-identical files.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import os
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__, dynamics, measures, qmat, steering, tsr

MODELS = ("coupled-qubits", "radical-pair", "simplified-rp")
UNITS = {"coupled-qubits": ("1/gamma",), "radical-pair": ("us", "s"), "simplified-rp": ("us", "s")}
FRAMES = ("singlet-triplet", "product")
# hyperfine tensor diagonals in units of a_z
TENSORS = {"a": (0.0, 0.0, 1.0), "b": (0.5, 0.5, 1.0)}
VANISH_THRESHOLD = 1e-6


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field or line."""


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep. Every field is also a command-line flag of the same name.

    ``None`` fields take model-dependent defaults in :meth:`resolved`.
    Time grids are ``linspace(start, stop, points)`` in ``unit``.
    """

    model: str = "coupled-qubits"
    settings: tuple[tuple[int, ...], ...] = ((1, 2),)
    start: float = 0.0
    stop: float | None = None
    points: int = 50
    unit: str | None = None
    reduction: str = "trace-out"
    frame: str = "singlet-triplet"
    method: str = "DOP853"
    g: float = 1.0
    gamma: tuple[float, ...] = (1.0,)
    theta: tuple[float, ...] = (0.0, math.pi / 4, math.pi / 2)
    phi: float = 0.0
    b0: float = dynamics.EARTH_FIELD
    tensor: tuple[str, ...] = ("a",)
    a_z: float = 1e5
    kappa: float = 1e4
    gamma_dephasing: float = 1e3
    weight: tuple[float, ...] = (0.0, 0.25, 0.4, 0.5, 1.0)
    max_iters: int = 200
    gap_tol: float = 1e-8
    feas_tol: float = 1e-9
    workers: int | None = None
    output: str = "runs/out"

    def resolved(self) -> "ExperimentConfig":
        if self.model not in MODELS:
            raise ConfigError(f"field 'model': {self.model!r} is not one of {MODELS}")
        unit = self.unit or UNITS[self.model][0]
        if self.stop is None:
            stop = {"coupled-qubits": 20.0, "radical-pair": 100.0}.get(
                self.model, 10 * math.pi / self.a_z * (1e6 if unit == "us" else 1.0)
            )
            if self.model == "radical-pair" and unit == "s":
                stop = 100e-6
        else:
            stop = self.stop
        cfg = dataclasses.replace(self, unit=unit, stop=float(stop))
        cfg.validate()
        return cfg

    def validate(self) -> None:
        def bad(name, why):
            raise ConfigError(f"field '{name}': {why}")

        if self.unit not in UNITS[self.model]:
            bad("unit", f"{self.unit!r} not allowed for {self.model}; use one of {UNITS[self.model]}")
        if self.points < 2:
            bad("points", "need at least 2 grid points")
        if not self.stop > self.start or self.start < 0:
            bad("stop", "time grid must satisfy 0 <= start < stop")
        if not self.settings:
            bad("settings", "need at least one settings list")
        for s in self.settings:
            if not s or len(set(s)) != len(s) or not set(s) <= {1, 2, 3, 4, 5}:
                bad("settings", f"{list(s)} must be distinct basis indices from 1..5")
        if self.reduction not in ("trace-out", "project"):
            bad("reduction", "use 'trace-out' or 'project'")
        if self.frame not in FRAMES:
            bad("frame", f"use one of {FRAMES}")
        if self.method not in ("DOP853", "RK45", "expm"):
            bad("method", "use 'DOP853', 'RK45' or 'expm'")
        if self.model == "coupled-qubits" and (not self.gamma or min(self.gamma) <= 0):
            bad("gamma", "times are in units of 1/gamma, so every gamma must be positive")
        if any(t not in TENSORS for t in self.tensor):
            bad("tensor", f"use names from {sorted(TENSORS)}")
        if any(not 0 <= th <= math.pi / 2 + 1e-12 for th in self.theta):
            bad("theta", "angles must lie in [0, pi/2]")
        if any(not 0 <= a <= 1 for a in self.weight):
            bad("weight", "nuclear weights must lie in [0, 1]")
        if self.max_iters < 1:
            bad("max_iters", "must be positive")
        if self.workers is not None and self.workers < 1:
            bad("workers", "must be positive")

    def solver_options(self) -> tsr.SolverOptions:
        return tsr.SolverOptions(max_iters=self.max_iters, gap_tol=self.gap_tol, feas_tol=self.feas_tol)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["settings"] = [list(s) for s in self.settings]
        for k in ("gamma", "theta", "tensor", "weight"):
            d[k] = list(d[k])
        return d


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _coerce(name: str, value):
    """Convert a JSON or command-line value to the field's type."""
    typ = str(_FIELDS[name].type)
    try:
        if value is None:
            if "None" not in typ:
                raise TypeError("may not be null")
            return None
        if name == "settings":
            out = []
            for s in value:
                if isinstance(s, str):
                    s = [int(v) for v in s.split(",") if v.strip()]
                out.append(tuple(int(v) for v in s))
            return tuple(out)
        if typ.startswith("tuple"):
            if isinstance(value, (str, int, float)):
                value = [value]
            conv = str if "str" in typ else float
            return tuple(conv(v) for v in value)
        if "int" in typ:
            if isinstance(value, float) and not value.is_integer():
                raise TypeError("must be an integer")
            return int(value)
        if "float" in typ:
            return float(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field '{name}': {exc}") from None


def config_from_mapping(data: dict, base: ExperimentConfig | None = None) -> ExperimentConfig:
    unknown = sorted(set(data) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown field(s) {unknown}; valid fields are {sorted(_FIELDS)}")
    values = {k: _coerce(k, v) for k, v in data.items()}
    return dataclasses.replace(base or ExperimentConfig(), **values)


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Read a JSON config; ``overrides`` (e.g. from flags) replace its keys."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    cfg = config_from_mapping(data)
    return config_from_mapping(overrides or {}, cfg)


@dataclass
class Curve:
    """Results along one time grid for one parameter combination."""

    name: str
    params: dict
    times: np.ndarray
    tsr: np.ndarray
    negativity: np.ndarray
    probabilities: np.ndarray  # (points, n_x, n_a)
    solver: list = field(default_factory=list)

    def vanish_time(self) -> dict:
        return vanish_time(self.times, self.tsr)


def vanish_time(times, values, threshold: float = VANISH_THRESHOLD) -> dict:
    """First grid time with value below ``threshold`` and the interval bracketing the crossing."""
    times = np.asarray(times, dtype=float)
    below = np.nonzero(np.asarray(values) < threshold)[0]
    if below.size == 0:
        return {"time": None, "bracket": None}
    k = int(below[0])
    lo = times[k - 1] if k > 0 else times[k]
    return {"time": float(times[k]), "bracket": [float(lo), float(times[k])]}


def _solve_point(args):
    members, opts = args
    asm = steering.Assemblage(members)
    try:
        value, sol = tsr.tsr_solution(asm, opts)
        status = sol.status
    except tsr.SdpError as exc:
        value, sol, status = math.nan, exc.solution, "failed: " + str(exc)
    stats = {"status": status}
    if sol is not None:
        stats.update(iterations=sol.iterations, gap=sol.gap, dual_value=sol.dual_value)
    return value, stats


def _map(fn, items, workers):
    if workers == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def _grid(cfg: ExperimentConfig) -> np.ndarray:
    return np.linspace(cfg.start, cfg.stop, cfg.points)


def _seconds(cfg: ExperimentConfig, grid):
    return grid * (1e-6 if cfg.unit == "us" else 1.0)


def _electron_measurements(cfg, settings):
    meas = steering.require_mub(steering.build_mubs_d4())
    if cfg.frame == "singlet-triplet":
        meas = meas.in_frame(dynamics.singlet_triplet_basis())
    return meas.select(settings)


def _pair_negativity(state):
    lab = qmat.SpaceLabel(("first", "second"), (2, 2))
    return measures.negativity(state / np.trace(state).real, lab, "second")


def _curve_states(cfg: ExperimentConfig, combo: dict):
    """Assemblages and unconditioned two-party states along the grid."""
    grid = _grid(cfg)
    settings = combo["settings"]
    if cfg.model == "coupled-qubits":
        gamma = combo["gamma"]
        l = dynamics.build_coupled_qubit_liouvillian(dynamics.CoupledQubitParams(cfg.g, gamma))
        meas = steering.build_mubs_d4().select(settings)
        asm0 = steering.initial_assemblage(np.eye(4) / 4, meas)
        return steering.evolve_assemblage(asm0, l, grid / gamma, None, cfg.method)
    if cfg.model == "radical-pair":
        hyper = tuple(cfg.a_z * c for c in TENSORS[combo["tensor"]])
        p = dynamics.RadicalPairParams(
            b0=cfg.b0, theta=combo["theta"], phi=cfg.phi, hyperfine=hyper,
            kappa=cfg.kappa, gamma_dephasing=cfg.gamma_dephasing,
        )
        l = dynamics.build_radical_pair_liouvillian(p)
        rho0 = np.kron(np.eye(8) / 8, qmat.projector(qmat.ket(0, 4)))
        asm0 = steering.initial_assemblage(
            rho0, _electron_measurements(cfg, settings), dynamics.RADICAL_PAIR_LABEL, dynamics.ELECTRONS
        )
        spec = dynamics.radical_pair_reduction(cfg.reduction)
        return steering.evolve_assemblage(asm0, l, _seconds(cfg, grid), spec, cfg.method)
    p = measures.SimplifiedRpParams(combo["weight"], cfg.a_z)
    asm0 = steering.initial_assemblage(np.eye(4) / 4, _electron_measurements(cfg, settings))
    return [asm0.map(measures.simplified_rp_channel(p, t)) for t in _seconds(cfg, grid)]


def curve_combinations(cfg: ExperimentConfig) -> list[dict]:
    if cfg.model == "coupled-qubits":
        outer = [{"gamma": g} for g in cfg.gamma]
    elif cfg.model == "radical-pair":
        outer = [{"tensor": t, "theta": th} for t in cfg.tensor for th in cfg.theta]
    else:
        outer = [{"weight": a} for a in cfg.weight]
    return [dict(o, settings=list(s)) for o in outer for s in cfg.settings]


def curve_name(combo: dict) -> str:
    parts = []
    for k, v in combo.items():
        if k == "settings":
            parts.append("n=" + "".join(str(s) for s in v))
        elif isinstance(v, float):
            parts.append(f"{k}={v:.6g}")
        else:
            parts.append(f"{k}={v}")
    return " ".join(parts)


def compute_curves(cfg: ExperimentConfig) -> list[Curve]:
    cfg = cfg.resolved()
    workers = cfg.workers or os.cpu_count() or 1
    opts = cfg.solver_options()
    grid = _grid(cfg)
    curves, jobs = [], []
    for combo in curve_combinations(cfg):
        asms = _curve_states(cfg, combo)
        total = [a.members[0].sum(axis=0) for a in asms]
        if cfg.model == "simplified-rp":
            p = measures.SimplifiedRpParams(combo["weight"], cfg.a_z)
            neg = [measures.electron_negativity(measures.simplified_rp_state(p, t))
                   for t in _seconds(cfg, grid)]
        else:
            neg = [_pair_negativity(s) for s in total]
        curves.append(Curve(
            curve_name(combo), combo, grid, np.zeros(len(grid)), np.array(neg),
            np.array([a.probabilities for a in asms]),
        ))
        jobs.extend((a.members, opts) for a in asms)
    results = _map(_solve_point, jobs, workers)
    for i, c in enumerate(curves):
        chunk = results[i * len(grid):(i + 1) * len(grid)]
        c.tsr = np.array([v for v, _ in chunk])
        c.solver = [s for _, s in chunk]
    return curves


def _fmt(v: float) -> str:
    return repr(float(v))


def _wide_csv(cfg, curves, attr) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow([f"time [{cfg.unit}]"] + [c.name for c in curves])
    for k, t in enumerate(curves[0].times):
        w.writerow([_fmt(t)] + [_fmt(getattr(c, attr)[k]) for c in curves])
    return buf.getvalue()


def _probability_csv(cfg, curves) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["curve", f"time [{cfg.unit}]", "setting", "outcome", "probability"])
    for c in curves:
        settings = c.params["settings"]
        for k, t in enumerate(c.times):
            for x, s in enumerate(settings):
                for a, p in enumerate(c.probabilities[k, x]):
                    w.writerow([c.name, _fmt(t), s, a + 1, _fmt(p)])
    return buf.getvalue()


def versions() -> dict:
    return {
        "tempsteer": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": sys.version.split()[0],
        "platform": platform.platform(),
    }


@dataclass
class RunResult:
    config: ExperimentConfig
    curves: list[Curve]
    directory: Path

    @property
    def failures(self) -> int:
        return sum(1 for c in self.curves for s in c.solver if s["status"] != tsr.OPTIMAL)


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    """Compute every curve of ``cfg`` and write CSVs and the manifest to ``cfg.output``.

    Solver failures leave NaN in ``tsr.csv`` and are listed in the manifest;
    the sweep itself continues.
    """
    cfg = cfg.resolved()
    curves = compute_curves(cfg)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "tsr.csv": _wide_csv(cfg, curves, "tsr"),
        "negativity.csv": _wide_csv(cfg, curves, "negativity"),
        "probabilities.csv": _probability_csv(cfg, curves),
    }
    for name, text in files.items():
        with open(out / name, "w", newline="") as fh:
            fh.write(text)
    manifest = {
        "config": cfg.to_dict(),
        "time_unit": cfg.unit,
        "versions": versions(),
        "files": sorted(files),
        "curves": [
            {
                "name": c.name,
                "params": c.params,
                "vanish_time": dict(c.vanish_time(), unit=cfg.unit, threshold=VANISH_THRESHOLD),
                "nonmonotonicity": measures.nonmonotonicity(np.nan_to_num(c.tsr)),
                "largest_rise": measures.largest_rise(np.nan_to_num(c.tsr)),
                "failures": [
                    {"time": float(t), **s}
                    for t, s in zip(c.times, c.solver) if s["status"] != tsr.OPTIMAL
                ],
                "max_iterations": max(s.get("iterations", 0) for s in c.solver),
                "max_gap": max(s.get("gap", math.nan) for s in c.solver),
            }
            for c in curves
        ],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    return RunResult(cfg, curves, out)


@dataclass
class Check:
    name: str
    passed: bool
    detail: str
    numerical: bool = False

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def check_suite(corrupt_mub: bool = False, max_iters: int = 200) -> list[Check]:
    """MUB verification, solver self-tests and invariant spot checks."""
    checks = []
    mubs = steering.build_mubs_d4(verbatim=corrupt_mub)
    rep = steering.verify_mub(mubs)
    checks.append(Check("verify_mub", rep.passed, rep.lines()[-1]))
    opts = tsr.SolverOptions(max_iters=max_iters)
    cases = [
        ("pauli-xz on I/2", steering.initial_assemblage(np.eye(2) / 2, steering.pauli_xz()), 3 - 2 * math.sqrt(2)),
        ("single setting", steering.initial_assemblage(np.eye(4) / 4, mubs.select([1])), 0.0),
        ("mub n=2 on I/4", steering.initial_assemblage(np.eye(4) / 4, mubs.select([1, 2])), 1 / 3),
        ("mub n=3 on I/4", steering.initial_assemblage(np.eye(4) / 4, mubs.select([1, 2, 3])), 0.5),
    ]
    for label, asm, expected in cases:
        problem = tsr.assemble_problem(asm)
        sol = tsr.solve(problem, opts)
        ok = sol.optimal and sol.gap < 1e-7
        checks.append(Check(f"duality-gap [{label}]", ok, f"status {sol.status}, gap {sol.gap:.2e}", True))
        value = max(sol.primal_value, 0.0)
        checks.append(Check(f"tsr-value [{label}]", ok and abs(value - expected) < 1e-6,
                            f"{value:.9f} vs {expected:.9f}", True))
        cert = tsr.dual_certificate_check(sol, problem)
        checks.append(Check(f"dual-certificate [{label}]", cert.passed,
                            f"dual {cert.dual_value:.9f}, residual {cert.feasibility_residual:.1e}", True))
    l = dynamics.build_coupled_qubit_liouvillian(dynamics.CoupledQubitParams(1.0, 1.0))
    rho = dynamics.propagate(l, np.eye(4) / 4, [0.0, 1.0])[-1]
    exact = dynamics.exact_evolution(l, np.eye(4) / 4, 1.0)
    err = float(np.linalg.norm(rho - exact))
    checks.append(Check("propagate-vs-expm", err < 1e-7, f"frobenius error {err:.1e}", True))
    checks.append(Check("trace-preservation", abs(np.trace(rho).real - 1) < 1e-9,
                        f"trace {np.trace(rho).real:.12f}", True))
    singlet = qmat.projector(dynamics.electron_pair_states()["s"])
    n = _pair_negativity(singlet)
    checks.append(Check("singlet-negativity", abs(n - 0.5) < 1e-12, f"{n:.12f}"))
    return checks
