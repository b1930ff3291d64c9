"""Four explicit first-order saddle-point methods behind one stepper.

All methods evaluate the saddle operator F(z) = (grad_x f, -grad_y f) at
pre-step state only:

    gda   z' = z - eta F(z)
    eg    z_half = z - eta F(z);  z' = z - eta F(z_half)      (2 evals/step)
    ogda  z' = z - 2 eta F(z) + eta F_prev;  F_prev' = F(z)
    dgda  z' = z - eta F(z) - rho (z - zhat)
          zhat' = zhat - rho (zhat - z)                        (fully parallel)

dgda carries an auxiliary damped anchor state zhat (initialized at z0) that
dissipates the rotational energy which makes plain gda diverge on bilinear
couplings; with rho = 0 its z-track reduces bitwise to gda.

The run loop produces a Trace with per-iteration squared saddle distance,
a Lyapunov value (saddle distance of the full state, anchor included for
dgda), and cumulative gradient-evaluation counts.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from pathlib import Path

import numpy as np

from . import problems

GDA, EG, OGDA, DGDA = "gda", "eg", "ogda", "dgda"
METHODS = (GDA, EG, OGDA, DGDA)

CONVERGED, MAX_ITERS, DIVERGED = "Converged", "MaxIters", "Diverged"


class ConfigError(ValueError):
    """Solver configuration rejected before any iteration."""


@dataclasses.dataclass
class SolverConfig:
    method: str
    eta: float
    rho: float = 0.0  # damping, used by dgda only
    max_iters: int = 5000
    stop_dist_sq: float = 1e-20
    divergence_factor: float = 1e12
    known_divergent: bool = False  # set by default_config for gda on bilinear

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}, expected one of {METHODS}")
        if not (self.eta > 0.0 and np.isfinite(self.eta)):
            raise ConfigError(f"eta must be a positive finite number, got {self.eta}")
        if self.rho < 0.0:
            raise ConfigError(f"rho must be non-negative, got {self.rho}")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.stop_dist_sq < 0.0:
            raise ConfigError(f"stop_dist_sq must be >= 0, got {self.stop_dist_sq}")
        if self.divergence_factor <= 0.0:
            raise ConfigError(f"divergence_factor must be > 0, got {self.divergence_factor}")


@dataclasses.dataclass
class SolverState:
    z: np.ndarray
    z_hat: np.ndarray | None = None  # dgda anchor
    prev_grad: np.ndarray | None = None  # ogda memory, filled on first step
    grad_evals: int = 0


def init_state(method: str, z0) -> SolverState:
    z0 = np.array(z0, dtype=float)
    if method == DGDA:
        return SolverState(z=z0, z_hat=z0.copy())
    return SolverState(z=z0)


def gda_step(p: problems.ProblemInstance, state: SolverState, eta: float) -> SolverState:
    g = problems.grad(p, state.z)
    state.z = state.z - eta * g
    state.grad_evals += 1
    return state


def eg_step(p: problems.ProblemInstance, state: SolverState, eta: float) -> SolverState:
    z = state.z
    z_half = z - eta * problems.grad(p, z)
    state.z = z - eta * problems.grad(p, z_half)
    state.grad_evals += 2
    return state


def ogda_step(p: problems.ProblemInstance, state: SolverState, eta: float) -> SolverState:
    g = problems.grad(p, state.z)
    if state.prev_grad is None:
        # no history yet: count the bootstrap evaluation and reuse the
        # current gradient, which makes the first step a plain gda step
        state.prev_grad = g
        state.grad_evals += 1
    state.z = state.z - 2.0 * eta * g + eta * state.prev_grad
    state.prev_grad = g
    state.grad_evals += 1
    return state


def dgda_step(
    p: problems.ProblemInstance, state: SolverState, eta: float, rho: float
) -> SolverState:
    # both updates read the same pre-step (z, zhat): fully parallel
    z, zh = state.z, state.z_hat
    g = problems.grad(p, z)
    state.z = z - eta * g - rho * (z - zh)
    state.z_hat = zh - rho * (zh - z)
    state.grad_evals += 1
    return state


def step(p: problems.ProblemInstance, state: SolverState, cfg: SolverConfig) -> SolverState:
    if cfg.method == GDA:
        return gda_step(p, state, cfg.eta)
    if cfg.method == EG:
        return eg_step(p, state, cfg.eta)
    if cfg.method == OGDA:
        return ogda_step(p, state, cfg.eta)
    return dgda_step(p, state, cfg.eta, cfg.rho)


@dataclasses.dataclass
class TraceRecord:
    k: int
    grad_evals: int
    dist_sq: float
    lyapunov: float


@dataclasses.dataclass
class Trace:
    records: list[TraceRecord]
    verdict: str
    metadata: dict


def _lyapunov(p: problems.ProblemInstance, cfg: SolverConfig, state: SolverState,
              dist_sq: float) -> float:
    if cfg.method == DGDA:
        return dist_sq + problems.saddle_distance_sq(p, state.z_hat)
    return dist_sq


def run(
    p: problems.ProblemInstance,
    cfg: SolverConfig,
    z0,
    record_stride: int = 1,
    seed: int | None = None,
) -> Trace:
    """Iterate until stop_dist_sq, max_iters, or divergence.

    Records every record_stride-th iteration plus the final one.  The stop
    check runs before stepping, so a saddle start converges at k = 0.  A
    squared distance exceeding divergence_factor * dist_sq(z0) -- or a
    non-finite iterate -- yields the Diverged verdict.
    """
    cfg.validate()
    if record_stride < 1:
        raise ConfigError(f"record_stride must be >= 1, got {record_stride}")
    state = init_state(cfg.method, z0)
    records: list[TraceRecord] = []

    def record(k: int, dist_sq: float) -> None:
        records.append(
            TraceRecord(k, state.grad_evals, dist_sq, _lyapunov(p, cfg, state, dist_sq))
        )

    d0 = problems.saddle_distance_sq(p, state.z)
    d = d0
    k = 0
    record(0, d0)
    verdict = None
    if d0 <= cfg.stop_dist_sq:
        verdict = CONVERGED
    while verdict is None and k < cfg.max_iters:
        step(p, state, cfg)
        k += 1
        d = problems.saddle_distance_sq(p, state.z)
        if not np.isfinite(d):
            verdict = DIVERGED
        elif d <= cfg.stop_dist_sq:
            verdict = CONVERGED
        elif d > cfg.divergence_factor * d0:
            verdict = DIVERGED
        if k % record_stride == 0 or verdict is not None:
            record(k, d)
    if verdict is None:
        verdict = MAX_ITERS
        if records[-1].k != k:
            record(k, d)

    metadata = {
        "problem_digest": problems.problem_digest(p),
        "method": cfg.method,
        "eta": cfg.eta,
        "rho": cfg.rho if cfg.method == DGDA else None,
        "seed": seed,
        "verdict": verdict,
    }
    return Trace(records=records, verdict=verdict, metadata=metadata)


def default_config(method: str, p: problems.ProblemInstance) -> SolverConfig:
    """Theory-backed step sizes per method and problem family.

    bilinear (sm = sigma_max(A)): dgda rho=1/2, eta=1/sm; eg/ogda eta=1/(4 sm);
    gda eta=1/sm, flagged known-divergent (rotational modes only grow).
    SCSC: dgda rho=1/2, eta=1/(L+mu); eg/ogda eta=1/(4 L); gda eta=mu/L^2.
    """
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}, expected one of {METHODS}")
    if p.kind == problems.KIND_BILINEAR:
        sm = p.payload.sigma_max
        iters = 5000
        if method == DGDA:
            return SolverConfig(DGDA, eta=1.0 / sm, rho=0.5, max_iters=iters)
        if method == GDA:
            return SolverConfig(GDA, eta=1.0 / sm, max_iters=iters, known_divergent=True)
        return SolverConfig(method, eta=1.0 / (4.0 * sm), max_iters=iters)
    big_l, mu = p.payload.L, p.payload.mu
    iters = 20000
    if method == DGDA:
        return SolverConfig(DGDA, eta=1.0 / (big_l + mu), rho=0.5, max_iters=iters)
    if method == GDA:
        return SolverConfig(GDA, eta=mu / big_l**2, max_iters=iters)
    return SolverConfig(method, eta=1.0 / (4.0 * big_l), max_iters=iters)


# ---------------------------------------------------------------------------
# trace persistence
# ---------------------------------------------------------------------------

TRACE_HEADER = ["k", "grad_evals", "dist_sq", "lyapunov"]


def trace_metadata_path(csv_path) -> Path:
    csv_path = Path(csv_path)
    if csv_path.suffix == ".csv":
        return csv_path.with_suffix(".json")
    return csv_path.with_name(csv_path.name + ".json")


def write_trace_csv(trace: Trace, path) -> Path:
    """Write the trace CSV plus its sibling metadata JSON; returns the latter."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for r in trace.records:
            w.writerow([r.k, r.grad_evals, repr(r.dist_sq), repr(r.lyapunov)])
    meta_path = trace_metadata_path(path)
    with open(meta_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(trace.metadata, sort_keys=True, indent=2) + "\n")
    return meta_path


def read_trace_csv(path) -> Trace:
    """Load a trace CSV (and sibling metadata, when present)."""
    records = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TRACE_HEADER:
            raise ValueError(f"{path}: unexpected trace header {header}")
        for row in reader:
            records.append(
                TraceRecord(int(row[0]), int(row[1]), float(row[2]), float(row[3]))
            )
    metadata: dict = {}
    meta_path = trace_metadata_path(path)
    if meta_path.exists():
        with open(meta_path, "r", encoding="utf-8") as fh:
            metadata = json.load(fh)
    return Trace(records=records, verdict=metadata.get("verdict", ""), metadata=metadata)
