"""Test-problem families with exactly controlled conditioning.

Two families, both with a known saddle point (the ``shift`` vector, origin
by default):

* bilinear couplings  f(x, y) = (x - s_x)' A (y - s_y)  with A full rank and
  condition number kappa = sigma_max(A)^2 / sigma_min(A)^2 pinned exactly;
* strongly convex-strongly concave (SCSC) quadratics
  f(x, y) = 1/2 (x-s_x)' Aq (x-s_x) - 1/2 (y-s_y)' Bq (y-s_y)
            + (x-s_x)' C (y-s_y)
  with mu = 1 exactly and the coupling block scaled so the saddle operator's
  largest singular value L hits the requested kappa = L / mu.

The saddle (gradient) operator in both cases is F(z) = Mf (z - shift) where
Mf is skew for the bilinear family and mu-strongly-monotone / L-Lipschitz
for the SCSC family.
"""

from __future__ import annotations

import dataclasses
import functools
import hashlib
import json

import numpy as np

from .numerics import SeededRng, random_orthogonal, singular_values

KIND_BILINEAR = "bilinear"
KIND_SCSC = "scsc"

# gen_scsc targets sigma_max(Mfull) = kappa to this relative tolerance
_KAPPA_RTOL = 1e-9


class GenerationError(RuntimeError):
    """Instance construction failed; retry with a new seed."""


class ProblemFormatError(ValueError):
    """Problem file is not parseable."""


class ProblemValidationError(ValueError):
    """Problem file parsed but violates an invariant."""


@dataclasses.dataclass(frozen=True, eq=False)
class BilinearProblem:
    A: np.ndarray  # n x m coupling, full column rank (m <= n)
    shift: np.ndarray  # saddle location, length n + m
    sigma_max: float
    sigma_min: float
    kappa: float  # sigma_max^2 / sigma_min^2

    @functools.cached_property
    def range_basis(self) -> np.ndarray:
        """Orthonormal basis of range(A), used for saddle-set distances."""
        u, _, _ = np.linalg.svd(self.A, full_matrices=False)
        return u


@dataclasses.dataclass(frozen=True, eq=False)
class QuadraticSCSCProblem:
    Aq: np.ndarray  # n x n symmetric positive definite
    Bq: np.ndarray  # m x m symmetric positive definite
    C: np.ndarray  # n x m coupling
    shift: np.ndarray
    mu: float
    L: float
    kappa: float  # L / mu


@dataclasses.dataclass(frozen=True, eq=False)
class ProblemInstance:
    kind: str
    payload: BilinearProblem | QuadraticSCSCProblem
    n: int
    m: int
    seed: int
    kappa_target: float
    rng_algorithm: str = SeededRng.algorithm_id

    @property
    def saddle(self) -> np.ndarray:
        return self.payload.shift

    @property
    def kappa(self) -> float:
        return self.payload.kappa


def operator_matrix(p: ProblemInstance) -> np.ndarray:
    """The (n+m) x (n+m) matrix Mf with F(z) = Mf (z - shift)."""
    if p.kind == KIND_BILINEAR:
        a = p.payload.A
        zxx = np.zeros((p.n, p.n))
        zyy = np.zeros((p.m, p.m))
        return np.block([[zxx, a], [-a.T, zyy]])
    pay = p.payload
    return np.block([[pay.Aq, pay.C], [-pay.C.T, pay.Bq]])


def grad(p: ProblemInstance, z) -> np.ndarray:
    """Saddle operator F(z) = (grad_x f, -grad_y f); no counters touched."""
    z = np.asarray(z, dtype=float)
    dim = p.n + p.m
    if z.shape != (dim,):
        raise ValueError(f"iterate has shape {z.shape}, expected ({dim},)")
    d = z - p.payload.shift
    dx, dy = d[: p.n], d[p.n :]
    if p.kind == KIND_BILINEAR:
        a = p.payload.A
        return np.concatenate([a @ dy, -(a.T @ dx)])
    pay = p.payload
    return np.concatenate([pay.Aq @ dx + pay.C @ dy, pay.Bq @ dy - pay.C.T @ dx])


def saddle_distance_sq(p: ProblemInstance, z) -> float:
    """Squared distance to the saddle (set).

    SCSC instances and square bilinear instances have a unique saddle, so
    this is ``norm(z - shift)^2``.  Rectangular bilinear instances (m < n)
    have an (n-m)-dimensional saddle set {shift + (v, 0): A' v = 0}; the
    x-error is projected onto range(A) so motion along the set is free.
    """
    d = np.asarray(z, dtype=float) - p.payload.shift
    if p.kind == KIND_BILINEAR and p.m < p.n:
        dx, dy = d[: p.n], d[p.n :]
        proj = p.payload.range_basis.T @ dx
        return float(proj @ proj + dy @ dy)
    return float(d @ d)


def _draw_shift(mode: str, dim: int, rng: SeededRng) -> np.ndarray:
    if mode == "zero":
        return np.zeros(dim)
    if mode == "random":
        return rng.uniform(0.0, 1.0, dim)
    raise ValueError(f"unknown shift_mode {mode!r} (expected 'zero' or 'random')")


def _spread_log_uniform(lo: float, hi: float, count: int, rng: SeededRng) -> np.ndarray:
    if count <= 0:
        return np.zeros(0)
    return np.exp(rng.uniform(np.log(lo), np.log(hi), count))


def gen_bilinear(
    n: int, m: int, kappa: float, seed: int, shift_mode: str = "zero"
) -> ProblemInstance:
    """Random bilinear instance with sigma_max^2 / sigma_min^2 = kappa.

    A = U D V' with U, V random orthogonal and D holding m singular values:
    largest sqrt(kappa), smallest 1, interior log-uniform in between.
    Pure function of (n, m, kappa, seed, shift_mode).
    """
    if not (1 <= m <= n):
        raise ValueError(f"need 1 <= m <= n, got n={n}, m={m}")
    if kappa < 1.0:
        raise ValueError(f"kappa must be >= 1, got {kappa}")
    if m == 1 and kappa != 1.0:
        raise ValueError(
            "a 1-dimensional coupling has a single singular value, so only "
            f"kappa=1 is realizable (got kappa={kappa})"
        )
    rng = SeededRng(seed, stream=0)
    top = float(np.sqrt(kappa))
    svals = np.empty(m)
    svals[0] = top
    if m > 1:
        svals[-1] = 1.0
        interior = np.sort(_spread_log_uniform(1.0, top, m - 2, rng))[::-1]
        svals[1:-1] = interior
    u = random_orthogonal(n, rng)
    v = random_orthogonal(m, rng)
    a = (u[:, :m] * svals) @ v.T
    shift = _draw_shift(shift_mode, n + m, rng)

    actual = singular_values(a)
    sigma_max, sigma_min = float(actual[0]), float(actual[-1])
    kappa_actual = (sigma_max / sigma_min) ** 2
    if abs(kappa_actual - kappa) > 1e-9 * kappa:
        raise GenerationError(
            f"condition-number target missed ({kappa_actual} vs {kappa}); "
            "retry with a new seed"
        )
    payload = BilinearProblem(
        A=a, shift=shift, sigma_max=sigma_max, sigma_min=sigma_min, kappa=kappa_actual
    )
    return ProblemInstance(
        kind=KIND_BILINEAR, payload=payload, n=n, m=m, seed=int(seed),
        kappa_target=float(kappa),
    )


def _random_spd(dim: int, cap: float, rng: SeededRng) -> np.ndarray:
    """SPD matrix with eigenvalues log-uniform in [1, cap], minimum pinned to 1."""
    lam = _spread_log_uniform(1.0, cap, dim, rng)
    lam[np.argmin(lam)] = 1.0
    q = random_orthogonal(dim, rng)
    s = (q * lam) @ q.T
    return (s + s.T) / 2.0


def gen_scsc(
    n: int, m: int, kappa: float, seed: int, shift_mode: str = "zero"
) -> ProblemInstance:
    """Random SCSC quadratic with mu = 1 exactly and L = kappa.

    The diagonal blocks get spectra log-uniform in [1, kappa/2] (minimum
    pinned at 1, so mu = 1 by construction); the coupling C = s * C0 is
    scaled by bisection until sigma_max(Mfull) = kappa.  The cap kappa/2 on
    the block spectra keeps sigma_max below kappa at s = 0, guaranteeing the
    bisection bracket.
    """
    if n < 1 or m < 1:
        raise ValueError(f"need n, m >= 1, got n={n}, m={m}")
    if kappa <= 1.0:
        raise ValueError(f"kappa must be > 1, got {kappa}")
    rng = SeededRng(seed, stream=0)
    cap = max(1.0, kappa / 2.0)
    aq = _random_spd(n, cap, rng)
    bq = _random_spd(m, cap, rng)
    c0 = rng.standard_normal((n, m))

    def sigma_max_at(s: float) -> float:
        mf = np.block([[aq, s * c0], [-(s * c0).T, bq]])
        return float(singular_values(mf)[0])

    lo, hi = 0.0, 1.0
    doublings = 0
    while sigma_max_at(hi) < kappa:
        hi *= 2.0
        doublings += 1
        if doublings > 60:
            raise GenerationError(
                "could not bracket the coupling scale for the requested "
                "condition number; retry with a new seed"
            )
    for _ in range(90):
        mid = 0.5 * (lo + hi)
        if sigma_max_at(mid) < kappa:
            lo = mid
        else:
            hi = mid
    s = 0.5 * (lo + hi)
    c = s * c0
    shift = _draw_shift(shift_mode, n + m, rng)

    big_l = sigma_max_at(s)
    mu = 1.0  # pinned by construction in _random_spd
    if abs(big_l - kappa) > _KAPPA_RTOL * kappa:
        raise GenerationError(
            f"bisection missed the condition-number target ({big_l} vs {kappa}); "
            "retry with a new seed"
        )
    payload = QuadraticSCSCProblem(
        Aq=aq, Bq=bq, C=c, shift=shift, mu=mu, L=big_l, kappa=big_l / mu
    )
    return ProblemInstance(
        kind=KIND_SCSC, payload=payload, n=n, m=m, seed=int(seed),
        kappa_target=float(kappa),
    )


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def problem_to_dict(p: ProblemInstance) -> dict:
    """Canonical JSON-ready representation (see save_problem)."""
    base = {
        "kind": p.kind,
        "n": p.n,
        "m": p.m,
        "seed": p.seed,
        "rng_algorithm": p.rng_algorithm,
        "kappa_target": p.kappa_target,
        "kappa_actual": p.kappa,
        "shift": p.payload.shift.tolist(),
    }
    if p.kind == KIND_BILINEAR:
        pay = p.payload
        base.update(
            mu=None, L=None,
            sigma_max=pay.sigma_max, sigma_min=pay.sigma_min,
            matrices={"A": pay.A.tolist()},
        )
    else:
        pay = p.payload
        base.update(
            mu=pay.mu, L=pay.L,
            sigma_max=None, sigma_min=None,
            matrices={"Aq": pay.Aq.tolist(), "Bq": pay.Bq.tolist(), "C": pay.C.tolist()},
        )
    return base


def _canonical_json(d: dict) -> str:
    return json.dumps(d, sort_keys=True, indent=2) + "\n"


def problem_digest(p: ProblemInstance) -> str:
    """Short content hash of the canonical problem JSON (12 hex chars)."""
    blob = _canonical_json(problem_to_dict(p)).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:12]


def save_problem(p: ProblemInstance, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_canonical_json(problem_to_dict(p)))


def _require(d: dict, key: str, path):
    if key not in d:
        raise ProblemValidationError(f"{path}: missing required field {key!r}")
    return d[key]


def load_problem(path) -> ProblemInstance:
    """Load and validate a problem JSON file (round-trip exact)."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise ProblemFormatError(f"{path}: line {e.lineno}: {e.msg}") from e
    if not isinstance(d, dict):
        raise ProblemFormatError(f"{path}: expected a JSON object at top level")

    kind = _require(d, "kind", path)
    if kind not in (KIND_BILINEAR, KIND_SCSC):
        raise ProblemValidationError(f"{path}: unknown kind {kind!r}")
    n, m = int(_require(d, "n", path)), int(_require(d, "m", path))
    shift = np.asarray(_require(d, "shift", path), dtype=float)
    matrices = _require(d, "matrices", path)
    if shift.shape != (n + m,):
        raise ProblemValidationError(
            f"{path}: shift has length {shift.shape}, expected {n + m}"
        )
    kappa_actual = float(_require(d, "kappa_actual", path))

    if kind == KIND_BILINEAR:
        a = np.asarray(_require(matrices, "A", path), dtype=float)
        if a.shape != (n, m):
            raise ProblemValidationError(
                f"{path}: A has shape {a.shape}, expected ({n}, {m})"
            )
        if not np.all(np.isfinite(a)):
            raise ProblemValidationError(f"{path}: A has non-finite entries")
        sv = singular_values(a)
        sigma_max, sigma_min = float(sv[0]), float(sv[-1])
        if sigma_min <= 0.0:
            raise ProblemValidationError(f"{path}: A is rank deficient")
        recomputed = (sigma_max / sigma_min) ** 2
        if abs(recomputed - kappa_actual) > 1e-6 * max(1.0, abs(kappa_actual)):
            raise ProblemValidationError(
                f"{path}: kappa field {kappa_actual} inconsistent with matrices "
                f"(recomputed {recomputed})"
            )
        payload = BilinearProblem(
            A=a, shift=shift,
            sigma_max=float(d.get("sigma_max", sigma_max)),
            sigma_min=float(d.get("sigma_min", sigma_min)),
            kappa=kappa_actual,
        )
    else:
        aq = np.asarray(_require(matrices, "Aq", path), dtype=float)
        bq = np.asarray(_require(matrices, "Bq", path), dtype=float)
        c = np.asarray(_require(matrices, "C", path), dtype=float)
        if aq.shape != (n, n) or bq.shape != (m, m) or c.shape != (n, m):
            raise ProblemValidationError(f"{path}: block shapes inconsistent with n, m")
        for name, block in (("Aq", aq), ("Bq", bq), ("C", c)):
            if not np.all(np.isfinite(block)):
                raise ProblemValidationError(f"{path}: {name} has non-finite entries")
        for name, block in (("Aq", aq), ("Bq", bq)):
            if np.max(np.abs(block - block.T)) > 1e-12 * max(1.0, np.max(np.abs(block))):
                raise ProblemValidationError(f"{path}: {name} is not symmetric")
        mu = float(_require(d, "mu", path))
        big_l = float(_require(d, "L", path))
        mf = np.block([[aq, c], [-c.T, bq]])
        recomputed = float(singular_values(mf)[0]) / mu
        if abs(recomputed - kappa_actual) > 1e-6 * max(1.0, abs(kappa_actual)):
            raise ProblemValidationError(
                f"{path}: kappa field {kappa_actual} inconsistent with matrices "
                f"(recomputed {recomputed})"
            )
        payload = QuadraticSCSCProblem(
            Aq=aq, Bq=bq, C=c, shift=shift, mu=mu, L=big_l, kappa=kappa_actual
        )

    return ProblemInstance(
        kind=kind, payload=payload, n=n, m=m,
        seed=int(_require(d, "seed", path)),
        kappa_target=float(_require(d, "kappa_target", path)),
        rng_algorithm=str(_require(d, "rng_algorithm", path)),
    )
