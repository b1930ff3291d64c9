"""Dense linear-algebra kernel used by every other module.

Thin, validating wrappers over LAPACK (via numpy) for the handful of
operations the toolkit needs -- singular values, eigenvalues of
non-symmetric matrices, linear solves with a condition guard -- plus a
seeded random-orthogonal-matrix factory.  Everything is desk scale
(matrices up to a few hundred rows); no sparse or iterative paths.
"""

from __future__ import annotations

import numpy as np

# solve_linear rejects systems whose 2-norm condition estimate exceeds this;
# beyond it the residual contract is not attainable in double precision.
COND_LIMIT = 1e12


class SingularMatrixError(ValueError):
    """Matrix is singular (or close enough that a solve is meaningless).

    The offending condition estimate is available as ``.condition``.
    """

    def __init__(self, condition: float):
        self.condition = float(condition)
        super().__init__(
            "matrix is singular to working precision "
            f"(condition estimate {self.condition:.3e} exceeds {COND_LIMIT:.0e})"
        )


class SeededRng:
    """Deterministic random stream keyed by (seed, stream).

    Parameters
    ----------
    seed : int
        Non-negative 64-bit seed.  Identical (seed, stream) pairs produce
        identical draw sequences.
    stream : int
        Separates independent uses of the same user-facing seed:
        0 = problem generation, 1 = initial iterates.
    """

    algorithm_id = "pcg64"

    def __init__(self, seed: int, stream: int = 0):
        seed = int(seed)
        if seed < 0:
            raise ValueError(f"seed must be non-negative, got {seed}")
        self.seed = seed
        self.stream = int(stream)
        self.generator = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([self.seed, self.stream]))
        )

    def standard_normal(self, shape):
        return self.generator.standard_normal(shape)

    def uniform(self, low: float, high: float, size):
        return self.generator.uniform(low, high, size)

    def integers(self, low: int, high: int):
        return int(self.generator.integers(low, high))


def _as_matrix(m, name: str = "matrix") -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def singular_values(m) -> np.ndarray:
    """Singular values of ``m``, sorted descending (length min(rows, cols))."""
    return np.linalg.svd(_as_matrix(m), compute_uv=False)


def eigenvalues(m) -> np.ndarray:
    """All eigenvalues (with multiplicity) of a square real matrix.

    Returns a complex array; for real input, complex eigenvalues come in
    conjugate pairs.
    """
    a = _as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"eigenvalues needs a square matrix, got shape {a.shape}")
    return np.linalg.eigvals(a)


def symmetric_eigenvalues(m) -> np.ndarray:
    """Eigenvalues of a symmetric real matrix, sorted ascending.

    Rejects visibly asymmetric input rather than silently using one
    triangle.
    """
    a = _as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"symmetric_eigenvalues needs a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.max(np.abs(a - a.T)) > 1e-10 * scale:
        raise ValueError("matrix is not symmetric")
    return np.linalg.eigvalsh(a)


def solve_linear(m, b) -> np.ndarray:
    """Solve ``m @ x = b`` for square, well-conditioned ``m``.

    Raises SingularMatrixError when the 2-norm condition estimate exceeds
    COND_LIMIT; the residual satisfies
    ``norm(m @ x - b) <= 1e-10 * (norm(m) * norm(x) + norm(b))``.
    """
    a = _as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"solve_linear needs a square matrix, got shape {a.shape}")
    vec = np.asarray(b, dtype=float)
    if vec.shape != (a.shape[0],):
        raise ValueError(
            f"right-hand side has shape {vec.shape}, expected ({a.shape[0]},)"
        )
    if not np.all(np.isfinite(vec)):
        raise ValueError("right-hand side has non-finite entries")
    condition = np.linalg.cond(a)
    if not np.isfinite(condition) or condition > COND_LIMIT:
        raise SingularMatrixError(condition)
    return np.linalg.solve(a, vec)


def random_orthogonal(dim: int, rng: SeededRng) -> np.ndarray:
    """Random dim x dim orthogonal matrix from a seeded stream.

    Orthonormalizes a square standard-normal draw by QR, fixing the sign
    ambiguity with the R diagonal so the result does not depend on LAPACK's
    internal sign choices.
    """
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    g = rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(g)
    signs = np.where(np.diag(r) < 0.0, -1.0, 1.0)
    return q * signs
