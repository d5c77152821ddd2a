"""Shared deterministic numerical kernels.

Matrices are plain 2-d float64 ``numpy`` arrays in row-major order; the
validators below enforce the shape/finiteness contracts.  Eigen-analysis is
delegated to LAPACK via ``numpy.linalg`` (everything in this package is
small and dense).  Probability measures are handled as weighted atom lists
(:class:`MeasureAtoms`).
"""

import math
from dataclasses import dataclass, field

import numpy as np

#: default relative symmetry tolerance for :func:`sym_eigen`
SYM_TOL = 1e-10

_CBRT_EPS = float(np.finfo(float).eps) ** (1.0 / 3.0)


def as_matrix(m, name="matrix"):
    """Validate and return ``m`` as a finite 2-d float64 array."""
    a = np.asarray(m, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def _require_square(a, name="matrix"):
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")


def spectral_radius(m):
    """Largest eigenvalue modulus of a square matrix.

    For symmetric input this equals the operator norm.
    """
    a = as_matrix(m)
    _require_square(a)
    if a.size == 0:
        raise ValueError("matrix is empty")
    return float(np.max(np.abs(np.linalg.eigvals(a))))


def sym_eigen(m, sym_tol=SYM_TOL):
    """Eigendecomposition of a symmetric matrix.

    Returns ``(eigenvalues, V)`` with eigenvalues sorted ascending and the
    orthonormal eigenvectors in the columns of ``V``.  Raises ``ValueError``
    if the input is asymmetric beyond ``sym_tol`` (relative).
    """
    a = as_matrix(m)
    _require_square(a)
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if np.max(np.abs(a - a.T)) > sym_tol * scale:
        raise ValueError("matrix is not symmetric within tolerance")
    w, v = np.linalg.eigh(0.5 * (a + a.T))
    return w, v


def default_fd_step(p):
    """Truncation/roundoff-balanced central-difference step for point ``p``."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    scale = float(np.max(np.abs(p))) if p.size else 0.0
    return _CBRT_EPS * (1.0 + scale)


def finite_diff_gradient(f, p, h=None):
    """Central-difference gradient of a scalar field at ``p``."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if h is None:
        h = default_fd_step(p)
    if h <= 0:
        raise ValueError("step h must be positive")
    g = np.empty(p.shape[0])
    for i in range(p.shape[0]):
        pp = p.copy()
        pp[i] += h
        fp = f(pp)
        pp[i] -= 2.0 * h
        fm = f(pp)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError(f"non-finite field value near component {i}")
        g[i] = (fp - fm) / (2.0 * h)
    return g


def finite_diff_jacobian(g, p, h=None):
    """Central-difference Jacobian of a vector field ``g`` at ``p``."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if h is None:
        h = default_fd_step(p)
    cols = []
    for i in range(p.shape[0]):
        pp = p.copy()
        pp[i] += h
        gp = np.asarray(g(pp), dtype=float)
        pp[i] -= 2.0 * h
        gm = np.asarray(g(pp), dtype=float)
        cols.append((gp - gm) / (2.0 * h))
    jac = np.column_stack(cols)
    if not np.all(np.isfinite(jac)):
        raise ValueError("non-finite value in finite-difference Jacobian")
    return jac


# ---------------------------------------------------------------------------
# atomic measures and distances
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MeasureAtoms:
    """Weighted atomic measure: ``positions`` (n, dim), ``weights`` (n,)."""

    positions: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim == 1:
            pos = pos[:, None]
        w = np.asarray(self.weights, dtype=float)
        if pos.shape[0] != w.shape[0]:
            raise ValueError("positions and weights must have equal length")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if w.sum() <= 0:
            raise ValueError("weights must have positive total mass")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self):
        return self.positions.shape[1]

    @property
    def total_mass(self):
        return float(self.weights.sum())

    def is_probability(self, tol=1e-9):
        return abs(self.total_mass - 1.0) <= tol


def _check_w1_inputs(a, b):
    for m in (a, b):
        if m.dim != 1:
            raise ValueError("wasserstein1 supports only 1-dimensional measures")
        if not m.is_probability(1e-9):
            raise ValueError("wasserstein1 requires probability measures "
                             f"(total mass {m.total_mass})")


def _signed_cdf_steps(a, b, period=None):
    """Merged atom positions with the running CDF difference F_a - F_b."""
    xa = a.positions[:, 0]
    xb = b.positions[:, 0]
    if period is not None:
        xa = np.mod(xa, period)
        xb = np.mod(xb, period)
    xs = np.concatenate([xa, xb])
    signed = np.concatenate([a.weights, -b.weights])
    order = np.argsort(xs, kind="stable")
    xs = xs[order]
    diff = np.cumsum(signed[order])
    return xs, diff


def wasserstein1(a, b, geometry="line", period=2.0 * math.pi):
    """W1 distance between two 1-d atomic probability measures.

    ``geometry="line"`` integrates |CDF_a - CDF_b| over the merged atom
    grid.  ``geometry="circle"`` reduces to the line formula minimized over
    a constant CDF shift; the piecewise-linear objective is evaluated at
    every CDF-difference breakpoint, which is exact.
    """
    _check_w1_inputs(a, b)
    if geometry == "line":
        xs, diff = _signed_cdf_steps(a, b)
        if xs.shape[0] < 2:
            return 0.0
        return float(np.sum(np.abs(diff[:-1]) * np.diff(xs)))
    if geometry == "circle":
        if period <= 0:
            raise ValueError("circle period must be positive")
        xs, diff = _signed_cdf_steps(a, b, period=period)
        # arc lengths on which each CDF-difference value is constant,
        # including the wrap-around arc carrying the final value
        lengths = np.empty_like(diff)
        lengths[:-1] = np.diff(xs)
        lengths[-1] = period - xs[-1] + xs[0]
        order = np.argsort(diff)
        d = diff[order]
        w = lengths[order]
        # objective(s) = sum_k w_k |d_k - s|, piecewise linear in s with
        # breakpoints at the d_k; evaluate all of them via prefix sums
        cw = np.concatenate([[0.0], np.cumsum(w)])
        cdw = np.concatenate([[0.0], np.cumsum(w * d)])
        total_w, total_dw = cw[-1], cdw[-1]
        k = np.arange(d.shape[0])
        obj = (d * cw[k + 1] - cdw[k + 1]) + ((total_dw - cdw[k + 1]) - d * (total_w - cw[k + 1]))
        return float(max(np.min(obj), 0.0))
    raise ValueError(f"unsupported geometry {geometry!r}")


def kl_divergence(p, q):
    """Kullback-Leibler divergence sum p_i ln(p_i/q_i).

    Uses the convention 0*ln(0/q) = 0 and returns ``inf`` when absolute
    continuity fails (p_i > 0 with q_i = 0).
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError("p and q must be 1-d vectors of equal length")
    for name, vec in (("p", p), ("q", q)):
        if np.any(vec < 0):
            raise ValueError(f"{name} has negative entries")
        if abs(vec.sum() - 1.0) > 1e-9:
            raise ValueError(f"{name} does not sum to 1")
    mask = p > 0
    if np.any(q[mask] == 0):
        return float("inf")
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


# ---------------------------------------------------------------------------
# seeded randomness
# ---------------------------------------------------------------------------

@dataclass
class SeededRng:
    """Deterministic random stream (PCG64 behind ``numpy.random.Generator``).

    The same ``seed`` yields the same stream on every platform and in every
    process.  Instances are single-owner: one stream per experiment.  Child
    streams for independent parallel samples are derived deterministically
    from ``(seed, spawn_key)`` and never overlap the parent.
    """

    seed: int
    spawn_key: tuple = ()
    _gen: np.random.Generator = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not (0 <= int(self.seed) < 2 ** 64):
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self._gen is None:
            seq = np.random.SeedSequence(int(self.seed), spawn_key=self.spawn_key)
            self._gen = np.random.Generator(np.random.PCG64(seq))

    @property
    def gen(self):
        return self._gen

    def child(self, index):
        """Independent stream keyed by (seed, *spawn_key, index)."""
        return SeededRng(self.seed, self.spawn_key + (int(index),))
