"""Critical points of scalar fields and their C1 / C2 / C3 classification.

A field is classified on a compact search box: C1 when no critical point is
found and the gradient stays away from zero on a dense grid, C2 when all
found critical points are non-degenerate, C3 when a degenerate one exists,
and Inconclusive when the grid shows a near-vanishing gradient that the
Newton search could not resolve.  The box plus the explicit Inconclusive
verdict is the honest finite surrogate for a whole-space property; global
certification would need interval arithmetic and is out of scope.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from . import networks
from .numerics import finite_diff_gradient, finite_diff_jacobian, sym_eigen

GRAD_TOL = 1e-8
MERGE_RADIUS = 1e-4
GRAD_FLOOR = 1e-5
DEGEN_REL = 1e-6
N_STARTS = 64
_MAX_NEWTON_ITER = 80


def _degen_floor(grad_tol):
    # a monomial-type degeneracy x^n (n >= 3) stopped at |grad| <= tol has
    # curvature ~ tol^((n-2)/(n-1)) <= sqrt(tol); a pure relative eigenvalue
    # test can never flag it because in 1-d min|eig| = max|eig|
    return 10.0 * np.sqrt(grad_tol)


@dataclass(frozen=True)
class CriticalPoint:
    location: np.ndarray
    gradient_norm: float
    hessian_eigenvalues: np.ndarray  # sorted ascending
    degenerate: bool

    @property
    def min_abs_eigenvalue(self):
        return float(np.min(np.abs(self.hessian_eigenvalues)))


@dataclass
class FunctionClassReport:
    verdict: str  # "C1" | "C2" | "C3" | "Inconclusive"
    critical_points: list
    domain: tuple
    grad_tol: float
    degen_tol: float
    grad_floor: float
    min_grid_gradient: float
    dropped_starts: int = 0


def _as_box(domain, dim=None):
    lo, hi = domain
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    if dim is not None and lo.shape[0] == 1 and dim > 1:
        lo = np.full(dim, lo[0])
        hi = np.full(dim, hi[0])
    if lo.shape != hi.shape or np.any(hi <= lo):
        raise ValueError("domain box must have lo < hi componentwise")
    return lo, hi


def _newton_root(grad_fn, p0, lo, hi, grad_tol, max_iter=_MAX_NEWTON_ITER):
    """Damped (Levenberg) Newton iteration on grad = 0 from one start."""
    p = p0.copy()
    g = grad_fn(p)
    mu = 1e-8
    span = float(np.max(hi - lo))
    for _ in range(max_iter):
        gn = np.linalg.norm(g)
        if gn <= grad_tol:
            return p
        h = finite_diff_jacobian(grad_fn, p)
        h = 0.5 * (h + h.T)
        step = None
        for _ in range(12):
            try:
                step = np.linalg.solve(h + mu * np.eye(p.shape[0]), -g)
                break
            except np.linalg.LinAlgError:
                mu = max(mu * 10.0, 1e-12)
        if step is None:
            return None
        # keep steps bounded relative to the box so wandering starts fail fast
        sn = np.linalg.norm(step)
        if sn > span:
            step *= span / sn
        alpha = 1.0
        improved = False
        for _ in range(25):
            cand = p + alpha * step
            gc = grad_fn(cand)
            if np.all(np.isfinite(gc)) and np.linalg.norm(gc) < gn:
                p, g = cand, gc
                improved = True
                break
            alpha *= 0.5
        if improved:
            mu = max(mu / 3.0, 1e-12)
        else:
            mu *= 10.0
            if mu > 1e8:
                return None
    return p if np.linalg.norm(grad_fn(p)) <= grad_tol else None


def find_critical_points(fn, domain, rng, grad=None, starts=N_STARTS,
                         grad_tol=GRAD_TOL, merge_radius=MERGE_RADIUS,
                         degen_rel=DEGEN_REL):
    """Multi-start damped Newton search for zeros of the gradient.

    The gradient is analytic when supplied and central finite differences
    otherwise; the Hessian is always finite differences of the gradient.
    Converged points outside the box are discarded, duplicates merged
    within ``merge_radius``, and the survivors returned sorted
    lexicographically by location.  Non-convergent starts are dropped and
    counted.
    """
    lo, hi = _as_box(domain)
    d = lo.shape[0]
    if starts < 1:
        raise ValueError("need at least one start")
    grad_fn = grad if grad is not None else \
        (lambda p: finite_diff_gradient(fn, p))
    sampler = qmc.Halton(d=d, scramble=True, seed=rng.gen)
    points = qmc.scale(sampler.random(starts), lo, hi)
    found, dropped = [], 0
    for p0 in points:
        p = _newton_root(grad_fn, np.asarray(p0, dtype=float), lo, hi, grad_tol)
        if p is None:
            dropped += 1
            continue
        if np.any(p < lo) or np.any(p > hi):
            dropped += 1
            continue
        found.append(p)
    merged = []
    for p in sorted(found, key=lambda v: tuple(v)):
        if all(np.linalg.norm(p - q) > merge_radius for q in merged):
            merged.append(p)
    floor = _degen_floor(grad_tol)
    result = []
    for p in merged:
        h = finite_diff_jacobian(grad_fn, p)
        w, _ = sym_eigen(0.5 * (h + h.T))
        max_abs = float(np.max(np.abs(w))) if w.size else 0.0
        min_abs = float(np.min(np.abs(w))) if w.size else 0.0
        degenerate = min_abs <= max(degen_rel * max_abs, floor)
        result.append(CriticalPoint(p, float(np.linalg.norm(grad_fn(p))),
                                    w, degenerate))
    return result, dropped


def _grid_min_gradient(fn, grad, lo, hi, budget=4096):
    d = lo.shape[0]
    per_dim = max(3, int(round(budget ** (1.0 / d))))
    axes = [np.linspace(lo[i], hi[i], per_dim) for i in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    grad_fn = grad if grad is not None else \
        (lambda p: finite_diff_gradient(fn, p))
    return float(min(np.linalg.norm(grad_fn(p)) for p in pts))


def classify_function(fn, domain, rng, grad=None, starts=N_STARTS,
                      grad_tol=GRAD_TOL, merge_radius=MERGE_RADIUS,
                      degen_rel=DEGEN_REL, grad_floor=GRAD_FLOOR,
                      grid_budget=4096):
    """Assign one of C1 / C2 / C3 / Inconclusive on the search box."""
    lo, hi = _as_box(domain)
    pts, dropped = find_critical_points(fn, (lo, hi), rng, grad=grad,
                                        starts=starts, grad_tol=grad_tol,
                                        merge_radius=merge_radius,
                                        degen_rel=degen_rel)
    grid_min = _grid_min_gradient(fn, grad, lo, hi, budget=grid_budget)
    if not pts:
        verdict = "C1" if grid_min > grad_floor else "Inconclusive"
    elif any(p.degenerate for p in pts):
        verdict = "C3"
    else:
        verdict = "C2"
    return FunctionClassReport(verdict=verdict, critical_points=pts,
                               domain=(lo, hi), grad_tol=grad_tol,
                               degen_tol=degen_rel, grad_floor=grad_floor,
                               min_grid_gradient=grid_min, dropped_starts=dropped)


# ---------------------------------------------------------------------------
# sampling check of the architecture classification table
# ---------------------------------------------------------------------------

_ROW_ALLOWED = {
    "non-augmented": {"C1"},
    "augmented": {"C1", "C2"},
    "degenerate": {"C1", "C3"},
}


@dataclass
class RowCheckSummary:
    row: str
    trials: int
    verdict_counts: dict
    violations: list = field(default_factory=list)
    measure_zero_suspects: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.violations


def random_mlp(dims, rng, activation="tanh", scale=None):
    """Gaussian MLP with the given layer dimensions and W_tilde = Id.

    The default weight std 1/sqrt(fan_in) keeps tanh units away from
    saturation on order-one inputs so gradients stay bounded below.
    """
    gen = rng.gen
    layers = []
    for din, dout in zip(dims[:-1], dims[1:]):
        s = scale if scale is not None else 1.0 / np.sqrt(din)
        w = gen.normal(scale=s, size=(dout, din))
        b = gen.normal(scale=0.3, size=dout)
        layers.append(networks.LayerParams(w, b, np.eye(dout), np.zeros(dout),
                                           activation))
    return networks.MLPSpec(tuple(layers))


def _redraw_like(template, rng):
    gen = rng.gen
    if isinstance(template, networks.MLPSpec):
        layers = []
        for lp in template.layers:
            mask_w = (lp.W != 0).astype(float)
            mask_wt = (lp.W_tilde != 0).astype(float)
            layers.append(networks.LayerParams(
                gen.normal(scale=1.0 / np.sqrt(max(lp.in_dim, 1)),
                           size=lp.W.shape) * mask_w,
                gen.normal(scale=0.3, size=lp.b.shape),
                gen.normal(scale=1.0 / np.sqrt(max(lp.W_tilde.shape[1], 1)),
                           size=lp.W_tilde.shape) * mask_wt
                if not np.array_equal(lp.W_tilde, np.eye(lp.out_dim))
                else np.eye(lp.out_dim),
                gen.normal(scale=0.3, size=lp.b_tilde.shape),
                lp.activation))
        return networks.MLPSpec(tuple(layers))
    if isinstance(template, networks.NeuralODESpec):
        mask_w = (template.W != 0).astype(float)
        mask_wt = (template.W_tilde != 0).astype(float)
        params = {k: (gen.normal(scale=0.5, size=np.shape(v))
                      if np.ndim(v) else v)
                  for k, v in template.vf_params.items()}
        vf = networks.make_vector_field(template.vector_field_id, params) \
            if template.vector_field_id else template.vector_field
        return networks.NeuralODESpec(
            d=template.d, m=template.m, q=template.q,
            W=gen.normal(scale=0.6, size=template.W.shape) * mask_w,
            b=gen.normal(scale=0.3, size=template.b.shape),
            W_tilde=gen.normal(scale=0.6, size=template.W_tilde.shape) * mask_wt,
            b_tilde=gen.normal(scale=0.3, size=template.b_tilde.shape),
            vector_field=vf, T=template.T, step_count=template.step_count,
            vector_field_id=template.vector_field_id, vf_params=params)
    raise TypeError("template must be an MLPSpec or NeuralODESpec")


def _scalar_field_of(spec):
    if isinstance(spec, networks.MLPSpec):
        if spec.layers[-1].out_dim != 1:
            raise ValueError("classification rows need scalar output (q = 1)")
        return (lambda x: float(networks.mlp_forward(spec, x)[0]),
                lambda x: networks.mlp_input_gradient(spec, x))
    if spec.q != 1:
        raise ValueError("classification rows need scalar output (q = 1)")
    return (lambda x: float(networks.node_forward(spec, x)[0]), None)


def verify_classification_row(template, row, rng, trials, domain=(-1.5, 1.5),
                              **search_params):
    """Sample random parameter draws of ``template`` and check the table row.

    Each draw is classified on the box; verdicts outside the row's allowed
    set are violations, except that C3 occurrences under the augmented row
    are collected separately (random sampling cannot tell a true violation
    from a measure-zero draw, so these are reported for inspection).
    """
    row = str(row)
    if row not in _ROW_ALLOWED:
        raise ValueError(f"unknown classification row {row!r}")
    allowed = _ROW_ALLOWED[row]
    d = template.layers[0].in_dim if isinstance(template, networks.MLPSpec) \
        else template.d
    lo, hi = _as_box(domain, dim=d)
    counts = {}
    violations, suspects = [], []
    for t in range(trials):
        spec = _redraw_like(template, rng.child(t))
        fn, grad = _scalar_field_of(spec)
        report = classify_function(fn, (lo, hi), rng.child(10_000 + t),
                                   grad=grad, **search_params)
        counts[report.verdict] = counts.get(report.verdict, 0) + 1
        if report.verdict in allowed:
            continue
        if row == "augmented" and report.verdict == "C3":
            suspects.append((t, spec))
        else:
            violations.append((t, report.verdict, spec))
    return RowCheckSummary(row=row, trials=trials, verdict_counts=counts,
                           violations=violations,
                           measure_zero_suspects=suspects)


def report_rows(report):
    """Flatten a FunctionClassReport to CSV rows (per point plus a summary)."""
    d = report.domain[0].shape[0]
    header = [f"x{i + 1}" for i in range(d)] + \
        ["gradient_norm", "min_abs_eig", "degenerate"]
    rows = []
    for p in report.critical_points:
        rows.append(list(p.location) + [p.gradient_norm,
                                        p.min_abs_eigenvalue,
                                        int(p.degenerate)])
    summary = ["summary"] * d + [report.verdict,
                                 report.min_grid_gradient,
                                 len(report.critical_points)]
    return header, rows, summary
