"""Training dynamics: loss models, GD/SGD as (random) dynamical systems,
interpolation-manifold geometry, spectral and Lyapunov stability, Milnor
probes, and variational-equation propagation.

Gradients flow by reverse accumulation through the parameter map; Hessians
are central finite differences of that analytic gradient, symmetrized.
Everything is deterministic given a :class:`~dyn_nn_lab.numerics.SeededRng`.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels, networks
from .numerics import (SeededRng, default_fd_step, finite_diff_jacobian,
                       sym_eigen)

#: residual below which a parameter counts as lying on the interpolation manifold
ON_MANIFOLD_TOL = 1e-9
#: relative eigenvalue threshold separating tangent from normal directions
RANK_TOL = 1e-6
#: iterates beyond this norm trigger the divergence verdict
DIVERGENCE_GUARD = 1e12
#: absolute band around 2/eta reported as the edge verdict
EDGE_BAND = 1e-9


# ---------------------------------------------------------------------------
# parameter maps Phi(theta, x) with reverse-mode parameter gradients
# ---------------------------------------------------------------------------

class LinearScalarMap:
    """Phi(theta, x) = theta * x with scalar theta and x."""

    D = 1

    def value(self, theta, x):
        return np.array([theta[0] * x[0]])

    def vjp(self, theta, x, cot):
        return np.array([cot[0] * x[0]])


class Prod2Map:
    """Phi(theta, x) = theta_1 * theta_2 * x (scalar factorized model)."""

    D = 2

    def value(self, theta, x):
        return np.array([theta[0] * theta[1] * x[0]])

    def vjp(self, theta, x, cot):
        return cot[0] * x[0] * np.array([theta[1], theta[0]])


class MLPMap:
    """An MLP template whose flattened weights are the trainable parameters."""

    def __init__(self, template):
        self.template = template
        self.D = int(sum(networks.mlp_param_sizes(template)))

    def value(self, theta, x):
        return networks.mlp_forward(networks.mlp_with_params(self.template, theta), x)

    def vjp(self, theta, x, cot):
        return networks.mlp_param_vjp(
            networks.mlp_with_params(self.template, theta), x, cot)


@dataclass(frozen=True)
class Dataset:
    xs: np.ndarray  # (N, d)
    ys: np.ndarray  # (N, q)

    def __post_init__(self):
        xs = np.atleast_2d(np.asarray(self.xs, dtype=float))
        ys = np.atleast_2d(np.asarray(self.ys, dtype=float))
        if xs.shape[0] != ys.shape[0] or xs.shape[0] < 1:
            raise ValueError("dataset needs matching, nonempty x/y pairs")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @property
    def N(self):
        return self.xs.shape[0]

    @property
    def q(self):
        return self.ys.shape[1]


_ELL = {
    # per-example loss, its derivative in the prediction, and curvature factor
    "mse-half": (lambda r: 0.5 * float(r @ r), lambda r: r),
    "squared": (lambda r: float(r @ r), lambda r: 2.0 * r),
}


@dataclass(frozen=True)
class LossModel:
    """Empirical loss L(theta) = scale/N * sum_i ell(Phi(theta, x_i), y_i)."""

    param_map: object
    dataset: Dataset
    ell: str = "mse-half"
    scale: float = 1.0

    def __post_init__(self):
        if self.ell not in _ELL:
            raise ValueError(f"unknown per-example loss {self.ell!r}")

    @property
    def D(self):
        return self.param_map.D

    @property
    def regime(self):
        qn = self.dataset.q * self.dataset.N
        if self.D < qn:
            return "overdetermined"
        if self.D > qn:
            return "overparameterized"
        return "critical"


def _example_terms(model, theta, idxs):
    ell, dell = _ELL[model.ell]
    theta = np.asarray(theta, dtype=float)
    vals, cots = [], []
    for i in idxs:
        r = model.param_map.value(theta, model.dataset.xs[i]) - model.dataset.ys[i]
        vals.append(ell(r))
        cots.append(dell(r))
    return vals, cots


def batch_loss(model, theta, idxs):
    idxs = list(idxs)
    if not idxs:
        raise ValueError("batch index set must be nonempty")
    n = model.dataset.N
    if any(i < 0 or i >= n for i in idxs):
        raise ValueError("batch index out of range")
    vals, _ = _example_terms(model, theta, idxs)
    out = model.scale * float(np.mean(vals))
    if not np.isfinite(out):
        raise ValueError("loss evaluated to a non-finite value")
    return out


def batch_grad(model, theta, idxs):
    idxs = list(idxs)
    theta = np.asarray(theta, dtype=float)
    _, cots = _example_terms(model, theta, idxs)
    g = np.zeros(model.D)
    for i, cot in zip(idxs, cots):
        g += model.param_map.vjp(theta, model.dataset.xs[i], cot)
    g *= model.scale / len(idxs)
    if not np.all(np.isfinite(g)):
        raise ValueError("gradient evaluated to a non-finite value")
    return g


def loss(model, theta):
    return batch_loss(model, theta, range(model.dataset.N))


def grad_loss(model, theta):
    return batch_grad(model, theta, range(model.dataset.N))


def residual(model, theta):
    """Max interpolation error max_i ||Phi(theta, x_i) - y_i||."""
    theta = np.asarray(theta, dtype=float)
    errs = [np.linalg.norm(model.param_map.value(theta, x) - y)
            for x, y in zip(model.dataset.xs, model.dataset.ys)]
    return float(max(errs))


# ---------------------------------------------------------------------------
# GD / SGD trajectories
# ---------------------------------------------------------------------------

@dataclass
class GDConfig:
    eta: float
    max_steps: int = 1000
    stop_grad_tol: float = 0.0
    batch_size: int = None
    rng: SeededRng = None
    stride: int = 1

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("learning rate eta must be positive")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


@dataclass
class Trajectory:
    thetas: np.ndarray
    losses: np.ndarray
    grad_norms: np.ndarray
    steps: int
    diverged: bool = False
    batch_log: list = field(default_factory=list)

    @property
    def theta_end(self):
        return self.thetas[-1]


def sample_batch(gen, n, b):
    """Uniform B-element subset via seeded partial Fisher-Yates."""
    idx = np.arange(n)
    for j in range(b):
        k = j + int(gen.integers(n - j))
        idx[j], idx[k] = idx[k], idx[j]
    return tuple(int(v) for v in idx[:b])


def _descend(model, theta0, config, batched):
    theta = np.asarray(theta0, dtype=float).copy()
    n = model.dataset.N
    if batched:
        if config.batch_size is None or config.rng is None:
            raise ValueError("SGD needs a batch size and a seeded rng")
        if not (1 <= config.batch_size < n):
            raise ValueError(f"batch size must satisfy 1 <= B < N = {n}")
        gen = config.rng.gen
    thetas, losses, gnorms, batch_log = [], [], [], []

    def record(th):
        thetas.append(th.copy())
        losses.append(loss(model, th))
        gnorms.append(float(np.linalg.norm(grad_loss(model, th))))

    record(theta)
    diverged = False
    steps = 0
    last_recorded = 0
    for step in range(1, config.max_steps + 1):
        if batched:
            if config.stop_grad_tol > 0 and \
                    np.linalg.norm(grad_loss(model, theta)) <= config.stop_grad_tol:
                break
            batch = sample_batch(gen, n, config.batch_size)
            batch_log.append(batch)
            g = batch_grad(model, theta, batch)
        else:
            g = batch_grad(model, theta, range(n))
            if np.linalg.norm(g) <= config.stop_grad_tol:
                break
        theta = theta - config.eta * g
        steps = step
        if np.linalg.norm(theta) > DIVERGENCE_GUARD or not np.all(np.isfinite(theta)):
            diverged = True
            break
        if step % config.stride == 0:
            record(theta)
            last_recorded = step
    if not diverged and last_recorded != steps:
        record(theta)
    return Trajectory(np.array(thetas), np.array(losses), np.array(gnorms),
                      steps=steps, diverged=diverged, batch_log=batch_log)


def gd_run(model, theta0, config):
    """Plain gradient descent; stops at max_steps, the gradient tolerance,
    or the divergence guard (verdict in ``Trajectory.diverged``)."""
    if config.batch_size is not None:
        raise ValueError("gd_run takes a config without batch size")
    return _descend(model, theta0, config, batched=False)


def sgd_run(model, theta0, config):
    """Mini-batch SGD with uniformly drawn B-subsets from the seeded stream.

    The batch sequence is logged for replay; identical seeds give identical
    trajectories, and resuming with the advanced stream satisfies the
    cocycle property exactly.
    """
    return _descend(model, theta0, config, batched=True)


@dataclass
class MinimumReport:
    theta: np.ndarray
    residual: float
    on_manifold: bool
    final_loss: float


def find_minimum(model, theta0, eta0=0.2, rounds=6, steps_per_round=20_000,
                 shrink=0.5, target_residual=ON_MANIFOLD_TOL):
    """Locate a point of the zero-loss set by GD with learning-rate backoff."""
    theta = np.asarray(theta0, dtype=float).copy()
    eta = eta0
    for _ in range(rounds):
        cfg = GDConfig(eta=eta, max_steps=steps_per_round, stop_grad_tol=1e-16,
                       stride=steps_per_round)
        traj = gd_run(model, theta, cfg)
        if not traj.diverged:
            theta = traj.theta_end
        if residual(model, theta) <= target_residual:
            break
        eta *= shrink
    res = residual(model, theta)
    return MinimumReport(theta=theta, residual=res,
                         on_manifold=res <= ON_MANIFOLD_TOL,
                         final_loss=loss(model, theta))


# ---------------------------------------------------------------------------
# Hessian geometry at a minimum
# ---------------------------------------------------------------------------

def hessian(model, theta, h=None):
    """Symmetrized central finite differences of the analytic gradient."""
    theta = np.asarray(theta, dtype=float)
    jac = finite_diff_jacobian(lambda t: grad_loss(model, t), theta,
                               h if h is not None else default_fd_step(theta))
    return 0.5 * (jac + jac.T)


@dataclass
class TangentNormalSplit:
    tangent_basis: np.ndarray   # (D, dim_T) orthonormal columns
    normal_basis: np.ndarray    # (D, dim_N)
    eigenvalues: np.ndarray
    expected_tangent_dim: int
    dim_mismatch: bool
    all_tangent: bool = False


def tangent_normal_split(model, theta_star, rank_tol=RANK_TOL, hess=None):
    """Eigen-split of the Hessian into kernel (tangent) and image (normal).

    The tangent dimension is compared against D - qN; a mismatch is
    reported, not raised.
    """
    theta_star = np.asarray(theta_star, dtype=float)
    res = residual(model, theta_star)
    if res > ON_MANIFOLD_TOL:
        raise ValueError(f"theta_star has residual {res:.3e}, not on the "
                         "interpolation manifold")
    hess = hessian(model, theta_star) if hess is None else hess
    w, v = sym_eigen(hess)
    scale = float(np.max(np.abs(w)))
    expected = model.D - model.dataset.q * model.dataset.N
    if scale == 0.0:
        return TangentNormalSplit(v, np.zeros((model.D, 0)), w, expected,
                                  dim_mismatch=(model.D != expected),
                                  all_tangent=True)
    is_tangent = np.abs(w) <= rank_tol * scale
    tangent = v[:, is_tangent]
    normal = v[:, ~is_tangent]
    return TangentNormalSplit(tangent, normal, w, expected,
                              dim_mismatch=(tangent.shape[1] != expected))


@dataclass
class SpectralStability:
    sharpness: float
    threshold: float
    verdict: str  # "stable" | "unstable" | "edge"
    eigenvalues: np.ndarray

    @property
    def gd_stable_flag(self):
        return self.verdict == "stable"


def spectral_stability(model, theta_star, eta, hess=None):
    """Sharpness (largest Hessian eigenvalue) against the 2/eta threshold."""
    hess = hessian(model, theta_star) if hess is None else hess
    w, _ = sym_eigen(hess)
    sharp = float(w[-1])
    threshold = 2.0 / eta
    if abs(sharp - threshold) <= EDGE_BAND:
        verdict = "edge"
    elif sharp < threshold:
        verdict = "stable"
    else:
        verdict = "unstable"
    return SpectralStability(sharp, threshold, verdict, w)


def edge_of_stability_trace(model, theta0, config, stride=1):
    """GD run with sharpness sampled every ``stride`` steps.

    Returns rows (step, loss, grad_norm, sharpness, threshold) matching the
    CSV trace schema, plus the final trajectory.
    """
    if config.batch_size is not None:
        raise ValueError("edge-of-stability tracing uses plain GD")
    theta = np.asarray(theta0, dtype=float).copy()
    threshold = 2.0 / config.eta
    rows = []

    def record(step, th):
        sharp = spectral_stability(model, th, config.eta).sharpness
        rows.append((step, loss(model, th),
                     float(np.linalg.norm(grad_loss(model, th))),
                     sharp, threshold))

    record(0, theta)
    diverged = False
    n_steps = 0
    for step in range(1, config.max_steps + 1):
        g = grad_loss(model, theta)
        if np.linalg.norm(g) <= config.stop_grad_tol:
            break
        theta = theta - config.eta * g
        n_steps = step
        if np.linalg.norm(theta) > DIVERGENCE_GUARD:
            diverged = True
            break
        if step % stride == 0:
            record(step, theta)
    if not diverged and (not rows or rows[-1][0] != n_steps):
        record(n_steps, theta)
    return rows, Trajectory(np.array([theta]), np.array([loss(model, theta)]),
                            np.array([np.linalg.norm(grad_loss(model, theta))]),
                            steps=n_steps, diverged=diverged)


# ---------------------------------------------------------------------------
# Milnor probes
# ---------------------------------------------------------------------------

@dataclass
class MilnorResult:
    fraction: float
    converged: np.ndarray  # bool per sample
    mode: str


def milnor_probe(model, theta_star, radius, samples, eta, rng, horizon,
                 tol=1e-6, batch_size=None, manifold_radius=None):
    """Monte Carlo estimate of the basin-of-attraction volume fraction.

    Samples start points uniformly in a ball around ``theta_star`` and runs
    (S)GD for ``horizon`` steps.  In the isolated-minimum mode a run counts
    as converged when it ends within ``tol`` of ``theta_star``; in the
    overparameterized mode when it ends within ``tol`` of the interpolation
    manifold and within ``manifold_radius`` of ``theta_star``.  Each sample
    owns a deterministic child stream, so the result is independent of any
    parallel scheduling.
    """
    if samples < 1:
        raise ValueError("need at least one probe sample")
    theta_star = np.asarray(theta_star, dtype=float)
    d = theta_star.shape[0]
    mode = "overparameterized" if model.regime == "overparameterized" else "isolated"
    if manifold_radius is None:
        manifold_radius = 10.0 * radius
    master = rng.gen
    converged = np.zeros(samples, dtype=bool)
    for s in range(samples):
        direction = master.normal(size=d)
        norm = np.linalg.norm(direction)
        if norm == 0:
            direction = np.ones(d)
            norm = math.sqrt(d)
        r = radius * master.random() ** (1.0 / d)
        theta0 = theta_star + (r / norm) * direction
        cfg = GDConfig(eta=eta, max_steps=horizon, stop_grad_tol=0.0,
                       batch_size=batch_size,
                       rng=rng.child(s) if batch_size is not None else None,
                       stride=horizon)
        traj = sgd_run(model, theta0, cfg) if batch_size is not None \
            else gd_run(model, theta0, cfg)
        if traj.diverged:
            continue
        end = traj.theta_end
        if mode == "isolated":
            converged[s] = np.linalg.norm(end - theta_star) <= tol
        else:
            converged[s] = (residual(model, end) <= tol
                            and np.linalg.norm(end - theta_star) <= manifold_radius)
    return MilnorResult(float(np.mean(converged)), converged, mode)


# ---------------------------------------------------------------------------
# batch Jacobians and Lyapunov exponents
# ---------------------------------------------------------------------------

def _subsets(n, b):
    return list(itertools.combinations(range(n), b))


def batch_normal_jacobians(model, theta_star, eta, b, max_enumerate=10_000,
                           rng=None, split=None):
    """Normal-space restrictions A_Xi = I - eta * Hess L_Xi(theta*)|_N.

    Enumerates all C(N, B) batches when feasible, otherwise samples
    ``max_enumerate`` of them from the provided stream.
    """
    theta_star = np.asarray(theta_star, dtype=float)
    split = tangent_normal_split(model, theta_star) if split is None else split
    nb = split.normal_basis
    n = model.dataset.N
    total = math.comb(n, b)
    if total <= max_enumerate:
        batches = _subsets(n, b)
    else:
        if rng is None:
            raise ValueError("sampling batch Jacobians needs a seeded rng")
        batches = [sample_batch(rng.gen, n, b) for _ in range(max_enumerate)]
    mats = []
    h = default_fd_step(theta_star)
    for batch in batches:
        jac = finite_diff_jacobian(lambda t, bb=batch: batch_grad(model, t, bb),
                                   theta_star, h)
        hess_b = 0.5 * (jac + jac.T)
        mats.append(np.eye(nb.shape[1]) - eta * (nb.T @ hess_b @ nb))
    return mats, batches


def lyapunov_exponent(mats, n_steps, rng, replicates=20, probs=None, burn_in=0):
    """Furstenberg-Kesten top Lyapunov exponent of a random matrix product.

    ``mats`` is either a stack of square matrices drawn with ``probs``
    (uniform by default) or a sampler ``f(gen) -> matrix`` called once per
    step.  Scalars multiply directly; larger matrices iterate a
    QR-renormalized frame and accumulate the log of the leading diagonal
    entry.  Returns (estimate, standard error over replicates).
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if burn_in >= n_steps:
        raise ValueError("burn_in must be smaller than n_steps")
    sampler = mats if callable(mats) else None
    if sampler is None:
        mats = np.asarray(mats, dtype=float)
        if mats.ndim == 2:
            mats = mats[None, :, :]
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
            raise ValueError("need a stack of square matrices of equal size")
        n_mats = mats.shape[0]
        if probs is None:
            probs = np.full(n_mats, 1.0 / n_mats)
        else:
            probs = np.asarray(probs, dtype=float)
            if probs.shape != (n_mats,) or abs(probs.sum() - 1.0) > 1e-9:
                raise ValueError("probabilities must match the matrices and "
                                 "sum to 1")
    gen = rng.gen
    estimates = np.empty(replicates)
    for rep in range(replicates):
        if sampler is None:
            seq = mats
            idx = gen.choice(seq.shape[0], size=n_steps, p=probs)
        else:
            seq = np.stack([np.atleast_2d(np.asarray(sampler(gen), dtype=float))
                            for _ in range(n_steps)])
            if seq.shape[1] != seq.shape[2]:
                raise ValueError("sampler must produce square matrices")
            idx = np.arange(n_steps)
        k = seq.shape[1]
        if k == 1:
            vals = np.abs(seq[idx, 0, 0])
            with np.errstate(divide="ignore"):
                logs = np.log(vals)
        else:
            q0, _ = np.linalg.qr(gen.normal(size=(k, k)))
            logs = kernels.lyapunov_qr_logs(seq, idx.astype(np.int64), q0)
        estimates[rep] = float(np.mean(logs[burn_in:]))
    est = float(np.mean(estimates))
    if not np.isfinite(est):
        return float("-inf"), 0.0
    se = float(np.std(estimates, ddof=1) / math.sqrt(replicates)) \
        if replicates > 1 else 0.0
    return est, se


@dataclass
class RegularityReport:
    invertible: bool
    complement_invertible: bool
    irreducible_indicative: bool
    label: str = "indicative"

    @property
    def regular_indicative(self):
        return (self.invertible and self.complement_invertible
                and self.irreducible_indicative)


@dataclass
class StabilityReport:
    """Everything known about a candidate minimum in one place."""

    theta_star: np.ndarray
    residual: float
    hessian_eigenvalues: np.ndarray
    tangent_basis: np.ndarray
    normal_basis: np.ndarray
    sharpness: float
    gd_stable_flag: bool
    verdict: str
    lyapunov: tuple = None          # (estimate, standard error)
    regular_flags: RegularityReport = None


def stability_report(model, theta_star, eta, batch_size=None, rng=None,
                     lyapunov_steps=10_000, replicates=10):
    """Assemble the full stability picture at an interpolation point.

    With a batch size, the mini-batch Jacobians feed a Lyapunov estimate
    and the regularity flags; without one the report is purely spectral.
    """
    theta_star = np.asarray(theta_star, dtype=float)
    hess = hessian(model, theta_star)
    split = tangent_normal_split(model, theta_star, hess=hess)
    frag = spectral_stability(model, theta_star, eta, hess=hess)
    lyap = None
    flags = None
    if batch_size is not None:
        if rng is None:
            raise ValueError("batched stability reports need a seeded rng")
        mats, _ = batch_normal_jacobians(model, theta_star, eta, batch_size,
                                         rng=rng, split=split)
        lyap = lyapunov_exponent(np.array(mats), lyapunov_steps, rng,
                                 replicates=replicates)
        flags = regularity_check(mats, rng=rng)
    return StabilityReport(
        theta_star=theta_star, residual=residual(model, theta_star),
        hessian_eigenvalues=frag.eigenvalues,
        tangent_basis=split.tangent_basis, normal_basis=split.normal_basis,
        sharpness=frag.sharpness, gd_stable_flag=frag.gd_stable_flag,
        verdict=frag.verdict, lyapunov=lyap, regular_flags=flags)


def regularity_check(mats, rng=None, cond_cap=1e12):
    """Invertibility of A_Xi and I - A_Xi plus an irreducibility heuristic.

    Strong irreducibility is undecidable by sampling; the heuristic looks
    for a line left invariant by every generator among the real eigenvector
    directions of semigroup words up to length 3.  The verdict is labeled
    indicative and never gates acceptance.
    """
    mats = [np.asarray(a, dtype=float) for a in mats]
    if not mats:
        raise ValueError("need at least one matrix")
    k = mats[0].shape[0]
    inv_ok = all(np.linalg.cond(a) < cond_cap for a in mats)
    comp_ok = all(np.linalg.cond(np.eye(k) - a) < cond_cap for a in mats)
    if k == 1:
        # the zero subspace does not count as proper; dimension one is trivial
        return RegularityReport(inv_ok, comp_ok, True)
    gen = rng.gen if rng is not None else np.random.default_rng(0)
    words = list(mats)
    for _ in range(min(32, 4 * len(mats) ** 2)):
        length = int(gen.integers(2, 4))
        w = np.eye(k)
        for _ in range(length):
            w = mats[int(gen.integers(len(mats)))] @ w
        words.append(w)
    candidates = []
    for w in words:
        vals, vecs = np.linalg.eig(w)
        for j in range(k):
            if abs(vals[j].imag) < 1e-10:
                v = np.real(vecs[:, j])
                nv = np.linalg.norm(v)
                if nv > 0:
                    candidates.append(v / nv)
    common_invariant = False
    for v in candidates:
        if all(_line_invariant(a, v) for a in mats):
            common_invariant = True
            break
    return RegularityReport(inv_ok, comp_ok, not common_invariant)


def _line_invariant(a, v, tol=1e-8):
    av = a @ v
    proj = (av @ v) * v
    return np.linalg.norm(av - proj) <= tol * max(1.0, np.linalg.norm(a))


# ---------------------------------------------------------------------------
# variational equation (forward / reverse accumulation through stages)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Stage:
    """One differentiable stage of a composition: value and Jacobian."""

    f: object
    jac: object

    @staticmethod
    def from_scalar(f, df):
        return Stage(lambda x: np.array([f(float(x[0]))]),
                     lambda x: np.array([[df(float(x[0]))]]))

    @staticmethod
    def from_layer(lp):
        def jac(h):
            _, df = networks.activation_pair(lp.activation)
            z = lp.W @ h + lp.b
            return lp.W_tilde @ (df(z)[:, None] * lp.W)
        return Stage(lambda h: networks._apply_layer(lp, h), jac)


def variational_propagate(stages, x0, seed=None, cotangent=None, mode="forward"):
    """Push a tangent forward or pull a cotangent backward through stages.

    Forward mode returns (output, J * seed); reverse mode returns
    (output, J^T * cotangent), which for scalar outputs is the gradient.
    """
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    states = [x]
    for st in stages:
        x = np.atleast_1d(np.asarray(st.f(x), dtype=float))
        states.append(x)
    if mode == "forward":
        if seed is None:
            raise ValueError("forward mode needs a seed direction")
        v = np.atleast_1d(np.asarray(seed, dtype=float))
        for st, s in zip(stages, states[:-1]):
            v = np.asarray(st.jac(s)) @ v
        return states[-1], v
    if mode == "reverse":
        if cotangent is None:
            raise ValueError("reverse mode needs a cotangent")
        w = np.atleast_1d(np.asarray(cotangent, dtype=float))
        for st, s in zip(reversed(stages), reversed(states[:-1])):
            w = np.asarray(st.jac(s)).T @ w
        return states[-1], w
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# vanishing-gradient illustration
# ---------------------------------------------------------------------------

@dataclass
class VanishingGradientTrace:
    rows: list            # (t, p1, p2, exact1, exact2)
    decay_times: tuple    # first time each |p_i| falls below |p_i(0)|/e


def vanishing_gradient_demo(epsilon, horizon, dt, p0=(1.0, 1.0)):
    """Gradient flow of L(p) = p1^2/2 + eps*p2^2/2, i.e. p' = diag(-1, -eps) p.

    Integrates with RK4 at step ``dt`` and tabulates the exact exponentials
    alongside; the slow component exhibits the near-vanishing gradient.
    """
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    lam = np.array([-1.0, -epsilon])
    p0 = np.asarray(p0, dtype=float)
    n = int(round(horizon / dt))
    rows = [(0.0, p0[0], p0[1], p0[0], p0[1])]
    p = p0.copy()
    for k in range(1, n + 1):
        p = networks.integrate_rk4(lambda t, y: lam * y, p, 0.0, dt, 1)
        t = k * dt
        exact = p0 * np.exp(lam * t)
        rows.append((t, p[0], p[1], exact[0], exact[1]))
    decay = []
    for comp in (1, 2):
        target = abs(p0[comp - 1]) / math.e
        hit = next((r[0] for r in rows if abs(r[comp]) <= target), float("nan"))
        decay.append(hit)
    return VanishingGradientTrace(rows, tuple(decay))


# ---------------------------------------------------------------------------
# built-in loss registry
# ---------------------------------------------------------------------------

def builtin_loss(loss_id, ell=None, c=4.0):
    """Construct one of the named loss models.

    quadratic: L = c*theta^2/2 (scalar).  prod2: L = (1 - theta1*theta2)^2,
    the rank-one factorized interpolation problem.  two-point-scalar:
    Phi = theta*x on the data {(1,0), (2,0)} with half squared error.
    """
    if loss_id == "quadratic":
        if c <= 0:
            raise ValueError("quadratic loss needs c > 0")
        data = Dataset(np.array([[math.sqrt(c)]]), np.array([[0.0]]))
        return LossModel(LinearScalarMap(), data, ell or "mse-half")
    if loss_id == "prod2":
        data = Dataset(np.array([[1.0]]), np.array([[1.0]]))
        return LossModel(Prod2Map(), data, ell or "squared")
    if loss_id == "two-point-scalar":
        data = Dataset(np.array([[1.0], [2.0]]), np.array([[0.0], [0.0]]))
        return LossModel(LinearScalarMap(), data, ell or "mse-half")
    raise ValueError(f"unknown loss id {loss_id!r}")


BUILTIN_LOSSES = ("prod2", "quadratic", "two-point-scalar")
