"""Forward architectures: MLP, ResNet, DenseResNet, neural ODE, neural DDE.

All specs are immutable after construction and every forward is a pure
function, so batched evaluation is safe from any number of threads.  The
continuous-depth models integrate with fixed-step classical RK4 so that a
run is exactly reproducible from its spec; the DDE uses the method of
steps with cubic-Hermite dense output on the RK4 grid.
"""

import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DivergenceError

E = math.e


# ---------------------------------------------------------------------------
# activations (strictly monotone catalogue; plain ReLU is deliberately absent)
# ---------------------------------------------------------------------------

def _tanh(z):
    return np.tanh(z)


def _tanh_d(z):
    t = np.tanh(z)
    return 1.0 - t * t


def _softplus(z):
    return np.logaddexp(0.0, z)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _sigmoid_d(z):
    s = _sigmoid(z)
    return s * (1.0 - s)


_ACTIVATIONS = {
    "tanh": (_tanh, _tanh_d),
    "softplus": (_softplus, _sigmoid),
    "sigmoid": (_sigmoid, _sigmoid_d),
    "identity": (lambda z: z, lambda z: np.ones_like(z)),
}


def activation_pair(name):
    """Resolve an activation name to ``(f, f')``.

    ``leaky-relu:<slope>`` takes a positive slope parameter; all other names
    are fixed entries of the catalogue.
    """
    if name.startswith("leaky-relu"):
        _, _, raw = name.partition(":")
        slope = float(raw) if raw else 0.01
        if slope <= 0:
            raise ValueError("leaky-relu slope must be positive")

        def f(z, s=slope):
            return np.where(z > 0, z, s * z)

        def df(z, s=slope):
            return np.where(z > 0, 1.0, s)

        return f, df
    try:
        return _ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}") from None


# ---------------------------------------------------------------------------
# feed-forward specs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LayerParams:
    """One layer h -> W_tilde * sigma(W h + b) + b_tilde."""

    W: np.ndarray
    b: np.ndarray
    W_tilde: np.ndarray
    b_tilde: np.ndarray
    activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "W", np.asarray(self.W, dtype=float))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))
        object.__setattr__(self, "W_tilde", np.asarray(self.W_tilde, dtype=float))
        object.__setattr__(self, "b_tilde", np.asarray(self.b_tilde, dtype=float))
        activation_pair(self.activation)

    @property
    def in_dim(self):
        return self.W.shape[1]

    @property
    def out_dim(self):
        return self.W_tilde.shape[0]


@dataclass(frozen=True)
class MLPSpec:
    layers: tuple

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("MLP needs at least one layer")
        for l, (prev, nxt) in enumerate(zip(layers[:-1], layers[1:])):
            if prev.out_dim != nxt.in_dim:
                raise ValueError(
                    f"layer {l + 1}: input dim {nxt.in_dim} does not match "
                    f"previous output dim {prev.out_dim}")
        for l, lp in enumerate(layers):
            inner = lp.W.shape[0]
            if lp.b.shape != (inner,):
                raise ValueError(f"layer {l}: bias b has shape {lp.b.shape}, "
                                 f"expected ({inner},)")
            if lp.W_tilde.shape[1] != inner:
                raise ValueError(f"layer {l}: W_tilde maps {lp.W_tilde.shape[1]} "
                                 f"inner units, expected {inner}")
            if lp.b_tilde.shape != (lp.out_dim,):
                raise ValueError(f"layer {l}: bias b_tilde has wrong shape")
        object.__setattr__(self, "layers", layers)

    @property
    def layer_dims(self):
        return [self.layers[0].in_dim] + [lp.out_dim for lp in self.layers]


def _apply_layer(lp, h):
    f, _ = activation_pair(lp.activation)
    return lp.W_tilde @ f(lp.W @ h + lp.b) + lp.b_tilde


def mlp_forward(spec, x, return_hidden=False):
    """Evaluate an MLP; with ``return_hidden`` also return all layers h_0..h_L."""
    h = np.asarray(x, dtype=float)
    if h.shape != (spec.layers[0].in_dim,):
        raise ValueError(f"layer 0: input has shape {h.shape}, expected "
                         f"({spec.layers[0].in_dim},)")
    hidden = [h]
    for lp in spec.layers:
        h = _apply_layer(lp, h)
        hidden.append(h)
    if return_hidden:
        return h, hidden
    return h


def mlp_forward_batch(spec, xs):
    """Row-wise forward; independent of any batch partitioning."""
    h = np.asarray(xs, dtype=float)
    for lp in spec.layers:
        f, _ = activation_pair(lp.activation)
        h = f(h @ lp.W.T + lp.b) @ lp.W_tilde.T + lp.b_tilde
    return h


def mlp_input_gradient(spec, x):
    """Gradient of a scalar-output MLP with respect to its input."""
    out, hidden = mlp_forward(spec, np.asarray(x, dtype=float), return_hidden=True)
    if out.shape != (1,):
        raise ValueError("input gradient requires scalar output (q = 1)")
    cot = np.ones(1)
    for lp, h in zip(reversed(spec.layers), reversed(hidden[:-1])):
        _, df = activation_pair(lp.activation)
        z = lp.W @ h + lp.b
        cot = lp.W.T @ (df(z) * (lp.W_tilde.T @ cot))
    return cot


# parameter vector layout per layer: W, b, W_tilde, b_tilde (C order)

def mlp_param_sizes(spec):
    sizes = []
    for lp in spec.layers:
        sizes.append(lp.W.size + lp.b.size + lp.W_tilde.size + lp.b_tilde.size)
    return sizes


def mlp_params_flat(spec):
    parts = []
    for lp in spec.layers:
        parts.extend([lp.W.ravel(), lp.b.ravel(), lp.W_tilde.ravel(),
                      lp.b_tilde.ravel()])
    return np.concatenate(parts)


def mlp_with_params(spec, theta):
    """Rebuild a spec with the flat parameter vector ``theta`` injected."""
    theta = np.asarray(theta, dtype=float)
    layers = []
    pos = 0

    def take(shape):
        nonlocal pos
        n = int(np.prod(shape))
        block = theta[pos:pos + n].reshape(shape)
        pos += n
        return block

    for lp in spec.layers:
        layers.append(LayerParams(take(lp.W.shape), take(lp.b.shape),
                                  take(lp.W_tilde.shape), take(lp.b_tilde.shape),
                                  lp.activation))
    if pos != theta.shape[0]:
        raise ValueError(f"parameter vector has length {theta.shape[0]}, "
                         f"expected {pos}")
    return MLPSpec(tuple(layers))


def mlp_param_vjp(spec, x, cotangent):
    """Reverse accumulation of cot^T dPhi/dtheta through all layers."""
    _, hidden = mlp_forward(spec, np.asarray(x, dtype=float), return_hidden=True)
    cot = np.asarray(cotangent, dtype=float)
    grads = [None] * len(spec.layers)
    for l in range(len(spec.layers) - 1, -1, -1):
        lp = spec.layers[l]
        h = hidden[l]
        f, df = activation_pair(lp.activation)
        z = lp.W @ h + lp.b
        a = f(z)
        g_wt = np.outer(cot, a)
        g_bt = cot
        dz = df(z) * (lp.W_tilde.T @ cot)
        g_w = np.outer(dz, h)
        g_b = dz
        grads[l] = np.concatenate([g_w.ravel(), g_b.ravel(),
                                   g_wt.ravel(), g_bt.ravel()])
        cot = lp.W.T @ dz
    return np.concatenate(grads)


# ---------------------------------------------------------------------------
# residual variants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResNetSpec:
    dim: int
    blocks: tuple  # LayerParams, each mapping dim -> dim

    def __post_init__(self):
        for l, lp in enumerate(self.blocks):
            if lp.in_dim != self.dim or lp.out_dim != self.dim:
                raise ValueError(f"layer {l}: residual block must map "
                                 f"dim {self.dim} to itself")
        object.__setattr__(self, "blocks", tuple(self.blocks))


def resnet_forward(spec, x):
    h = np.asarray(x, dtype=float)
    if h.shape != (spec.dim,):
        raise ValueError(f"layer 0: input has shape {h.shape}, expected "
                         f"({spec.dim},)")
    for lp in spec.blocks:
        h = h + _apply_layer(lp, h)
    return h


@dataclass(frozen=True)
class DenseBlock:
    """Residual update reading the ``reads`` most recent layers.

    ``fn`` receives the concatenation (h_l, h_{l-1}, ..., h_{l-reads+1})
    and must return a dim-vector.
    """

    reads: int
    fn: object


@dataclass(frozen=True)
class DenseResNetSpec:
    dim: int
    blocks: tuple

    def __post_init__(self):
        for l, blk in enumerate(self.blocks):
            if not (1 <= blk.reads <= l + 1):
                raise ValueError(f"layer {l}: block reads {blk.reads} layers "
                                 f"but only {l + 1} are available")
        object.__setattr__(self, "blocks", tuple(self.blocks))


def dense_resnet_forward(spec, x):
    h = np.asarray(x, dtype=float)
    if h.shape != (spec.dim,):
        raise ValueError(f"layer 0: input has shape {h.shape}, expected "
                         f"({spec.dim},)")
    history = [h]
    for l, blk in enumerate(spec.blocks):
        stack = np.concatenate(history[l - blk.reads + 1:l + 1][::-1])
        upd = np.asarray(blk.fn(stack), dtype=float)
        if upd.shape != (spec.dim,):
            raise ValueError(f"layer {l}: block returned shape {upd.shape}, "
                             f"expected ({spec.dim},)")
        history.append(history[-1] + upd)
    return history[-1]


# ---------------------------------------------------------------------------
# architecture classification
# ---------------------------------------------------------------------------

class ArchClass(str, Enum):
    NON_AUGMENTED = "non-augmented"
    AUGMENTED = "augmented"
    BOTTLENECK = "bottleneck"
    DEGENERATE = "degenerate"


def classify_fnn(layer_dims):
    """Trichotomy over feed-forward layer-dimension profiles.

    Non-augmented: monotonically non-increasing.  Bottleneck: a strict dip
    between two higher layers.  Augmented: the rest (a rise toward a unique
    maximal plateau above the input width, then non-increasing).
    """
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2:
        raise ValueError("need at least an input and an output layer")
    if any(d < 1 for d in dims):
        raise ValueError("layer dimensions must be positive")
    if all(a >= b for a, b in zip(dims[:-1], dims[1:])):
        return ArchClass.NON_AUGMENTED
    # strict dip: some layer lower than a layer on each side of it
    prefix_max = np.maximum.accumulate(dims)
    suffix_max = np.maximum.accumulate(dims[::-1])[::-1]
    for k in range(1, len(dims) - 1):
        if dims[k] < prefix_max[k - 1] and dims[k] < suffix_max[k + 1]:
            return ArchClass.BOTTLENECK
    return ArchClass.AUGMENTED


#: relative singular-value threshold below which a weight matrix counts as
#: rank deficient
RANK_TOL = 1e-10


def _full_rank(mat):
    sv = np.linalg.svd(np.asarray(mat, dtype=float), compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return False
    return int(np.sum(sv > RANK_TOL * sv[0])) == min(mat.shape)


def classify_ode_arch(d, m, q, W, W_tilde):
    """Classify a neural ODE/DDE architecture from its dimensions and lifts."""
    W = np.asarray(W, dtype=float)
    W_tilde = np.asarray(W_tilde, dtype=float)
    if W.shape != (m, d):
        raise ValueError(f"W has shape {W.shape}, expected ({m}, {d})")
    if W_tilde.shape != (q, m):
        raise ValueError(f"W_tilde has shape {W_tilde.shape}, expected ({q}, {m})")
    if not (_full_rank(W) and _full_rank(W_tilde)):
        return ArchClass.DEGENERATE
    if m > max(d, q):
        return ArchClass.AUGMENTED
    return ArchClass.NON_AUGMENTED


# ---------------------------------------------------------------------------
# fixed-step RK4 and neural ODE / DDE forwards
# ---------------------------------------------------------------------------

def integrate_rk4(f, h0, t0, t1, steps, keep_trajectory=False):
    """Classical RK4 with ``steps`` equal sub-intervals of [t0, t1]."""
    if steps < 1:
        raise ValueError("step_count must be >= 1")
    h = np.asarray(h0, dtype=float).copy()
    dt = (t1 - t0) / steps
    traj = [h.copy()] if keep_trajectory else None
    for n in range(steps):
        t = t0 + n * dt
        k1 = np.asarray(f(t, h))
        k2 = np.asarray(f(t + 0.5 * dt, h + 0.5 * dt * k1))
        k3 = np.asarray(f(t + 0.5 * dt, h + 0.5 * dt * k2))
        k4 = np.asarray(f(t + dt, h + dt * k3))
        h = h + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(h)):
            raise DivergenceError(f"state became non-finite at step {n + 1}",
                                  step=n + 1)
        if keep_trajectory:
            traj.append(h.copy())
    if keep_trajectory:
        return h, np.array(traj)
    return h


@dataclass(frozen=True)
class NeuralODESpec:
    d: int
    m: int
    q: int
    W: np.ndarray
    b: np.ndarray
    W_tilde: np.ndarray
    b_tilde: np.ndarray
    vector_field: object
    T: float
    step_count: int = 100
    vector_field_id: str = None
    vf_params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "W", np.asarray(self.W, dtype=float))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))
        object.__setattr__(self, "W_tilde", np.asarray(self.W_tilde, dtype=float))
        object.__setattr__(self, "b_tilde", np.asarray(self.b_tilde, dtype=float))
        if self.W.shape != (self.m, self.d):
            raise ValueError(f"W has shape {self.W.shape}, expected "
                             f"({self.m}, {self.d})")
        if self.W_tilde.shape != (self.q, self.m):
            raise ValueError(f"W_tilde has shape {self.W_tilde.shape}, expected "
                             f"({self.q}, {self.m})")
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        if self.step_count < 1:
            raise ValueError("step_count must be >= 1")

    def classify(self):
        return classify_ode_arch(self.d, self.m, self.q, self.W, self.W_tilde)


def node_forward(spec, x):
    """Lift, integrate h' = f(t, h) with RK4, read out."""
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.d,):
        raise ValueError(f"input has shape {x.shape}, expected ({spec.d},)")
    h0 = spec.W @ x + spec.b
    hT = integrate_rk4(spec.vector_field, h0, 0.0, spec.T, spec.step_count)
    return spec.W_tilde @ hT + spec.b_tilde


class HistorySegment:
    """View of a DDE solution on [t - tau, t], evaluable at any lag s in [-tau, 0].

    Lags reaching into completed steps use cubic-Hermite dense output on the
    RK4 grid; lags before t = 0 evaluate the initial function exactly; lags
    inside the step currently under construction interpolate linearly toward
    the active stage point, so s = 0 returns the stage state itself.
    """

    def __init__(self, dense, t_anchor, y_anchor):
        self._dense = dense
        self.t = t_anchor
        self._y = y_anchor

    def __call__(self, s):
        if s > 1e-12 or s < -self._dense.tau - 1e-12:
            raise ValueError(f"lag {s} outside [-tau, 0]")
        tq = self.t + s
        if tq >= self.t:
            return self._y
        knot_t, knot_y = self._dense.last_knot()
        if tq > knot_t:
            w = (tq - knot_t) / (self.t - knot_t)
            return (1.0 - w) * knot_y + w * self._y
        return self._dense.eval(tq)


class _DenseSolution:
    def __init__(self, history_fn, tau, m):
        self.history_fn = history_fn
        self.tau = tau
        self.m = m
        self.ts = [0.0]
        self.ys = [np.asarray(history_fn(0.0), dtype=float)]
        self.ds = [None]  # derivative at each knot, filled as steps complete

    def last_knot(self):
        return self.ts[-1], self.ys[-1]

    def append(self, t, y, d_prev):
        # d_prev is the derivative at the previous knot (the step's k1)
        if self.ds[-1] is None:
            self.ds[-1] = d_prev
        self.ts.append(t)
        self.ys.append(y)
        self.ds.append(None)

    def eval(self, t):
        if t <= 0.0:
            return np.asarray(self.history_fn(t), dtype=float)
        idx = int(np.searchsorted(self.ts, t, side="right")) - 1
        idx = min(max(idx, 0), len(self.ts) - 2)
        t0, t1 = self.ts[idx], self.ts[idx + 1]
        y0, y1 = self.ys[idx], self.ys[idx + 1]
        d0, d1 = self.ds[idx], self.ds[idx + 1]
        if d0 is None or d1 is None:
            # derivative not yet recorded (query at the leading edge)
            w = (t - t0) / (t1 - t0)
            return (1.0 - w) * y0 + w * y1
        h = t1 - t0
        s = (t - t0) / h
        s2, s3 = s * s, s * s * s
        return ((2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * h * d0
                + (-2 * s3 + 3 * s2) * y1 + (s3 - s2) * h * d1)


def integrate_dde(F, history_fn, tau, T, steps_per_interval, keep_trajectory=False):
    """Method of steps: advance one delay interval at a time with RK4.

    ``F(t, segment)`` sees a :class:`HistorySegment`.  ``history_fn`` must be
    defined on [-tau, 0].  With ``tau = 0`` this reduces exactly to plain
    RK4 on the pointwise field f(t, h) = F(t, constant segment h).
    """
    if tau < 0:
        raise ValueError("delay tau must be >= 0")
    y0 = np.asarray(history_fn(0.0), dtype=float)
    if tau == 0.0:
        def f(t, h):
            seg = HistorySegment(_ZeroDelayDense(), t, np.asarray(h, dtype=float))
            return F(t, seg)
        return integrate_rk4(f, y0, 0.0, T, steps_per_interval,
                             keep_trajectory=keep_trajectory)

    dense = _DenseSolution(history_fn, tau, y0.shape[0])
    n_intervals = int(math.ceil(T / tau - 1e-12))
    traj = [y0.copy()] if keep_trajectory else None
    step_index = 0
    for k in range(n_intervals):
        t_start = k * tau
        t_end = min((k + 1) * tau, T)
        dt = (t_end - t_start) / steps_per_interval
        for n in range(steps_per_interval):
            t = t_start + n * dt
            y = dense.ys[-1]

            def stage(ts, ys):
                return np.asarray(F(ts, HistorySegment(dense, ts, ys)))

            k1 = stage(t, y)
            k2 = stage(t + 0.5 * dt, y + 0.5 * dt * k1)
            k3 = stage(t + 0.5 * dt, y + 0.5 * dt * k2)
            k4 = stage(t + dt, y + dt * k3)
            y_new = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            step_index += 1
            if not np.all(np.isfinite(y_new)):
                raise DivergenceError(
                    f"state became non-finite at step {step_index}",
                    step=step_index)
            dense.append(t + dt, y_new, k1)
            if keep_trajectory:
                traj.append(y_new.copy())
    # record the terminal derivative so late dense queries stay Hermite
    yT = dense.ys[-1]
    dense.ds[-1] = np.asarray(F(dense.ts[-1],
                                HistorySegment(dense, dense.ts[-1], yT)))
    if keep_trajectory:
        return yT, np.array(traj)
    return yT


class _ZeroDelayDense:
    tau = 0.0

    def last_knot(self):
        raise RuntimeError("zero-delay segment has no history")

    def eval(self, t):
        raise RuntimeError("zero-delay segment has no history")


@dataclass(frozen=True)
class NeuralDDESpec:
    d: int
    m: int
    q: int
    W: np.ndarray
    b: np.ndarray
    W_tilde: np.ndarray
    b_tilde: np.ndarray
    vector_field: object  # F(t, segment) -> m-vector
    T: float
    tau: float
    step_count: int = 100  # RK4 steps per delay interval (per [0,T] if tau=0)
    vector_field_id: str = None
    vf_params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "W", np.asarray(self.W, dtype=float))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))
        object.__setattr__(self, "W_tilde", np.asarray(self.W_tilde, dtype=float))
        object.__setattr__(self, "b_tilde", np.asarray(self.b_tilde, dtype=float))
        if self.tau < 0:
            raise ValueError("delay tau must be >= 0")
        if not self.T > 0:
            raise ValueError("horizon T must be positive")

    def classify(self):
        return classify_ode_arch(self.d, self.m, self.q, self.W, self.W_tilde)


def ndde_forward(spec, x):
    """Lift to a constant initial function, solve the DDE, read out h(T)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.d,):
        raise ValueError(f"input has shape {x.shape}, expected ({spec.d},)")
    lifted = spec.W @ x + spec.b

    def history(_t):
        return lifted

    hT = integrate_dde(spec.vector_field, history, spec.tau, spec.T,
                       spec.step_count)
    return spec.W_tilde @ hT + spec.b_tilde


def euler_resnet_of_node(f, L, T):
    """Depth-L explicit-Euler residual map h_{l+1} = h_l + (T/L) f(lT/L, h_l)."""
    if L < 1:
        raise ValueError("depth L must be >= 1")
    dt = T / L

    def euler_map(h0):
        h = np.asarray(h0, dtype=float).copy()
        for l in range(L):
            h = h + dt * np.asarray(f(l * dt, h))
        return h

    euler_map.depth = L
    return euler_map


# ---------------------------------------------------------------------------
# memory capacity of delay architectures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MemoryReport:
    """Memory capacity K*tau of a delay network against the two thresholds.

    Terminology: an architecture family has the *universal approximation*
    property for a function class when every target in the class can be
    matched to arbitrary uniform accuracy by some parameter choice, and the
    stronger *universal embedding* property when every target can be
    represented exactly.  Neither predicate is decidable numerically; this
    report only evaluates the two known analytic thresholds in the
    (K, tau) plane.

    ``small_memory_flag`` marks the candidate no-universal-approximation
    regime K*tau*e < 1 (the exact boundary function of K is known to exist
    but is not explicit, so this is an indicator, not a proof).
    ``embed_capable_flag`` marks K*tau >= 2(1 + K_psi/(w*w_tilde)), the
    sufficient representation condition for a target with Lipschitz constant
    K_psi under weight caps (w, w_tilde).  Both flags may be false: the gap
    region in between is not classified.
    """

    K: float
    tau: float
    K_psi: float = None
    w: float = None
    w_tilde: float = None

    def __post_init__(self):
        if self.K < 0 or self.tau < 0:
            raise ValueError("K and tau must be nonnegative")
        if self.K_psi is not None:
            if self.K_psi < 0:
                raise ValueError("K_psi must be nonnegative")
            if not (self.w > 0 and self.w_tilde > 0):
                raise ValueError("weight caps w, w_tilde must be positive")

    @property
    def memory_capacity(self):
        return self.K * self.tau

    @property
    def small_memory_flag(self):
        return self.K * self.tau * E < 1.0

    @property
    def embed_capable_flag(self):
        if self.K_psi is None:
            return None
        return self.K * self.tau >= 2.0 * (1.0 + self.K_psi / (self.w * self.w_tilde))


def memory_report(K, tau, target=None):
    """Build a :class:`MemoryReport`; ``target`` is an optional (K_psi, w, w_tilde)."""
    if target is None:
        return MemoryReport(K=float(K), tau=float(tau))
    k_psi, w, w_tilde = target
    return MemoryReport(K=float(K), tau=float(tau), K_psi=float(k_psi),
                        w=float(w), w_tilde=float(w_tilde))


def estimate_lipschitz(f, lo, hi, rng, pairs=10_000):
    """Sampled max difference ratio of ``f`` over a box; a lower bound only."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    gen = rng.gen
    best = 0.0
    for _ in range(pairs):
        u = gen.uniform(lo, hi)
        v = gen.uniform(lo, hi)
        den = np.max(np.abs(u - v))
        if den == 0:
            continue
        num = np.max(np.abs(np.asarray(f(u)) - np.asarray(f(v))))
        best = max(best, num / den)
    return best


# ---------------------------------------------------------------------------
# vector-field registry (arbitrary code is not serializable; fields are
# referenced by id plus a parameter dict)
# ---------------------------------------------------------------------------

def _vf_zero(params):
    def f(t, h):
        return np.zeros_like(h)
    return f


def _vf_linear(params):
    a = params.get("matrix")
    scale = float(params.get("scale", 1.0))
    if a is not None:
        a = np.asarray(a, dtype=float)

        def f(t, h):
            return a @ h
        return f

    def f(t, h):
        return scale * h
    return f


def _vf_decay(params):
    rate = float(params.get("rate", 1.0))

    def f(t, h):
        return -rate * h
    return f


def _vf_tanh_net(params):
    w1 = np.asarray(params["W1"], dtype=float)
    b1 = np.asarray(params["b1"], dtype=float)
    w2 = np.asarray(params["W2"], dtype=float)
    b2 = np.asarray(params["b2"], dtype=float)

    def f(t, h):
        return w2 @ np.tanh(w1 @ h + b1) + b2
    return f


VECTOR_FIELDS = {
    "zero": _vf_zero,
    "linear": _vf_linear,
    "decay": _vf_decay,
    "tanh-net": _vf_tanh_net,
}


def make_vector_field(vf_id, params=None):
    try:
        factory = VECTOR_FIELDS[vf_id]
    except KeyError:
        raise ValueError(f"unknown vector field id {vf_id!r}") from None
    return factory(params or {})


def delayed_field(vf_id, params=None, tau=0.0):
    """Wrap a registry field into F(t, segment) acting on the lagged state."""
    base = make_vector_field(vf_id, params)
    lag = -float(tau)

    def F(t, seg):
        return base(t, seg(lag))
    return F


# ---------------------------------------------------------------------------
# JSON schema (documented field names: layer_dims, weights, biases,
# activation, vector_field_id, T, tau, steps)
# ---------------------------------------------------------------------------

def network_to_json(spec):
    if isinstance(spec, MLPSpec):
        return {
            "type": "mlp",
            "layer_dims": spec.layer_dims,
            "weights": [{"W": lp.W.tolist(), "W_tilde": lp.W_tilde.tolist()}
                        for lp in spec.layers],
            "biases": [{"b": lp.b.tolist(), "b_tilde": lp.b_tilde.tolist()}
                       for lp in spec.layers],
            "activation": [lp.activation for lp in spec.layers],
        }
    if isinstance(spec, ResNetSpec):
        return {
            "type": "resnet",
            "layer_dims": [spec.dim] * (len(spec.blocks) + 1),
            "weights": [{"W": lp.W.tolist(), "W_tilde": lp.W_tilde.tolist()}
                        for lp in spec.blocks],
            "biases": [{"b": lp.b.tolist(), "b_tilde": lp.b_tilde.tolist()}
                       for lp in spec.blocks],
            "activation": [lp.activation for lp in spec.blocks],
        }
    if isinstance(spec, (NeuralODESpec, NeuralDDESpec)):
        if spec.vector_field_id is None:
            raise ValueError("only registry vector fields are serializable")
        doc = {
            "type": "ndde" if isinstance(spec, NeuralDDESpec) else "node",
            "dims": [spec.d, spec.m, spec.q],
            "weights": {"W": spec.W.tolist(), "W_tilde": spec.W_tilde.tolist()},
            "biases": {"b": spec.b.tolist(), "b_tilde": spec.b_tilde.tolist()},
            "vector_field_id": spec.vector_field_id,
            "vf_params": {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                          for k, v in spec.vf_params.items()},
            "T": spec.T,
            "steps": spec.step_count,
        }
        if isinstance(spec, NeuralDDESpec):
            doc["tau"] = spec.tau
        return doc
    raise TypeError(f"unsupported spec type {type(spec).__name__}")


def network_from_json(doc):
    kind = doc["type"]
    if kind in ("mlp", "resnet"):
        layers = tuple(
            LayerParams(W=w["W"], b=b["b"], W_tilde=w["W_tilde"],
                        b_tilde=b["b_tilde"], activation=act)
            for w, b, act in zip(doc["weights"], doc["biases"],
                                 doc["activation"]))
        if kind == "mlp":
            return MLPSpec(layers)
        return ResNetSpec(dim=int(doc["layer_dims"][0]), blocks=layers)
    if kind in ("node", "ndde"):
        d, m, q = (int(v) for v in doc["dims"])
        params = doc.get("vf_params", {})
        common = dict(
            d=d, m=m, q=q,
            W=doc["weights"]["W"], b=doc["biases"]["b"],
            W_tilde=doc["weights"]["W_tilde"], b_tilde=doc["biases"]["b_tilde"],
            T=float(doc["T"]), step_count=int(doc["steps"]),
            vector_field_id=doc["vector_field_id"], vf_params=params)
        if kind == "node":
            return NeuralODESpec(vector_field=make_vector_field(
                doc["vector_field_id"], params), **common)
        tau = float(doc["tau"])
        return NeuralDDESpec(vector_field=delayed_field(
            doc["vector_field_id"], params, tau), tau=tau, **common)
    raise ValueError(f"unknown network type {kind!r}")


def save_network(spec, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(network_to_json(spec), fh, indent=2, sort_keys=True)


def load_network(path):
    with open(path, "r", encoding="utf-8") as fh:
        return network_from_json(json.load(fh))
