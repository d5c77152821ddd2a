"""Interacting-particle simulators, the Kuramoto Vlasov solver, and
mean-field convergence diagnostics on explicit, graphon-derived, and
digraph-measure graphs.

Coupling conventions follow the graph source: deterministic runs use
``x_i' = f_i(x_i) + sum_j w_ij g(x_i, x_j)`` with w built as K/M for
all-to-all graphs, the literal matrix for explicit ones, and cell-average/M
for graphon cells; the stochastic runs carry the explicit 1/M prefactor and
the sources supply the matching O(1) entries.  O(M^2) coupling sums are
evaluated directly (desk scale caps M at about 2e4).
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from . import kernels
from .errors import DivergenceError
from .numerics import MeasureAtoms, wasserstein1

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# graph sources
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AllToAll:
    """Uniform coupling a_ij = K/M (deterministic) / a_ij = K (stochastic)."""

    K: float


@dataclass(frozen=True)
class ExplicitMatrix:
    a: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("adjacency matrix must be square")
        if not np.all(np.isfinite(a)):
            raise ValueError("adjacency matrix has non-finite entries")
        object.__setattr__(self, "a", a)


@dataclass(frozen=True)
class GraphonCells:
    """Adjacency from cell averages of a kernel G on [0,1]^2.

    Entries are the averages of G over I_i x I_j computed with a tensor
    Gauss-Legendre rule of the given order per cell (the raw cell integral
    times M^2, so entries stay O(1) as M grows).
    """

    graphon: object
    quad_order: int = 4


def _graphon_cell_averages(g, m, order):
    # cell average of G over I_i x I_j via the substitution x = (i+s)/M:
    # it becomes the unit-square integral of G((i+s)/M, (j+t)/M)
    nodes, weights = np.polynomial.legendre.leggauss(order)
    nodes = 0.5 * (nodes + 1.0)
    weights = 0.5 * weights   # sums to 1 on [0, 1]
    pts = (np.arange(m)[:, None] + nodes[None, :]) / m   # (m, order)
    xx = pts[:, :, None, None]
    yy = pts[None, None, :, :]
    vals = np.broadcast_to(g(xx, yy), (m, order, m, order))
    return np.einsum("iajb,a,b->ij", vals, weights, weights)


def graph_weights(graph, m, convention="deterministic"):
    """Dense weight matrix for one of the graph sources.

    deterministic: drift = f + sum_j w_ij g;  stochastic: the integrator
    applies the explicit 1/M itself, so entries here are O(1).
    """
    if convention not in ("deterministic", "stochastic"):
        raise ValueError(f"unknown convention {convention!r}")
    if isinstance(graph, AllToAll):
        scale = graph.K / m if convention == "deterministic" else graph.K
        w = np.full((m, m), scale)
        np.fill_diagonal(w, 0.0)
        return w
    if isinstance(graph, ExplicitMatrix):
        if graph.a.shape[0] != m:
            raise ValueError(f"explicit matrix is {graph.a.shape[0]}x"
                             f"{graph.a.shape[0]}, need M = {m}")
        return graph.a.copy()
    if isinstance(graph, GraphonCells):
        avg = _graphon_cell_averages(graph.graphon, m, graph.quad_order)
        return avg / m if convention == "deterministic" else avg
    raise TypeError(f"unknown graph source {type(graph).__name__}")


GRAPHONS = {
    "constant": lambda params: (lambda x, y: np.full(np.broadcast(x, y).shape,
                                                     float(params.get("c", 1.0)))),
    "ranked": lambda params: (lambda x, y: x * y),
    "block": lambda params: _block_graphon(params),
}


def _block_graphon(params):
    p_in = float(params.get("p_in", 1.0))
    p_out = float(params.get("p_out", 0.2))
    split = float(params.get("split", 0.5))

    def g(x, y):
        same = (x < split) == (y < split)
        return np.where(same, p_in, p_out)
    return g


def make_graphon(graphon_id, params=None):
    try:
        factory = GRAPHONS[graphon_id]
    except KeyError:
        raise ValueError(f"unknown graphon id {graphon_id!r}") from None
    g = factory(params or {})
    g.registry_id = graphon_id
    g.registry_params = dict(params or {})
    return g


def graph_to_json(graph):
    """Serializable form of a graph source (graphons by registry id)."""
    if isinstance(graph, AllToAll):
        return {"kind": "all-to-all", "K": graph.K}
    if isinstance(graph, ExplicitMatrix):
        return {"kind": "explicit", "a": graph.a.tolist()}
    if isinstance(graph, GraphonCells):
        gid = getattr(graph.graphon, "registry_id", None)
        if gid is None:
            raise ValueError("only registry graphons are serializable")
        return {"kind": "graphon", "graphon_id": gid,
                "params": dict(getattr(graph.graphon, "registry_params", {})),
                "quad_order": graph.quad_order}
    raise TypeError(f"unknown graph source {type(graph).__name__}")


def graph_from_json(doc):
    kind = doc["kind"]
    if kind == "all-to-all":
        return AllToAll(float(doc["K"]))
    if kind == "explicit":
        return ExplicitMatrix(np.asarray(doc["a"], dtype=float))
    if kind == "graphon":
        g = make_graphon(doc["graphon_id"], doc.get("params"))
        return GraphonCells(g, quad_order=int(doc.get("quad_order", 4)))
    raise ValueError(f"unknown graph kind {kind!r}")


# ---------------------------------------------------------------------------
# particle models
# ---------------------------------------------------------------------------

@dataclass
class IPSModel:
    """Pairwise-coupled particle system.

    ``intrinsic`` maps states (M, dim) to drifts; ``coupling`` is vectorized
    over broadcast pairs g(x_i, x_j); ``noise`` (optional) has the coupling
    signature and feeds the stochastic integrator.  ``kernel_id`` marks
    models with an accelerated drift kernel; ``rhs_override`` replaces the
    pairwise sum entirely (transformer softmax).  f, g, h are assumed
    Lipschitz on the working domain.
    """

    name: str
    dim: int
    phase_space: str  # "circle" | "euclidean"
    intrinsic: object
    coupling: object
    noise: object = None
    kernel_id: str = None
    kernel_params: dict = field(default_factory=dict)
    rhs_override: object = None
    default_graph: object = None


def _pairwise_sum(weights, x, g):
    pair = g(x[:, None, :], x[None, :, :])
    return np.einsum("ij,ijd->id", weights, pair)


def drift(model, weights, x):
    """Full drift f_i(x_i) + sum_j w_ij g(x_i, x_j) at state x (M, dim)."""
    if model.rhs_override is not None:
        return model.rhs_override(x)
    if model.kernel_id == "kuramoto":
        omega = np.ascontiguousarray(np.broadcast_to(
            np.asarray(model.kernel_params["omega"], dtype=float),
            (x.shape[0],)))
        return kernels.kuramoto_drift(np.ascontiguousarray(weights),
                                      np.ascontiguousarray(x[:, 0]),
                                      omega)[:, None]
    out = model.intrinsic(x)
    if model.coupling is None:
        return out
    return out + _pairwise_sum(weights, x, model.coupling)


@dataclass
class IPSTrajectory:
    times: np.ndarray
    states: np.ndarray  # (n_rec, M, dim), circle states wrapped mod 2 pi

    def final(self):
        return self.states[-1]


def _wrap(model, x):
    if model.phase_space == "circle":
        return np.mod(x, TWO_PI)
    return x


def simulate_ips(model, graph, x0, dt, T, record_every=1):
    """RK4 integration of the coupled system.

    Circular phase spaces integrate in lifted coordinates and wrap only the
    recorded outputs.  The j-summation order inside each drift row is fixed,
    so results do not depend on scheduling.
    """
    x = np.asarray(x0, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    m = x.shape[0]
    if dt <= 0:
        raise ValueError("dt must be positive")
    w = graph_weights(graph, m, "deterministic")
    n_steps = int(round(T / dt))
    times = [0.0]
    states = [_wrap(model, x.copy())]
    for n in range(n_steps):
        k1 = drift(model, w, x)
        k2 = drift(model, w, x + 0.5 * dt * k1)
        k3 = drift(model, w, x + 0.5 * dt * k2)
        k4 = drift(model, w, x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"state became non-finite at t = {(n + 1) * dt:g}",
                                  step=n + 1)
        if (n + 1) % record_every == 0 or n == n_steps - 1:
            times.append((n + 1) * dt)
            states.append(_wrap(model, x.copy()))
    return IPSTrajectory(np.array(times), np.array(states))


def euler_maruyama(drift_fn, noise_fn, x0, dt, n_steps, increments,
                   record_every=1):
    """Euler-Maruyama driver with externally supplied Brownian increments."""
    x = np.asarray(x0, dtype=float).copy()
    times = [0.0]
    states = [x.copy()]
    for n in range(n_steps):
        x = x + dt * drift_fn(x) + noise_fn(x) * increments[n]
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"state became non-finite at t = {(n + 1) * dt:g}",
                                  step=n + 1)
        if (n + 1) % record_every == 0 or n == n_steps - 1:
            times.append((n + 1) * dt)
            states.append(x.copy())
    return np.array(times), np.array(states)


def simulate_sde_ips(model, graphs, x0, dt, T, rng, record_every=1):
    """Euler-Maruyama for dx_i = f dt + (1/M) sum_j a_ij g dt
    + [(1/M) sum_j a_hat_ij h(x_i, x_j)] dW^i.

    ``graphs`` is the pair (drift graph, noise graph); Brownian increments
    are independent per particle and component, drawn from the seeded
    stream.  Fixed seed and dt give bit-identical trajectories.
    """
    if model.noise is None:
        raise ValueError("model has no noise coupling h")
    x = np.asarray(x0, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    m = x.shape[0]
    a_graph, ahat_graph = graphs
    w = graph_weights(a_graph, m, "stochastic")
    w_hat = graph_weights(ahat_graph, m, "stochastic")
    n_steps = int(round(T / dt))
    gen = rng.gen
    increments = math.sqrt(dt) * gen.normal(size=(n_steps, m, x.shape[1]))

    def drift_fn(state):
        out = model.intrinsic(state)
        if model.coupling is not None:
            out = out + _pairwise_sum(w / m, state, model.coupling)
        return out

    def noise_fn(state):
        return _pairwise_sum(w_hat / m, state, model.noise)

    times, states = euler_maruyama(drift_fn, noise_fn, x, dt, n_steps,
                                   increments, record_every)
    return IPSTrajectory(times, np.array([_wrap(model, s) for s in states]))


# ---------------------------------------------------------------------------
# model zoo
# ---------------------------------------------------------------------------

def kuramoto(K, omega):
    """Phase oscillators x_i' = omega_i + sum_j a_ij sin(x_j - x_i)."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))

    def intrinsic(x):
        om = omega if omega.shape[0] == x.shape[0] else \
            np.full(x.shape[0], omega[0])
        return om[:, None]

    return IPSModel(
        name="kuramoto", dim=1, phase_space="circle",
        intrinsic=intrinsic,
        coupling=lambda xi, xj: np.sin(xj - xi),
        noise=lambda xi, xj: np.ones_like(xi),
        kernel_id="kuramoto", kernel_params={"omega": omega},
        default_graph=AllToAll(K))


def _double_well_vprime(x):
    return x ** 3 - x


def desai_zwanzig(K, v_prime=None):
    """Linear attraction through a confining potential V."""
    vp = v_prime if v_prime is not None else _double_well_vprime
    return IPSModel(
        name="desai_zwanzig", dim=1, phase_space="euclidean",
        intrinsic=lambda x: -vp(x),
        coupling=lambda xi, xj: xj - xi,
        noise=lambda xi, xj: np.ones_like(xi),
        default_graph=AllToAll(K))


def hegselmann_krause(K, c, d):
    """Bounded-confidence opinion dynamics with window [-c, d]."""
    if c < 0 or d < 0:
        raise ValueError("confidence thresholds must be nonnegative")

    def g(xi, xj):
        diff = xj - xi
        return diff * ((diff >= -c) & (diff <= d))

    return IPSModel(
        name="hegselmann_krause", dim=1, phase_space="euclidean",
        intrinsic=lambda x: np.zeros_like(x),
        coupling=g, default_graph=AllToAll(K))


def cucker_smale(K, alpha):
    """Flocking in (position, velocity) coordinates with decaying influence."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")

    def intrinsic(x):
        out = np.zeros_like(x)
        out[:, 0] = x[:, 1]
        return out

    def g(xi, xj):
        out = np.zeros(np.broadcast(xi, xj).shape)
        out[..., 1] = (xj[..., 1] - xi[..., 1]) / \
            (1.0 + np.abs(xi[..., 0] - xj[..., 0]) ** alpha)
        return out

    return IPSModel(
        name="cucker_smale", dim=2, phase_space="euclidean",
        intrinsic=intrinsic, coupling=g, default_graph=AllToAll(K))


def hopfield_cts(alpha, b, A):
    """Continuous Hopfield units x_i' = -alpha x_i + sum_j a_ij h(x_j) + b_i."""
    if alpha <= 0:
        raise ValueError("relaxation rate alpha must be positive")
    b = np.atleast_1d(np.asarray(b, dtype=float))

    def intrinsic(x):
        bb = b if b.shape[0] == x.shape[0] else np.full(x.shape[0], b[0])
        return -alpha * x + bb[:, None]

    return IPSModel(
        name="hopfield_cts", dim=1, phase_space="euclidean",
        intrinsic=intrinsic,
        coupling=lambda xi, xj: 1.0 / (1.0 + np.exp(-xj)),
        default_graph=ExplicitMatrix(A))


def transformer_ode(m1, m2, m3):
    """Self-attention flow x_i' = sum_j softmax_j(m1 x_i . m2 x_j) m3 x_j."""
    m1 = np.asarray(m1, dtype=float)
    m2 = np.asarray(m2, dtype=float)
    m3 = np.asarray(m3, dtype=float)

    def weights(x):
        scores = (x @ m1.T) @ (x @ m2.T).T
        scores -= scores.max(axis=1, keepdims=True)
        e = np.exp(scores)
        return e / e.sum(axis=1, keepdims=True)

    def rhs(x):
        return weights(x) @ (x @ m3.T)

    model = IPSModel(
        name="transformer", dim=m3.shape[1], phase_space="euclidean",
        intrinsic=lambda x: np.zeros_like(x), coupling=None,
        rhs_override=rhs, default_graph=AllToAll(1.0))
    model.softmax_weights = weights
    return model


MODEL_ZOO = ("cucker_smale", "desai_zwanzig", "hegselmann_krause",
             "hopfield_cts", "kuramoto", "transformer")


# ---------------------------------------------------------------------------
# measures and synchrony diagnostics
# ---------------------------------------------------------------------------

def empirical_measure(states, phase_space="circle"):
    """Equal-weight atoms at the particle positions (1/M each)."""
    x = np.asarray(states, dtype=float)
    if x.ndim == 2 and x.shape[1] == 1:
        x = x[:, 0]
    if phase_space == "circle":
        x = np.mod(x, TWO_PI)
    m = x.shape[0]
    return MeasureAtoms(x, np.full(m, 1.0 / m))


def order_parameter(phases):
    """Modulus of the mean unit phasor; 1 at synchrony, 0 at incoherence."""
    x = np.asarray(phases, dtype=float).reshape(-1)
    return float(np.abs(np.mean(np.exp(1j * x))))


# ---------------------------------------------------------------------------
# Vlasov solver (finite-volume upwind on a periodic grid)
# ---------------------------------------------------------------------------

@dataclass
class DensityGrid:
    """Cell-averaged densities on [0, 2 pi), one row per frequency atom.

    Each component integrates to one; ``zeta`` are the frequency-atom
    weights (a discretization of the frequency distribution).
    """

    values: np.ndarray          # (R, n) nonnegative cell averages
    omegas: np.ndarray = None   # (R,)
    zeta: np.ndarray = None     # (R,) weights summing to 1

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        r = v.shape[0]
        omegas = np.zeros(r) if self.omegas is None else \
            np.atleast_1d(np.asarray(self.omegas, dtype=float))
        zeta = np.full(r, 1.0 / r) if self.zeta is None else \
            np.atleast_1d(np.asarray(self.zeta, dtype=float))
        if omegas.shape != (r,) or zeta.shape != (r,):
            raise ValueError("omegas and zeta must have one entry per component")
        if abs(zeta.sum() - 1.0) > 1e-9:
            raise ValueError("frequency weights zeta must sum to 1")
        if np.any(v < -1e-12):
            raise ValueError("densities must be nonnegative")
        v = np.maximum(v, 0.0)  # clamp roundoff-scale negatives only
        dx = TWO_PI / v.shape[1]
        masses = v.sum(axis=1) * dx
        if np.any(np.abs(masses - 1.0) > 1e-9):
            raise ValueError("each density component must integrate to 1")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "omegas", omegas)
        object.__setattr__(self, "zeta", zeta)

    @property
    def n_cells(self):
        return self.values.shape[1]

    @property
    def dx(self):
        return TWO_PI / self.n_cells

    @property
    def centers(self):
        return (np.arange(self.n_cells) + 0.5) * self.dx

    def masses(self):
        return self.values.sum(axis=1) * self.dx

    def mixed_density(self):
        return self.zeta @ self.values


def uniform_density(n_cells, omegas=None, zeta=None):
    r = 1 if omegas is None else len(np.atleast_1d(omegas))
    return DensityGrid(np.full((r, n_cells), 1.0 / TWO_PI), omegas, zeta)


def bump_density(n_cells, center=math.pi, omegas=None, zeta=None):
    """Raised-cosine bump (1 + cos(x - center)) / (2 pi), cell-averaged."""
    dx = TWO_PI / n_cells
    edges = np.arange(n_cells + 1) * dx
    # exact cell averages of the raised cosine
    anti = (edges + np.sin(edges - center)) / TWO_PI
    cells = np.diff(anti) / dx
    r = 1 if omegas is None else len(np.atleast_1d(omegas))
    return DensityGrid(np.tile(cells, (r, 1)), omegas, zeta)


@dataclass
class VlasovResult:
    times: np.ndarray
    snapshots: list       # list of (R, n) arrays
    final: DensityGrid    # terminal state


def _vlasov_suggest_dt(u, omegas, zeta, coupling, dx):
    n = u.shape[1]
    xc = (np.arange(n) + 0.5) * dx
    s = float(np.sum(zeta @ (u * np.sin(xc)[None, :])) * dx)
    c = float(np.sum(zeta @ (u * np.cos(xc)[None, :])) * dx)
    vmax = max(abs(omegas[r]) + abs(coupling) * math.hypot(s, c)
               for r in range(u.shape[0]))
    return 0.45 * dx / max(vmax, 1e-300)


def vlasov_kuramoto_solve(grid, coupling, T, dt, record_every=None):
    """March the Kuramoto Vlasov equation with first-order upwind volumes.

    The advection velocity is rebuilt each step from the first circular
    moments (O(n) per step).  Aborts with a suggested dt on the first CFL
    violation; mass per component is conserved to roundoff.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    n_steps = int(round(T / dt))
    u = grid.values.copy()
    omegas = np.ascontiguousarray(grid.omegas)
    zeta = np.ascontiguousarray(grid.zeta)
    xc = grid.centers
    xf = (np.arange(grid.n_cells) + 1.0) * grid.dx
    sin_c, cos_c = np.sin(xc), np.cos(xc)
    sin_f, cos_f = np.sin(xf), np.cos(xf)
    if record_every is None:
        record_every = max(n_steps, 1)
    times = [0.0]
    snaps = [u.copy()]
    done = 0
    while done < n_steps:
        chunk = min(record_every, n_steps - done)
        status = kernels.vlasov_run(u, omegas, zeta, float(coupling), grid.dx,
                                    dt, chunk, sin_c, cos_c, sin_f, cos_f)
        if status >= 0:
            suggested = _vlasov_suggest_dt(u, omegas, zeta, coupling, grid.dx)
            raise DivergenceError(
                f"CFL violated at step {done + status}; use dt <= "
                f"{suggested:.3e}", step=done + status)
        done += chunk
        times.append(done * dt)
        snaps.append(u.copy())
    final = DensityGrid(u, grid.omegas, grid.zeta)
    return VlasovResult(np.array(times), snaps, final)


def density_order_parameter(grid_or_values, zeta=None):
    """First circular moment modulus of the mixed density."""
    if isinstance(grid_or_values, DensityGrid):
        mixed = grid_or_values.mixed_density()
        n = grid_or_values.n_cells
    else:
        v = np.atleast_2d(np.asarray(grid_or_values, dtype=float))
        zeta = np.full(v.shape[0], 1.0 / v.shape[0]) if zeta is None else zeta
        mixed = np.asarray(zeta) @ v
        n = mixed.shape[0]
    dx = TWO_PI / n
    xc = (np.arange(n) + 0.5) * dx
    return float(np.abs(np.sum(mixed * np.exp(1j * xc)) * dx))


def density_atoms(grid_or_values, zeta=None):
    """Atomic view of the mixed density: weight u_k * dx at each center."""
    if isinstance(grid_or_values, DensityGrid):
        mixed = grid_or_values.mixed_density()
        n = grid_or_values.n_cells
    else:
        v = np.atleast_2d(np.asarray(grid_or_values, dtype=float))
        zeta = np.full(v.shape[0], 1.0 / v.shape[0]) if zeta is None else zeta
        mixed = np.asarray(zeta) @ v
        n = mixed.shape[0]
    dx = TWO_PI / n
    xc = (np.arange(n) + 0.5) * dx
    return MeasureAtoms(xc, mixed * dx)


def sample_from_density(grid, n_samples, gen, component=0):
    """I.i.d. phases from one density component by inverse-CDF sampling."""
    u = grid.values[component]
    dx = grid.dx
    cdf = np.concatenate([[0.0], np.cumsum(u * dx)])
    cdf /= cdf[-1]
    draws = gen.random(n_samples)
    idx = np.clip(np.searchsorted(cdf, draws, side="right") - 1, 0,
                  grid.n_cells - 1)
    frac = (draws - cdf[idx]) / np.maximum(cdf[idx + 1] - cdf[idx], 1e-300)
    return (idx + frac) * dx


# ---------------------------------------------------------------------------
# convergence and Dobrushin diagnostics
# ---------------------------------------------------------------------------

def meanfield_convergence_study(ms, n_seeds, coupling, T, dt, grid_cells,
                                rng, record_every=None, particle_dt=None,
                                init="bump"):
    """sup_t W1(empirical measure, Vlasov density) for a ladder of M values.

    Particles are sampled i.i.d. from the initial density per (seed, M) from
    deterministic child streams; the Vlasov reference is solved once.
    Returns (table, per_seed) where table rows are (M, mean sup-t W1).
    """
    grid0 = bump_density(grid_cells) if init == "bump" else uniform_density(grid_cells)
    if record_every is None:
        record_every = max(int(round(T / dt)) // 8, 1)
    ref = vlasov_kuramoto_solve(grid0, coupling, T, dt, record_every=record_every)
    ref_times = ref.times
    ref_atoms = [density_atoms(s) for s in ref.snapshots]
    p_dt = particle_dt if particle_dt is not None else dt
    model = kuramoto(coupling, 0.0)
    per_seed = np.zeros((len(ms), n_seeds))
    for mi, m in enumerate(ms):
        for s in range(n_seeds):
            gen = rng.child(s).child(mi).gen
            x0 = sample_from_density(grid0, m, gen)
            steps_between = max(int(round(ref_times[1] / p_dt)), 1) \
                if len(ref_times) > 1 else 1
            traj = simulate_ips(model, AllToAll(coupling), x0, p_dt, T,
                                record_every=steps_between)
            sup_w1 = 0.0
            for t, atoms in zip(ref_times, ref_atoms):
                k = int(np.argmin(np.abs(traj.times - t)))
                emp = empirical_measure(traj.states[k], "circle")
                sup_w1 = max(sup_w1, wasserstein1(emp, atoms, "circle"))
            per_seed[mi, s] = sup_w1
    table = [(m, float(per_seed[mi].mean())) for mi, m in enumerate(ms)]
    return table, per_seed


def dobrushin_check(grid1, grid2, coupling, T, dt, lipschitz, record_every=None):
    """Evolve two densities and compare W1(t) with the e^{2Lt} W1(0) bound.

    Returns rows (t, w1, bound).  A degenerate start (W1(0) = 0) reports the
    raw distances with an infinite bound column left at 0 growth allowance.
    """
    if record_every is None:
        record_every = max(int(round(T / dt)) // 16, 1)
    r1 = vlasov_kuramoto_solve(grid1, coupling, T, dt, record_every=record_every)
    r2 = vlasov_kuramoto_solve(grid2, coupling, T, dt, record_every=record_every)
    rows = []
    w0 = wasserstein1(density_atoms(r1.snapshots[0]),
                      density_atoms(r2.snapshots[0]), "circle")
    for t, s1, s2 in zip(r1.times, r1.snapshots, r2.snapshots):
        w = wasserstein1(density_atoms(s1), density_atoms(s2), "circle")
        bound = math.exp(2.0 * lipschitz * abs(t)) * w0
        rows.append((float(t), float(w), float(bound)))
    return rows


# ---------------------------------------------------------------------------
# digraph measures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DigraphMeasure:
    """Fiber measures eta^u: for u in cell i, atoms a_ij/M at positions j/M."""

    weights: np.ndarray  # (M, M) adjacency entries a_ij (O(1) convention)

    @property
    def m(self):
        return self.weights.shape[0]

    @property
    def positions(self):
        return (np.arange(self.m) + 1.0) / self.m

    def fiber(self, u):
        """Atom weights of the fiber at label u in (0, 1]."""
        i = min(int(math.ceil(u * self.m)) - 1, self.m - 1) if u > 0 else 0
        return self.positions, self.weights[i] / self.m


def digraph_measure_of(graph, m):
    return DigraphMeasure(graph_weights(graph, m, "stochastic"))


def _bl_distance_lp(pos_a, w_a, pos_b, w_b, grid_v):
    """Bounded-Lipschitz distance via piecewise-linear test functions.

    Maximizes sum f d(mu - nu) over node values with |f| <= 1 and slope
    bounded by 1 between grid nodes; an LP that converges to d_inf from
    below as the v-grid refines.
    """
    nodes = np.linspace(0.0, 1.0, grid_v)
    dv = nodes[1] - nodes[0]
    c = np.zeros(grid_v)

    def scatter(pos, w, sign):
        idx = np.clip(np.searchsorted(nodes, pos) - 1, 0, grid_v - 2)
        frac = (pos - nodes[idx]) / dv
        np.add.at(c, idx, sign * w * (1.0 - frac))
        np.add.at(c, idx + 1, sign * w * frac)

    scatter(pos_a, w_a, 1.0)
    scatter(pos_b, w_b, -1.0)
    # maximize c.f  ==  minimize -c.f ; slope constraints |f_{k+1}-f_k| <= dv
    n_con = grid_v - 1
    a_ub = np.zeros((2 * n_con, grid_v))
    rows = np.arange(n_con)
    a_ub[rows, rows] = -1.0
    a_ub[rows, rows + 1] = 1.0
    a_ub[n_con + rows, rows] = 1.0
    a_ub[n_con + rows, rows + 1] = -1.0
    b_ub = np.full(2 * n_con, dv)
    res = linprog(-c, A_ub=a_ub, b_ub=b_ub, bounds=[(-1.0, 1.0)] * grid_v,
                  method="highs")
    if not res.success:
        raise RuntimeError(f"bounded-Lipschitz LP failed: {res.message}")
    return float(-res.fun)


def dgm_distance(dgm_a, dgm_b, grid_u=64, grid_v=101):
    """Approximate sup_u d_BL(eta_a^u, eta_b^u) on a uniform u-grid.

    This is a documented approximation of the bounded-Lipschitz metric; the
    grid sizes are part of any reported result.
    """
    us = (np.arange(grid_u) + 0.5) / grid_u
    cache = {}
    best = 0.0
    for u in us:
        ia = min(int(math.ceil(u * dgm_a.m)) - 1, dgm_a.m - 1)
        ib = min(int(math.ceil(u * dgm_b.m)) - 1, dgm_b.m - 1)
        key = (ia, ib)
        if key not in cache:
            pa, wa = dgm_a.fiber(u)
            pb, wb = dgm_b.fiber(u)
            cache[key] = _bl_distance_lp(pa, wa, pb, wb, grid_v)
        best = max(best, cache[key])
    return best
