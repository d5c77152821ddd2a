"""Boltzmann-machine and Hopfield dynamics on binary state spaces.

Site-update conventions: the energy is H(v) = sum_i v_i b_i
- 1/2 sum_ij v_i v_j a_ij and the heat-bath probability of setting site i
to one is p = 1 / (1 + exp(b_i + sign * sum_j a_ij v_j)).  The "balanced"
convention (sign = -1) satisfies detailed balance with respect to
exp(-H)/Z; the "literal" convention (sign = +1) keeps the plus sign and is
available behind a flag but is not stationary for exp(-H).  The balanced
form is therefore the default; the enumeration test in the suite is the
arbiter.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import CapacityError
from .numerics import kl_divergence

ENUMERATION_CAP = 20
_SIGNS = {"balanced": -1.0, "literal": 1.0}


@dataclass(frozen=True)
class SpinNetwork:
    a: np.ndarray
    b: np.ndarray
    require_symmetric: bool = True

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("adjacency must be a square matrix")
        if b.shape != (a.shape[0],):
            raise ValueError("bias vector length must match vertex count")
        if np.any(np.diag(a) != 0):
            raise ValueError("adjacency diagonal must be zero")
        if self.require_symmetric and not np.allclose(a, a.T, atol=0.0):
            raise ValueError("energy-consistent mode requires symmetric adjacency")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def m(self):
        return self.a.shape[0]


def as_state(v, m):
    v = np.asarray(v)
    if v.shape != (m,):
        raise ValueError(f"state must have {m} entries")
    if not np.all((v == 0) | (v == 1)):
        raise ValueError("state entries must be exactly 0 or 1")
    return v.astype(float)


def energy(net, v):
    """H(v) = sum_i v_i b_i - 1/2 sum_ij v_i v_j a_ij."""
    v = as_state(v, net.m)
    return float(v @ net.b - 0.5 * (v @ net.a @ v))


def _update_probability(net, v, i, sign):
    field = float(net.a[i] @ v)
    return 1.0 / (1.0 + math.exp(net.b[i] + sign * field))


def boltzmann_step(net, v, rng, convention="balanced"):
    """One asynchronous update: a uniformly chosen site is resampled to 1
    with the heat-bath probability of the selected convention."""
    sign = _SIGNS[convention]
    v = as_state(v, net.m).copy()
    gen = rng.gen
    i = int(gen.integers(net.m))
    p = _update_probability(net, v, i, sign)
    v[i] = 1.0 if gen.random() < p else 0.0
    return v.astype(int)


def hopfield_step(net, v, rule="threshold", convention="balanced",
                  synchronous=False):
    """Deterministic limiting update.

    ``rule="threshold"`` sets a site to one iff its heat-bath probability
    under the chosen convention exceeds one half.  ``rule="literal"`` keeps
    the p > 0 condition as written, which for a logistic p is always true,
    so the all-ones state absorbs everything; it is shipped for reference
    only.  Updates run synchronously or site-sequentially.
    """
    sign = _SIGNS[convention]
    v = as_state(v, net.m).copy()

    def updated(state, i):
        p = _update_probability(net, state, i, sign)
        if rule == "literal":
            return 1.0 if p > 0.0 else 0.0
        if rule == "threshold":
            return 1.0 if p > 0.5 else 0.0
        raise ValueError(f"unknown rule {rule!r}")

    if synchronous:
        new = np.array([updated(v, i) for i in range(net.m)])
        return new.astype(int)
    for i in range(net.m):
        v[i] = updated(v, i)
    return v.astype(int)


def state_index(v):
    """Lexicographic index with v_1 as the most significant bit."""
    v = np.asarray(v).astype(int)
    idx = 0
    for bit in v:
        idx = 2 * idx + int(bit)
    return idx


def all_states(m):
    idx = np.arange(2 ** m)
    shifts = np.arange(m - 1, -1, -1)
    return ((idx[:, None] >> shifts[None, :]) & 1).astype(float)


def boltzmann_exact_distribution(net):
    """p(v) proportional to exp(-H(v)), in lexicographic state order."""
    if net.m > ENUMERATION_CAP:
        raise CapacityError(f"exact distribution capped at M <= {ENUMERATION_CAP}")
    states = all_states(net.m)
    h = states @ net.b - 0.5 * np.einsum("si,ij,sj->s", states, net.a, states)
    h -= h.min()
    w = np.exp(-h)
    return w / w.sum()


def transition_matrix(net, convention="balanced"):
    """Single-site Glauber transition kernel (enumeration scale only)."""
    if net.m > 12:
        raise CapacityError("transition matrix capped at M <= 12")
    sign = _SIGNS[convention]
    n = 2 ** net.m
    states = all_states(net.m)
    p = np.zeros((n, n))
    for s in range(n):
        v = states[s]
        for i in range(net.m):
            prob_one = _update_probability(net, v, i, sign)
            w = v.copy()
            w[i] = 1.0
            t_one = state_index(w)
            w[i] = 0.0
            t_zero = state_index(w)
            p[s, t_one] += prob_one / net.m
            p[s, t_zero] += (1.0 - prob_one) / net.m
    return p


def detailed_balance_residual(net, convention="balanced"):
    """Max |pi(v) P(v,w) - pi(w) P(w,v)| over single-site flips (M <= 6)."""
    if net.m > 6:
        raise CapacityError("detailed-balance enumeration capped at M <= 6")
    pi = boltzmann_exact_distribution(net)
    p = transition_matrix(net, convention)
    states = all_states(net.m)
    worst = 0.0
    for s in range(len(states)):
        for i in range(net.m):
            w = states[s].copy()
            w[i] = 1.0 - w[i]
            t = state_index(w)
            worst = max(worst, abs(pi[s] * p[s, t] - pi[t] * p[t, s]))
    return worst


@dataclass
class GibbsCheck:
    tv_distance: float
    mc_error: float
    steps_counted: int
    low_confidence: bool


def gibbs_stationary_check(net, steps, burn_in, rng, v0=None,
                           convention="balanced"):
    """Total-variation distance of Glauber occupation to exp(-H)/Z.

    Runs the asynchronous chain for ``steps`` updates and counts states
    after ``burn_in``.  The reported Monte Carlo error is the usual
    multinomial scale; with nothing counted the estimate degrades to the
    single terminal state and is flagged low-confidence.
    """
    if net.m > 12:
        raise CapacityError("exact comparison capped at M <= 12")
    exact = boltzmann_exact_distribution(net)
    gen = rng.gen
    v = as_state(v0, net.m).copy() if v0 is not None else \
        np.zeros(net.m)
    sites = gen.integers(net.m, size=steps).astype(np.int64)
    unifs = gen.random(steps)
    counts = np.zeros(2 ** net.m, dtype=np.int64)
    final_idx = kernels.glauber_chain(net.a, net.b, v, sites, unifs,
                                      _SIGNS[convention], int(burn_in), counts)
    counted = int(counts.sum())
    low_confidence = counted == 0
    if low_confidence:
        counts[final_idx] = 1
        counted = 1
    empirical = counts / counted
    tv = 0.5 * float(np.sum(np.abs(empirical - exact)))
    mc_error = 0.5 * math.sqrt(len(exact) / counted)
    return GibbsCheck(tv, mc_error, counted, low_confidence)


def visible_marginal(net, visible_count):
    """Marginal of the Boltzmann distribution over the trailing hidden sites."""
    if not 0 < visible_count <= net.m:
        raise ValueError("visible_count must lie in 1..M")
    full = boltzmann_exact_distribution(net)
    hidden = net.m - visible_count
    p_minus = np.zeros(2 ** visible_count)
    idx = np.arange(full.shape[0]) >> hidden
    np.add.at(p_minus, idx, full)
    return p_minus


def kl_objective(p_plus, net, visible_count):
    """KL(P+ || P-) with P- the model's visible marginal.

    The Boltzmann distribution is strictly positive, so the marginal can
    never vanish where P+ has mass.
    """
    p_minus = visible_marginal(net, visible_count)
    assert np.all(p_minus > 0), "Boltzmann marginal must be strictly positive"
    p_plus = np.asarray(p_plus, dtype=float)
    if p_plus.shape != p_minus.shape:
        raise ValueError(f"P+ must have {p_minus.shape[0]} entries "
                         "(lexicographic visible configurations)")
    return kl_divergence(p_plus, p_minus)
