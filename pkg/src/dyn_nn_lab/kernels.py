"""Hot numerical kernels, each in a numba and a pure-numpy variant.

The selected variant is exported under the plain name (``kuramoto_drift``,
``glauber_chain``, ``vlasov_run``, ``lyapunov_qr_logs``); the suffixed
variants stay importable for the parity tests and the benchmark.

All kernels are deterministic: any randomness is drawn by the caller and
passed in as arrays, so both backends consume identical streams.
"""

import numpy as np

from .backend import HAS_NUMBA


# ---------------------------------------------------------------------------
# pairwise Kuramoto drift:  d_i = omega_i + sum_j w_ij sin(x_j - x_i)
#
# Both backends evaluate the exact expansion sin(xj - xi) = sin xj cos xi
# - cos xj sin xi, turning the O(M^2) sum into two dense matvecs with only
# O(M) trig calls (still direct, no approximation).  The literal per-pair
# loop needs M^2 sin evaluations and is kept as a cross-check oracle only.
# ---------------------------------------------------------------------------

def _kuramoto_drift_expansion(weights, phases, omega):
    s = np.dot(weights, np.sin(phases))
    c = np.dot(weights, np.cos(phases))
    return omega + np.cos(phases) * s - np.sin(phases) * c


kuramoto_drift_numpy = _kuramoto_drift_expansion


def kuramoto_drift_pairwise(weights, phases, omega):
    m = phases.shape[0]
    out = np.empty(m)
    for i in range(m):
        acc = 0.0
        xi = phases[i]
        for j in range(m):
            acc += weights[i, j] * np.sin(phases[j] - xi)
        out[i] = omega[i] + acc
    return out


# ---------------------------------------------------------------------------
# Glauber chain on {0,1}^M with energy H(v) = sum_i v_i b_i - 1/2 sum v_i v_j a_ij
#
# Site update probability p = 1 / (1 + exp(b_i + sign * sum_j a_ij v_j)).
# sign=-1 is the detailed-balance convention for H, sign=+1 the literal one.
# Site choices and uniforms are pre-drawn so the chain is backend-independent.
# ---------------------------------------------------------------------------

def _glauber_chain_loop(a, b, v, sites, unifs, sign, burn_in, counts):
    m = v.shape[0]
    # state index with v[0] as the most significant bit (lexicographic order)
    idx = 0
    for i in range(m):
        idx = 2 * idx + int(v[i])
    n_steps = sites.shape[0]
    for k in range(n_steps):
        i = sites[k]
        field = 0.0
        for j in range(m):
            field += a[i, j] * v[j]
        p = 1.0 / (1.0 + np.exp(b[i] + sign * field))
        new = 1.0 if unifs[k] < p else 0.0
        if new != v[i]:
            bit = 1 << (m - 1 - i)
            if new == 1.0:
                idx += bit
            else:
                idx -= bit
            v[i] = new
        if k >= burn_in:
            counts[idx] += 1
    return idx


# ---------------------------------------------------------------------------
# Vlasov finite-volume upwind stepping for the Kuramoto velocity field
#
# u: (R, n) cell averages, one row per frequency atom.  The velocity of
# component r is V_r(x) = omega_r + K*(S cos x - C sin x) with the first
# circular moments S = sum_r zeta_r * sum_k u[r,k] sin(xc_k) dx, C likewise.
# Returns -1 on success or the step index of the first CFL violation.
# ---------------------------------------------------------------------------

def _vlasov_run_loop(u, omegas, zeta, coupling, dx, dt, n_steps,
                     sin_c, cos_c, sin_f, cos_f):
    nr, n = u.shape
    flux = np.empty((nr, n))
    for step in range(n_steps):
        s_mom = 0.0
        c_mom = 0.0
        for r in range(nr):
            acc_s = 0.0
            acc_c = 0.0
            for k in range(n):
                acc_s += u[r, k] * sin_c[k]
                acc_c += u[r, k] * cos_c[k]
            s_mom += zeta[r] * acc_s * dx
            c_mom += zeta[r] * acc_c * dx
        # all fluxes and the CFL bound are computed before any cell update so
        # an abort leaves u consistent at the pre-step state
        vmax = 0.0
        for r in range(nr):
            for k in range(n):
                vf = omegas[r] + coupling * (s_mom * cos_f[k] - c_mom * sin_f[k])
                av = abs(vf)
                if av > vmax:
                    vmax = av
                kp = k + 1 if k + 1 < n else 0
                flux[r, k] = vf * u[r, k] if vf > 0.0 else vf * u[r, kp]
        if vmax * dt > 0.5 * dx:
            return step
        for r in range(nr):
            for k in range(n):
                km = k - 1 if k > 0 else n - 1
                u[r, k] -= (dt / dx) * (flux[r, k] - flux[r, km])
    return -1


# ---------------------------------------------------------------------------
# Lyapunov exponent via QR-renormalized frame products
#
# mats: (n_mats, k, k) stack, idx: matrix index per step.  Returns the per-step
# log |R_11| values; the caller averages past its burn-in.
# ---------------------------------------------------------------------------

def _lyapunov_qr_logs_loop(mats, idx, q0):
    n_steps = idx.shape[0]
    logs = np.empty(n_steps)
    q = q0.copy()
    for k in range(n_steps):
        q, r = np.linalg.qr(np.dot(mats[idx[k]], np.ascontiguousarray(q)))
        logs[k] = np.log(np.abs(r[0, 0]))
    return logs


# pure-numpy aliases share the loop bodies above (no vectorized shortcut is
# possible for these inherently sequential chains)
glauber_chain_numpy = _glauber_chain_loop
vlasov_run_numpy = _vlasov_run_loop
lyapunov_qr_logs_numpy = _lyapunov_qr_logs_loop


if HAS_NUMBA:
    from numba import njit

    kuramoto_drift_numba = njit(cache=True)(_kuramoto_drift_expansion)
    glauber_chain_numba = njit(cache=True)(_glauber_chain_loop)
    vlasov_run_numba = njit(cache=True)(_vlasov_run_loop)
    lyapunov_qr_logs_numba = njit(cache=True)(_lyapunov_qr_logs_loop)

    kuramoto_drift = kuramoto_drift_numba
    glauber_chain = glauber_chain_numba
    vlasov_run = vlasov_run_numba
    lyapunov_qr_logs = lyapunov_qr_logs_numba
else:
    kuramoto_drift_numba = None
    glauber_chain_numba = None
    vlasov_run_numba = None
    lyapunov_qr_logs_numba = None

    kuramoto_drift = kuramoto_drift_numpy
    glauber_chain = glauber_chain_numpy
    vlasov_run = vlasov_run_numpy
    lyapunov_qr_logs = lyapunov_qr_logs_numpy
