"""Numba-compiled numerical cores shared by the LP layer and the simulator.

Everything here is written so that the per-round policy loop can run entirely
in compiled code: the bounded-variable simplex, the finite-factor plug-in
expectations, and the whole-trial loop.  The Python-level API (fluidlp,
policy, simulator) calls the *same* functions, so a trial driven round by
round through the public objects produces bit-identical numbers to the
compiled fast path.  Keep the arithmetic order stable; tests pin exact
equality between the two paths.
"""

import numpy as np
from numba import njit

LP_OPTIMAL = 0
LP_NUMERIC_FAILURE = 1

# tolerances for the simplex: entering threshold and pivot-magnitude guard
_REDCOST_TOL = 1e-12
_PIVOT_TOL = 1e-11


@njit(cache=True, nogil=True)
def pick_index(cum, u):
    """Map a uniform draw to the first index k with u < cum[k]."""
    k = 0
    last = cum.size - 1
    while k < last and u >= cum[k]:
        k += 1
    return k


@njit(cache=True, nogil=True)
def solve_box_lp(obj, A, rhs, phi, lam):
    """Maximize obj@x subject to A@x <= rhs and 0 <= x <= 1.

    Bounded-variable primal simplex with Bland's rule (smallest eligible
    index enters; smallest-index tie break on leaving), started from x = 0
    with all slacks basic, which is always feasible for rhs >= 0.  The
    optimal point is written into ``phi`` and the basis duals of the
    resource rows into ``lam``.  Returns ``(status, objective)``; status is
    LP_NUMERIC_FAILURE on pivot breakdown or an iteration blowup, which for
    these tiny well-scaled problems indicates corrupt input.
    """
    m, nv = A.shape
    ntot = nv + m
    basis = np.empty(m, np.int64)
    in_basis = np.zeros(ntot, np.uint8)
    at_upper = np.zeros(ntot, np.uint8)
    binv = np.eye(m)
    xb = np.empty(m)
    y = np.empty(m)
    w = np.empty(m)
    rhs_eff = np.empty(m)

    for i in range(m):
        basis[i] = nv + i
        in_basis[nv + i] = 1

    max_iter = 200 + 20 * ntot
    it = 0
    while True:
        it += 1
        if it > max_iter:
            return LP_NUMERIC_FAILURE, 0.0

        # Basic values are recomputed from the current inverse instead of
        # being updated in place: a handful of extra flops on problems this
        # small buys freedom from accumulation drift.
        for i in range(m):
            rhs_eff[i] = rhs[i]
        for j in range(nv):
            if at_upper[j] == 1 and in_basis[j] == 0:
                for i in range(m):
                    rhs_eff[i] -= A[i, j]
        for i in range(m):
            s = 0.0
            for k in range(m):
                s += binv[i, k] * rhs_eff[k]
            xb[i] = s
        for i in range(m):
            s = 0.0
            for k in range(m):
                if basis[k] < nv:
                    s += obj[basis[k]] * binv[k, i]
            y[i] = s

        # entering variable (Bland)
        enter = -1
        sigma = 1.0
        for j in range(ntot):
            if in_basis[j] == 1:
                continue
            if j < nv:
                d = obj[j]
                for i in range(m):
                    d -= y[i] * A[i, j]
            else:
                d = -y[j - nv]
            if at_upper[j] == 0 and d > _REDCOST_TOL:
                enter = j
                sigma = 1.0
                break
            if at_upper[j] == 1 and d < -_REDCOST_TOL:
                enter = j
                sigma = -1.0
                break
        if enter == -1:
            break

        for i in range(m):
            if enter < nv:
                s = 0.0
                for k in range(m):
                    s += binv[i, k] * A[k, enter]
                w[i] = s
            else:
                w[i] = binv[i, enter - nv]

        # ratio test; slacks have no upper bound, structurals flip at 1
        t_best = 1.0 if enter < nv else np.inf
        leave = -1
        for i in range(m):
            delta = -sigma * w[i]
            if delta < -_REDCOST_TOL:
                ti = xb[i] / (-delta)
            elif delta > _REDCOST_TOL and basis[i] < nv:
                ti = (1.0 - xb[i]) / delta
            else:
                continue
            if ti < t_best:
                t_best = ti
                leave = i
            elif leave >= 0 and ti == t_best and basis[i] < basis[leave]:
                leave = i
        if t_best == np.inf:
            return LP_NUMERIC_FAILURE, 0.0

        if leave == -1:
            at_upper[enter] = 1 - at_upper[enter]
            continue

        piv = w[leave]
        if abs(piv) < _PIVOT_TOL:
            return LP_NUMERIC_FAILURE, 0.0
        inv_piv = 1.0 / piv
        for k in range(m):
            binv[leave, k] *= inv_piv
        for i in range(m):
            if i == leave:
                continue
            f = w[i]
            if f != 0.0:
                for k in range(m):
                    binv[i, k] -= f * binv[leave, k]
        out = basis[leave]
        delta_leave = -sigma * w[leave]
        in_basis[out] = 0
        at_upper[out] = 1 if (delta_leave > 0.0 and out < nv) else 0
        basis[leave] = enter
        in_basis[enter] = 1
        at_upper[enter] = 0

    for j in range(nv):
        phi[j] = 1.0 if at_upper[j] == 1 else 0.0
    for i in range(m):
        if basis[i] < nv:
            v = xb[i]
            if v < 0.0:
                v = 0.0
            elif v > 1.0:
                v = 1.0
            phi[basis[i]] = v
    for i in range(m):
        lam[i] = y[i] if y[i] > 0.0 else 0.0
    objval = 0.0
    for j in range(nv):
        objval += obj[j] * phi[j]
    return LP_OPTIMAL, objval


@njit(cache=True, nogil=True)
def finite_plug_in(v_mass, r_mat, c_tens, r_max, c_max, rhat, chat):
    """Expected reward/consumption per context under a finite factor mass.

    rhat[k] = sum_g v_mass[g] * r_mat[k, g], clamped to [0, r_max];
    chat[i, k] likewise against c_tens[i, k, g] and c_max.
    """
    nk, ng = r_mat.shape
    n = c_tens.shape[0]
    for k in range(nk):
        s = 0.0
        for g in range(ng):
            s += v_mass[g] * r_mat[k, g]
        if s < 0.0:
            s = 0.0
        elif s > r_max:
            s = r_max
        rhat[k] = s
    for i in range(n):
        for k in range(nk):
            s = 0.0
            for g in range(ng):
                s += v_mass[g] * c_tens[i, k, g]
            if s < 0.0:
                s = 0.0
            elif s > c_max:
                s = c_max
            chat[i, k] = s


@njit(cache=True, nogil=True)
def run_trial_finite(
    u_cum,
    v_cum,
    r_mat,
    c_tens,
    rho,
    T,
    stop_threshold,
    partial_info,
    resolve,
    phi_fixed,
    r_max,
    c_max,
    uniforms,
    win_lo,
    win_hi,
):
    """Whole-trial loop for finite context and factor spaces.

    ``uniforms`` is the (T, 3) pre-drawn stream with columns (context draw,
    factor draw, action draw); consuming a fixed number of draws per round
    keeps full- and partial-information runs coupled under one seed.  With
    ``resolve`` false, ``phi_fixed`` is played every round instead of the
    per-round estimated LP solution.  ``win_lo <= t <= win_hi`` tracks the
    minimum of Y_t/(t-1), the pre-round fraction of active rounds, for the
    sample-accrual diagnostics (pass win_hi < win_lo to disable).

    Returns (reward_total, stop_time, actions_taken, min_window_frac,
    final_budget, lp_failures).
    """
    K = u_cum.size
    G = v_cum.size
    n = rho.size

    B = np.empty(n)
    for i in range(n):
        B[i] = rho[i] * T
    u_counts = np.zeros(K, np.int64)
    v_counts = np.zeros(G, np.int64)
    m_v = 0
    total = 0.0
    actions = 0
    min_frac = np.inf
    stop_time = T
    lp_failures = 0

    u_mass = np.empty(K)
    v_mass = np.empty(G)
    rhat = np.empty(K)
    chat = np.empty((n, K))
    obj = np.empty(K)
    A = np.empty((n, K))
    rhs = np.empty(n)
    phi = np.zeros(K)
    lam = np.zeros(n)

    for t in range(1, T + 1):
        if win_lo <= t <= win_hi and t >= 2:
            frac = actions / (t - 1.0)
            if frac < min_frac:
                min_frac = frac

        u1 = uniforms[t - 1, 0]
        u2 = uniforms[t - 1, 1]
        u3 = uniforms[t - 1, 2]
        theta = pick_index(u_cum, u1)
        gamma = pick_index(v_cum, u2)

        if resolve:
            rem = T - t + 1
            for i in range(n):
                ri = B[i] / rem
                rhs[i] = ri if ri > 0.0 else 0.0
            if t == 1:
                for k in range(K):
                    u_mass[k] = 1.0 / K
            else:
                for k in range(K):
                    u_mass[k] = u_counts[k] / (t - 1)
            if m_v == 0:
                for g in range(G):
                    v_mass[g] = 1.0 / G
            else:
                for g in range(G):
                    v_mass[g] = v_counts[g] / m_v
            finite_plug_in(v_mass, r_mat, c_tens, r_max, c_max, rhat, chat)
            for k in range(K):
                obj[k] = u_mass[k] * rhat[k]
                for i in range(n):
                    A[i, k] = u_mass[k] * chat[i, k]
            status, _ = solve_box_lp(obj, A, rhs, phi, lam)
            if status == LP_OPTIMAL:
                p = phi[theta]
            else:
                p = 0.0
                lp_failures += 1
        else:
            p = phi_fixed[theta]

        a = 1 if u3 < p else 0
        if a == 1:
            total += r_mat[theta, gamma]
            for i in range(n):
                B[i] -= c_tens[i, theta, gamma]
            actions += 1

        u_counts[theta] += 1
        if (not partial_info) or a == 1:
            v_counts[gamma] += 1
            m_v += 1

        stopped = False
        for i in range(n):
            if B[i] < stop_threshold:
                stopped = True
        if stopped:
            stop_time = t
            break

    return total, stop_time, actions, min_frac, B, lp_failures
