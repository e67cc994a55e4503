"""Compiled inner loops for the Bellman step and the housing search.

The node search mirrors :func:`decumulation.numerics.optimize_action`
step for step (same seed grid, same simplex moves, same tie-breaking) so
that the Python routine can serve as a reference for these kernels.
"""

import math

import numpy as np
from numba import njit

from .numerics import pchip_eval_clamped

# layout of the per-slice parameter vector
GAMMA, CBAR, ZETA, HEALTH = 0, 1, 2, 3
BEQ_K, BEQ_A, BEQ_G = 4, 5, 6
PMAX, LI, TI, LA, TA, DED, PENSION_ON = 7, 8, 9, 10, 11, 12, 13
MINRATE, SURV, BETA, ER, FIXED_DELTA, OTHER_IS_BEQUEST = 14, 15, 16, 17, 18, 19
N_PAR = 20


@njit(cache=True)
def bequest(w, k, a, g):
    if k == 0.0:
        return 0.0
    base = k * a + w
    if base <= 0.0:
        return -math.inf
    return k ** (1.0 - g) * base ** g / g


@njit(cache=True)
def pension(aw, w, par):
    if par[PENSION_ON] == 0.0:
        return 0.0
    pmax = par[PMAX]
    pa = pmax - (w - par[LA]) * par[TA]
    pi = pmax - (aw - par[DED] * w - par[LI]) * par[TI]
    p = min(pmax, min(pa, pi))
    return p if p > 0.0 else 0.0


@njit(cache=True)
def continuation(s, dl, par, ez, wq, W, Vs, Ds, Vo, Do):
    """Expected next-period value of savings ``s`` invested with risky share ``dl``."""
    surv = par[SURV]
    er = par[ER]
    acc = 0.0
    for i in range(ez.shape[0]):
        x = s * (dl * ez[i] + (1.0 - dl) * er)
        v = surv * pchip_eval_clamped(W, Vs, Ds, x)
        if surv < 1.0:
            if par[OTHER_IS_BEQUEST] != 0.0:
                vo = bequest(x, par[BEQ_K], par[BEQ_A], par[BEQ_G])
            else:
                vo = pchip_eval_clamped(W, Vo, Do, x)
            v += (1.0 - surv) * vo
        acc += wq[i] * v
    return acc


@njit(cache=True)
def objective(a, dl, w, par, ez, wq, W, Vs, Ds, Vo, Do, EVy, EVd):
    aw = a * w
    c = aw + pension(aw, w, par)
    excess = c - par[CBAR]
    if not excess > 0.0:
        return -math.inf
    g = par[GAMMA]
    u = par[HEALTH] * (excess / par[ZETA]) ** g / g
    s = w - aw
    if s < 0.0:
        s = 0.0
    if par[FIXED_DELTA] >= 0.0:
        cont = pchip_eval_clamped(W, EVy, EVd, s)
    else:
        cont = continuation(s, dl, par, ez, wq, W, Vs, Ds, Vo, Do)
    return u + par[BETA] * cont


@njit(cache=True)
def _neg_value(u0, u1, a_lo, free, w, par, ez, wq, W, Vs, Ds, Vo, Do, EVy, EVd):
    a = a_lo + u0 * (1.0 - a_lo)
    a = min(max(a, a_lo), 1.0)
    if free:
        dl = min(max(u1, 0.0), 1.0)
    else:
        dl = par[FIXED_DELTA]
    v = objective(a, dl, w, par, ez, wq, W, Vs, Ds, Vo, Do, EVy, EVd)
    if math.isnan(v):
        return math.inf
    nv = -v
    if not math.isfinite(nv):
        return math.inf
    return nv


@njit(cache=True)
def _sort_simplex(sim, fs):
    # stable insertion sort by fs
    m = fs.shape[0]
    for i in range(1, m):
        j = i
        while j > 0 and fs[j] < fs[j - 1]:
            tmp = fs[j]
            fs[j] = fs[j - 1]
            fs[j - 1] = tmp
            for k in range(sim.shape[1]):
                tmp = sim[j, k]
                sim[j, k] = sim[j - 1, k]
                sim[j - 1, k] = tmp
            j -= 1


@njit(cache=True)
def _clip01(x):
    return min(max(x, 0.0), 1.0)


@njit(cache=True)
def optimise_node(w, a_lo, par, seed_grid, xatol, maxiter, ez, wq, W, Vs, Ds, Vo, Do, EVy, EVd):
    """Return (value, alpha, delta, feasible) for one wealth node."""
    free = par[FIXED_DELTA] < 0.0
    ns = seed_grid.shape[0]
    best_v = -math.inf
    bu0 = -1.0
    bu1 = 0.0
    if free:
        for i in range(ns):
            for j in range(ns):
                v = -_neg_value(seed_grid[i], seed_grid[j], a_lo, free, w, par, ez, wq, W, Vs, Ds, Vo, Do, EVy, EVd)
                if v > best_v:
                    best_v = v
                    bu0 = seed_grid[i]
                    bu1 = seed_grid[j]
    else:
        for i in range(ns):
            v = -_neg_value(seed_grid[i], 0.0, a_lo, free, w, par, ez, wq, W, Vs, Ds, Vo, Do, EVy, EVd)
            if v > best_v:
                best_v = v
                bu0 = seed_grid[i]
    if bu0 < 0.0:
        return -math.inf, 1.0, 0.0, False

    # refine alpha around the best seed; the box can be far wider than [0, 1]
    step = 1.0 / (ns - 1)
    r_lo = max(bu0 - step, 0.0)
    r_hi = min(bu0 + step, 1.0)
    step_a = (r_hi - r_lo) / (ns - 1)
    c0 = bu0
    for i in range(ns):
        u = r_lo + i * step_a
        v = -_neg_value(u, bu1, a_lo, free, w, par, ez, wq, W, Vs, Ds, Vo, Do, EVy, EVd)
        if v > best_v:
            best_v = v
            c0 = u
    bu0 = c0

    dim = 2 if free else 1
    sim = np.empty((dim + 1, dim))
    fs = np.empty(dim + 1)
    sim[0, 0] = bu0
    if free:
        sim[0, 1] = bu1
    for i in range(dim):
        for k in range(dim):
            sim[i + 1, k] = sim[0, k]
        st = step_a if i == 0 else step
        y = sim[0, i] + st
        if y > 1.0:
            y = sim[0, i] - st
        if y < 0.0:
            y = 0.0 if sim[0, i] != 0.0 else 1.0
        sim[i + 1, i] = y
    for i in range(dim + 1):
        fs[i] = _neg_value(sim[i, 0], sim[i, 1] if free else 0.0, a_lo, free, w, par, ez, wq, W, Vs, Ds, Vo, Do, EVy, EVd)

    cen = np.empty(dim)
    xr = np.empty(dim)
    xe = np.empty(dim)
    xc = np.empty(dim)
    nit = 0
    while True:
        _sort_simplex(sim, fs)
        spread = 0.0
        for i in range(1, dim + 1):
            for k in range(dim):
                dd = abs(sim[i, k] - sim[0, k])
                if dd > spread:
                    spread = dd
        if spread <= xatol:
            break
        if nit >= maxiter:
            break
        nit += 1

        for k in range(dim):
            acc = 0.0
            for i in range(dim):
                acc += sim[i, k]
            cen[k] = acc / dim
        for k in range(dim):
            xr[k] = _clip01(2.0 * cen[k] - sim[dim, k])
        fr = _neg_value(xr[0], xr[1] if free else 0.0, a_lo, free, w, par, ez, wq, W, Vs, Ds, Vo, Do, EVy, EVd)
        if fr < fs[0]:
            for k in range(dim):
                xe[k] = _clip01(3.0 * cen[k] - 2.0 * sim[dim, k])
            fe = _neg_value(xe[0], xe[1] if free else 0.0, a_lo, free, w, par, ez, wq, W, Vs, Ds, Vo, Do, EVy, EVd)
            if fe < fr:
                for k in range(dim):
                    sim[dim, k] = xe[k]
                fs[dim] = fe
            else:
                for k in range(dim):
                    sim[dim, k] = xr[k]
                fs[dim] = fr
        elif fr < fs[dim - 1]:
            for k in range(dim):
                sim[dim, k] = xr[k]
            fs[dim] = fr
        else:
            shrink = False
            if fr < fs[dim]:
                for k in range(dim):
                    xc[k] = _clip01(cen[k] + 0.5 * (xr[k] - cen[k]))
                fc = _neg_value(xc[0], xc[1] if free else 0.0, a_lo, free, w, par, ez, wq, W, Vs, Ds, Vo, Do, EVy, EVd)
                if fc <= fr:
                    for k in range(dim):
                        sim[dim, k] = xc[k]
                    fs[dim] = fc
                else:
                    shrink = True
            else:
                for k in range(dim):
                    xc[k] = _clip01(cen[k] + 0.5 * (sim[dim, k] - cen[k]))
                fc = _neg_value(xc[0], xc[1] if free else 0.0, a_lo, free, w, par, ez, wq, W, Vs, Ds, Vo, Do, EVy, EVd)
                if fc < fs[dim]:
                    for k in range(dim):
                        sim[dim, k] = xc[k]
                    fs[dim] = fc
                else:
                    shrink = True
            if shrink:
                for i in range(1, dim + 1):
                    for k in range(dim):
                        sim[i, k] = _clip01(sim[0, k] + 0.5 * (sim[i, k] - sim[0, k]))
                    fs[i] = _neg_value(sim[i, 0], sim[i, 1] if free else 0.0, a_lo, free, w, par, ez, wq, W, Vs, Ds, Vo, Do, EVy, EVd)

    u0 = sim[0, 0]
    a = min(max(a_lo + u0 * (1.0 - a_lo), a_lo), 1.0)
    if free:
        dl = _clip01(sim[0, 1])
    else:
        dl = par[FIXED_DELTA]
    return -fs[0], a, dl, True


@njit(cache=True)
def solve_slice(W, par, seed_grid, xatol, maxiter, ez, wq, Vs, Ds, Vo, Do, EVy, EVd,
                out_v, out_a, out_d):
    """Optimise every wealth node of one (age, status, homeowner) slice.

    Returns the number of nodes without an admissible action.
    """
    n = W.shape[0]
    bad = 0
    for j in range(n):
        w = W[j]
        a_lo = -par[PMAX] / w
        if par[MINRATE] > a_lo:
            a_lo = par[MINRATE]
        v, a, dl, ok = optimise_node(w, a_lo, par, seed_grid, xatol, maxiter, ez, wq, W, Vs, Ds, Vo, Do, EVy, EVd)
        if not ok:
            bad += 1
        out_v[j] = v
        out_a[j] = a
        out_d[j] = dl
    return bad


@njit(cache=True)
def expected_vector(W, dl, par, ez, wq, Vs, Ds, Vo, Do):
    """Continuation value at every node used as a savings level, for a fixed risky share."""
    out = np.empty(W.shape[0])
    for j in range(W.shape[0]):
        out[j] = continuation(W[j], dl, par, ez, wq, W, Vs, Ds, Vo, Do)
    return out


# ---------------------------------------------------------------------------
# housing
# ---------------------------------------------------------------------------


@njit(cache=True)
def _house_value(H, Wtot, own_coef, widow_coef, lam, zeta_d, gH, W, V, D):
    u_d = (lam * H / zeta_d) ** gH / gH
    u_s = (lam * H) ** gH / gH
    return own_coef * u_d + widow_coef * u_s + pchip_eval_clamped(W, V, D, Wtot - H)


@njit(cache=True)
def best_house(Wtot, HL, own_coef, widow_coef, lam, zeta_d, gH, W, Vown, Down, n_grid, tol):
    """Best owner-occupied house value in [HL, Wtot] and its total value."""
    lo = HL
    hi = Wtot
    if hi <= lo:
        return lo, _house_value(lo, Wtot, own_coef, widow_coef, lam, zeta_d, gH, W, Vown, Down)
    best_k = 0
    best_v = -math.inf
    hstep = (hi - lo) / (n_grid - 1)
    for k in range(n_grid):
        H = lo + k * hstep
        v = _house_value(H, Wtot, own_coef, widow_coef, lam, zeta_d, gH, W, Vown, Down)
        if v > best_v:
            best_v = v
            best_k = k
    a = lo + max(best_k - 1, 0) * hstep
    b = lo + min(best_k + 1, n_grid - 1) * hstep
    # golden-section search on the bracketing cells
    gr = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - gr * (b - a)
    d = a + gr * (b - a)
    fc = _house_value(c, Wtot, own_coef, widow_coef, lam, zeta_d, gH, W, Vown, Down)
    fd = _house_value(d, Wtot, own_coef, widow_coef, lam, zeta_d, gH, W, Vown, Down)
    while (b - a) > tol * max(1.0, abs(a)):
        if fc >= fd:
            b = d
            d = c
            fd = fc
            c = b - gr * (b - a)
            fc = _house_value(c, Wtot, own_coef, widow_coef, lam, zeta_d, gH, W, Vown, Down)
        else:
            a = c
            c = d
            fc = fd
            d = a + gr * (b - a)
            fd = _house_value(d, Wtot, own_coef, widow_coef, lam, zeta_d, gH, W, Vown, Down)
    Hm = 0.5 * (a + b)
    vm = _house_value(Hm, Wtot, own_coef, widow_coef, lam, zeta_d, gH, W, Vown, Down)
    if vm >= best_v:
        return Hm, vm
    return lo + best_k * hstep, best_v
