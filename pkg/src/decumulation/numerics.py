"""
Numerical kernels
=================

Shape-preserving cubic Hermite interpolation (PCHIP), Gauss-Hermite
quadrature, a bound-aware Nelder-Mead simplex minimiser and the
two-dimensional action optimiser used inside a Bellman step.

The PCHIP slope and evaluation routines are compiled with numba so the
solver kernels can call them directly; the Python-facing wrappers add
validation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numba import njit

from .errors import (
    InfeasibleActionError,
    InvalidInputError,
    InvalidStartError,
    OutOfRangeError,
)

SQRT_PI = math.sqrt(math.pi)


# ---------------------------------------------------------------------------
# PCHIP
# ---------------------------------------------------------------------------


@njit(cache=True)
def _edge_slope(h0, h1, m0, m1):
    # three-point one-sided estimate, clamped so the end interval stays monotone
    d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1)
    if np.sign(d) != np.sign(m0):
        return 0.0
    if np.sign(m0) != np.sign(m1) and abs(d) > 3.0 * abs(m0):
        return 3.0 * m0
    return d


@njit(cache=True)
def pchip_slopes(xs, ys):
    """Node slopes of the monotone piecewise cubic through (xs, ys)."""
    n = xs.shape[0]
    d = np.zeros(n)
    h = np.empty(n - 1)
    m = np.empty(n - 1)
    for k in range(n - 1):
        h[k] = xs[k + 1] - xs[k]
        m[k] = (ys[k + 1] - ys[k]) / h[k]
    if n == 2:
        d[0] = m[0]
        d[1] = m[0]
        return d
    for k in range(1, n - 1):
        if m[k - 1] == 0.0 or m[k] == 0.0 or (m[k - 1] > 0.0) != (m[k] > 0.0):
            d[k] = 0.0
        else:
            w1 = 2.0 * h[k] + h[k - 1]
            w2 = h[k] + 2.0 * h[k - 1]
            d[k] = (w1 + w2) / (w1 / m[k - 1] + w2 / m[k])
    d[0] = _edge_slope(h[0], h[1], m[0], m[1])
    d[n - 1] = _edge_slope(h[n - 2], h[n - 3], m[n - 2], m[n - 3])
    return d


@njit(cache=True)
def _locate(xs, x):
    # index k with xs[k] <= x < xs[k+1], clipped to [0, n-2]
    lo = 0
    hi = xs.shape[0] - 1
    while hi - lo > 1:
        mid = (lo + hi) >> 1
        if xs[mid] <= x:
            lo = mid
        else:
            hi = mid
    return lo


@njit(cache=True)
def pchip_eval_clamped(xs, ys, ds, x):
    """Evaluate at scalar ``x``; outside the node range the end value is returned."""
    n = xs.shape[0]
    if x <= xs[0]:
        return ys[0]
    if x >= xs[n - 1]:
        return ys[n - 1]
    k = _locate(xs, x)
    h = xs[k + 1] - xs[k]
    t = (x - xs[k]) / h
    t2 = t * t
    t3 = t2 * t
    return ((2.0 * t3 - 3.0 * t2 + 1.0) * ys[k]
            + (t3 - 2.0 * t2 + t) * h * ds[k]
            + (-2.0 * t3 + 3.0 * t2) * ys[k + 1]
            + (t3 - t2) * h * ds[k + 1])


@njit(cache=True)
def pchip_eval_many(xs, ys, ds, x):
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        out[i] = pchip_eval_clamped(xs, ys, ds, x[i])
    return out


@dataclass(frozen=True)
class Interpolant:
    """Piecewise cubic Hermite interpolant with node slopes ``ds``."""

    xs: np.ndarray
    ys: np.ndarray
    ds: np.ndarray

    def __call__(self, x, clamp: bool = False):
        return eval_pchip(self, x, clamp=clamp)

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.xs[0]), float(self.xs[-1])


def build_pchip(xs: Sequence[float], ys: Sequence[float]) -> Interpolant:
    """Build a shape-preserving interpolant.

    Interior slopes use the weighted harmonic mean of the neighbouring
    secants and vanish at local extrema or flat segments; end slopes use
    the one-sided three-point estimate, clamped to keep the end interval
    monotone.

    Raises
    ------
    InvalidInputError
        If ``xs`` is not strictly increasing, has fewer than two points,
        does not match ``ys`` in length, or any value is non-finite.
    """
    xs = np.ascontiguousarray(xs, dtype=float)
    ys = np.ascontiguousarray(ys, dtype=float)
    if xs.ndim != 1 or ys.ndim != 1:
        raise InvalidInputError("abscissae and values must be one-dimensional")
    if xs.shape != ys.shape:
        raise InvalidInputError(f"length mismatch: {xs.size} abscissae vs {ys.size} values")
    if xs.size < 2:
        raise InvalidInputError("need at least two nodes")
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise InvalidInputError("abscissae and values must be finite")
    if np.any(np.diff(xs) <= 0):
        raise InvalidInputError("abscissae must be strictly increasing")
    return Interpolant(xs, ys, pchip_slopes(xs, ys))


def eval_pchip(interp: Interpolant, x, clamp: bool = False):
    """Evaluate ``interp`` at ``x`` (scalar or array).

    Points outside ``[xs[0], xs[-1]]`` raise :class:`OutOfRangeError` unless
    ``clamp`` is set, in which case the nearest end value is used.
    """
    xa = np.asarray(x, dtype=float)
    if not clamp:
        lo, hi = interp.xs[0], interp.xs[-1]
        if np.any(xa < lo) or np.any(xa > hi) or np.any(np.isnan(xa)):
            raise OutOfRangeError(f"evaluation point outside [{lo}, {hi}]")
    flat = np.ascontiguousarray(xa.reshape(-1))
    out = pchip_eval_many(interp.xs, interp.ys, interp.ds, flat)
    if xa.ndim == 0:
        return float(out[0])
    return out.reshape(xa.shape)


# ---------------------------------------------------------------------------
# Gauss-Hermite quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Quadrature:
    """Nodes and weights for integrals against ``exp(-x**2)``."""

    nodes: np.ndarray
    weights: np.ndarray

    @property
    def order(self) -> int:
        return int(self.nodes.size)


def gauss_hermite(order: int) -> Quadrature:
    """Gauss-Hermite rule of the given order from the Jacobi matrix eigenproblem."""
    if int(order) != order or order < 1 or order > 64:
        raise InvalidInputError(f"quadrature order must be an integer in [1, 64], got {order}")
    order = int(order)
    if order == 1:
        return Quadrature(np.zeros(1), np.array([SQRT_PI]))
    off = np.sqrt(np.arange(1, order) / 2.0)
    jacobi = np.diag(off, 1) + np.diag(off, -1)
    nodes, vecs = np.linalg.eigh(jacobi)
    weights = SQRT_PI * vecs[0, :] ** 2
    # enforce exact symmetry about zero
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    return Quadrature(nodes, weights)


def return_nodes(mu: float, sigma: float, quad: Quadrature) -> tuple[np.ndarray, np.ndarray]:
    """Log-return nodes ``sqrt(2)*sigma*x + mu`` and probability weights ``w/sqrt(pi)``."""
    return math.sqrt(2.0) * sigma * quad.nodes + mu, quad.weights / SQRT_PI


def expect_over_return(f: Callable, mu: float, sigma: float, quad: Quadrature) -> float:
    """E[f(Z)] for Z ~ Normal(mu, sigma**2) by Gauss-Hermite quadrature."""
    if sigma < 0:
        raise InvalidInputError("sigma must be non-negative")
    z, w = return_nodes(mu, sigma, quad)
    try:
        vals = np.asarray(f(z), dtype=float)
        if vals.shape != z.shape:
            raise ValueError
    except (TypeError, ValueError):
        vals = np.array([f(zi) for zi in z], dtype=float)
    return float(np.dot(w, vals))


# ---------------------------------------------------------------------------
# Nelder-Mead
# ---------------------------------------------------------------------------


@dataclass
class NelderMeadResult:
    x: np.ndarray
    fun: float
    nit: int
    nfev: int
    converged: bool
    simplex: np.ndarray = field(repr=False)
    fsim: np.ndarray = field(repr=False)


def _initial_simplex(x0, step, lower, upper):
    n = x0.size
    sim = np.repeat(x0[None, :], n + 1, axis=0)
    for i in range(n):
        y = x0[i] + step[i]
        if upper is not None and y > upper[i]:
            y = x0[i] - step[i]
        if lower is not None and y < lower[i]:
            y = lower[i] if x0[i] != lower[i] else upper[i]
        sim[i + 1, i] = y
    return sim


def nelder_mead(
    f: Callable[[np.ndarray], float],
    x0,
    *,
    step=None,
    xatol: float = 1e-8,
    fatol: float = 0.0,
    maxiter: Optional[int] = None,
    bounds: Optional[tuple] = None,
    initial_simplex: Optional[np.ndarray] = None,
    callback: Optional[Callable[[np.ndarray, np.ndarray], None]] = None,
) -> NelderMeadResult:
    """Minimise ``f`` with the Nelder-Mead simplex method.

    Stops when the simplex collapses to within ``xatol`` of its best vertex
    (max-norm) or, for ``fatol > 0``, when all vertex values agree to
    ``fatol``. Non-finite
    objective values are treated as ``+inf``. With ``bounds=(lower, upper)``
    every trial point is projected into the box. ``callback(simplex, fsim)``
    is called after every iteration with the sorted simplex.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    n = x0.size
    if n < 1:
        raise InvalidInputError("dimension must be at least 1")
    lower = upper = None
    if bounds is not None:
        lower = np.broadcast_to(np.asarray(bounds[0], dtype=float), (n,)).copy()
        upper = np.broadcast_to(np.asarray(bounds[1], dtype=float), (n,)).copy()
        x0 = np.clip(x0, lower, upper)

    def project(x):
        return x if lower is None else np.clip(x, lower, upper)

    nfev = 0

    def fe(x):
        nonlocal nfev
        nfev += 1
        v = float(f(x))
        return v if math.isfinite(v) else math.inf

    if maxiter is None:
        maxiter = max(1000, 400 * n)

    if initial_simplex is None:
        f0 = fe(x0)
        if not math.isfinite(f0):
            raise InvalidStartError("objective is not finite at the starting point")
        if step is None:
            step = np.where(x0 != 0.0, 0.05 * np.abs(x0), 0.1)
        step = np.broadcast_to(np.asarray(step, dtype=float), (n,))
        sim = _initial_simplex(x0, step, lower, upper)
        fsim = np.empty(n + 1)
        fsim[0] = f0
        for i in range(1, n + 1):
            fsim[i] = fe(sim[i])
    else:
        sim = np.array(initial_simplex, dtype=float)
        if sim.shape != (n + 1, n):
            raise InvalidInputError(f"initial simplex must have shape {(n + 1, n)}")
        sim = np.array([project(v) for v in sim])
        fsim = np.array([fe(v) for v in sim])
        if not np.any(np.isfinite(fsim)):
            raise InvalidStartError("objective is not finite at any simplex vertex")

    nit = 0
    converged = False
    while True:
        order = np.argsort(fsim, kind="stable")
        sim, fsim = sim[order], fsim[order]
        if np.max(np.abs(sim[1:] - sim[0])) <= xatol:
            converged = True
            break
        if fatol > 0 and np.all(np.isfinite(fsim)) and fsim[-1] - fsim[0] <= fatol:
            converged = True
            break
        if nit >= maxiter:
            break
        nit += 1

        centroid = sim[:-1].mean(axis=0)
        worst = sim[-1]
        xr = project(2.0 * centroid - worst)
        fr = fe(xr)
        if fr < fsim[0]:
            xe = project(3.0 * centroid - 2.0 * worst)
            fex = fe(xe)
            if fex < fr:
                sim[-1], fsim[-1] = xe, fex
            else:
                sim[-1], fsim[-1] = xr, fr
        elif fr < fsim[-2]:
            sim[-1], fsim[-1] = xr, fr
        else:
            shrink = False
            if fr < fsim[-1]:
                xc = project(centroid + 0.5 * (xr - centroid))
                fc = fe(xc)
                if fc <= fr:
                    sim[-1], fsim[-1] = xc, fc
                else:
                    shrink = True
            else:
                xcc = project(centroid + 0.5 * (worst - centroid))
                fcc = fe(xcc)
                if fcc < fsim[-1]:
                    sim[-1], fsim[-1] = xcc, fcc
                else:
                    shrink = True
            if shrink:
                for i in range(1, n + 1):
                    sim[i] = project(sim[0] + 0.5 * (sim[i] - sim[0]))
                    fsim[i] = fe(sim[i])
        if callback is not None:
            order = np.argsort(fsim, kind="stable")
            callback(sim[order].copy(), fsim[order].copy())

    return NelderMeadResult(sim[0].copy(), float(fsim[0]), nit, nfev, converged, sim, fsim)


# ---------------------------------------------------------------------------
# Two-dimensional action search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ActionResult:
    alpha: float
    delta: float
    value: float
    seed_value: float
    converged: bool


def optimize_action(
    objective: Callable[[float, float], float],
    alpha_bounds: tuple[float, float],
    delta_bounds: tuple[float, float] = (0.0, 1.0),
    *,
    n_seed: int = 16,
    xatol: float = 1e-10,
    maxiter: int = 400,
) -> ActionResult:
    """Maximise ``objective(alpha, delta)`` over a box.

    A uniform ``n_seed`` x ``n_seed`` grid over the box (endpoints included)
    picks a starting point, a second ``n_seed``-point pass over the
    neighbouring alpha cells sharpens it, and a projected Nelder-Mead search
    in box-normalised coordinates refines it. A degenerate ``delta_bounds``
    (lo == hi) fixes the risky share and searches over ``alpha`` alone. ``-inf`` marks
    inadmissible actions.
    """
    a_lo, a_hi = map(float, alpha_bounds)
    d_lo, d_hi = map(float, delta_bounds)
    if not (a_lo <= a_hi and d_lo <= d_hi):
        raise InvalidInputError("empty action box")
    free_delta = d_hi > d_lo
    a_span, d_span = a_hi - a_lo, d_hi - d_lo

    def to_action(u):
        a = a_lo + u[0] * a_span
        d = d_lo + u[1] * d_span if free_delta else d_lo
        return min(max(a, a_lo), a_hi), min(max(d, d_lo), d_hi)

    def value(u):
        v = objective(*to_action(u))
        return v if not math.isnan(v) else -math.inf

    grid = np.linspace(0.0, 1.0, n_seed)
    best_u, best_v = None, -math.inf
    if free_delta:
        seeds = ((ua, ud) for ua in grid for ud in grid)
    else:
        seeds = ((ua, 0.0) for ua in grid)
    for ua, ud in seeds:
        v = value((ua, ud))
        if v > best_v:
            best_u, best_v = (ua, ud), v
    if best_u is None:
        raise InfeasibleActionError("objective is -inf over the whole action box")

    # refine alpha around the best seed; the box can be far wider than [0, 1]
    h = 1.0 / (n_seed - 1)
    r_lo, r_hi = max(best_u[0] - h, 0.0), min(best_u[0] + h, 1.0)
    step_a = (r_hi - r_lo) / (n_seed - 1)
    ua0 = best_u[0]
    for i in range(n_seed):
        ua = r_lo + i * step_a
        v = value((ua, best_u[1]))
        if v > best_v:
            ua0, best_v = ua, v
    best_u = (ua0, best_u[1])

    dim = 2 if free_delta else 1
    x0 = np.array(best_u[:dim])
    res = nelder_mead(
        lambda u: -value(u if free_delta else (u[0], 0.0)),
        x0,
        step=np.array([step_a, h][:dim]),
        xatol=xatol,
        maxiter=maxiter,
        bounds=(np.zeros(dim), np.ones(dim)),
    )
    u = res.x if free_delta else (res.x[0], 0.0)
    a, d = to_action(u)
    return ActionResult(a, d, -res.fun, best_v, res.converged)
