"""
Backward-induction solver
=========================

Solves the housing-free value function ``V[t, d, h, node]`` on a
log-equidistant wealth grid for singles and couples, homeowners and
renters, then chooses the owner-occupied house value at retirement by
separating housing utility from the liquid-wealth problem.

Array conventions: ``d = 0`` single, ``d = 1`` couple; ``h = 0`` renter,
``h = 1`` homeowner; age index ``i = t - t0``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels as K
from .economics import (
    ModelArrays,
    ModelParams,
    bequest_utility,
    consumption_utility,
    housing_utility,
    min_withdrawal_rate,
)
from .errors import (
    InvalidConfigError,
    InvalidDataError,
    InvalidInputError,
    ModelInconsistencyError,
    OutOfRangeError,
)
from .numerics import (
    Interpolant,
    build_pchip,
    gauss_hermite,
    pchip_eval_many,
    pchip_slopes,
    return_nodes,
)

STATUS_NAMES = ("single", "couple")
HOME_NAMES = ("renter", "homeowner")


# ---------------------------------------------------------------------------
# Grid and transition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WealthGrid:
    """Log-equidistant wealth nodes from $1 to ``nodes[-1]``."""

    nodes: np.ndarray
    wmax_data: float

    @property
    def k(self) -> int:
        return self.nodes.size - 1

    @property
    def top(self) -> float:
        return float(self.nodes[-1])


def grid_top(market, wmax_data: float) -> float:
    n = market.T - market.t0
    return wmax_data * math.exp(n * market.mu + 5.0 * math.sqrt(n) * market.sigma)


def build_grid(market, wmax_data: float, k: int = 400) -> WealthGrid:
    """Grid with ``k`` intervals (``k + 1`` nodes) covering every reachable wealth.

    The top node is ``wmax_data * exp((T - t0) mu + 5 sqrt(T - t0) sigma)``.
    """
    if int(k) != k or k < 16:
        raise InvalidConfigError(f"grid needs at least 16 intervals, got k={k}")
    if not wmax_data >= 1.0:
        raise InvalidConfigError("largest data wealth must be at least $1")
    top = grid_top(market, float(wmax_data))
    nodes = np.exp(np.linspace(0.0, math.log(top), int(k) + 1))
    nodes[0] = 1.0
    nodes[-1] = top
    return WealthGrid(nodes, float(wmax_data))


def wealth_transition(w, alpha, delta, z, r):
    """Next-period wealth: savings ``w (1 - alpha)`` earning the portfolio return."""
    return (w - alpha * w) * (delta * np.exp(z) + (1.0 - delta) * np.exp(r))


# ---------------------------------------------------------------------------
# Options and results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SolveOptions:
    """Numerical settings for :func:`solve`.

    ``fixed_delta`` pins the risky share (the calibration runs use the
    observed average allocation); ``None`` optimises it.
    """

    min_withdrawals: bool = False
    quad_order: int = 5
    fixed_delta: Optional[float] = None
    n_seed: int = 16
    xatol: float = 1e-10
    maxiter: int = 400

    def validate(self) -> "SolveOptions":
        if not 1 <= self.quad_order <= 64:
            raise InvalidConfigError("quadrature order must lie in [1, 64]")
        if self.fixed_delta is not None and not 0.0 <= self.fixed_delta <= 1.0:
            raise InvalidConfigError("fixed risky share must lie in [0, 1]")
        if self.n_seed < 2:
            raise InvalidConfigError("need at least 2 seed points per dimension")
        return self


@dataclass
class Solution:
    """Value and policy tables for every age, status and homeowner flag.

    ``value`` has shape ``(n_ages, 2, 2, n_nodes)`` for ages ``t0 .. T``;
    ``alpha`` and ``delta`` cover the decision ages ``t0 .. T-1``.
    ``H_star[d]`` is the optimal house value at ``t0`` for a total wealth
    equal to each grid node, with renting allowed; ``H_owner[d]`` is the
    best house value given that the household owns (``nan`` below the
    housing floor).
    """

    params: ModelParams
    grid: WealthGrid
    options: SolveOptions
    value: np.ndarray
    alpha: np.ndarray
    delta: np.ndarray
    H_star: np.ndarray = None
    V_tilde: np.ndarray = None
    H_owner: np.ndarray = None
    V_owner: np.ndarray = None
    _slopes: dict = field(default_factory=dict, repr=False)
    _arrays: Optional[ModelArrays] = field(default=None, repr=False)

    @property
    def t0(self) -> int:
        return self.params.market.t0

    @property
    def T(self) -> int:
        return self.params.market.T

    @property
    def ages(self) -> np.ndarray:
        return np.arange(self.t0, self.T + 1)

    @property
    def arrays(self) -> ModelArrays:
        if self._arrays is None:
            self._arrays = ModelArrays.build(self.params)
        return self._arrays

    def _age_index(self, t, decision: bool = True) -> int:
        i = int(t) - self.t0
        last = self.T - self.t0 - (1 if decision else 0)
        if int(t) != t or not 0 <= i <= last:
            raise OutOfRangeError(f"age {t} outside the solved range")
        return i

    def metadata(self) -> dict:
        return {
            "params_hash": self.params.digest(),
            "t0": self.t0,
            "T": self.T,
            "grid_k": self.grid.k,
            "grid_top": repr(self.grid.top),
            "wmax_data": repr(self.grid.wmax_data),
            "quad_order": self.options.quad_order,
            "min_withdrawals": self.options.min_withdrawals,
            "fixed_delta": "none" if self.options.fixed_delta is None else repr(self.options.fixed_delta),
        }

    # -- interpolation -----------------------------------------------------

    def _table(self, name):
        return getattr(self, name)

    def slopes(self, name: str, i: int, d: int, h: int) -> np.ndarray:
        key = (name, i, d, h)
        if key not in self._slopes:
            self._slopes[key] = pchip_slopes(self.grid.nodes, self._table(name)[i, d, h])
        return self._slopes[key]

    def interpolant(self, name: str, t, d: int, h: int) -> Interpolant:
        i = self._age_index(t, decision=(name != "value"))
        ys = self._table(name)[i, d, h]
        return Interpolant(self.grid.nodes, ys, self.slopes(name, i, d, h))

    def lookup(self, name: str, t, d: int, h: int, w):
        """PCHIP lookup of ``value``/``alpha``/``delta`` at wealth ``w`` (clamped to the grid)."""
        i = self._age_index(t, decision=(name != "value"))
        x = np.atleast_1d(np.asarray(w, dtype=float))
        out = pchip_eval_many(self.grid.nodes, self._table(name)[i, d, h], self.slopes(name, i, d, h), x)
        return out if np.ndim(w) else float(out[0])

    def policy(self, t, d: int, h: int, w):
        """(alpha, delta) at wealth ``w``; the risky share is clipped to [0, 1]."""
        a = self.lookup("alpha", t, d, h, w)
        if self.options.fixed_delta is not None:
            dl = np.full_like(np.asarray(a, dtype=float), self.options.fixed_delta)
            dl = dl if np.ndim(a) else float(dl)
        else:
            dl = np.clip(self.lookup("delta", t, d, h, w), 0.0, 1.0)
        return np.minimum(a, 1.0), dl

    # -- persistence -------------------------------------------------------

    def save(self, directory) -> Path:
        return save_solution(self, directory)

    @classmethod
    def load(cls, directory) -> "Solution":
        return load_solution(directory)


# ---------------------------------------------------------------------------
# Bellman step
# ---------------------------------------------------------------------------


@dataclass
class _Context:
    params: ModelParams
    arrays: ModelArrays
    grid: WealthGrid
    options: SolveOptions
    ez: np.ndarray
    wq: np.ndarray
    seed_grid: np.ndarray


def _context(params: ModelParams, grid: WealthGrid, options: SolveOptions) -> _Context:
    quad = gauss_hermite(options.quad_order)
    z, wq = return_nodes(params.market.mu, params.market.sigma, quad)
    return _Context(params, ModelArrays.build(params), grid, options,
                    np.exp(z), np.ascontiguousarray(wq), np.linspace(0.0, 1.0, options.n_seed))


def slice_parameters(ctx: _Context, t: int, d: int, h: int) -> np.ndarray:
    """Parameter vector consumed by the compiled node optimiser."""
    p, arr = ctx.params, ctx.arrays
    u, m = p.utility, p.market
    i = t - m.t0
    mt = p.pension.test(d)
    par = np.zeros(K.N_PAR)
    par[K.GAMMA] = u.gamma(d)
    par[K.CBAR] = u.cbar(d)
    par[K.ZETA] = u.zeta(d)
    par[K.HEALTH] = arr.health[i]
    par[K.BEQ_K] = u.theta / (1.0 - u.theta)
    par[K.BEQ_A] = u.a
    par[K.BEQ_G] = u.gamma_S
    par[K.PMAX] = mt.full_rate
    par[K.LI] = mt.income_threshold
    par[K.TI] = mt.income_taper
    par[K.LA] = mt.asset_threshold(bool(h))
    par[K.TA] = mt.asset_taper
    par[K.DED] = arr.deduction_rate[d, i]
    eligible = p.pension.enabled and t >= p.pension.eligibility_age
    par[K.PENSION_ON] = 1.0 if eligible else 0.0
    if not eligible:
        par[K.PMAX] = 0.0
    par[K.MINRATE] = min_withdrawal_rate(t, p.pension, ctx.options.min_withdrawals) if ctx.options.min_withdrawals else -math.inf
    par[K.SURV] = arr.survival[d, i]
    par[K.BETA] = arr.beta[i]
    par[K.ER] = math.exp(arr.rates[i])
    par[K.FIXED_DELTA] = -1.0 if ctx.options.fixed_delta is None else ctx.options.fixed_delta
    par[K.OTHER_IS_BEQUEST] = 1.0 if d == 0 else 0.0
    return par


def _next_surfaces(value_next: np.ndarray, nodes: np.ndarray, d: int, h: int):
    Vs = np.ascontiguousarray(value_next[d, h])
    Ds = pchip_slopes(nodes, Vs)
    if d == 1:
        Vo = np.ascontiguousarray(value_next[0, h])
        Do = pchip_slopes(nodes, Vo)
    else:
        Vo, Do = Vs, Ds
    return Vs, Ds, Vo, Do


def bellman_step(t: int, value_next: np.ndarray, ctx: _Context):
    """Optimal value and actions at age ``t`` given next-age surfaces ``value_next[d, h, node]``."""
    nodes = ctx.grid.nodes
    n = nodes.size
    v = np.empty((2, 2, n))
    a = np.empty((2, 2, n))
    dl = np.empty((2, 2, n))
    for d in (0, 1):
        for h in (0, 1):
            par = slice_parameters(ctx, t, d, h)
            Vs, Ds, Vo, Do = _next_surfaces(value_next, nodes, d, h)
            if ctx.options.fixed_delta is not None:
                EVy = K.expected_vector(nodes, ctx.options.fixed_delta, par, ctx.ez, ctx.wq, Vs, Ds, Vo, Do)
                EVd = pchip_slopes(nodes, EVy)
            else:
                EVy = EVd = np.zeros(1)
            bad = K.solve_slice(nodes, par, ctx.seed_grid, ctx.options.xatol, ctx.options.maxiter,
                                ctx.ez, ctx.wq, Vs, Ds, Vo, Do, EVy, EVd, v[d, h], a[d, h], dl[d, h])
            if ctx.options.fixed_delta is None:
                fill_idle_delta(a[d, h], dl[d, h])
            if bad:
                raise ModelInconsistencyError(
                    f"age {t}, {STATUS_NAMES[d]} {HOME_NAMES[h]}: {bad} wealth nodes cannot reach "
                    f"the consumption floor (floor {par[K.CBAR]:.2f}, pension cap {par[K.PMAX]:.2f})")
    return v, a, dl


def fill_idle_delta(alpha: np.ndarray, delta: np.ndarray) -> None:
    """Give nodes that save nothing the risky share of the nearest richer node that does.

    With ``alpha = 1`` the portfolio is empty and the share has no effect on
    the objective; carrying the share down keeps the policy table continuous.
    """
    idle = alpha >= 1.0 - 1e-12
    if not idle.any() or idle.all():
        return
    nxt = math.nan
    for j in range(alpha.size - 1, -1, -1):
        if idle[j]:
            if not math.isnan(nxt):
                delta[j] = nxt
        else:
            nxt = delta[j]


def terminal_value(params: ModelParams, nodes: np.ndarray) -> np.ndarray:
    u = params.utility
    return np.array([bequest_utility(w, u) for w in nodes])


def solve(params: ModelParams, grid: WealthGrid, options: SolveOptions = SolveOptions(),
          housing: bool = True) -> Solution:
    """Backward induction from the terminal bequest value to retirement age."""
    params.validate()
    options.validate()
    ctx = _context(params, grid, options)
    m = params.market
    n_ages = m.T - m.t0 + 1
    n = grid.nodes.size
    value = np.empty((n_ages, 2, 2, n))
    alpha = np.empty((n_ages - 1, 2, 2, n))
    delta = np.empty((n_ages - 1, 2, 2, n))
    value[-1] = terminal_value(params, grid.nodes)[None, None, :]
    for i in range(n_ages - 2, -1, -1):
        value[i], alpha[i], delta[i] = bellman_step(m.t0 + i, value[i + 1], ctx)
    sol = Solution(params, grid, options, value, alpha, delta)
    if housing:
        attach_housing(sol)
    return sol


def attach_housing(sol: Solution) -> Solution:
    """Fill the unconditional and owner-conditional housing choices at ``t0``."""
    n = sol.grid.nodes.size
    H, Vt, Ho, Vo = (np.empty((2, n)) for _ in range(4))
    for d in (0, 1):
        H[d], Vt[d] = optimize_housing(sol.grid.nodes, d, sol)
        Ho[d], Vo[d] = optimize_housing(sol.grid.nodes, d, sol, owner_only=True)
    sol.H_star, sol.V_tilde, sol.H_owner, sol.V_owner = H, Vt, Ho, Vo
    return sol


# ---------------------------------------------------------------------------
# Python reference objective (slow, for checks and single-state queries)
# ---------------------------------------------------------------------------


def node_objective(sol_or_next, t: int, d: int, h: int, w: float, params: ModelParams,
                   grid: WealthGrid, options: SolveOptions = SolveOptions()) -> Callable[[float, float], float]:
    """Bellman objective ``(alpha, delta) -> utils`` at one state, built from plain Python pieces.

    ``sol_or_next`` is either a :class:`Solution` (its age ``t + 1``
    surfaces are used) or an array ``value_next[d, h, node]``.
    """
    from .economics import pension_breakdown

    m, u = params.market, params.utility
    arr = ModelArrays.build(params)
    i = t - m.t0
    value_next = sol_or_next.value[i + 1] if isinstance(sol_or_next, Solution) else sol_or_next
    same = build_pchip(grid.nodes, value_next[d, h])
    other = build_pchip(grid.nodes, value_next[0, h]) if d == 1 else None
    quad = gauss_hermite(options.quad_order)
    z, wq = return_nodes(m.mu, m.sigma, quad)
    surv = arr.survival[d, i]
    er = math.exp(arr.rates[i])
    deduction = arr.deduction_rate[d, i] * w

    def cont_at(s, dl):
        acc = 0.0
        for zi, wi in zip(z, wq):
            x = s * (dl * math.exp(zi) + (1.0 - dl) * er)
            v = surv * float(same(x, clamp=True))
            if surv < 1.0:
                vo = bequest_utility(x, u) if d == 0 else float(other(x, clamp=True))
                v += (1.0 - surv) * vo
            acc += wi * v
        return acc

    if options.fixed_delta is not None:
        ev = build_pchip(grid.nodes, [cont_at(x, options.fixed_delta) for x in grid.nodes])
        cont = lambda s, dl: float(ev(s, clamp=True))  # noqa: E731
    else:
        cont = cont_at

    def objective(alpha: float, dl: float) -> float:
        p = pension_breakdown(alpha, w, t, d, bool(h), deduction, params.pension).pension
        c = alpha * w + p
        uc = consumption_utility(c, d, t, u, m.t0)
        if uc == -math.inf:
            return -math.inf
        s = max(w - alpha * w, 0.0)
        return uc + arr.beta[i] * cont(s, dl)

    return objective


def alpha_bounds(t: int, d: int, w: float, params: ModelParams, options: SolveOptions) -> tuple[float, float]:
    """Search box for the drawdown proportion at one state."""
    pmax = params.pension.test(d).full_rate
    if not params.pension.enabled or t < params.pension.eligibility_age:
        pmax = 0.0
    lo = -pmax / w
    if options.min_withdrawals:
        lo = max(lo, min_withdrawal_rate(t, params.pension))
    return lo, 1.0


# ---------------------------------------------------------------------------
# Housing
# ---------------------------------------------------------------------------


def housing_coefficients(params: ModelParams, arrays: Optional[ModelArrays] = None):
    """Survival-and-discount weights for housing utility.

    Returns ``(own, widow)`` arrays of shape ``(2, n_ages)`` and
    ``(n_ages,)``: the housing value of status ``d`` at age ``t`` is
    ``own[d, i] * U_H(H, d) + (d == couple) * widow[i] * U_H(H, single)``.
    """
    arr = arrays or ModelArrays.build(params)
    n = arr.survival.shape[1]
    A = np.zeros((2, n + 1))
    B = np.zeros(n + 1)
    for i in range(n - 1, -1, -1):
        b, pS, pC = arr.beta[i], arr.survival[0, i], arr.survival[1, i]
        A[0, i] = 1.0 + b * pS * A[0, i + 1]
        A[1, i] = 1.0 + b * pC * A[1, i + 1]
        B[i] = b * (pC * B[i + 1] + (1.0 - pC) * A[0, i + 1])
    return A, B


def housing_value_sum(H: float, g, t: int, params: ModelParams) -> float:
    """Discounted, survival-weighted housing utility from age ``t`` to ``T - 1``."""
    from .economics import FamilyStatus

    g = FamilyStatus(g)
    if g in (FamilyStatus.DEAD, FamilyStatus.DIED):
        return 0.0
    i = int(t) - params.market.t0
    if not 0 <= i <= params.market.T - params.market.t0:
        raise OutOfRangeError(f"age {t} outside [t0, T]")
    A, B = housing_coefficients(params)
    d = g.index
    val = A[d, i] * housing_utility(H, d, params.utility)
    if d == 1:
        val += B[i] * housing_utility(H, 0, params.utility)
    return float(val)


def optimize_housing(total_wealth, d: int, solution: Solution, t: Optional[int] = None,
                     candidates: Optional[Sequence[float]] = None, owner_only: bool = False,
                     n_grid: int = 64, tol: float = 1e-10):
    """Best house value ``H*`` in ``{0} U [H_L, W]`` and the total value ``V~``.

    ``total_wealth`` may be a scalar or an array. With ``candidates`` the
    owner choice is restricted to that finite set (values outside
    ``[H_L, W]`` are skipped). ``owner_only`` drops the renter option (used
    for households observed to own their home); such households with
    total wealth below ``H_L`` get ``nan``. Ties go to ``H = 0``.
    """
    params = solution.params
    t = solution.t0 if t is None else int(t)
    i = solution._age_index(t, decision=False)
    HL = params.housing_floor
    u = params.utility
    A, B = housing_coefficients(params, solution.arrays)
    own, widow = A[d, i], (B[i] if d == 1 else 0.0)
    nodes = solution.grid.nodes
    Vown = np.ascontiguousarray(solution.value[i, d, 1])
    Down = solution.slopes("value", i, d, 1)
    scalar = np.ndim(total_wealth) == 0
    W = np.atleast_1d(np.asarray(total_wealth, dtype=float))
    if np.any(W < 0):
        raise InvalidInputError("total wealth must be non-negative")
    rent = pchip_eval_many(nodes, solution.value[i, d, 0], solution.slopes("value", i, d, 0), W)
    Hs = np.zeros_like(W)
    Vs = np.where(owner_only, -np.inf, rent)
    for j, wt in enumerate(W):
        if wt < HL:
            if owner_only:
                Hs[j], Vs[j] = np.nan, np.nan
            continue
        if candidates is not None:
            best_h, best_v = math.nan, -math.inf
            for H in candidates:
                if HL <= H <= wt:
                    v = K._house_value(float(H), wt, own, widow, u.lam, u.zeta(d), u.gamma_H, nodes, Vown, Down)
                    if v > best_v:
                        best_h, best_v = float(H), v
        else:
            best_h, best_v = K.best_house(wt, HL, own, widow, u.lam, u.zeta(d), u.gamma_H,
                                          nodes, Vown, Down, n_grid, tol)
        if best_v > Vs[j]:
            Hs[j], Vs[j] = best_h, best_v
    if scalar:
        return float(Hs[0]), float(Vs[0])
    return Hs, Vs


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_table(path: Path, nodes: np.ndarray, ages: np.ndarray, table: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write("age," + ",".join(_fmt(x) for x in nodes) + "\n")
        for age, row in zip(ages, table):
            fh.write(f"{int(age)}," + ",".join(_fmt(x) for x in row) + "\n")


def _read_table(path: Path):
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    nodes = np.array([float(x) for x in lines[0].split(",")[1:]])
    ages, rows = [], []
    for ln in lines[1:]:
        parts = ln.split(",")
        ages.append(int(parts[0]))
        rows.append([float(x) for x in parts[1:]])
    return nodes, np.array(ages), np.array(rows)


def save_solution(sol: Solution, directory) -> Path:
    """Write metadata, parameters and CSV tables; floats use shortest round-trip repr."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metadata.txt", "w") as fh:
        for key, val in sol.metadata().items():
            fh.write(f"{key} = {val}\n")
    with open(out / "params.json", "w") as fh:
        json.dump({"params": sol.params.to_dict(), "options": asdict(sol.options)}, fh, indent=1)
    ages = sol.ages
    for d in (0, 1):
        for h in (0, 1):
            tag = f"{STATUS_NAMES[d]}_{HOME_NAMES[h]}"
            _write_table(out / f"value_{tag}.csv", sol.grid.nodes, ages, sol.value[:, d, h])
            _write_table(out / f"alpha_{tag}.csv", sol.grid.nodes, ages[:-1], sol.alpha[:, d, h])
            _write_table(out / f"delta_{tag}.csv", sol.grid.nodes, ages[:-1], sol.delta[:, d, h])
        if sol.H_star is not None:
            with open(out / f"H_star_{STATUS_NAMES[d]}.csv", "w") as fh:
                fh.write("total_wealth,H_star,V_tilde,H_owner,V_owner\n")
                cols = (sol.grid.nodes, sol.H_star[d], sol.V_tilde[d], sol.H_owner[d], sol.V_owner[d])
                for row in zip(*cols):
                    fh.write(",".join(_fmt(x) for x in row) + "\n")
    return out


def read_metadata(directory) -> dict:
    path = Path(directory) / "metadata.txt"
    if not path.exists():
        raise InvalidDataError(f"{path} not found")
    meta = {}
    with open(path) as fh:
        for ln in fh:
            if "=" in ln:
                k, v = ln.split("=", 1)
                meta[k.strip()] = v.strip()
    return meta


def load_solution(directory) -> Solution:
    src = Path(directory)
    meta = read_metadata(src)
    with open(src / "params.json") as fh:
        blob = json.load(fh)
    params = ModelParams.from_dict(blob["params"])
    options = SolveOptions(**blob["options"])
    if params.digest() != meta["params_hash"]:
        raise InvalidDataError("stored parameters do not match the recorded hash")
    n_ages = params.market.T - params.market.t0 + 1
    value = alpha = delta = None
    nodes = None
    for d in (0, 1):
        for h in (0, 1):
            tag = f"{STATUS_NAMES[d]}_{HOME_NAMES[h]}"
            nodes, _, v = _read_table(src / f"value_{tag}.csv")
            _, _, a = _read_table(src / f"alpha_{tag}.csv")
            _, _, dl = _read_table(src / f"delta_{tag}.csv")
            if value is None:
                n = nodes.size
                value = np.empty((n_ages, 2, 2, n))
                alpha = np.empty((n_ages - 1, 2, 2, n))
                delta = np.empty((n_ages - 1, 2, 2, n))
            value[:, d, h], alpha[:, d, h], delta[:, d, h] = v, a, dl
    grid = WealthGrid(nodes, float(meta["wmax_data"]))
    sol = Solution(params, grid, options, value, alpha, delta)
    hs = [src / f"H_star_{s}.csv" for s in STATUS_NAMES]
    if all(p.exists() for p in hs):
        tabs = [np.loadtxt(p, delimiter=",", skiprows=1, ndmin=2) for p in hs]
        sol.H_star, sol.V_tilde, sol.H_owner, sol.V_owner = (
            np.vstack([tab[:, c] for tab in tabs]) for c in (1, 2, 3, 4))
    return sol
