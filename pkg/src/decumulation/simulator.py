"""
Forward simulation
==================

Monte Carlo and expected-value paths under a solved policy, means-test
phase classification, realized utility and the random-policy audit, plus
CSV emitters for the plot data behind the standard figures.

Random numbers come from counter-based Philox streams keyed by
``(seed, purpose, index)`` so that different policies can be compared on
common random numbers.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .economics import FamilyStatus, bequest_utility, pension_components
from .errors import InfeasibleActionError, InvalidInputError, OutOfRangeError
from .solver import STATUS_NAMES, Solution, alpha_bounds

# stream purposes
RETURNS, MORTALITY, POLICY = 0, 1, 2

NOT_ALIVE = -1


class Phase(str, Enum):
    FULL = "FullPension"
    ASSET = "AssetTestBinding"
    INCOME = "IncomeTestBinding"
    NONE = "NoPension"


PHASES = (Phase.FULL, Phase.ASSET, Phase.INCOME, Phase.NONE)


def phase_codes(pension, p_asset, p_income, full_rate: float, tol: float = 1e-6) -> np.ndarray:
    """Integer phase codes (index into :data:`PHASES`); a tie between the tests counts as income."""
    code = np.where(np.asarray(p_asset) < np.asarray(p_income), 1, 2)
    code = np.where(np.asarray(pension) >= full_rate - tol, 0, code)
    code = np.where(np.asarray(pension) <= tol, 3, code)
    return code


def classify_phase(w: float, alpha: float, t: float, d: int, homeowner: bool, deduction: float,
                   policy) -> Phase:
    """Means-test phase of the state ``(w, alpha * w)``."""
    p, pa, pi = pension_components(alpha * w, w, t, d, bool(homeowner), deduction, policy)
    full = policy.test(d).full_rate
    if t < policy.eligibility_age or not policy.enabled:
        return Phase.NONE
    return PHASES[int(phase_codes(p, pa, pi, full))]


def rng(seed: int, purpose: int, index: int = 0) -> np.random.Generator:
    """Independent Philox stream for one purpose (returns, mortality, policy draws)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), purpose, index])))


# ---------------------------------------------------------------------------
# Paths
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimPath:
    """One trajectory; flow arrays cover decision ages ``t0 .. T-1``."""

    ages: np.ndarray
    wealth: np.ndarray
    status: np.ndarray
    alpha: np.ndarray
    delta: np.ndarray
    pension: np.ndarray
    consumption: np.ndarray
    phase: tuple


@dataclass
class SimPaths:
    """A batch of simulated trajectories stored as ``(n_paths, n_years)`` arrays.

    ``wealth`` and ``status`` include the terminal age (one extra column).
    ``phase`` holds indices into :data:`PHASES`, or ``-1`` where no
    household is alive.
    """

    ages: np.ndarray
    wealth: np.ndarray
    status: np.ndarray
    alpha: np.ndarray
    delta: np.ndarray
    pension: np.ndarray
    consumption: np.ndarray
    phase: np.ndarray
    homeowner: bool
    house: float = 0.0

    def __len__(self) -> int:
        return self.wealth.shape[0]

    def __getitem__(self, i: int) -> SimPath:
        ph = tuple(PHASES[c] if c >= 0 else None for c in self.phase[i])
        return SimPath(self.ages, self.wealth[i], self.status[i], self.alpha[i], self.delta[i],
                       self.pension[i], self.consumption[i], ph)

    def to_csv(self, path) -> Path:
        """One row per (path_id, age); flow columns are empty at the terminal age."""
        path = Path(path)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["path_id", "age", "status", "wealth", "alpha", "delta", "pension", "consumption", "phase"])
            n_years = self.alpha.shape[1]
            for i in range(len(self)):
                for j, age in enumerate(self.ages):
                    st = FamilyStatus(int(self.status[i, j])).name.lower()
                    row = [i, int(age), st, repr(float(self.wealth[i, j]))]
                    if j < n_years:
                        c = self.phase[i, j]
                        row += [repr(float(self.alpha[i, j])), repr(float(self.delta[i, j])),
                                repr(float(self.pension[i, j])), repr(float(self.consumption[i, j])),
                                PHASES[c].value if c >= 0 else ""]
                    else:
                        row += ["", "", "", "", ""]
                    wr.writerow(row)
        return path


PolicyFn = Callable[[int, int, np.ndarray], tuple]


def optimal_policy(sol: Solution, h: int) -> PolicyFn:
    def policy(t, d, w):
        return sol.policy(t, d, h, w)
    return policy


def _check_start(sol: Solution, w0: float, g0) -> FamilyStatus:
    g0 = FamilyStatus(g0)
    if not w0 >= 0:
        raise InvalidInputError("starting wealth must be non-negative")
    if w0 > sol.grid.top:
        raise OutOfRangeError(f"starting wealth {w0} above the grid top {sol.grid.top:.6g}")
    return g0


def _run(sol: Solution, w0, g0: FamilyStatus, h: int, n: int, policy: PolicyFn,
         z: Optional[np.ndarray], u: Optional[np.ndarray]) -> SimPaths:
    """Roll paths forward. ``z=None`` uses the mean gross return; ``u=None`` means certain survival."""
    params, arr = sol.params, sol.arrays
    m = params.market
    Y = m.T - m.t0
    wealth = np.zeros((n, Y + 1))
    status = np.full((n, Y + 1), int(FamilyStatus.DEAD), dtype=np.int8)
    wealth[:, 0] = w0
    status[:, 0] = int(g0)
    alpha = np.zeros((n, Y))
    delta = np.zeros((n, Y))
    pension = np.zeros((n, Y))
    cons = np.zeros((n, Y))
    phase = np.full((n, Y), NOT_ALIVE, dtype=np.int8)
    mean_risky = math.exp(m.mu + 0.5 * m.sigma ** 2)
    for i in range(Y):
        t = m.t0 + i
        g = status[:, i]
        w = wealth[:, i]
        er = math.exp(arr.rates[i])
        died = g == FamilyStatus.DIED
        wealth[died, i + 1] = 0.0
        for d, code in ((0, FamilyStatus.SINGLE), (1, FamilyStatus.COUPLE)):
            sel = np.flatnonzero(g == code)
            if sel.size == 0:
                continue
            ws = w[sel]
            a, dl = policy(t, d, ws)
            a = np.broadcast_to(np.asarray(a, dtype=float), ws.shape)
            dl = np.broadcast_to(np.asarray(dl, dtype=float), ws.shape)
            aw = a * ws
            p, pa, pi = pension_components(aw, ws, t, d, bool(h), arr.deduction_rate[d, i] * ws, params.pension)
            alpha[sel, i], delta[sel, i] = a, dl
            pension[sel, i] = p
            cons[sel, i] = aw + p
            full = params.pension.test(d).full_rate if t >= params.pension.eligibility_age and params.pension.enabled else 0.0
            phase[sel, i] = phase_codes(p, pa, pi, full) if full > 0 else 3
            savings = np.maximum(ws - aw, 0.0)
            risky = mean_risky if z is None else np.exp(z[sel, i])
            wealth[sel, i + 1] = savings * (dl * risky + (1.0 - dl) * er)
            if u is None:
                status[sel, i + 1] = int(code)
            else:
                stays = u[sel, i] < arr.survival[d, i]
                nxt = FamilyStatus.SINGLE if d == 1 else FamilyStatus.DIED
                status[sel, i + 1] = np.where(stays, int(code), int(nxt))
    return SimPaths(m.ages.copy(), wealth, status, alpha, delta, pension, cons, phase, bool(h))


def draw_shocks(sol: Solution, n: int, seed: int):
    """Log-returns and survival uniforms for ``n`` paths (common across policies)."""
    m = sol.params.market
    Y = m.T - m.t0
    z = m.mu + m.sigma * rng(seed, RETURNS).standard_normal((n, Y))
    u = rng(seed, MORTALITY).random((n, Y))
    return z, u


def simulate_paths(solution: Solution, w0: float, g0, h: int, n: int, seed: int = 0,
                   policy: Optional[PolicyFn] = None) -> SimPaths:
    """Monte Carlo paths under the solved policy (or a supplied one)."""
    g0 = _check_start(solution, w0, g0)
    if n < 1:
        raise InvalidInputError("need at least one path")
    z, u = draw_shocks(solution, n, seed)
    return _run(solution, float(w0), g0, int(h), int(n), policy or optimal_policy(solution, h), z, u)


def expected_wealth_path(solution: Solution, w0: float, g0, h: int) -> SimPaths:
    """Single path with mean gross returns and no deaths."""
    g0 = _check_start(solution, w0, g0)
    return _run(solution, float(w0), g0, int(h), 1, optimal_policy(solution, h), None, None)


# ---------------------------------------------------------------------------
# Utility along paths
# ---------------------------------------------------------------------------


def realized_utility(paths, params, house: float = 0.0) -> np.ndarray:
    """Discounted sum of rewards along each path, from ``t0`` through the terminal age.

    Accepts :class:`SimPaths` (returns an array) or a single
    :class:`SimPath` (returns a float). ``house`` adds housing utility for
    every alive year of an owner-occupier.
    """
    single = isinstance(paths, SimPath)
    status = np.atleast_2d(paths.status)
    wealth = np.atleast_2d(paths.wealth)
    cons = np.atleast_2d(paths.consumption)
    u, m = params.utility, params.market
    Y = m.T - m.t0
    rates = np.array([m.rate(t) for t in range(m.t0, m.T)])
    disc = np.exp(-np.concatenate([[0.0], np.cumsum(rates)]))
    beq = np.vectorize(lambda x: bequest_utility(x, u), otypes=[float])
    total = np.zeros(status.shape[0])
    for i in range(Y + 1):
        g = status[:, i]
        term = np.zeros_like(total)
        died = g == FamilyStatus.DIED
        alive = (g == FamilyStatus.SINGLE) | (g == FamilyStatus.COUPLE)
        if i == Y:
            died = died | alive
            alive = np.zeros_like(alive)
        if died.any():
            term[died] = beq(wealth[died, i])
        for d, code in ((0, FamilyStatus.SINGLE), (1, FamilyStatus.COUPLE)):
            sel = alive & (g == code)
            if not sel.any():
                continue
            excess = cons[sel, i] - u.cbar(d)
            with np.errstate(invalid="ignore", divide="ignore"):
                uc = (np.maximum(excess, 0.0) / u.zeta(d)) ** u.gamma(d) / (u.psi ** i * u.gamma(d))
            uc = np.where(excess > 0, uc, -np.inf)
            if house > 0:
                uc = uc + (u.lam * house / u.zeta(d)) ** u.gamma_H / u.gamma_H
            term[sel] = uc
        total += disc[i] * term
    return float(total[0]) if single else total


# ---------------------------------------------------------------------------
# Random-policy audit
# ---------------------------------------------------------------------------


def random_policy(sol: Solution, h: int, gen: np.random.Generator, max_tries: int = 10000) -> PolicyFn:
    """Uniform draws from the action box, redrawn until consumption clears the floor."""
    params, arr = sol.params, sol.arrays
    fixed = sol.options.fixed_delta

    def policy(t, d, w):
        i = t - params.market.t0
        lo = np.array([alpha_bounds(t, d, x, params, sol.options)[0] if x > 0 else 0.0 for x in w])
        a = np.empty(w.shape)
        todo = np.arange(w.size)
        for _ in range(max_tries):
            if todo.size == 0:
                break
            cand = lo[todo] + (1.0 - lo[todo]) * gen.random(todo.size)
            ww = w[todo]
            p, _, _ = pension_components(cand * ww, ww, t, d, bool(h), arr.deduction_rate[d, i] * ww, params.pension)
            ok = cand * ww + p > params.utility.cbar(d)
            a[todo[ok]] = cand[ok]
            todo = todo[~ok]
        if todo.size:
            raise InfeasibleActionError(f"no admissible random action found at age {t}")
        dl = np.full(w.shape, fixed) if fixed is not None else gen.random(w.size)
        return a, dl

    return policy


@dataclass
class AuditReport:
    optimal_mean: float
    optimal_se: float
    random_means: np.ndarray
    diff_se: np.ndarray
    violations: list = field(default_factory=list)
    n_paths: int = 0

    @property
    def passed(self) -> bool:
        return not self.violations

    @property
    def beaten(self) -> int:
        """Random policies whose mean exceeds the optimal mean at all."""
        return int(np.sum(self.random_means > self.optimal_mean))

    def summary(self) -> str:
        lines = [f"optimal mean {self.optimal_mean:.10g} (se {self.optimal_se:.3g}, {self.n_paths} paths)",
                 f"random policies: {len(self.random_means)}, best mean {np.max(self.random_means):.10g}",
                 f"violations beyond 3 se: {len(self.violations)}"]
        return "\n".join(lines)


def verify_optimality(solution: Solution, w0: float, g0, h: int, n_paths: int = 1000,
                      n_random_policies: int = 100, seed: int = 0, house: float = 0.0,
                      policies: Optional[list] = None) -> AuditReport:
    """Compare the solved policy against random admissible ones on common random numbers.

    A violation is a random policy whose mean realized utility exceeds the
    optimal one by more than three standard errors of the paired difference.
    """
    g0 = _check_start(solution, w0, g0)
    z, u = draw_shocks(solution, n_paths, seed)
    base = realized_utility(_run(solution, w0, g0, h, n_paths, optimal_policy(solution, h), z, u),
                            solution.params, house)
    if policies is None:
        policies = [random_policy(solution, h, rng(seed, POLICY, k)) for k in range(n_random_policies)]
    means, ses, bad = [], [], []
    for k, pol in enumerate(policies):
        vals = realized_utility(_run(solution, w0, g0, h, n_paths, pol, z, u), solution.params, house)
        diff = vals - base
        se = float(np.std(diff, ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
        means.append(float(np.mean(vals)))
        ses.append(se)
        if np.mean(diff) > 3.0 * se:
            bad.append(k)
    return AuditReport(float(np.mean(base)), float(np.std(base, ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0,
                       np.array(means), np.array(ses), bad, n_paths)


# ---------------------------------------------------------------------------
# Figure data
# ---------------------------------------------------------------------------


def fig5_wealth_levels(policy, d: int = 0, homeowner: bool = False) -> dict:
    """Representative wealth levels across the asset-test schedule."""
    mt = policy.test(d)
    lower = mt.asset_threshold(homeowner)
    upper = lower + mt.full_rate / mt.asset_taper
    return {
        "full_pension": 0.5 * lower,
        "lower_asset_threshold": lower,
        "partial_pension": 0.5 * (lower + upper),
        "upper_asset_threshold": upper,
        "no_pension": 1.5 * upper,
    }


def _write_rows(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for row in rows:
            wr.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return path


def export_figure_data(sol: Solution, out_dir, d: int = 0, h: int = 0, ages=(65, 75, 85),
                       path_starts=(100000.0, 400000.0), wmax: Optional[float] = None) -> list:
    """Write the plot-data CSVs; returns the written paths.

    Wealth axes stop at ``wmax`` (default: the largest data wealth the grid
    was built for).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    params, arr = sol.params, sol.arrays
    wmax = sol.grid.wmax_data if wmax is None else wmax
    nodes = sol.grid.nodes[sol.grid.nodes <= wmax * (1 + 1e-12)]
    tag = "_mindd" if sol.options.min_withdrawals else ""
    written = []

    rows = []
    for age in ages:
        if not sol.t0 <= age < sol.T:
            continue
        i = age - sol.t0
        for dd in (0, 1):
            for hh in (0, 1):
                a = sol.alpha[i, dd, hh, : nodes.size]
                aw = a * nodes
                p, pa, pi = pension_components(aw, nodes, age, dd, bool(hh), arr.deduction_rate[dd, i] * nodes, params.pension)
                ph = phase_codes(p, pa, pi, params.pension.test(dd).full_rate)
                for k, w in enumerate(nodes):
                    rows.append([age, STATUS_NAMES[dd], hh, float(w), float(a[k]), float(aw[k]), float(p[k]),
                                 float(aw[k] + p[k]), PHASES[ph[k]].value])
    written.append(_write_rows(out / f"fig_drawdown{tag}.csv",
                               ["age", "status", "homeowner", "wealth", "alpha", "drawdown", "pension", "consumption", "phase"], rows))

    rows = []
    for w0 in path_starts:
        if w0 > sol.grid.top:
            continue
        ep = expected_wealth_path(sol, w0, FamilyStatus.COUPLE if d else FamilyStatus.SINGLE, h)
        for j, age in enumerate(ep.ages[:-1]):
            rows.append([float(w0), int(age), float(ep.wealth[0, j]), float(ep.alpha[0, j]), float(ep.pension[0, j]),
                         float(ep.consumption[0, j]), PHASES[ep.phase[0, j]].value])
    written.append(_write_rows(out / f"fig_phases{tag}.csv",
                               ["w0", "age", "wealth", "alpha", "pension", "consumption", "phase"], rows))

    rows = []
    for i, age in enumerate(sol.ages[:-1]):
        for k, w in enumerate(nodes):
            rows.append([int(age), float(w), float(sol.delta[i, d, h, k])])
    written.append(_write_rows(out / f"fig_delta_contour{tag}.csv", ["age", "wealth", "delta"], rows))

    levels = fig5_wealth_levels(params.pension, d, bool(h))
    rows = []
    for age in sol.ages[:-1]:
        _, dl = zip(*(sol.policy(age, d, h, w) for w in levels.values()))
        rows.append([int(age)] + [float(x) for x in dl])
    written.append(_write_rows(out / f"fig_delta_slices{tag}.csv", ["age"] + list(levels), rows))
    written.append(_write_rows(out / "fig_delta_slices_levels.csv", ["level", "wealth"],
                               [[k, float(v)] for k, v in levels.items()]))

    if sol.H_star is not None:
        tw = sol.grid.nodes[sol.grid.nodes <= wmax * (1 + 1e-12)]
        n = tw.size
        rows = [[float(tw[k]), float(sol.H_star[0, k]), float(sol.H_star[1, k]),
                 float(sol.H_owner[0, k]), float(sol.H_owner[1, k])] for k in range(n)]
        written.append(_write_rows(out / "fig_housing.csv",
                                   ["total_wealth", "H_star_single", "H_star_couple", "H_owner_single", "H_owner_couple"], rows))
    return written
