"""
Maximum-likelihood calibration
==============================

Household samples are compared with model predictions of consumption
(every household) and house value (homeowners). Log residuals are
Gaussian with one standard deviation per block:

====================  =========================
block                 households
====================  =========================
consumption_single    all singles
consumption_couple    all couples
housing_single        single homeowners
housing_couple        couple homeowners
====================  =========================

The standard deviations are profiled out analytically, so the search runs
over the nine utility parameters only. Stage 1 scores a three-level design
(full factorial or a Latin-hypercube subset); stage 2 refines the best
design point with Nelder-Mead in an unconstrained transformed space.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.stats import qmc

from .economics import FamilyStatus, ModelParams, UtilityParams, pension_components
from .errors import InvalidConfigError, InvalidDataError, InvalidInputError, OutOfRangeError
from .numerics import nelder_mead
from .solver import SolveOptions, Solution, build_grid, optimize_housing, solve

log = logging.getLogger(__name__)

THETA_NAMES = ("gamma_S", "gamma_C", "gamma_H", "theta", "a", "cbar_S", "cbar_C", "psi", "lam")
BLOCKS = ("consumption_single", "consumption_couple", "housing_single", "housing_couple")
SIGMA2_FLOOR = 1e-300


# ---------------------------------------------------------------------------
# Samples
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HouseholdSample:
    """One survey household. ``age`` is the younger spouse's age for couples."""

    age: int
    status: FamilyStatus
    homeowner: bool
    wealth: float
    consumption: float
    house_value: float = 0.0
    received_pension: Optional[float] = None
    row: int = 0

    @property
    def d(self) -> int:
        return self.status.index

    @property
    def total_wealth(self) -> float:
        return self.wealth + (self.house_value if self.homeowner else 0.0)


REQUIRED_COLUMNS = ("age", "status", "homeowner", "wealth", "consumption", "house_value")
_TRUE = {"1", "true", "yes", "y", "t"}
_FALSE = {"0", "false", "no", "n", "f"}


def _parse_bool(token: str) -> bool:
    tok = token.strip().lower()
    if tok in _TRUE:
        return True
    if tok in _FALSE:
        return False
    raise ValueError(f"not a yes/no flag: {token!r}")


def load_samples(path) -> list[HouseholdSample]:
    """Read a samples CSV with header ``age,status,homeowner,wealth,consumption,house_value``.

    An optional ``received_pension`` column enables the entitled-but-unpaid
    filter. Errors name the offending line.
    """
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InvalidDataError(f"cannot read samples file {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            log.warning("samples file %s is empty", path)
            return []
        header = [h.strip().lower() for h in header]
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise InvalidDataError(f"{path}: missing columns {missing}")
        col = {name: header.index(name) for name in header}
        out = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not x.strip() for x in row):
                continue
            if len(row) != len(header):
                raise InvalidDataError(f"{path}, line {lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                age = float(row[col["age"]])
                if age != int(age):
                    raise ValueError("age must be a whole number of years")
                status = FamilyStatus.parse(row[col["status"]])
                if status not in (FamilyStatus.SINGLE, FamilyStatus.COUPLE):
                    raise ValueError(f"status must be single or couple, got {row[col['status']]!r}")
                rp = None
                if "received_pension" in col and row[col["received_pension"]].strip():
                    rp = float(row[col["received_pension"]])
                out.append(HouseholdSample(
                    age=int(age), status=status, homeowner=_parse_bool(row[col["homeowner"]]),
                    wealth=float(row[col["wealth"]]), consumption=float(row[col["consumption"]]),
                    house_value=float(row[col["house_value"]] or 0.0), received_pension=rp, row=lineno))
            except (ValueError, InvalidInputError) as exc:
                raise InvalidDataError(f"{path}, line {lineno}: {exc}") from exc
    if not out:
        log.warning("samples file %s has no data rows", path)
    return out


def save_samples(samples: Sequence[HouseholdSample], path) -> Path:
    path = Path(path)
    has_rp = any(s.received_pension is not None for s in samples)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(list(REQUIRED_COLUMNS) + (["received_pension"] if has_rp else []))
        for s in samples:
            row = [s.age, s.status.name.lower(), int(s.homeowner), repr(s.wealth), repr(s.consumption), repr(s.house_value)]
            if has_rp:
                row.append("" if s.received_pension is None else repr(s.received_pension))
            wr.writerow(row)
    return path


@dataclass(frozen=True)
class FilterRules:
    """Sample exclusion rules.

    ``material_pension`` (dollars per year) activates the rule dropping
    households that received no pension although entitled to at least
    that much; it has no default because the threshold is a judgement call.
    """

    min_consumption: float = 3000.0
    material_pension: Optional[float] = None


def entitled_pension(s: HouseholdSample, policy) -> float:
    """Asset-test pension at the sample's liquid wealth (income test ignored, so an upper bound)."""
    p, _, _ = pension_components(0.0, s.wealth, s.age, s.d, s.homeowner, 0.0, policy)
    return float(p)


def filter_samples(samples: Sequence[HouseholdSample], policy, rules: FilterRules = FilterRules()):
    """Split samples into ``(kept, dropped)``; ``dropped`` holds ``(sample, reason)`` pairs."""
    kept, dropped = [], []
    if rules.material_pension is not None and not any(s.received_pension is not None for s in samples):
        log.info("no received_pension column; entitled-but-unpaid rule skipped")
    for s in samples:
        reason = None
        if s.wealth < 0:
            reason = "negative wealth"
        elif s.age < policy.eligibility_age:
            reason = "below pension eligibility age"
        elif s.consumption < rules.min_consumption:
            reason = f"consumption below {rules.min_consumption:g}"
        elif s.consumption > s.wealth + entitled_pension(s, policy):
            reason = "consumption exceeds wealth plus entitled pension"
        elif s.homeowner and not s.house_value > 0:
            reason = "homeowner without a house value"
        elif (rules.material_pension is not None and s.received_pension is not None
              and s.received_pension <= 0 and entitled_pension(s, policy) >= rules.material_pension):
            reason = "entitled to a material pension but received none"
        if reason is None:
            kept.append(s)
        else:
            dropped.append((s, reason))
    return kept, dropped


# ---------------------------------------------------------------------------
# Parameter transforms
# ---------------------------------------------------------------------------


def _logistic(x):
    return 1.0 / (1.0 + math.exp(-x)) if x >= 0 else math.exp(x) / (1.0 + math.exp(x))


def _logit(p):
    return math.log(p) - math.log1p(-p)


def to_vector(u: UtilityParams) -> np.ndarray:
    return np.array([getattr(u, n) for n in THETA_NAMES], dtype=float)


def from_vector(x, base: UtilityParams = UtilityParams()) -> UtilityParams:
    return replace(base, **{n: float(v) for n, v in zip(THETA_NAMES, x)})


@dataclass(frozen=True)
class Transform:
    """Bijection between the constrained parameters and R^9.

    gamma = -exp(u); theta, lambda = logistic(u); a = exp(u);
    cbar_d = P_max,d * logistic(u); psi = 1 + exp(u).
    """

    pmax_S: float
    pmax_C: float

    def forward(self, theta) -> np.ndarray:
        g_S, g_C, g_H, th, a, cS, cC, psi, lam = theta
        if not (g_S < 0 and g_C < 0 and g_H < 0 and 0 < th < 1 and a > 0 and 0 < cS < self.pmax_S
                and 0 < cC < self.pmax_C and psi > 1 and 0 < lam < 1):
            raise InvalidConfigError("parameters must lie strictly inside their constraints to transform")
        return np.array([math.log(-g_S), math.log(-g_C), math.log(-g_H), _logit(th), math.log(a),
                         _logit(cS / self.pmax_S), _logit(cC / self.pmax_C), math.log(psi - 1.0), _logit(lam)])

    def inverse(self, u) -> np.ndarray:
        return np.array([-math.exp(u[0]), -math.exp(u[1]), -math.exp(u[2]), _logistic(u[3]), math.exp(u[4]),
                         self.pmax_S * _logistic(u[5]), self.pmax_C * _logistic(u[6]), 1.0 + math.exp(u[7]),
                         _logistic(u[8])])

    def jacobian(self, u) -> np.ndarray:
        """Diagonal of d(theta)/d(u)."""
        th = self.inverse(u)
        return np.array([th[0], th[1], th[2], th[3] * (1 - th[3]), th[4],
                         th[5] * (1 - th[5] / self.pmax_S), th[6] * (1 - th[6] / self.pmax_C),
                         th[7] - 1.0, th[8] * (1 - th[8])])


# ---------------------------------------------------------------------------
# Predictions and likelihood
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationConfig:
    """Settings for predictions and the two-stage search.

    ``levels`` maps each parameter to its three stage-1 values.
    ``grid_k`` counts grid intervals (``grid_k + 1`` nodes). ``compute_se=False``
    skips the Hessian and reports standard errors as unavailable. After a
    converged stage-2 search, up to ``restarts`` fresh simplices are built
    around the best point; restarting stops once one gains less than
    ``fatol``.
    """

    base: ModelParams = field(default_factory=ModelParams)
    grid_k: int = 99
    quad_order: int = 5
    fixed_delta: float = 0.437
    levels: dict = field(default_factory=lambda: {
        "gamma_S": (-3.0, -2.0, -1.2),
        "gamma_C": (-3.0, -2.0, -1.2),
        "gamma_H": (-3.0, -2.0, -1.2),
        "theta": (0.8, 0.92, 0.98),
        "a": (8000.0, 20000.0, 40000.0),
        "cbar_S": (6000.0, 10000.0, 14000.0),
        "cbar_C": (9000.0, 15000.0, 21000.0),
        "psi": (1.05, 1.15, 1.3),
        "lam": (0.02, 0.045, 0.09),
    })
    stage1_budget: int = 1000
    lhs_seed: int = 0
    xatol: float = 1e-4
    fatol: float = 1e-7
    maxiter: int = 4000
    hessian_step: float = 1e-4
    restarts: int = 2
    wmax_data: Optional[float] = None
    compute_se: bool = True

    def validate(self) -> "CalibrationConfig":
        if set(self.levels) != set(THETA_NAMES):
            raise InvalidConfigError(f"stage-1 levels must cover exactly {THETA_NAMES}")
        for k, v in self.levels.items():
            if len(v) < 1:
                raise InvalidConfigError(f"no stage-1 values for {k}")
        if self.stage1_budget < 1:
            raise InvalidConfigError("stage-1 budget must be at least 1")
        if self.restarts < 0:
            raise InvalidConfigError("restarts must be non-negative")
        return self


def _group_indices(samples, key):
    groups = {}
    for j, s in enumerate(samples):
        groups.setdefault(key(s), []).append(j)
    return groups


class Predictor:
    """Solves the model for a parameter vector and predicts every sample.

    Results are cached by parameter vector, so repeated queries with the
    same ``theta`` return identical arrays.
    """

    def __init__(self, samples: Sequence[HouseholdSample], config: CalibrationConfig = CalibrationConfig()):
        self.samples = list(samples)
        self.config = config.validate()
        if not self.samples:
            raise InvalidDataError("no samples to predict")
        wmax = config.wmax_data or max(max(s.total_wealth for s in self.samples), 1.0)
        self.grid = build_grid(config.base.market, wmax, config.grid_k)
        top = max(s.total_wealth for s in self.samples)
        if top > self.grid.top:
            raise OutOfRangeError(f"sample wealth {top:.6g} above the grid top {self.grid.top:.6g}")
        for s in self.samples:
            if not config.base.market.t0 <= s.age < config.base.market.T:
                raise OutOfRangeError(f"sample on line {s.row}: age {s.age} outside the model ages")
        self.options = SolveOptions(min_withdrawals=False, quad_order=config.quad_order,
                                    fixed_delta=config.fixed_delta)
        self._cache = {}
        self.n_solves = 0

    def solve(self, theta) -> Solution:
        params = replace(self.config.base, utility=from_vector(theta, self.config.base.utility))
        self.n_solves += 1
        return solve(params, self.grid, self.options, housing=False)

    def __call__(self, theta):
        key = tuple(float(x) for x in theta)
        if key not in self._cache:
            if len(self._cache) > 256:
                self._cache.clear()
            self._cache[key] = self._predict(self.solve(key))
        return self._cache[key]

    def _predict(self, sol: Solution):
        S = self.samples
        c = np.empty(len(S))
        h = np.full(len(S), np.nan)
        arr = sol.arrays
        pol = sol.params.pension
        for (age, d, ho), idx in _group_indices(S, lambda s: (s.age, s.d, int(s.homeowner))).items():
            w = np.array([S[j].wealth for j in idx])
            a, _ = sol.policy(age, d, ho, w)
            aw = a * w
            p, _, _ = pension_components(aw, w, age, d, bool(ho), arr.deduction_rate[d, age - sol.t0] * w, pol)
            c[idx] = aw + p
        for key, idx in _group_indices(S, lambda s: (s.age, s.d) if s.homeowner else None).items():
            if key is None:
                continue
            age, d = key
            tw = np.array([S[j].total_wealth for j in idx])
            H, _ = optimize_housing(tw, d, sol, t=age, owner_only=True)
            h[idx] = H
        return c, h


def model_predictions(theta, samples, config: CalibrationConfig = CalibrationConfig()):
    """Predicted consumption for every sample and house value for homeowners (``nan`` otherwise)."""
    theta = to_vector(theta) if isinstance(theta, UtilityParams) else np.asarray(theta, dtype=float)
    return Predictor(samples, config)(theta)


def log_likelihood(observed, predicted, sigma: float) -> float:
    """Gaussian log-likelihood of the log residuals ``ln(observed / predicted)``."""
    obs = np.asarray(observed, dtype=float)
    pred = np.asarray(predicted, dtype=float)
    if np.any(~(obs > 0)) or np.any(~(pred > 0)):
        raise InvalidDataError("observed and predicted values must be positive")
    if not sigma > 0:
        raise InvalidInputError("sigma must be positive")
    r = np.log(obs) - np.log(pred)
    n = r.size
    return float(-0.5 * n * math.log(2 * math.pi * sigma ** 2) - np.sum(r ** 2) / (2 * sigma ** 2))


def profiled_block(observed, predicted) -> tuple[float, float]:
    """``(loglik, sigma_hat)`` with ``sigma_hat**2`` the mean squared log residual."""
    obs = np.asarray(observed, dtype=float)
    pred = np.asarray(predicted, dtype=float)
    if obs.size == 0:
        return 0.0, math.nan
    if np.any(~(obs > 0)) or np.any(~(pred > 0)):
        return -math.inf, math.nan
    r = np.log(obs) - np.log(pred)
    s2 = max(float(np.mean(r ** 2)), SIGMA2_FLOOR)
    n = r.size
    return -0.5 * n * (math.log(2 * math.pi * s2) + 1.0), math.sqrt(s2)


def block_masks(samples) -> dict:
    d = np.array([s.d for s in samples])
    own = np.array([s.homeowner for s in samples])
    return {
        "consumption_single": d == 0,
        "consumption_couple": d == 1,
        "housing_single": (d == 0) & own,
        "housing_couple": (d == 1) & own,
    }


def total_loglik(samples, c_pred, h_pred, masks=None):
    """Sum of the four profiled block log-likelihoods and the block sigmas."""
    masks = masks or block_masks(samples)
    c_obs = np.array([s.consumption for s in samples])
    h_obs = np.array([s.house_value for s in samples])
    total, sig = 0.0, {}
    for name, m in masks.items():
        obs, pred = (c_obs, c_pred) if name.startswith("consumption") else (h_obs, h_pred)
        ll, s = profiled_block(obs[m], pred[m])
        total += ll
        sig[name] = s
    return total, sig


# ---------------------------------------------------------------------------
# Two-stage search
# ---------------------------------------------------------------------------


@dataclass
class CalibrationResult:
    theta_hat: UtilityParams
    sigma_hat: dict
    std_errors: dict
    se_available: bool
    loglik: float
    converged: bool
    binding: dict
    stage1_best: np.ndarray
    stage1_loglik: float
    n_evaluations: int
    trace: list = field(default_factory=list, repr=False)

    def as_dict(self) -> dict:
        out = {f"theta.{k}": getattr(self.theta_hat, k) for k in THETA_NAMES}
        out.update({f"sigma.{k}": v for k, v in self.sigma_hat.items()})
        out.update({f"se.{k}": v for k, v in self.std_errors.items()})
        out.update({f"binding.{k}": v for k, v in self.binding.items()})
        out.update({"loglik": self.loglik, "converged": self.converged, "se_available": self.se_available,
                    "se_method": "observed information (central-difference Hessian, delta method)",
                    "stage1_loglik": self.stage1_loglik, "n_evaluations": self.n_evaluations})
        return out


def stage1_design(levels: dict, budget: int, seed: int = 0) -> np.ndarray:
    """Three-level design: full factorial if it fits the budget, else a Latin-hypercube subset."""
    vals = [np.asarray(levels[n], dtype=float) for n in THETA_NAMES]
    sizes = [v.size for v in vals]
    total = int(np.prod(sizes))
    if total <= budget:
        idx = np.array(np.meshgrid(*[np.arange(s) for s in sizes], indexing="ij")).reshape(len(sizes), -1).T
    else:
        u = qmc.LatinHypercube(d=len(sizes), seed=seed).random(budget)
        idx = np.minimum((u * np.array(sizes)).astype(int), np.array(sizes) - 1)
        idx = np.unique(idx, axis=0)
    return np.array([[vals[k][i] for k, i in enumerate(row)] for row in idx])


def _binding(theta, pmax_S, pmax_C, rel: float = 1e-6) -> dict:
    g_S, g_C, g_H, th, a, cS, cC, psi, lam = theta
    return {
        "gamma_S<0": -g_S < rel, "gamma_C<0": -g_C < rel, "gamma_H<0": -g_H < rel,
        "theta>=0": th < rel, "theta<1": 1 - th < rel, "a>=0": a < rel,
        "cbar_S>=0": cS < rel * pmax_S, "cbar_S<=Pmax": pmax_S - cS < rel * pmax_S,
        "cbar_C>=0": cC < rel * pmax_C, "cbar_C<=Pmax": pmax_C - cC < rel * pmax_C,
        "psi>=1": psi - 1 < rel, "lambda>0": lam < rel, "lambda<=1": 1 - lam < rel,
    }


def _hessian(f, x, h):
    n = x.size
    H = np.empty((n, n))
    f0 = f(x)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h
        fp, fm = f(x + ei), f(x - ei)
        H[i, i] = (fp - 2 * f0 + fm) / h ** 2
        for j in range(i):
            ej = np.zeros(n)
            ej[j] = h
            H[i, j] = H[j, i] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * h * h)
    return H


def standard_errors(negll, u_hat, tf: Transform, step: float):
    """Delta-method standard errors from the observed information in transformed space."""
    H = _hessian(negll, np.asarray(u_hat, dtype=float), step)
    if not np.all(np.isfinite(H)):
        return None
    try:
        np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        return None
    cov_u = np.linalg.inv(H)
    J = tf.jacobian(u_hat)
    cov = cov_u * np.outer(J, J)
    return np.sqrt(np.diag(cov))


def calibrate(samples: Sequence[HouseholdSample], config: CalibrationConfig = CalibrationConfig(),
              trace_path=None, resume: bool = False, start=None) -> CalibrationResult:
    """Two-stage maximum-likelihood fit of the nine utility parameters.

    ``trace_path`` (a directory) receives ``trace.csv`` and the simplex
    state after every iteration; with ``resume`` the search restarts from
    the saved simplex. ``start`` skips stage 1 and starts from the given
    parameter vector.
    """
    config = config.validate()
    samples = list(samples)
    masks = block_masks(samples)
    for name, m in masks.items():
        if not m.any():
            raise InvalidDataError(f"block {name} has no samples after filtering")
    pol = config.base.pension
    tf = Transform(pol.test(0).full_rate, pol.test(1).full_rate)
    predictor = Predictor(samples, config)
    trace = []
    n_eval = 0

    def loglik(theta):
        nonlocal n_eval
        n_eval += 1
        c, h = predictor(theta)
        ll, sig = total_loglik(samples, c, h, masks)
        return ll, sig

    def negll_u(u):
        ll, _ = loglik(tf.inverse(u))
        return -ll if math.isfinite(ll) else math.inf

    state_file = Path(trace_path) / "simplex.json" if trace_path else None
    init_simplex = None
    if resume:
        if state_file is None or not state_file.exists():
            raise InvalidDataError("nothing to resume: no saved simplex state")
        with open(state_file) as fh:
            st = json.load(fh)
        init_simplex = np.array(st["simplex"])
        best1, best1_ll = np.array(st["stage1_best"]), st["stage1_loglik"]
        trace = st.get("trace", [])
    elif start is not None:
        best1 = to_vector(start) if isinstance(start, UtilityParams) else np.asarray(start, dtype=float)
        best1_ll, _ = loglik(best1)
    else:
        design = stage1_design(config.levels, config.stage1_budget, config.lhs_seed)
        violations = []
        best1, best1_ll = None, -math.inf
        for row in design:
            try:
                from_vector(row, config.base.utility).validate(pol)
                ll, _ = loglik(row)
            except Exception as exc:  # infeasible design point
                violations.append(f"{dict(zip(THETA_NAMES, row))}: {exc}")
                continue
            if ll > best1_ll:
                best1, best1_ll = row, ll
        if best1 is None:
            raise InvalidConfigError("every stage-1 point is infeasible:\n" + "\n".join(violations[:20]))
        log.info("stage 1: %d points, best loglik %.6g", len(design), best1_ll)

    def callback(sim, fsim):
        rec = {"iteration": len(trace) + 1, "loglik": -float(fsim[0]),
               **{n: float(v) for n, v in zip(THETA_NAMES, tf.inverse(sim[0]))}}
        trace.append(rec)
        if state_file is not None:
            state_file.parent.mkdir(parents=True, exist_ok=True)
            tmp = state_file.with_suffix(".tmp")
            with open(tmp, "w") as fh:
                json.dump({"simplex": sim.tolist(), "fsim": [float(x) for x in fsim],
                           "stage1_best": [float(x) for x in best1], "stage1_loglik": best1_ll,
                           "trace": trace}, fh)
            tmp.replace(state_file)

    u0 = tf.forward(best1) if init_simplex is None else init_simplex[0]
    res = nelder_mead(negll_u, u0, step=np.full(9, 0.1), xatol=config.xatol, fatol=config.fatol,
                      maxiter=config.maxiter, initial_simplex=init_simplex, callback=callback)
    for _ in range(config.restarts):
        if not res.converged:
            break
        again = nelder_mead(negll_u, res.x, step=np.full(9, 0.1), xatol=config.xatol, fatol=config.fatol,
                            maxiter=config.maxiter, callback=callback)
        gain = res.fun - again.fun
        if gain > 0.0:
            res = again
        log.info("stage 2 restart: loglik %.8g (gain %.3g)", -res.fun, gain)
        if gain <= config.fatol:
            break
    theta_hat = tf.inverse(res.x)
    ll, sig = loglik(theta_hat)
    se = standard_errors(negll_u, res.x, tf, config.hessian_step) if config.compute_se else None
    std = {n: (float(v) if se is not None else math.nan) for n, v in zip(THETA_NAMES, se if se is not None else [0] * 9)}
    result = CalibrationResult(
        theta_hat=from_vector(theta_hat, config.base.utility), sigma_hat=sig, std_errors=std,
        se_available=se is not None, loglik=ll, converged=res.converged,
        binding=_binding(theta_hat, tf.pmax_S, tf.pmax_C), stage1_best=np.asarray(best1), stage1_loglik=best1_ll,
        n_evaluations=n_eval, trace=trace)
    if trace_path:
        write_trace(trace, Path(trace_path) / "trace.csv")
    return result


# ---------------------------------------------------------------------------
# Outputs
# ---------------------------------------------------------------------------


def write_result(result: CalibrationResult, path, extra: Optional[dict] = None) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        for k, v in {**(extra or {}), **result.as_dict()}.items():
            fh.write(f"{k} = {v!r}\n" if isinstance(v, float) else f"{k} = {v}\n")
    return path


def write_trace(trace: list, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["iteration", "loglik", *THETA_NAMES])
        for rec in trace:
            wr.writerow([rec["iteration"], repr(rec["loglik"])] + [repr(rec[n]) for n in THETA_NAMES])
    return path


def write_residuals(samples, c_pred, h_pred, path) -> Path:
    """Residual dump for Q-Q diagnostics: one row per (sample, block)."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["sample_id", "block", "observed", "predicted", "log_residual"])
        for j, s in enumerate(samples):
            tag = "single" if s.d == 0 else "couple"
            rows = [(f"consumption_{tag}", s.consumption, c_pred[j])]
            if s.homeowner:
                rows.append((f"housing_{tag}", s.house_value, h_pred[j]))
            for block, o, p in rows:
                r = math.log(o / p) if o > 0 and p > 0 else math.nan
                wr.writerow([s.row or j, block, repr(float(o)), repr(float(p)), repr(r)])
    return path


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------


def synthetic_samples(theta: UtilityParams, n: int, sigma: float = 0.3, seed: int = 0,
                      config: CalibrationConfig = CalibrationConfig(), ages=(65, 90),
                      liquid_range=(30000.0, 1.5e6), total_range=(2.0e6, 1.0e7),
                      owner_share: float = 0.5, couple_share: float = 0.5) -> list[HouseholdSample]:
    """Households generated by the model with log-normal noise of stdev ``sigma``.

    Renters draw liquid wealth log-uniformly from ``liquid_range``. Owners
    draw total wealth ``W`` from ``total_range`` and report the house value
    ``H(W) * exp(eps)``, keeping ``W - house`` as liquid wealth, so total
    wealth is exactly the covariate the likelihood conditions on. The budget
    needs ``eps <= log(W / H(W))``; ``eps`` is redrawn until it lies within
    that bound in absolute value, which keeps its conditional mean at zero.
    The default owner range is where the house share is lowest, so the
    truncation is mild. Consumption is the model prediction at the liquid
    wealth times independent noise.
    """
    gen = np.random.default_rng(seed)
    params = replace(config.base, utility=theta)
    cfg = config if config.wmax_data else replace(config, wmax_data=max(liquid_range[1], total_range[1]))
    draft = []
    for j in range(n):
        age = int(gen.integers(ages[0], ages[1] + 1))
        status = FamilyStatus.COUPLE if gen.random() < couple_share else FamilyStatus.SINGLE
        own = bool(gen.random() < owner_share)
        if own:
            total = math.exp(gen.uniform(*np.log(total_range)))
            draft.append([age, status, own, total])
        else:
            draft.append([age, status, own, math.exp(gen.uniform(*np.log(liquid_range)))])

    # house values for owners from the model at their total wealth
    probe = [HouseholdSample(a, st, o, w if not o else 0.0, 1.0, w if o else 0.0, row=j + 2)
             for j, (a, st, o, w) in enumerate(draft)]
    sol = Predictor(probe, cfg).solve(to_vector(params.utility))
    out = []
    for j, (age, status, own, w) in enumerate(draft):
        if own:
            H, _ = optimize_housing(w, status.index, sol, t=age, owner_only=True)
            bound = math.log(w / H)
            eps = sigma * gen.standard_normal()
            while abs(eps) > bound:
                eps = sigma * gen.standard_normal()
            house = H * math.exp(eps)
            liquid = w - house
        else:
            liquid, house = w, 0.0
        out.append(HouseholdSample(age, status, own, liquid, 1.0, house, row=j + 2))
    c, _ = Predictor(out, cfg)._predict(sol)
    noise = np.exp(sigma * gen.standard_normal(n))
    return [replace(s, consumption=float(c[j] * noise[j])) for j, s in enumerate(out)]
