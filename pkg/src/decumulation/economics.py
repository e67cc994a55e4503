"""
Model primitives: preferences, the means-tested Age Pension, mortality,
family-status transitions and discounting.

All money amounts are real dollars per year (flows) or dollars (stocks).
Household status is indexed ``d = 0`` for singles and ``d = 1`` for couples
in array-valued code; :class:`FamilyStatus` carries the full state space.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from enum import IntEnum
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidConfigError, InvalidDataError, InvalidInputError

log = logging.getLogger(__name__)


class FamilyStatus(IntEnum):
    DEAD = -1
    DIED = 0
    SINGLE = 1
    COUPLE = 2

    @property
    def index(self) -> int:
        """Array index for alive statuses (0 single, 1 couple)."""
        if self is FamilyStatus.SINGLE:
            return 0
        if self is FamilyStatus.COUPLE:
            return 1
        raise InvalidInputError(f"{self.name} has no alive-status index")

    @classmethod
    def parse(cls, token) -> "FamilyStatus":
        if isinstance(token, FamilyStatus):
            return token
        key = str(token).strip().lower()
        table = {
            "single": cls.SINGLE, "s": cls.SINGLE, "1": cls.SINGLE,
            "couple": cls.COUPLE, "c": cls.COUPLE, "2": cls.COUPLE,
            "died": cls.DIED, "0": cls.DIED,
            "dead": cls.DEAD, "-1": cls.DEAD,
        }
        if key not in table:
            raise InvalidInputError(f"unknown family status {token!r}")
        return table[key]


ALIVE = (FamilyStatus.SINGLE, FamilyStatus.COUPLE)


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UtilityParams:
    gamma_S: float = -1.98
    gamma_C: float = -1.78
    gamma_H: float = -1.87
    theta: float = 0.96
    a: float = 20726.0
    cbar_S: float = 10122.0
    cbar_C: float = 15702.0
    psi: float = 1.18
    lam: float = 0.044
    zeta_S: float = 1.0
    zeta_C: float = 1.3

    def gamma(self, d: int) -> float:
        return self.gamma_C if d else self.gamma_S

    def cbar(self, d: int) -> float:
        return self.cbar_C if d else self.cbar_S

    def zeta(self, d: int) -> float:
        return self.zeta_C if d else self.zeta_S

    def validate(self, policy: Optional["PensionPolicy"] = None) -> None:
        problems = []
        for name in ("gamma_S", "gamma_C", "gamma_H"):
            if not getattr(self, name) < 0:
                problems.append(f"{name} must be < 0")
        if not 0.0 <= self.theta < 1.0:
            problems.append("theta must lie in [0, 1)")
        if not self.a >= 0:
            problems.append("a must be >= 0")
        if not self.psi >= 1.0:
            problems.append("psi must be >= 1")
        if not 0.0 < self.lam <= 1.0:
            problems.append("lam must lie in (0, 1]")
        if self.zeta_S != 1.0:
            problems.append("zeta_S is fixed at 1")
        if not self.zeta_C > 0:
            problems.append("zeta_C must be > 0")
        for d, name in ((0, "cbar_S"), (1, "cbar_C")):
            c = getattr(self, name)
            if not c >= 0:
                problems.append(f"{name} must be >= 0")
            elif policy is not None and c > policy.test(d).full_rate:
                problems.append(f"{name} exceeds the full pension rate")
        if problems:
            raise InvalidConfigError("; ".join(problems))


@dataclass(frozen=True)
class MeansTest:
    """Means-test schedule for one household status (annual amounts)."""

    full_rate: float
    income_threshold: float
    income_taper: float
    asset_threshold_homeowner: float
    asset_threshold_renter: float
    asset_taper: float

    def asset_threshold(self, homeowner: bool) -> float:
        return self.asset_threshold_homeowner if homeowner else self.asset_threshold_renter


SINGLE_2010 = MeansTest(17456.0, 3692.0, 0.5, 178000.0, 307000.0, 0.039)
COUPLE_2010 = MeansTest(26099.0, 6448.0, 0.5, 252500.0, 381500.0, 0.039)

# (first age of band, minimum drawdown) for allocated pension accounts
MIN_WITHDRAWAL_BANDS = ((0, 0.04), (65, 0.05), (75, 0.06), (80, 0.07), (85, 0.09), (90, 0.11), (95, 0.14))


@dataclass(frozen=True)
class PensionPolicy:
    single: MeansTest = SINGLE_2010
    couple: MeansTest = COUPLE_2010
    eligibility_age: float = 65.0
    min_withdrawal_bands: tuple = MIN_WITHDRAWAL_BANDS
    enabled: bool = True

    def test(self, d: int) -> MeansTest:
        return self.couple if d else self.single

    def validate(self) -> None:
        for name, mt in (("single", self.single), ("couple", self.couple)):
            vals = asdict(mt)
            if any(not (v >= 0) for v in vals.values()):
                raise InvalidConfigError(f"{name} means test has negative entries")
            if not 0 < mt.income_taper <= 1:
                raise InvalidConfigError(f"{name} income taper must lie in (0, 1]")
            if not 0 < mt.asset_taper <= 0.1:
                raise InvalidConfigError(f"{name} asset taper must lie in (0, 0.1]")
            if not mt.asset_threshold_homeowner < mt.asset_threshold_renter:
                raise InvalidConfigError(f"{name} homeowner asset threshold must be below the renter one")
        ages = [b[0] for b in self.min_withdrawal_bands]
        if ages != sorted(ages):
            raise InvalidConfigError("minimum withdrawal bands must be sorted by age")

    def disabled(self) -> "PensionPolicy":
        """Copy paying no pension at all (full rates zero)."""
        zero = lambda mt: replace(mt, full_rate=0.0)  # noqa: E731
        return replace(self, single=zero(self.single), couple=zero(self.couple), enabled=False)


@dataclass(frozen=True)
class MarketParams:
    mu: float = 0.056
    sigma: float = 0.133
    r: float | tuple = 0.005
    inflation: float = 0.029
    t0: int = 65
    T: int = 100

    def validate(self) -> None:
        if not self.sigma >= 0:
            raise InvalidConfigError("sigma must be >= 0")
        if not self.T > self.t0:
            raise InvalidConfigError("terminal age T must exceed retirement age t0")
        if isinstance(self.r, tuple) and len(self.r) < self.T - self.t0 + 1:
            raise InvalidConfigError("risk-free schedule must cover every age in [t0, T]")

    @property
    def ages(self) -> np.ndarray:
        return np.arange(self.t0, self.T + 1)

    def rate(self, t: int) -> float:
        if isinstance(self.r, tuple):
            return float(self.r[int(t) - self.t0])
        return float(self.r)


# ---------------------------------------------------------------------------
# Mortality
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MortalityTable:
    """One-year death probabilities by integer age for males and females.

    Cumulative survival from the first tabulated age stands in for survival
    from birth when the table starts above age zero (equal male and female
    weights are assumed at that first age).
    """

    ages: np.ndarray
    qM: np.ndarray
    qF: np.ndarray

    def __post_init__(self):
        ages = np.asarray(self.ages, dtype=int)
        qM = np.asarray(self.qM, dtype=float)
        qF = np.asarray(self.qF, dtype=float)
        if not (ages.shape == qM.shape == qF.shape) or ages.ndim != 1 or ages.size == 0:
            raise InvalidDataError("life table columns must be equal-length vectors")
        if np.any(np.diff(ages) != 1):
            raise InvalidDataError("life table ages must be consecutive integers")
        if np.any((qM < 0) | (qM > 1) | (qF < 0) | (qF > 1)):
            raise InvalidDataError("death probabilities must lie in [0, 1]")
        object.__setattr__(self, "ages", ages)
        object.__setattr__(self, "qM", qM)
        object.__setattr__(self, "qF", qF)

    @classmethod
    def from_csv(cls, path) -> "MortalityTable":
        ages, qm, qf = [], [], []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = {"age", "qM", "qF"} - set(reader.fieldnames or [])
            if missing:
                raise InvalidDataError(f"{path}: missing columns {sorted(missing)}")
            for line, row in enumerate(reader, start=2):
                try:
                    ages.append(int(row["age"]))
                    qm.append(float(row["qM"]))
                    qf.append(float(row["qF"]))
                except (TypeError, ValueError) as exc:
                    raise InvalidDataError(f"{path}:{line}: {exc}") from None
        return cls(np.array(ages), np.array(qm), np.array(qf))

    @classmethod
    def default(cls) -> "MortalityTable":
        with resources.as_file(resources.files(__package__) / "data" / "life_table.csv") as p:
            return cls.from_csv(p)

    @classmethod
    def constant(cls, q: float, ages=range(0, 121)) -> "MortalityTable":
        ages = np.asarray(list(ages))
        return cls(ages, np.full(ages.size, q), np.full(ages.size, q))

    def _idx(self, t) -> int:
        i = int(t) - int(self.ages[0])
        if i < 0 or i >= self.ages.size:
            raise InvalidInputError(f"age {t} outside life table [{self.ages[0]}, {self.ages[-1]}]")
        return i

    def covers(self, t0: int, T: int) -> bool:
        return self.ages[0] <= t0 and self.ages[-1] >= T

    def cumulative(self, t) -> tuple[float, float]:
        """Probabilities of a male and a female reaching age ``t``."""
        i = self._idx(t)
        return float(np.prod(1.0 - self.qM[:i])), float(np.prod(1.0 - self.qF[:i]))

    def to_dict(self) -> dict:
        return {"ages": self.ages.tolist(), "qM": self.qM.tolist(), "qF": self.qF.tolist()}


def unisex_survival(qM: float, qF: float, lM: float, lF: float) -> float:
    """One-year survival with male and female death rates weighted by numbers alive."""
    if lM + lF <= 0:
        raise InvalidDataError("both cumulative survivals are zero")
    return 1.0 - (qM * lM + qF * lF) / (lM + lF)


def single_survival(t, table: MortalityTable) -> float:
    lM, lF = table.cumulative(t)
    i = table._idx(t)
    return unisex_survival(table.qM[i], table.qF[i], lM, lF)


def couple_survival(t, table: MortalityTable, warn: bool = True) -> float:
    i = table._idx(t)
    p = 1.0 - (table.qM[i] + table.qF[i])
    if p < 0.0:
        if warn:
            log.warning("qM + qF > 1 at age %s; couple survival clipped to 0", t)
        return 0.0
    return min(p, 1.0)


def survival_probability(t, d: int, table: MortalityTable, warn: bool = True) -> float:
    return couple_survival(t, table, warn) if d else single_survival(t, table)


def survival_curve(t0: int, T: int, d: int, table: MortalityTable, warn: bool = True) -> np.ndarray:
    """One-year survival probabilities for ages ``t0 .. T-1``."""
    return np.array([survival_probability(t, d, table, warn) for t in range(t0, T)])


def life_expectancy(t0: int, d: int, table: MortalityTable, T: Optional[int] = None) -> float:
    """Curtate expectation of life at ``t0`` from the status-specific survival chain."""
    last = int(table.ages[-1]) + 1 if T is None else T
    # the couple chain reaches zero before the table ends; clipping there is expected
    p = survival_curve(t0, last, d, table, warn=False)
    return float(np.sum(np.cumprod(p)))


def family_transition(g: FamilyStatus, t, table: MortalityTable) -> dict:
    g = FamilyStatus(g)
    if g in (FamilyStatus.DEAD, FamilyStatus.DIED):
        return {FamilyStatus.DEAD: 1.0}
    if g is FamilyStatus.SINGLE:
        p = single_survival(t, table)
        return {FamilyStatus.SINGLE: p, FamilyStatus.DIED: 1.0 - p}
    p = couple_survival(t, table)
    return {FamilyStatus.COUPLE: p, FamilyStatus.SINGLE: 1.0 - p}


# ---------------------------------------------------------------------------
# Preferences
# ---------------------------------------------------------------------------


def consumption_utility(c: float, d: int, t: float, params: UtilityParams, t0: float) -> float:
    """HARA utility of consumption above the floor, down-weighted by psi**(t - t0).

    Returns ``-inf`` when consumption does not exceed the floor.
    """
    excess = c - params.cbar(d)
    if not excess > 0:
        return -math.inf
    g = params.gamma(d)
    return (excess / params.zeta(d)) ** g / (params.psi ** (t - t0) * g)


def bequest_utility(w: float, params: UtilityParams) -> float:
    """Luxury bequest utility of liquid wealth ``w``."""
    if params.theta == 0.0:
        return 0.0
    k = params.theta / (1.0 - params.theta)
    g = params.gamma_S
    base = k * params.a + w
    if base <= 0:
        return -math.inf
    return k ** (1.0 - g) * base ** g / g


def housing_utility(H: float, d: int, params: UtilityParams) -> float:
    if not H > 0:
        raise InvalidInputError("housing utility needs a positive house value")
    g = params.gamma_H
    return (params.lam * H / params.zeta(d)) ** g / g


# ---------------------------------------------------------------------------
# Age Pension
# ---------------------------------------------------------------------------


def income_deduction(w_t0: float, t: float, table: MortalityTable, market: MarketParams,
                     d: int = 0) -> float:
    """Annual income-test deduction for an account opened at ``t0`` with ``w_t0``.

    Uses the curtate life expectancy at ``t0`` of the household type ``d`` and
    deflates by inflation because the model is in real terms.
    """
    e = life_expectancy(market.t0, d, table)
    if not e > 0:
        raise InvalidInputError("life expectancy at retirement must be positive")
    return w_t0 / e * (1.0 + market.inflation) ** (market.t0 - t)


@dataclass(frozen=True)
class PensionBreakdown:
    asset_test: float
    income_test: float
    deduction: float
    pension: float
    full_rate: float


def pension_breakdown(alpha: float, w: float, t: float, d: int, homeowner: bool,
                      deduction: float, policy: PensionPolicy) -> PensionBreakdown:
    mt = policy.test(d)
    p_asset = mt.full_rate - (w - mt.asset_threshold(homeowner)) * mt.asset_taper
    p_income = mt.full_rate - (alpha * w - deduction - mt.income_threshold) * mt.income_taper
    if t < policy.eligibility_age or not policy.enabled:
        pension = 0.0
    else:
        pension = max(0.0, min(mt.full_rate, p_asset, p_income))
    return PensionBreakdown(p_asset, p_income, deduction, pension, mt.full_rate)


def pension_components(drawdown, w, t: float, d: int, homeowner: bool, deduction, policy: PensionPolicy):
    """Array version returning ``(pension, asset_test, income_test)``.

    ``drawdown`` is the amount ``alpha * w`` assessed as income.
    """
    mt = policy.test(d)
    w = np.asarray(w, dtype=float)
    p_asset = mt.full_rate - (w - mt.asset_threshold(homeowner)) * mt.asset_taper
    p_income = mt.full_rate - (np.asarray(drawdown, dtype=float) - deduction - mt.income_threshold) * mt.income_taper
    if t < policy.eligibility_age or not policy.enabled:
        pension = np.zeros(np.broadcast(p_asset, p_income).shape)
    else:
        pension = np.maximum(0.0, np.minimum(mt.full_rate, np.minimum(p_asset, p_income)))
    return pension, p_asset, p_income


def age_pension(alpha: float, w: float, t: float, d: int, homeowner: bool,
                deduction: float, policy: PensionPolicy) -> float:
    """Means-tested pension: full rate reduced by the binding of the asset and income tests."""
    return pension_breakdown(alpha, w, t, d, homeowner, deduction, policy).pension


def min_withdrawal_rate(age: float, policy: PensionPolicy, enabled: bool = True) -> float:
    if not enabled or not policy.min_withdrawal_bands:
        return 0.0
    rate = 0.0
    for start, r in policy.min_withdrawal_bands:
        if age >= start:
            rate = r
    return rate


# ---------------------------------------------------------------------------
# Discounting and rewards
# ---------------------------------------------------------------------------


def discount(t: int, t2: int, market: MarketParams) -> float:
    """exp(-sum of r_i for i = t .. t2-1)."""
    if t2 < t:
        raise InvalidInputError("discount horizon must be non-negative")
    return math.exp(-sum(market.rate(i) for i in range(int(t), int(t2))))


def reward(w: float, g: FamilyStatus, c: float, H: float, t: float,
           params: UtilityParams, t0: float, terminal: bool = False) -> float:
    """Per-period reward; ``H = 0`` is a renter, ``terminal`` gives the age-T reward."""
    g = FamilyStatus(g)
    if g is FamilyStatus.DEAD:
        return 0.0
    if terminal or g is FamilyStatus.DIED:
        return bequest_utility(w, params)
    u = consumption_utility(c, g.index, t, params, t0)
    if H > 0:
        u += housing_utility(H, g.index, params)
    return u


# ---------------------------------------------------------------------------
# Bundle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelParams:
    """Everything that defines one problem instance."""

    utility: UtilityParams = field(default_factory=UtilityParams)
    pension: PensionPolicy = field(default_factory=PensionPolicy)
    market: MarketParams = field(default_factory=MarketParams)
    mortality: MortalityTable = field(default_factory=MortalityTable.default)
    housing_floor: float = 30000.0

    def validate(self) -> "ModelParams":
        self.market.validate()
        self.pension.validate()
        self.utility.validate(self.pension)
        if not self.mortality.covers(self.market.t0, self.market.T - 1):
            raise InvalidConfigError(
                f"life table ages [{self.mortality.ages[0]}, {self.mortality.ages[-1]}] "
                f"do not cover [{self.market.t0}, {self.market.T - 1}]")
        if not self.housing_floor >= 0:
            raise InvalidConfigError("housing floor must be >= 0")
        return self

    def with_utility(self, **changes) -> "ModelParams":
        return replace(self, utility=replace(self.utility, **changes))

    def to_dict(self) -> dict:
        return {
            "utility": asdict(self.utility),
            "pension": {
                "single": asdict(self.pension.single),
                "couple": asdict(self.pension.couple),
                "eligibility_age": self.pension.eligibility_age,
                "min_withdrawal_bands": [list(b) for b in self.pension.min_withdrawal_bands],
                "enabled": self.pension.enabled,
            },
            "market": {**asdict(self.market), "r": list(self.market.r) if isinstance(self.market.r, tuple) else self.market.r},
            "mortality": self.mortality.to_dict(),
            "housing_floor": self.housing_floor,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        pen = data["pension"]
        market = dict(data["market"])
        if isinstance(market["r"], list):
            market["r"] = tuple(market["r"])
        mort = data["mortality"]
        return cls(
            utility=UtilityParams(**data["utility"]),
            pension=PensionPolicy(
                single=MeansTest(**pen["single"]),
                couple=MeansTest(**pen["couple"]),
                eligibility_age=pen["eligibility_age"],
                min_withdrawal_bands=tuple(tuple(b) for b in pen["min_withdrawal_bands"]),
                enabled=pen["enabled"],
            ),
            market=MarketParams(**market),
            mortality=MortalityTable(np.array(mort["ages"]), np.array(mort["qM"]), np.array(mort["qF"])),
            housing_floor=data["housing_floor"],
        )

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class ModelArrays:
    """Age-indexed arrays derived from :class:`ModelParams` for ages ``t0 .. T``."""

    ages: np.ndarray
    survival: np.ndarray      # (2, T - t0): one-year survival, row 0 single, row 1 couple
    rates: np.ndarray         # (T - t0,): r_t
    beta: np.ndarray          # (T - t0,): exp(-r_t)
    health: np.ndarray        # (T - t0,): psi ** -(t - t0)
    deduction_rate: np.ndarray  # (2, T - t0): M(t) per dollar of retirement wealth
    life_exp: np.ndarray      # (2,)

    @classmethod
    def build(cls, params: ModelParams) -> "ModelArrays":
        m = params.market
        ages = m.ages
        years = ages[:-1]
        surv = np.vstack([survival_curve(m.t0, m.T, d, params.mortality) for d in (0, 1)])
        rates = np.array([m.rate(t) for t in years])
        e = np.array([life_expectancy(m.t0, d, params.mortality) for d in (0, 1)])
        if np.any(e <= 0):
            raise InvalidConfigError("life expectancy at retirement must be positive")
        ded = np.vstack([(1.0 + m.inflation) ** (m.t0 - years) / e[d] for d in (0, 1)])
        health = params.utility.psi ** (-(years - m.t0).astype(float))
        return cls(ages, surv, rates, np.exp(-rates), health, ded, e)
