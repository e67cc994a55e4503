"""Run configuration: TOML loading with strict key checking, and conversion to model objects."""

from __future__ import annotations

import copy
import hashlib
import json
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .calibration import THETA_NAMES, CalibrationConfig, FilterRules
from .economics import MarketParams, MeansTest, ModelParams, MortalityTable, PensionPolicy, UtilityParams
from .errors import InvalidConfigError
from .solver import SolveOptions

_MEANS_KEYS = {
    "full_rate_dollars_per_year": "full_rate",
    "income_threshold_dollars_per_year": "income_threshold",
    "income_taper_per_dollar": "income_taper",
    "asset_threshold_homeowner_dollars": "asset_threshold_homeowner",
    "asset_threshold_renter_dollars": "asset_threshold_renter",
    "asset_taper_per_dollar_per_year": "asset_taper",
}
_UTILITY_KEYS = {
    "gamma_single": "gamma_S",
    "gamma_couple": "gamma_C",
    "gamma_housing": "gamma_H",
    "bequest_altruism_theta": "theta",
    "bequest_threshold_dollars": "a",
    "consumption_floor_single_dollars_per_year": "cbar_S",
    "consumption_floor_couple_dollars_per_year": "cbar_C",
    "health_proxy_psi": "psi",
    "housing_preference_lambda": "lam",
    "couple_scale_zeta": "zeta_C",
}


def default_config() -> dict:
    with resources.files("decumulation.data").joinpath("default_config.toml").open("rb") as fh:
        return tomllib.load(fh)


def _merge(base: dict, over: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        path = f"{where}.{key}" if where else key
        if key not in base:
            raise InvalidConfigError(f"unknown config key '{path}'")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise InvalidConfigError(f"'{path}' must be a table")
            out[key] = _merge(base[key], val, path)
        else:
            if isinstance(val, dict):
                raise InvalidConfigError(f"'{path}' must be a value, not a table")
            if isinstance(base[key], bool) != isinstance(val, bool):
                raise InvalidConfigError(f"'{path}' must be {'a boolean' if isinstance(base[key], bool) else 'a number or string'}")
            out[key] = val
    return out


@dataclass
class RunConfig:
    """Resolved configuration tree (defaults overlaid with a user file)."""

    tree: dict
    source: Optional[str] = None

    @classmethod
    def load(cls, path=None) -> "RunConfig":
        tree = default_config()
        if path is not None:
            try:
                with open(path, "rb") as fh:
                    user = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise InvalidConfigError(f"{path}: {exc}") from exc
            tree = _merge(tree, user)
        cfg = cls(tree, None if path is None else str(path))
        cfg.model_params()  # validate eagerly
        return cfg

    def set(self, dotted: str, value) -> None:
        node = self.tree
        *parents, leaf = dotted.split(".")
        for p in parents:
            node = node[p]
        if leaf not in node:
            raise InvalidConfigError(f"unknown config key '{dotted}'")
        node[leaf] = value

    def digest(self) -> str:
        blob = json.dumps(self.tree, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_json(self) -> str:
        return json.dumps(self.tree, indent=2)

    # -- conversion ------------------------------------------------------

    def _num(self, section: dict, key: str, where: str) -> float:
        val = section[key]
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise InvalidConfigError(f"'{where}.{key}' must be a number")
        return float(val)

    def mortality(self) -> MortalityTable:
        path = self.tree["mortality"]["life_table_csv"]
        return MortalityTable.from_csv(path) if path else MortalityTable.default()

    def model_params(self) -> ModelParams:
        t = self.tree
        m = t["market"]
        market = MarketParams(
            mu=self._num(m, "risky_log_return_mean_per_year", "market"),
            sigma=self._num(m, "risky_log_return_sd_per_year", "market"),
            r=self._num(m, "risk_free_log_rate_per_year", "market"),
            inflation=self._num(m, "inflation_rate_per_year", "market"),
            t0=int(m["retirement_age_years"]),
            T=int(m["terminal_age_years"]),
        )
        u = t["utility"]
        utility = UtilityParams(**{attr: self._num(u, key, "utility") for key, attr in _UTILITY_KEYS.items()})
        p = t["pension"]
        tests = {}
        for d in ("single", "couple"):
            tests[d] = MeansTest(**{attr: self._num(p[d], key, f"pension.{d}") for key, attr in _MEANS_KEYS.items()})
        try:
            bands = tuple((float(a), float(r)) for a, r in p["min_withdrawal_bands"])
        except (TypeError, ValueError) as exc:
            raise InvalidConfigError("'pension.min_withdrawal_bands' must be a list of [age, rate] pairs") from exc
        policy = PensionPolicy(tests["single"], tests["couple"], float(p["eligibility_age_years"]), bands, bool(p["enabled"]))
        if not policy.enabled:
            policy = policy.disabled()
        params = ModelParams(utility, policy, market, self.mortality(),
                             self._num(t["solver"], "housing_floor_dollars", "solver"))
        return params.validate()

    def solve_options(self) -> SolveOptions:
        s = self.tree["solver"]
        share = s["risky_share"]
        if isinstance(share, str):
            if share != "optimal":
                raise InvalidConfigError("'solver.risky_share' must be \"optimal\" or a number in [0, 1]")
            fixed = None
        else:
            fixed = float(share)
        return SolveOptions(min_withdrawals=bool(s["min_withdrawals"]), quad_order=int(s["quad_order"]),
                            fixed_delta=fixed).validate()

    def grid_spec(self) -> tuple[float, int]:
        s = self.tree["solver"]
        return self._num(s, "largest_data_wealth_dollars", "solver"), int(s["grid_intervals"])

    def calibration_config(self) -> CalibrationConfig:
        c = self.tree["calibration"]
        levels = {n: tuple(float(x) for x in c["stage1_levels"][n]) for n in THETA_NAMES}
        return CalibrationConfig(
            base=self.model_params(), grid_k=int(c["grid_intervals"]), quad_order=int(self.tree["solver"]["quad_order"]),
            fixed_delta=self._num(c, "fixed_risky_share", "calibration"), levels=levels,
            stage1_budget=int(c["stage1_budget"]), lhs_seed=int(c["stage1_seed"]),
            xatol=self._num(c, "xatol", "calibration"), fatol=self._num(c, "fatol", "calibration"),
            maxiter=int(c["maxiter"]), hessian_step=self._num(c, "hessian_step", "calibration"),
            restarts=int(c["restarts"]),
        ).validate()

    def filter_rules(self) -> FilterRules:
        c = self.tree["calibration"]
        mat = self._num(c, "material_pension_dollars_per_year", "calibration")
        return FilterRules(self._num(c, "min_consumption_dollars_per_year", "calibration"), mat if mat >= 0 else None)
