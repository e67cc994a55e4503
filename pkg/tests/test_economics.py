import math
from dataclasses import replace

import numpy as np
import pytest

from decumulation.economics import (
    COUPLE_2010,
    SINGLE_2010,
    FamilyStatus,
    MarketParams,
    ModelArrays,
    ModelParams,
    MortalityTable,
    PensionPolicy,
    UtilityParams,
    age_pension,
    bequest_utility,
    consumption_utility,
    couple_survival,
    discount,
    family_transition,
    housing_utility,
    income_deduction,
    life_expectancy,
    min_withdrawal_rate,
    pension_breakdown,
    pension_components,
    reward,
    single_survival,
    unisex_survival,
)
from decumulation.errors import InvalidConfigError, InvalidDataError, InvalidInputError

POLICY = PensionPolicy()
CASES = [(d, h) for d in (0, 1) for h in (False, True)]


# -- pension -----------------------------------------------------------------


@pytest.mark.parametrize("d, home", CASES)
def test_full_pension_below_both_thresholds(d, home):
    mt = POLICY.test(d)
    w = 0.5 * mt.asset_threshold(home)
    p = age_pension(0.0, w, 70, d, home, 0.0, POLICY)
    assert p == mt.full_rate


@pytest.mark.parametrize("d, home", CASES)
def test_asset_test_boundaries(d, home):
    # [DERIVED] zero-pension wealth = threshold + full rate / taper
    mt = POLICY.test(d)
    lower = mt.asset_threshold(home)
    upper = lower + mt.full_rate / mt.asset_taper
    assert pension_breakdown(0.0, lower, 70, d, home, 1e9, POLICY).asset_test == pytest.approx(mt.full_rate, abs=0.005)
    assert age_pension(0.0, upper, 70, d, home, 1e9, POLICY) == pytest.approx(0.0, abs=0.005)
    assert age_pension(0.0, upper - 100.0, 70, d, home, 1e9, POLICY) == pytest.approx(3.90, abs=0.005)


def test_single_renter_cutoff_value():
    # [DERIVED] 307,000 + 17,456 / 0.039
    cutoff = 307000 + 17456 / 0.039
    assert cutoff == pytest.approx(754589.74, abs=0.005)
    assert age_pension(0.0, cutoff - 1.0, 70, 0, False, 1e9, POLICY) == pytest.approx(0.039, abs=0.005)


@pytest.mark.parametrize("d, home", CASES)
def test_income_test_boundaries(d, home):
    # [DERIVED] pension reaches zero at income = threshold + deduction + full rate / taper
    mt = POLICY.test(d)
    w, M = 1000.0, 5000.0
    zero_income = mt.income_threshold + M + mt.full_rate / mt.income_taper
    assert age_pension(zero_income / w, w, 70, d, home, M, POLICY) == pytest.approx(0.0, abs=0.005)
    full_income = mt.income_threshold + M
    assert age_pension(full_income / w, w, 70, d, home, M, POLICY) == pytest.approx(mt.full_rate, abs=0.005)
    mid = full_income + 1000.0
    assert age_pension(mid / w, w, 70, d, home, M, POLICY) == pytest.approx(mt.full_rate - 500.0, abs=0.005)


def test_table_one_values():
    # [PAPER] 2010 schedule
    assert (SINGLE_2010.full_rate, COUPLE_2010.full_rate) == (17456.0, 26099.0)
    assert (SINGLE_2010.income_threshold, COUPLE_2010.income_threshold) == (3692.0, 6448.0)
    assert (SINGLE_2010.asset_threshold_homeowner, SINGLE_2010.asset_threshold_renter) == (178000.0, 307000.0)
    assert (COUPLE_2010.asset_threshold_homeowner, COUPLE_2010.asset_threshold_renter) == (252500.0, 381500.0)
    assert SINGLE_2010.asset_taper == COUPLE_2010.asset_taper == 0.039


def test_no_pension_before_eligibility_or_when_disabled():
    assert age_pension(0.0, 0.0, 60, 0, False, 0.0, POLICY) == 0.0
    assert age_pension(0.0, 0.0, 70, 0, False, 0.0, POLICY.disabled()) == 0.0


def test_negative_drawdown_raises_income_test_cap():
    # saving part of the pension lowers assessed income; the pension stays capped at the full rate
    p = age_pension(-0.05, 10000.0, 70, 0, False, 0.0, POLICY)
    assert p == SINGLE_2010.full_rate


def test_pension_components_match_scalar(gen):
    w = gen.uniform(0, 1e6, 200)
    a = gen.uniform(-0.1, 1.0, 200)
    M = 0.03 * w
    for d, home in CASES:
        p, pa, pi = pension_components(a * w, w, 75, d, home, M, POLICY)
        ref = [pension_breakdown(a[k], w[k], 75, d, home, M[k], POLICY) for k in range(200)]
        np.testing.assert_allclose(p, [r.pension for r in ref])
        np.testing.assert_allclose(pa, [r.asset_test for r in ref])
        np.testing.assert_allclose(pi, [r.income_test for r in ref])


def test_pension_is_bounded(gen):
    for _ in range(500):
        d = int(gen.integers(2))
        p = age_pension(gen.uniform(-0.2, 1), gen.uniform(0, 2e6), 80, d, bool(gen.integers(2)),
                        gen.uniform(0, 5e4), POLICY)
        assert 0.0 <= p <= POLICY.test(d).full_rate


@pytest.mark.parametrize("age, rate", [(64, 0.04), (65, 0.05), (74, 0.05), (75, 0.06), (80, 0.07), (85, 0.09),
                                       (90, 0.11), (95, 0.14), (99, 0.14)])
def test_min_withdrawal_bands(age, rate):
    # [PAPER] minimum drawdown schedule
    assert min_withdrawal_rate(age, POLICY) == rate
    assert min_withdrawal_rate(age, POLICY, enabled=False) == 0.0


# -- mortality ---------------------------------------------------------------


def test_unisex_survival_weighting():
    # [DERIVED] weighted average of death rates by numbers alive
    assert unisex_survival(0.02, 0.01, 0.8, 0.9) == pytest.approx(1 - (0.016 + 0.009) / 1.7)


def test_single_and_couple_survival_by_hand():
    t = MortalityTable(np.arange(60, 66), np.full(6, 0.1), np.full(6, 0.05))
    lM, lF = 0.9 ** 2, 0.95 ** 2
    assert single_survival(62, t) == pytest.approx(1 - (0.1 * lM + 0.05 * lF) / (lM + lF))
    assert couple_survival(62, t) == pytest.approx(0.85)


def test_couple_survival_clipped():
    t = MortalityTable(np.arange(0, 3), np.full(3, 0.7), np.full(3, 0.6))
    assert couple_survival(1, t, warn=False) == 0.0


def test_life_expectancy_constant_hazard():
    # [DERIVED] curtate expectation sum_{k>=1} p^k truncated at the table end
    q = 0.1
    t = MortalityTable.constant(q, range(0, 121))
    assert life_expectancy(65, 0, t) == pytest.approx(sum((1 - q) ** k for k in range(1, 121 - 65 + 1)))


def test_default_table_is_plausible():
    t = MortalityTable.default()
    e65 = life_expectancy(65, 0, t)
    assert 15.0 < e65 < 25.0
    assert life_expectancy(65, 1, t) < e65


def test_family_transition_sums_to_one(params):
    tab = params.mortality
    for g in FamilyStatus:
        probs = family_transition(g, 80, tab)
        assert sum(probs.values()) == pytest.approx(1.0)
    assert family_transition(FamilyStatus.DIED, 80, tab) == {FamilyStatus.DEAD: 1.0}


def test_life_table_csv_errors(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("age,qM\n0,0.1\n")
    with pytest.raises(InvalidDataError):
        MortalityTable.from_csv(p)
    p.write_text("age,qM,qF\n0,0.1,x\n")
    with pytest.raises(InvalidDataError, match=":2"):
        MortalityTable.from_csv(p)
    with pytest.raises(InvalidDataError):
        MortalityTable(np.array([0, 2]), np.array([0.1, 0.1]), np.array([0.1, 0.1]))


# -- preferences -------------------------------------------------------------


def test_consumption_utility_closed_form():
    u = UtilityParams()
    c = 30000.0
    expected = ((c - u.cbar_C) / u.zeta_C) ** u.gamma_C / u.gamma_C / u.psi ** 10
    assert consumption_utility(c, 1, 75, u, 65) == pytest.approx(expected, rel=1e-14)
    assert consumption_utility(u.cbar_S, 0, 70, u, 65) == -math.inf


def test_bequest_utility_closed_form():
    u = UtilityParams()
    k = u.theta / (1 - u.theta)
    w = 1e5
    assert bequest_utility(w, u) == pytest.approx(k ** (1 - u.gamma_S) * (k * u.a + w) ** u.gamma_S / u.gamma_S)
    assert bequest_utility(w, replace(u, theta=0.0)) == 0.0


def test_housing_utility_closed_form():
    u = UtilityParams()
    assert housing_utility(5e5, 1, u) == pytest.approx((u.lam * 5e5 / 1.3) ** u.gamma_H / u.gamma_H)
    with pytest.raises(InvalidInputError):
        housing_utility(0.0, 0, u)


def test_utilities_increasing(gen):
    u = UtilityParams()
    w = np.sort(gen.uniform(1, 1e6, 50))
    assert np.all(np.diff([bequest_utility(x, u) for x in w]) > 0)
    c = np.sort(gen.uniform(u.cbar_S + 1, 1e5, 50))
    assert np.all(np.diff([consumption_utility(x, 0, 70, u, 65) for x in c]) > 0)


def test_reward_by_status():
    u = UtilityParams()
    assert reward(1e5, FamilyStatus.DEAD, 0, 0, 70, u, 65) == 0.0
    assert reward(1e5, FamilyStatus.DIED, 0, 0, 70, u, 65) == bequest_utility(1e5, u)
    r = reward(0, FamilyStatus.SINGLE, 2e4, 3e5, 70, u, 65)
    assert r == pytest.approx(consumption_utility(2e4, 0, 70, u, 65) + housing_utility(3e5, 0, u))


# -- deduction, discounting, bundle ------------------------------------------


def test_income_deduction_by_hand(params):
    m = params.market
    e = life_expectancy(65, 0, params.mortality)
    assert income_deduction(4e5, 70, params.mortality, m) == pytest.approx(4e5 / e * 1.029 ** -5)


def test_discount_schedule():
    m = MarketParams(r=tuple(0.01 * (i + 1) for i in range(36)))
    assert discount(65, 67, m) == pytest.approx(math.exp(-0.03))
    assert discount(70, 70, m) == 1.0
    with pytest.raises(InvalidInputError):
        discount(70, 69, m)


def test_arrays_consistent_with_scalar_functions(params):
    arr = ModelArrays.build(params)
    assert arr.survival[0, 5] == pytest.approx(single_survival(70, params.mortality))
    assert arr.deduction_rate[1, 3] * 1e5 == pytest.approx(income_deduction(1e5, 68, params.mortality, params.market, 1))
    assert arr.health[10] == pytest.approx(params.utility.psi ** -10)


def test_params_roundtrip_and_digest(params):
    again = ModelParams.from_dict(params.to_dict())
    assert again.digest() == params.digest()
    assert params.with_utility(gamma_S=-2.5).digest() != params.digest()


@pytest.mark.parametrize("change", [dict(gamma_S=0.5), dict(theta=1.0), dict(psi=0.9), dict(lam=0.0),
                                    dict(cbar_S=20000.0), dict(zeta_S=2.0)])
def test_utility_validation(params, change):
    with pytest.raises(InvalidConfigError):
        params.with_utility(**change).validate()


def test_status_parsing():
    assert FamilyStatus.parse("Couple") is FamilyStatus.COUPLE
    assert FamilyStatus.parse(1) is FamilyStatus.SINGLE
    with pytest.raises(InvalidInputError):
        FamilyStatus.parse("widow")
    with pytest.raises(InvalidInputError):
        FamilyStatus.DIED.index
