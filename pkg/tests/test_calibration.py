import json
import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.optimize import approx_fprime

from decumulation.calibration import (
    THETA_NAMES,
    CalibrationConfig,
    FilterRules,
    HouseholdSample,
    Predictor,
    Transform,
    block_masks,
    calibrate,
    filter_samples,
    load_samples,
    log_likelihood,
    model_predictions,
    profiled_block,
    save_samples,
    stage1_design,
    synthetic_samples,
    to_vector,
    total_loglik,
    write_residuals,
    write_result,
)
from decumulation.economics import FamilyStatus, PensionPolicy, UtilityParams, age_pension
from decumulation.errors import InvalidConfigError, InvalidDataError, OutOfRangeError
from decumulation.numerics import optimize_action
from decumulation.solver import alpha_bounds, node_objective

S, C = FamilyStatus.SINGLE, FamilyStatus.COUPLE
FAST = CalibrationConfig(grid_k=30, wmax_data=2.5e6, compute_se=False)


@pytest.fixture(scope="module")
def tiny_samples():
    return synthetic_samples(UtilityParams(), 40, sigma=0.2, seed=4, config=FAST)


# -- ingestion and filters ---------------------------------------------------


def test_load_well_formed(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("age,status,homeowner,wealth,consumption,house_value\n"
                 "70,single,no,100000,25000,0\n72,couple,yes,200000,40000,500000\n80,Single,1,5e4,20000,3e5\n")
    got = load_samples(p)
    assert len(got) == 3
    assert got[1].status is C and got[1].homeowner and got[1].total_wealth == 7e5
    assert [s.row for s in got] == [2, 3, 4]


def test_load_errors_name_line(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("age,status,homeowner,wealth,consumption,house_value\n70,single,no,1,1,0\n70,widow,no,1,1,0\n")
    with pytest.raises(InvalidDataError, match="line 3"):
        load_samples(p)
    p.write_text("age,status,homeowner,wealth\n")
    with pytest.raises(InvalidDataError, match="missing"):
        load_samples(p)
    with pytest.raises(InvalidDataError):
        load_samples(tmp_path / "nope.csv")


def test_load_empty_file_warns(tmp_path, caplog):
    p = tmp_path / "s.csv"
    p.write_text("")
    assert load_samples(p) == []
    assert "empty" in caplog.text


def test_save_load_roundtrip(tmp_path, tiny_samples):
    back = load_samples(save_samples(tiny_samples, tmp_path / "s.csv"))
    assert [(s.age, s.status, s.homeowner, s.wealth, s.consumption, s.house_value) for s in back] == \
        [(s.age, s.status, s.homeowner, s.wealth, s.consumption, s.house_value) for s in tiny_samples]


def test_filter_rules():
    pol = PensionPolicy()
    rows = [
        HouseholdSample(70, S, False, 1e5, 2999.0),
        HouseholdSample(70, S, False, -5.0, 2e4),
        HouseholdSample(70, S, False, 1e4, 1e4 + 17456.0 + 1.0),
        HouseholdSample(60, S, False, 1e5, 2e4),
        HouseholdSample(70, C, True, 1e5, 2e4, 0.0),
        HouseholdSample(70, S, False, 1e5, 2e4, received_pension=0.0),
        HouseholdSample(70, S, False, 1e5, 2e4),
    ]
    kept, dropped = filter_samples(rows, pol, FilterRules(material_pension=1000.0))
    reasons = [r for _, r in dropped]
    assert kept == [rows[-1]]
    assert reasons[0].startswith("consumption below") and reasons[1] == "negative wealth"
    assert "exceeds" in reasons[2] and "eligibility" in reasons[3] and "house value" in reasons[4]
    assert "material" in reasons[5]


def test_clean_synthetic_batch_all_kept(tiny_samples):
    kept, dropped = filter_samples(tiny_samples, PensionPolicy())
    assert not dropped and len(kept) == len(tiny_samples)


# -- transforms --------------------------------------------------------------


def test_transform_roundtrip_and_jacobian():
    tf = Transform(17456.0, 26099.0)
    th = to_vector(UtilityParams())
    u = tf.forward(th)
    np.testing.assert_allclose(tf.inverse(u), th, rtol=1e-13)
    # [DERIVED] finite-difference derivative of each component
    for k in range(9):
        fd = approx_fprime(u, lambda x: tf.inverse(x)[k], 1e-7)[k]
        assert tf.jacobian(u)[k] == pytest.approx(fd, rel=1e-5)


def test_transform_rejects_constraint_violations():
    tf = Transform(17456.0, 26099.0)
    bad = to_vector(UtilityParams())
    bad[0] = 0.1
    with pytest.raises(InvalidConfigError):
        tf.forward(bad)
    # any real vector maps inside the constraints
    th = tf.inverse(np.full(9, 30.0))
    assert th[0] < 0 and th[3] < 1 and th[5] < 17456.0 and th[7] > 1


# -- likelihood --------------------------------------------------------------


def test_likelihood_zero_residuals():
    assert log_likelihood(np.ones(10), np.ones(10), 1.0) == pytest.approx(-5 * math.log(2 * math.pi))


def test_likelihood_errors():
    with pytest.raises(InvalidDataError):
        log_likelihood([1.0, 0.0], [1.0, 1.0], 1.0)


def test_profiled_sigma_is_the_maximiser(gen):
    # [DERIVED] numeric scan over sigma
    obs = np.exp(gen.normal(size=50) * 0.3) * 1e4
    pred = np.full(50, 1e4)
    ll, s = profiled_block(obs, pred)
    grid = np.linspace(0.5 * s, 2 * s, 3001)
    scan = [log_likelihood(obs, pred, x) for x in grid]
    assert grid[int(np.argmax(scan))] == pytest.approx(s, rel=1e-3)
    assert ll == pytest.approx(log_likelihood(obs, pred, s), rel=1e-12)


def test_likelihood_scale_and_order_invariance(gen):
    obs = np.exp(gen.normal(size=30))
    pred = np.exp(gen.normal(size=30))
    a = profiled_block(obs, pred)[0]
    assert profiled_block(2 * obs, 2 * pred)[0] == pytest.approx(a)
    perm = gen.permutation(30)
    assert profiled_block(obs[perm], pred[perm])[0] == pytest.approx(a)


def test_total_loglik_blocks(tiny_samples):
    m = block_masks(tiny_samples)
    assert m["consumption_single"].sum() + m["consumption_couple"].sum() == len(tiny_samples)
    c = np.array([s.consumption for s in tiny_samples])
    h = np.array([s.house_value if s.homeowner else np.nan for s in tiny_samples])
    ll, sig = total_loglik(tiny_samples, c, h, m)
    assert sig["consumption_single"] == pytest.approx(math.sqrt(1e-300))
    assert ll > 1e4


# -- predictions -------------------------------------------------------------


def test_predictions_cached_and_deterministic(tiny_samples):
    P = Predictor(tiny_samples, FAST)
    th = to_vector(UtilityParams())
    c1, h1 = P(th)
    c2, h2 = P(th.copy())
    assert c1 is c2 and P.n_solves == 1
    c3, h3 = Predictor(tiny_samples, FAST)(th)
    assert np.array_equal(c1, c3) and np.array_equal(h1, h3, equal_nan=True)


def test_identical_samples_identical_predictions():
    s = HouseholdSample(70, S, True, 2e5, 3e4, 6e5)
    c, h = model_predictions(UtilityParams(), [s, s], FAST)
    assert c[0] == c[1] and h[0] == h[1]


def test_prediction_matches_single_node_bellman():
    # [DERIVED] single aged 65 with 300k: consumption from an independent node optimisation.
    # The optimum sits on the income-test kink, so policy interpolation needs a fine grid.
    s = HouseholdSample(65, S, False, 3e5, 3e4)
    cfg = replace(FAST, grid_k=400)
    P = Predictor([s], cfg)
    sol = P.solve(to_vector(UtilityParams()))
    c, _ = P._predict(sol)
    params = sol.params
    f = node_objective(sol, 65, 0, 0, 3e5, params, sol.grid, sol.options)
    best = optimize_action(f, alpha_bounds(65, 0, 3e5, params, sol.options), (0.437, 0.437))
    ded = sol.arrays.deduction_rate[0, 0] * 3e5
    c_ref = best.alpha * 3e5 + age_pension(best.alpha, 3e5, 65, 0, False, ded, params.pension)
    assert c[0] == pytest.approx(c_ref, rel=2e-3)


def test_sample_at_node_uses_node_policy():
    cfg = replace(FAST, wmax_data=None)
    probe = [HouseholdSample(70, S, False, 1e6, 3e4)]
    P = Predictor(probe, cfg)
    w = float(P.grid.nodes[20])
    s = HouseholdSample(70, S, False, w, 3e4)
    P2 = Predictor([s] + probe, cfg)
    sol = P2.solve(to_vector(UtilityParams()))
    c, _ = P2._predict(sol)
    a = sol.alpha[5, 0, 0, 20]
    assert sol.policy(70, 0, 0, w)[0] == a
    ded = sol.arrays.deduction_rate[0, 5] * w
    assert c[0] == pytest.approx(a * w + age_pension(a, w, 70, 0, False, ded, sol.params.pension), rel=1e-12)


def test_predictor_range_checks():
    with pytest.raises(OutOfRangeError):
        Predictor([HouseholdSample(100, S, False, 1e5, 3e4)], FAST)
    with pytest.raises(OutOfRangeError):
        Predictor([HouseholdSample(70, S, False, 1e12, 3e4)], FAST)


# -- search ------------------------------------------------------------------


def test_stage1_design_factorial_and_subset():
    small = {n: (1.0, 2.0, 3.0) if i < 2 else (0.5,) for i, n in enumerate(THETA_NAMES)}
    d = stage1_design(small, 100)
    assert d.shape == (9, 9) and len({tuple(r) for r in d}) == 9
    full = CalibrationConfig().levels
    sub = stage1_design(full, 50, seed=1)
    assert 0 < len(sub) <= 50
    assert np.array_equal(sub, stage1_design(full, 50, seed=1))
    for k, n in enumerate(THETA_NAMES):
        assert set(sub[:, k]) <= set(full[n])


def test_calibrate_short_run_and_resume(tiny_samples, tmp_path):
    cfg = replace(FAST, stage1_budget=4, maxiter=3)
    res = calibrate(tiny_samples, cfg, trace_path=tmp_path)
    assert not res.converged and not res.se_available
    assert res.loglik >= res.stage1_loglik - 1e-9
    assert (tmp_path / "trace.csv").exists()
    state = json.loads((tmp_path / "simplex.json").read_text())
    assert len(state["simplex"]) == 10
    again = calibrate(tiny_samples, cfg, trace_path=tmp_path, resume=True)
    assert again.loglik >= res.loglik - 1e-9
    assert len(again.trace) > len(res.trace)
    d = res.as_dict()
    assert {"theta.gamma_S", "sigma.housing_couple", "se.lam", "binding.theta<1", "loglik"} <= set(d)
    out = write_result(res, tmp_path / "result.txt", {"config_hash": "abc"})
    assert out.read_text().startswith("config_hash = abc")


def test_calibrate_is_deterministic(tiny_samples):
    cfg = replace(FAST, stage1_budget=3, maxiter=2)
    a, b = calibrate(tiny_samples, cfg), calibrate(tiny_samples, cfg)
    assert np.array_equal(to_vector(a.theta_hat), to_vector(b.theta_hat)) and a.loglik == b.loglik


def test_calibrate_rejects_missing_block():
    rows = [HouseholdSample(70, S, False, 1e5, 2e4)]
    with pytest.raises(InvalidDataError, match="block"):
        calibrate(rows, FAST)


def test_resume_without_state(tiny_samples, tmp_path):
    with pytest.raises(InvalidDataError, match="resume"):
        calibrate(tiny_samples, FAST, trace_path=tmp_path, resume=True)


def test_residual_dump(tiny_samples, tmp_path):
    c, h = model_predictions(UtilityParams(), tiny_samples, FAST)
    out = write_residuals(tiny_samples, c, h, tmp_path / "r.csv")
    lines = out.read_text().splitlines()
    assert lines[0] == "sample_id,block,observed,predicted,log_residual"
    assert len(lines) == 1 + len(tiny_samples) + sum(s.homeowner for s in tiny_samples)


def test_standard_errors_on_quadratic():
    # [DERIVED] for a Gaussian log-likelihood the delta-method errors follow from the known covariance
    from decumulation.calibration import standard_errors
    tf = Transform(17456.0, 26099.0)
    u0 = tf.forward(to_vector(UtilityParams()))
    prec = np.diag(np.arange(1.0, 10.0) * 100.0)
    negll = lambda u: 0.5 * (u - u0) @ prec @ (u - u0)  # noqa: E731
    se = standard_errors(negll, u0, tf, 1e-4)
    expected = np.abs(tf.jacobian(u0)) / np.sqrt(np.diag(prec))
    np.testing.assert_allclose(se, expected, rtol=1e-5)
