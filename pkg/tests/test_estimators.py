import math

import pytest

from src.errors import InsufficientData, NoRegenerations, RegimeError, ZeroHitEstimate
from src.estimators import (
    EstimateWithCI,
    assemble_drift_report,
    clt_check,
    clt_statistics,
    compare_estimates,
    drift_direct,
    drift_pi_formula,
    drift_regeneration,
    estimate_greenian_length,
    estimate_xi,
    greenian_hits,
    horizon_schedule,
    overlap,
    sigma2_regeneration,
    word_length_drift,
    xi_starts,
)
from src.exit_analysis import (
    Chain,
    RegenerationCycle,
    empirical_pi,
    extract_chain,
    extract_exits,
    extract_regenerations,
    merge_chains,
)
from src.group_core import LengthFunction, t_only_length, table_length, unit_length
from src.walk_engine import classify_regime, run_trajectory
from src.z_projection import degenerate_drift, lazy_step_variance


def _cycle(i, duration, gain, syllables=1):
    return RegenerationCycle(i, 0, duration, duration, float(gain), syllables)


def _klein_run(pres, params, ell, steps=20_000, replicas=20, seed=41):
    trajs = [run_trajectory(pres, params, steps, seed, r, ell) for r in range(replicas)]
    regime = classify_regime(pres, params)
    chains, cycles = [], []
    for tr in trajs:
        ex = extract_exits(tr)
        ch = extract_chain(ex)
        chains.append(ch)
        try:
            cycles.extend(extract_regenerations(ch, ex, ell, regime.direction, pres.identity))
        except NoRegenerations:
            pass
    return trajs, merge_chains(chains), cycles


# -----------------------------
# EstimateWithCI
# -----------------------------
def test_normal_interval():
    est = EstimateWithCI.normal(2.0, 0.5, 10, "x")
    assert est.ci_low == pytest.approx(2.0 - 1.96 * 0.5)
    assert est.ci_high == pytest.approx(2.0 + 1.96 * 0.5)
    assert est.half_width == pytest.approx(1.96 * 0.5)
    assert est.contains(2.5) and not est.contains(3.5)
    assert est.excludes_zero()
    assert not EstimateWithCI.normal(0.1, 1.0, 10, "x").excludes_zero()


def test_overlap_and_compare():
    a = EstimateWithCI.normal(1.0, 0.1, 10, "a")
    b = EstimateWithCI.normal(1.3, 0.1, 10, "b")
    c = EstimateWithCI.normal(2.0, 0.1, 10, "c")
    assert overlap(a, b)
    assert not overlap(a, c)
    shift = compare_estimates(a, b)
    assert shift["shift"] == pytest.approx(0.3)
    assert shift["within_ci"] is False


# -----------------------------
# drift
# -----------------------------
def test_identical_cycles_have_zero_error():
    est = drift_regeneration([_cycle(i, 4, 3.0) for i in range(1, 11)])
    assert est.point == pytest.approx(0.75)
    assert est.std_error == 0.0


def test_syllable_count_gain():
    est = drift_regeneration([_cycle(1, 4, 3.0, 2), _cycle(2, 6, 1.0, 3)], gain="syllable_count")
    assert est.point == pytest.approx(0.5)


def test_no_cycles():
    with pytest.raises(NoRegenerations):
        drift_regeneration([])
    with pytest.raises(NoRegenerations):
        sigma2_regeneration([], 1.0)


def test_deterministic_cycles_have_zero_sigma2():
    cycles = [_cycle(i, 4, 3.0) for i in range(1, 11)]
    est = sigma2_regeneration(cycles, drift_regeneration(cycles).point)
    assert est.point == pytest.approx(0.0, abs=1e-15)
    assert est.details["mean_L"] == pytest.approx(0.0, abs=1e-15)


def test_pi_formula_single_state():
    s = (0, 1, 0, 1)
    chain = Chain(states=[s] * 40)
    est = drift_pi_formula(chain, empirical_pi(chain), t_only_length())
    assert est.point == 1.0
    assert est.details["Lambda"] == 1.0


def test_drift_direct_zero_length(klein):
    pres, params = klein
    trajs = [run_trajectory(pres, params, 500, 3, r) for r in range(4)]
    est = drift_direct(trajs, LengthFunction({}, 0.0, 0.0))
    assert est.point == 0.0 and est.std_error == 0.0


def test_drift_direct_needs_steps(klein):
    pres, params = klein
    with pytest.raises(InsufficientData):
        drift_direct([], unit_length(pres))
    with pytest.raises(InsufficientData):
        drift_direct([run_trajectory(pres, params, 0, 3)], unit_length(pres))


def test_single_replica_has_zero_error(klein):
    pres, params = klein
    est = drift_direct([run_trajectory(pres, params, 500, 3)], unit_length(pres))
    assert est.std_error == 0.0


def test_degenerate_t_drift(degenerate):
    pres, params = degenerate
    ell = t_only_length()
    trajs = [run_trajectory(pres, params, 20_000, 17, r) for r in range(20)]
    est = drift_direct(trajs, ell)
    target = degenerate_drift(params)
    assert target == pytest.approx(0.3)
    assert abs(est.point - target) <= max(4 * est.std_error, 0.01)


def test_recurrent_direct_drift_straddles_zero(recurrent):
    pres, params = recurrent
    trajs = [run_trajectory(pres, params, 20_000, 18, r) for r in range(20)]
    est = drift_direct(trajs, t_only_length())
    # |psi| / n ~ sqrt(2 var / (pi n)), well under 0.02 at n = 2e4
    assert 0 <= est.point < 0.02


def test_scaling_is_exact(klein):
    pres, params = klein
    ell = unit_length(pres)
    ell2 = ell.scaled(2.0)
    trajs = [run_trajectory(pres, params, 5000, 19, r) for r in range(6)]
    assert drift_direct(trajs, ell2).point == 2 * drift_direct(trajs, ell).point

    chain = merge_chains([extract_chain(extract_exits(tr)) for tr in trajs])
    pi = empirical_pi(chain)
    assert drift_pi_formula(chain, pi, ell2).point == pytest.approx(2 * drift_pi_formula(chain, pi, ell).point, rel=1e-12)

    cycles = [_cycle(1, 3, 2.0), _cycle(2, 5, 4.0), _cycle(3, 2, 1.0)]
    doubled = [_cycle(c.index, c.duration, 2 * c.length_gain) for c in cycles]
    lam, lam2 = drift_regeneration(cycles), drift_regeneration(doubled)
    assert lam2.point == 2 * lam.point
    assert sigma2_regeneration(doubled, lam2.point).point == pytest.approx(
        4 * sigma2_regeneration(cycles, lam.point).point, rel=1e-12
    )


def test_klein_estimators_agree(klein):
    pres, params = klein
    ell = unit_length(pres)
    trajs, chain, cycles = _klein_run(pres, params, ell)
    direct = drift_direct(trajs, ell)
    regen = drift_regeneration(cycles)
    pi = drift_pi_formula(chain, empirical_pi(chain), ell)
    t_drift = drift_regeneration(cycles, gain="syllable_count")
    report = assemble_drift_report(
        direct, regen, pi, t_drift, word_length_drift(pres, trajs),
        sigma2_regeneration(cycles, regen.point), sigma=4.0, regime="TransientGeneral",
    )
    assert direct.point > 0 and regen.point > 0 and pi.point > 0
    assert report.cross_consistent
    assert 1.8 <= report.wl_over_t <= 2.2
    assert report.sigma2.excludes_zero()
    low, high = report.sigma2.details["mean_L_ci"]
    assert low <= 0 <= high


def test_t_length_pi_formula_is_inverse_lambda(klein):
    pres, params = klein
    ell = unit_length(pres)
    _, chain, _ = _klein_run(pres, params, ell, steps=10_000, replicas=6)
    pi_hat = empirical_pi(chain)
    est = drift_pi_formula(chain, pi_hat, t_only_length())
    assert est.point == pytest.approx(1.0 / est.details["Lambda"], rel=1e-12)


@pytest.mark.slow
def test_three_way_agreement_at_scale(klein):
    pres, params = klein
    ell = unit_length(pres)
    trajs, chain, cycles = _klein_run(pres, params, ell, steps=500_000, replicas=20)
    regen = drift_regeneration(cycles)
    report = assemble_drift_report(
        drift_direct(trajs, ell), regen, drift_pi_formula(chain, empirical_pi(chain), ell),
        drift_regeneration(cycles, gain="syllable_count"), word_length_drift(pres, trajs),
        sigma2_regeneration(cycles, regen.point),
    )
    assert report.cross_consistent
    assert 1.9 <= report.wl_over_t <= 2.1


def _report(pres, trajs, chain, cycles, ell, sigma=3.0):
    regen = drift_regeneration(cycles)
    return assemble_drift_report(
        drift_direct(trajs, ell), regen, drift_pi_formula(chain, empirical_pi(chain), ell),
        drift_regeneration(cycles, gain="syllable_count"), word_length_drift(pres, trajs),
        sigma2_regeneration(cycles, regen.point), sigma=sigma, regime="TransientGeneral",
    )


def _subadditive(pres):
    # ab costs more than a and b together
    return table_length(pres, {"e": 0, "a": 1, "b": 1, "ab": 3})


def test_estimators_agree_under_subadditive_length(klein):
    pres, params = klein
    ell = _subadditive(pres)
    trajs, chain, cycles = _klein_run(pres, params, ell, seed=43)
    report = _report(pres, trajs, chain, cycles, ell, sigma=4.0)
    assert report.cross_consistent
    assert 0.2 < report.lambda_regen.point < 0.35
    # the unit-length drift differs, so the table is actually in use
    unit = drift_direct(trajs, unit_length(pres))
    assert not overlap(unit, report.lambda_direct, sigma=4.0)


@pytest.mark.slow
def test_subadditive_agreement_at_scale(klein):
    pres, params = klein
    ell = _subadditive(pres)
    trajs, chain, cycles = _klein_run(pres, params, ell, steps=100_000, replicas=20, seed=44)
    report = _report(pres, trajs, chain, cycles, ell)
    assert report.cross_consistent


# -----------------------------
# CLT
# -----------------------------
def test_clt_short_run_is_descriptive(degenerate):
    pres, params = degenerate
    rep = clt_check(pres, params, t_only_length(), n=1, replicas=50, seed=5, sigma2=0.41)
    assert rep.passed is None
    assert rep.n == 1 and rep.replicas == 50


def test_clt_needs_two_replicas(degenerate):
    pres, params = degenerate
    trajs = [run_trajectory(pres, params, 100, 5)]
    with pytest.raises(InsufficientData):
        clt_statistics(trajs, t_only_length())


def test_clt_degenerate_variance_matches_closed_form(degenerate):
    pres, params = degenerate
    sigma2 = lazy_step_variance(params)
    assert sigma2 == pytest.approx(0.41)
    rep = clt_check(
        pres, params, t_only_length(), n=1000, replicas=400, seed=6,
        lambda_hat=degenerate_drift(params), sigma2=sigma2, variance_band=0.25, skewness_max=0.5,
    )
    # sampling error of a variance from 400 draws is about 7%
    assert abs(rep.variance_ratio - 1.0) < 0.25
    assert abs(rep.mean) < 4 * math.sqrt(sigma2 / 400)
    assert rep.passed is True


def _klein_clt(pres, params, steps, n, replicas, band, skew_max):
    ell = unit_length(pres)
    _, _, cycles = _klein_run(pres, params, ell, steps=steps, replicas=20, seed=45)
    regen = drift_regeneration(cycles)
    sigma2 = sigma2_regeneration(cycles, regen.point)
    rep = clt_check(
        pres, params, ell, n=n, replicas=replicas, seed=46,
        lambda_hat=regen.point, sigma2=sigma2.point, variance_band=band, skewness_max=skew_max,
    )
    return rep, sigma2


def test_clt_matches_regenerative_variance_on_klein(klein):
    pres, params = klein
    rep, sigma2 = _klein_clt(pres, params, steps=20_000, n=2000, replicas=400, band=0.3, skew_max=0.5)
    assert sigma2.excludes_zero()
    low, high = sigma2.details["mean_L_ci"]
    assert low <= 0 <= high
    assert abs(rep.variance_ratio - 1.0) < 0.3
    assert abs(rep.skewness) < 0.5
    assert rep.passed is True


@pytest.mark.slow
def test_clt_on_klein_at_scale(klein):
    pres, params = klein
    rep, sigma2 = _klein_clt(pres, params, steps=100_000, n=20_000, replicas=2000, band=0.15, skew_max=0.15)
    low, high = sigma2.details["mean_L_ci"]
    assert low <= 0 <= high
    assert abs(rep.variance_ratio - 1.0) <= 0.15
    assert abs(rep.skewness) < 0.15
    assert rep.passed is True
    assert rep.passed is True


# -----------------------------
# xi
# -----------------------------
def test_xi_starts(klein, degenerate):
    pres, _ = klein
    assert len(xi_starts(pres, "tb")) == len(pres.B)
    assert len(xi_starts(pres, "t^-1a")) == len(pres.A)
    dpres, _ = degenerate
    assert len(xi_starts(dpres, "tb")) == 4


def test_horizon_schedule():
    assert horizon_schedule(256, 2, 3) == [256, 512, 1024, 2048]


def test_xi_recurrent_rejected(recurrent):
    pres, params = recurrent
    with pytest.raises(RegimeError):
        estimate_xi(pres, params, "t", [64, 128], 10, seed=1)


def test_xi_vanishes_against_the_drift(degenerate):
    pres, params = degenerate
    est = estimate_xi(pres, params, "t^-1 a", [64, 128, 256], trials=300, seed=2)
    assert est.point < 0.01
    assert est.details["upper_bracket"] is True
    assert est.ci_low >= 0.0


def test_xi_with_the_drift_matches_first_passage(degenerate):
    pres, params = degenerate
    # from +1 the walk escapes unless it ever reaches 0: 1 - F-(1) = 0.75
    est = estimate_xi(pres, params, "t b", [128, 256, 512], trials=1000, seed=3)
    assert est.excludes_zero()
    assert abs(est.point - 0.75) <= max(4 * est.std_error, 0.02)


def test_xi_positive_on_klein(klein):
    pres, params = klein
    for family in ("tb", "t^-1a"):
        for start in xi_starts(pres, family):
            est = estimate_xi(pres, params, start, [64, 128, 256], trials=200, seed=4)
            assert est.excludes_zero()
            assert 0.0 <= est.ci_low <= est.ci_high <= 1.0


def test_xi_start_in_base_rejected(klein):
    pres, params = klein
    with pytest.raises(InsufficientData):
        estimate_xi(pres, params, "a", [64], 10, seed=1)


# -----------------------------
# Greenian length
# -----------------------------
def test_greenian_length_on_klein(klein):
    pres, params = klein
    hits = greenian_hits(pres, params, horizon=200, trials=400, seed=7)
    assert set(hits) == {"e", "a", "b", "ab", "t", "t^-1"}
    assert hits["e"].point == 1.0
    ell = estimate_greenian_length(pres, params, 200, 400, 7, hits=hits)
    assert ell.kind == "greenian"
    assert ell.g0(pres.identity) == 0.0
    for name in ("a", "b"):
        g = pres.base.lookup(name)
        assert 0 < ell.g0(g) < math.inf
        # one step already hits g with probability alpha * mu0(g)
        assert ell.g0(g) <= -math.log(params.alpha * params.mu0[g]) + 0.2
    assert 0 < ell.stable(1) < math.inf and 0 < ell.stable(-1) < math.inf


def test_greenian_zero_hits(klein):
    pres, params = klein
    with pytest.raises(ZeroHitEstimate):
        estimate_greenian_length(pres, params, horizon=0, trials=10, seed=7)


def test_greenian_drift_positive(klein):
    pres, params = klein
    ell = estimate_greenian_length(pres, params, 200, 400, 8)
    trajs = [run_trajectory(pres, params, 5000, 9, r, ell) for r in range(8)]
    est = drift_direct(trajs, ell)
    assert est.point > 0 and est.excludes_zero()


def test_greenian_on_integers(integers):
    pres, params = integers
    hits = greenian_hits(pres, params, horizon=200, trials=200, seed=10)
    assert set(hits) == {"-1", "1", "t", "t^-1"}
    ell = estimate_greenian_length(pres, params, 200, 200, 10, hits=hits)
    assert math.isfinite(ell.value_t) and ell.g0(0) == 0.0
