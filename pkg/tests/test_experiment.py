import math

import pytest

from src.errors import ConfigError, GridError, RegimeError
from src.experiment import (
    SWEEP_COLUMNS,
    build_setup,
    config_hash,
    derive_seed,
    drift_pipeline,
    load_experiment,
    parse_experiment,
    parse_grid,
    parse_schedule,
    provenance,
    resolve_settings,
    run_replicas,
    split_segments,
    sweep,
    with_param,
    xi_pipeline,
    zcheck_pipeline,
)
from src.z_projection import ZWalkLaw

SMALL = {"run": {"steps": 5000, "replicas": 4}}


def _setup(experiment_path, defaults, name, overrides=SMALL):
    cfg = load_experiment(experiment_path(name))
    return build_setup(cfg, resolve_settings(defaults, cfg, overrides))


# -----------------------------
# documents and settings
# -----------------------------
def test_shipped_experiments_load(experiment_path, defaults):
    for name in ("klein_example", "subadditivity", "degenerate", "recurrent", "integers"):
        setup = _setup(experiment_path, defaults, name)
        assert setup.cfg.name == name


def test_invalid_config_names_fields(experiment_path):
    raw = load_experiment(experiment_path("klein_example")).canonical()
    raw["alpha"] = 1.5
    raw["colour"] = "red"
    with pytest.raises(ConfigError) as exc:
        parse_experiment(raw)
    assert "alpha" in str(exc.value) and "colour" in str(exc.value)


def test_mu0_must_sum_to_one(experiment_path):
    raw = load_experiment(experiment_path("klein_example")).canonical()
    raw["mu0"] = {"a": 0.5, "b": 0.6}
    with pytest.raises(ConfigError):
        parse_experiment(raw)


def test_settings_layers(experiment_path, defaults):
    cfg = load_experiment(experiment_path("klein_example"))
    s = resolve_settings(defaults, cfg, {"run": {"steps": 10, "seed": None}, "exits": {"safety_margin": 4}})
    assert s["run"]["steps"] == 10
    assert s["run"]["seed"] == cfg.seed
    assert s["run"]["replicas"] == cfg.replicas
    assert s["exits"]["safety_margin"] == 4
    assert s["exits"]["tail_discard"] == defaults["exits"]["tail_discard"]
    # defaults are not mutated
    assert defaults["exits"]["safety_margin"] == 10


def test_config_hash_and_provenance(experiment_path):
    cfg = load_experiment(experiment_path("klein_example"))
    assert config_hash(cfg) == config_hash(load_experiment(experiment_path("klein_example")))
    assert config_hash(cfg) != config_hash(with_param(cfg, "p", 0.6))
    prov = provenance(cfg, 7)
    assert prov["master_seed"] == 7
    assert {"hnnwalk", "numpy", "scipy", "pandas", "python"} <= set(prov["versions"])


def test_derive_seed():
    assert derive_seed(1, "p", 0.3) == derive_seed(1, "p", 0.3)
    assert derive_seed(1, "p", 0.3) != derive_seed(1, "p", 0.4)
    assert derive_seed(1, "p", 0.3) != derive_seed(2, "p", 0.3)
    assert 0 <= derive_seed(1, "x") < 2**63


def test_growth_bound_is_enforced(experiment_path, defaults):
    raw = load_experiment(experiment_path("subadditivity")).canonical()
    raw["length"]["growth_bound"] = [1.0, 1]
    cfg = parse_experiment(raw)
    with pytest.raises(ConfigError):
        build_setup(cfg, resolve_settings(defaults, cfg))
    raw["length"]["growth_bound"] = [2.0, 1]
    cfg = parse_experiment(raw)
    assert build_setup(cfg, resolve_settings(defaults, cfg)).ell.growth_bound == (2.0, 1)


def test_word_length_kind(experiment_path, defaults):
    raw = load_experiment(experiment_path("klein_example")).canonical()
    raw["length"] = {"kind": "word"}
    cfg = parse_experiment(raw)
    setup = build_setup(cfg, resolve_settings(defaults, cfg))
    names = {"e": 0.0, "a": 1.0, "b": 1.0, "ab": 2.0}
    assert {n: setup.ell.g0(setup.pres.base.lookup(n)) for n in names} == names


# -----------------------------
# replicas and pipelines
# -----------------------------
def test_worker_count_does_not_change_results(experiment_path, defaults):
    setup = _setup(experiment_path, defaults, "klein_example")
    seen = []
    serial = run_replicas(setup.pres, setup.params, 2000, 5, 4, ell=setup.ell)
    pooled = run_replicas(setup.pres, setup.params, 2000, 5, 4, ell=setup.ell, workers=2, progress_cb=lambda c: seen.append(dict(c)))
    assert [t.current.key() for t in serial] == [t.current.key() for t in pooled]
    assert [t.replica for t in pooled] == [0, 1, 2, 3]
    assert seen[-1]["completed"] == 4 and seen[-1]["pending"] == 0 and seen[-1]["failed"] == 0


def test_drift_pipeline_klein(experiment_path, defaults):
    outcome = drift_pipeline(_setup(experiment_path, defaults, "klein_example"))
    rep = outcome.report
    assert rep.regime == "TransientGeneral"
    assert rep.lambda_direct.point > 0 and rep.lambda_regen.point > 0 and rep.lambda_pi.point > 0
    assert outcome.diagnostics["forbidden_transitions"] == 0
    assert outcome.diagnostics["cycles"] > 0
    assert outcome.sensitivity["doubled"] == 2 * outcome.sensitivity["safety_margin"]


def test_doubling_safety_margin_stays_within_ci(experiment_path, defaults):
    outcome = drift_pipeline(_setup(experiment_path, defaults, "klein_example", {"run": {"steps": 20_000, "replicas": 6}}))
    assert "error" not in outcome.sensitivity
    for key in ("lambda_regen", "lambda_pi", "sigma2"):
        shift = outcome.sensitivity[key]
        assert shift["within_ci"], (key, shift)


def test_drift_pipeline_recurrent(experiment_path, defaults):
    with pytest.raises(RegimeError, match="recurrent"):
        drift_pipeline(_setup(experiment_path, defaults, "recurrent"))


def test_xi_pipeline_degenerate(experiment_path, defaults):
    setup = _setup(experiment_path, defaults, "degenerate", {"xi": {"trials": 100}})
    estimates = xi_pipeline(setup, ["t^-1a"], [32, 64])
    assert len(estimates) == 4
    assert all(e.point < 0.05 for e in estimates)


def test_parse_schedule(defaults):
    xi = dict(defaults["xi"], max_doublings=2)
    assert parse_schedule("100,x3", xi) == [100, 300, 900]
    assert parse_schedule(None, xi) == [256, 512, 1024]
    with pytest.raises(ConfigError):
        parse_schedule("abc", xi)


def test_zcheck_pipeline_exact_only():
    out = zcheck_pipeline(ZWalkLaw(p=0.8, alpha=0.5), 1.0)
    assert out["exact"]["U"] == pytest.approx(0.4)
    assert out["exact"]["sign_pattern_weight"] == pytest.approx(0.1024)
    assert "simulated" not in out
    with pytest.raises(RegimeError):
        zcheck_pipeline(ZWalkLaw(p=0.8, alpha=0.5), 1.0, simulate=10)


# -----------------------------
# sweeps
# -----------------------------
def test_parse_grid():
    assert parse_grid("0.1:0.3:0.1") == [0.1, 0.2, 0.3]
    assert parse_grid("0.5") == [0.5]
    for bad in ("a:b:c", "0.1:0.3", "0.3:0.1:0.1", "0.1:0.3:0"):
        with pytest.raises(GridError):
            parse_grid(bad)


def test_split_segments():
    assert split_segments([0.4, 0.5, 0.6], "p", True) == [[0.4], [0.6]]
    assert split_segments([0.4, 0.5, 0.6], "p", False) == [[0.4, 0.5, 0.6]]
    assert split_segments([0.4, 0.5], "alpha", True) == [[0.4, 0.5]]
    with pytest.raises(GridError):
        split_segments([0.5], "p", True)


def test_with_param(experiment_path):
    cfg = load_experiment(experiment_path("klein_example"))
    moved = with_param(cfg, "mu0:a", 0.3)
    assert moved.mu0["a"] == 0.3
    assert math.isclose(math.fsum(moved.mu0.values()), 1.0, abs_tol=1e-12)
    assert with_param(cfg, "alpha", 0.25).alpha == 0.25
    with pytest.raises(GridError):
        with_param(cfg, "mu0:zz", 0.3)
    with pytest.raises(GridError):
        with_param(cfg, "beta", 0.3)


def test_single_point_sweep(experiment_path, defaults):
    cfg = load_experiment(experiment_path("klein_example"))
    df = sweep(cfg, defaults, "p", [0.5], {"run": {"steps": 3000, "replicas": 3}})
    assert list(df.columns) == SWEEP_COLUMNS
    assert len(df) == 1
    assert df.loc[0, "error"] == ""
    assert df.loc[0, "lambda"] > 0


def test_degenerate_sweep_splits_at_half(experiment_path, defaults):
    cfg = load_experiment(experiment_path("degenerate"))
    df = sweep(cfg, defaults, "p", parse_grid("0.4:0.6:0.1"), {"run": {"steps": 4000, "replicas": 3}})
    assert df["value"].tolist() == [0.4, 0.6]
    assert df["segment"].tolist() == [0, 1]
    assert (df["error"] == "").all()
    # (1 - alpha) |2p - 1| = 0.1 on both sides of the kink
    for lam in df["lambda"]:
        assert abs(lam - 0.1) < 0.03
