"""Ensemble statistics against the deterministic current-integral oracle."""

import json

import numpy as np
import pytest

from gapflow.dynamics import GapSemantics, IntegratorConfig
from gapflow.engine import PRESERVE_TOTAL, run_trajectory, step_grid
from gapflow.ensemble import (
    ComparisonReport,
    EnsembleStats,
    OracleResult,
    RunProvenance,
    compare,
    deterministic_oracle,
    ks_statistic,
    ks_statistic_grid,
    run_ensemble,
)
from gapflow.errors import GapflowError, ProvenanceError
from gapflow.fixtures import three_mode, two_level
from gapflow.model import load_scenario
from gapflow.rules import NRULES3, RuleSet

R3 = RuleSet(NRULES3)
ONEWAY = GapSemantics.ONE_WAY_FEED
CFG = IntegratorConfig(dt=0.01, t_max=6.0)


# ---------------------------------------------------------------------------
# Oracle
# ---------------------------------------------------------------------------


def test_oracle_three_mode_shares_closed_form(three_mode_model):
    """Couplings (1, 1, sqrt 2): share ratio 1:1:2 exactly."""
    oracle = deterministic_oracle(three_mode_model, CFG, ONEWAY)
    assert oracle.predicted_shares[1] == pytest.approx(0.25, abs=1e-12)
    assert oracle.predicted_shares[2] == pytest.approx(0.25, abs=1e-12)
    assert oracle.predicted_shares[3] == pytest.approx(0.50, abs=1e-12)


def test_oracle_three_mode_survival_closed_form(three_mode_model):
    """rate(t) = 8t/(1+4t^2) gives S(t) = 1/(1+4t^2)."""
    oracle = deterministic_oracle(three_mode_model, CFG, ONEWAY)
    t = oracle.times
    expected = 1.0 / (1.0 + 4.0 * t**2)
    assert np.allclose(oracle.survival, expected, rtol=1e-6, atol=1e-9)
    assert oracle.survival_at(6.0) == pytest.approx(1.0 / 145.0, rel=1e-6)


def test_oracle_two_level_survival_closed_form(two_level_model):
    """rate(t) = 2t/(1+t^2) gives S(t) = 1/(1+t^2)."""
    oracle = deterministic_oracle(two_level_model, CFG, ONEWAY)
    assert oracle.survival_at(1.0) == pytest.approx(0.5, rel=1e-6)
    assert oracle.survival_at(6.0) == pytest.approx(1.0 / 37.0, rel=1e-6)


def test_oracle_grid_refinement_converges(three_mode_model):
    coarse = deterministic_oracle(three_mode_model, CFG, ONEWAY, refine=5)
    fine = deterministic_oracle(three_mode_model, CFG, ONEWAY, refine=20)
    for comp in (1, 2, 3):
        assert coarse.predicted_shares[comp] == pytest.approx(
            fine.predicted_shares[comp], rel=1e-6)
    assert coarse.survival_at(6.0) == pytest.approx(fine.survival_at(6.0), rel=1e-5)


def test_oracle_rejects_bad_refine(three_mode_model):
    with pytest.raises(GapflowError):
        deterministic_oracle(three_mode_model, CFG, ONEWAY, refine=0)


def test_oracle_cdf_is_truncated_and_normalized(three_mode_model):
    oracle = deterministic_oracle(three_mode_model, CFG, ONEWAY)
    grid = step_grid(CFG)
    cdf = oracle.cdf_at(grid)
    assert cdf[0] >= 0.0
    assert cdf[-1] == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.diff(cdf) >= -1e-15)


# ---------------------------------------------------------------------------
# Ensembles
# ---------------------------------------------------------------------------


def small_ensemble(model, n=200, seed=7, **kw):
    return run_ensemble(model, R3, CFG, ONEWAY, n, seed, **kw)


def test_single_trajectory_ensemble_matches_run_trajectory(three_mode_model):
    stats = small_ensemble(three_mode_model, n=1, seed=13)
    rec = run_trajectory(three_mode_model, R3, CFG, ONEWAY, 13, traj_index=0,
                         record_samples=False)
    assert stats.n == 1
    ev = rec.first_event
    if ev is None:
        assert stats.no_collapse == 1
    else:
        assert stats.hit_times[0] == ev.t_sc
        assert stats.hit_components[0] == ev.chosen
        assert stats.counts[ev.chosen] == 1


def test_ensemble_matches_per_index_trajectories(three_mode_model):
    """The fast path must replay exactly what run_trajectory would do."""
    n = 40
    stats = small_ensemble(three_mode_model, n=n, seed=21)
    expected_times, expected_comps = [], []
    for k in range(n):
        rec = run_trajectory(three_mode_model, R3, CFG, ONEWAY, 21, traj_index=k,
                             record_samples=False)
        ev = rec.first_event
        if ev is not None:
            expected_times.append(ev.t_sc)
            expected_comps.append(ev.chosen)
    assert np.array_equal(stats.hit_times, np.array(expected_times))
    assert np.array_equal(stats.hit_components, np.array(expected_comps))


def test_ensemble_chained_fixture_uses_fallback(chain_model):
    """Multi-epoch continuations leave the memoized path but stay exact."""
    cfg = IntegratorConfig(dt=0.01, t_max=12.0)
    stats = run_ensemble(chain_model, R3, cfg, ONEWAY, 30, 5)
    for k in range(30):
        rec = run_trajectory(chain_model, R3, cfg, ONEWAY, 5, traj_index=k,
                             record_samples=False)
        ev = rec.first_event
        if ev is not None:
            assert stats.hit_times[list(stats.hit_times).index(ev.t_sc)] == ev.t_sc


def test_worker_counts_agree_bitwise(three_mode_model):
    a = small_ensemble(three_mode_model, n=97, seed=3, n_workers=1)
    b = small_ensemble(three_mode_model, n=97, seed=3, n_workers=4)
    assert np.array_equal(a.hit_times, b.hit_times)
    assert np.array_equal(a.hit_components, b.hit_components)
    assert a.counts == b.counts
    assert a.no_collapse == b.no_collapse


def test_shares_sum_to_one(three_mode_model):
    stats = small_ensemble(three_mode_model, n=150, seed=2)
    shares = stats.conditional_shares()
    assert sum(shares.values()) == pytest.approx(1.0)


def test_zero_coupling_component_never_chosen():
    doc = {
        "schema": "scenario/1",
        "dim": 3,
        "components": [
            {"id": 0, "indices": [0], "entropy_rank": 0, "status": "active"},
            {"id": 1, "indices": [1], "entropy_rank": 1, "status": "launch"},
            {"id": 2, "indices": [2], "entropy_rank": 1, "status": "launch"},
        ],
        "gaps": [
            {"low": 0, "high": 1, "irreversible": True, "entries": [[1, 0, 1.0, 0.0]]},
            {"low": 0, "high": 2, "irreversible": True, "entries": [[2, 0, 0.0, 0.0]]},
        ],
        "own": [],
        "psi0": [[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]],
        "defaults": {"dt": 0.01, "t_max": 6.0, "rules": "nrules3",
                     "gap_mode": "oneway", "seed": 1, "sample_every": 1},
    }
    model = load_scenario(json.dumps(doc))
    stats = run_ensemble(model, R3, CFG, ONEWAY, 300, 11)
    assert stats.counts.get(2, 0) == 0
    oracle = deterministic_oracle(model, CFG, ONEWAY)
    assert oracle.predicted_shares[2] == 0.0


def test_empirical_survival_tracks_oracle(three_mode_model):
    stats = small_ensemble(three_mode_model, n=2000, seed=17)
    oracle = deterministic_oracle(three_mode_model, CFG, ONEWAY)
    s_emp = stats.empirical_survival(1.0)
    assert s_emp == pytest.approx(oracle.survival_at(1.0), abs=0.05)


# ---------------------------------------------------------------------------
# Comparison harness
# ---------------------------------------------------------------------------


def test_compare_self_consistency(three_mode_model):
    stats = small_ensemble(three_mode_model, n=2000, seed=29)
    oracle = deterministic_oracle(three_mode_model, CFG, ONEWAY)
    report = compare(stats, oracle)
    assert report.passed
    assert report.max_abs_z < 3.0
    assert report.ks_d < report.ks_threshold


def test_compare_detects_biased_sampler(three_mode_model):
    """Power check: corrupting the labels must blow up the z-scores."""
    stats = small_ensemble(three_mode_model, n=2000, seed=31)
    comps = stats.hit_components.copy()
    comps[comps == 3] = 1  # funnel the dominant channel into component 1
    counts = {c: int(np.sum(comps == c)) for c in (1, 2, 3)}
    rigged = EnsembleStats(n=stats.n, seed=stats.seed, counts=counts,
                           no_collapse=stats.no_collapse, hit_times=stats.hit_times,
                           hit_components=comps, provenance=stats.provenance,
                           totals=stats.totals)
    oracle = deterministic_oracle(three_mode_model, CFG, ONEWAY)
    report = compare(rigged, oracle)
    assert not report.z_pass
    assert report.max_abs_z > 10.0


def test_compare_detects_wrong_hit_time_distribution(three_mode_model):
    """Shifting every hit time late must blow up the KS distance."""
    stats = small_ensemble(three_mode_model, n=2000, seed=37)
    grid = step_grid(CFG)
    shifted = np.minimum(stats.hit_times + 0.5, grid[-1])
    rigged = EnsembleStats(n=stats.n, seed=stats.seed, counts=stats.counts,
                           no_collapse=stats.no_collapse, hit_times=shifted,
                           hit_components=stats.hit_components,
                           provenance=stats.provenance, totals=stats.totals)
    oracle = deterministic_oracle(three_mode_model, CFG, ONEWAY)
    report = compare(rigged, oracle)
    assert not report.ks_pass


def test_compare_rejects_mismatched_provenance(three_mode_model, two_level_model):
    stats = small_ensemble(three_mode_model, n=50, seed=1)
    oracle = deterministic_oracle(two_level_model, CFG, ONEWAY)
    with pytest.raises(ProvenanceError):
        compare(stats, oracle)


def test_comparison_report_serializes(three_mode_model):
    stats = small_ensemble(three_mode_model, n=200, seed=41)
    oracle = deterministic_oracle(three_mode_model, CFG, ONEWAY)
    report = compare(stats, oracle)
    d = report.to_dict()
    json.dumps(d)
    assert d["n"] == 200
    assert set(d["z_scores"]) == {"1", "2", "3"}


# ---------------------------------------------------------------------------
# KS machinery
# ---------------------------------------------------------------------------


def test_ks_statistic_exact_on_uniform():
    samples = np.array([0.1, 0.3, 0.5, 0.7, 0.9])
    d = ks_statistic(samples, samples)  # F(x) = x on [0, 1]
    assert d == pytest.approx(0.1)


def test_ks_grid_zero_when_empirical_equals_model():
    grid = np.linspace(0.1, 1.0, 10)
    samples = np.repeat(grid, 10)
    cdf = np.arange(1, 11) / 10.0
    assert ks_statistic_grid(samples, grid, cdf) == pytest.approx(0.0, abs=1e-12)


def test_ks_grid_detects_shift():
    grid = np.linspace(0.1, 1.0, 10)
    samples = np.repeat(grid[5:], 20)
    cdf = np.arange(1, 11) / 10.0
    assert ks_statistic_grid(samples, grid, cdf) > 0.3
