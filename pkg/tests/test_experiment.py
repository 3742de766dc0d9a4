from dataclasses import replace

import numpy as np
import pytest

from rehab_ilc import experiment as ex
from rehab_ilc import narx
from rehab_ilc.controllers import Law
from rehab_ilc.errors import DivergenceError, InvalidSpecError, TrainingStalledError
from rehab_ilc.task import sample_task

BASE = ex.ScenarioConfig(seeds=(0,), trials=20)


def constant(errors_by_seed):
    """Evaluator factory returning a fixed error per seed."""
    return lambda cfg, seed: (lambda amplitude, trial: errors_by_seed[seed])


# -- patient preparation ------------------------------------------------------

@pytest.mark.parametrize("variant,healthy,stroke", [("NARX1", 7, 4), ("NARX2", 7, 4)])
def test_prepare_patient_node_counts(variant, healthy, stroke):
    cfg = replace(BASE, network_variant=variant)
    assert ex.prepare_patient(cfg, 0).n_active_nodes == healthy
    assert ex.prepare_patient(replace(cfg, condition="stroke"), 0).n_active_nodes == stroke


def test_prepare_patient_deterministic():
    ex._pretrain_cached.cache_clear()
    a = ex.prepare_patient(replace(BASE, condition="stroke"), 2)
    ex._pretrain_cached.cache_clear()
    b = ex.prepare_patient(replace(BASE, condition="stroke"), 2)
    assert narx.dumps(a) == narx.dumps(b)


def test_scenario_validation():
    for kw in ({"trials": 0}, {"seeds": ()}, {"pretrain_epochs": 0}, {"seeds": (1, 1)},
               {"network_variant": "NARX9"}):
        with pytest.raises(InvalidSpecError):
            replace(BASE, **kw)


# -- trials ---------------------------------------------------------------

def test_perfect_patient_tracks():
    rec = ex.run_trial(ex.perfect_patient, 0.04, BASE)
    assert rec.error_norm < 1e-4


def test_silent_patient_from_rest():
    cfg = replace(BASE, tracking_start=False)
    rec = ex.run_trial(ex.silent_patient, 0.04, cfg)
    assert rec.error_norm == pytest.approx(0.04 * np.sqrt(1500), rel=1e-12)
    assert rec.error_norm == pytest.approx(np.linalg.norm(sample_task(cfg.task.with_amplitude(0.04)).samples))


def test_healthy_network_trial_is_finite():
    rec = ex.run_trial(ex.prepare_patient(BASE, 0), 0.04, BASE)
    assert np.isfinite(rec.error_norm) and rec.error_norm >= 0


@pytest.mark.parametrize("amplitude", [0.0, -0.1, 0.25])
def test_trial_amplitude_range(amplitude):
    with pytest.raises(InvalidSpecError):
        ex.run_trial(ex.perfect_patient, amplitude, BASE)


def test_trial_divergence_is_tagged():
    huge = lambda tau: tau.replace(np.full(len(tau), 1e308))
    with pytest.raises(DivergenceError) as info:
        ex.run_trial(huge, 0.04, BASE, seed=7, trial=3)
    assert info.value.context["seed"] == 7 and info.value.context["trial"] == 3


# -- sessions -------------------------------------------------------------

def test_single_trial_session():
    records = ex.run_session(replace(BASE, trials=1, patient="perfect"), 0)
    assert len(records) == 1 and records[0].amplitude == 0.04


def test_rule_based_stalls_on_constant_high_error():
    cfg = replace(BASE, law=Law.RULE_BASED)
    records = ex.run_session(cfg, 0, lambda a, k: 0.9)
    assert [r.amplitude for r in records] == [0.04] * 20


def test_ilc_zero_error_climbs_and_clamps():
    records = ex.run_session(replace(BASE, trials=7), 0, lambda a, k: 0.0)
    np.testing.assert_allclose([r.amplitude for r in records],
                               [0.04, 0.08, 0.12, 0.16, 0.20, 0.20, 0.20], atol=1e-15)
    assert [r.clamped for r in records][:4] == [False] * 4
    assert records[5].clamped and records[6].clamped
    assert records[1].update_term == pytest.approx(0.04)


def test_session_rejects_bad_error():
    with pytest.raises(InvalidSpecError):
        ex.run_session(BASE, 0, lambda a, k: float("nan"))


def test_per_trial_training_changes_patient():
    cfg = replace(BASE, trials=3, per_trial_epochs=1)
    frozen = ex.run_session(replace(cfg, per_trial_epochs=0), 0)
    tuned = ex.run_session(cfg, 0)
    assert frozen[0].error_norm == tuned[0].error_norm
    assert frozen[2].error_norm != tuned[2].error_norm


# -- experiments ------------------------------------------------------------

def test_single_seed_has_zero_std():
    result = ex.run_experiment(replace(BASE, trials=5, patient="perfect"))
    stats = result.stats
    assert not stats.error_std.any() and not stats.amplitude_std.any()
    np.testing.assert_array_equal(stats.amplitude_mean, [r.amplitude for r in result.records])


def test_two_seed_population_std():
    cfg = replace(BASE, seeds=(0, 1), trials=4)
    stats = ex.run_experiment(cfg, evaluator_factory=constant({0: 0.2, 1: 0.4})).stats
    np.testing.assert_allclose(stats.error_mean, 0.3, atol=1e-15)
    np.testing.assert_allclose(stats.error_std, 0.1, atol=1e-15)
    assert stats.to_dict()["std_kind"] == "population"


def test_seed_order_does_not_matter():
    a = ex.run_experiment(replace(BASE, seeds=(0, 1, 2, 3, 4), trials=5, condition="stroke"))
    b = ex.run_experiment(replace(BASE, seeds=(3, 0, 4, 2, 1), trials=5, condition="stroke"))
    assert a.records == b.records
    for key in ("error_mean", "error_std", "amplitude_mean", "amplitude_std"):
        assert getattr(a.stats, key).tobytes() == getattr(b.stats, key).tobytes()


def test_parallel_matches_serial():
    cfg = replace(BASE, seeds=(0, 1, 2), trials=3)
    assert ex.run_experiment(cfg, jobs=2).records == ex.run_experiment(cfg, jobs=1).records


def failing_factory(cfg, seed):
    if seed == 1:
        raise TrainingStalledError("stalled", None)
    return lambda a, k: 0.1


def test_failed_seed_is_listed_not_fatal():
    result = ex.run_experiment(replace(BASE, seeds=(0, 1, 2), trials=2),
                               evaluator_factory=failing_factory)
    assert result.stats.seeds == (0, 2)
    assert [f["seed"] for f in result.failures] == [1]
    assert result.failures[0]["error"] == "TrainingStalledError"


def test_all_seeds_failed_gives_no_stats():
    result = ex.run_experiment(replace(BASE, seeds=(1,), trials=2),
                               evaluator_factory=failing_factory)
    assert result.stats is None and result.records == []


def test_ilc_beats_rule_based_when_rule_based_stalls():
    # error falls as amplitude stays low; rule-based sits above threshold for a while
    def factory(cfg, seed):
        return lambda a, k: 0.75 if k <= 3 + seed else 0.3
    seeds = tuple(range(5))
    ilc = ex.run_experiment(replace(BASE, seeds=seeds), evaluator_factory=factory)
    rule = ex.run_experiment(replace(BASE, seeds=seeds, law=Law.RULE_BASED),
                             evaluator_factory=factory)
    assert any(r.update_term == 0 for r in rule.records if r.trial > 1)
    assert ilc.stats.amplitude_mean[-1] >= rule.stats.amplitude_mean[-1]


def test_paper_scenarios_matrix():
    names = [c.name for c in ex.paper_scenarios(BASE)]
    assert len(set(names)) == 8
    assert "narx2-stroke-rule_based" in names
