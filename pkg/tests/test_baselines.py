import numpy as np
import pytest
from scipy import stats

from mogdfm.baselines import (
    CountingEvaluator,
    GAConfig,
    _environmental_selection,
    equal_budget_report,
    guided_budget,
    nsga2_run,
    random_search,
)
from mogdfm.core import RunConfig
from mogdfm.errors import InvalidArgumentError
from mogdfm.objectives import TableObjective, load_preset
from mogdfm.pareto import hypervolume, pareto_mask

from conftest import Plain


@pytest.mark.parametrize("kw", [{"population": 3}, {"population": 7}, {"mutation_rate": 1.5},
                                {"crossover_rate": -0.1}, {"tournament_size": 0}, {"generations": -1}])
def test_config_validation(kw):
    with pytest.raises(InvalidArgumentError):
        GAConfig(**kw)


def test_counting_evaluator_counts_every_call():
    ev = CountingEvaluator([TableObjective(np.eye(3)), Plain(lambda s: s.sum())])
    ev(np.zeros((5, 3), dtype=int))
    ev(np.zeros((2, 3), dtype=int))
    assert ev.calls == 14


def test_zero_generations_is_initial_front():
    p = load_preset("conflict2")
    res = nsga2_run(GAConfig(generations=0, seed=3), p.objectives, p.d, 4)
    assert res.evaluations == 64 * 2
    assert len(res.history) == 1
    assert np.array_equal(res.front.objectives, res.objectives[pareto_mask(res.objectives)])


def test_single_objective_best_never_decreases():
    rng = np.random.default_rng(0)
    f = TableObjective(rng.random((10, 5)))
    res = nsga2_run(GAConfig(generations=40, seed=1), [f], 10, 5)
    best = [h.max() for h in res.history]
    assert all(b >= a for a, b in zip(best, best[1:]))
    assert best[-1] == pytest.approx(f.bounds()[1], rel=0.05)


def test_evaluation_budget_is_exact():
    p = load_preset("tri")
    calls = {"n": 0}

    class Spy:
        name = "spy"

        def evaluate(self, x):
            calls["n"] += 1
            return float(x[0])

    res = nsga2_run(GAConfig(population=8, generations=5), p.objectives[:2] + [Spy()], p.d, 4)
    assert calls["n"] == 8 * 6
    assert res.evaluations == 8 * 6 * 3


def test_deterministic_under_seed():
    p = load_preset("conflict2")
    a = nsga2_run(GAConfig(generations=10, seed=5), p.objectives, p.d, 4)
    b = nsga2_run(GAConfig(generations=10, seed=5), p.objectives, p.d, 4)
    assert np.array_equal(a.population, b.population)


def test_environmental_selection_protects_old_front():
    # six mutually non-dominated points; keep 3; old front was point 0 alone
    F = np.array([[0, 10], [1, 9], [2, 8], [3, 7], [10, 0], [5, 5]], dtype=float)
    keep = _environmental_selection(F, 3, np.array([2]))
    assert 2 in keep.tolist() and len(keep) == 3


@pytest.mark.parametrize("name", ["conflict2", "tri", "penta"])
def test_front_hypervolume_never_decreases(name):
    p = load_preset(name)
    res = nsga2_run(GAConfig(generations=30, seed=2), p.objectives, p.d, p.vocabulary.size)
    hv = res.hypervolume_history(p.reference_point)
    assert np.all(np.diff(hv) >= 0)


def test_random_search_budget():
    p = load_preset("conflict2")
    front = random_search(p.objectives, p.d, 4, 101, seed=0)
    assert len(front) >= 1
    with pytest.raises(InvalidArgumentError):
        random_search(p.objectives, p.d, 4, 1)


def test_nsga2_beats_random_at_equal_budget():
    p = load_preset("conflict2")
    diffs = []
    for seed in range(50):
        res = nsga2_run(GAConfig(population=64, generations=100, seed=seed), p.objectives, p.d, 4)
        rs = random_search(p.objectives, p.d, 4, res.evaluations, seed)
        diffs.append(hypervolume(res.front.objectives, p.reference_point)
                     - hypervolume(rs.objectives, p.reference_point))
    assert stats.ttest_1samp(diffs, 0, alternative="greater").pvalue < 0.01


def test_equal_budget_report():
    p = load_preset("conflict2")
    cfg = RunConfig(T=20, importance=p.importance)
    assert guided_budget(cfg, 2, 4, 10) == 10 * 20 * 3 * 2
    rep = equal_budget_report(cfg, p.base, p.objectives, p.d, 10, p.reference_point)
    assert rep["budget"] == 1200
    assert rep["nsga2"]["evaluations"] <= rep["budget"]
    assert rep["random"]["evaluations"] == 1200
    assert rep["mogdfm"]["runs"] == 10
    for k in ("mogdfm", "nsga2", "random"):
        assert rep[k]["hypervolume"] > 0
