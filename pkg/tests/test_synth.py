import numpy as np
import pytest

from metameval.core import ScoreTable
from metameval.metaeval import acc_eq, pairwise_counts
from metameval.synth import GOLD_ID, SynthConfig, discretize, evaluator_id, gen_dataset


def values(table):
    return [r[2] for r in table.rows]


def test_deterministic():
    a = gen_dataset(SynthConfig(20, 4, seed=5))
    b = gen_dataset(SynthConfig(20, 4, seed=5))
    assert a == b


def test_seeds_differ():
    a = gen_dataset(SynthConfig(20, 4, seed=5))
    b = gen_dataset(SynthConfig(20, 4, seed=6))
    assert values(a.table(GOLD_ID)) != values(b.table(GOLD_ID))


def test_layout_and_names():
    ds = gen_dataset(SynthConfig(3, 2, noise_sd=(0.5, 2.0), bins=(0, 7), seed=1))
    assert ds.systems == ("sys00", "sys01")
    assert ds.segments == ("seg0000", "seg0001", "seg0002")
    assert set(ds.evaluators) == {"gold", "noise0.5", "noise0.5-bins7", "noise2", "noise2-bins7"}
    assert ds.testset_id == "synth-seed1"
    for e in ds.evaluators:
        assert ds.fully_covered_segments(e) == set(ds.segments)


def test_zero_noise_is_gold():
    ds = gen_dataset(SynthConfig(10, 3, noise_sd=(0.0,), seed=2))
    assert values(ds.table("noise0")) == values(ds.table(GOLD_ID))


def test_two_systems_one_segment():
    ds = gen_dataset(SynthConfig(1, 2, noise_sd=(0.0,), seed=0))
    c = pairwise_counts(ds.table(GOLD_ID), ds.table("noise0"), 0, 0, ds.segments, ds.systems)
    assert c.total == 1
    assert acc_eq(c) == 1.0


def test_binned_variant_shares_noise():
    ds = gen_dataset(SynthConfig(50, 5, noise_sd=(1.0,), bins=(0, 4), seed=3))
    cont = np.array(values(ds.table("noise1")))
    binned = np.array(values(ds.table("noise1-bins4")))
    assert len(np.unique(binned)) <= 4
    # binning never inverts the order of the shared continuous scores
    order = np.argsort(cont, kind="stable")
    assert (np.diff(binned[order]) >= 0).all()


def test_gold_bins():
    ds = gen_dataset(SynthConfig(30, 4, gold_bins=3, seed=0))
    assert len(set(values(ds.table(GOLD_ID)))) <= 3


@pytest.mark.parametrize("kwargs", [
    dict(n_segments=0, n_systems=2),
    dict(n_segments=5, n_systems=1),
    dict(n_segments=5, n_systems=2, noise_sd=(-1.0,)),
    dict(n_segments=5, n_systems=2, bins=(1,)),
    dict(n_segments=5, n_systems=2, gold_bins=-2),
])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SynthConfig(**kwargs)


def test_evaluator_id():
    assert evaluator_id(0.5, 0) == "noise0.5"
    assert evaluator_id(1.0, 7) == "noise1-bins7"


def test_discretize_example():
    t = ScoreTable("e", (("a", "s", 0.0), ("b", "s", 0.4), ("c", "s", 1.0)))
    assert values(discretize(t, 2)) == [0.25, 0.25, 0.75]


def test_discretize_constant_and_empty():
    t = ScoreTable("e", (("a", "s", 2.0), ("b", "s", 2.0)))
    assert discretize(t, 5) == t
    assert discretize(ScoreTable("e", ()), 3).rows == ()
    with pytest.raises(ValueError):
        discretize(t, 1)


def test_discretize_never_inverts():
    rng = np.random.default_rng(0)
    x = rng.normal(size=200)
    t = ScoreTable("e", tuple((f"s{i}", "g", float(v)) for i, v in enumerate(x)))
    d = np.array(values(discretize(t, 7)))
    assert len(np.unique(d)) <= 7
    assert (np.diff(d[np.argsort(x)]) >= 0).all()


def test_less_noise_wins_most_of_the_time():
    wins = 0
    for seed in range(100):
        ds = gen_dataset(SynthConfig(30, 5, noise_sd=(0.1, 1.0), seed=seed))
        acc = {
            e: acc_eq(pairwise_counts(ds.table(GOLD_ID), ds.table(e), 0, 0, ds.segments, ds.systems))
            for e in ("noise0.1", "noise1")
        }
        wins += acc["noise0.1"] > acc["noise1"]
    assert wins >= 95
