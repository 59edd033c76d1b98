import math

import numpy as np
import pytest
from scipy import stats

from opre.environment import (Dist, StretchEnvironment, StretchSpec, build_embedding,
                              embedding_from_points, gap_lookup, interarrival_pmf,
                              parse_chi_mode, sample_stretches, stationary_delay_pmf)
from opre.stats import discrete_ks_pvalue, within_sigma

EXP1 = Dist("exponential", {"rate": 1.0})


def test_constant_environment():
    z = Dist("constant", {"value": 0.0})
    env = sample_stretches(StretchSpec(z, z), 3, seed=11)
    assert env.xi.tolist() == [0, 0, 0]
    assert env.nu.tolist() == [0, 0]


def test_exponential_mean():
    env = sample_stretches(StretchSpec(EXP1, EXP1), 10 ** 5, seed=1)
    # 0.99..1.01 is a 3.16-sigma interval for n = 1e5
    assert 0.99 <= env.xi.mean() <= 1.01


def test_squared_geometric_atom_at_one():
    d = Dist("squared_geometric", {"q": 0.7})
    env = sample_stretches(StretchSpec(d, d), 10 ** 5 + 1, seed=2)
    assert within_sigma(int(np.sum(env.nu == 1)), 10 ** 5, 0.7)
    assert set(np.unique(env.nu[:50])) <= {k * k for k in range(1, 40)}


def test_moments_and_heaviness():
    assert EXP1.moment(1.5) == pytest.approx(math.gamma(2.5))
    assert Dist("pareto", {"shape": 1.2, "scale": 1.0}).heavy(0.5)
    assert not Dist("pareto", {"shape": 3.0, "scale": 1.0}).heavy(0.5)
    assert not Dist("stretched_exp", {"a": 0.5}).heavy(0.5)
    assert Dist("geometric", {"q": 0.5}).moment(1) == pytest.approx(2.0)
    spec = StretchSpec(EXP1, Dist("pareto", {"shape": 1.1, "scale": 1.0}))
    assert spec.heavy
    assert StretchSpec.from_dict(spec.to_dict()) == spec


def test_stretched_exponential_tail():
    x = Dist("stretched_exp", {"a": 0.5}).sample(20000, np.random.default_rng(3))
    p = stats.kstest(x, lambda s: 1 - np.exp(-np.sqrt(np.maximum(s, 0)))).pvalue
    assert p > 1e-3


def test_invalid_distributions():
    with pytest.raises(ValueError):
        Dist("exponential", {"rate": -1.0})
    with pytest.raises(ValueError):
        Dist("stretched_exp", {"a": 1.5})
    with pytest.raises(ValueError):
        Dist("weird", {})
    with pytest.raises(ValueError):
        StretchEnvironment(np.zeros(3), np.zeros(3))


def test_embedding_ceiling_rule():
    emb = build_embedding(StretchEnvironment([1, 2], [3]), parity_seed=0)
    assert emb.points.tolist() == [0, 4]
    emb = build_embedding(StretchEnvironment([0.2, 0.2], [0.5]), parity_seed=0)
    assert emb.points.tolist() == [0, 2]
    assert emb.B in (0, 1)


def test_zero_gap_rejected():
    with pytest.raises(ValueError):
        build_embedding(StretchEnvironment([0, 0], [0]), parity_seed=0)


def test_gap_lookup():
    emb = build_embedding(StretchEnvironment([1, 2], [3]), parity_seed=0)
    assert gap_lookup(emb, 0) == (1, 3)
    assert gap_lookup(emb, 1) == (2, None)
    with pytest.raises(IndexError):
        gap_lookup(emb, 2)
    assert emb.column_of(4) == 1
    with pytest.raises(KeyError):
        emb.column_of(3)


def test_chi_modes():
    assert parse_chi_mode("zero") == 0
    assert parse_chi_mode(("burn_in", 5)) == 5
    assert parse_chi_mode("burn_in:7") == 7
    with pytest.raises(ValueError):
        parse_chi_mode("later")


def test_burn_in_delay_is_stationary():
    spec = StretchSpec(EXP1, EXP1)
    pmf = interarrival_pmf(spec, 200)
    delay = stationary_delay_pmf(pmf)
    rng = np.random.default_rng(9)
    chis = []
    for _ in range(1500):
        env = sample_stretches(spec, 10 ** 4 + 2, rng.integers(2 ** 63))
        chis.append(build_embedding(env, rng.integers(2 ** 63), ("burn_in", 10 ** 4)).chi)
    chis = np.array(chis)
    assert discrete_ks_pvalue(chis, delay, np.random.default_rng(10)) > 1e-3
    assert chis.mean() == pytest.approx(float(np.arange(201) @ delay), abs=0.15)


def test_integer_gap_pmf():
    pmf = interarrival_pmf(StretchSpec(Dist("constant", {"value": 1.0}),
                                       Dist("geometric", {"q": 0.5})), 80)
    assert pmf[1] == 0 and pmf[2] == pytest.approx(0.5) and pmf[3] == pytest.approx(0.25)
    d = stationary_delay_pmf(pmf)
    assert d.sum() == pytest.approx(1.0, abs=1e-3)


def test_embedding_from_points():
    emb = embedding_from_points([2, 5, 7, 11])
    assert emb.nu_gap.tolist() == [3, 2, 4]
    with pytest.raises(ValueError):
        embedding_from_points([3, 3])
