import math

import numpy as np
import pytest

from opre import kernels
from opre.couplings import (EdgeGeometry, chain_times, corrupt_geometry, couple_cppr_bernoulli,
                            couple_cppr_uniform, couple_d2, cpre_edge_probability, cpre_stretch,
                            distribution_tests, dominate, geometric_pmf, good_sites,
                            normalise_phases, replay_all, run_lengths, sample_coupled,
                            uniform_stretches, validate_coupling)
from opre.contact import ne_quadrant
from opre.stats import chi2_pvalue, within_sigma

KINDS = ("d2_block", "cppr_uni", "cppr_ber", "cpre")


def test_run_lengths():
    assert run_lengths([0, 0, 1, 0, 1, 1]).tolist() == [3, 2, 2]
    assert run_lengths([1, 1, 1]).tolist() == []
    with pytest.raises(ValueError):
        run_lengths([])


def test_uniform_stretch_example():
    nu, S = uniform_stretches([0.2, 0.9])
    assert S[0] == pytest.approx(0.6)
    assert nu[0] == pytest.approx(0.5108, abs=1e-4)
    with pytest.raises(ValueError):
        uniform_stretches([0.3, 0.3])
    assert normalise_phases([0.7, 0.1, 0.2]) == pytest.approx([0.5, 0.9, 0.0])


def test_uniform_edge_interval_length_is_S():
    rng = np.random.default_rng(5)
    for _ in range(50):
        ci = couple_cppr_uniform(rng.random(7), 2.0, layers=5)
        S = ci.extras["S"]
        for ((j, i), (_, k)), g in ci.geometry.edge.items():
            lo, hi = g.intervals[0]
            assert hi - lo == pytest.approx(S[min(i, k)], abs=1e-12)
            # exit half of the source window, entry half of the target
            s_src = ci.geometry.vertex[(j, i)][1][0]
            s_dst = ci.geometry.vertex[(j + 1, k)][1][0]
            assert s_src + 1 <= lo and hi <= s_src + 2
            assert s_dst <= lo and hi <= s_dst + 1


def test_bernoulli_kernel_identity():
    fam = kernels.cppr_bernoulli(2.5)
    assert kernels.eval_kernel(fam, 9.0) == pytest.approx(kernels.poisson_tail(2.5, 3), rel=1e-12)


def test_bernoulli_coupling_bookkeeping():
    ci = couple_cppr_bernoulli([0, 0, 1, 0, 1, 1], 0.4, 3.0, seed=1)
    assert ci.extras["flipped"]
    assert ci.extras["N"].tolist() == [3, 2, 2]
    assert ci.extras["L"].tolist() == [2, 1, 1]
    assert ci.extras["starts"].tolist() == [0, 2, 3, 4]
    assert np.all(ci.extras["K"] >= ci.extras["L"])
    assert ci.env.nu.tolist() == (ci.extras["K"] ** 2).astype(float).tolist()


def test_dominate_marginal_and_order():
    rng = np.random.default_rng(12)
    q, n = 0.3, 40000
    r = max(q, 1 - q)
    rho = np.where(rng.random(n) < 0.5, q, 1 - q)
    L = rng.geometric(1 - rho)  # P(L >= l + 1) = rho**l
    K = dominate(L, rho, r, rng.random(n))
    assert np.all(K >= L)
    kmax = 25
    counts = np.bincount(np.minimum(K, kmax), minlength=kmax + 1)[1:]
    probs = geometric_pmf(1 - r, kmax)
    probs[-1] += 1 - probs.sum()
    assert chi2_pvalue(counts, probs) > 1e-3
    with pytest.raises(ValueError):
        dominate([1], [0.8], 0.5, [0.5])


def test_d2_block_example():
    vertices, edges = ne_quadrant(2)
    Y = {v: [] for v in vertices}
    X = {e: [0.5] for e in edges}
    Y[(1, 0)] = [0.5]  # scaled 1.0, inside [0, 2] for lattice (1, 1)
    ci = couple_d2(Y, X, 1.0, 0.5, 1)
    J = 1
    assert not ci.config.V[1, 1 + J]
    assert ci.config.V[1, -1 + J] and ci.config.V[0, J]
    assert ci.config.U[0, J] and ci.config.D[0, J]
    X[((0, 0), (1, 0))] = [1.5]  # outside [0, 1]
    ci = couple_d2(Y, X, 1.0, 0.5, 1)
    assert not ci.config.U[0, J]
    with pytest.raises(ValueError):
        couple_d2(Y, X, 0.0, 0.5, 1)


def test_cpre_edge_probability():
    assert cpre_edge_probability(1, [], 1) == pytest.approx(0.632121, abs=1e-6)
    assert cpre_stretch(3, [0.2, 0.5]) == pytest.approx(3 * math.log(3) + 0.7)


def test_cpre_edge_probability_matches_chain_simulation():
    N, deltas, L = 3, [0.3, 0.5], 2
    p = cpre_edge_probability(N, deltas, L)
    g = EdgeGeometry(tuple(range(N + 1)), tuple((float(k), k + 1.0) for k in range(L)),
                     True, True)
    rng = np.random.default_rng(17)
    n, hits = 20000, 0
    for _ in range(n):
        X = {(v, v + 1): np.sort(rng.uniform(0, L, rng.poisson(L))) for v in range(N)}
        Y = {v + 1: np.sort(rng.uniform(0, L, rng.poisson(d * L))) for v, d in enumerate(deltas)}
        hits += chain_times(X, g, 0.0, Y) is not None
    assert within_sigma(hits, n, p, 4)


def test_chain_times_ordering():
    g = EdgeGeometry((0, 1, 2), ((0.0, 1.0), (1.0, 2.0)))
    X = {(0, 1): np.array([0.6, 1.2]), (1, 2): np.array([0.3, 1.5])}
    assert chain_times(X, g) == [1.2, 1.5]
    g = EdgeGeometry((0, 1, 2), ((0.0, 1.0),))
    assert chain_times(X, g) is None
    half = EdgeGeometry((0, 1), ((0.0, 0.6),), half_open=True)
    assert chain_times(X, half) is None
    assert chain_times(X, EdgeGeometry((0, 1), ((0.0, 0.6),))) == [0.6]


def test_good_sites_gaps():
    rng = np.random.default_rng(3)
    g = np.diff(good_sites(0.4, 20001, rng))
    counts = np.bincount(g)[1:]
    assert chi2_pvalue(counts, geometric_pmf(0.4, len(counts))) > 1e-3


@pytest.mark.parametrize("kind", KINDS)
def test_replay_all_paths(kind):
    ok = total = 0
    for seed in range(40):
        ci = sample_coupled(kind, {}, seed)
        a, b = replay_all(ci, ci.extras.get("dominated", ci.config))
        ok += a
        total += b
    assert total > 0 and ok == total


@pytest.mark.parametrize("kind", ("d2_block", "cppr_uni", "cppr_ber"))
def test_corrupted_geometry_is_caught(kind):
    bad = total = 0
    for seed in range(40):
        ci = sample_coupled(kind, {}, seed)
        a, b = replay_all(ci, geometry=corrupt_geometry(ci.geometry, 0.5))
        bad += b - a
        total += b
    assert bad > 0


@pytest.mark.parametrize("kind", KINDS)
def test_validate_coupling(kind):
    rep = validate_coupling(sample_coupled(kind, {}, 0), 20, 7, n_dist=5000)
    assert rep.ok
    assert all(p > 1e-3 for p in rep.tests.values())


def test_distribution_tests_detect_wrong_law():
    rng = np.random.default_rng(0)
    # cpre gaps with the wrong p are rejected
    g = np.diff(good_sites(0.6, 5001, rng))
    counts = np.bincount(g)[1:]
    assert chi2_pvalue(counts, geometric_pmf(0.4, len(counts))) < 1e-6
    assert distribution_tests("cpre", {"p": 0.4}, 5000, rng)["gaps_chi2"] > 1e-4
