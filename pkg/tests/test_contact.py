import numpy as np
import pytest
from scipy import stats

from opre.contact import (ClosedSetSpec, ContactInstance, cppr_offsets, cppr_survival,
                          earliest_recovery, infected_at, instance_x_lists, line_graph,
                          line_survival, periodic_bernoulli, periodic_uniform, ppp,
                          run_contact, sample_closed_set, sample_instance, scaled,
                          survival_probe, verify_path)
from opre.stats import within_sigma


def test_periodic_sets():
    Y = sample_closed_set(periodic_uniform(0.25), (0, 5), 1)
    assert Y.points.tolist() == [0.5, 2.5, 4.5]
    Y = sample_closed_set(periodic_bernoulli(0.5, B=1), (0, 6), 1)
    assert Y.points.tolist() == [1.0, 3.0, 5.0]
    Y = sample_closed_set(scaled(3.0, periodic_bernoulli(0.5, B=0)), (0, 12), 1)
    assert Y.points.tolist() == [0.0, 6.0, 12.0]


def test_closed_set_validation():
    with pytest.raises(ValueError):
        ppp(-1.0)
    with pytest.raises(ValueError):
        ClosedSetSpec("nonsense")
    with pytest.raises(ValueError):
        periodic_bernoulli(1.5)


def test_ppp_count_and_uniformity():
    rng = np.random.default_rng(8)
    counts, pts = [], []
    for _ in range(4000):
        Y = sample_closed_set(ppp(2.0), (0.0, 10.0), rng)
        counts.append(len(Y.points))
        pts.extend(Y.points)
    counts = np.array(counts)
    assert abs(counts.mean() - 20.0) < 3 * np.sqrt(20.0 / len(counts))
    assert stats.kstest(np.array(pts) / 10.0, "uniform").pvalue > 1e-3


def test_earliest_recovery():
    Y = sample_closed_set(periodic_uniform(0.25), (0, 5), 1)
    assert earliest_recovery(Y, 0.0) == 0.5
    assert earliest_recovery(Y, 0.5) == 0.0
    assert earliest_recovery(Y, 1.0) == 1.5
    assert earliest_recovery(Y, 4.75) is None
    with pytest.raises(ValueError):
        earliest_recovery(Y, 6.0)


def _two_vertex(y0, y1, x=(0.5,), T=3.0):
    V, E = line_graph(2)
    return ContactInstance(V, E, {(0, 1): list(x)}, {0: list(y0), 1: list(y1)}, [0], T)


def test_hand_traces():
    inst = _two_vertex([2.0], [0.3])
    tr = run_contact(inst)
    assert [(t, v) for t, v, *_ in tr.events] == [(0.0, 0), (0.5, 1)]
    assert tr.intervals[1] == [(0.5, np.inf)]
    assert tr.infected_at_T == [1]
    assert infected_at(tr, inst, 1.0) == [0, 1]
    assert infected_at(tr, inst, 2.5) == [1]
    verts, times = tr.certificate(1)
    assert verts == [0, 1] and times == [0.5]
    assert verify_path(inst, verts, times, 2.5)
    assert not verify_path(inst, verts, [0.6], 2.5)
    assert not verify_path(inst, verts, times, 0.2)

    tr = run_contact(_two_vertex([0.2], [5.0]))
    assert [v for _, v, *_ in tr.events] == [0]
    assert tr.infected_at_T == []


def test_contact_at_recovery_time_is_lost():
    tr = run_contact(_two_vertex([2.0], [0.5]))
    assert [v for _, v, *_ in tr.events] == [0]
    tr = run_contact(_two_vertex([0.5], [9.0]))
    assert [v for _, v, *_ in tr.events] == [0]


def test_equal_time_chain():
    V, E = line_graph(3)
    inst = ContactInstance(V, E, {(0, 1): [1.0], (1, 2): [1.0]}, {0: [5.0]}, [0], 2.0)
    tr = run_contact(inst)
    assert sorted(v for t, v, *_ in tr.events if t == 1.0) == [1, 2]


def test_certificates_verify():
    for seed in range(30):
        inst = sample_instance("line", 6, ppp(1.5), ppp(0.4), 8.0, seed)
        tr = run_contact(inst)
        for k, (t, v, *_rest) in enumerate(tr.events):
            verts, times = tr.certificate(k)
            assert verts[-1] == v
            assert verify_path(inst, verts, times, t)


def test_window_search_matches_sweep():
    for seed in range(300):
        inst = sample_instance("line", 8, ppp(1.2), ppp(0.5), 6.0, seed)
        Y = [inst.Y[v] for v in inst.vertices]
        fast = line_survival(Y, inst.T, 0, X_lists=instance_x_lists(inst))
        assert fast == survival_probe(inst)


def test_window_search_poisson_mode_law():
    # random mode and explicit Poisson contacts give the same survival law
    n, T, lam, reps = 12, 10.0, 1.5, 1500
    rng = np.random.default_rng(21)
    a = 0
    for _ in range(reps):
        off = cppr_offsets("uni", n, rng)
        Y = [o + 2.0 * np.arange(0, int(T // 2) + 2) for o in off]
        Y = [y[y <= T] for y in Y]
        E = rng.exponential(1.0, size=(n, 2, int(T // 2) + 3, 2))
        a += line_survival(Y, T, 0, lam, E)
    b = 0
    for _ in range(reps):
        off = cppr_offsets("uni", n, rng)
        Y = [o + 2.0 * np.arange(0, int(T // 2) + 2) for o in off]
        Y = [y[y <= T] for y in Y]
        X = [np.sort(rng.uniform(0, T, rng.poisson(lam * T))) for _ in range(2 * n)]
        b += line_survival(Y, T, 0, X_lists=X)
    table = [[a, reps - a], [b, reps - b]]
    assert stats.chi2_contingency(table).pvalue > 1e-3


def test_cppr_offsets_fix_origin_phase():
    rng = np.random.default_rng(2)
    for _ in range(50):
        assert cppr_offsets("uni", 5, rng)[0] == pytest.approx(1.0)
        assert cppr_offsets("ber", 5, rng, q=0.3)[0] == 1.0
    B = np.array([cppr_offsets("ber", 2, rng, q=0.3)[1] for _ in range(20000)])
    # B_1 agrees with B_0 with probability q^2 + (1-q)^2
    assert within_sigma(int((B == 1).sum()), len(B), 0.3 ** 2 + 0.7 ** 2)
    with pytest.raises(ValueError):
        cppr_offsets("other", 3, rng)


def test_cppr_survival_monotone():
    for seed in range(40):
        s = cppr_survival("uni", [0.5, 2.0, 10.0], 30, 40.0, seed)
        assert s == sorted(s)
    assert cppr_survival("uni", [0.01], 20, 40.0, 1) == [False]
    assert cppr_survival("ber", [200.0], 60, 40.0, 1) == [True]


def test_no_contacts_and_no_recoveries():
    V, E = line_graph(3)
    inst = ContactInstance(V, E, {}, {0: [1.5], 1: [0.5]}, [0, 1], 3.0)
    tr = run_contact(inst)
    assert infected_at(tr, inst, 0.2) == [0, 1]
    assert infected_at(tr, inst, 1.0) == [0]
    assert tr.infected_at_T == []
    inst = ContactInstance(V, E, {}, {}, [2], 3.0)
    assert survival_probe(inst)
