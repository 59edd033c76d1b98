import math

import numpy as np
import pytest
from scipy import stats

from opre import kernels as K
from opre.environment import Dist, StretchEnvironment, StretchSpec, embedding_from_points
from opre.percolation import (InsufficientColumns, LatticeWindow, OpenConfiguration, Rectangle,
                              all_open, crossing, draw_uniforms, dump_config, load_config,
                              reach, reduce_rectangle, sample_opre, sample_temporal,
                              survival_depth, temporal_survival_depth, valid_masks)
from opre.stats import within_sigma


def _paths_from(cfg, start):
    """Every open directed path from ``start`` (brute force)."""
    out = []
    if not cfg.V[start]:
        return out
    stack = [[start]]
    while stack:
        p = stack.pop()
        out.append(p)
        t, c = p[-1]
        if t == cfg.T:
            continue
        if c + 1 < cfg.W and cfg.U[t, c] and cfg.V[t + 1, c + 1]:
            stack.append(p + [(t + 1, c + 1)])
        if c >= 1 and cfg.D[t, c] and cfg.V[t + 1, c - 1]:
            stack.append(p + [(t + 1, c - 1)])
    return out


def _random_config(rng, T, W, parity=0, pv=0.8, pe=0.7):
    return OpenConfiguration(rng.random((T + 1, W)) < pv, rng.random((T, W)) < pe,
                             rng.random((T, W)) < pe, parity)


def _crossing_oracle(cfg, r0, kind):
    starts = [(t, c) for t in range(r0.t0, r0.t1 + 1) for c in range(r0.c0, r0.c1 + 1)]
    for s in starts:
        for p in _paths_from(cfg, s):
            cols = [c for _, c in p]
            if min(cols) < r0.c0 or max(cols) > r0.c1 or p[-1][0] > r0.t1:
                continue
            (st, sc), (et, ec) = p[0], p[-1]
            if kind == "LRC" and sc == r0.c0 and ec == r0.c1:
                return True
            if kind == "RLC" and sc == r0.c1 and ec == r0.c0:
                return True
            if kind == "BTC" and st == r0.t0 and et == r0.t1:
                return True
    return False


def test_window_and_masks():
    v, u, d = valid_masks(2, 3, 0)
    assert v.tolist() == [[True, False, True], [False, True, False], [True, False, True]]
    assert not u[:, -1].any() and not d[:, 0].any()
    with pytest.raises(ValueError):
        LatticeWindow(0, 5)


def test_all_open_fan_out():
    r = reach(all_open(4, 6), [(0, 0)], depth=2)
    assert r.shape == (3, 6)
    assert {c for c in range(6) if r[2, c]} == {0, 2}


def test_closed_vertices_stop_everything():
    cfg = OpenConfiguration(np.zeros((4, 5), bool), np.ones((3, 5), bool), np.ones((3, 5), bool))
    assert not reach(cfg, [(0, 0)]).any()
    assert survival_depth(cfg, (0, 0)) == -1


def test_survival_depth_examples():
    assert survival_depth(all_open(7, 9), (0, 4)) == 7
    cfg = all_open(7, 9)
    cfg.U[0, :] = False
    cfg.D[0, :] = False
    assert survival_depth(cfg, (0, 4)) == 0


def test_reach_matches_path_enumeration():
    rng = np.random.default_rng(5)
    for _ in range(40):
        cfg = _random_config(rng, 4, 5, int(rng.integers(2)))
        for c in range(5):
            src = (0, c)
            if (c + cfg.parity) % 2:
                continue
            want = np.zeros((5, 5), bool)
            for p in _paths_from(cfg, src):
                want[p[-1]] = True
            assert np.array_equal(reach(cfg, [src]), want)


def test_reduce_rectangle_examples():
    r = reduce_rectangle([2, 5, 7, 11], Rectangle(0, 4, 0, 12))
    assert (r.a0, r.b0, r.c0, r.c1) == (2, 7, 0, 2)
    r = reduce_rectangle([0, 2], Rectangle(0, 4, 0, 3))
    assert (r.a0, r.b0) == (0, 0)
    with pytest.raises(InsufficientColumns):
        reduce_rectangle([4], Rectangle(0, 4, 0, 5))
    emb = embedding_from_points([2, 5, 7, 11])
    assert reduce_rectangle(emb, Rectangle(0, 4, 0, 12)).b0 == 7


def test_crossing_trivial_cases():
    cfg = all_open(6, 8)
    rect = Rectangle(0, 6, 0, 5)  # reduced to columns 0..4, staircase fits in 6 layers
    for kind in ("LRC", "RLC", "BTC"):
        assert crossing(cfg, None, rect, kind)
    shut = OpenConfiguration(np.zeros((7, 8), bool), cfg.U, cfg.D)
    for kind in ("LRC", "RLC", "BTC"):
        assert not crossing(shut, None, rect, kind)
    with pytest.raises(ValueError):
        crossing(cfg, None, rect, "XYZ")


def test_crossings_match_path_enumeration():
    rng = np.random.default_rng(6)
    for _ in range(30):
        T, W = int(rng.integers(2, 6)), int(rng.integers(3, 7))
        cfg = _random_config(rng, T, W, int(rng.integers(2)), 0.85, 0.75)
        t0 = int(rng.integers(0, T))
        t1 = int(rng.integers(t0 + 1, T + 1))
        a = int(rng.integers(0, W - 1))
        b = int(rng.integers(a + 1, W))
        rect = Rectangle(t0, t1, a, b)
        r0 = reduce_rectangle(np.arange(W), rect)
        for kind in ("LRC", "RLC", "BTC"):
            assert bool(crossing(cfg, None, rect, kind)) == _crossing_oracle(cfg, r0, kind)


def test_crossing_uses_renewal_positions():
    cfg = all_open(4, 4, positions=[0, 3, 5, 9])
    assert crossing(cfg, None, Rectangle(0, 4, 0, 9), "LRC")
    with pytest.raises(InsufficientColumns):
        crossing(cfg, None, Rectangle(0, 4, 1, 4), "LRC")


def test_sample_opre_constant_kernels():
    env = StretchEnvironment(np.ones(101), np.ones(100))
    w = LatticeWindow(20, 100)
    cfg = sample_opre(env, K.constant(1.0), K.constant(1.0), w, seed=1)
    vm, um, dm = valid_masks(20, 101, 0)
    assert np.array_equal(cfg.V, vm) and np.array_equal(cfg.U, um) and np.array_equal(cfg.D, dm)
    big = LatticeWindow(999, 1999)
    env = StretchEnvironment(np.ones(2000), np.ones(1999))
    cfg = sample_opre(env, K.constant(0.5), K.constant(0.5), big, seed=2)
    n = int(valid_masks(999, 2000, 0)[0].sum())
    assert n >= 10 ** 6
    assert within_sigma(int(cfg.V.sum()), n, 0.5)
    cfg = sample_opre(env, K.power(math.log(2)), K.power(math.log(2)), big, seed=3)
    assert within_sigma(int(cfg.V.sum()), n, 0.5)


def test_shared_uniforms_nest_in_lambda():
    rng = np.random.default_rng(4)
    env = StretchEnvironment(rng.exponential(1, 60), rng.exponential(1, 59))
    w = LatticeWindow(30, 59)
    lo = sample_opre(env, K.power(0.8), K.power(0.8), w, seed=9)
    hi = sample_opre(env, K.power(1.6), K.power(1.6), w, seed=9)
    for a, b in ((lo.V, hi.V), (lo.U, hi.U), (lo.D, hi.D)):
        assert not np.any(a & ~b)
    assert lo.provenance["seed"] == 9


def test_embedded_window_parity_and_errors():
    emb = embedding_from_points([0, 3, 4, 8], B=1)
    w = LatticeWindow(3, 3, "embedded")
    cfg = sample_opre(emb, K.constant(1.0), K.constant(1.0), w, seed=0)
    assert cfg.parity == 1 and not cfg.V[0, 0] and cfg.V[0, 1]
    assert cfg.positions.tolist() == [0, 3, 4, 8]
    with pytest.raises(TypeError):
        sample_opre(StretchEnvironment(np.ones(4), np.ones(3)), K.constant(1.0),
                    K.constant(1.0), w, seed=0)
    with pytest.raises(ValueError):
        sample_opre(emb, K.constant(1.0), K.constant(1.0), LatticeWindow(3, 6, "embedded"), 0)


def test_temporal_examples():
    spec = StretchSpec(Dist("constant", {"value": 0.0}), Dist("constant", {"value": 0.0}))
    w = LatticeWindow(10, 20)
    cfg = sample_temporal(0.5, spec, w, seed=1)
    assert np.array_equal(cfg.U, valid_masks(10, 21, 0)[1])
    nu = np.ones(10)
    nu[0] = np.inf
    cfg = sample_temporal(0.5, spec, w, seed=1, nu=nu)
    assert not cfg.U[0].any() and not cfg.D[0].any()
    big = LatticeWindow(1000, 2009)
    cfg = sample_temporal(0.5, spec, big, seed=2, nu=np.ones(1000))
    n = int(valid_masks(1000, 2010, 0)[1].sum())
    assert n >= 10 ** 6
    assert within_sigma(int(cfg.U.sum()), n, 0.5)


def test_streaming_temporal_matches_window_sweep():
    # Same law for the survival depth: compare the two depth distributions.
    T, p = 40, 0.62
    nu = np.ones(T)
    spec = StretchSpec(Dist("constant", {"value": 0.0}), Dist("constant", {"value": 1.0}))
    w = LatticeWindow(T, 2 * T)
    a = [survival_depth(sample_temporal(p, spec, w, seed=s, nu=nu), (0, T)) for s in range(1500)]
    b = [temporal_survival_depth(p, nu, 10 ** 6 + s) for s in range(1500)]
    bins = [0, 1, 2, 4, 8, 16, 40, 41]
    ha = np.histogram(a, bins)[0]
    hb = np.histogram(b, bins)[0]
    keep = (ha + hb) > 0
    assert stats.chi2_contingency(np.vstack([ha[keep], hb[keep]]))[1] > 1e-3


def test_streaming_closed_layer():
    nu = np.ones(5)
    nu[2] = np.inf
    assert temporal_survival_depth(0.9, nu, 1) <= 2


def test_dump_round_trip():
    rng = np.random.default_rng(8)
    cfg = _random_config(rng, 5, 7, parity=1)
    cfg = OpenConfiguration(cfg.V, cfg.U, cfg.D, 1, positions=[0, 2, 3, 7, 8, 10, 15])
    data = dump_config(cfg)
    assert data[:4] == b"OPRE"
    back = load_config(data)
    assert back.parity == 1 and back.positions.tolist() == cfg.positions.tolist()
    for x, y in ((cfg.V, back.V), (cfg.U, back.U), (cfg.D, back.D)):
        assert np.array_equal(x, y)
    with pytest.raises(ValueError):
        load_config(b"XXXX" + data[4:])


def test_batched_configurations():
    w = LatticeWindow(6, 8)
    env = StretchEnvironment(np.ones(9), np.ones(8))
    uni = draw_uniforms(w, 3, reps=5)
    cfg = sample_opre(env, K.constant(0.7), K.constant(0.7), w, 3, uniforms=uni)
    assert cfg.batch_shape == (5,)
    depths = survival_depth(cfg, (0, 4))
    for i in range(5):
        assert depths[i] == survival_depth(cfg[i], (0, 4))
