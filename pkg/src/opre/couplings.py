"""Couplings of contact processes to oriented percolation, with path replay.

Each coupling builds, from one realisation of recovery and contact times, a
bond-site configuration on the L2 lattice together with an explicit geometry
map: lattice vertex (j, i) -> (contact vertex, time box) and lattice edge ->
(chain of contact vertices, candidate time intervals).  Replay turns an open
lattice path into contact times through that map and checks the result with
``contact.verify_path``.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from . import contact as cp
from . import kernels
from .environment import Dist, StretchEnvironment
from .percolation import OpenConfiguration
from .seeding import rng_for
from .stats import chi2_pvalue, ks_pvalue


@dataclass(frozen=True)
class EdgeGeometry:
    chain: tuple  # contact vertices v_0 -> ... -> v_k
    intervals: tuple  # candidate (lo, hi) windows; all arrows inside one of them
    half_open: bool = False  # [lo, hi) instead of [lo, hi]
    quiet_mids: bool = False  # inner chain vertices must not recover in the window


@dataclass
class GeometryMap:
    vertex: dict  # (j, i) -> (contact vertex, (lo, hi))
    edge: dict  # ((j, i), (j', i')) -> EdgeGeometry
    origin: tuple = (0, 0)
    col_offset: int = 0  # configuration column of lattice coordinate i is i + col_offset


@dataclass
class CoupledInstance:
    kind: str
    env: StretchEnvironment
    vertex_kernel: kernels.ConnectionFamily
    edge_kernel: kernels.ConnectionFamily
    geometry: GeometryMap
    contact: cp.ContactInstance = None
    config: OpenConfiguration = None
    params: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)


def torus_distance(u, v):
    d = np.abs(np.asarray(u, float) - np.asarray(v, float)) % 1.0
    return np.minimum(d, 1.0 - d)


def _first_in(points, lo, hi, half_open):
    k = np.searchsorted(points, lo, side="left")
    if k < len(points) and (points[k] < hi or (not half_open and points[k] == hi)):
        return float(points[k])
    return None


def chain_times(X, geom, t_min=0.0, Y=None):
    """Earliest ordered contact times along ``geom.chain`` after t_min, or None.

    With ``quiet_mids`` set, windows where an inner chain vertex recovers in
    [lo, hi) are skipped; this needs the recovery sets ``Y``.
    """
    edges = list(zip(geom.chain, geom.chain[1:]))
    mids = geom.chain[1:-1]
    for lo, hi in geom.intervals:
        if geom.quiet_mids and any(np.any((Y[v] >= lo) & (Y[v] < hi)) for v in mids):
            continue
        t = max(lo, t_min)
        out = []
        for e in edges:
            x = _first_in(X.get(e, np.empty(0)), t, hi, geom.half_open)
            if x is None:
                break
            out.append(x)
            t = x
        else:
            return out
    return None


# -- block coupling on the north-east quadrant ------------------------------------

def _ne(j, i):
    return ((j + i) // 2, (j - i) // 2)


def couple_d2(Y, X, t, mu, layers):
    """Bond-site configuration from quadrant realisations.

    ``Y[(a, b)]`` are unscaled recovery points and ``X[e]`` contact points for
    the edges (a, b) -> (a+1, b) and (a, b) -> (a, b+1).  Lattice (j, i) is the
    quadrant vertex ((j+i)/2, (j-i)/2).  The vertex is open iff Y/mu avoids
    [(j-1)t, (j+1)t]; an edge out of layer j is open iff its contact set meets
    [jt, (j+1)t].  Realisations start at time 0, so the part of a box before 0
    is vacuous.
    """
    if t <= 0 or mu <= 0:
        raise ValueError("t and mu must be positive")
    J = int(layers)
    W = 2 * J + 1
    V = np.zeros((J + 1, W), bool)
    U = np.zeros((J, W), bool)
    D = np.zeros((J, W), bool)
    vmap, emap = {}, {}
    Ys = {}
    for j in range(J + 1):
        for i in range(-j, j + 1, 2):
            v = _ne(j, i)
            if v not in Y:
                raise ValueError(f"no recovery realisation for vertex {v}")
            Ys[v] = np.asarray(Y[v], float) / mu
            lo, hi = (j - 1) * t, (j + 1) * t
            V[j, i + J] = not np.any((Ys[v] >= lo) & (Ys[v] <= hi))
            vmap[(j, i)] = (v, (lo, hi))
            if j == J:
                continue
            for di, arr in ((1, U), (-1, D)):
                w = _ne(j + 1, i + di)
                e = (v, w)
                if e not in X:
                    raise ValueError(f"no contact realisation for edge {e}")
                pts = np.asarray(X[e], float)
                arr[j, i + J] = bool(np.any((pts >= j * t) & (pts <= (j + 1) * t)))
                emap[((j, i), (j + 1, i + di))] = EdgeGeometry((v, w), ((j * t, (j + 1) * t),))
    cfg = OpenConfiguration(V, U, D, parity=J % 2)
    vertices, edges = cp.ne_quadrant(J + 1)
    inst = cp.ContactInstance(
        vertices, edges, {e: np.sort(np.asarray(X.get(e, ()), float)) for e in edges},
        {v: np.sort(np.asarray(Y.get(v, ()), float)) / mu for v in vertices}, [(0, 0)],
        (J + 1) * t, "ne_quadrant")
    geom = GeometryMap(vmap, emap, (0, 0), J)
    env = StretchEnvironment(np.zeros(W), np.zeros(W - 1))
    return CoupledInstance("d2_block", env, kernels.constant(1.0), kernels.constant(1.0), geom,
                           inst, cfg, {"t": t, "mu": mu, "layers": J})


def sample_d2(layers, t, mu, x_rate, y_rate, seed):
    rng = np.random.default_rng(seed)
    vertices, edges = cp.ne_quadrant(layers + 1)
    T = (layers + 1) * t
    Y = {v: cp._ppp(y_rate, 0.0, T * mu, rng) for v in vertices}
    X = {e: cp._ppp(x_rate, 0.0, T, rng) for e in edges}
    ci = couple_d2(Y, X, t, mu, layers)
    ci.params.update(x_rate=x_rate, y_rate=y_rate)
    return ci


# -- CPPR with uniform phases ------------------------------------------------

def normalise_phases(U):
    """U_i -> U_i - U_0 + 1/2 (mod 1): the origin then recovers at odd times."""
    U = np.asarray(U, float)
    if np.any((U < 0) | (U >= 1)):
        raise ValueError("phases must lie in [0, 1)")
    return (U - U[0] + 0.5) % 1.0


def uniform_stretches(U):
    """nu_i = -log S_i with S_i = 2 d_T(U_i, U_{i+1})."""
    U = np.asarray(U, float)
    S = 2.0 * torus_distance(U[:-1], U[1:])
    if np.any(S == 0):
        raise ValueError("two equal phases give S = 0; the stretch would be infinite")
    return -np.log(S), S


def _window_bases(offsets):
    # Start of the window of vertex i met on the diagonal j = i: the window of
    # i+1 that starts inside the window of i.
    base = [offsets[0] - 2.0]
    for o in offsets[1:]:
        b = base[-1]
        s = o + 2.0 * math.floor((b - o) / 2.0) + 2.0
        if s <= b:
            s += 2.0
        base.append(s)
    return base


def _half_overlap(s_src, s_dst):
    # exit half of (s_src, s_src + 2) meets entry half of (s_dst, s_dst + 2)
    return (max(s_src + 1.0, s_dst), min(s_src + 2.0, s_dst + 1.0))


def couple_cppr_uniform(U, lam, X=None, layers=None):
    """OPRE with xi = 0 and nu = -log S from CPPR phases; edges need one contact.

    Vertex i recovers on 2(Z + U_i).  Lattice (j, i) is the recovery window of
    i that starts at base_i + j - i; infection enters a window in its first
    half and leaves in its second.  The edge to a neighbour uses the overlap
    of the exit half with the neighbour's entry half, whose length is S.
    """
    U = normalise_phases(U)
    nu, S = uniform_stretches(U)
    n = len(U)
    env = StretchEnvironment(np.zeros(n), nu)
    offsets = 2.0 * U
    base = _window_bases(offsets)
    J = n if layers is None else int(layers)
    vmap, emap = {}, {}

    def start(j, i):
        return base[i] + (j - i)

    for j in range(J + 1):
        for i in range(n):
            if (j + i) % 2:
                continue
            s = start(j, i)
            vmap[(j, i)] = (i, (s, s + 2.0))
            if j == J:
                continue
            for di in (1, -1):
                k = i + di
                if 0 <= k < n:
                    emap[((j, i), (j + 1, k))] = EdgeGeometry((i, k), (_half_overlap(s, start(j + 1, k)),))
    geom = GeometryMap(vmap, emap)
    ci = CoupledInstance("cppr_uni", env, kernels.constant(1.0), kernels.cppr_uniform(lam), geom,
                         params={"lam": lam, "layers": J}, extras={"S": S, "U": U})
    if X is not None:
        _attach_line(ci, offsets, X, J)
    return ci


def _horizon(geom):
    return max(hi for _, (lo, hi) in geom.vertex.values()) + 2.0


def _attach_line(ci, offsets, X, J, J0=(0,)):
    n = len(offsets)
    T = _horizon(ci.geometry)
    vertices, edges = cp.line_graph(n)
    Y = {v: cp._grid(offsets[v], 2.0, 0.0, T) for v in vertices}
    ci.contact = cp.ContactInstance(vertices, edges, X, Y, list(J0), T, "line")
    ci.config = derive_config(ci, n, J)


def derive_config(ci, width, J):
    """Configuration read off the contact realisation through the geometry map.

    A vertex is open iff its contact vertex does not recover in its box (and
    always for kinds whose vertex kernel is constant one); an edge is open iff
    ``chain_times`` finds ordered contacts for it.
    """
    V = np.zeros((J + 1, width), bool)
    Uo = np.zeros((J, width), bool)
    Do = np.zeros((J, width), bool)
    off = ci.geometry.col_offset
    inst = ci.contact
    for (j, i), (v, (lo, hi)) in ci.geometry.vertex.items():
        if ci.kind == "cpre":
            Y = inst.Y[v]
            V[j, i + off] = not np.any((Y >= lo) & (Y < hi))
        else:
            V[j, i + off] = True
    for ((j, i), (j2, i2)), g in ci.geometry.edge.items():
        ok = chain_times(inst.X, g, 0.0, inst.Y) is not None
        (Uo if i2 > i else Do)[j, i + off] = ok
    return OpenConfiguration(V, Uo, Do, parity=0)


def sample_cppr_uniform(n, layers, lam, seed):
    rng = np.random.default_rng(seed)
    U = rng.random(n)
    ci = couple_cppr_uniform(U, lam, layers=layers)
    T = _horizon(ci.geometry)
    _, edges = cp.line_graph(n)
    X = {e: cp._ppp(lam, 0.0, T, rng) for e in edges}
    _attach_line(ci, 2.0 * ci.extras["U"], X, layers)
    return ci


# -- CPPR with Bernoulli phases ---------------------------------------------

def run_lengths(B):
    """Lengths N of the complete runs "consecutive equal bits ending in the other bit".

    A maximal run of r equal bits followed by the opposite bit gives N = r + 1;
    the final run, whose end is not observed, is dropped.
    """
    B = np.asarray(B, dtype=int)
    if len(B) == 0:
        raise ValueError("empty sequence")
    change = np.flatnonzero(np.diff(B) != 0) + 1
    starts = np.concatenate(([0], change))
    runs = np.diff(starts)  # complete runs only
    return runs + 1


def dominate(L, rho, r, u):
    """Quantile coupling K >= L with P(K >= l+1) = r**l.

    L is geometric on {1, 2, ...} with P(L >= l+1) = rho**l and r >= rho;
    ``u`` are independent uniforms.  Conditionally on L = l, a uniform point of
    (F_L(l-1), F_L(l)] is pushed through the inverse law of K.
    """
    L = np.asarray(L, dtype=np.int64)
    rho = np.broadcast_to(np.asarray(rho, float), L.shape)
    if np.any(rho > r):
        raise ValueError("the dominating tail must be at least as heavy")
    lo = 1.0 - rho ** (L - 1)
    hi = 1.0 - rho ** L
    w = lo + np.asarray(u, float) * (hi - lo)
    if r <= 0:
        return np.ones_like(L)
    K = np.ceil(np.log1p(-w) / math.log(r) - 1e-12).astype(np.int64)
    return np.maximum(K, L)


def couple_cppr_bernoulli(Bseq, q, lam, X=None, layers=None, seed=0):
    """OPRE with nu = K**2 from CPPR bits, plus the exact run-length coupling.

    After the origin phase fix (flip every bit when B_0 = 0), lattice column i
    is the first site p_i of run i.  Crossing run i takes L_i = p_{i+1} - p_i
    ordered contacts inside one unit interval, so the exact edge probability
    is P(A_{L_i}).  K_i >= L_i is the geometric with tail max(q, 1-q); the
    dominated configuration keeps an exact open edge with probability
    P(A_K) / P(A_L), which gives the OPRE law with nu = K**2.
    """
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    B = np.asarray(Bseq, dtype=int)
    if len(B) == 0:
        raise ValueError("empty sequence")
    flipped = B[0] == 0
    Bn = 1 - B if flipped else B
    N = run_lengths(Bn)
    L = N - 1
    if len(L) == 0:
        raise ValueError("no complete run in the sequence")
    starts = np.concatenate(([0], np.cumsum(L)))  # p_0..p_R
    orig_vals = B[starts[:-1]]
    rho = np.where(orig_vals == 1, q, 1 - q)
    r = max(q, 1 - q)
    rng = np.random.default_rng(seed)
    K = dominate(L, rho, r, rng.random(len(L)))
    env = StretchEnvironment(np.zeros(len(starts)), (K ** 2).astype(float))
    R = len(L)
    J = R if layers is None else int(layers)
    vmap, emap = {}, {}
    for j in range(J + 1):
        for i in range(R + 1):
            if (j + i) % 2:
                continue
            s = j - 1.0  # window (j-1, j+1) of site p_i
            vmap[(j, i)] = (int(starts[i]), (s, s + 2.0))
            if j == J:
                continue
            if i < R:
                chain = tuple(range(starts[i], starts[i + 1] + 1))
                emap[((j, i), (j + 1, i + 1))] = EdgeGeometry(chain, ((float(j), j + 1.0),))
            if i > 0:
                chain = tuple(range(starts[i], starts[i - 1] - 1, -1))
                emap[((j, i), (j + 1, i - 1))] = EdgeGeometry(chain, ((float(j), j + 1.0),))
    geom = GeometryMap(vmap, emap)
    ci = CoupledInstance("cppr_ber", env, kernels.constant(1.0), kernels.cppr_bernoulli(lam),
                         geom, params={"q": q, "lam": lam, "layers": J},
                         extras={"N": N, "L": L, "K": K, "starts": starts, "B": Bn,
                                 "flipped": bool(flipped)})
    if X is not None:
        n = int(starts[-1]) + 1
        _attach_line(ci, Bn[:n].astype(float), X, J)
        ci.extras["dominated"] = dominated_config(ci, rng)
    return ci


def dominated_config(ci, rng):
    """Thin the exact configuration down to the OPRE law with nu = K**2."""
    lam = ci.params["lam"]
    L, K = ci.extras["L"], ci.extras["K"]
    ratio = np.array([kernels.poisson_tail(lam, k) / kernels.poisson_tail(lam, l)
                      for l, k in zip(L, K)])
    cfg = ci.config
    T, W = cfg.T, cfg.W
    ratio_up = np.zeros(W)
    ratio_up[: len(ratio)] = ratio  # edge c -> c+1 uses bond c
    ratio_dn = np.zeros(W)
    ratio_dn[1: len(ratio) + 1] = ratio  # edge c -> c-1 uses bond c-1
    keep_up = rng.random((T, W)) < ratio_up
    keep_dn = rng.random((T, W)) < ratio_dn
    return OpenConfiguration(cfg.V, cfg.U & keep_up, cfg.D & keep_dn, cfg.parity)


def sample_cppr_bernoulli(n, layers, q, lam, seed):
    rng = np.random.default_rng(seed)
    for _ in range(1000):
        B = (rng.random(n) < q).astype(int)
        if len(run_lengths(B if B[0] else 1 - B)) >= 2:
            break
    ci0 = couple_cppr_bernoulli(B, q, lam, layers=layers, seed=rng.integers(2 ** 63))
    T = layers + 3.0
    m = int(ci0.extras["starts"][-1]) + 1
    _, edges = cp.line_graph(m)
    X = {e: cp._ppp(lam, 0.0, T, rng) for e in edges}
    return couple_cppr_bernoulli(B, q, lam, X=X, layers=layers, seed=rng.integers(2 ** 63))


# -- contact process in a random environment ------------------------------------

def cpre_stretch(N, deltas):
    """nu = N log N + sum of Delta over the sites strictly between two good ones."""
    return N * math.log(N) + float(np.sum(deltas))


def cpre_edge_probability(N, deltas, L):
    """Exact conditional probability that some A_e(k), k < L, occurs."""
    a = kernels.poisson_tail(1.0, N) * math.exp(-float(np.sum(deltas)))
    return 1.0 - (1.0 - a) ** L


def good_sites(p, n_good, rng):
    """Positions of the first ``n_good`` good sites of an i.i.d. Bernoulli(p) row."""
    out, x = [], 0
    while len(out) < n_good:
        block = rng.random(max(64, int(2 * n_good / p))) < p
        out.extend((x + np.flatnonzero(block)).tolist())
        x += len(block)
    return np.array(out[:n_good], dtype=np.int64)


def couple_cpre(p, L, Delta, n_cols, seed, layers=None, realise=True):
    """Block discretisation of the contact process in a random environment.

    Good sites carry PPP(delta) recoveries with delta = L**-2, the others
    PPP(Delta_x).  Lattice (j, i) is good site X_i in the time box
    [(j-1)L, (j+1)L); an edge is open iff for some k < L the contacts along
    the gap are ordered inside [jL+k, jL+k+1) and the sites in between do not
    recover there.
    """
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    if int(L) != L or L < 2:
        raise ValueError("L must be an integer >= 2")
    if not isinstance(Delta, Dist):
        raise ValueError("Delta must be a Dist")
    L = int(L)
    rng = np.random.default_rng(seed)
    good = good_sites(p, n_cols, rng)
    gaps = np.diff(good)
    M = int(good[-1]) + 1
    deltas = Delta.sample(M, rng)
    is_good = np.zeros(M, bool)
    is_good[good] = True
    deltas[is_good] = 0.0
    nu = np.array([cpre_stretch(int(N), deltas[good[b] + 1: good[b + 1]])
                   for b, N in enumerate(gaps)])
    env = StretchEnvironment(np.zeros(n_cols), nu)
    J = (n_cols if layers is None else int(layers))
    vmap, emap = {}, {}
    for j in range(J + 1):
        for i in range(n_cols):
            if (j + i) % 2:
                continue
            vmap[(j, i)] = (int(good[i]), (float((j - 1) * L), float((j + 1) * L)))
            if j == J:
                continue
            cands = tuple((float(j * L + k), float(j * L + k + 1)) for k in range(L))
            if i + 1 < n_cols:
                chain = tuple(range(good[i], good[i + 1] + 1))
                emap[((j, i), (j + 1, i + 1))] = EdgeGeometry(chain, cands, True, True)
            if i > 0:
                chain = tuple(range(good[i], good[i - 1] - 1, -1))
                emap[((j, i), (j + 1, i - 1))] = EdgeGeometry(chain, cands, True, True)
    geom = GeometryMap(vmap, emap)
    delta = L ** -2.0
    ci = CoupledInstance("cpre", env, kernels.cpre_vertex(L), kernels.cpre_edge(L), geom,
                         params={"p": p, "L": L, "Delta": Delta.to_dict(), "layers": J},
                         extras={"good": good, "gaps": gaps, "deltas": deltas,
                                 "delta": delta,
                                 "edge_prob": [cpre_edge_probability(int(N), deltas[good[b] + 1: good[b + 1]], L)
                                               for b, N in enumerate(gaps)]})
    if realise:
        T = float((J + 1) * L)
        vertices, edges = cp.line_graph(M)
        rates = np.where(is_good, delta, deltas)
        Y = {v: cp._ppp(rates[v], 0.0, T, rng) for v in vertices}
        X = {e: cp._ppp(1.0, 0.0, T, rng) for e in edges}
        ci.contact = cp.ContactInstance(vertices, edges, X, Y, [int(good[0])], T, "line")
        ci.config = derive_config(ci, n_cols, J)
    return ci


# -- replay and validation ----------------------------------------------------

def open_paths(config, origin_col, cap=256):
    """Maximal open oriented paths from (0, origin_col), at most ``cap`` of them."""
    out = []
    if not config.V[0, origin_col]:
        return out
    T, W = config.T, config.W
    stack = [[(0, origin_col)]]
    while stack and len(out) < cap:
        path = stack.pop()
        t, c = path[-1]
        ext = []
        if t < T:
            if config.U[t, c] and c + 1 < W and config.V[t + 1, c + 1]:
                ext.append((t + 1, c + 1))
            if config.D[t, c] and c >= 1 and config.V[t + 1, c - 1]:
                ext.append((t + 1, c - 1))
        if not ext:
            out.append(path)
        for v in ext:
            stack.append(path + [v])
    return out


def replay_path(ci, path, geometry=None):
    """Map a lattice path (of configuration columns) to a contact path and check it."""
    g = ci.geometry if geometry is None else geometry
    off = g.col_offset
    lat = [(j, c - off) for j, c in path]
    verts = [g.vertex[lat[0]][0]]
    times = []
    t = 0.0
    for a, b in zip(lat, lat[1:]):
        eg = g.edge.get((a, b))
        if eg is None:
            return False
        ts = chain_times(ci.contact.X, eg, t, ci.contact.Y)
        if ts is None:
            return False
        verts.extend(eg.chain[1:])
        times.extend(ts)
        t = ts[-1]
    return cp.verify_path(ci.contact, verts, times, t)


def corrupt_geometry(geom, shift=1.0):
    """The same map with every edge interval moved by ``shift`` (fault injection)."""
    edge = {k: EdgeGeometry(g.chain, tuple((lo + shift, hi + shift) for lo, hi in g.intervals),
                            g.half_open, g.quiet_mids) for k, g in geom.edge.items()}
    return GeometryMap(geom.vertex, edge, geom.origin, geom.col_offset)


def replay_all(ci, config=None, geometry=None, cap=256):
    cfg = ci.config if config is None else config
    paths = open_paths(cfg, ci.geometry.col_offset, cap)
    ok = sum(replay_path(ci, p, geometry) for p in paths)
    return ok, len(paths)


def sample_coupled(kind, params, seed):
    p = dict(params)
    if kind == "d2_block":
        return sample_d2(p.get("layers", 4), p.get("t", 1.0), p.get("mu", 0.5),
                         p.get("x_rate", 2.0), p.get("y_rate", 0.1), seed)
    if kind == "cppr_uni":
        return sample_cppr_uniform(p.get("n", 6), p.get("layers", 6), p.get("lam", 3.0), seed)
    if kind == "cppr_ber":
        return sample_cppr_bernoulli(p.get("n", 10), p.get("layers", 6), p.get("q", 0.5),
                                     p.get("lam", 6.0), seed)
    if kind == "cpre":
        d = p.get("Delta", {"kind": "exponential", "rate": 2.0})
        return couple_cpre(p.get("p", 0.5), p.get("L", 2), Dist.from_dict(d), p.get("n_cols", 5),
                           seed, layers=p.get("layers", 4))
    raise ValueError(f"unknown coupling kind {kind!r}")


@dataclass
class CouplingReport:
    kind: str
    identities_checked: int
    identity_max_error: float
    tests: dict  # name -> p-value
    replayed: int
    replay_ok: int
    replay_failures: int

    @property
    def ok(self):
        return self.replay_failures == 0 and self.identity_max_error <= 1e-12


def _identities(ci):
    errs = [0.0]
    if ci.kind == "cppr_uni":
        S = ci.extras["S"]
        lam = ci.edge_kernel.lam
        got = np.asarray(kernels.eval_kernel(ci.edge_kernel, -np.log(S)))
        errs.append(float(np.max(np.abs(got - (-np.expm1(-lam * S))))))
        for ((j, i), (j2, i2)), g in ci.geometry.edge.items():
            lo, hi = g.intervals[0]
            errs.append(abs((hi - lo) - S[min(i, i2)]))
    elif ci.kind == "cppr_ber":
        K = ci.extras["K"]
        got = np.asarray(kernels.eval_kernel(ci.edge_kernel, (K ** 2).astype(float)))
        want = np.array([kernels.poisson_tail(ci.edge_kernel.lam, k) for k in K])
        errs.append(float(np.max(np.abs(got - want))))
    elif ci.kind == "cpre":
        want = np.exp(-2.0 / ci.params["L"])
        errs.append(abs(kernels.eval_kernel(ci.vertex_kernel, 0.0) - want))
    return len(errs) - 1, max(errs)


def validate_coupling(ci, replications, seed, n_dist=0):
    """Identities, distribution tests and path replay over fresh realisations.

    ``ci`` fixes the kind and parameters; every replication samples a new
    realisation with a derived seed.  ``n_dist`` > 0 adds goodness-of-fit tests
    on that many draws.
    """
    checked, err = _identities(ci)
    ok = total = 0
    inst_params = {k: v for k, v in ci.params.items()}
    for r in range(replications):
        s = int(rng_for(seed, r, "coupling").integers(2 ** 63))
        inst = sample_coupled(ci.kind, inst_params, s)
        c, e = _identities(inst)
        checked += c
        err = max(err, e)
        cfg = inst.extras.get("dominated", inst.config)
        a, b = replay_all(inst, cfg)
        ok += a
        total += b
    tests = {}
    if n_dist:
        rng = rng_for(seed, 0, "coupling-dist")
        tests = distribution_tests(ci.kind, ci.params, n_dist, rng)
    return CouplingReport(ci.kind, checked, err, tests, total, ok, total - ok)


def geometric_pmf(p, kmax):
    k = np.arange(1, kmax + 1)
    return p * (1 - p) ** (k - 1)


def distribution_tests(kind, params, n, rng):
    out = {}
    if kind == "cppr_uni":
        nu, _ = uniform_stretches(rng.random(n + 1))
        out["nu_exp1_ks"] = ks_pvalue(nu, sps.expon.cdf)
    elif kind == "cppr_ber":
        q = params.get("q", 0.5)
        B = (rng.random(n) < q).astype(int)
        L = run_lengths(B) - 1
        vals = B[np.concatenate(([0], np.cumsum(L)[:-1]))]
        for b, rho in ((1, q), (0, 1 - q)):
            runs = L[vals == b]
            kmax = int(runs.max())
            counts = np.bincount(runs, minlength=kmax + 1)[1:]
            out[f"runs_of_{b}_chi2"] = chi2_pvalue(counts, geometric_pmf(1 - rho, kmax))
    elif kind == "cpre":
        p = params.get("p", 0.5)
        g = np.diff(good_sites(p, n + 1, rng))
        counts = np.bincount(g)[1:]
        out["gaps_chi2"] = chi2_pvalue(counts, geometric_pmf(p, len(counts)))
    return out
