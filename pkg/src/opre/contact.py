"""Generalised contact processes driven by locally finite closed sets.

A vertex infected at time s stays infectious on [s, y), where y is its first
recovery point >= s; an infection arriving exactly at a recovery point is
lost.  Contact times may coincide, so infection can hop along several edges
at one instant.
"""

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .environment import Dist

SET_KINDS = ("ppp", "periodic_uniform", "periodic_bernoulli", "cox_bds", "cox_ppp",
             "empty", "lattice", "scaled")


@dataclass(frozen=True)
class ClosedSetSpec:
    """Law of a random closed subset of the real line.

    ppp(rate); periodic_uniform: 2(Z + U); periodic_bernoulli(q): 2Z + B with
    P(B = 1) = q; cox_bds(p, delta, Delta): PPP(delta) with prob. p, else
    PPP(Delta) with Delta drawn from a Dist; cox_ppp(Delta): PPP(Delta);
    lattice(spacing, offset): a deterministic grid; scaled(factor, inner): the
    points of ``inner`` multiplied by ``factor``.  Optional "U" or "B" entries
    fix the shift of the periodic kinds.
    """

    kind: str
    params: dict = field(default_factory=dict)
    inner: "ClosedSetSpec" = None

    def __post_init__(self):
        if self.kind not in SET_KINDS:
            raise ValueError(f"unknown closed-set kind {self.kind!r}")
        p = self.params
        if self.kind == "ppp" and not p.get("rate", 0) > 0:
            raise ValueError("ppp rate must be positive")
        if self.kind == "periodic_bernoulli" and not 0 < p.get("q", -1) < 1:
            raise ValueError("periodic_bernoulli needs q in (0, 1)")
        if self.kind == "periodic_uniform" and "U" in p and not 0 <= p["U"] < 1:
            raise ValueError("U must lie in [0, 1)")
        if self.kind == "cox_bds":
            if not 0 < p.get("p", -1) < 1 or not p.get("delta", 0) > 0:
                raise ValueError("cox_bds needs p in (0, 1) and delta > 0")
            if not isinstance(p.get("Delta"), Dist):
                raise ValueError("cox_bds needs a Delta distribution")
        if self.kind == "cox_ppp" and not isinstance(p.get("Delta"), Dist):
            raise ValueError("cox_ppp needs a Delta distribution")
        if self.kind == "lattice" and not p.get("spacing", 0) > 0:
            raise ValueError("lattice spacing must be positive")
        if self.kind == "scaled":
            if not p.get("factor", 0) > 0 or self.inner is None:
                raise ValueError("scaled needs a positive factor and an inner spec")

    def __hash__(self):
        return hash((self.kind, repr(sorted(self.params.items())), self.inner))

    @property
    def label(self):
        if self.kind == "scaled":
            return f"scaled({self.params['factor']:g},{self.inner.label})"
        args = ",".join(f"{k}={v}" for k, v in sorted(self.params.items()) if k != "Delta")
        return f"{self.kind}({args})"


def ppp(rate):
    return ClosedSetSpec("ppp", {"rate": float(rate)})


def periodic_uniform(U=None):
    return ClosedSetSpec("periodic_uniform", {} if U is None else {"U": float(U)})


def periodic_bernoulli(q, B=None):
    p = {"q": float(q)}
    if B is not None:
        p["B"] = int(B)
    return ClosedSetSpec("periodic_bernoulli", p)


def scaled(factor, inner):
    return ClosedSetSpec("scaled", {"factor": float(factor)}, inner)


@dataclass(frozen=True)
class PointSetWindow:
    t_lo: float
    t_hi: float
    points: np.ndarray
    spec: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1:
            raise ValueError("points must be one-dimensional")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("points must be sorted without duplicates")
        if len(pts) and (pts[0] < self.t_lo or pts[-1] > self.t_hi):
            raise ValueError("points outside the window")
        object.__setattr__(self, "points", pts)


def _grid(offset, spacing, lo, hi):
    k0 = math.ceil((lo - offset) / spacing)
    k1 = math.floor((hi - offset) / spacing)
    return offset + spacing * np.arange(k0, k1 + 1, dtype=float)


def _ppp(rate, lo, hi, rng):
    n = rng.poisson(rate * (hi - lo))
    return np.sort(lo + (hi - lo) * rng.random(n))


def sample_closed_set(spec, window, seed):
    """One realisation of ``spec`` restricted to the closed window [t_lo, t_hi]."""
    lo, hi = window
    if hi < lo:
        raise ValueError("empty window")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return PointSetWindow(lo, hi, _sample_points(spec, lo, hi, rng), spec.label)


def _sample_points(spec, lo, hi, rng):
    p = spec.params
    kind = spec.kind
    if kind == "empty":
        return np.empty(0)
    if kind == "ppp":
        return _ppp(p["rate"], lo, hi, rng)
    if kind == "periodic_uniform":
        U = p["U"] if "U" in p else rng.random()
        return _grid(2 * U, 2.0, lo, hi)
    if kind == "periodic_bernoulli":
        B = p["B"] if "B" in p else int(rng.random() < p["q"])
        return _grid(float(B), 2.0, lo, hi)
    if kind == "lattice":
        return _grid(float(p.get("offset", 0.0)), p["spacing"], lo, hi)
    if kind == "cox_bds":
        good = rng.random() < p["p"]
        rate = p["delta"] if good else float(p["Delta"].sample(1, rng)[0])
        return _ppp(rate, lo, hi, rng)
    if kind == "cox_ppp":
        return _ppp(float(p["Delta"].sample(1, rng)[0]), lo, hi, rng)
    # scaled: sample the inner set on the pre-image window
    f = p["factor"]
    return _sample_points(spec.inner, lo / f, hi / f, rng) * f


def earliest_recovery(Y, t):
    """Z_t = min{s >= 0 : t + s in Y}, or None when Y has no point >= t."""
    if not Y.t_lo <= t <= Y.t_hi:
        raise ValueError(f"t = {t} outside the window [{Y.t_lo}, {Y.t_hi}]")
    i = np.searchsorted(Y.points, t, side="left")
    return None if i == len(Y.points) else float(Y.points[i] - t)


# -- instances -------------------------------------------------------------

@dataclass
class ContactInstance:
    """Directed graph with per-edge contact times and per-vertex recoveries.

    ``vertices`` are hashable labels, ``edges`` directed (u, v) pairs; ``X`` and
    ``Y`` map edges and vertices to sorted point arrays inside [0, T].
    """

    vertices: list
    edges: list
    X: dict
    Y: dict
    J0: list
    T: float
    graph: str = "custom"

    def __post_init__(self):
        self.index = {v: k for k, v in enumerate(self.vertices)}
        for e in self.edges:
            if e[0] not in self.index or e[1] not in self.index:
                raise ValueError(f"edge {e} has an unknown endpoint")
        self.X = {e: np.asarray(self.X.get(e, ()), dtype=float) for e in self.edges}
        self.Y = {v: np.asarray(self.Y.get(v, ()), dtype=float) for v in self.vertices}
        for v in self.J0:
            if v not in self.index:
                raise ValueError(f"initial vertex {v} is not in the graph")


def line_graph(n):
    vertices = list(range(n))
    edges = [(v, v + 1) for v in range(n - 1)] + [(v + 1, v) for v in range(n - 1)]
    return vertices, edges


def ne_quadrant(n):
    vertices = [(a, b) for a in range(n) for b in range(n)]
    edges = [((a, b), (a + 1, b)) for a in range(n - 1) for b in range(n)]
    edges += [((a, b), (a, b + 1)) for a in range(n) for b in range(n - 1)]
    return vertices, edges


def sample_instance(graph, n, x_spec, y_spec, T, seed, J0=None):
    """Instance on line(n) or ne_quadrant(n) with i.i.d. realisations per object."""
    vertices, edges = line_graph(n) if graph == "line" else ne_quadrant(n)
    rng = np.random.default_rng(seed)
    Y = {v: _sample_points(y_spec, 0.0, T, rng) for v in vertices}
    X = {e: _sample_points(x_spec, 0.0, T, rng) for e in edges}
    J0 = [vertices[0]] if J0 is None else J0
    return ContactInstance(vertices, edges, X, Y, J0, T, graph)


# -- reference event sweep -------------------------------------------------

@dataclass
class InfectionTrace:
    events: list  # (time, vertex, source, edge, parent event index)
    intervals: dict  # vertex -> list of (start, end) infectious intervals
    infected_at_T: list

    def certificate(self, k):
        """Path (vertices, contact times) realising infection event k."""
        verts, times = [], []
        while k >= 0:
            t, v, src, e, parent = self.events[k]
            verts.append(v)
            if src is not None:
                times.append(t)
            k = parent
        return verts[::-1], times[::-1]

    def to_csv(self):
        rows = ["time,vertex,source"]
        for t, v, src, _, _ in self.events:
            rows.append(f"{t!r},{v},{'' if src is None else src}")
        return "\n".join(rows) + "\n"


def _next_recovery(Y, s):
    i = np.searchsorted(Y, s, side="left")
    return float(Y[i]) if i < len(Y) else math.inf


def run_contact(inst):
    """Sweep all contact times in increasing order and record every infection.

    Each vertex keeps only its current infection (the earliest one since its
    last recovery), which dominates any later infection in the same window.
    """
    cur = {}  # vertex -> (event index, recovery time)
    events = []
    intervals = {v: [] for v in inst.vertices}
    for v in dict.fromkeys(inst.J0):
        y = _next_recovery(inst.Y[v], 0.0)
        if y > 0:
            cur[v] = (len(events), y)
            events.append((0.0, v, None, None, -1))
    contacts = sorted((float(x), k) for k, e in enumerate(inst.edges) for x in inst.X[e]
                      if 0 <= x <= inst.T)
    i = 0
    while i < len(contacts):
        x = contacts[i][0]
        j = i
        while j < len(contacts) and contacts[j][0] == x:
            j += 1
        group = [inst.edges[k] for _, k in contacts[i:j]]
        changed = True
        while changed:  # equal-time chains
            changed = False
            for e in group:
                u, w = e
                if u not in cur or cur[u][1] <= x:
                    continue
                if w in cur and cur[w][1] > x:
                    continue
                y = _next_recovery(inst.Y[w], x)
                if y <= x:
                    continue  # recovery exactly at the contact time
                if w in cur:
                    k0 = cur[w][0]
                    intervals[w].append((events[k0][0], cur[w][1]))
                cur[w] = (len(events), y)
                events.append((x, w, u, e, cur[u][0]))
                changed = True
        i = j
    alive = []
    for v, (k, y) in cur.items():
        intervals[v].append((events[k][0], y))
        if y > inst.T:
            alive.append(v)
    return InfectionTrace(events, intervals, sorted(alive, key=inst.index.get))


def infected_at(trace, inst, t):
    """J_t read off the trace: vertices with an infectious interval holding t."""
    return sorted({v for v, ivs in trace.intervals.items() for s, y in ivs if s <= t < y},
                  key=inst.index.get)


def verify_path(inst, vertices, times, t):
    """Check the two path conditions for v_k in J_t.

    ``times`` are t_0..t_{k-1}; t_{-1} = 0 and t_k = t.  Contact times must be
    members of the edge sets and every leg [t_{i-1}, t_i] must avoid the
    recovery set of v_i.
    """
    if len(vertices) != len(times) + 1 or vertices[0] not in inst.J0:
        return False
    full = [0.0] + list(times) + [t]
    if any(b < a for a, b in zip(full, full[1:])):
        return False
    for i in range(len(times)):
        e = (vertices[i], vertices[i + 1])
        if e not in inst.X or not np.any(inst.X[e] == times[i]):
            return False
    for i, v in enumerate(vertices):
        a, b = full[i], full[i + 1]
        Y = inst.Y[v]
        if np.any((Y >= a) & (Y <= b)):
            return False
    return True


def survival_probe(inst):
    return len(run_contact(inst).infected_at_T) > 0


# -- fast search over recovery windows (line graph) -------------------------

@njit(cache=True)
def _window_search(yptr, ypts, n, T, v0, lam, E, xptr, xpts, explicit):
    # Earliest infection per (vertex, recovery window), Dijkstra style.
    # Window w of vertex v is (y_{w-1}, y_w) with y_{-1} = -inf.
    # Random mode: the first contact on edge (v -> u) after lo is lo + E/lam,
    # with one exponential per (v, direction, source window, target part);
    # each is used at most once, so this is exact for Poisson contacts.
    # Explicit mode reads the contact times from xpts instead.
    INF = np.inf
    nw_max = 0
    for v in range(n):
        c = yptr[v + 1] - yptr[v] + 1
        if c > nw_max:
            nw_max = c
    best = np.full((n, nw_max), INF)
    done = np.zeros((n, nw_max), np.bool_)
    heap = [(0.0, v0, 0)]
    # window of v0 holding time 0
    w0 = 0
    lo0, hi0 = yptr[v0], yptr[v0 + 1]
    while lo0 + w0 < hi0 and ypts[lo0 + w0] < 0.0:
        w0 += 1
    if lo0 + w0 < hi0 and ypts[lo0 + w0] == 0.0:
        return False, 0  # recovery at time 0
    heap[0] = (0.0, v0, w0)
    best[v0, w0] = 0.0
    alive = False
    count = 0
    while len(heap) > 0:
        s, v, w = heapq.heappop(heap)
        if done[v, w] or s > best[v, w]:
            continue
        done[v, w] = True
        count += 1
        yb = yptr[v]
        nv = yptr[v + 1] - yb
        b = ypts[yb + w] if w < nv else INF
        if b > T:
            alive = True
        for d in range(2):
            u = v + 1 if d == 0 else v - 1
            if u < 0 or u >= n:
                continue
            ub = yptr[u]
            nu = yptr[u + 1] - ub
            # first window of u whose closure reaches s
            wu = 0
            while wu < nu and ypts[ub + wu] < s:
                wu += 1
            part = 0
            end = min(b, T)
            while True:
                start = ypts[ub + wu - 1] if wu > 0 else -INF
                wend = ypts[ub + wu] if wu < nu else INF
                lo = max(s, start)
                if lo > end:
                    break
                hi = min(b, wend)
                x = INF
                if explicit:
                    e = 2 * v + d
                    k = xptr[e]
                    while k < xptr[e + 1] and (xpts[k] < lo or xpts[k] == start):
                        k += 1
                    if k < xptr[e + 1]:
                        x = xpts[k]
                else:
                    if part < E.shape[3] and w < E.shape[2]:
                        x = lo + E[v, d, w, part] / lam
                if x < hi and x <= T and x != start and x < best[u, wu]:
                    best[u, wu] = x
                    heapq.heappush(heap, (x, u, wu))
                if wend >= end:
                    break
                wu += 1
                part += 1
    return alive, count


def _csr(lists):
    ptr = np.zeros(len(lists) + 1, np.int64)
    ptr[1:] = np.cumsum([len(a) for a in lists])
    pts = np.concatenate([np.asarray(a, float) for a in lists]) if lists else np.empty(0)
    return ptr, pts.astype(float)


def line_survival(Y_lists, T, v0=0, lam=None, E=None, X_lists=None):
    """Survival to time T on a line, searching recovery windows.

    Either pass ``X_lists`` (contact times, indexed by 2v for v -> v+1 and
    2v+1 for v -> v-1) or Poisson contacts via ``lam`` and the exponential
    draws ``E`` of shape (n, 2, windows, 2).
    """
    n = len(Y_lists)
    yptr, ypts = _csr(Y_lists)
    if X_lists is not None:
        xptr, xpts = _csr(X_lists)
        E = np.zeros((1, 1, 1, 1))
        alive, _ = _window_search(yptr, ypts, n, float(T), v0, 1.0, E, xptr, xpts, True)
    else:
        xptr, xpts = np.zeros(1, np.int64), np.zeros(0)
        alive, _ = _window_search(yptr, ypts, n, float(T), v0, float(lam), E, xptr, xpts,
                                  False)
    return bool(alive)


def instance_x_lists(inst):
    """Contact lists of a line instance in the layout used by ``line_survival``."""
    n = len(inst.vertices)
    out = []
    for v in range(n):
        out.append(inst.X.get((v, v + 1), np.empty(0)))
        out.append(inst.X.get((v, v - 1), np.empty(0)))
    return out


# -- CPPR on a line ----------------------------------------------------------

def cppr_offsets(model, n, rng, q=0.5):
    """Recovery offsets o_v in [0, 2) so that Y_v = o_v + 2Z, origin phase fixed.

    Uniform: o_v = 2U_v after the shift U_v -> U_v - U_0 + 1/2 (mod 1), so the
    origin recovers at odd times.  Bernoulli: o_v = B_v, with every B flipped
    when B_0 = 0, which is the same time shift by one unit.
    """
    if model == "uni":
        U = rng.random(n)
        U = (U - U[0] + 0.5) % 1.0
        return 2.0 * U
    if model == "ber":
        B = (rng.random(n) < q).astype(float)
        if B[0] == 0:
            B = 1.0 - B
        return B
    raise ValueError(f"unknown CPPR model {model!r}")


def cppr_recoveries(offsets, T):
    return [_grid(o, 2.0, 0.0, T) for o in offsets]


def cppr_draws(n, T, rng):
    nw = int(T // 2) + 3
    return rng.exponential(1.0, size=(n, 2, nw, 2))


def cppr_survival(model, lams, n, T, seed, q=0.5):
    """Survival indicators of CPPR from the origin, one per lambda, coupled.

    Environment and exponential draws are shared, so survival is monotone in
    lambda within one replication.
    """
    rng = np.random.default_rng(seed)
    offsets = cppr_offsets(model, n, rng, q)
    Y = cppr_recoveries(offsets, T)
    E = cppr_draws(n, T, rng)
    return [line_survival(Y, T, 0, lam, E) for lam in lams]
