"""Oriented bond-site percolation on finite windows of the L2 lattice.

A window has time layers t = 0..T and columns c = 0..W-1.  Vertex (t, c) is
valid iff t + c + parity is even (parity 0 for the plain lattice, B for the
embedded one).  ``U[t, c]`` is the edge (t, c) -> (t+1, c+1) and ``D[t, c]``
the edge (t, c) -> (t+1, c-1).  Arrays may carry leading batch axes.
"""

import io
import math
import struct
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import kernels
from .environment import RenewalEmbedding, StretchEnvironment


class InsufficientColumns(ValueError):
    pass


@dataclass(frozen=True)
class LatticeWindow:
    t_max: int
    x_max: int  # last column index; the window has x_max + 1 columns
    variant: str = "plain"

    def __post_init__(self):
        if self.t_max < 1 or self.x_max < 1:
            raise ValueError("window extents must be >= 1")
        if self.variant not in ("plain", "embedded"):
            raise ValueError(f"unknown variant {self.variant!r}")

    @property
    def width(self):
        return self.x_max + 1


def valid_masks(T, W, parity):
    """Boolean masks of valid vertices, up-edges and down-edges."""
    t = np.arange(T + 1)[:, None]
    c = np.arange(W)[None, :]
    v = (t + c + parity) % 2 == 0
    up = v[:-1].copy()
    up[:, -1] = False
    down = v[:-1].copy()
    down[:, 0] = False
    return v, up, down


@dataclass(frozen=True)
class OpenConfiguration:
    V: np.ndarray  # (..., T+1, W)
    U: np.ndarray  # (..., T, W)
    D: np.ndarray  # (..., T, W)
    parity: int = 0
    positions: np.ndarray = None  # spatial coordinate of each column
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        V = np.asarray(self.V, dtype=bool)
        T, W = V.shape[-2] - 1, V.shape[-1]
        if T < 1 or W < 1:
            raise ValueError("configuration needs at least two layers and one column")
        vm, um, dm = valid_masks(T, W, self.parity)
        object.__setattr__(self, "V", V & vm)
        object.__setattr__(self, "U", np.asarray(self.U, dtype=bool) & um)
        object.__setattr__(self, "D", np.asarray(self.D, dtype=bool) & dm)
        pos = np.arange(W, dtype=np.int64) if self.positions is None else np.asarray(
            self.positions, dtype=np.int64)
        if pos.shape != (W,) or np.any(np.diff(pos) <= 0):
            raise ValueError("positions must be strictly increasing, one per column")
        object.__setattr__(self, "positions", pos)

    @property
    def T(self):
        return self.V.shape[-2] - 1

    @property
    def W(self):
        return self.V.shape[-1]

    @property
    def batch_shape(self):
        return self.V.shape[:-2]

    def __getitem__(self, idx):
        return OpenConfiguration(self.V[idx], self.U[idx], self.D[idx], self.parity,
                                 self.positions, self.provenance)

    def union(self, other):
        return OpenConfiguration(self.V | other.V, self.U | other.U, self.D | other.D,
                                 self.parity, self.positions, self.provenance)


def all_open(T, W, parity=0, positions=None):
    return OpenConfiguration(np.ones((T + 1, W), bool), np.ones((T, W), bool),
                             np.ones((T, W), bool), parity, positions)


# -- sampling ----------------------------------------------------------------

def _column_probs(source, fam, fam_e, W):
    if isinstance(source, RenewalEmbedding):
        if source.n < W:
            raise ValueError(f"window needs {W} columns, embedding has {source.n}")
        xi = source.xi_at[:W].astype(float)
        nu = source.nu_gap[: W - 1].astype(float)
        parity, positions = source.B, source.points[:W]
    elif isinstance(source, StretchEnvironment):
        if source.width < W:
            raise ValueError(f"window needs {W} columns, environment has {source.width}")
        xi, nu = source.xi[:W], source.nu[: W - 1]
        parity, positions = 0, None
    else:
        raise TypeError("expected a StretchEnvironment or RenewalEmbedding")
    pv = np.asarray(kernels.eval_kernel(fam, xi), dtype=float).reshape(W)
    pe = np.asarray(kernels.eval_kernel(fam_e, nu), dtype=float).reshape(W - 1)
    p_up = np.append(pe, 0.0)  # edge c -> c+1 uses nu_{c,c+1}
    p_down = np.insert(pe, 0, 0.0)  # edge c -> c-1 uses nu_{c-1,c}
    return pv, p_up, p_down, parity, positions


def draw_uniforms(window, seed, reps=None):
    """The shared uniforms behind every sampled configuration of this window."""
    rng = np.random.default_rng(seed)
    T, W = window.t_max, window.width
    lead = () if reps is None else (reps,)
    return (rng.random(lead + (T + 1, W)), rng.random(lead + (T, W)), rng.random(lead + (T, W)))


def threshold(uniforms, pv, p_up, p_down, parity=0, positions=None, provenance=None):
    uv, uu, ud = uniforms
    return OpenConfiguration(uv < pv, uu < p_up, ud < p_down, parity, positions,
                             provenance or {})


def sample_opre(source, fam, fam_e, window, seed, reps=None, uniforms=None):
    """Sample OPRE on ``window``; the same seed reuses the same uniforms.

    Because every bit is ``uniform < kappa``, configurations sampled with one
    seed at several values of lambda are nested.
    """
    pv, p_up, p_down, parity, positions = _column_probs(source, fam, fam_e, window.width)
    if window.variant == "embedded" and not isinstance(source, RenewalEmbedding):
        raise TypeError("embedded window needs a RenewalEmbedding")
    if uniforms is None:
        uniforms = draw_uniforms(window, seed, reps)
    prov = {"kernel": fam.to_dict(), "edge_kernel": fam_e.to_dict(), "seed": seed}
    return threshold(uniforms, pv, p_up, p_down, parity, positions, prov)


def sample_temporal(p, tail_spec, window, seed, nu=None):
    """All vertices open; every edge leaving layer t is open with prob p**nu_t.

    ``nu`` overrides the sampled per-layer stretches (``np.inf`` closes a layer).
    """
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    T, W = window.t_max, window.width
    if nu is None:
        nu = tail_spec.nu.sample(T, rng)
    nu = np.asarray(nu, dtype=float)
    if nu.shape != (T,):
        raise ValueError("need one stretch per layer transition")
    with np.errstate(over="ignore"):
        pe = np.where(np.isinf(nu), 0.0, p ** nu)[:, None]
    u = rng.random((T, W))
    d = rng.random((T, W))
    return OpenConfiguration(np.ones((T + 1, W), bool), u < pe, d < pe, 0, None,
                             {"p": p, "seed": seed, "nu": nu})


# -- reachability ------------------------------------------------------------

def _step(front, U, D, Vnext, lo=0, hi=None):
    """Vertices of the next layer reached from ``front`` through open edges."""
    nxt = np.zeros_like(front)
    nxt[..., 1:] |= (front & U)[..., :-1]
    nxt[..., :-1] |= (front & D)[..., 1:]
    nxt &= Vnext
    if lo or hi is not None:
        nxt[..., :lo] = False
        if hi is not None:
            nxt[..., hi + 1:] = False
    return nxt


def reach(config, sources, depth=None):
    """Reached vertices per layer, as a bool array of shape (..., depth+1, W).

    ``sources`` is a list of (t, c) vertices or a bool mask of layer-0 shape.
    Sources at t > 0 are injected when the sweep reaches their layer.
    """
    T = config.T if depth is None else min(depth, config.T)
    inject = np.zeros(config.V.shape[:-2] + (T + 1, config.W), bool)
    if isinstance(sources, np.ndarray) and sources.dtype == bool:
        inject[..., 0, :] = sources
    else:
        for t, c in sources:
            if 0 <= t <= T:
                inject[..., t, c] = True
    inject &= config.V[..., : T + 1, :]
    out = np.zeros_like(inject)
    out[..., 0, :] = inject[..., 0, :]
    for t in range(T):
        out[..., t + 1, :] = _step(out[..., t, :], config.U[..., t, :], config.D[..., t, :],
                                   config.V[..., t + 1, :]) | inject[..., t + 1, :]
    return out


def survival_depth(config, source):
    """Largest layer with a vertex reached from ``source``; -1 if it is closed."""
    r = reach(config, [source])
    alive = r.any(axis=-1)
    idx = np.arange(alive.shape[-1])
    return np.where(alive, idx, -1).max(axis=-1)


# -- rectangles and crossings -------------------------------------------------

@dataclass(frozen=True)
class Rectangle:
    t0: int
    t1: int
    a: int
    b: int

    def __post_init__(self):
        if not (self.t0 < self.t1 and self.a < self.b):
            raise ValueError("rectangle needs t0 < t1 and a < b")


@dataclass(frozen=True)
class ReducedRectangle:
    t0: int
    t1: int
    a0: int
    b0: int
    c0: int  # column index of a0
    c1: int  # column index of b0


def reduce_rectangle(points, rect):
    """Shrink [a, b] to the valid columns, dropping the right-most one."""
    pts = np.asarray(points.points if isinstance(points, RenewalEmbedding) else points)
    inside = np.flatnonzero((pts >= rect.a) & (pts <= rect.b))
    if len(inside) < 2:
        raise InsufficientColumns(f"fewer than two renewal points in [{rect.a}, {rect.b}]")
    c0, c1 = int(inside[0]), int(inside[-1] - 1)
    return ReducedRectangle(rect.t0, rect.t1, int(pts[c0]), int(pts[c1]), c0, c1)


def _crossing_reach(config, r0, kind):
    t0, t1 = r0.t0, min(r0.t1, config.T)
    c0, c1 = r0.c0, r0.c1
    if kind == "BTC":
        start_col = None
    elif kind == "LRC":
        start_col, end_col = c0, c1
    elif kind == "RLC":
        start_col, end_col = c1, c0
    else:
        raise ValueError(f"unknown crossing kind {kind!r}")
    shape = config.V.shape[:-2]
    hit = np.zeros(shape, bool)
    front = np.zeros(shape + (config.W,), bool)
    for t in range(t0, t1 + 1):
        if t > t0:
            front = _step(front, config.U[..., t - 1, :], config.D[..., t - 1, :],
                          config.V[..., t, :], c0, c1)
        if kind == "BTC":
            if t == t0:
                front[..., c0:c1 + 1] = config.V[..., t0, c0:c1 + 1]
        else:
            front[..., start_col] |= config.V[..., t, start_col]
            hit |= front[..., end_col]
    if kind == "BTC":
        hit = front.any(axis=-1)
    return hit


def crossing(config, points, rect, kind):
    """Open crossing of the reduced rectangle of ``rect``.

    LRC: a path from column a0 to column b0 inside [t0, t1] x [a0, b0], starting
    at any time.  RLC is the mirror.  BTC: a path from layer t0 to layer t1.
    ``points`` defaults to the configuration's own column positions.
    """
    if points is None:
        points = config.positions
    r0 = reduce_rectangle(points, rect)
    return _crossing_reach(config, r0, kind)


# -- binary dump -------------------------------------------------------------

MAGIC = b"OPRE"
DUMP_VERSION = 1
_HEADER = struct.Struct("<4sHIIB")


def dump_config(config, fh=None):
    """Write a single (unbatched) configuration; returns bytes if ``fh`` is None.

    Layout, little endian: magic "OPRE", u16 version, u32 T, u32 W, u8 parity,
    W int64 column positions, then np.packbits of V, U and D in row-major order.
    """
    if config.batch_shape:
        raise ValueError("dump one configuration at a time")
    buf = io.BytesIO()
    buf.write(_HEADER.pack(MAGIC, DUMP_VERSION, config.T, config.W, config.parity))
    buf.write(config.positions.astype("<i8").tobytes())
    for arr in (config.V, config.U, config.D):
        buf.write(np.packbits(arr.ravel()).tobytes())
    data = buf.getvalue()
    if fh is None:
        return data
    fh.write(data)
    return None


def load_config(data):
    if hasattr(data, "read"):
        data = data.read()
    magic, version, T, W, parity = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ValueError("not an OPRE dump")
    if version != DUMP_VERSION:
        raise ValueError(f"unsupported dump version {version}")
    off = _HEADER.size
    positions = np.frombuffer(data, "<i8", W, off)
    off += 8 * W
    arrays = []
    for shape in ((T + 1, W), (T, W), (T, W)):
        n = shape[0] * shape[1]
        nbytes = (n + 7) // 8
        bits = np.unpackbits(np.frombuffer(data, np.uint8, nbytes, off))[:n]
        arrays.append(bits.reshape(shape).astype(bool))
        off += nbytes
    return OpenConfiguration(*arrays, parity=parity, positions=positions.copy())


# -- streaming temporal model -----------------------------------------------

@njit(cache=True)
def _geom(logq):
    # trials up to and including the first closed edge, P(G > n) = q**n
    return 1 + int(math.log(1.0 - np.random.random()) / logq)


@njit(cache=True)
def _open_word(q, logq, skip):
    # 64 i.i.d. Bernoulli(q) bits; ``skip`` counts open edges before the next
    # closed one and is carried across words.
    if q >= 1.0:
        return np.uint64(0xFFFFFFFFFFFFFFFF), skip
    if q <= 0.0:
        return np.uint64(0), skip
    if skip >= 64:
        return np.uint64(0xFFFFFFFFFFFFFFFF), skip - 64
    w = np.uint64(0xFFFFFFFFFFFFFFFF)
    pos = skip
    while pos < 64:
        w &= ~(np.uint64(1) << np.uint64(pos))
        pos += _geom(logq)
    return w, pos - 64


@njit(cache=True)
def _temporal_depth(pe, seed):
    # Full line started from one vertex, so no side boundary is ever met.
    # A vertex (t, x) of the cone is indexed by k = (x + t) / 2 in [0, t]: the
    # edge to x - 1 keeps k and the edge to x + 1 moves to k + 1, so a whole
    # layer advances with word-parallel shifts.
    np.random.seed(seed)
    T = pe.shape[0]
    nw = (T + 1) // 64 + 2
    cur = np.zeros(nw, np.uint64)
    cur[0] = np.uint64(1)
    lo, hi = 0, 0
    for t in range(T):
        q = pe[t]
        logq = math.log(q) if 0.0 < q < 1.0 else -1.0
        sd = _geom(logq) - 1 if 0.0 < q < 1.0 else 0
        su = _geom(logq) - 1 if 0.0 < q < 1.0 else 0
        carry = np.uint64(0)
        nlo, nhi = nw, -1
        for w in range(lo, hi + 2):
            r = cur[w]
            dm, sd = _open_word(q, logq, sd)
            um, su = _open_word(q, logq, su)
            up = r & um
            nv = (r & dm) | (up << np.uint64(1)) | carry
            carry = up >> np.uint64(63)
            cur[w] = nv
            if nv != 0:
                if w < nlo:
                    nlo = w
                nhi = w
        if nhi < 0:
            return t
        lo, hi = nlo, min(nhi, nw - 2)
    return T


def temporal_survival_depth(p, nu, seed):
    """Survival depth of the temporal model from one source, without a window.

    Same law as ``survival_depth(sample_temporal(...), centre)`` on a window
    wide enough that the cluster never meets its sides.
    """
    nu = np.asarray(nu, dtype=float)
    with np.errstate(over="ignore"):
        pe = np.where(np.isinf(nu), 0.0, float(p) ** nu)
    return int(_temporal_depth(pe, np.uint32(seed % (1 << 32))))
