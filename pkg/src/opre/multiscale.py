"""Scale schedules, good/bad blocks and the renormalised site lattice.

Block lengths grow as L_k = L_{k-1} * floor(L_{k-1}**(gamma - 1)), so a scale-k
block I_{k,i} = [i L_k, (i+1) L_k) is made of floor(L_{k-1}**(gamma - 1))
scale-(k-1) sub-blocks.
"""

import math
from dataclasses import dataclass, field

import mpmath as mp
import numpy as np
from numba import njit

from . import environment as envmod
from .percolation import InsufficientColumns
from .seeding import rng_for
from .stats import wilson_ci

_EXACT_EXP_BELOW = 200.0  # log ceil(e^y) is computed exactly below this y


class ConstraintViolation(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass
class ScaleSchedule:
    epsilon: float
    alpha: float
    gamma: float
    L0: int
    mu: float
    beta: float
    L: list  # exact integers
    logH: list  # natural log of H_k
    K_max: int
    relaxed: bool = False
    violations: list = field(default_factory=list)

    def factor(self, k):
        """Number of scale-(k-1) sub-blocks in a scale-k block."""
        return self.L[k] // self.L[k - 1]

    def to_dict(self):
        return {"epsilon": self.epsilon, "alpha": self.alpha, "gamma": self.gamma,
                "L0": self.L0, "mu": self.mu, "beta": self.beta, "K_max": self.K_max,
                "L": [str(v) for v in self.L], "logH": self.logH,
                "relaxed": self.relaxed, "violations": self.violations}


def _floor_pow(n, e):
    # floor(n ** e) for a big integer n and real e, exact up to huge n
    with mp.workdps(max(50, len(str(n)) + 30)):
        return int(mp.floor(mp.mpf(n) ** mp.mpf(e)))


def _log_ceil_exp(y):
    """log ceil(e^y) for y = L**mu given as an mpf."""
    if y >= _EXACT_EXP_BELOW:
        return float(y)
    with mp.workdps(int(y / 2.3) + 40):
        return float(mp.log(mp.ceil(mp.exp(y))))


def check_parameters(epsilon, alpha, gamma, L0, mu, beta):
    """Names of the violated parameter constraints (empty when all hold)."""
    out = []
    if not 0 < alpha <= epsilon / 2:
        out.append(f"alpha in (0, epsilon/2] = (0, {epsilon / 2:g}]")
    gmax = 1 + alpha / (alpha + 2)
    if not 1 < gamma <= gmax:
        out.append(f"gamma in (1, 1 + alpha/(alpha+2)] = (1, {gmax:.6g}]")
    if gamma > 1 and not L0 ** (gamma - 1) >= 5:
        out.append(f"L0**(gamma-1) >= 5 (needs L0 >= {5 ** (1 / (gamma - 1)):.6g})")
    if not 1 / gamma < mu < 1:
        out.append(f"mu in (1/gamma, 1) = ({1 / gamma:.6g}, 1)")
    blo = gamma * mu - gamma + 1
    if not blo < beta < 1:
        out.append(f"beta in (gamma*mu - gamma + 1, 1) = ({blo:.6g}, 1)")
    if not beta + gamma - 1 > max(gamma * beta, gamma * mu):
        out.append("beta + gamma - 1 > max(gamma*beta, gamma*mu)")
    return out


def build_schedule(epsilon, alpha, gamma, L0, mu, beta, K_max, relaxed=False):
    """Block lengths L_k and heights log H_k up to scale K_max.

    H_0 = L_0 and H_k = 2 floor(L_{k-1}**(gamma-1)) ceil(exp(L_k**mu)) H_{k-1}.
    With ``relaxed`` the constraint failures are recorded instead of raised.
    """
    if int(L0) != L0 or L0 < 2:
        raise ValueError("L0 must be an integer >= 2")
    if K_max < 0:
        raise ValueError("K_max must be >= 0")
    L0 = int(L0)
    violations = check_parameters(epsilon, alpha, gamma, L0, mu, beta)
    if violations and not relaxed:
        raise ConstraintViolation(violations)
    L = [L0]
    logH = [math.log(L0)]
    for k in range(1, K_max + 1):
        f = _floor_pow(L[-1], gamma - 1)
        if f < 1:
            raise ValueError("block length stops growing: floor(L**(gamma-1)) == 0")
        L.append(L[-1] * f)
        with mp.workdps(50):
            y = mp.mpf(L[-1]) ** mp.mpf(mu)
        logH.append(math.log(2) + math.log(f) + _log_ceil_exp(y) + logH[-1])
    return ScaleSchedule(epsilon, alpha, gamma, L0, mu, beta, L, logH, K_max, relaxed,
                         violations)


def length_bounds_hold(sched):
    """(1/2)^k L0^(gamma^k) <= L_k <= L0^(gamma^k) for every computed k."""
    with mp.workdps(60):
        for k, Lk in enumerate(sched.L):
            upper = mp.mpf(sched.L0) ** (mp.mpf(sched.gamma) ** k)
            if not (upper / 2 ** k <= Lk <= upper):
                return False
    return True


def beta_property_holds(sched):
    g, b, m = sched.gamma, sched.beta, sched.mu
    return b + g - 1 > max(g * b, g * m)


# -- good and bad blocks -----------------------------------------------------

def parent_good(sub_good):
    """Good iff at most one bad sub-block, or exactly two consecutive ones."""
    bad = np.flatnonzero(~np.asarray(sub_good, dtype=bool))
    return len(bad) <= 1 or (len(bad) == 2 and bad[1] == bad[0] + 1)


def _lengths(sched):
    L = list(sched.L) if isinstance(sched, ScaleSchedule) else [int(v) for v in sched]
    for a, b in zip(L, L[1:]):
        if b % a:
            raise ValueError("each block length must divide the next")
    return L


@dataclass
class BlockTree:
    L: list
    good: list  # good[k] is a bool array over the scale-k blocks in the window

    def recompute(self):
        """Rebuild good[k] for k >= 1 from good[k - 1]."""
        out = [self.good[0].copy()]
        for k in range(1, len(self.L)):
            f = self.L[k] // self.L[k - 1]
            n = len(out[-1]) // f
            out.append(np.array([parent_good(out[-1][i * f:(i + 1) * f]) for i in range(n)],
                                dtype=bool))
        return out


def classify_blocks(points, sched, k_max, window):
    """Good/bad status of every block of scales 0..k_max inside [0, window)."""
    L = _lengths(sched)
    if k_max >= len(L):
        raise ValueError(f"schedule only has scales 0..{len(L) - 1}")
    L = L[: k_max + 1]
    if window < L[k_max]:
        raise ValueError(f"window {window} is shorter than one scale-{k_max} block ({L[k_max]})")
    pts = np.asarray(points.points if isinstance(points, envmod.RenewalEmbedding) else points)
    n0 = window // L[0]
    pts = pts[(pts >= 0) & (pts < n0 * L[0])]
    good0 = np.zeros(n0, bool)
    good0[pts // L[0]] = True
    tree = BlockTree(L, [good0])
    tree.good = tree.recompute()
    return tree


def bad_areas(good):
    """Bad areas of a row of sibling blocks as (i_lo, i_hi) index pairs.

    For each bad block i that is first in its run, i_lo = max(i - 1, 0) and
    i_hi is the first good index >= i, or len(good) when none follows.
    """
    good = np.asarray(good, dtype=bool)
    n = len(good)
    out = []
    for i in range(n):
        if good[i] or (i > 0 and not good[i - 1]):
            continue
        nxt = np.flatnonzero(good[i:])
        out.append((max(i - 1, 0), int(i + nxt[0]) if len(nxt) else n))
    return out


def estimate_bad_prob(spec, sched, k, replications, seed, chi_mode=("burn_in", 64)):
    """Monte Carlo frequency of I_{k,0} being bad under the stationary embedding.

    Returns (estimate, (ci_lo, ci_hi), target L_k**-alpha, estimate <= target).
    """
    if k > 2:
        raise ValueError("bad-block estimation is limited to k <= 2")
    L = _lengths(sched)
    Lk = L[k]
    alpha = sched.alpha if isinstance(sched, ScaleSchedule) else None
    mean_gap = _mean_gap(spec)
    n_burn = envmod.parse_chi_mode(chi_mode)
    bad = 0
    for r in range(replications):
        rng = rng_for(seed, r, "blocks")
        width = n_burn + int(Lk / max(mean_gap, 1e-9) * 2) + 16
        while True:
            env = envmod.sample_stretches(spec, width, rng.integers(2 ** 63))
            emb = envmod.build_embedding(env, rng.integers(2 ** 63), chi_mode)
            if emb.points[-1] >= Lk:
                break
            width *= 2
        tree = classify_blocks(emb, L, k, Lk)
        bad += int(not tree.good[k][0])
    est = bad / replications
    ci = wilson_ci(bad, replications)
    target = float(Lk) ** -alpha if alpha is not None else None
    return est, ci, target, (target is None or ci[0] <= target)


def _mean_gap(spec):
    m = 0.0
    for d in (spec.xi, spec.nu):
        mom = d.moment(1)
        m += (mom if mom is not None and math.isfinite(mom) else 1.0) + 0.5
    return m


def stationary_bad_prob0(gap_pmf, L0):
    """P(no renewal point in [0, L0)) for the stationary integer renewal."""
    delay = envmod.stationary_delay_pmf(gap_pmf)
    return float(max(0.0, 1.0 - delay[:L0].sum()))


def fastest_traverse_bound(points, lo, hi, t0=0, parity=0):
    """Log lower bound -(Z_{m+1} - Z_0) for crossing [lo, hi] on the fastest path.

    Z_0 < ... < Z_{m+1} are the renewal points in [lo, hi].  The path opens the
    vertices (t0 + x, Z_x), x = 0..m, and the edges between consecutive ones;
    t0 is moved up by one when (t0, Z_0) has the wrong parity.  Returns the
    bound and the path as a list of (time, column index).
    """
    pts = np.asarray(points.points if isinstance(points, envmod.RenewalEmbedding) else points)
    if isinstance(points, envmod.RenewalEmbedding):
        parity = points.B
    idx = np.flatnonzero((pts >= lo) & (pts <= hi))
    if len(idx) < 2:
        raise InsufficientColumns(f"fewer than two renewal points in [{lo}, {hi}]")
    z = pts[idx]
    start = t0 if (t0 + idx[0] + parity) % 2 == 0 else t0 + 1
    path = [(start + x, int(c)) for x, c in enumerate(idx[:-1])]
    return -float(z[-1] - z[0]), path


# -- renormalised site lattice ------------------------------------------------

@dataclass
class RenormSiteGrid:
    """Sites (j, i) with j + i even, j = 0..T and i = 0..l."""

    open: np.ndarray  # (T+1, l+1) bool; entries with j + i odd are unused

    @property
    def T(self):
        return self.open.shape[0] - 1

    @property
    def l(self):
        return self.open.shape[1] - 1


def site_mask(T, l):
    j = np.arange(T + 1)[:, None]
    i = np.arange(l + 1)[None, :]
    return (j + i) % 2 == 0


def build_renorm_grid(lrc, rlc, btc):
    """Site (j, i) is open iff LRC(j, i-1), RLC(j, i) and BTC(j, i) all occur.

    LRC is ignored at i = 0 and RLC at i = l.  Arrays have shape (T+1, l+1);
    the LRC entry used by site (j, i) is lrc[j, i - 1].
    """
    lrc, rlc, btc = (np.asarray(a, dtype=bool) for a in (lrc, rlc, btc))
    T, l = btc.shape[0] - 1, btc.shape[1] - 1
    left = np.ones_like(btc)
    left[:, 1:] = lrc[:, :-1]
    right = np.ones_like(btc)
    right[:, :-1] = rlc[:, :-1]
    return RenormSiteGrid(left & right & btc & site_mask(T, l))


@njit(cache=True)
def _site_open(op, j, i):
    T = op.shape[0] - 1
    if j < 0 or j > T:
        return True  # virtual rows below and above the grid
    return op[j, i]


@njit(cache=True)
def _contour_bfs(op):
    # Dual nodes are the points (j, i) with j + i odd, rows -1..T+1, columns
    # 0..l; i = 0 is glued to the left wall.  Moving right (i + 1) is only
    # allowed across a closed site, moving left is free.  Returns the node
    # path as an (m+1, 2) array, or an empty array when the right wall is not
    # reachable.
    T = op.shape[0] - 1
    l = op.shape[1] - 1
    R = T + 3
    C = l + 1
    prev = np.full((R, C), -2, np.int64)
    queue = np.empty(R * C, np.int64)
    head, tail = 0, 0
    for j in range(-1, T + 2):
        if (j + 0) % 2 != 0:
            prev[j + 1, 0] = -1
            queue[tail] = (j + 1) * C
            tail += 1
    goal = -1
    while head < tail:
        node = queue[head]
        head += 1
        r, i = node // C, node % C
        j = r - 1
        if i >= l:
            goal = node
            break
        for dj in (1, -1):
            for di in (1, -1):
                nj, ni = j + dj, i + di
                if nj < -1 or nj > T + 1 or ni < 0:
                    continue
                if di == 1:
                    # NE crosses site (j+1, i), SE crosses site (j, i+1)
                    if dj == 1:
                        if _site_open(op, j + 1, i):
                            continue
                    elif _site_open(op, j, i + 1):
                        continue
                nn = (nj + 1) * C + ni
                if prev[nj + 1, ni] != -2:
                    continue
                prev[nj + 1, ni] = node
                queue[tail] = nn
                tail += 1
    if goal < 0:
        return np.empty((0, 2), np.int64)
    n = 0
    node = goal
    while node >= 0:
        n += 1
        node = prev[node // C, node % C]
    out = np.empty((n, 2), np.int64)
    node = goal
    for k in range(n - 1, -1, -1):
        out[k, 0] = node // C - 1
        out[k, 1] = node % C
        node = prev[node // C, node % C]
    return out


@njit(cache=True)
def _site_path_exists(op):
    T = op.shape[0] - 1
    l = op.shape[1] - 1
    cur = np.zeros(l + 1, np.bool_)
    for i in range(l + 1):
        cur[i] = op[0, i] and i % 2 == 0
    for j in range(T):
        nxt = np.zeros(l + 1, np.bool_)
        for i in range(l + 1):
            if cur[i]:
                if i > 0:
                    nxt[i - 1] = True
                if i < l:
                    nxt[i + 1] = True
        for i in range(l + 1):
            cur[i] = nxt[i] and op[j + 1, i]
    return cur.any()


def site_path_exists(grid):
    """Open bottom-top path of renormalised sites, (j, i) -> (j+1, i +- 1)."""
    return bool(_site_path_exists(np.ascontiguousarray(grid.open & site_mask(grid.T, grid.l))))


@dataclass
class Contour:
    nodes: list  # dual nodes (j, i), j + i odd
    closed_sites: list  # the sites crossed by rightward moves

    @property
    def m(self):
        return len(self.nodes) - 1


def crossed_site(a, b):
    """Site crossed by the dual move a -> b, or None for a leftward move."""
    (j, i), (nj, ni) = a, b
    if ni != i + 1:
        return None
    return (j + 1, i) if nj == j + 1 else (j, i + 1)


def find_blocking_contour(grid):
    """A closed dual path from the left wall to the right wall, or None.

    It exists exactly when no open bottom-top site path does.
    """
    op = np.ascontiguousarray(grid.open & site_mask(grid.T, grid.l))
    path = _contour_bfs(op)
    if len(path) == 0:
        return None
    nodes = [(int(a), int(b)) for a, b in path]
    sites = [s for s in (crossed_site(a, b) for a, b in zip(nodes, nodes[1:])) if s is not None]
    return Contour(nodes, sites)


@njit(cache=True)
def _duality_sweep(T, l, sites_j, sites_i, start, stop):
    # counts (contour found) XOR (bottom-top path) failures over states start..stop-1
    n = sites_j.shape[0]
    bad = 0
    op = np.zeros((T + 1, l + 1), np.bool_)
    for s in range(start, stop):
        for k in range(n):
            op[sites_j[k], sites_i[k]] = (s >> k) & 1 == 1
        has_contour = _contour_bfs(op).shape[0] > 0
        if has_contour == _site_path_exists(op):
            bad += 1
    return bad


def duality_failures(T, l, states=None):
    """Number of site states violating contour XOR crossing; all 2^n by default."""
    sj, si = np.nonzero(site_mask(T, l))
    n = len(sj)
    if n > 24:
        raise ValueError("too many sites for exhaustive enumeration")
    stop = 1 << n if states is None else states
    return int(_duality_sweep(T, l, sj.astype(np.int64), si.astype(np.int64), 0, stop))


# -- contour counting ----------------------------------------------------------

_MOVES = ((1, 1), (-1, 1), (1, -1), (-1, -1))


def enumerate_contours(m):
    """Self-avoiding dual walks of m steps from (1, 0) with net rightward drift.

    These are the candidates for a contour of length m leaving the left wall
    at a fixed node; walks are on the unbounded dual lattice.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if m > 12:
        raise ValueError("enumeration is limited to m <= 12")
    out = []
    path = [(1, 0)]
    seen = {(1, 0)}

    def rec():
        if len(path) == m + 1:
            if path[-1][1] - path[0][1] >= 1:
                out.append(list(path))
            return
        j, i = path[-1]
        for dj, di in _MOVES:
            nxt = (j + dj, i + di)
            if nxt not in seen:
                seen.add(nxt)
                path.append(nxt)
                rec()
                path.pop()
                seen.discard(nxt)

    rec()
    return out


def extract_independent(sites, gap=2):
    """Greedy subset of sites with pairwise L-infinity distance > gap."""
    chosen = []
    for s in sites:
        if all(max(abs(s[0] - c[0]), abs(s[1] - c[1])) > gap for c in chosen):
            chosen.append(s)
    return chosen


@dataclass
class CountAudit:
    m: int
    count: int
    bound: int
    min_independent: int
    required: int

    @property
    def ok(self):
        return self.count <= self.bound and self.min_independent >= self.required


def contour_count_audit(m):
    walks = enumerate_contours(m)
    need = math.ceil(m / 20)
    worst = min((len(extract_independent(
        [s for s in (crossed_site(a, b) for a, b in zip(w, w[1:])) if s is not None]))
        for w in walks), default=need)
    return CountAudit(m, len(walks), 4 ** m, worst, need)
