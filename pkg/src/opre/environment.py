"""Columnar stretch environments and their stationary renewal embedding."""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as gamma_fn

DIST_KINDS = {
    "constant": ("value",),
    "exponential": ("rate",),
    "geometric": ("q",),
    "squared_geometric": ("q",),
    "pareto": ("shape", "scale"),
    "stretched_exp": ("a",),
}


@dataclass(frozen=True)
class Dist:
    """A stretch law.

    Geometric variables live on {1, 2, ...} with P(K >= l + 1) = (1 - q)**l,
    so P(K = 1) = q.  ``stretched_exp`` has P(nu > s) = exp(-s**a).
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in DIST_KINDS:
            raise ValueError(f"unsupported distribution kind {self.kind!r}")
        for name in DIST_KINDS[self.kind]:
            if name not in self.params:
                raise ValueError(f"{self.kind} needs parameter {name!r}")
            v = float(self.params[name])
            if not math.isfinite(v) or v < 0 or (v == 0 and self.kind != "constant"):
                raise ValueError(f"{self.kind}.{name} must be positive, got {v}")
        if self.kind in ("geometric", "squared_geometric") and not self.params["q"] <= 1:
            raise ValueError("geometric q must lie in (0, 1]")
        if self.kind == "stretched_exp" and not self.params["a"] < 1:
            raise ValueError("stretched_exp needs a in (0, 1)")

    def __hash__(self):
        return hash((self.kind, tuple(sorted(self.params.items()))))

    def to_dict(self):
        return {"kind": self.kind, **{k: float(v) for k, v in self.params.items()}}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kind = d.pop("kind")
        return cls(kind, {k: float(v) for k, v in d.items()})

    def sample(self, n, rng):
        p = self.params
        if self.kind == "constant":
            return np.full(n, float(p["value"]))
        if self.kind == "exponential":
            return rng.exponential(1.0 / p["rate"], n)
        if self.kind == "geometric":
            return rng.geometric(p["q"], n).astype(float)
        if self.kind == "squared_geometric":
            return rng.geometric(p["q"], n).astype(float) ** 2
        if self.kind == "pareto":
            return p["scale"] * (1.0 + rng.pareto(p["shape"], n))
        # P(nu > s) = exp(-s^a)  <=>  nu = E^(1/a) with E ~ Exp(1)
        return rng.exponential(1.0, n) ** (1.0 / p["a"])

    def moment(self, r):
        """Analytic E[nu**r], math.inf when infinite, None when not tabulated."""
        p = self.params
        if self.kind == "constant":
            return float(p["value"]) ** r
        if self.kind == "exponential":
            return float(gamma_fn(1 + r) / p["rate"] ** r)
        if self.kind == "stretched_exp":
            return float(gamma_fn(1 + r / p["a"]))
        if self.kind == "pareto":
            a, m = p["shape"], p["scale"]
            return math.inf if r >= a else a * m ** r / (a - r)
        if self.kind in ("geometric", "squared_geometric"):
            q = p["q"]
            if q == 1:
                return 1.0
            power = r if self.kind == "geometric" else 2 * r
            k = np.arange(1, 20000, dtype=float)
            logs = power * np.log(k) + np.log(q) + (k - 1) * np.log1p(-q)
            return float(np.exp(logs).sum())
        return None

    def heavy(self, eps):
        """True when the (1 + eps)-moment is infinite."""
        m = self.moment(1 + eps)
        return m is not None and math.isinf(m)


@dataclass(frozen=True)
class StretchSpec:
    xi: Dist
    nu: Dist
    eps: float = 0.5  # declared moment exponent is 1 + eps

    @property
    def heavy(self):
        return self.xi.heavy(self.eps) or self.nu.heavy(self.eps)

    def to_dict(self):
        return {"xi": self.xi.to_dict(), "nu": self.nu.to_dict(), "eps": self.eps}

    @classmethod
    def from_dict(cls, d):
        return cls(Dist.from_dict(d["xi"]), Dist.from_dict(d["nu"]), float(d.get("eps", 0.5)))


@dataclass(frozen=True)
class StretchEnvironment:
    """xi[x] for column x, nu[x] for the bond (x, x + 1)."""

    xi: np.ndarray
    nu: np.ndarray

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float)
        nu = np.asarray(self.nu, dtype=float)
        if xi.ndim != 1 or len(xi) < 1:
            raise ValueError("environment needs at least one column")
        if len(nu) != len(xi) - 1:
            raise ValueError("nu must have one entry per bond (width - 1)")
        if np.any(xi < 0) or np.any(nu < 0):
            raise ValueError("stretches must be non-negative")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "nu", nu)

    @property
    def width(self):
        return len(self.xi)


def sample_stretches(spec, width, seed):
    if width < 1:
        raise ValueError("width must be >= 1")
    rng = np.random.default_rng(seed)
    xi = spec.xi.sample(width, rng)
    nu = spec.nu.sample(width - 1, rng)
    return StretchEnvironment(xi, nu)


@dataclass(frozen=True)
class RenewalEmbedding:
    points: np.ndarray  # X_i, strictly increasing integers
    B: int
    xi_at: np.ndarray  # ceil(xi_i)
    nu_gap: np.ndarray  # ceil(nu_{i,i+1}), one shorter than points
    chi: int
    chi_mode: str = "zero"

    @property
    def n(self):
        return len(self.points)

    def column_of(self, x):
        """Column index i with X_i == x, or raise KeyError."""
        i = int(np.searchsorted(self.points, x))
        if i < self.n and self.points[i] == x:
            return i
        raise KeyError(x)


def parse_chi_mode(mode):
    if mode == "zero" or mode is None:
        return 0
    if isinstance(mode, (tuple, list)) and len(mode) == 2 and mode[0] == "burn_in":
        n = int(mode[1])
        if n < 1:
            raise ValueError("burn_in needs at least one interarrival")
        return n
    if isinstance(mode, str) and mode.startswith("burn_in"):
        return parse_chi_mode(("burn_in", mode.split(":", 1)[1]))
    raise ValueError(f"unknown chi mode {mode!r}")


def build_embedding(env, parity_seed, chi_mode="zero"):
    """Integerise the environment and place its columns on Z_{>=0}.

    In ``zero`` mode X_0 = 0.  In ``burn_in(n)`` mode the first n interarrivals
    are consumed: a time u is drawn uniformly from [0, S_n) and X_0 is the
    forward waiting time from u to the next partial sum, which is the
    length-biased (stationary) delay of the integer renewal.  The remaining
    columns then form the embedding.
    """
    n_burn = parse_chi_mode(chi_mode)
    if n_burn >= env.width:
        raise ValueError("burn-in consumes the whole environment")
    rng = np.random.default_rng(parity_seed)
    B = int(rng.integers(2))
    xi_int = np.ceil(env.xi).astype(np.int64)
    nu_int = np.ceil(env.nu).astype(np.int64)
    gaps = xi_int[:-1] + nu_int
    chi = 0
    if n_burn:
        sums = np.concatenate(([0], np.cumsum(gaps[:n_burn])))
        total = int(sums[-1])
        if total <= 0:
            raise ValueError("burn-in interarrivals sum to zero")
        u = int(rng.integers(total))
        chi = int(sums[np.searchsorted(sums, u)] - u)
    xi_at = xi_int[n_burn:]
    nu_gap = nu_int[n_burn:]
    g = gaps[n_burn:]
    if np.any(g <= 0):
        raise ValueError("zero integer gap: consecutive columns would coincide")
    points = chi + np.concatenate(([0], np.cumsum(g)))
    mode = "zero" if not n_burn else f"burn_in:{n_burn}"
    return RenewalEmbedding(points.astype(np.int64), B, xi_at, nu_gap, chi, mode)


def embedding_from_points(points, B=0, xi_at=None, nu_gap=None):
    """Embedding with given renewal points, e.g. for hand-built examples.

    Unless given, the stretches are split as xi = 0 and nu = gap.
    """
    pts = np.asarray(points, dtype=np.int64)
    if pts.ndim != 1 or len(pts) < 1 or np.any(np.diff(pts) <= 0) or pts[0] < 0:
        raise ValueError("points must be non-negative and strictly increasing")
    gaps = np.diff(pts)
    xi_at = np.zeros(len(pts), np.int64) if xi_at is None else np.asarray(xi_at, np.int64)
    nu_gap = gaps.copy() if nu_gap is None else np.asarray(nu_gap, np.int64)
    return RenewalEmbedding(pts, int(B), xi_at, nu_gap, int(pts[0]), "given")


def gap_lookup(emb, i):
    """(xi_i, nu_{i,i+1}) for column i; nu is None at the last column."""
    if not 0 <= i < emb.n:
        raise IndexError(f"column {i} outside 0..{emb.n - 1}")
    nu = int(emb.nu_gap[i]) if i < len(emb.nu_gap) else None
    return int(emb.xi_at[i]), nu


def interarrival_pmf(spec, kmax=4096, n=None):
    """pmf of ceil(xi) + ceil(nu) on 0..kmax for exponential/constant/geometric laws.

    ``n`` is unused for the analytic kinds and kept for a Monte Carlo fallback.
    """
    def ceil_pmf(d):
        out = np.zeros(kmax + 1)
        if d.kind == "constant":
            out[int(math.ceil(d.params["value"]))] = 1.0
        elif d.kind == "exponential":
            r = d.params["rate"]
            k = np.arange(1, kmax + 1)
            out[1:] = np.exp(-r * (k - 1)) * -np.expm1(-r)
        elif d.kind == "geometric":
            q = d.params["q"]
            k = np.arange(1, kmax + 1)
            out[1:] = q * (1 - q) ** (k - 1)
        else:
            raise ValueError(f"no analytic integer pmf for {d.kind}")
        return out

    pmf = np.convolve(ceil_pmf(spec.xi), ceil_pmf(spec.nu))[: kmax + 1]
    return pmf


def stationary_delay_pmf(gap_pmf):
    """P(D = k) = P(G > k) / E[G] for the forward delay of an integer renewal."""
    gap_pmf = np.asarray(gap_pmf, dtype=float)
    k = np.arange(len(gap_pmf))
    mean = float((k * gap_pmf).sum())
    surv = 1.0 - np.cumsum(gap_pmf)
    return np.clip(surv, 0.0, None) / mean
