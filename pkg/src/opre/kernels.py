"""Connection functions: open probabilities as a function of a stretch.

Every kind is evaluated both as a probability and as the log of its
complement, so that products over long contours never underflow.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

KINDS = ("constant", "power", "cppr_uniform", "cppr_bernoulli", "cpre_edge", "cpre_vertex")


@dataclass(frozen=True)
class ConnectionFamily:
    kind: str
    lam: float = 0.0
    sigma: float = 1.0
    p: float = 1.0  # constant kind only
    L: int = 2  # cpre kinds only

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.lam < 0 or not math.isfinite(self.lam):
            raise ValueError("lam must be a finite number >= 0")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.kind == "constant" and not 0.0 <= self.p <= 1.0:
            raise ValueError("constant kernel needs p in [0, 1]")
        if self.kind in ("cpre_edge", "cpre_vertex") and int(self.L) < 1:
            raise ValueError("L must be a positive integer")

    def with_lam(self, lam):
        return ConnectionFamily(self.kind, lam, self.sigma, self.p, self.L)

    def to_dict(self):
        out = {"kind": self.kind, "lam": self.lam, "sigma": self.sigma}
        if self.kind == "constant":
            out["p"] = self.p
        if self.kind in ("cpre_edge", "cpre_vertex"):
            out["L"] = self.L
        return out

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], float(d.get("lam", 0.0)), float(d.get("sigma", 1.0)),
                   float(d.get("p", 1.0)), int(d.get("L", 2)))


def constant(p):
    return ConnectionFamily("constant", p=p)


def power(lam, sigma=1.0):
    return ConnectionFamily("power", lam, sigma)


def cppr_uniform(lam, sigma=1.0):
    return ConnectionFamily("cppr_uniform", lam, sigma)


def cppr_bernoulli(lam, sigma=1.0):
    return ConnectionFamily("cppr_bernoulli", lam, sigma)


def cpre_edge(L, sigma=1.0):
    return ConnectionFamily("cpre_edge", 0.0, sigma, L=L)


def cpre_vertex(L):
    return ConnectionFamily("cpre_vertex", L=L)


# -- Poisson tails -----------------------------------------------------------

def _log_terms(lam, lo, hi):
    i = np.arange(lo, hi, dtype=float)
    return -lam + i * math.log(lam) - gammaln(i + 1)


def log_poisson_head(lam, k):
    """log P(Poisson(lam) < k); -inf for k == 0."""
    if k <= 0:
        return -math.inf
    return float(logsumexp(_log_terms(lam, 0, k)))


def log_poisson_tail(lam, k):
    """log P(Poisson(lam) >= k)."""
    if k <= 0:
        return 0.0
    if lam <= 0:
        return -math.inf
    if k > lam:
        # terms decrease geometrically once i > lam; sum until negligible
        width = 64
        terms = _log_terms(lam, k, k + width)
        while terms[-1] - terms[0] > -60 and width < 1 << 20:
            width *= 2
            terms = _log_terms(lam, k, k + width)
        return float(logsumexp(terms))
    head = log_poisson_head(lam, k)
    return math.log1p(-math.exp(head)) if head < -1e-300 else -math.inf


def poisson_tail(lam, k):
    """P(Poisson(lam) >= k), i.e. the chance that k Exp(lam) gaps sum to <= 1."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    k = int(k)
    if k <= 0:
        return 1.0
    if k > lam:
        return math.exp(log_poisson_tail(lam, k))
    return -math.expm1(log_poisson_head(lam, k))


# -- evaluation --------------------------------------------------------------

def _check_s(s):
    arr = np.asarray(s, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ValueError("stretch must be >= 0")
    return arr


def _log1mexp(x):
    """log(1 - exp(x)) for x <= 0, accurate at both ends."""
    x = np.asarray(x, dtype=float)
    out = np.full(x.shape, -np.inf)
    small = x > -math.log(2)
    with np.errstate(divide="ignore"):
        out[small] = np.log(-np.expm1(x[small]))
    big = ~small
    out[big] = np.log1p(-np.exp(x[big]))
    return out


def _isqrt_floor(scaled):
    # exact integer square root of floor(s); an infinite stretch maps to a huge k
    return np.array([math.isqrt(int(math.floor(v))) if math.isfinite(v) else 10**9
                     for v in np.ravel(scaled)],
                    dtype=np.int64).reshape(np.shape(scaled))


def _bernoulli_log(lam, ks, closed):
    uniq, inv = np.unique(ks, return_inverse=True)
    vals = np.empty(len(uniq))
    for n, k in enumerate(uniq):
        if closed:
            vals[n] = log_poisson_head(lam, int(k)) if lam > 0 else (0.0 if k > 0 else -math.inf)
        else:
            vals[n] = log_poisson_tail(lam, int(k)) if lam > 0 else (0.0 if k == 0 else -math.inf)
    return vals[inv].reshape(np.shape(ks))


def log_open(fam, s):
    """log kappa(sigma * s)."""
    s = _check_s(s)
    x = fam.sigma * s
    kind = fam.kind
    if kind == "constant":
        out = np.full(s.shape, math.log(fam.p) if fam.p > 0 else -math.inf)
    elif kind == "cpre_vertex":
        out = np.full(s.shape, -2.0 / fam.L)
    elif kind == "power":
        base = math.log(-math.expm1(-fam.lam)) if fam.lam > 0 else -math.inf
        with np.errstate(invalid="ignore"):
            out = np.where(x == 0, 0.0, x * base)
    elif kind == "cppr_uniform":
        if fam.lam == 0:
            out = np.full(s.shape, -math.inf)
        else:
            y = math.log(fam.lam) - x  # log of lam * e^{-x}
            out = _log1mexp(-np.exp(y))
            tiny = y < -30
            out[tiny] = y[tiny] + np.log1p(-np.exp(y[tiny]) / 2)
    elif kind == "cppr_bernoulli":
        out = _bernoulli_log(fam.lam, _isqrt_floor(x), closed=False)
    elif kind == "cpre_edge":
        with np.errstate(divide="ignore"):
            lc = fam.L * np.log1p(-np.exp(-x))
        out = _log1mexp(lc)
    else:  # pragma: no cover
        raise ValueError(kind)
    return out if out.ndim else float(out)


def log_closed(fam, s):
    """log(1 - kappa(sigma * s)); -inf when the kernel equals one."""
    s = _check_s(s)
    x = fam.sigma * s
    kind = fam.kind
    if kind == "constant":
        out = np.full(s.shape, math.log1p(-fam.p) if fam.p < 1 else -math.inf)
    elif kind == "cpre_vertex":
        out = np.full(s.shape, math.log(-math.expm1(-2.0 / fam.L)))
    elif kind == "power":
        lo = log_open(fam, s)
        out = _log1mexp(np.asarray(lo, dtype=float))
    elif kind == "cppr_uniform":
        out = -fam.lam * np.exp(-x)
    elif kind == "cppr_bernoulli":
        out = _bernoulli_log(fam.lam, _isqrt_floor(x), closed=True)
    elif kind == "cpre_edge":
        with np.errstate(divide="ignore"):
            out = fam.L * np.log1p(-np.exp(-x))
    else:  # pragma: no cover
        raise ValueError(kind)
    return out if out.ndim else float(out)


def eval_kernel(fam, s):
    """Open probability kappa(sigma * s)."""
    s = _check_s(s)
    kind = fam.kind
    x = fam.sigma * s
    if kind == "constant":
        out = np.full(s.shape, fam.p)
    elif kind == "cpre_vertex":
        out = np.full(s.shape, math.exp(-2.0 / fam.L))
    elif kind == "cppr_uniform":
        out = -np.expm1(-fam.lam * np.exp(-x))
    elif kind == "cppr_bernoulli":
        ks = _isqrt_floor(x)
        uniq, inv = np.unique(ks, return_inverse=True)
        if fam.lam > 0:
            vals = np.array([poisson_tail(fam.lam, int(k)) for k in uniq])
        else:
            vals = (uniq == 0).astype(float)
        out = vals[inv].reshape(ks.shape)
    elif kind == "cpre_edge":
        with np.errstate(divide="ignore"):
            out = -np.expm1(fam.L * np.log1p(-np.exp(-x)))
    else:
        out = np.exp(np.asarray(log_open(fam, s), dtype=float))
    out = np.clip(out, 0.0, 1.0)
    return out if out.ndim else float(out)


# -- kernel condition audit --------------------------------------------------

@dataclass
class BoundReport:
    kind: str
    lam: float
    sigma: float
    s_min: int
    s_max: int
    min_margin: float  # min over the grid of log kappa(s) + sigma * s
    argmin: int
    violations: int
    first_violations: list

    @property
    def ok(self):
        return self.violations == 0


def check_kernel_bounds(fam, s_grid, sigma=1.0):
    """Check kappa(s) >= exp(-sigma s) on an integer grid, in log space.

    ``fam`` is evaluated as given (its own rescaling included); ``sigma`` is
    the exponent of the lower bound being tested.
    """
    s = np.asarray(s_grid, dtype=np.int64)
    if s.ndim != 1 or len(s) == 0 or s.min() < 1:
        raise ValueError("s_grid must be a non-empty range of integers >= 1")
    margin = np.asarray(log_open(fam, s.astype(float)), dtype=float) + sigma * s
    bad = np.flatnonzero(margin < 0)
    k = int(np.argmin(margin))
    return BoundReport(fam.kind, fam.lam, sigma, int(s.min()), int(s.max()), float(margin[k]),
                       int(s[k]), int(len(bad)), [int(v) for v in s[bad[:10]]])
