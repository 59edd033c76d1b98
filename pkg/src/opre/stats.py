"""Small statistics helpers shared by the validators and the CLI."""

import math

import numpy as np
from scipy import stats


def wilson_ci(successes, trials, level=0.95):
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    if not 0 <= successes <= trials:
        raise ValueError("successes must lie in [0, trials]")
    z = stats.norm.ppf(0.5 + level / 2)
    phat = successes / trials
    denom = 1 + z * z / trials
    centre = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return lo, hi


def within_sigma(successes, trials, p, k=3.0):
    """True when successes/trials is within k binomial standard errors of p."""
    sd = math.sqrt(max(p * (1 - p), 0.0) / trials)
    return abs(successes / trials - p) <= k * sd + 1e-15


def ks_pvalue(sample, cdf):
    return float(stats.kstest(np.asarray(sample, dtype=float), cdf).pvalue)


def discrete_ks_pvalue(sample, pmf, rng):
    """KS test for an integer law given by ``pmf`` on 0..len(pmf)-1.

    Each k is mapped to F(k-1) + V P(k) with V uniform (randomised probability
    integral transform), which is exactly uniform under the null.
    """
    k = np.asarray(sample, dtype=np.int64)
    pmf = np.asarray(pmf, dtype=float)
    if np.any((k < 0) | (k >= len(pmf))):
        raise ValueError("sample outside the support of pmf")
    cdf_below = np.concatenate(([0.0], np.cumsum(pmf)))[k]
    u = cdf_below + rng.random(len(k)) * pmf[k]
    return float(stats.kstest(u, "uniform").pvalue)


def chi2_pvalue(counts, probs, min_expected=5.0):
    """Pearson chi-square goodness of fit with tail pooling.

    ``probs`` are the model cell probabilities for ``counts``; whatever mass is
    missing is assigned to an extra overflow cell with zero observations.
    Adjacent cells are merged from the right until every expected count reaches
    ``min_expected``.
    """
    counts = np.asarray(counts, dtype=float)
    probs = np.asarray(probs, dtype=float)
    n = counts.sum()
    rest = 1.0 - probs.sum()
    if rest > 1e-12:
        counts = np.append(counts, 0.0)
        probs = np.append(probs, rest)
    obs, exp = [], []
    acc_o = acc_e = 0.0
    for o, p in zip(counts[::-1], probs[::-1]):
        acc_o += o
        acc_e += p * n
        if acc_e >= min_expected:
            obs.append(acc_o)
            exp.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 and obs:
        obs[-1] += acc_o
        exp[-1] += acc_e
    obs = np.array(obs[::-1])
    exp = np.array(exp[::-1])
    if len(obs) < 2:
        return 1.0
    exp *= obs.sum() / exp.sum()
    return float(stats.chisquare(obs, exp).pvalue)
