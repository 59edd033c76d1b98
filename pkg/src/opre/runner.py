"""Replication pool and result files.

Every replication gets its own seed from (master, index, label), so results
do not depend on how indices are split between workers.  Results come back in
index order.
"""

import csv
import hashlib
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from . import __version__
from .seeding import derive_seed
from .stats import wilson_ci

COLUMNS = ("name", "estimate", "ci_lo", "ci_hi", "n", "seconds")


def _run_chunk(fn, master, label, indices, args, items):
    if items is None:
        return [fn(derive_seed(master, i, label), *args) for i in indices]
    return [fn(derive_seed(master, i, label), items[i], *args) for i in indices]


def replicate(fn, n, master, label, workers=1, args=(), items=None):
    """[fn(seed_0, *args), ..., fn(seed_{n-1}, *args)] with derived seeds.

    With ``items`` the calls are fn(seed_i, items[i], *args) and n is ignored.
    ``fn`` must be a module-level function so that worker processes can
    import it.
    """
    if items is not None:
        items = list(items)
        n = len(items)
    if n < 0:
        raise ValueError("n must be non-negative")
    workers = max(1, int(workers))
    if workers == 1 or n <= 1:
        return _run_chunk(fn, master, label, range(n), args, items)
    size = -(-n // workers)
    chunks = [range(a, min(a + size, n)) for a in range(0, n, size)]
    k = len(chunks)
    with ProcessPoolExecutor(max_workers=min(workers, k)) as pool:
        parts = pool.map(_run_chunk, [fn] * k, [master] * k, [label] * k, chunks,
                         [args] * k, [items] * k)
        out = []
        for p in parts:
            out.extend(p)
    return out


@dataclass
class Row:
    name: str
    estimate: float
    ci_lo: float
    ci_hi: float
    n: int
    seconds: float = 0.0

    def as_tuple(self):
        return (self.name, self.estimate, self.ci_lo, self.ci_hi, self.n, self.seconds)


def proportion_row(name, successes, trials, seconds=0.0):
    lo, hi = wilson_ci(successes, trials)
    return Row(name, successes / trials, lo, hi, trials, seconds)


def value_row(name, value, n=1, seconds=0.0):
    return Row(name, float(value), float(value), float(value), n, seconds)


def config_hash(config):
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def render(rows, config, seed, fmt="csv", reproducible=True):
    """Result file text; ``seconds`` is zeroed in reproducible mode."""
    meta = {"version": __version__, "seed": int(seed), "config_sha256": config_hash(config)}
    recs = []
    for r in rows:
        t = list(r.as_tuple())
        if reproducible:
            t[5] = 0.0
        recs.append(t)
    if fmt == "json":
        return json.dumps({"meta": meta, "columns": COLUMNS,
                           "rows": [dict(zip(COLUMNS, t)) for t in recs]},
                          indent=2, default=float) + "\n"
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    buf = io.StringIO()
    buf.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for t in recs:
        w.writerow([t[0]] + [repr(float(x)) for x in t[1:4]] + [int(t[4]), repr(float(t[5]))])
    return buf.getvalue()
