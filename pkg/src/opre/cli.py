"""Command line entry point.

Every subcommand reads an optional JSON config, runs seeded replications in a
worker pool and writes one estimate per row (CSV or JSON).  Exit codes: 0 ok,
1 invalid input, 2 runtime error, 3 acceptance failure.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__, acceptance, contact, couplings, kernels, multiscale
from .environment import Dist, StretchSpec, build_embedding, sample_stretches
from .percolation import (LatticeWindow, Rectangle, crossing, dump_config, sample_opre,
                          survival_depth, temporal_survival_depth)
from .runner import Row, proportion_row, render, replicate, value_row
from .seeding import derive_seed

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_ACCEPTANCE = 0, 1, 2, 3

DEFAULT_ENV = {"xi": {"kind": "exponential", "rate": 1.0},
               "nu": {"kind": "exponential", "rate": 1.0}}

DEFAULTS = {
    "percolate": {"env": DEFAULT_ENV, "width": 201, "t_max": 100, "variant": "plain",
                  "chi_mode": "zero", "kernel": {"kind": "power", "lam": 2.0},
                  "edge_kernel": None, "source": None, "reps": 200},
    "crossing": {"env": DEFAULT_ENV, "width": 41, "t_max": 40, "variant": "plain",
                 "chi_mode": "zero", "kernel": {"kind": "power", "lam": 2.0},
                 "edge_kernel": None, "rect": [0, 40, 10, 20],
                 "kinds": ["LRC", "RLC", "BTC"], "reps": 200},
    "blocks": {"schedule": {"epsilon": 1.0, "alpha": 0.5, "gamma": 1.5, "L0": 32, "mu": 0.7,
                            "beta": 0.8, "K_max": 2, "relaxed": True},
               "env": {"xi": {"kind": "constant", "value": 0.0},
                       "nu": {"kind": "geometric", "q": 0.2}},
               "k": 1, "chi_mode": "burn_in:64", "reps": 200},
    "contact": {"graph": "line", "n": 200, "T": 100.0, "model": "ppp",
                "x": {"kind": "ppp", "rate": 2.0}, "y": {"kind": "ppp", "rate": 1.0},
                "lams": [1.0, 5.0, 20.0], "q": 0.5, "reps": 200},
    "couple": {"kind": "cppr_uni", "params": {}, "reps": 200, "n_dist": 0},
    "temporal": {"p": 0.9, "nu": {"kind": "stretched_exp", "a": 0.5},
                 "T_grid": [100, 1000, 5000], "reps": 200},
    "kernel-audit": {"kernel": {"kind": "cppr_uniform", "lam": 2.0}, "s_max": 10000,
                     "sigma": 1.0},
    "acceptance": {"only": None},
}


class InvalidInput(ValueError):
    pass


def _merge(base, over):
    out = dict(base)
    for k, v in (over or {}).items():
        if k not in base and k != "seed":
            raise InvalidInput(f"unknown config key {k!r}")
        out[k] = v
    return out


def _spec(d):
    return StretchSpec.from_dict({**d, "eps": d.get("eps", 0.5)})


def _source(cfg, width):
    return (0, width // 2) if cfg.get("source") is None else tuple(cfg["source"])


def _sample(cfg, seed):
    rng = np.random.default_rng(seed)
    env = sample_stretches(_spec(cfg["env"]), cfg["width"], rng.integers(2 ** 63))
    fam = kernels.ConnectionFamily.from_dict(cfg["kernel"])
    fam_e = kernels.ConnectionFamily.from_dict(cfg["edge_kernel"] or cfg["kernel"])
    if cfg["variant"] == "embedded":
        source = build_embedding(env, rng.integers(2 ** 63), cfg["chi_mode"])
    else:
        source = env
    window = LatticeWindow(cfg["t_max"], cfg["width"] - 1, cfg["variant"])
    return source, sample_opre(source, fam, fam_e, window, rng.integers(2 ** 63))


# -- replication bodies (module level so the pool can import them) ---------------

def _rep_percolate(seed, cfg):
    _, config = _sample(cfg, seed)
    src = _source(cfg, config.W)
    if (src[0] + src[1] + config.parity) % 2:
        src = (src[0], src[1] + 1)
    return int(survival_depth(config, src))


def _rep_crossing(seed, cfg):
    source, config = _sample(cfg, seed)
    pts = source.points if hasattr(source, "points") else None
    return [bool(crossing(config, pts, Rectangle(*cfg["rect"]), k)) for k in cfg["kinds"]]


def _rep_contact(seed, cfg):
    if cfg["model"] in ("uni", "ber"):
        return contact.cppr_survival(cfg["model"], cfg["lams"], cfg["n"], cfg["T"], seed, cfg["q"])
    x = contact.ClosedSetSpec(**_closed(cfg["x"]))
    y = contact.ClosedSetSpec(**_closed(cfg["y"]))
    inst = contact.sample_instance(cfg["graph"], cfg["n"], x, y, cfg["T"], seed)
    return [contact.survival_probe(inst)]


def _closed(d):
    d = dict(d)
    kind = d.pop("kind")
    return {"kind": kind, "params": d}


def _rep_couple(seed, cfg):
    ci = couplings.sample_coupled(cfg["kind"], cfg["params"], seed)
    return couplings.replay_all(ci, ci.extras.get("dominated", ci.config))


def _rep_temporal(seed, cfg):
    rng = np.random.default_rng(seed)
    T = max(cfg["T_grid"])
    nu = Dist.from_dict(cfg["nu"]).sample(T, rng)
    return temporal_survival_depth(cfg["p"], nu, int(rng.integers(2 ** 32)))


# -- subcommands --------------------------------------------------------------

def cmd_percolate(cfg, seed, args):
    depths = np.array(replicate(_rep_percolate, args.reps, seed, "percolate", args.workers, (cfg,)))
    n = len(depths)
    rows = [proportion_row("survival_to_t_max", int(np.sum(depths >= cfg["t_max"])), n),
            proportion_row("source_open", int(np.sum(depths >= 0)), n),
            value_row("mean_depth", float(depths.mean()), n)]
    if args.dump:
        _, config = _sample(cfg, derive_seed(seed, 0, "percolate"))
        with open(args.dump, "wb") as fh:
            dump_config(config, fh)
    return rows


def cmd_crossing(cfg, seed, args):
    res = np.array(replicate(_rep_crossing, args.reps, seed, "crossing", args.workers, (cfg,)))
    return [proportion_row(k, int(res[:, i].sum()), len(res)) for i, k in enumerate(cfg["kinds"])]


def cmd_blocks(cfg, seed, args):
    s = dict(cfg["schedule"])
    sched = multiscale.build_schedule(s["epsilon"], s["alpha"], s["gamma"], s["L0"], s["mu"],
                                      s["beta"], s["K_max"], s.get("relaxed", False))
    est, (lo, hi), target, ok = multiscale.estimate_bad_prob(
        _spec(cfg["env"]), sched, cfg["k"], args.reps, seed, cfg["chi_mode"])
    rows = [Row(f"bad_prob_k{cfg['k']}", est, lo, hi, args.reps),
            value_row(f"target_L{cfg['k']}^-alpha", target),
            value_row("within_target", float(ok))]
    rows += [value_row(f"L{k}", float(v)) for k, v in enumerate(sched.L)]
    rows += [value_row(f"logH{k}", v) for k, v in enumerate(sched.logH)]
    return rows


def cmd_contact(cfg, seed, args):
    res = np.array(replicate(_rep_contact, args.reps, seed, "contact", args.workers, (cfg,)))
    if cfg["model"] in ("uni", "ber"):
        return [proportion_row(f"survival_lam{lam:g}", int(res[:, i].sum()), len(res))
                for i, lam in enumerate(cfg["lams"])]
    return [proportion_row("survival", int(res[:, 0].sum()), len(res))]


def cmd_couple(cfg, seed, args):
    res = replicate(_rep_couple, args.reps, seed, "couple", args.workers, (cfg,))
    ok = sum(a for a, _ in res)
    tot = sum(b for _, b in res)
    rows = [Row("replayed_paths", tot, ok, ok, len(res)),
            value_row("replay_failures", tot - ok, len(res))]
    if cfg["n_dist"]:
        rng = np.random.default_rng(derive_seed(seed, 0, "couple-dist"))
        tests = couplings.distribution_tests(cfg["kind"], cfg["params"], cfg["n_dist"], rng)
        rows += [value_row(k, v, cfg["n_dist"]) for k, v in tests.items()]
    return rows


def cmd_temporal(cfg, seed, args):
    d = np.array(replicate(_rep_temporal, args.reps, seed, "temporal", args.workers, (cfg,)))
    return [proportion_row(f"tail_T{T}", int(np.sum(d >= T)), len(d)) for T in cfg["T_grid"]]


def cmd_kernel_audit(cfg, seed, args):
    fam = kernels.ConnectionFamily.from_dict(cfg["kernel"])
    rep = kernels.check_kernel_bounds(fam, np.arange(1, int(cfg["s_max"]) + 1), cfg["sigma"])
    return [Row("violations", rep.violations, rep.min_margin, rep.min_margin, rep.s_max),
            value_row("argmin_margin", rep.argmin, rep.s_max)]


COMMANDS = {
    "percolate": cmd_percolate,
    "crossing": cmd_crossing,
    "blocks": cmd_blocks,
    "contact": cmd_contact,
    "couple": cmd_couple,
    "temporal": cmd_temporal,
    "kernel-audit": cmd_kernel_audit,
}


def build_parser():
    p = argparse.ArgumentParser(prog="opre", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"opre {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in list(COMMANDS) + ["acceptance"]:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON config file")
        s.add_argument("--seed", type=int, help="master seed (falls back to OPRE_SEED)")
        s.add_argument("--reps", type=int, help="number of replications")
        s.add_argument("--workers", type=int, default=1)
        s.add_argument("--out", help="write results here instead of stdout")
        s.add_argument("--format", choices=("csv", "json"), default="csv")
        s.add_argument("--timings", action="store_true",
                       help="keep wall-clock seconds (results are then not reproducible)")
        if name == "percolate":
            s.add_argument("--dump", help="binary dump of replication 0's configuration")
        if name == "acceptance":
            s.add_argument("--only", type=int, nargs="+", help="criterion numbers")
    return p


def resolve_seed(cli_seed, cfg):
    if cli_seed is not None:
        return cli_seed
    if "seed" in cfg:
        return int(cfg["seed"])
    env = os.environ.get("OPRE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise InvalidInput(f"OPRE_SEED is not an integer: {env!r}")
    return acceptance.DEFAULT_SEED


def _load_config(path):
    if not path:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise InvalidInput(f"cannot read config {path}: {e}")
    if not isinstance(data, dict):
        raise InvalidInput("config must be a JSON object")
    return data


def _emit(text, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def run_acceptance(cfg, seed, args):
    only = args.only or cfg.get("only")
    results = acceptance.run_all(seed, only=only, workers=args.workers,
                                 echo=lambda s: print(s, file=sys.stderr, flush=True))
    rows = []
    for r in results:
        rows.append(Row(f"criterion_{r.number}_pass", float(r.passed), float(r.passed),
                        float(r.passed), 1, r.seconds))
        rows += [Row(f"c{r.number}.{x.name}", *x.as_tuple()[1:]) for x in r.rows]
    ok = all(r.passed for r in results)
    return rows, ok


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        raw = _load_config(args.config)
        cfg = _merge(DEFAULTS[args.command], raw)
        seed = resolve_seed(args.seed, raw)
        if args.reps is None:
            args.reps = int(cfg.get("reps") or 1)
        if args.reps < 1 or args.workers < 1:
            raise InvalidInput("--reps and --workers must be >= 1")
        cfg["reps"] = args.reps if "reps" in cfg else None
        t = time.perf_counter()
        ok = True
        if args.command == "acceptance":
            rows, ok = run_acceptance(cfg, seed, args)
        else:
            rows = COMMANDS[args.command](cfg, seed, args)
            dt = time.perf_counter() - t
            for r in rows:
                r.seconds = dt
        meta_cfg = {"command": args.command, **{k: v for k, v in cfg.items() if k != "seed"}}
        _emit(render(rows, meta_cfg, seed, args.format, reproducible=not args.timings), args.out)
    except ValueError as e:
        print(f"opre: invalid input: {e}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as e:  # noqa: BLE001 - mapped to the runtime exit code
        print(f"opre: runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK if ok else EXIT_ACCEPTANCE


if __name__ == "__main__":
    sys.exit(main())
