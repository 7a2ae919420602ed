"""Command-line front end.

Exit codes: 0 success, 2 usage or configuration error, 3 numeric or
domain failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from d2dcache.exceptions import BudgetExceededError, DomainError
from d2dcache.offload import offloading_probability
from d2dcache.optimizer import greedy_cache, popularity_cache
from d2dcache.plsa import fit, frequency_baseline, predict, read_requests_csv
from d2dcache.prefs import PreferenceModel, average_similarity
from d2dcache.sim import SCHEMES, ConfigError, SimConfig, build_world, run_manifest, run_schedule
from d2dcache.topology import Topology

EXIT_USAGE = 2
EXIT_DOMAIN = 3


class UsageError(Exception):
    pass


def _load_config(path: str) -> SimConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    return SimConfig.from_json(text)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def cmd_synth(args) -> int:
    config = _load_config(args.config)
    if args.seed is not None:
        config = config.replace(seeds={**config.seeds, "world": args.seed})
    model, topo = build_world(config)
    out = Path(args.out)
    _write(out / "model.json", model.to_json())
    _write(out / "topology.json", topo.to_json())
    sim = average_similarity(model.Q) if model.K >= 2 else 1.0
    print(f"average_cosine_similarity={round(sim, 12)!r}")
    return 0


def cmd_optimize(args) -> int:
    model = PreferenceModel.from_json(Path(args.model).read_text())
    topo = Topology.from_json(Path(args.topology).read_text())
    if topo.K != model.K:
        raise UsageError(f"topology has {topo.K} users but the model has {model.K}")
    if not 0 <= args.cache_size <= model.F:
        raise UsageError(f"cache size M={args.cache_size} must lie in [0, F={model.F}]")
    if args.scheme == "S1":
        cache = greedy_cache(model.Q, model.w, topo, args.cache_size)
    else:
        cache = popularity_cache(model.p, topo, args.cache_size, model.K)
    if args.out:
        _write(Path(args.out), cache.to_json())
    print(f"offloading_probability={offloading_probability(model.Q, model.w, topo, cache)!r}")
    return 0


def cmd_learn(args) -> int:
    try:
        with open(args.requests, newline="") as fh:
            N = read_requests_csv(fh)
    except OSError as exc:
        raise UsageError(f"cannot read requests {args.requests}: {exc.strerror}") from None
    except DomainError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out)
    if args.baseline:
        stats = frequency_baseline(N)
        _write(out / "predicted.json", stats.to_json())
        print(stats.to_json())
        return 0
    params = fit(N, args.topics, args.epsilon, args.max_iter, seed=args.seed, restarts=args.restarts)
    stats = predict(params)
    _write(out / "params.json", params.to_json())
    _write(out / "predicted.json", stats.to_json())
    per_request = params.loglik_trace[-1] / float(N.sum())
    print(f"loglik_per_request={per_request!r}")
    print(f"iterations={params.n_iter}")
    return 0


def cmd_simulate(args) -> int:
    config = _load_config(args.config)
    if args.seed is not None:
        config = config.replace(seeds={k: args.seed + i for i, k in enumerate(config.seeds)})
    if args.scheme:
        unknown = [s for s in args.scheme if s not in SCHEMES]
        if unknown:
            raise UsageError(f"unknown schemes {unknown}; valid names are {list(SCHEMES)}")
        config = config.replace(schemes=tuple(args.scheme))
    series = run_schedule(config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="\n") as fh:
        series.to_csv(fh)
    manifest = Path(args.manifest) if args.manifest else out.with_suffix(".manifest.json")
    _write(manifest, json.dumps(run_manifest(config), indent=2, sort_keys=True) + "\n")
    final = {s: float(v[-1]) for s, v in series.values.items()}
    print(json.dumps({"final_period": series.num_periods, "p_off": final}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="d2dcache", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="draw a preference model and topology")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override seeds.world")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("optimize", help="compute a cache placement")
    p.add_argument("--model", required=True)
    p.add_argument("--topology", required=True)
    p.add_argument("-M", "--cache-size", type=int, required=True)
    p.add_argument("--scheme", choices=("S1", "S2"), default="S1")
    p.add_argument("--out", help="placement JSON path")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("learn", help="estimate preferences from a request CSV")
    p.add_argument("--requests", required=True, help="CSV with header user,file,count")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--topics", type=int, default=10)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--restarts", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--baseline", action="store_true", help="frequency counts instead of EM")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("simulate", help="run the multi-period simulation")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="CSV path")
    p.add_argument("--manifest", help="manifest JSON path (default: next to the CSV)")
    p.add_argument("--scheme", action="append", help="restrict to a scheme (repeatable)")
    p.add_argument("--seed", type=int, help="derive world/traffic/learner seeds from one value")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, BudgetExceededError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
