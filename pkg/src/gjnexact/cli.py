"""Command-line interface.

Subcommands: ``validate`` a network config, ``sample`` exact stationary draws
to JSONL, ``analyze`` a sample file against the closed-form oracle, ``benchmark``
for the built-in benchmark columns, ``baseline`` for the approximate
forward-simulation cross-check, and ``bench`` for kernel timing.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from .network import NetworkSpec, build_auxiliary, check_stability, network_from_dict, solve_flow

try:  # Python 3.11+
    import tomllib as _toml
except ModuleNotFoundError:  # pragma: no cover - version dependent
    import tomli as _toml


def load_config(path: str) -> NetworkSpec:
    """Read a network description from TOML or JSON.

    The file holds ``arrival`` (list of distribution strings or null),
    ``service`` (list of distribution strings) and ``routing`` (row-major
    probability matrix), either top-level or under a ``[network]`` table.
    """
    with open(path, "rb") as fh:
        if path.endswith(".json"):
            data = json.load(fh)
        else:
            data = _toml.load(fh)
    if "network" in data:
        data = data["network"]
    return network_from_dict(data)


def _clean(x: float) -> float | None:
    return None if (x is None or (isinstance(x, float) and math.isnan(x))) else float(x)


def cmd_validate(args) -> int:
    spec = load_config(args.config)
    phi = check_stability(spec)
    aux = build_auxiliary(spec)
    print(f"stations: {spec.d}")
    print(f"arrival rates:   {np.array(spec.lam)}")
    print(f"service rates:   {np.array(spec.mu)}")
    print(f"throughput:      {phi}")
    print(f"utilization:     {phi / np.array(spec.mu)}")
    print(f"slack delta:     {aux.delta:.6g}")
    print(f"slowdown:        {aux.slowdown}")
    print("stable: yes")
    return 0


def cmd_sample(args) -> int:
    from .dcftp import SamplerOptions, sample_batch

    spec = load_config(args.config)
    opt = SamplerOptions(
        max_rounds=args.max_rounds,
        max_events=args.max_events,
    )
    ys, states, records = sample_batch(spec, args.n, args.seed, options=opt, workers=args.workers)
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        for i, (st, rec) in enumerate(zip(states, records)):
            row = {
                "index": i,
                "y": [int(v) for v in st.y],
                "residual_service": [float(v) for v in st.residual_service],
                "residual_arrival": [_clean(v) for v in st.residual_arrival],
                "tau": float(rec.tau),
                "rounds": int(rec.rounds),
                "draws": int(rec.draws),
            }
            out.write(json.dumps(row) + "\n")
    finally:
        if args.out:
            out.close()
    mean = ys.mean(axis=0)
    print(f"wrote {args.n} samples; sample mean {np.array2string(mean, precision=4)}", file=sys.stderr)
    return 0


def _read_samples(path: str) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line)["y"])
    return np.asarray(rows, dtype=np.int64)


def cmd_analyze(args) -> int:
    from .oracle_stats import ProductFormOracle, histogram_csv, summarize

    ys = _read_samples(args.infile)
    oracle = None
    if args.config:
        spec = load_config(args.config)
        try:
            oracle = ProductFormOracle.from_spec(spec)
        except Exception as exc:  # non-Markovian configs have no closed form
            print(f"no closed-form oracle: {exc}", file=sys.stderr)
    summ = summarize(ys, oracle)
    print(f"samples: {summ.n}")
    for i in range(ys.shape[1]):
        line = f"station {i}: mean {summ.mean[i]:.4f} +- {summ.ci_halfwidth[i]:.4f}"
        if oracle is not None:
            line += f"   truth {oracle.mean[i]:.4f}   chi2 p {summ.gof_p[i]:.4f}"
        print(line)
    d = ys.shape[1]
    for i in range(d):
        for j in range(i + 1, d):
            print(
                f"independence {i},{j}: r {summ.pearson_r[i, j]:+.4f}"
                f"  p {summ.pearson_p[i, j]:.4f}"
            )
    if args.hist:
        with open(args.hist, "w") as fh:
            histogram_csv(ys, fh, oracle)
        print(f"histogram written to {args.hist}", file=sys.stderr)
    return 0


def cmd_benchmark(args) -> int:
    from .oracle_stats import reproduce_benchmark

    cols = None
    if args.columns:
        cols = [int(c) for c in args.columns.split(",")]
    rows = reproduce_benchmark(n=args.n, master_seed=args.seed, columns=cols, workers=args.workers)
    for row in rows:
        print(f"column {row['column']}  (lam = {row['lam']})   n = {row['n']}")
        for i in range(len(row["mean"])):
            cover = "ok" if row["ci_covers_truth"][i] else "MISS"
            print(
                f"  station {i}: mean {row['mean'][i]:.4f}"
                f" +- {row['ci_halfwidth'][i]:.4f}"
                f"   truth {row['truth_exact'][i]:.4f}  [{cover}]"
                f"   chi2 p {row['gof_p'][i]:.3f}"
            )
        print(
            f"  independence p {row['pearson_p']:.3f}"
            f"   rounds mean {row['mean_rounds']:.2f} max {row['max_rounds']}"
        )
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


def cmd_baseline(args) -> int:
    from .dcftp import naive_steady_state_sim

    spec = load_config(args.config)
    ys = naive_steady_state_sim(spec, args.burn_in, args.horizon, args.seed, n_samples=args.n)
    mean = ys.mean(axis=0)
    print("approximate long-run simulation (biased by burn-in and autocorrelation):")
    print(f"  grid samples: {ys.shape[0]}")
    print(f"  mean occupancy: {np.array2string(mean, precision=4)}")
    return 0


def cmd_bench(args) -> int:
    from .bench import run_bench

    run_bench(steps=args.steps, repeat=args.repeat)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gjnexact", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a network config for stability")
    v.add_argument("--config", required=True)
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("sample", help="draw exact stationary samples to JSONL")
    s.add_argument("--config", required=True)
    s.add_argument("--n", type=int, default=100)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", default=None)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--max-rounds", type=int, default=None)
    s.add_argument("--max-events", type=int, default=None)
    s.set_defaults(func=cmd_sample)

    a = sub.add_parser("analyze", help="summarize a JSONL sample file")
    a.add_argument("--in", dest="infile", required=True)
    a.add_argument("--config", default=None)
    a.add_argument("--hist", default=None)
    a.set_defaults(func=cmd_analyze)

    t = sub.add_parser("benchmark", help="reproduce the built-in benchmark columns")
    t.add_argument("--n", type=int, default=10_000)
    t.add_argument("--seed", type=int, default=20_260_101)
    t.add_argument("--columns", default=None, help="comma-separated column indices")
    t.add_argument("--workers", type=int, default=1)
    t.add_argument("--out", default=None)
    t.set_defaults(func=cmd_benchmark)

    b = sub.add_parser("baseline", help="approximate forward-simulation cross-check")
    b.add_argument("--config", required=True)
    b.add_argument("--burn-in", type=float, default=1000.0)
    b.add_argument("--horizon", type=float, default=11000.0)
    b.add_argument("--seed", type=int, required=True)
    b.add_argument("--n", type=int, default=1000)
    b.set_defaults(func=cmd_baseline)

    k = sub.add_parser("bench", help="time the walk kernel on both backends")
    k.add_argument("--steps", type=int, default=200_000)
    k.add_argument("--repeat", type=int, default=3)
    k.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
