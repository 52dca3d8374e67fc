"""Kernel benchmark: compiled backend versus the pure-Python fallback.

The backend is fixed at import time by the GJNEXACT_NO_JIT environment
variable, so the other backend is measured in a subprocess with the flag
flipped.  The workload is the dominant inner loop: generating random-walk
rows for a small two-station reference network.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from ._jit import BACKEND
from .multiwalk import WalkSamplerState, build_increment_model, find_theta_star
from .network import build_auxiliary, network_from_dict


def _reference_model():
    spec = network_from_dict(
        {
            "arrival": ["exp(rate=0.225)", "exp(rate=0.717)"],
            "service": ["exp(rate=1.0)", "exp(rate=1.0)"],
            "routing": [[0.0, 0.11], [0.10, 0.0]],
        }
    )
    aux = build_auxiliary(spec)
    model = build_increment_model(aux, spec)
    tilt = find_theta_star(model)
    return model, tilt


def time_walk(steps: int, repeat: int, seed: int = 7) -> list[float]:
    """Seconds per run of generating at least ``steps`` confirmed walk rows."""
    model, tilt = _reference_model()
    times = []
    for k in range(repeat):
        rng = np.random.Generator(np.random.PCG64(seed + k))
        state = WalkSamplerState(model, tilt, rng)
        t0 = time.perf_counter()
        state.ensure_confirmed(steps)
        times.append(time.perf_counter() - t0)
    return times


def _report(label: str, steps: int, times: list[float]) -> None:
    best = min(times)
    print(f"{label:>12}: best {best * 1e3:9.1f} ms   {steps / best / 1e6:6.2f} M rows/s   runs {['%.3f' % t for t in times]}")


def run_bench(steps: int = 200_000, repeat: int = 3) -> None:
    # warm-up excluded from timing (compilation happens on first call)
    time_walk(min(steps, 2048), 1)
    times = time_walk(steps, repeat)
    _report(BACKEND, steps, times)
    env = dict(os.environ)
    if BACKEND == "numba":
        env["GJNEXACT_NO_JIT"] = "1"
        other = "python"
    else:
        env.pop("GJNEXACT_NO_JIT", None)
        other = "numba"
    proc = subprocess.run(
        [sys.executable, "-m", "gjnexact.bench", "--inner", "--steps", str(steps), "--repeat", str(repeat)],
        env=env,
        capture_output=True,
        text=True,
    )
    if proc.returncode == 0:
        sys.stdout.write(proc.stdout)
    else:
        print(f"({other} backend run failed: {proc.stderr.strip()})")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--inner", action="store_true", help="time only the current backend")
    args = ap.parse_args(argv)
    if args.inner:
        time_walk(min(args.steps, 2048), 1)
        _report(BACKEND, args.steps, time_walk(args.steps, args.repeat))
    else:
        run_bench(steps=args.steps, repeat=args.repeat)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
