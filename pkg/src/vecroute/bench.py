"""Desk-scale scaling study of the memory-lean router.

Sweeps one dimension at a time over a doubling ladder while holding the
others at a baseline, and records three costs per point: total parameter
count, peak transient allocation during one forward pass, and median
wall time. Peak memory comes from the in-process allocation accounting
in :mod:`vecroute.memtrack` rather than OS RSS, so figures are stable
across environments; wall time is measured in separate untraced runs so
the accounting overhead never pollutes timing. Results print as a table
and optionally land in a CSV for plotting.

A separate demo routes one million input vectors in a single pass in
variable-length mode and checks the headline memory property: the peak
stays far below the size the materialized proposal tensor would need,
and under a configurable byte budget.

Baselines here are sized for a desktop CPU; ladders reach tens of
thousands of inputs, not millions, and widths are kept moderate. The
command line can push any of them higher.
"""

from __future__ import annotations

import argparse
import csv
import statistics
import sys
import time
from dataclasses import dataclass, replace

import numpy as np

from .memtrack import track_peak
from .optimized import (
    RoutingParams,
    route_optimized,
    total_param_count,
    transient_element_bound,
    vote_param_budget,
)
from .params_io import init_params
from .reference import RoutingDims

__all__ = [
    "CSV_COLUMNS",
    "DEFAULT_BUDGET_BYTES",
    "DEFAULT_LADDERS",
    "BenchRecord",
    "LinearFit",
    "MemoryBudgetError",
    "SweepSpec",
    "big_route_demo",
    "linear_fit",
    "main",
    "run_sweep",
]

SWEEP_DIMENSIONS = ("n_inp", "n_out", "d_inp", "d_out", "n_iters")
CSV_COLUMNS = ("dimension", "value", "params", "peak_bytes", "wall_ms", "repeats")
DEFAULT_BUDGET_BYTES = 4_000_000_000

# Ladder defaults per swept dimension: (values, baseline). Baselines are
# chosen so the cost term that scales with the swept dimension dominates
# the point, keeping both the time and the memory ladders clearly linear.
DEFAULT_LADDERS: dict[str, tuple[tuple[int, ...], dict[str, int]]] = {
    "n_inp": ((4096, 8192, 16384, 32768), dict(n_out=64, d_inp=128, d_out=128, n_iters=2)),
    "n_out": ((64, 128, 256, 512), dict(n_inp=4096, d_inp=128, d_out=128, n_iters=2)),
    "d_inp": ((256, 512, 1024, 2048), dict(n_inp=64, n_out=512, d_out=128, n_iters=2)),
    "d_out": ((512, 1024, 2048, 4096), dict(n_inp=256, n_out=256, d_inp=256, n_iters=2)),
    "n_iters": ((2, 4, 8, 16), dict(n_inp=8192, n_out=64, d_inp=128, d_out=128)),
}


class MemoryBudgetError(RuntimeError):
    """A run whose measured peak allocation exceeded the configured budget."""

    def __init__(self, message: str, peak_bytes: int):
        super().__init__(message)
        self.peak_bytes = peak_bytes


@dataclass(frozen=True)
class SweepSpec:
    """One scaling sweep: a dimension, its ladder, and fixed surroundings."""

    dimension: str
    values: tuple[int, ...]
    baseline: dict[str, int]
    repeats: int = 5
    seed: int = 0
    mode: str = "fixed"

    def __post_init__(self):
        if self.dimension not in SWEEP_DIMENSIONS:
            raise ValueError(f"unknown sweep dimension {self.dimension!r}")
        if not self.values or any(v < 1 for v in self.values):
            raise ValueError("sweep values must be positive")
        if self.repeats < 1:
            raise ValueError("repeats must be at least 1")
        if self.mode not in ("fixed", "variable"):
            raise ValueError(f"unknown mode {self.mode!r}")
        needed = {"n_inp", "n_out", "d_inp", "d_out", "n_iters"} - {self.dimension}
        missing = sorted(needed - set(self.baseline))
        if missing:
            raise ValueError(f"baseline misses {missing}")

    def point(self, value: int) -> dict[str, int]:
        sizes = dict(self.baseline)
        sizes[self.dimension] = value
        return sizes


@dataclass(frozen=True)
class BenchRecord:
    """Measured costs of one configuration.

    A point that failed the pre-run budget check carries ``skipped=True``
    and None metrics; everything else is nonnegative.
    """

    dimension: str
    value: int
    params: int | None
    peak_bytes: int | None
    wall_ms: float | None
    repeats: int
    skipped: bool = False


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r_squared: float


def linear_fit(xs, ys) -> LinearFit:
    """Least-squares line through (xs, ys) with its coefficient of determination."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.size != y.size or x.size < 2:
        raise ValueError("need at least two paired points")
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    ss_res = float(np.sum(residual**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        # Constant measurements: the horizontal line explains them fully;
        # only rounding noise separates the fit from the points.
        scale = max(float(np.sum(y**2)), 1.0)
        r2 = 1.0 if ss_res <= 1e-20 * scale else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return LinearFit(slope=float(slope), intercept=float(intercept), r_squared=r2)


def _build_point(sizes: dict[str, int], mode: str, seed: int):
    param_dims = RoutingDims(
        n_inp=None if mode == "variable" else sizes["n_inp"],
        n_out=sizes["n_out"],
        d_inp=sizes["d_inp"],
        d_out=sizes["d_out"],
        n_iters=sizes["n_iters"],
    )
    params = init_params(param_dims, seed)
    rng = np.random.default_rng(seed + 1)
    x = rng.standard_normal((sizes["n_inp"], sizes["d_inp"]), dtype=np.float32)
    return params, x


def _param_bytes(params: RoutingParams) -> int:
    return 4 * total_param_count(params)


def _predicted_point_bytes(sizes: dict[str, int], params: RoutingParams) -> int:
    transient = 4 * transient_element_bound(
        sizes["n_inp"], sizes["n_out"], sizes["d_inp"], sizes["d_out"]
    )
    input_bytes = 4 * sizes["n_inp"] * sizes["d_inp"]
    return transient + input_bytes + _param_bytes(params)


def _measure(params: RoutingParams, x: np.ndarray, n_iters: int, repeats: int) -> tuple[int, float]:
    """Peak bytes of one traced pass and median wall ms of untraced passes."""
    dims = replace(params.dims, n_iters=n_iters)
    # Warm-up pass, discarded: first-call caches would otherwise land in
    # the traced peak and the first timing.
    route_optimized(x, params, dims=dims)
    with track_peak() as report:
        route_optimized(x, params, dims=dims)
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        route_optimized(x, params, dims=dims)
        times.append((time.perf_counter() - start) * 1e3)
    return report.peak_bytes, float(statistics.median(times))


def run_sweep(
    spec: SweepSpec,
    csv_path=None,
    budget_bytes: int | None = DEFAULT_BUDGET_BYTES,
) -> list[BenchRecord]:
    """Measure every ladder point; skip (and flag) points over budget.

    The budget check is a pre-run estimate (documented transient bound
    plus parameters plus input), so an oversized point is skipped before
    it can thrash the machine; the sweep continues past it.
    """
    records: list[BenchRecord] = []
    for value in spec.values:
        sizes = spec.point(value)
        params, x = _build_point(sizes, spec.mode, spec.seed)
        predicted = _predicted_point_bytes(sizes, params)
        if budget_bytes is not None and predicted > budget_bytes:
            print(
                f"warning: {spec.dimension}={value} skipped, predicted "
                f"{predicted} bytes over budget {budget_bytes}",
                file=sys.stderr,
            )
            records.append(
                BenchRecord(
                    dimension=spec.dimension,
                    value=value,
                    params=None,
                    peak_bytes=None,
                    wall_ms=None,
                    repeats=spec.repeats,
                    skipped=True,
                )
            )
            continue
        peak, wall = _measure(params, x, sizes["n_iters"], spec.repeats)
        records.append(
            BenchRecord(
                dimension=spec.dimension,
                value=value,
                params=total_param_count(params),
                peak_bytes=peak,
                wall_ms=wall,
                repeats=spec.repeats,
            )
        )
    if csv_path is not None:
        write_csv(records, csv_path)
    return records


def write_csv(records: list[BenchRecord], path) -> None:
    """Emit one row per record; skipped points leave their metrics empty."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in records:
            writer.writerow(
                [
                    r.dimension,
                    r.value,
                    "" if r.params is None else r.params,
                    "" if r.peak_bytes is None else r.peak_bytes,
                    "" if r.wall_ms is None else f"{r.wall_ms:.3f}",
                    r.repeats,
                ]
            )


def big_route_demo(
    n_inp: int = 1_000_000,
    d_inp: int = 64,
    n_out: int = 16,
    d_out: int = 64,
    seed: int = 0,
    budget_bytes: int = DEFAULT_BUDGET_BYTES,
) -> BenchRecord:
    """Route one long sequence in a single pass and verify the memory story.

    Runs variable-length mode with two iterations, measures the peak
    transient allocation, and asserts it stays below the bytes a single
    materialized proposal tensor would need, i.e. no such tensor can have
    existed. A peak over ``budget_bytes`` raises MemoryBudgetError
    carrying the measurement.
    """
    dims = RoutingDims(n_inp=None, n_out=n_out, d_inp=d_inp, d_out=d_out, n_iters=2)
    params = init_params(dims, seed)
    rng = np.random.default_rng(seed + 1)
    x = rng.standard_normal((n_inp, d_inp), dtype=np.float32)

    # Small warm-up so one-time caches stay out of the measurements and
    # repeated demos report identical peaks.
    warm_rows = min(n_inp, 256)
    route_optimized(x[:warm_rows].copy(), params)

    start = time.perf_counter()
    route_optimized(x, params)
    wall_ms = (time.perf_counter() - start) * 1e3

    with track_peak() as report:
        route_optimized(x, params)
    peak = report.peak_bytes

    vote_tensor_bytes = 4 * n_inp * n_out * d_out
    if peak >= vote_tensor_bytes:
        raise MemoryBudgetError(
            f"peak {peak} bytes reaches the materialized-proposal size "
            f"{vote_tensor_bytes}; the no-materialization property failed",
            peak_bytes=peak,
        )
    if peak > budget_bytes:
        raise MemoryBudgetError(
            f"peak {peak} bytes exceeds the budget {budget_bytes}",
            peak_bytes=peak,
        )
    return BenchRecord(
        dimension="big_route",
        value=n_inp,
        params=total_param_count(params),
        peak_bytes=peak,
        wall_ms=wall_ms,
        repeats=1,
    )


def _parse_values(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(part) for part in text.split(",") if part)
    except ValueError:
        raise argparse.ArgumentTypeError(f"values {text!r} must be comma-separated integers")
    if not values:
        raise argparse.ArgumentTypeError("empty value list")
    return values


def _parse_baseline(text: str) -> dict[str, int]:
    out: dict[str, int] = {}
    for part in text.split(","):
        if not part:
            continue
        key, eq, val = part.partition("=")
        if not eq or key not in SWEEP_DIMENSIONS:
            raise argparse.ArgumentTypeError(f"bad baseline entry {part!r}")
        try:
            out[key] = int(val)
        except ValueError:
            raise argparse.ArgumentTypeError(f"baseline {key} value {val!r} not an integer")
    return out


def _print_records(records: list[BenchRecord]) -> None:
    header = f"{'dimension':>9} {'value':>8} {'params':>12} {'peak_bytes':>14} {'wall_ms':>10}"
    print(header)
    for r in records:
        if r.skipped:
            print(f"{r.dimension:>9} {r.value:>8} {'skipped':>12} {'-':>14} {'-':>10}")
        else:
            print(
                f"{r.dimension:>9} {r.value:>8} {r.params:>12} {r.peak_bytes:>14} "
                f"{r.wall_ms:>10.3f}"
            )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="vecroute-bench",
        description="Scaling sweeps and the single-pass long-sequence memory demo.",
    )
    parser.add_argument("--sweep", choices=SWEEP_DIMENSIONS, help="dimension to sweep")
    parser.add_argument(
        "--values", type=_parse_values, help="comma-separated ladder, e.g. 1024,2048,4096"
    )
    parser.add_argument(
        "--baseline",
        type=_parse_baseline,
        help="fixed sizes, e.g. n_inp=4096,n_out=64,d_inp=128,d_out=128,n_iters=2",
    )
    parser.add_argument("--repeats", type=int, default=5, help="timed runs per point")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--csv", help="write records to this CSV path")
    parser.add_argument("--budget-bytes", type=int, default=DEFAULT_BUDGET_BYTES)
    parser.add_argument("--mode", choices=("fixed", "variable"), default="fixed")
    parser.add_argument(
        "--big-route",
        action="store_true",
        help="run the million-vector single-pass demo instead of a sweep",
    )
    args = parser.parse_args(argv)

    if args.big_route:
        sizes = dict(n_inp=1_000_000, d_inp=64, n_out=16, d_out=64)
        for key in ("n_inp", "d_inp", "n_out", "d_out"):
            if args.baseline and key in args.baseline:
                sizes[key] = args.baseline[key]
        try:
            record = big_route_demo(
                seed=args.seed, budget_bytes=args.budget_bytes, **sizes
            )
        except MemoryBudgetError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        _print_records([record])
        if args.csv:
            write_csv([record], args.csv)
        return 0

    if not args.sweep:
        parser.error("choose --sweep <dimension> or --big-route")
    default_values, default_baseline = DEFAULT_LADDERS[args.sweep]
    values = args.values if args.values else default_values
    baseline = dict(default_baseline)
    if args.baseline:
        baseline.update(args.baseline)
    spec = SweepSpec(
        dimension=args.sweep,
        values=values,
        baseline=baseline,
        repeats=args.repeats,
        seed=args.seed,
        mode=args.mode,
    )
    records = run_sweep(spec, csv_path=args.csv, budget_bytes=args.budget_bytes)
    _print_records(records)
    return 0


if __name__ == "__main__":
    sys.exit(main())
