"""Timing harness comparing network inference against dictionary matching.

Measurements use a warm-up pass (excluded) followed by a median over
timed runs. Single-threaded mode pins the BLAS thread pools so ratios
are comparable across machines.
"""

from __future__ import annotations

import time
import warnings
from contextlib import nullcontext
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .dictionary import Dictionary
from .maps import ImageStack, fmt
from .matcher import match_map
from .network import Mlp, reconstruct_map


@dataclass(frozen=True)
class BenchReport:
    """One reconstruction timing record."""

    method: str  # "nn" or "match"
    voxel_count: int
    dict_entries: int
    wall_ms: float
    runs_ms: tuple[float, ...]

    def __post_init__(self):
        if self.wall_ms <= 0.0:
            raise ValueError("wall_ms must be > 0")

    @property
    def per_voxel_us(self) -> float:
        return 1000.0 * self.wall_ms / self.voxel_count


def median_time_ms(fn, runs: int = 5, warmup: int = 1) -> tuple[float, list[float]]:
    """Median wall time of ``fn()`` over ``runs`` timed calls, after
    ``warmup`` untimed calls."""
    if runs < 1:
        raise ValueError("need at least one timed run")
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(runs):
        t0 = time.perf_counter()
        fn()
        times.append((time.perf_counter() - t0) * 1000.0)
    return float(np.median(times)), times


def threads_context(threads: int | None):
    """Context manager limiting BLAS pools, or a no-op when None."""
    return threadpool_limits(limits=threads) if threads else nullcontext()


def speed_benchmark(
    net: Mlp,
    dictionary: Dictionary,
    stack: ImageStack,
    runs: int = 5,
    threads: int | None = None,
) -> dict:
    """Time both reconstructions of one stack and report the speed ratio.

    Returns a dict with the two :class:`BenchReport` records and
    ``ratio`` (matching time over network time). A schedule-digest
    mismatch between the model, dictionary and stack is warned about but
    not fatal; the comparison only needs identical inputs.
    """
    digests = {
        "model": net.schedule_digest,
        "dictionary": dictionary.schedule_digest,
        "stack": stack.schedule_digest,
    }
    if len({d for d in digests.values()}) > 1:
        warnings.warn(
            "schedule digests differ between "
            + ", ".join(sorted(k for k in digests)),
            stacklevel=2,
        )
    voxels = int(stack.mask.sum())
    if voxels == 0:
        raise ValueError("stack has no masked-in voxels to reconstruct")

    with threads_context(threads):
        nn_ms, nn_runs = median_time_ms(lambda: reconstruct_map(net, stack), runs=runs)
        match_ms, match_runs = median_time_ms(
            lambda: match_map(dictionary, stack), runs=runs
        )
    nn_report = BenchReport(
        method="nn",
        voxel_count=voxels,
        dict_entries=dictionary.n_entries,
        wall_ms=nn_ms,
        runs_ms=tuple(nn_runs),
    )
    match_report = BenchReport(
        method="match",
        voxel_count=voxels,
        dict_entries=dictionary.n_entries,
        wall_ms=match_ms,
        runs_ms=tuple(match_runs),
    )
    return {"nn": nn_report, "match": match_report, "ratio": match_ms / nn_ms}


def write_timing_csv(reports, path) -> None:
    """Timing table ``method,voxel_count,dict_entries,wall_ms,per_voxel_us``.

    Contains measured wall-clock values; unlike every other CSV this one
    is not reproducible from the seed.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("method,voxel_count,dict_entries,wall_ms,per_voxel_us\n")
        for r in reports:
            f.write(
                f"{r.method},{r.voxel_count},{r.dict_entries},"
                f"{fmt(r.wall_ms)},{fmt(r.per_voxel_us)}\n"
            )
