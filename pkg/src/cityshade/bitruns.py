"""Bit-vector run statistics for per-minute shadow flags.

A pixel's shadow history over one interval is packed little-endian into a
uint64: bit j set means the pixel was shadowed during minute j. Gross shadow
time is then a popcount and continuous shadow time the longest run of set
bits. Runs that cross interval boundaries are recovered later by merging
per-interval (max, prefix, suffix) summaries, so nothing here ever needs to
see more than one interval at a time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "RunStats",
    "pack_flags",
    "gross_of",
    "continuous_of",
    "run_stats",
    "merge_runs",
]


@dataclass
class RunStats:
    """Per-pixel run summary of one bit-vector interval.

    All fields except ``total`` are uint8 arrays (or scalars) of identical
    shape. ``total`` is the interval length in minutes and is shared by every
    pixel, which is what makes :func:`merge_runs` associative.
    """

    gross: np.ndarray
    max_run: np.ndarray
    prefix: np.ndarray
    suffix: np.ndarray
    total: int


def pack_flags(flags: np.ndarray) -> np.ndarray:
    """Pack boolean flags (..., n) into uint64 bit vectors, bit j = flag j."""
    flags = np.asarray(flags)
    n = flags.shape[-1]
    if n > 64:
        raise ValueError(f"cannot pack {n} flags into 64 bits")
    out = np.zeros(flags.shape[:-1], dtype=np.uint64)
    for j in range(n):
        out |= flags[..., j].astype(np.uint64) << np.uint64(j)
    return out


def gross_of(bits, n: int = 60):
    """Minutes in shadow: popcount of the low n bits."""
    bits = np.asarray(bits, dtype=np.uint64)
    mask = np.uint64((1 << n) - 1) if n < 64 else np.uint64(0xFFFFFFFFFFFFFFFF)
    return np.bitwise_count(bits & mask)


def continuous_of(bits, n: int = 60):
    """Longest unbroken run of shadowed minutes in the low n bits."""
    return run_stats(bits, n).max_run


def run_stats(bits, n: int = 60) -> RunStats:
    """Extract (gross, max_run, prefix, suffix) from packed bit vectors.

    Works on arrays of any shape; 60 is the slice count of an hourly
    interval. prefix/suffix are the run lengths touching the interval ends,
    the raw material for cross-interval stitching.
    """
    bits = np.asarray(bits, dtype=np.uint64)
    gross = gross_of(bits, n).astype(np.uint8)
    cur = np.zeros(bits.shape, dtype=np.uint8)
    best = np.zeros(bits.shape, dtype=np.uint8)
    prefix = np.zeros(bits.shape, dtype=np.uint8)
    for j in range(n):
        bit = ((bits >> np.uint64(j)) & np.uint64(1)).astype(np.uint8)
        cur = (cur + bit) * bit
        np.maximum(best, cur, out=best)
        prefix += bit & (prefix == j)
    return RunStats(gross=gross, max_run=best, prefix=prefix, suffix=cur, total=n)


def merge_runs(left: RunStats, right: RunStats) -> RunStats:
    """Combine run summaries of two adjacent intervals (left then right).

    Associative, so a day of intervals can be folded in any grouping. The
    only run the two halves can share is left.suffix joined to right.prefix;
    a half that is all ones extends its neighbour's boundary run through it.
    """
    bridged = left.suffix.astype(np.int32) + right.prefix
    max_run = np.maximum(np.maximum(left.max_run, right.max_run), bridged)
    prefix = np.where(left.prefix == left.total, left.total + right.prefix.astype(np.int32), left.prefix)
    suffix = np.where(right.suffix == right.total, right.total + left.suffix.astype(np.int32), right.suffix)
    total = left.total + right.total
    dt = np.uint8 if total < 256 else np.uint16
    return RunStats(
        gross=(left.gross.astype(np.int32) + right.gross).astype(dt),
        max_run=max_run.astype(dt),
        prefix=np.asarray(prefix).astype(dt),
        suffix=np.asarray(suffix).astype(dt),
        total=total,
    )
