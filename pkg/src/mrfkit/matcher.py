"""Conventional dictionary matching: normalized inner-product argmax.

The baseline reconstructor. Each query signal is unit-normalized and
compared against every (unit-norm) dictionary atom by real dot product;
the winning entry's grid parameters are returned verbatim, so outputs
are quantized to the dictionary grid by construction.
"""

from __future__ import annotations

import time

import numpy as np

from .dictionary import Dictionary
from .epg import TissueParams
from .maps import ImageStack, ParamMap

# Voxels per scoring block; bounds the (chunk x n_entries) score matrix
# to a few hundred MB against the largest dictionaries.
_CHUNK = 512


def _require_normalized(dictionary: Dictionary) -> None:
    if not dictionary.normalized:
        raise ValueError("matching requires a normalized dictionary (run normalize first)")


def match_one(dictionary: Dictionary, signal: np.ndarray) -> tuple[TissueParams, float]:
    """Best-matching entry for one signal.

    Returns the parameters of the atom maximizing the inner product with
    the unit-normalized signal, plus that winning score. Ties resolve to
    the lowest entry index. Scaling the signal by any positive constant
    does not change the winner.
    """
    _require_normalized(dictionary)
    q = np.asarray(signal, dtype=np.float64)
    if q.ndim != 1 or q.size != dictionary.n_frames:
        raise ValueError(
            f"signal length {q.size} does not match dictionary frame count "
            f"{dictionary.n_frames}"
        )
    norm = np.linalg.norm(q)
    if norm == 0.0:
        raise ValueError("cannot match a zero-norm signal")
    scores = dictionary.atoms @ (q / norm)
    idx = int(np.argmax(scores))  # argmax keeps the first (lowest) index on ties
    return (
        TissueParams(t1_ms=float(dictionary.t1_ms[idx]), t2_ms=float(dictionary.t2_ms[idx])),
        float(scores[idx]),
    )


def match_signals(dictionary: Dictionary, signals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Match many signals at once.

    ``signals`` is (n, n_frames); returns ``(params, scores)`` where
    ``params`` is (n, 2) matched (T1, T2) and ``scores`` the winning
    inner products. Zero-norm rows are an error naming the first
    offender. Winner selection is identical to :func:`match_one`.
    """
    _require_normalized(dictionary)
    q = np.asarray(signals, dtype=np.float64)
    if q.ndim != 2 or q.shape[1] != dictionary.n_frames:
        raise ValueError("signals must be (n, n_frames) matching the dictionary")
    norms = np.linalg.norm(q, axis=1)
    bad = np.flatnonzero(norms == 0.0)
    if bad.size:
        raise ValueError(
            f"cannot match zero-norm signal at row {int(bad[0])}"
            + (f" ({bad.size} zero rows total)" if bad.size > 1 else "")
        )
    q = q / norms[:, np.newaxis]
    atoms_t = dictionary.atoms.T
    n = q.shape[0]
    idx = np.empty(n, dtype=np.int64)
    best = np.empty(n, dtype=np.float64)
    for start in range(0, n, _CHUNK):
        block = q[start : start + _CHUNK] @ atoms_t
        local = np.argmax(block, axis=1)
        idx[start : start + _CHUNK] = local
        best[start : start + _CHUNK] = block[np.arange(block.shape[0]), local]
    params = np.column_stack([dictionary.t1_ms[idx], dictionary.t2_ms[idx]])
    return params, best


def match_map(
    dictionary: Dictionary, stack, mask=None
) -> tuple[ParamMap, float]:
    """Voxelwise dictionary matching of an image stack.

    Accepts an :class:`ImageStack` or a raw (n_frames, height, width)
    array plus mask. A masked-in voxel with zero signal is an error (it
    cannot be normalized), reported with its coordinates rather than
    silently skipped. Returns the matched map and the elapsed wall time
    in milliseconds (the matching itself, excluding I/O).
    """
    if isinstance(stack, ImageStack):
        data, mask = stack.data, stack.mask
    else:
        data = np.asarray(stack, dtype=np.float64)
        if mask is None:
            raise ValueError("mask is required when passing a bare array")
        mask = np.asarray(mask, dtype=bool)
    if data.ndim != 3 or mask.shape != data.shape[1:]:
        raise ValueError("stack must be (n_frames, height, width) with matching mask")
    if data.shape[0] != dictionary.n_frames:
        raise ValueError(
            f"stack has {data.shape[0]} frames but the dictionary holds "
            f"{dictionary.n_frames}"
        )
    _require_normalized(dictionary)

    h, w = mask.shape
    t1 = np.zeros((h, w))
    t2 = np.zeros((h, w))
    if not mask.any():
        return ParamMap(t1_map=t1, t2_map=t2, mask=mask.copy()), 0.0

    signals = data[:, mask].T
    zero_rows = np.flatnonzero(np.linalg.norm(signals, axis=1) == 0.0)
    if zero_rows.size:
        ys, xs = np.nonzero(mask)
        coords = [(int(xs[r]), int(ys[r])) for r in zero_rows[:5]]
        raise ValueError(
            f"{zero_rows.size} masked-in voxel(s) carry zero signal and cannot be "
            f"matched; first offenders (x, y): {coords}"
        )

    t0 = time.perf_counter()
    params, _ = match_signals(dictionary, signals)
    elapsed_ms = (time.perf_counter() - t0) * 1000.0
    t1[mask] = params[:, 0]
    t2[mask] = params[:, 1]
    return ParamMap(t1_map=t1, t2_map=t2, mask=mask.copy()), elapsed_ms
