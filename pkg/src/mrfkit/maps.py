"""Parameter maps, multi-frame image stacks, and accuracy metrics."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

_STACK_MAGIC = b"MRFS"
_STACK_VERSION = 1

ZERO_DIGEST = bytes(32)


@dataclass
class ImageStack:
    """Stack of per-frame magnitude images plus a validity mask.

    ``data`` has shape (n_frames, height, width); ``mask`` is a boolean
    (height, width) array marking voxels that carry signal. The digest
    links the stack to the schedule it was simulated (or acquired) with;
    all zeros means unknown.
    """

    data: np.ndarray
    mask: np.ndarray
    schedule_digest: bytes = ZERO_DIGEST

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.data.ndim != 3:
            raise ValueError("stack data must be (n_frames, height, width)")
        if self.mask.shape != self.data.shape[1:]:
            raise ValueError("mask shape must match the image plane")
        if len(self.schedule_digest) != 32:
            raise ValueError("schedule_digest must be 32 bytes")

    @property
    def n_frames(self) -> int:
        return int(self.data.shape[0])

    @property
    def height(self) -> int:
        return int(self.data.shape[1])

    @property
    def width(self) -> int:
        return int(self.data.shape[2])

    def masked_signals(self) -> np.ndarray:
        """Fingerprints of the masked-in voxels, shape (n_masked, n_frames)."""
        return self.data[:, self.mask].T.copy()


@dataclass
class ParamMap:
    """T1/T2 maps in milliseconds with a validity mask.

    Masked-out voxels hold zeros by convention. Masked-in values must be
    positive and finite.
    """

    t1_map: np.ndarray
    t2_map: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.t1_map = np.asarray(self.t1_map, dtype=np.float64)
        self.t2_map = np.asarray(self.t2_map, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.t1_map.ndim != 2:
            raise ValueError("maps must be 2-D")
        if not (self.t1_map.shape == self.t2_map.shape == self.mask.shape):
            raise ValueError("t1_map, t2_map and mask must share one shape")
        for label, arr in (("t1", self.t1_map), ("t2", self.t2_map)):
            vals = arr[self.mask]
            if vals.size and (not np.all(np.isfinite(vals)) or np.any(vals <= 0.0)):
                raise ValueError(f"masked-in {label} values must be positive and finite")

    @property
    def height(self) -> int:
        return int(self.t1_map.shape[0])

    @property
    def width(self) -> int:
        return int(self.t1_map.shape[1])


@dataclass(frozen=True)
class Metrics:
    """Reconstruction accuracy summary for one map pair."""

    rmse_t1_ms: float
    rmse_t2_ms: float
    bias_t1_ms: float
    bias_t2_ms: float
    r2_t1: float
    r2_t2: float


def r_squared(truth: np.ndarray, recon: np.ndarray) -> float:
    """Coefficient of determination of ``recon`` against ``truth``.

    1 - SS_res/SS_tot. When the truth is constant, returns 1.0 for a
    perfect reconstruction and NaN otherwise (no variance to explain).
    """
    truth = np.asarray(truth, dtype=np.float64)
    recon = np.asarray(recon, dtype=np.float64)
    ss_res = float(np.sum((recon - truth) ** 2))
    ss_tot = float(np.sum((truth - truth.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else float("nan")
    return 1.0 - ss_res / ss_tot


def accuracy_summary(
    true_t1, true_t2, pred_t1, pred_t2
) -> Metrics:
    """RMSE, mean signed error and R^2 per parameter over paired samples."""
    true_t1 = np.asarray(true_t1, dtype=np.float64)
    true_t2 = np.asarray(true_t2, dtype=np.float64)
    pred_t1 = np.asarray(pred_t1, dtype=np.float64)
    pred_t2 = np.asarray(pred_t2, dtype=np.float64)
    if true_t1.size == 0:
        raise ValueError("no samples to evaluate")
    d1 = pred_t1 - true_t1
    d2 = pred_t2 - true_t2
    return Metrics(
        rmse_t1_ms=float(np.sqrt(np.mean(d1 * d1))),
        rmse_t2_ms=float(np.sqrt(np.mean(d2 * d2))),
        bias_t1_ms=float(np.mean(d1)),
        bias_t2_ms=float(np.mean(d2)),
        r2_t1=r_squared(true_t1, pred_t1),
        r2_t2=r_squared(true_t2, pred_t2),
    )


def compute_metrics(truth: ParamMap, recon: ParamMap) -> Metrics:
    """Accuracy of a reconstructed map against the ground truth.

    Both maps must share dimensions and masks; statistics run over the
    masked-in voxels only.
    """
    if truth.t1_map.shape != recon.t1_map.shape:
        raise ValueError("truth and reconstruction dimensions differ")
    if not np.array_equal(truth.mask, recon.mask):
        raise ValueError("truth and reconstruction masks differ")
    if not truth.mask.any():
        raise ValueError("empty mask: no voxels to evaluate")
    m = truth.mask
    return accuracy_summary(
        truth.t1_map[m], truth.t2_map[m], recon.t1_map[m], recon.t2_map[m]
    )


def fmt(x: float) -> str:
    """Shortest round-trip decimal form of a float, for stable CSV bytes."""
    return repr(float(x))


def save_param_map_csv(param_map: ParamMap, path) -> None:
    """Write a map as CSV rows ``x,y,mask,t1_ms,t2_ms`` (y-major order)."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("x,y,mask,t1_ms,t2_ms\n")
        for y in range(param_map.height):
            for x in range(param_map.width):
                f.write(
                    f"{x},{y},{int(param_map.mask[y, x])},"
                    f"{fmt(param_map.t1_map[y, x])},{fmt(param_map.t2_map[y, x])}\n"
                )


def load_param_map_csv(path) -> ParamMap:
    """Read a map written by :func:`save_param_map_csv`."""
    xs: list[int] = []
    ys: list[int] = []
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        for row in reader:
            xs.append(int(row["x"]))
            ys.append(int(row["y"]))
            rows.append((int(row["mask"]), float(row["t1_ms"]), float(row["t2_ms"])))
    if not rows:
        raise ValueError("empty parameter map CSV")
    width = max(xs) + 1
    height = max(ys) + 1
    t1 = np.zeros((height, width))
    t2 = np.zeros((height, width))
    mask = np.zeros((height, width), dtype=bool)
    for x, y, (m, v1, v2) in zip(xs, ys, rows):
        mask[y, x] = bool(m)
        t1[y, x] = v1
        t2[y, x] = v2
    return ParamMap(t1_map=t1, t2_map=t2, mask=mask)


def save_stack(stack: ImageStack, path) -> None:
    """Write the binary stack format (little-endian).

    Layout: magic ``MRFS``, version (u32), n_frames (u32), height (u32),
    width (u32), 32-byte schedule digest, mask as height*width u8
    (row-major), then float64 data in (frame, row, column) order.
    """
    with open(path, "wb") as f:
        f.write(_STACK_MAGIC)
        f.write(
            struct.pack(
                "<IIII", _STACK_VERSION, stack.n_frames, stack.height, stack.width
            )
        )
        f.write(stack.schedule_digest)
        f.write(stack.mask.astype(np.uint8).tobytes())
        f.write(np.ascontiguousarray(stack.data, dtype="<f8").tobytes())


def load_stack(path) -> ImageStack:
    """Read a file written by :func:`save_stack`."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _STACK_MAGIC:
            raise ValueError(f"not a stack file (bad magic {magic!r})")
        version, n_frames, height, width = struct.unpack("<IIII", f.read(16))
        if version != _STACK_VERSION:
            raise ValueError(f"unsupported stack format version {version}")
        digest = f.read(32)
        mask_bytes = f.read(height * width)
        data_bytes = f.read(n_frames * height * width * 8)
    if len(mask_bytes) != height * width or len(data_bytes) != n_frames * height * width * 8:
        raise ValueError("truncated stack file")
    mask = np.frombuffer(mask_bytes, dtype=np.uint8)
    data = np.frombuffer(data_bytes, dtype="<f8")
    return ImageStack(
        data=data.reshape(n_frames, height, width).copy(),
        mask=mask.reshape(height, width).astype(bool),
        schedule_digest=digest,
    )


def write_metrics_csv(metrics: Metrics, path) -> None:
    """One row per parameter: ``parameter,rmse_ms,bias_ms,r2``."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("parameter,rmse_ms,bias_ms,r2\n")
        f.write(f"t1,{fmt(metrics.rmse_t1_ms)},{fmt(metrics.bias_t1_ms)},{fmt(metrics.r2_t1)}\n")
        f.write(f"t2,{fmt(metrics.rmse_t2_ms)},{fmt(metrics.bias_t2_ms)},{fmt(metrics.r2_t2)}\n")
