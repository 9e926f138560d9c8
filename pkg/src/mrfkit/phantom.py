"""Numerical phantoms: geometric tissue layouts rendered into truth maps
and simulated acquisition stacks.

The built-in brain-like phantom uses three tissue classes with typical
in-vivo relaxation values (white matter 663/83 ms, grey matter
1110/96 ms, cerebrospinal fluid 3799/870 ms). Arbitrary phantoms come
from a small text format, and segmented label rasters (e.g. exported
from external digital phantoms) can be ingested with a label table.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

from .epg import simulate_fingerprints
from .maps import ImageStack, ParamMap
from .schedule import Schedule, schedule_digest

REGION_SHAPES = ("ellipse", "rect")

_LABEL_MAGIC = b"MRFL"


@dataclass(frozen=True)
class Region:
    """One homogeneous tissue region.

    ``params`` is shape-specific, in pixel coordinates:
    ellipse: (cx, cy, rx, ry) with containment
    ((x-cx)/rx)^2 + ((y-cy)/ry)^2 <= 1; rect: (x0, y0, x1, y1),
    half-open [x0, x1) x [y0, y1).
    """

    label: str
    shape: str
    params: tuple[float, float, float, float]
    t1_ms: float
    t2_ms: float

    def __post_init__(self):
        if self.shape not in REGION_SHAPES:
            raise ValueError(f"unknown region shape {self.shape!r}")
        if len(self.params) != 4:
            raise ValueError("region params must have 4 entries")
        if self.t1_ms <= self.t2_ms:
            raise ValueError(
                f"region {self.label!r}: t1 ({self.t1_ms}) must exceed t2 ({self.t2_ms})"
            )
        if self.t2_ms <= 0.0:
            raise ValueError(f"region {self.label!r}: t2 must be > 0")

    def contains(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        if self.shape == "ellipse":
            cx, cy, rx, ry = self.params
            return ((x - cx) / rx) ** 2 + ((y - cy) / ry) ** 2 <= 1.0
        x0, y0, x1, y1 = self.params
        return (x >= x0) & (x < x1) & (y >= y0) & (y < y1)


@dataclass(frozen=True)
class PhantomSpec:
    """Pixel dimensions plus an ordered region list.

    Regions are painted in order, so where regions overlap the later one
    wins. Pixels covered by no region are masked out.
    """

    width: int
    height: int
    regions: tuple[Region, ...]
    name: str = ""

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("phantom dimensions must be positive")
        if not self.regions:
            raise ValueError("phantom needs at least one region")
        object.__setattr__(self, "regions", tuple(self.regions))


def brain_phantom(width: int = 128, height: int = 128) -> PhantomSpec:
    """Built-in three-tissue brain-like phantom.

    An outer white-matter ellipse, a grey-matter cortical band, and two
    CSF ventricle lobes, with typical relaxation values per tissue.
    """
    w, h = float(width), float(height)
    regions = (
        Region("white_matter", "ellipse", (w / 2, h / 2, 0.42 * w, 0.46 * h), 663.0, 83.0),
        Region("grey_matter", "ellipse", (w / 2, h / 2, 0.26 * w, 0.30 * h), 1110.0, 96.0),
        Region("white_matter_core", "ellipse", (w / 2, h / 2, 0.19 * w, 0.23 * h), 663.0, 83.0),
        Region("csf_left", "ellipse", (0.42 * w, 0.48 * h, 0.06 * w, 0.14 * h), 3799.0, 870.0),
        Region("csf_right", "ellipse", (0.58 * w, 0.48 * h, 0.06 * w, 0.14 * h), 3799.0, 870.0),
    )
    return PhantomSpec(width=width, height=height, regions=regions, name="builtin-brain")


def rasterize(spec: PhantomSpec) -> ParamMap:
    """Paint the regions into truth maps (later region wins)."""
    y, x = np.mgrid[0 : spec.height, 0 : spec.width]
    x = x.astype(np.float64)
    y = y.astype(np.float64)
    t1 = np.zeros((spec.height, spec.width))
    t2 = np.zeros((spec.height, spec.width))
    mask = np.zeros((spec.height, spec.width), dtype=bool)
    for region in spec.regions:
        inside = region.contains(x, y)
        t1[inside] = region.t1_ms
        t2[inside] = region.t2_ms
        mask |= inside
    if not mask.any():
        raise ValueError("no pixel falls inside any region")
    return ParamMap(t1_map=t1, t2_map=t2, mask=mask)


def simulate_stack(
    truth: ParamMap, schedule: Schedule, k_max: int | None = None
) -> ImageStack:
    """Simulate the acquisition of a truth map.

    Each masked-in voxel gets the fingerprint of its (T1, T2); voxels
    sharing parameters are simulated once. Masked-out voxels are zero.
    """
    h, w = truth.mask.shape
    data = np.zeros((len(schedule), h, w))
    pairs = np.column_stack([truth.t1_map[truth.mask], truth.t2_map[truth.mask]])
    if pairs.shape[0]:
        unique, inverse = np.unique(pairs, axis=0, return_inverse=True)
        prints = simulate_fingerprints(unique[:, 0], unique[:, 1], schedule, k_max)
        data[:, truth.mask] = prints[inverse].T
    return ImageStack(data=data, mask=truth.mask.copy(), schedule_digest=schedule_digest(schedule))


def render_phantom(
    spec: PhantomSpec, schedule: Schedule, k_max: int | None = None
) -> tuple[ParamMap, ImageStack]:
    """Truth maps plus the simulated stack for a phantom spec."""
    truth = rasterize(spec)
    return truth, simulate_stack(truth, schedule, k_max)


def save_phantom_spec(spec: PhantomSpec, path) -> None:
    """Write the phantom text format: ``key=value`` header then a region
    table ``label,shape,p0,p1,p2,p3,t1_ms,t2_ms``."""
    lines = []
    if spec.name:
        lines.append(f"name={spec.name}")
    lines.append(f"width={spec.width}")
    lines.append(f"height={spec.height}")
    lines.append("label,shape,p0,p1,p2,p3,t1_ms,t2_ms")
    for r in spec.regions:
        p = ",".join(repr(float(v)) for v in r.params)
        lines.append(f"{r.label},{r.shape},{p},{r.t1_ms!r},{r.t2_ms!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def load_phantom_spec(path) -> PhantomSpec:
    """Read a file written by :func:`save_phantom_spec`."""
    header: dict[str, str] = {}
    regions: list[Region] = []
    in_table = False
    with open(path, "r", encoding="utf-8") as f:
        for raw in f:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if not in_table:
                if line.startswith("label,"):
                    in_table = True
                    continue
                if "=" not in line:
                    raise ValueError(f"phantom file: expected key=value, got {line!r}")
                key, value = line.split("=", 1)
                header[key.strip()] = value.strip()
            else:
                parts = line.split(",")
                if len(parts) != 8:
                    raise ValueError(f"phantom file: bad region row {line!r}")
                regions.append(
                    Region(
                        label=parts[0],
                        shape=parts[1],
                        params=tuple(float(v) for v in parts[2:6]),
                        t1_ms=float(parts[6]),
                        t2_ms=float(parts[7]),
                    )
                )
    if "width" not in header or "height" not in header:
        raise ValueError("phantom file: missing width/height")
    return PhantomSpec(
        width=int(header["width"]),
        height=int(header["height"]),
        regions=tuple(regions),
        name=header.get("name", ""),
    )


def save_label_raster(labels: np.ndarray, path) -> None:
    """Write an 8-bit label raster: magic, width/height (u32 LE), then
    row-major label bytes."""
    labels = np.asarray(labels)
    if labels.ndim != 2 or labels.dtype != np.uint8:
        raise ValueError("labels must be a 2-D uint8 array")
    with open(path, "wb") as f:
        f.write(_LABEL_MAGIC)
        f.write(struct.pack("<II", labels.shape[1], labels.shape[0]))
        f.write(labels.tobytes())


def load_label_raster(path) -> np.ndarray:
    """Read a raster written by :func:`save_label_raster`."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _LABEL_MAGIC:
            raise ValueError(f"not a label raster (bad magic {magic!r})")
        width, height = struct.unpack("<II", f.read(8))
        data = np.frombuffer(f.read(width * height), dtype=np.uint8)
    if data.size != width * height:
        raise ValueError("truncated label raster")
    return data.reshape(height, width).copy()


def load_label_table(path) -> dict[int, tuple[float, float]]:
    """Read a CSV label table with columns ``label,t1_ms,t2_ms``.

    Labels absent from the table are treated as background (masked out).
    """
    table: dict[int, tuple[float, float]] = {}
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or set(reader.fieldnames) < {"label", "t1_ms", "t2_ms"}:
            raise ValueError("label table needs columns label,t1_ms,t2_ms")
        for row in reader:
            table[int(row["label"])] = (float(row["t1_ms"]), float(row["t2_ms"]))
    if not table:
        raise ValueError("label table is empty")
    return table


def labels_to_param_map(
    labels: np.ndarray, table: dict[int, tuple[float, float]]
) -> ParamMap:
    """Truth maps from a segmented label raster plus a label table."""
    labels = np.asarray(labels)
    t1 = np.zeros(labels.shape)
    t2 = np.zeros(labels.shape)
    mask = np.zeros(labels.shape, dtype=bool)
    for label, (v1, v2) in sorted(table.items()):
        if v1 <= v2:
            raise ValueError(f"label {label}: t1 ({v1}) must exceed t2 ({v2})")
        sel = labels == label
        t1[sel] = v1
        t2[sel] = v2
        mask |= sel
    if not mask.any():
        raise ValueError("no raster pixel carries a labeled tissue")
    return ParamMap(t1_map=t1, t2_map=t2, mask=mask)
