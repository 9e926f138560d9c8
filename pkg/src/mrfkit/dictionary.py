"""Fingerprint dictionaries over a (T1, T2) grid.

A dictionary pairs a parameter table with an entry-by-frame matrix of
simulated signal magnitudes (one atom per row). Construction, noise
perturbation, stride subsampling, row normalization and binary
persistence all live here.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from .epg import simulate_fingerprints
from .schedule import Schedule, schedule_digest

EXCLUSION_RULES = ("t1<=t2", "t1<t2", "none")

_MAGIC = b"MRFD"
_FORMAT_VERSION = 1


@dataclass(frozen=True)
class GridSpec:
    """Arithmetic-progression grid over T1 and T2, in milliseconds.

    Each axis runs ``min, min + step, ...`` up to the largest value not
    exceeding ``max``. The exclusion rule drops parameter pairs;
    the default ``"t1<=t2"`` keeps only entries with T1 strictly above
    T2.
    """

    t1_min: float
    t1_step: float
    t1_max: float
    t2_min: float
    t2_step: float
    t2_max: float
    exclusion: str = "t1<=t2"

    def __post_init__(self):
        for axis in ("t1", "t2"):
            lo = getattr(self, f"{axis}_min")
            step = getattr(self, f"{axis}_step")
            hi = getattr(self, f"{axis}_max")
            if not (np.isfinite(lo) and np.isfinite(step) and np.isfinite(hi)):
                raise ValueError(f"{axis} grid bounds must be finite")
            if step <= 0.0:
                raise ValueError(f"{axis}_step must be > 0")
            if lo > hi:
                raise ValueError(f"{axis}_min must not exceed {axis}_max")
            if lo <= 0.0:
                raise ValueError(f"{axis}_min must be > 0")
        if self.exclusion not in EXCLUSION_RULES:
            raise ValueError(
                f"unknown exclusion rule {self.exclusion!r}; expected one of {EXCLUSION_RULES}"
            )

    def t1_values(self) -> np.ndarray:
        return _axis_values(self.t1_min, self.t1_step, self.t1_max)

    def t2_values(self) -> np.ndarray:
        return _axis_values(self.t2_min, self.t2_step, self.t2_max)


def _axis_values(lo: float, step: float, hi: float) -> np.ndarray:
    # Count via the progression formula rather than accumulating floats,
    # with a small relative tolerance so e.g. 0.1 steps land exactly.
    n = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n, dtype=np.float64)


def grid_entries(spec: GridSpec) -> np.ndarray:
    """Parameter table of the grid: shape (N, 2) array of (T1, T2) rows.

    Rows are in row-major order, T1 outermost, T2 innermost, after
    applying the exclusion rule. Raises if nothing survives.
    """
    t1v = spec.t1_values()
    t2v = spec.t2_values()
    t1 = np.repeat(t1v, t2v.size)
    t2 = np.tile(t2v, t1v.size)
    if spec.exclusion == "t1<=t2":
        keep = t1 > t2
    elif spec.exclusion == "t1<t2":
        keep = t1 >= t2
    else:
        keep = np.ones(t1.size, dtype=bool)
    entries = np.column_stack([t1[keep], t2[keep]])
    if entries.shape[0] == 0:
        raise ValueError("grid is empty after applying the exclusion rule")
    return entries


def parse_grid_spec(text: str) -> GridSpec:
    """Parse ``t1=1:10:5000,t2=1:10:2000[,exclude=t1<=t2|t1<t2|none]``."""
    axes: dict[str, tuple[float, float, float]] = {}
    exclusion = "t1<=t2"
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ValueError(f"bad grid spec fragment {part!r}")
        key, value = part.split("=", 1)
        key = key.strip()
        if key in ("t1", "t2"):
            pieces = value.split(":")
            if len(pieces) != 3:
                raise ValueError(f"axis {key} must be min:step:max, got {value!r}")
            axes[key] = tuple(float(p) for p in pieces)
        elif key == "exclude":
            exclusion = value.strip()
        else:
            raise ValueError(f"unknown grid spec key {key!r}")
    if "t1" not in axes or "t2" not in axes:
        raise ValueError("grid spec needs both t1=min:step:max and t2=min:step:max")
    (t1_min, t1_step, t1_max) = axes["t1"]
    (t2_min, t2_step, t2_max) = axes["t2"]
    return GridSpec(t1_min, t1_step, t1_max, t2_min, t2_step, t2_max, exclusion)


@dataclass(frozen=True)
class Dictionary:
    """Parameter table plus atom matrix.

    ``t1_ms``/``t2_ms`` are length-N vectors, ``atoms`` the N-by-L
    magnitude matrix with one fingerprint per row. ``schedule_digest``
    ties the atoms to the generating schedule; ``normalized`` records
    whether rows have unit Euclidean norm.
    """

    t1_ms: np.ndarray
    t2_ms: np.ndarray
    atoms: np.ndarray
    schedule_digest: bytes
    normalized: bool = False

    def __post_init__(self):
        if self.t1_ms.ndim != 1 or self.t2_ms.shape != self.t1_ms.shape:
            raise ValueError("t1_ms and t2_ms must be equal-length vectors")
        if self.atoms.ndim != 2 or self.atoms.shape[0] != self.t1_ms.size:
            raise ValueError("atoms must have one row per parameter entry")
        if len(self.schedule_digest) != 32:
            raise ValueError("schedule_digest must be 32 bytes")

    @property
    def n_entries(self) -> int:
        return int(self.t1_ms.size)

    @property
    def n_frames(self) -> int:
        return int(self.atoms.shape[1])

    def __len__(self) -> int:
        return self.n_entries


def build_dictionary(
    spec: GridSpec, schedule: Schedule, k_max: int | None = None
) -> Dictionary:
    """Simulate one fingerprint per surviving grid entry.

    Entry order follows :func:`grid_entries` and is bit-stable across
    runs: rebuilding the same spec and schedule reproduces identical
    arrays. Atoms are raw (unnormalized) magnitudes.
    """
    entries = grid_entries(spec)
    atoms = simulate_fingerprints(entries[:, 0], entries[:, 1], schedule, k_max)
    return Dictionary(
        t1_ms=entries[:, 0].copy(),
        t2_ms=entries[:, 1].copy(),
        atoms=atoms,
        schedule_digest=schedule_digest(schedule),
        normalized=False,
    )


def scaled_noise(rng: np.random.Generator, atoms: np.ndarray, sigma_fraction: float):
    """Zero-mean Gaussian noise with per-row standard deviation
    ``sigma_fraction`` times that row's maximum absolute value."""
    scale = sigma_fraction * np.max(np.abs(atoms), axis=1, keepdims=True)
    return scale * rng.standard_normal(atoms.shape)


def absolute_noise(rng: np.random.Generator, atoms: np.ndarray, sigma: float):
    """Zero-mean Gaussian noise with one fixed standard deviation for
    every element, like thermal scanner noise (signal-independent)."""
    return sigma * rng.standard_normal(atoms.shape)


def add_noise(
    dictionary: Dictionary, sigma_fraction: float, seed: int, reference: str = "atom_max"
) -> Dictionary:
    """Corrupt every atom element with i.i.d. Gaussian noise.

    With the default ``"atom_max"`` reference the noise standard
    deviation is ``sigma_fraction`` of the atom's own maximum magnitude,
    so weak and strong signals are perturbed proportionately. The
    ``"absolute"`` reference applies ``sigma_fraction`` directly as the
    standard deviation in signal units (scanner-like, signal-independent
    noise). Results are not clipped and may go negative. Deterministic
    for a given seed; ``sigma_fraction=0`` returns a bit-identical copy.
    """
    if sigma_fraction < 0.0:
        raise ValueError("sigma_fraction must be >= 0")
    if reference not in ("atom_max", "absolute"):
        raise ValueError(f"unknown noise reference {reference!r}")
    if sigma_fraction == 0.0:
        return replace(dictionary, atoms=dictionary.atoms.copy())
    rng = np.random.default_rng(seed)
    if reference == "atom_max":
        noise = scaled_noise(rng, dictionary.atoms, sigma_fraction)
    else:
        noise = absolute_noise(rng, dictionary.atoms, sigma_fraction)
    return replace(dictionary, atoms=dictionary.atoms + noise, normalized=False)


def subsample(dictionary: Dictionary, factor: int) -> Dictionary:
    """Keep every ``factor``-th entry of the deterministic row order
    (indices 0, factor, 2*factor, ...). A factor beyond the entry count
    still keeps entry 0."""
    if factor < 1:
        raise ValueError("factor must be >= 1")
    idx = np.arange(0, dictionary.n_entries, factor)
    return replace(
        dictionary,
        t1_ms=dictionary.t1_ms[idx].copy(),
        t2_ms=dictionary.t2_ms[idx].copy(),
        atoms=dictionary.atoms[idx].copy(),
    )


def normalize(dictionary: Dictionary) -> Dictionary:
    """Scale every atom row to unit Euclidean norm and set the flag.

    A zero-norm row cannot be normalized; the error names the offending
    entry and its parameters.
    """
    norms = np.linalg.norm(dictionary.atoms, axis=1)
    bad = np.flatnonzero(norms == 0.0)
    if bad.size:
        i = int(bad[0])
        raise ValueError(
            f"cannot normalize: atom {i} (t1={dictionary.t1_ms[i]} ms, "
            f"t2={dictionary.t2_ms[i]} ms) has zero norm"
            + (f" ({bad.size} zero-norm rows total)" if bad.size > 1 else "")
        )
    return replace(
        dictionary, atoms=dictionary.atoms / norms[:, np.newaxis], normalized=True
    )


def save_dictionary(dictionary: Dictionary, path) -> None:
    """Write the binary dictionary format (little-endian).

    Layout: magic ``MRFD``, format version (u32), N (u64), L (u32),
    normalized flag (u8), 32-byte schedule digest, N (t1, t2) float64
    pairs, then the N-by-L atom matrix as float64 row-major.
    """
    n, l = dictionary.atoms.shape
    params = np.empty((n, 2), dtype="<f8")
    params[:, 0] = dictionary.t1_ms
    params[:, 1] = dictionary.t2_ms
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<IQIB", _FORMAT_VERSION, n, l, int(dictionary.normalized)))
        f.write(dictionary.schedule_digest)
        f.write(params.tobytes())
        f.write(np.ascontiguousarray(dictionary.atoms, dtype="<f8").tobytes())


def load_dictionary(path) -> Dictionary:
    """Read a file written by :func:`save_dictionary`."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _MAGIC:
            raise ValueError(f"not a dictionary file (bad magic {magic!r})")
        version, n, l, normalized = struct.unpack("<IQIB", f.read(17))
        if version != _FORMAT_VERSION:
            raise ValueError(f"unsupported dictionary format version {version}")
        digest = f.read(32)
        if len(digest) != 32:
            raise ValueError("truncated dictionary file (digest)")
        param_bytes = f.read(n * 2 * 8)
        atom_bytes = f.read(n * l * 8)
    if len(param_bytes) != n * 2 * 8 or len(atom_bytes) != n * l * 8:
        raise ValueError("truncated dictionary file (data)")
    params = np.frombuffer(param_bytes, dtype="<f8").reshape(n, 2)
    atoms = np.frombuffer(atom_bytes, dtype="<f8")
    return Dictionary(
        t1_ms=params[:, 0].copy(),
        t2_ms=params[:, 1].copy(),
        atoms=atoms.reshape(n, l).copy(),
        schedule_digest=digest,
        normalized=bool(normalized),
    )
