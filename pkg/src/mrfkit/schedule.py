"""Acquisition schedules: the flip-angle/repetition-time program driving a scan.

A schedule is the ordered list of per-frame flip angles and repetition
times, together with the inversion/echo timing shared by all frames. It
fully determines the simulated signal evolution for a given tissue.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

_MAGIC = b"SCHD"
_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Schedule:
    """Acquisition timing and flip-angle program.

    Parameters
    ----------
    fa_deg : ndarray
        Flip angle of each frame's excitation pulse, degrees, in [0, 180].
    tr_ms : ndarray
        Repetition time of each frame, milliseconds. Every TR must exceed
        the echo time.
    ti_ms : float
        Delay between the inversion pulse and the first frame. Ignored
        when ``inversion_prep`` is False.
    te_ms : float
        Echo time: delay between each excitation and its readout.
    inversion_prep : bool
        Whether the sequence starts with a 180 degree inversion pulse.
    name : str
        Free-text label. Not part of the physics; excluded from digests.
    """

    fa_deg: np.ndarray
    tr_ms: np.ndarray
    ti_ms: float = 0.0
    te_ms: float = 0.0
    inversion_prep: bool = False
    name: str = ""

    def __post_init__(self):
        fa = np.asarray(self.fa_deg, dtype=np.float64)
        tr = np.asarray(self.tr_ms, dtype=np.float64)
        object.__setattr__(self, "fa_deg", fa)
        object.__setattr__(self, "tr_ms", tr)
        if fa.ndim != 1 or fa.size == 0:
            raise ValueError("schedule needs at least one frame")
        if fa.shape != tr.shape:
            raise ValueError("fa_deg and tr_ms must have the same length")
        if not (np.all(np.isfinite(fa)) and np.all(np.isfinite(tr))):
            raise ValueError("schedule entries must be finite")
        if np.any(fa < 0.0) or np.any(fa > 180.0):
            raise ValueError("flip angles must lie in [0, 180] degrees")
        if not np.isfinite(self.te_ms) or self.te_ms < 0.0:
            raise ValueError("te_ms must be finite and >= 0")
        if np.any(tr <= self.te_ms):
            raise ValueError("every tr_ms must exceed te_ms")
        if not np.isfinite(self.ti_ms) or self.ti_ms < 0.0:
            raise ValueError("ti_ms must be finite and >= 0")

    def __len__(self) -> int:
        return int(self.fa_deg.size)

    @property
    def n_frames(self) -> int:
        return len(self)


def default_schedule() -> Schedule:
    """Built-in 25-frame inversion-recovery schedule.

    This is a generic stand-in, not an optimized or measured program:
    flip angles ramp from 10 to 70 degrees while repetition times ramp
    from 80 down to 30 ms, with TI = 19 ms and TE = 23 ms. Keeping the
    early flip angles small preserves the inversion-recovery transient
    (which carries most of the T1 information, especially for long T1)
    while the late high-angle frames read out the accumulated state.
    It is suitable for simulation studies and self-contained
    experiments; for quantitative work against acquired data, load the
    schedule actually played out by your sequence instead.
    """
    u = np.arange(25, dtype=np.float64) / 24.0
    fa = 10.0 + 60.0 * u**1.5
    tr = 80.0 - 50.0 * u**1.5
    # Round to 0.1 so the values survive a text round-trip unchanged.
    fa = np.round(fa, 1)
    tr = np.round(tr, 1)
    return Schedule(
        fa_deg=fa,
        tr_ms=tr,
        ti_ms=19.0,
        te_ms=23.0,
        inversion_prep=True,
        name="builtin-ir-ramp-25",
    )


def schedule_digest(schedule: Schedule) -> bytes:
    """32-byte digest identifying the physics of a schedule.

    Covers frame count, flip angles, repetition times, TI, TE, and the
    inversion flag. The free-text name is a label only and is excluded.
    """
    h = hashlib.sha256()
    h.update(_MAGIC)
    h.update(struct.pack("<I", _FORMAT_VERSION))
    h.update(struct.pack("<B", 1 if schedule.inversion_prep else 0))
    h.update(struct.pack("<dd", float(schedule.ti_ms), float(schedule.te_ms)))
    h.update(struct.pack("<I", len(schedule)))
    h.update(schedule.fa_deg.astype("<f8").tobytes())
    h.update(schedule.tr_ms.astype("<f8").tobytes())
    return h.digest()


def save_schedule(schedule: Schedule, path) -> None:
    """Write a schedule file: ``key=value`` header lines, then a
    ``fa_deg,tr_ms`` table with one row per frame."""
    lines = []
    if schedule.name:
        lines.append(f"name={schedule.name}")
    lines.append(f"ti_ms={float(schedule.ti_ms)!r}")
    lines.append(f"te_ms={float(schedule.te_ms)!r}")
    lines.append(f"inversion_prep={'true' if schedule.inversion_prep else 'false'}")
    lines.append("fa_deg,tr_ms")
    for fa, tr in zip(schedule.fa_deg, schedule.tr_ms):
        lines.append(f"{float(fa)!r},{float(tr)!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def load_schedule(path) -> Schedule:
    """Read a schedule file written by :func:`save_schedule`.

    Header keys ``ti_ms``, ``te_ms`` and ``inversion_prep`` precede the
    ``fa_deg,tr_ms`` table. Blank lines and ``#`` comments are skipped.
    """
    header: dict[str, str] = {}
    fa: list[float] = []
    tr: list[float] = []
    in_table = False
    with open(path, "r", encoding="utf-8") as f:
        for raw in f:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if not in_table:
                if line.replace(" ", "") == "fa_deg,tr_ms":
                    in_table = True
                    continue
                if "=" not in line:
                    raise ValueError(
                        f"schedule file: expected key=value before the table, got {line!r}"
                    )
                key, value = line.split("=", 1)
                header[key.strip()] = value.strip()
            else:
                parts = line.split(",")
                if len(parts) != 2:
                    raise ValueError(f"schedule file: bad frame row {line!r}")
                fa.append(float(parts[0]))
                tr.append(float(parts[1]))
    if not in_table:
        raise ValueError("schedule file: missing fa_deg,tr_ms table header")
    if not fa:
        raise ValueError("schedule file: table has no frames")
    inversion = header.get("inversion_prep", "false").lower()
    if inversion not in ("true", "false"):
        raise ValueError("schedule file: inversion_prep must be true or false")
    return Schedule(
        fa_deg=np.array(fa),
        tr_ms=np.array(tr),
        ti_ms=float(header.get("ti_ms", 0.0)),
        te_ms=float(header.get("te_ms", 0.0)),
        inversion_prep=inversion == "true",
        name=header.get("name", ""),
    )
