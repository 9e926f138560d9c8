"""Extended phase graph simulation of unbalanced gradient-echo sequences.

The magnetization of one tissue under a train of RF pulses and spoiler
gradients is tracked in the configuration basis: dephasing transverse
states F+(k), rephasing states F-(k) and longitudinal states Z(k),
indexed by integer dephasing order k >= 0. Three operators generate the
whole simulation: an RF mixing matrix, exponential relaxation, and a
unit gradient shift.

All functions here are pure; every operator returns a new state. The
batched entry point :func:`simulate_fingerprints` evaluates many tissues
against one schedule at once and is the workhorse for dictionary
generation. :func:`epg_simulate` is the single-tissue form and produces
bit-identical values (both run the same array expressions).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .schedule import Schedule


@dataclass(frozen=True)
class TissueParams:
    """Relaxation times of one tissue, in milliseconds."""

    t1_ms: float
    t2_ms: float

    def __post_init__(self):
        for label, value in (("t1_ms", self.t1_ms), ("t2_ms", self.t2_ms)):
            if not np.isfinite(value) or value <= 0.0:
                raise ValueError(f"{label} must be finite and > 0, got {value!r}")


@dataclass
class EpgState:
    """Configuration states up to dephasing order ``k_max``.

    ``f_plus``, ``f_minus`` and ``z`` are complex vectors of length
    ``k_max + 1``; entry k holds the order-k state. Order 0 obeys
    F-(0) = conj(F+(0)).
    """

    f_plus: np.ndarray
    f_minus: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        self.f_plus = np.asarray(self.f_plus, dtype=np.complex128)
        self.f_minus = np.asarray(self.f_minus, dtype=np.complex128)
        self.z = np.asarray(self.z, dtype=np.complex128)
        if not (self.f_plus.shape == self.f_minus.shape == self.z.shape):
            raise ValueError("f_plus, f_minus and z must have identical shapes")
        if self.f_plus.ndim != 1 or self.f_plus.size == 0:
            raise ValueError("state vectors must be 1-D and non-empty")

    @property
    def k_max(self) -> int:
        return self.f_plus.size - 1

    @classmethod
    def equilibrium(cls, k_max: int) -> "EpgState":
        """Thermal equilibrium: Z(0) = M0 = 1, all other states zero."""
        if k_max < 1:
            raise ValueError("k_max must be >= 1")
        n = k_max + 1
        z = np.zeros(n, dtype=np.complex128)
        z[0] = 1.0
        return cls(
            f_plus=np.zeros(n, dtype=np.complex128),
            f_minus=np.zeros(n, dtype=np.complex128),
            z=z,
        )


def _rf_matrix(fa_deg: float, phase_deg: float) -> np.ndarray:
    """Mixing matrix of an RF pulse acting on (F+, F-, Z) at every order."""
    alpha = np.deg2rad(fa_deg)
    phi = np.deg2rad(phase_deg)
    ca2 = np.cos(alpha / 2.0) ** 2
    sa2 = np.sin(alpha / 2.0) ** 2
    sa = np.sin(alpha)
    ca = np.cos(alpha)
    ejp = np.exp(1j * phi)
    return np.array(
        [
            [ca2, np.exp(2j * phi) * sa2, -1j * ejp * sa],
            [np.exp(-2j * phi) * sa2, ca2, 1j * np.conj(ejp) * sa],
            [-0.5j * np.conj(ejp) * sa, 0.5j * ejp * sa, ca],
        ],
        dtype=np.complex128,
    )


def _apply_rf(fp, fm, z, fa_deg, phase_deg):
    t = _rf_matrix(fa_deg, phase_deg)
    fp_new = t[0, 0] * fp + t[0, 1] * fm + t[0, 2] * z
    fm_new = t[1, 0] * fp + t[1, 1] * fm + t[1, 2] * z
    z_new = t[2, 0] * fp + t[2, 1] * fm + t[2, 2] * z
    return fp_new, fm_new, z_new


def _apply_relax(fp, fm, z, e1, e2, recovery):
    # e1/e2 are scalars (single tissue) or (N,) vectors (batch); state
    # arrays are (k,) or (k, N) so broadcasting lines up in both cases.
    fp_new = fp * e2
    fm_new = fm * e2
    z_new = z * e1
    z_new[0] = z_new[0] + recovery  # regrown magnetization is in phase, order 0
    return fp_new, fm_new, z_new


def _apply_shift(fp, fm, z):
    fp_new = np.empty_like(fp)
    fm_new = np.empty_like(fm)
    fp_new[1:] = fp[:-1]
    fm_new[:-1] = fm[1:]
    fm_new[-1] = 0.0
    fp_new[0] = np.conj(fm_new[0])
    return fp_new, fm_new, z.copy()


def epg_rf(state: EpgState, fa_deg: float, phase_deg: float = 0.0) -> EpgState:
    """Apply an RF pulse of the given flip angle and phase.

    A zero flip angle is the identity. Flip angles outside [0, 180]
    degrees are rejected.
    """
    if not 0.0 <= fa_deg <= 180.0:
        raise ValueError("fa_deg must lie in [0, 180]")
    fp, fm, z = _apply_rf(state.f_plus, state.f_minus, state.z, fa_deg, phase_deg)
    return EpgState(f_plus=fp, f_minus=fm, z=z)


def epg_relax(state: EpgState, dt_ms: float, params: TissueParams) -> EpgState:
    """Free relaxation over ``dt_ms``.

    Transverse states decay with exp(-dt/T2), longitudinal states with
    exp(-dt/T1), and Z(0) recovers toward equilibrium M0 = 1 by
    1 - exp(-dt/T1).
    """
    if dt_ms < 0.0:
        raise ValueError("dt_ms must be >= 0")
    e1 = np.exp(-dt_ms / params.t1_ms)
    e2 = np.exp(-dt_ms / params.t2_ms)
    fp, fm, z = _apply_relax(state.f_plus, state.f_minus, state.z, e1, e2, 1.0 - e1)
    return EpgState(f_plus=fp, f_minus=fm, z=z)


def epg_shift(state: EpgState) -> EpgState:
    """Dephase by one unit gradient: F+ orders move up, F- orders move
    down, and the rephasing state crossing zero feeds conj into F+(0).
    Longitudinal states are untouched. The highest F+ order falls off
    the end of the retained window."""
    fp, fm, z = _apply_shift(state.f_plus, state.f_minus, state.z)
    return EpgState(f_plus=fp, f_minus=fm, z=z)


def simulate_fingerprints(
    t1_ms,
    t2_ms,
    schedule: Schedule,
    k_max: int | None = None,
) -> np.ndarray:
    """Simulate signal-magnitude fingerprints for many tissues at once.

    The event sequence per tissue is: optional inversion (180 degrees
    about x) followed by TI of relaxation, then for each frame an RF
    pulse of that frame's flip angle, TE of relaxation, a readout of
    |F+(0)|, the remaining TR - TE of relaxation, and one unit gradient
    shift. Equilibrium magnetization is M0 = 1, so magnitudes are
    dimensionless fractions of M0.

    Parameters
    ----------
    t1_ms, t2_ms : array_like
        Relaxation times, one entry per tissue. Must be finite and > 0.
    schedule : Schedule
        Acquisition program shared by all tissues.
    k_max : int, optional
        Retained dephasing order. Defaults to ``len(schedule) + 1``,
        which guarantees no state is truncated within the simulated
        window; must be at least the frame count.

    Returns
    -------
    ndarray
        Shape ``(n_tissues, n_frames)`` float64 matrix of magnitudes.
    """
    t1 = np.atleast_1d(np.asarray(t1_ms, dtype=np.float64))
    t2 = np.atleast_1d(np.asarray(t2_ms, dtype=np.float64))
    if t1.shape != t2.shape or t1.ndim != 1:
        raise ValueError("t1_ms and t2_ms must be 1-D arrays of equal length")
    if t1.size == 0:
        raise ValueError("no tissues to simulate")
    if not np.all(np.isfinite(t1)) or np.any(t1 <= 0.0):
        raise ValueError("t1_ms values must be finite and > 0")
    if not np.all(np.isfinite(t2)) or np.any(t2 <= 0.0):
        raise ValueError("t2_ms values must be finite and > 0")

    n_frames = len(schedule)
    if k_max is None:
        k_max = n_frames + 1
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if k_max < n_frames:
        raise ValueError(
            f"k_max={k_max} would truncate states within the {n_frames}-frame window"
        )

    n = t1.size
    shape = (k_max + 1, n)
    fp = np.zeros(shape, dtype=np.complex128)
    fm = np.zeros(shape, dtype=np.complex128)
    z = np.zeros(shape, dtype=np.complex128)
    z[0] = 1.0

    if schedule.inversion_prep:
        fp, fm, z = _apply_rf(fp, fm, z, 180.0, 0.0)
        e1 = np.exp(-schedule.ti_ms / t1)
        e2 = np.exp(-schedule.ti_ms / t2)
        fp, fm, z = _apply_relax(fp, fm, z, e1, e2, 1.0 - e1)

    te = schedule.te_ms
    e1_te = np.exp(-te / t1)
    e2_te = np.exp(-te / t2)
    rec_te = 1.0 - e1_te

    magnitudes = np.empty((n, n_frames), dtype=np.float64)
    for i in range(n_frames):
        fp, fm, z = _apply_rf(fp, fm, z, float(schedule.fa_deg[i]), 0.0)
        fp, fm, z = _apply_relax(fp, fm, z, e1_te, e2_te, rec_te)
        magnitudes[:, i] = np.abs(fp[0])
        rest = float(schedule.tr_ms[i]) - te
        e1_r = np.exp(-rest / t1)
        fp, fm, z = _apply_relax(fp, fm, z, e1_r, np.exp(-rest / t2), 1.0 - e1_r)
        fp, fm, z = _apply_shift(fp, fm, z)
    return magnitudes


def epg_simulate(
    params: TissueParams, schedule: Schedule, k_max: int | None = None
) -> np.ndarray:
    """Fingerprint of a single tissue; see :func:`simulate_fingerprints`.

    Returns a length ``n_frames`` float64 vector of signal magnitudes.
    """
    return simulate_fingerprints(
        np.array([params.t1_ms]), np.array([params.t2_ms]), schedule, k_max
    )[0]
