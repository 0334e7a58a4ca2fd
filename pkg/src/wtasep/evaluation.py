"""Separation quality scores from whole-signal projection decomposition.

The estimate is split into a target-aligned part, an interference part
(what the target/interference plane explains beyond the target), and an
artifact remainder.  SDR, SIR, and SAR are energy ratios of those parts.
Gains are time-invariant scalars; there is no allowed-distortion filter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import AudioBuffer

DB_CAP = 200.0
_COLLINEAR_TOL = 1e-12


@dataclass(frozen=True)
class BssScores:
    sdr: float
    sir: float
    sar: float
    clipped: bool = False  # set when any ratio hit the +/-200 dB cap


def _db_ratio(num: float, den: float) -> tuple[float, bool]:
    if den <= 0.0:
        return DB_CAP, True
    if num <= 0.0:
        return -DB_CAP, True
    db = 10.0 * np.log10(num / den)
    if db > DB_CAP:
        return DB_CAP, True
    if db < -DB_CAP:
        return -DB_CAP, True
    return float(db), False


def _aligned_samples(estimate: AudioBuffer, target: AudioBuffer, interference: AudioBuffer):
    rates = {estimate.sample_rate, target.sample_rate, interference.sample_rate}
    if len(rates) != 1:
        raise ValueError(f"sample rate mismatch: {sorted(rates)}")
    lengths = {len(estimate), len(target), len(interference)}
    if len(lengths) != 1:
        raise ValueError(f"length mismatch: {sorted(lengths)}")
    return estimate.samples, target.samples, interference.samples


def bss_eval(
    estimate: AudioBuffer, target: AudioBuffer, interference: AudioBuffer
) -> BssScores:
    """Score an estimate against the true target and interference signals.

    The target and interference must be nonzero and linearly independent;
    ratios beyond +/-200 dB are capped and flagged instead of going
    infinite.
    """
    e, t, i = _aligned_samples(estimate, target, interference)
    tt = float(np.dot(t, t))
    ii = float(np.dot(i, i))
    if tt == 0.0:
        raise ValueError("target signal has zero energy")
    if ii == 0.0:
        raise ValueError("interference signal has zero energy")
    ti = float(np.dot(t, i))
    det = tt * ii - ti * ti
    if det <= _COLLINEAR_TOL * tt * ii:
        raise ValueError("target and interference are (numerically) collinear")

    et = float(np.dot(e, t))
    ei = float(np.dot(e, i))
    e_target = (et / tt) * t
    # Closed-form 2x2 solve for the projection onto span{target, interference}.
    ct = (ii * et - ti * ei) / det
    ci = (tt * ei - ti * et) / det
    proj = ct * t + ci * i
    e_interf = proj - e_target
    e_artif = e - proj

    target_energy = float(np.dot(e_target, e_target))
    interf_energy = float(np.dot(e_interf, e_interf))
    artif_energy = float(np.dot(e_artif, e_artif))
    distortion = e_interf + e_artif

    sdr, c1 = _db_ratio(target_energy, float(np.dot(distortion, distortion)))
    sir, c2 = _db_ratio(target_energy, interf_energy)
    sar, c3 = _db_ratio(float(np.dot(proj, proj)), artif_energy)
    return BssScores(sdr=sdr, sir=sir, sar=sar, clipped=c1 or c2 or c3)


def sdr_improvement(
    mixture: AudioBuffer,
    estimate: AudioBuffer,
    target: AudioBuffer,
    interference: AudioBuffer,
) -> float:
    """SDR of the estimate minus SDR of the unprocessed mixture, in dB."""
    return (
        bss_eval(estimate, target, interference).sdr
        - bss_eval(mixture, target, interference).sdr
    )
