"""Per-target radar selection, respiration rate estimation and scoring.

The radar whose image series at a target looks most like a single tone in
the respiration band is chosen; tone-likeness is the ratio of the fourth
moment of the in-band power spectrum to the squared second moment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import detrend

RESP_BAND_HZ = (0.1, 0.5)
RATE_BAND_RPM = (6.0, 40.0)
MIN_KAPPA_SAMPLES = 32


@dataclass(frozen=True)
class SpectralKurtosisScore:
    target: str
    radar_id: int
    window: int
    kappa: float


@dataclass(frozen=True)
class RespEstimate:
    target: str
    window: int
    radar_id: int | None
    rate: float
    detected: bool


def kappa(signal, slow_dt: float = 0.1, band=RESP_BAND_HZ, use_phase: bool = False) -> float:
    """Fourth-moment tone score of the in-band spectrum of ``signal``.

    The slow-time mean is removed first. With ``use_phase`` the unwrapped
    phase of ``signal`` is scored instead of the complex series.

    Returns 0 for an all-zero series or an empty band.
    """
    x = np.asarray(signal)
    if x.ndim != 1 or x.size < MIN_KAPPA_SAMPLES:
        raise ValueError(f"kappa needs a 1-D series of >= {MIN_KAPPA_SAMPLES} samples")
    if use_phase:
        x = np.unwrap(np.angle(x)) if np.iscomplexobj(x) else x.astype(float)
    x = x - x.mean()
    freqs = np.fft.fftfreq(x.size, slow_dt)
    sel = (freqs > 0) & (freqs >= band[0]) & (freqs <= band[1])
    p = np.abs(np.fft.fft(x)[sel]) ** 2
    total = p.sum()
    if not total > 0:
        return 0.0
    # Rescale before the fourth power so tiny inputs do not underflow.
    p = p / p.max()
    return float(np.sum(p**2) / np.sum(p) ** 2)


def select_radar(scores: dict) -> int | None:
    """Radar id with the largest score; ties go to the lower id. None if empty."""
    if not scores:
        return None
    return min(scores, key=lambda rid: (-scores[rid], rid))


def _quadratic_peak(mag: np.ndarray, i: int) -> float:
    if i == 0 or i == mag.size - 1:
        return 0.0
    a, b, c = mag[i - 1], mag[i], mag[i + 1]
    den = a - 2.0 * b + c
    return 0.0 if den == 0 else 0.5 * (a - c) / den


def estimate_rpm(waveform, slow_dt: float | None = None, band_rpm=RATE_BAND_RPM,
                 zero_pad: int = 8, method: str = "spectral", min_peak_ratio: float = 3.0):
    """Respiration rate in rpm and a detection flag.

    ``method="spectral"``: linear detrend, Hann window, DFT zero-padded by
    ``zero_pad``; the in-band magnitude peak is refined by a parabola through
    its neighbours. Detection needs the peak to reach ``min_peak_ratio``
    times the in-band median magnitude.

    ``method="interval"``: mean spacing of upward zero crossings of the
    detrended series; detected when at least two crossings exist and the
    rate is in band.

    Returns
    -------
    (rate, detected) : tuple[float, bool]
        ``rate`` is NaN when nothing is detected.
    """
    x = np.asarray(getattr(waveform, "samples", waveform), dtype=float)
    dt = slow_dt if slow_dt is not None else getattr(waveform, "slow_dt", None)
    if dt is None:
        raise ValueError("slow_dt required for a bare array")
    if x.size < 4:
        raise ValueError("waveform too short")
    if not np.all(np.isfinite(x)):
        raise ValueError("waveform has non-finite samples")
    x = detrend(x, type="linear")
    lo, hi = band_rpm[0] / 60.0, band_rpm[1] / 60.0
    if method == "interval":
        return _interval_rate(x, dt, lo, hi)
    if method != "spectral":
        raise ValueError(f"unknown rate estimator {method!r}")

    n_fft = zero_pad * x.size
    mag = np.abs(np.fft.rfft(x * np.hanning(x.size), n_fft))
    freqs = np.fft.rfftfreq(n_fft, dt)
    idx = np.flatnonzero((freqs >= lo) & (freqs <= hi))
    if idx.size == 0:
        return math.nan, False
    band = mag[idx]
    k = int(np.argmax(band))
    med = float(np.median(band))
    if not band[k] > 0 or band[k] < min_peak_ratio * med:
        return math.nan, False
    i = int(idx[k])
    f = freqs[i] + _quadratic_peak(mag, i) * (freqs[1] - freqs[0])
    return float(60.0 * f), True


def _interval_rate(x, dt, lo, hi):
    s = np.signbit(x)
    up = np.flatnonzero(s[:-1] & ~s[1:])
    if up.size < 2:
        return math.nan, False
    # Linear interpolation of each crossing instant.
    t = (up + x[up] / (x[up] - x[up + 1])) * dt
    f = 1.0 / np.mean(np.diff(t))
    if not lo <= f <= hi:
        return math.nan, False
    return float(60.0 * f), True


def detection_rate(detections: dict, truth_positions: dict, n_windows: int, gate: float = 0.5) -> dict:
    """Percentage of windows in which each target is found, per radar and fused.

    Parameters
    ----------
    detections : dict
        ``(radar_id, window) -> (K, 2)`` cluster representatives in that
        radar's local frame.
    truth_positions : dict
        ``radar_id -> {target_id: (2,) position in that radar's frame}``.
    n_windows : int
    gate : float
        Maximum distance in meters for a cluster to count as the target.

    Returns
    -------
    dict
        ``{radar_id: {target_id: pct}, ..., "fused": {target_id: pct}}``.
        A target counts for ``"fused"`` in a window when any radar finds it.
    """
    radars = sorted(truth_positions)
    targets = sorted({tid for r in radars for tid in truth_positions[r]})
    hit = {r: {tid: np.zeros(n_windows, dtype=bool) for tid in targets} for r in radars}
    for r in radars:
        for w in range(n_windows):
            reps = np.asarray(detections.get((r, w), np.empty((0, 2))), dtype=float).reshape(-1, 2)
            if not len(reps):
                continue
            for tid, pos in truth_positions[r].items():
                hit[r][tid][w] = np.min(np.linalg.norm(reps - np.asarray(pos), axis=1)) <= gate
    out = {r: {tid: 100.0 * hit[r][tid].mean() for tid in targets} for r in radars}
    out["fused"] = {
        tid: 100.0 * np.logical_or.reduce([hit[r][tid] for r in radars]).mean() for tid in targets
    }
    return out


def rpm_error(estimates: dict, true_rates: dict) -> dict:
    """Mean absolute rate error per target and over targets.

    ``estimates`` maps target id to a sequence of per-window rates (NaN for
    windows without an estimate, which are skipped). A target with no
    estimate at all has error NaN, and so does the scene mean.
    """
    per = {}
    for tid, truth in true_rates.items():
        est = np.asarray(estimates.get(tid, []), dtype=float)
        est = est[np.isfinite(est)]
        per[tid] = float(np.mean(np.abs(est - truth))) if est.size else math.nan
    mean = float(np.mean(list(per.values()))) if per else math.nan
    return {"per_target": per, "mean": mean}
