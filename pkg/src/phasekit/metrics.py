"""Objective evaluation metrics computable from first principles.

Signal family: segmental SNR (SNRseg), frequency-weighted segmental SNR
(fwSNRseg), SDR and SDR improvement. Phase family: unwrapped-phase RMSE
(UnRMSE), group-delay RMSE and instantaneous-frequency RMSE, all restricted
to voiced frames of the clean reference and to bins where both spectra carry
usable phase.

Undefined results (e.g. no non-silent frames, no voiced frames) are returned
as NaN rather than raised, so batch runs can report them as empty cells.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio_io import Waveform
from .errors import InputError, LengthMismatchError
from .phase import EPS_MAGNITUDE, derivative_fields, principal_value, unwrap_phase
from .spectral import ComplexSpectrogram, StftConfig, reflect_indices, stft

SNRSEG_MIN_DB = -10.0
SNRSEG_MAX_DB = 35.0
SNRSEG_FRAME = 320  # 20 ms at 16 kHz
SILENCE_FLOOR = 1e-8  # of the mean frame energy

FW_BANDS = 25
FW_FMIN = 50.0
FW_FMAX = 8000.0
FW_GAMMA = 0.2  # band weight = clean band magnitude ** FW_GAMMA

VOICED_ENERGY_GATE = 0.03  # of the max frame RMS
VOICED_PERIODICITY = 0.45  # normalized autocorrelation peak threshold
PITCH_FMIN = 50.0
PITCH_FMAX = 400.0


def default_metric_stft() -> StftConfig:
    return StftConfig(fft_size=512, hop=128, win_length=512, window="hann")


@dataclass(frozen=True)
class VoicedMask:
    voiced: np.ndarray  # (T,) bool, aligned to the StftConfig frame grid
    config: StftConfig

    @property
    def count(self) -> int:
        return int(self.voiced.sum())


@dataclass(frozen=True)
class MetricReport:
    snrseg: float
    fwsnrseg: float
    sdr: float
    sdri: float | None  # None when no noisy reference was given
    unrmse: float
    gd_rmse: float
    if_rmse: float
    voiced_frame_count: int

    def to_record(self) -> dict:
        rec = {
            "snrseg": self.snrseg,
            "fwsnrseg": self.fwsnrseg,
            "sdr": self.sdr,
            "unrmse": self.unrmse,
            "gd_rmse": self.gd_rmse,
            "if_rmse": self.if_rmse,
            "voiced_frames": self.voiced_frame_count,
        }
        if self.sdri is not None:
            rec["sdri"] = self.sdri
        return rec


def _check_pair(a: Waveform, b: Waveform) -> None:
    if a.sample_rate != b.sample_rate:
        raise InputError(f"sample rates differ: {a.sample_rate} vs {b.sample_rate}")
    if len(a) != len(b):
        raise LengthMismatchError(f"lengths differ: {len(a)} vs {len(b)}")


def _frame_starts(n: int, frame: int, hop: int) -> np.ndarray:
    if n < frame:
        return np.empty(0, dtype=int)
    return np.arange(0, n - frame + 1, hop)


def snrseg(clean: Waveform, enhanced: Waveform, frame: int = SNRSEG_FRAME, hop: int | None = None) -> float:
    """Per-frame SNR in dB, clamped to [-10, 35], averaged over frames whose
    clean energy is above the silence floor. NaN if no frame qualifies."""
    _check_pair(clean, enhanced)
    hop = frame if hop is None else hop
    if frame <= 0 or hop <= 0:
        raise InputError("frame and hop must be positive")
    c = clean.samples
    e = enhanced.samples
    starts = _frame_starts(len(c), frame, hop)
    if starts.size == 0:
        return float("nan")
    idx = starts[:, None] + np.arange(frame)[None, :]
    sig = np.sum(c[idx] ** 2, axis=1)
    err = np.sum((c[idx] - e[idx]) ** 2, axis=1)
    keep = sig > SILENCE_FLOOR * np.mean(sig)
    if not np.any(keep):
        return float("nan")
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(np.where(err > 0.0, sig / np.where(err > 0.0, err, 1.0), np.inf))
    db = np.clip(db, SNRSEG_MIN_DB, SNRSEG_MAX_DB)
    # the mean of clamped values can round one ulp past the bound
    return float(np.clip(np.mean(db[keep]), SNRSEG_MIN_DB, SNRSEG_MAX_DB))


def mel_filterbank(
    n_bins: int,
    fft_size: int,
    sample_rate: int,
    n_bands: int = FW_BANDS,
    fmin: float = FW_FMIN,
    fmax: float = FW_FMAX,
) -> np.ndarray:
    """Triangular mel-spaced filters evaluated at the one-sided bin centers;
    shape (n_bands, n_bins)."""
    fmax = min(fmax, sample_rate / 2.0)
    if fmin >= fmax:
        raise InputError(f"need fmin < fmax <= Nyquist, got {fmin}..{fmax}")

    def to_mel(f):
        return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)

    def from_mel(m):
        return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)

    edges = from_mel(np.linspace(to_mel(fmin), to_mel(fmax), n_bands + 2))
    freqs = np.arange(n_bins) * sample_rate / fft_size
    fb = np.zeros((n_bands, n_bins))
    for b in range(n_bands):
        left, center, right = edges[b], edges[b + 1], edges[b + 2]
        up = (freqs - left) / (center - left)
        down = (right - freqs) / (right - center)
        fb[b] = np.clip(np.minimum(up, down), 0.0, None)
    return fb


def fwsnrseg(
    clean: Waveform,
    enhanced: Waveform,
    cfg: StftConfig | None = None,
    n_bands: int = FW_BANDS,
    fmin: float = FW_FMIN,
    fmax: float = FW_FMAX,
) -> float:
    """Frequency-weighted segmental SNR on mel-spaced triangular bands.

    Per frame, each band's SNR in dB (clamped to [-10, 35]) is weighted by the
    clean band magnitude raised to FW_GAMMA, weights normalized per frame;
    frames below the silence floor are excluded.
    """
    _check_pair(clean, enhanced)
    cfg = cfg or default_metric_stft()
    m_c = np.abs(stft(clean, cfg).values)
    m_e = np.abs(stft(enhanced, cfg).values)
    fb = mel_filterbank(cfg.n_bins, cfg.fft_size, clean.sample_rate, n_bands, fmin, fmax)
    band_c = m_c @ fb.T
    band_e = m_e @ fb.T

    frame_energy = np.sum(m_c**2, axis=1)
    keep = frame_energy > SILENCE_FLOOR * np.mean(frame_energy)

    num = band_c**2
    den = (band_c - band_e) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(den > 0.0, num / np.where(den > 0.0, den, 1.0), np.inf)
        db = 10.0 * np.log10(ratio)
    db = np.where((num == 0.0) & (den == 0.0), 0.0, db)  # empty, untouched band
    db = np.clip(db, SNRSEG_MIN_DB, SNRSEG_MAX_DB)

    weights = band_c**FW_GAMMA
    wsum = np.sum(weights, axis=1)
    keep &= wsum > 0.0
    if not np.any(keep):
        return float("nan")
    per_frame = np.sum(weights * db, axis=1)[keep] / wsum[keep]
    # weighted averages of clamped values can round one ulp past the bound
    return float(np.clip(np.mean(per_frame), SNRSEG_MIN_DB, SNRSEG_MAX_DB))


def sdr(clean: Waveform, enhanced: Waveform) -> float:
    """Whole-utterance signal-to-distortion ratio in dB; +inf when the
    residual is exactly zero (serialized reports cap it)."""
    _check_pair(clean, enhanced)
    sig = float(np.sum(clean.samples**2))
    if sig == 0.0:
        raise InputError("SDR undefined for an all-zero clean reference")
    err = float(np.sum((clean.samples - enhanced.samples) ** 2))
    if err == 0.0:
        return float("inf")
    return 10.0 * np.log10(sig / err)


def sdri(clean: Waveform, enhanced: Waveform, noisy: Waveform) -> float:
    return sdr(clean, enhanced) - sdr(clean, noisy)


def voiced_mask(clean: Waveform, cfg: StftConfig | None = None) -> VoicedMask:
    """Voiced/unvoiced decision per analysis frame of the clean reference.

    A frame is voiced iff its RMS exceeds VOICED_ENERGY_GATE of the utterance
    max frame RMS and its normalized autocorrelation peak over the pitch lag
    range exceeds VOICED_PERIODICITY. Frames follow the same reflection-padded
    grid as the STFT so the mask aligns with spectrogram rows.
    """
    cfg = cfg or default_metric_stft()
    x = clean.samples
    padded = x[reflect_indices(x.size, cfg.pad)]
    n_frames = cfg.n_frames(x.size)
    starts = np.arange(n_frames) * cfg.hop
    frames = padded[starts[:, None] + np.arange(cfg.win_length)[None, :]]

    rms = np.sqrt(np.mean(frames**2, axis=1))
    energetic = rms > VOICED_ENERGY_GATE * (rms.max() if rms.size else 0.0)

    sr = clean.sample_rate
    lag_min = max(1, int(round(sr / PITCH_FMAX)))
    lag_max = min(cfg.win_length - 1, int(round(sr / PITCH_FMIN)))
    if lag_min > lag_max:
        return VoicedMask(np.zeros(n_frames, dtype=bool), cfg)

    # full autocorrelation via FFT, normalized NCCF-style so an exactly
    # periodic frame scores 1.0 at its period
    size = 1
    while size < 2 * cfg.win_length:
        size *= 2
    spec = np.fft.rfft(frames, n=size, axis=1)
    acorr = np.fft.irfft(spec * np.conj(spec), n=size, axis=1)[:, : cfg.win_length]
    csum = np.concatenate(
        [np.zeros((n_frames, 1)), np.cumsum(frames**2, axis=1)], axis=1
    )
    total = csum[:, -1]
    lags = np.arange(lag_min, lag_max + 1)
    head = csum[:, cfg.win_length - lags]  # sum of x[0 : W-l]^2
    tail = total[:, None] - csum[:, lags]  # sum of x[l : W]^2
    denom = np.sqrt(head * tail)
    with np.errstate(invalid="ignore", divide="ignore"):
        nccf = np.where(denom > 0.0, acorr[:, lag_min : lag_max + 1] / denom, 0.0)
    periodic = np.max(nccf, axis=1) > VOICED_PERIODICITY if lags.size else np.zeros(n_frames, bool)

    return VoicedMask(energetic & periodic, cfg)


def phase_metrics_from_spectra(
    s_clean: ComplexSpectrogram, s_enhanced: ComplexSpectrogram, voiced: np.ndarray
) -> tuple[float, float, float]:
    """(unrmse, gd_rmse, if_rmse) from two aligned spectrograms.

    UnRMSE is the RMSE of frequency-axis-unwrapped phases in radians; GD and
    IF are RMSEs of the principal-value difference of the respective
    derivative fields, divided by 2*pi. All are restricted to voiced frames
    and to bins where both spectra are active (|z| > EPS_MAGNITUDE); the
    derivative at a bin additionally requires its predecessor bin active.
    """
    z_c = s_clean.values
    z_e = s_enhanced.values
    if z_c.shape != z_e.shape:
        raise InputError(f"spectrogram shapes differ: {z_c.shape} vs {z_e.shape}")
    voiced = np.asarray(voiced, dtype=bool)
    if voiced.shape != (z_c.shape[0],):
        raise InputError("voiced mask does not align with the frame grid")
    if not voiced.any():
        return float("nan"), float("nan"), float("nan")

    active = (np.abs(z_c) > EPS_MAGNITUDE) & (np.abs(z_e) > EPS_MAGNITUDE)
    vmask = voiced[:, None] & active

    def masked_rmse(diff, mask):
        if not mask.any():
            return float("nan")
        return float(np.sqrt(np.mean(diff[mask] ** 2)))

    u_c = unwrap_phase(s_clean, axis="frequency")
    u_e = unwrap_phase(s_enhanced, axis="frequency")
    unrmse = masked_rmse(u_c - u_e, vmask)

    d_c = derivative_fields(s_clean)
    d_e = derivative_fields(s_enhanced)
    if_mask = vmask.copy()
    if_mask[0, :] = False
    if_mask[1:, :] &= active[:-1, :]
    gd_mask = vmask.copy()
    gd_mask[:, 0] = False
    gd_mask[:, 1:] &= active[:, :-1]

    two_pi = 2.0 * np.pi
    if_rmse = masked_rmse(principal_value(d_c.if_vals - d_e.if_vals), if_mask) / two_pi
    gd_rmse = masked_rmse(principal_value(d_c.gd_vals - d_e.gd_vals), gd_mask) / two_pi
    return unrmse, gd_rmse, if_rmse


def phase_metrics(
    clean: Waveform,
    enhanced: Waveform,
    cfg: StftConfig | None = None,
    mask: VoicedMask | None = None,
) -> tuple[float, float, float]:
    """(unrmse, gd_rmse, if_rmse) between clean and enhanced; the voiced mask
    is computed from the clean reference when not supplied."""
    _check_pair(clean, enhanced)
    cfg = cfg or default_metric_stft()
    if mask is None:
        mask = voiced_mask(clean, cfg)
    elif mask.config != cfg:
        raise InputError("voiced mask was built for a different STFT config")
    return phase_metrics_from_spectra(stft(clean, cfg), stft(enhanced, cfg), mask.voiced)


def compute_metrics(
    clean: Waveform,
    enhanced: Waveform,
    noisy: Waveform | None = None,
    cfg: StftConfig | None = None,
    snrseg_frame: int = SNRSEG_FRAME,
    snrseg_hop: int | None = None,
    n_bands: int = FW_BANDS,
    fmin: float = FW_FMIN,
    fmax: float = FW_FMAX,
) -> MetricReport:
    """All metrics for one utterance; sdri only when a noisy reference is
    present."""
    cfg = cfg or default_metric_stft()
    mask = voiced_mask(clean, cfg)
    unrmse, gd_rmse, if_rmse = phase_metrics(clean, enhanced, cfg, mask)
    return MetricReport(
        snrseg=snrseg(clean, enhanced, snrseg_frame, snrseg_hop),
        fwsnrseg=fwsnrseg(clean, enhanced, cfg, n_bands, fmin, fmax),
        sdr=sdr(clean, enhanced),
        sdri=sdri(clean, enhanced, noisy) if noisy is not None else None,
        unrmse=unrmse,
        gd_rmse=gd_rmse,
        if_rmse=if_rmse,
        voiced_frame_count=mask.count,
    )
