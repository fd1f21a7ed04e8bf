"""Training criteria with analytic gradients w.r.t. the enhanced waveform.

Implemented terms:

* L1 waveform loss;
* per-resolution magnitude losses: spectral convergence and log-magnitude L1;
* wrapped-phase loss (PL): mean squared distance between the (cos, sin)
  images of the target and enhanced phases over active bins;
* phase continuity loss (PCL): mean squared distance between the target and
  enhanced 3x3 continuity kernel stacks over interior bins;
* the combined weighted criterion, with the magnitude and phase terms
  averaged over the same multi-resolution set.

All squared-distance phase terms use the mean (MSE) convention rather than a
plain L2 norm: it is differentiable at the minimum and keeps weights
comparable across resolutions and utterance lengths.

Every gradient is exact (chain rule through the phase images plus the STFT
adjoint), not a finite-difference approximation. Gradients flow through the
enhanced branch only; the target (and optional noisy reference) branch is a
constant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .audio_io import Waveform
from .errors import InputError, LengthMismatchError
from .phase import (
    EPS_MAGNITUDE,
    KERNEL_DK_OFFSETS,
    KERNEL_DT_OFFSETS,
    PhaseField,
    continuity_kernel,
    phase_images,
)
from .spectral import (
    MultiResConfig,
    StftConfig,
    default_multires,
    stft,
    stft_adjoint,
)

LOG_MAG_DELTA = 1e-7  # guard inside the log-magnitude difference

PL_MODES = ("wrapped", "noisy-diff")


@dataclass(frozen=True)
class LossWeights:
    """Weights of the combined criterion: lambda0 (L1), lambda1 (magnitude),
    lambda2 (phase group), and the in-group split lambda_p / lambda_pc."""

    lambda0: float = 0.01
    lambda1: float = 1.0
    lambda2: float = 0.1
    lambda_p: float = 1.0
    lambda_pc: float = 0.5

    def __post_init__(self):
        vals = (self.lambda0, self.lambda1, self.lambda2, self.lambda_p, self.lambda_pc)
        if any(v < 0 for v in vals):
            raise InputError(f"loss weights must be non-negative, got {vals}")
        if all(v == 0 for v in vals):
            raise InputError("at least one loss weight must be positive")


# the two published weight configurations
WEIGHT_PRESETS = {
    "pl": LossWeights(lambda0=0.02, lambda1=1.0, lambda2=1.0, lambda_p=1.0, lambda_pc=0.0),
    "pl-pcl": LossWeights(lambda0=0.01, lambda1=1.0, lambda2=0.1, lambda_p=1.0, lambda_pc=0.5),
}


@dataclass(frozen=True)
class LossReport:
    """Itemized loss values; per-resolution tuples follow the MultiResConfig
    ordering. Stored values are unweighted; total applies the weights."""

    l1: float
    sc: tuple[float, ...]
    log_mag: tuple[float, ...]
    pl: tuple[float, ...]
    pcl: tuple[float, ...]
    total: float

    def to_record(self) -> dict[str, float]:
        rec: dict[str, float] = {"l1": self.l1}
        for name, values in (("sc", self.sc), ("log_mag", self.log_mag),
                             ("pl", self.pl), ("pcl", self.pcl)):
            for i, v in enumerate(values):
                rec[f"{name}_{i}"] = v
            rec[f"{name}_mean"] = float(np.mean(values))
        rec["total"] = self.total
        return rec


class PhaseLossResult(NamedTuple):
    value: float
    grad: np.ndarray
    active_bins: int

    @property
    def degenerate(self) -> bool:
        return self.active_bins == 0


class SpectralLossResult(NamedTuple):
    sc: float
    log_mag: float
    grad_sc: np.ndarray
    grad_log_mag: np.ndarray


def _check_pair(target: Waveform, enhanced: Waveform) -> None:
    if target.sample_rate != enhanced.sample_rate:
        raise InputError(
            f"sample rates differ: {target.sample_rate} vs {enhanced.sample_rate}"
        )
    if len(target) != len(enhanced):
        raise LengthMismatchError(f"lengths differ: {len(target)} vs {len(enhanced)}")


def l1_loss(target: Waveform, enhanced: Waveform) -> tuple[float, np.ndarray]:
    """Mean absolute sample difference; subgradient 0 at exact ties."""
    _check_pair(target, enhanced)
    diff = enhanced.samples - target.samples
    value = float(np.mean(np.abs(diff)))
    grad = np.sign(diff) / diff.size
    return value, grad


# ---------------------------------------------------------------------------
# spectrogram-level cores (shared by the public ops and by total_loss, which
# merges the per-resolution gradient grids before a single adjoint call)
# ---------------------------------------------------------------------------


def _mag_grad_to_grid(g_mag: np.ndarray, spec: np.ndarray) -> np.ndarray:
    # dL/dRe + 1j*dL/dIm for a loss that depends on |spec| only
    mag = np.abs(spec)
    safe = np.where(mag > 0.0, mag, 1.0)
    return g_mag * spec / safe


def _sc_on_spectra(s_t: np.ndarray, s_e: np.ndarray) -> tuple[float, np.ndarray]:
    m_t = np.abs(s_t)
    m_e = np.abs(s_e)
    ref = float(np.linalg.norm(m_t))
    if ref == 0.0:
        raise InputError("spectral convergence undefined: all-zero target spectrum")
    diff = m_e - m_t
    num = float(np.linalg.norm(diff))
    if num == 0.0:
        return 0.0, np.zeros_like(s_e)
    g_mag = diff / (num * ref)
    return num / ref, _mag_grad_to_grid(g_mag, s_e)


def _log_mag_on_spectra(s_t: np.ndarray, s_e: np.ndarray) -> tuple[float, np.ndarray]:
    m_t = np.abs(s_t)
    m_e = np.abs(s_e)
    log_diff = np.log(m_t + LOG_MAG_DELTA) - np.log(m_e + LOG_MAG_DELTA)
    value = float(np.mean(np.abs(log_diff)))
    g_mag = -np.sign(log_diff) / (log_diff.size * (m_e + LOG_MAG_DELTA))
    return value, _mag_grad_to_grid(g_mag, s_e)


def _phase_image_grad_to_grid(g_cos, g_sin, spec, active=None) -> np.ndarray:
    """Chain dL/d(cos th), dL/d(sin th) through the normalized phase images
    cos th = Re/|z|, sin th = Im/|z| of ``spec``. Inactive bins are pinned at
    the neutral image and contribute no gradient. ``active`` overrides the
    default own-magnitude mask for losses whose activity rule is defined on
    other quantities (the noisy-referenced difference phases)."""
    re, im = spec.real, spec.imag
    mag = np.abs(spec)
    if active is None:
        active = mag > EPS_MAGNITUDE
    else:
        active = active & (mag > 0.0)
    mag3 = np.where(active, mag, 1.0) ** 3
    q = np.where(active, (g_cos * im - g_sin * re) / mag3, 0.0)
    return q * im - 1j * (q * re)


def _pl_on_spectra(
    s_t: np.ndarray, s_e: np.ndarray, s_n: np.ndarray | None = None
) -> tuple[float, np.ndarray, int]:
    """Wrapped-phase loss core.

    Default form compares the phase images of target and enhanced directly.
    With a noisy reference, the compared quantities are the difference-phase
    images cos/sin(th_t - th_x) for x in {noisy, enhanced}, computed from
    w = s_t * conj(s_x) (so wrapping is handled implicitly).
    """
    if s_n is None:
        w_ref, w_est = s_t, s_e
        active = (np.abs(s_t) > EPS_MAGNITUDE) & (np.abs(s_e) > EPS_MAGNITUDE)
    else:
        w_ref = s_t * np.conj(s_n)
        w_est = s_t * np.conj(s_e)
        active = (
            (np.abs(s_t) > EPS_MAGNITUDE)
            & (np.abs(s_e) > EPS_MAGNITUDE)
            & (np.abs(s_n) > EPS_MAGNITUDE)
        )
    n_active = int(active.sum())
    if n_active == 0:
        return 0.0, np.zeros_like(s_e), 0

    def images(spec):
        mag = np.abs(spec)
        safe = np.where(active & (mag > 0.0), mag, 1.0)
        return (
            np.where(active, spec.real / safe, 0.0),
            np.where(active, spec.imag / safe, 0.0),
        )

    c_ref, s_ref = images(w_ref)
    c_est, s_est = images(w_est)
    value = float(np.sum((c_ref - c_est) ** 2 + (s_ref - s_est) ** 2) / n_active)

    g_cos = np.where(active, 2.0 * (c_est - c_ref) / n_active, 0.0)
    g_sin = np.where(active, 2.0 * (s_est - s_ref) / n_active, 0.0)
    if s_n is None:
        grid = _phase_image_grad_to_grid(g_cos, g_sin, s_e)
    else:
        # chain through w = s_t * conj(s_e):
        #   Re w =  Re t * Re e + Im t * Im e,  Im w = Im t * Re e - Re t * Im e
        gw = _phase_image_grad_to_grid(g_cos, g_sin, w_est)
        gw_re, gw_im = gw.real, gw.imag
        g_re = gw_re * s_t.real + gw_im * s_t.imag
        g_im = gw_re * s_t.imag - gw_im * s_t.real
        grid = g_re + 1j * g_im
    return value, grid, n_active


def _pcl_on_spectra(s_t: np.ndarray, s_e: np.ndarray, cfg: StftConfig) -> tuple[float, np.ndarray]:
    """Phase continuity loss core: mean squared kernel-stack distance, cos and
    sin kernels each averaged over all interior 3x3 entries."""
    k_t = continuity_kernel(PhaseField(*phase_images(s_t), cfg))
    k_e = continuity_kernel(PhaseField(*phase_images(s_e), cfg))
    d_cos = k_t.cos_kernel - k_e.cos_kernel
    d_sin = k_t.sin_kernel - k_e.sin_kernel
    n_entries = d_cos.size
    value = float(np.sum(d_cos**2) / n_entries + np.sum(d_sin**2) / n_entries)

    n_frames, n_bins = s_t.shape
    g_cos = np.zeros((n_frames, n_bins))
    g_sin = np.zeros((n_frames, n_bins))
    center_t = slice(1, n_frames - 1)
    center_k = slice(1, n_bins - 1)
    for r, dk in enumerate(KERNEL_DK_OFFSETS):
        for c, dt in enumerate(KERNEL_DT_OFFSETS):
            # kernel entry: f(neighbor) - f(center); dL/d(entry of enhanced)
            coef_c = -2.0 / n_entries * d_cos[:, :, r, c]
            coef_s = -2.0 / n_entries * d_sin[:, :, r, c]
            t_sl = slice(1 + dt, n_frames - 1 + dt)
            k_sl = slice(1 + dk, n_bins - 1 + dk)
            g_cos[t_sl, k_sl] += coef_c
            g_cos[center_t, center_k] -= coef_c
            g_sin[t_sl, k_sl] += coef_s
            g_sin[center_t, center_k] -= coef_s
    grid = _phase_image_grad_to_grid(g_cos, g_sin, s_e)
    return value, grid


# ---------------------------------------------------------------------------
# public waveform-level operations
# ---------------------------------------------------------------------------


def stft_magnitude_losses(
    target: Waveform, enhanced: Waveform, cfg: StftConfig
) -> SpectralLossResult:
    """Spectral convergence and log-magnitude loss at one resolution."""
    _check_pair(target, enhanced)
    s_t = stft(target, cfg).values
    s_e = stft(enhanced, cfg).values
    sc, grid_sc = _sc_on_spectra(s_t, s_e)
    log_mag, grid_lm = _log_mag_on_spectra(s_t, s_e)
    n = len(enhanced)
    return SpectralLossResult(
        sc, log_mag, stft_adjoint(grid_sc, cfg, n), stft_adjoint(grid_lm, cfg, n)
    )


def mrstft_loss(
    target: Waveform, enhanced: Waveform, cfg: MultiResConfig | None = None
) -> tuple[list[tuple[float, float]], np.ndarray]:
    """Per-resolution (sc, log_mag) pairs and the gradient of their combined
    mean over resolutions."""
    cfg = cfg or default_multires()
    _check_pair(target, enhanced)
    n = len(enhanced)
    grad = np.zeros(n)
    values = []
    for res in cfg.resolutions:
        s_t = stft(target, res).values
        s_e = stft(enhanced, res).values
        sc, grid_sc = _sc_on_spectra(s_t, s_e)
        log_mag, grid_lm = _log_mag_on_spectra(s_t, s_e)
        values.append((sc, log_mag))
        grad += stft_adjoint((grid_sc + grid_lm) / len(cfg), res, n)
    return values, grad


def phase_loss(
    target: Waveform,
    enhanced: Waveform,
    cfg: StftConfig,
    noisy: Waveform | None = None,
) -> PhaseLossResult:
    """Wrapped-phase loss at one resolution; see _pl_on_spectra for the
    optional noisy-referenced difference form."""
    _check_pair(target, enhanced)
    if noisy is not None:
        _check_pair(target, noisy)
    s_t = stft(target, cfg).values
    s_e = stft(enhanced, cfg).values
    s_n = stft(noisy, cfg).values if noisy is not None else None
    value, grid, n_active = _pl_on_spectra(s_t, s_e, s_n)
    return PhaseLossResult(value, stft_adjoint(grid, cfg, len(enhanced)), n_active)


def phase_continuity_loss(
    target: Waveform, enhanced: Waveform, cfg: StftConfig
) -> tuple[float, np.ndarray]:
    _check_pair(target, enhanced)
    s_t = stft(target, cfg).values
    s_e = stft(enhanced, cfg).values
    value, grid = _pcl_on_spectra(s_t, s_e, cfg)
    return value, stft_adjoint(grid, cfg, len(enhanced))


def total_loss(
    target: Waveform,
    enhanced: Waveform,
    noisy: Waveform | None = None,
    weights: LossWeights | None = None,
    cfg: MultiResConfig | None = None,
    pl_mode: str = "wrapped",
) -> tuple[LossReport, np.ndarray]:
    """Assemble the combined criterion and its waveform gradient.

    The magnitude and phase terms are averaged over the same resolution set;
    per-resolution values are reported unweighted. All per-resolution
    spectrogram gradients are merged before a single adjoint per resolution,
    which is exact because the adjoint is linear.
    """
    weights = weights or LossWeights()
    cfg = cfg or default_multires()
    if pl_mode not in PL_MODES:
        raise InputError(f"pl_mode must be one of {PL_MODES}, got {pl_mode!r}")
    if pl_mode == "noisy-diff" and noisy is None:
        raise InputError("pl_mode 'noisy-diff' requires a noisy waveform")
    _check_pair(target, enhanced)
    if noisy is not None:
        _check_pair(target, noisy)

    n = len(enhanced)
    n_res = len(cfg)
    l1, g_l1 = l1_loss(target, enhanced)
    grad = weights.lambda0 * g_l1

    sc_vals, lm_vals, pl_vals, pcl_vals = [], [], [], []
    for res in cfg.resolutions:
        s_t = stft(target, res).values
        s_e = stft(enhanced, res).values
        s_n = stft(noisy, res).values if (noisy is not None and pl_mode == "noisy-diff") else None

        sc, grid_sc = _sc_on_spectra(s_t, s_e)
        lm, grid_lm = _log_mag_on_spectra(s_t, s_e)
        pl, grid_pl, _ = _pl_on_spectra(s_t, s_e, s_n)
        pcl, grid_pcl = _pcl_on_spectra(s_t, s_e, res)

        sc_vals.append(sc)
        lm_vals.append(lm)
        pl_vals.append(pl)
        pcl_vals.append(pcl)

        merged = (
            weights.lambda1 * (grid_sc + grid_lm)
            + weights.lambda2 * (weights.lambda_p * grid_pl + weights.lambda_pc * grid_pcl)
        ) / n_res
        grad += stft_adjoint(merged, res, n)

    stft_term = float(np.mean([a + b for a, b in zip(sc_vals, lm_vals)]))
    phase_term = float(np.mean([weights.lambda_p * p + weights.lambda_pc * q
                                for p, q in zip(pl_vals, pcl_vals)]))
    total = weights.lambda0 * l1 + weights.lambda1 * stft_term + weights.lambda2 * phase_term
    report = LossReport(
        l1=l1,
        sc=tuple(sc_vals),
        log_mag=tuple(lm_vals),
        pl=tuple(pl_vals),
        pcl=tuple(pcl_vals),
        total=float(total),
    )
    return report, grad
