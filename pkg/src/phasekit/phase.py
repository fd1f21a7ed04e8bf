"""Wrapped-phase fields, the 3x3 phase-continuity kernel, and phase
derivative fields (instantaneous frequency and group delay).

Phase is never extracted as an angle on the loss path. Each bin's wrapped
phase is represented by its (cos, sin) image, computed directly from the
complex value as Re/|z| and Im/|z|; this is identical to the cosine/sine of
the four-quadrant angle but has no branch cut and no gradient singularity
away from the origin. Bins with magnitude at or below EPS_MAGNITUDE carry no
usable phase and get the neutral image (0, 0), which zeroes their
contribution to every downstream loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FieldTooSmallError, InputError
from .spectral import ComplexSpectrogram, StftConfig

EPS_MAGNITUDE = 1e-8

# 3x3 block layout: rows index the frequency offset (+1 in the top row),
# columns index the time offset (-1 in the left column).
KERNEL_DT_OFFSETS = (-1, 0, 1)  # per column
KERNEL_DK_OFFSETS = (1, 0, -1)  # per row


@dataclass(frozen=True)
class PhaseField:
    cos_vals: np.ndarray  # (T, K)
    sin_vals: np.ndarray  # (T, K)
    magnitude: np.ndarray  # (T, K)
    config: StftConfig


@dataclass(frozen=True)
class KernelStack:
    """f(neighbor) - f(center) over every interior 3x3 neighborhood, once for
    f = cos and once for f = sin; shape (T-2, K-2, 3, 3), center entry 0."""

    cos_kernel: np.ndarray
    sin_kernel: np.ndarray


@dataclass(frozen=True)
class DerivativeField:
    if_vals: np.ndarray  # (T, K), frame-to-frame wrapped increment, row 0 is 0
    gd_vals: np.ndarray  # (T, K), bin-to-bin wrapped increment, column 0 is 0


def principal_value(delta):
    """Map angle differences onto (-pi, pi]."""
    delta = np.asarray(delta, dtype=np.float64)
    wind = np.ceil((delta - np.pi) / (2.0 * np.pi))
    return delta - 2.0 * np.pi * wind


def phase_images(values: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(cos, sin, magnitude) of a complex grid, with the neutral (0, 0) image
    on bins whose magnitude is at or below EPS_MAGNITUDE."""
    z = np.asarray(values)
    if not np.all(np.isfinite(z)):
        raise InputError("spectrogram contains non-finite values")
    mag = np.abs(z)
    active = mag > EPS_MAGNITUDE
    denom = np.where(active, mag, 1.0)
    cos_vals = np.where(active, z.real / denom, 0.0)
    sin_vals = np.where(active, z.imag / denom, 0.0)
    return cos_vals, sin_vals, mag


def phase_field(s: ComplexSpectrogram) -> PhaseField:
    cos_vals, sin_vals, mag = phase_images(s.values)
    return PhaseField(cos_vals, sin_vals, mag, s.config)


def continuity_kernel(p: PhaseField) -> KernelStack:
    n_frames, n_bins = p.cos_vals.shape
    if n_frames < 3 or n_bins < 3:
        raise FieldTooSmallError(
            f"need at least a 3x3 field for the continuity kernel, got {n_frames}x{n_bins}"
        )
    shape = (n_frames - 2, n_bins - 2, 3, 3)
    cos_kernel = np.empty(shape)
    sin_kernel = np.empty(shape)
    for r, dk in enumerate(KERNEL_DK_OFFSETS):
        for c, dt in enumerate(KERNEL_DT_OFFSETS):
            t_sl = slice(1 + dt, n_frames - 1 + dt)
            k_sl = slice(1 + dk, n_bins - 1 + dk)
            center_t = slice(1, n_frames - 1)
            center_k = slice(1, n_bins - 1)
            cos_kernel[:, :, r, c] = p.cos_vals[t_sl, k_sl] - p.cos_vals[center_t, center_k]
            sin_kernel[:, :, r, c] = p.sin_vals[t_sl, k_sl] - p.sin_vals[center_t, center_k]
    return KernelStack(cos_kernel, sin_kernel)


def _winding(delta: np.ndarray) -> np.ndarray:
    # integer m such that delta - 2*pi*m lies in (-pi, pi]
    return np.ceil((delta - np.pi) / (2.0 * np.pi))


def unwrap_phase(s: ComplexSpectrogram, axis: str) -> np.ndarray:
    """One-dimensional unwrapping along ``axis`` ("time" or "frequency").

    Anchored at the first element's wrapped angle; each later active bin adds
    the principal-value increment from the previous active bin. Bins with
    |z| <= EPS_MAGNITUDE inherit the previous unwrapped value. The output is
    materialized as wrapped_angle + 2*pi*k with integer winding k, so
    re-wrapping recovers the original angles exactly.
    """
    z = s.values
    theta = np.arctan2(z.imag, z.real)
    active = np.abs(z) > EPS_MAGNITUDE
    if axis == "time":
        th, ac = theta, active
    elif axis == "frequency":
        th, ac = theta.T, active.T
    else:
        raise InputError(f"axis must be 'time' or 'frequency', got {axis!r}")

    length = th.shape[0]
    out = np.empty_like(th)
    winding = np.zeros(th.shape[1])
    prev_angle = np.where(ac[0], th[0], 0.0)
    out[0] = prev_angle
    for i in range(1, length):
        cur = th[i]
        new_winding = winding - _winding(cur - prev_angle)
        unwrapped = cur + 2.0 * np.pi * new_winding
        out[i] = np.where(ac[i], unwrapped, out[i - 1])
        winding = np.where(ac[i], new_winding, winding)
        prev_angle = np.where(ac[i], cur, prev_angle)
    return out if axis == "time" else out.T


def derivative_fields(s: ComplexSpectrogram) -> DerivativeField:
    z = s.values
    if not np.all(np.isfinite(z)):
        raise InputError("spectrogram contains non-finite values")
    theta = np.arctan2(z.imag, z.real)
    if_vals = np.zeros_like(theta)
    gd_vals = np.zeros_like(theta)
    if theta.shape[0] > 1:
        if_vals[1:, :] = principal_value(theta[1:, :] - theta[:-1, :])
    if theta.shape[1] > 1:
        gd_vals[:, 1:] = principal_value(theta[:, 1:] - theta[:, :-1])
    return DerivativeField(if_vals, gd_vals)
