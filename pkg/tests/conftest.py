import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from phasekit import StftConfig, Waveform

SR = 16000


def make_wave(rng: np.random.Generator, n: int, sr: int = SR, scale: float = 0.5) -> Waveform:
    return Waveform(scale * (2.0 * rng.random(n) - 1.0), sr)


def harmonic_stack(n: int, f0: float = 150.0, sr: int = SR, n_harmonics: int = 10) -> Waveform:
    """Vowel-like test signal: decaying harmonic stack with a smooth onset."""
    t = np.arange(n) / sr
    x = np.zeros(n)
    for h in range(1, n_harmonics + 1):
        x += np.sin(2.0 * np.pi * f0 * h * t + 0.7 * h) / h
    x *= 0.5 / np.max(np.abs(x))
    ramp = min(n // 10, 800)
    env = np.ones(n)
    env[:ramp] = np.linspace(0.0, 1.0, ramp)
    env[-ramp:] = np.linspace(1.0, 0.0, ramp)
    return Waveform(x * env, sr)


def add_noise_at_snr(rng: np.random.Generator, clean: Waveform, snr_db: float) -> Waveform:
    noise = rng.standard_normal(len(clean))
    sig_power = np.mean(clean.samples**2)
    noise_power = np.mean(noise**2)
    target = sig_power / (10.0 ** (snr_db / 10.0))
    noise *= np.sqrt(target / noise_power)
    return Waveform(clean.samples + noise, clean.sample_rate)


@pytest.fixture
def small_cfg() -> StftConfig:
    return StftConfig(fft_size=64, hop=16, win_length=64, window="hann")


def relative_errors(analytic: np.ndarray, fd: np.ndarray, significance: float = 1e-6):
    """Per-coordinate relative error restricted to coordinates whose analytic
    gradient is non-negligible; returns (errors, mask)."""
    scale = np.max(np.abs(analytic))
    if scale == 0.0:
        return np.zeros(0), np.zeros(analytic.shape, dtype=bool)
    mask = np.abs(analytic) > significance * scale
    denom = np.maximum(np.abs(analytic), np.abs(fd))
    denom = np.where(denom > 0.0, denom, 1.0)
    return (np.abs(analytic - fd) / denom)[mask], mask


def check_gradient(f, x, analytic, hard_tol=1e-3, quantile_tol=None, base_step=1e-4,
                   significance=1e-6):
    """Verify an analytic gradient against central finite differences.

    Coordinates that miss ``hard_tol`` at the base step are re-evaluated at
    step/10 and step/100: FD truncation error shrinks quadratically in the
    step for a correct gradient (the log-magnitude term has strong curvature
    at near-silent bins, where a fixed step over-estimates the disagreement),
    while a wrong gradient fails at every step. Returns the base-step errors.
    """
    from oracles import central_differences

    x = np.asarray(x, dtype=np.float64)
    analytic = np.asarray(analytic, dtype=np.float64)
    scale = np.max(np.abs(analytic))
    if scale == 0.0:
        return np.zeros(0)
    mask = np.abs(analytic) > significance * scale

    fd = central_differences(f, x, base_step)
    denom = np.maximum(np.abs(analytic), np.abs(fd))
    denom = np.where(denom > 0.0, denom, 1.0)
    errs = np.abs(analytic - fd) / denom

    refine_above = hard_tol if quantile_tol is None else min(hard_tol, quantile_tol)
    for i in np.nonzero(mask & (errs > refine_above))[0]:
        best = errs[i]
        for step in (base_step / 10.0, base_step / 100.0):
            fd_i = central_differences(f, x, step, coords=[i])[i]
            den = max(abs(analytic[i]), abs(fd_i), 1e-300)
            best = min(best, abs(analytic[i] - fd_i) / den)
            if best <= refine_above:
                break
        errs[i] = best
        assert best <= hard_tol, (
            f"gradient mismatch at coordinate {i}: analytic={analytic[i]:.6e} "
            f"fd={fd_i:.6e} rel_err={best:.3e} (no convergence under step refinement)"
        )
    if quantile_tol is not None:
        assert np.quantile(errs[mask], 0.99) <= quantile_tol
    return errs[mask]
