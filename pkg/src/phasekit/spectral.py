"""Windowed STFT/ISTFT with an exact adjoint for gradient transport.

Conventions, used consistently by every loss and metric in the package:

* analysis reflection-pads the input by ``win_length // 2`` samples on both
  ends, so every input sample is covered by full analysis windows;
* frames are windowed, zero-padded to ``fft_size``, and transformed with a
  one-sided DFT (K = fft_size/2 + 1 bins);
* the STFT is a linear map of the samples, so the exact gradient of any loss
  defined on the spectrogram is obtained by the transpose map
  (:func:`stft_adjoint`) — no approximation is involved.

Gradient-grid convention: a grid ``G`` passed to :func:`stft_adjoint` holds
``G[t, k] = dL/dRe(S[t, k]) + 1j * dL/dIm(S[t, k])`` for a real scalar loss L.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio_io import Waveform
from .errors import InputError, UnsupportedConfigError

WINDOWS = ("hann", "rectangular")

# overlap-add envelope below this fraction of its peak means the config has
# no stable inverse on that region
_COLA_FLOOR = 1e-8


@dataclass(frozen=True)
class StftConfig:
    fft_size: int
    hop: int
    win_length: int
    window: str = "hann"

    def __post_init__(self):
        if self.fft_size < 4 or (self.fft_size & (self.fft_size - 1)) != 0:
            raise InputError(f"fft_size must be a power of two >= 4, got {self.fft_size}")
        if not 0 < self.hop <= self.win_length <= self.fft_size:
            raise InputError(
                "need 0 < hop <= win_length <= fft_size, got "
                f"hop={self.hop} win={self.win_length} fft={self.fft_size}"
            )
        if self.window not in WINDOWS:
            raise InputError(f"unknown window {self.window!r}; choose from {WINDOWS}")

    @property
    def pad(self) -> int:
        return self.win_length // 2

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def window_values(self) -> np.ndarray:
        if self.window == "hann":
            n = np.arange(self.win_length)
            return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / self.win_length)
        return np.ones(self.win_length)

    def n_frames(self, source_length: int) -> int:
        padded = source_length + 2 * self.pad
        if padded < self.win_length:
            raise InputError("input too short for this window")
        return 1 + (padded - self.win_length) // self.hop


@dataclass(frozen=True)
class MultiResConfig:
    resolutions: tuple[StftConfig, ...]

    def __post_init__(self):
        res = tuple(self.resolutions)
        if not res:
            raise InputError("need at least one resolution")
        if len(set(res)) != len(res):
            raise InputError("resolutions must be pairwise distinct")
        object.__setattr__(self, "resolutions", res)

    def __len__(self) -> int:
        return len(self.resolutions)


def default_multires() -> MultiResConfig:
    """The conventional three-resolution analysis set (hann windows)."""
    return MultiResConfig(
        tuple(
            StftConfig(fft_size=f, hop=h, win_length=w)
            for f, h, w in ((512, 50, 240), (1024, 120, 600), (2048, 240, 1200))
        )
    )


@dataclass(frozen=True)
class ComplexSpectrogram:
    values: np.ndarray  # (T, K) complex128
    config: StftConfig
    source_length: int
    sample_rate: int

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_bins(self) -> int:
        return self.values.shape[1]


def reflect_indices(n: int, pad: int) -> np.ndarray:
    """Source index for each position in [-pad, n + pad), under even
    reflection without edge repeat (same layout as np.pad mode='reflect')."""
    pos = np.arange(-pad, n + pad)
    if n == 1:
        return np.zeros(pos.shape, dtype=np.intp)
    period = 2 * (n - 1)
    m = np.mod(pos, period)
    return np.where(m < n, m, period - m).astype(np.intp)


def _check_samples(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.size < 1:
        raise InputError("empty input")
    if not np.all(np.isfinite(x)):
        raise InputError("input contains non-finite samples")
    return x


def stft_values(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """STFT of a raw sample array; returns the (T, K) complex grid."""
    x = _check_samples(x)
    padded = x[reflect_indices(x.size, cfg.pad)]
    n_frames = cfg.n_frames(x.size)
    starts = np.arange(n_frames) * cfg.hop
    frames = padded[starts[:, None] + np.arange(cfg.win_length)[None, :]]
    frames = frames * cfg.window_values()[None, :]
    return np.fft.rfft(frames, n=cfg.fft_size, axis=1)


def stft(w: Waveform, cfg: StftConfig) -> ComplexSpectrogram:
    values = stft_values(w.samples, cfg)
    return ComplexSpectrogram(values, cfg, len(w), w.sample_rate)


def istft(s: ComplexSpectrogram) -> Waveform:
    """Overlap-add inverse with window-square normalization, trimmed to the
    source length. Raises if the overlap-add envelope has gaps (no COLA)."""
    cfg = s.config
    win = cfg.window_values()
    frames = np.fft.irfft(s.values, n=cfg.fft_size, axis=1)[:, : cfg.win_length]
    n_frames = s.values.shape[0]
    padded_len = cfg.win_length + (n_frames - 1) * cfg.hop
    lo, hi = cfg.pad, cfg.pad + s.source_length
    if hi > padded_len:
        raise InputError("frame count inconsistent with source_length")

    buf = np.zeros(padded_len)
    wsum = np.zeros(padded_len)
    for t in range(n_frames):
        sl = slice(t * cfg.hop, t * cfg.hop + cfg.win_length)
        buf[sl] += win * frames[t]
        wsum[sl] += win * win

    env = wsum[lo:hi]
    if env.min() <= _COLA_FLOOR * wsum.max():
        raise UnsupportedConfigError(
            f"overlap-add envelope vanishes for fft={cfg.fft_size} hop={cfg.hop} "
            f"win={cfg.win_length} window={cfg.window}; no stable inverse"
        )
    return Waveform(buf[lo:hi] / env, s.sample_rate)


def stft_adjoint(grad: np.ndarray, cfg: StftConfig, source_length: int) -> np.ndarray:
    """Transpose of the linear STFT map: spectrogram-gradient in, sample-
    gradient out.

    Implements the exact chain through the one-sided DFT, the zero-padding,
    the analysis window, the frame layout, and the reflection-padding
    fold-back, so ``<stft(x), G> == <x, stft_adjoint(G)>`` holds to rounding.
    """
    g = np.asarray(grad, dtype=np.complex128)
    n_frames = cfg.n_frames(source_length)
    if g.shape != (n_frames, cfg.n_bins):
        raise InputError(
            f"gradient grid shape {g.shape} does not match expected "
            f"({n_frames}, {cfg.n_bins}) for source_length={source_length}"
        )
    # adjoint of the one-sided DFT rows: only the produced bins contribute
    full = np.zeros((n_frames, cfg.fft_size), dtype=np.complex128)
    full[:, : cfg.n_bins] = g
    g_frames = np.real(np.fft.ifft(full, axis=1)) * cfg.fft_size
    g_frames = g_frames[:, : cfg.win_length] * cfg.window_values()[None, :]

    padded_len = source_length + 2 * cfg.pad
    g_padded = np.zeros(padded_len)
    for t in range(n_frames):
        g_padded[t * cfg.hop : t * cfg.hop + cfg.win_length] += g_frames[t]

    idx = reflect_indices(source_length, cfg.pad)
    return np.bincount(idx, weights=g_padded, minlength=source_length)
