import numpy as np
import pytest

from phasekit import (
    InputError,
    MultiResConfig,
    StftConfig,
    UnsupportedConfigError,
    Waveform,
    default_multires,
    istft,
    stft,
    stft_adjoint,
)
from phasekit.spectral import reflect_indices, stft_values

from conftest import SR, make_wave
from oracles import central_differences, naive_stft


def test_config_validation():
    with pytest.raises(InputError):
        StftConfig(fft_size=100, hop=10, win_length=50)  # not a power of two
    with pytest.raises(InputError):
        StftConfig(fft_size=64, hop=0, win_length=32)
    with pytest.raises(InputError):
        StftConfig(fft_size=64, hop=40, win_length=32)  # hop > win
    with pytest.raises(InputError):
        StftConfig(fft_size=64, hop=16, win_length=128)  # win > fft
    with pytest.raises(InputError):
        StftConfig(fft_size=64, hop=16, win_length=64, window="hamming")


def test_multires_rejects_duplicates():
    cfg = StftConfig(64, 16, 64)
    with pytest.raises(InputError):
        MultiResConfig((cfg, cfg))
    with pytest.raises(InputError):
        MultiResConfig(())


def test_reflect_indices_match_numpy_pad():
    rng = np.random.default_rng(0)
    for n, pad in [(1, 3), (2, 5), (8, 4), (8, 20), (100, 600), (5, 1)]:
        x = rng.standard_normal(n)
        expected = np.pad(x, pad, mode="reflect")
        got = x[reflect_indices(n, pad)]
        assert np.array_equal(got, expected), (n, pad)


def test_all_zero_waveform_gives_all_zero_spectrogram(small_cfg):
    w = Waveform(np.zeros(400), SR)
    s = stft(w, small_cfg)
    assert np.all(s.values == 0.0)


def test_frame_count_contract():
    cfg = StftConfig(fft_size=64, hop=16, win_length=64)
    for n in (1, 5, 63, 64, 100, 257):
        w = Waveform(np.random.default_rng(n).standard_normal(n), SR)
        s = stft(w, cfg)
        padded = n + 2 * cfg.pad
        assert s.values.shape == (1 + (padded - cfg.win_length) // cfg.hop, cfg.n_bins)


def test_rectangular_tone_single_frame_bin():
    # one exact period-4 tone frame: energy lands on bin 2 only
    fft = 8
    cfg = StftConfig(fft_size=fft, hop=fft, win_length=fft, window="rectangular")
    k0 = 2
    t = np.arange(fft)
    w = Waveform(np.cos(2.0 * np.pi * t * k0 / fft), SR)
    s = stft(w, cfg)
    frame0 = np.abs(s.values[0])
    assert frame0[k0] == pytest.approx(4.0, abs=1e-12)
    others = np.delete(frame0, k0)
    assert np.all(others <= 1e-12)


@pytest.mark.parametrize("window", ["hann", "rectangular"])
def test_stft_matches_naive_dft_oracle(window):
    rng = np.random.default_rng(7)
    x = rng.standard_normal(64)
    cfg = StftConfig(fft_size=16, hop=4, win_length=16, window=window)
    got = stft_values(x, cfg)
    expected = naive_stft(x, cfg.fft_size, cfg.hop, cfg.win_length, cfg.window)
    assert got.shape == expected.shape
    scale = np.max(np.abs(expected))
    assert np.max(np.abs(got - expected)) <= 1e-10 * scale


def test_stft_rejects_nonfinite():
    cfg = StftConfig(64, 16, 64)
    bad = np.zeros(100)
    bad[3] = np.nan
    with pytest.raises(InputError):
        stft_values(bad, cfg)


def test_stft_linearity(small_cfg):
    rng = np.random.default_rng(3)
    x = rng.standard_normal(300)
    y = rng.standard_normal(300)
    a, b = 0.37, -1.9
    lhs = stft_values(a * x + b * y, small_cfg)
    rhs = a * stft_values(x, small_cfg) + b * stft_values(y, small_cfg)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(rhs)))


def test_istft_round_trip_spec_example():
    cfg = StftConfig(fft_size=512, hop=128, win_length=512, window="hann")
    rng = np.random.default_rng(11)
    w = Waveform(rng.standard_normal(1024), SR)
    back = istft(stft(w, cfg))
    assert len(back) == len(w)
    assert np.max(np.abs(back.samples - w.samples)) <= 1e-10


def test_istft_round_trip_default_resolutions():
    rng = np.random.default_rng(12)
    w = make_wave(rng, 5000)
    for cfg in default_multires().resolutions:
        back = istft(stft(w, cfg))
        assert np.max(np.abs(back.samples - w.samples)) <= 1e-10, cfg


def test_istft_all_zero_spectrogram(small_cfg):
    w = Waveform(np.zeros(333), SR)
    s = stft(w, small_cfg)
    back = istft(s)
    assert len(back) == 333
    assert np.all(back.samples == 0.0)


def test_istft_single_frame_window_spectrum():
    # single rectangular frame whose spectrum is the DFT of the window:
    # closed form says the covered segment comes back as the all-ones window
    cfg = StftConfig(fft_size=8, hop=8, win_length=8, window="rectangular")
    win = cfg.window_values()
    from phasekit.spectral import ComplexSpectrogram

    values = np.fft.rfft(win, n=cfg.fft_size)[None, :]
    s = ComplexSpectrogram(values, cfg, source_length=4, sample_rate=SR)
    out = istft(s)
    assert np.allclose(out.samples, win[cfg.pad : cfg.pad + 4], atol=1e-12)


def test_istft_rejects_non_cola_config():
    cfg = StftConfig(fft_size=64, hop=64, win_length=64, window="hann")
    w = Waveform(np.random.default_rng(0).standard_normal(256), SR)
    with pytest.raises(UnsupportedConfigError):
        istft(stft(w, cfg))


def test_adjoint_zero_gradient(small_cfg):
    n = 200
    t_frames = small_cfg.n_frames(n)
    g = np.zeros((t_frames, small_cfg.n_bins), dtype=np.complex128)
    out = stft_adjoint(g, small_cfg, n)
    assert out.shape == (n,)
    assert np.all(out == 0.0)


def test_adjoint_shape_mismatch(small_cfg):
    with pytest.raises(InputError):
        stft_adjoint(np.zeros((2, 3), dtype=np.complex128), small_cfg, 500)


def test_adjoint_identity():
    # <stft(x), G> == <x, stft_adjoint(G)> with the real inner product
    rng = np.random.default_rng(21)
    cfg = StftConfig(fft_size=32, hop=8, win_length=32)
    for _ in range(20):
        n = int(rng.integers(40, 400))
        x = rng.standard_normal(n)
        s = stft_values(x, cfg)
        g = rng.standard_normal(s.shape) + 1j * rng.standard_normal(s.shape)
        lhs = float(np.sum(s.real * g.real + s.imag * g.imag))
        rhs = float(np.dot(x, stft_adjoint(g, cfg, n)))
        assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


def test_adjoint_matches_finite_differences(small_cfg):
    # scalar loss: weighted sum of real/imag parts of the spectrogram
    rng = np.random.default_rng(5)
    n = 256
    x = rng.standard_normal(n)
    shape = (small_cfg.n_frames(n), small_cfg.n_bins)
    wr = rng.standard_normal(shape)
    wi = rng.standard_normal(shape)

    def loss(v):
        s = stft_values(v, small_cfg)
        return float(np.sum(wr * s.real + wi * s.imag))

    analytic = stft_adjoint(wr + 1j * wi, small_cfg, n)
    fd = central_differences(loss, x, 1e-4)
    denom = np.maximum(np.abs(fd), np.abs(analytic))
    denom[denom < 1e-9] = 1.0
    assert np.max(np.abs(fd - analytic) / denom) <= 1e-6


def test_adjoint_single_bin_is_analysis_atom():
    # gradient of Re(S[t,k]) is the windowed cosine folded through the padding
    cfg = StftConfig(fft_size=16, hop=4, win_length=16)
    n = 64
    t_sel, k_sel = 3, 5

    def loss(v):
        return float(stft_values(v, cfg)[t_sel, k_sel].real)

    g = np.zeros((cfg.n_frames(n), cfg.n_bins), dtype=np.complex128)
    g[t_sel, k_sel] = 1.0
    analytic = stft_adjoint(g, cfg, n)
    fd = central_differences(loss, np.random.default_rng(9).standard_normal(n), 1e-5)
    assert np.max(np.abs(fd - analytic)) <= 1e-7
