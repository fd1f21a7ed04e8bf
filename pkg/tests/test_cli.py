import json
from pathlib import Path

import numpy as np
import pytest

from phasekit import Waveform, write_wav
from phasekit.cli import main

from conftest import SR, add_noise_at_snr, harmonic_stack


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    """10 synthetic utterances in clean/noisy/enhanced directories."""
    root = tmp_path_factory.mktemp("corpus")
    rng = np.random.default_rng(1234)
    for sub in ("clean", "noisy", "enhanced"):
        (root / sub).mkdir()
    for i in range(10):
        n = 3200 + 160 * i
        clean = harmonic_stack(n, f0=120.0 + 15.0 * i)
        noisy = add_noise_at_snr(rng, clean, snr_db=5.0)
        enhanced = add_noise_at_snr(rng, clean, snr_db=20.0)
        name = f"utt{i:02d}.wav"
        write_wav(root / "clean" / name, clean)
        write_wav(root / "noisy" / name, noisy)
        write_wav(root / "enhanced" / name, enhanced)
    return root


def run_cli(argv):
    return main(argv)


def parse_csv(path: Path):
    header = {}
    rows = []
    columns = None
    for line in path.read_text().splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition("=")
            header[key] = value
        elif columns is None:
            columns = line.split(",")
        else:
            rows.append(dict(zip(columns, line.split(","))))
    return header, columns, rows


SMALL_STFT_INI = """
[stft]
fft_sizes = 128,256
hops = 32,64
win_lengths = 128,160
window = hann

[metrics]
stft_fft = 256
stft_hop = 64
stft_win = 256
"""


@pytest.fixture(scope="module")
def small_config(tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg") / "run.ini"
    p.write_text(SMALL_STFT_INI)
    return p


def test_loss_run_identical_dirs_all_zero(corpus, small_config, tmp_path):
    out = tmp_path / "loss.csv"
    code = run_cli([
        "loss", "--clean", str(corpus / "clean"), "--enhanced", str(corpus / "clean"),
        "--config", str(small_config), "--out", str(out), "--no-figures",
    ])
    assert code == 0
    _, _, rows = parse_csv(out)
    data_rows = [r for r in rows if r["status"] == "ok"]
    assert len(data_rows) == 10
    assert all(float(r["total"]) == 0.0 for r in data_rows)


def test_loss_preset_weights_echoed(corpus, small_config, tmp_path):
    out = tmp_path / "loss.csv"
    run_cli([
        "loss", "--clean", str(corpus / "clean"), "--enhanced", str(corpus / "enhanced"),
        "--config", str(small_config), "--preset", "pl-pcl", "--out", str(out),
        "--no-figures",
    ])
    header, _, _ = parse_csv(out)
    assert header["weights.lambda0"] == "0.01"
    assert header["weights.lambda1"] == "1.0"
    assert header["weights.lambda2"] == "0.1"
    assert header["weights.lambda_p"] == "1.0"
    assert header["weights.lambda_pc"] == "0.5"

    run_cli([
        "loss", "--clean", str(corpus / "clean"), "--enhanced", str(corpus / "enhanced"),
        "--config", str(small_config), "--preset", "pl", "--out", str(out), "--no-figures",
    ])
    header, _, _ = parse_csv(out)
    assert header["weights.lambda0"] == "0.02"
    assert header["weights.lambda2"] == "1.0"
    assert header["weights.lambda_pc"] == "0.0"


def test_loss_summary_mean_matches_rows(corpus, small_config, tmp_path):
    out = tmp_path / "loss.csv"
    run_cli([
        "loss", "--clean", str(corpus / "clean"), "--enhanced", str(corpus / "enhanced"),
        "--config", str(small_config), "--out", str(out), "--no-figures",
    ])
    _, _, rows = parse_csv(out)
    data = [r for r in rows if r["status"] == "ok"]
    summary = next(r for r in rows if r["status"] == "summary")
    mean_total = sum(float(r["total"]) for r in data) / len(data)
    assert abs(float(summary["total"]) - mean_total) <= 1e-12


def test_loss_determinism_across_jobs(corpus, small_config, tmp_path):
    outs = []
    for tag, jobs in (("a", 1), ("b", 1), ("c", 3)):
        out = tmp_path / f"loss_{tag}.csv"
        code = run_cli([
            "loss", "--clean", str(corpus / "clean"), "--enhanced", str(corpus / "enhanced"),
            "--config", str(small_config), "--out", str(out), "--jobs", str(jobs),
            "--no-figures",
        ])
        assert code == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_metrics_identical_dirs(corpus, small_config, tmp_path):
    out = tmp_path / "m.csv"
    code = run_cli([
        "metrics", "--clean", str(corpus / "clean"), "--enhanced", str(corpus / "clean"),
        "--config", str(small_config), "--out", str(out), "--no-figures",
    ])
    assert code == 0
    _, columns, rows = parse_csv(out)
    assert "sdri" not in columns
    data = [r for r in rows if r["status"] == "ok"]
    assert all(float(r["snrseg"]) == 35.0 for r in data)
    assert all(float(r["sdr"]) == 99.0 for r in data)  # capped sentinel
    assert all(float(r["unrmse"]) == 0.0 for r in data)


def test_metrics_with_noisy_has_sdri(corpus, small_config, tmp_path):
    out = tmp_path / "m.csv"
    code = run_cli([
        "metrics", "--clean", str(corpus / "clean"), "--enhanced", str(corpus / "enhanced"),
        "--noisy", str(corpus / "noisy"), "--config", str(small_config),
        "--out", str(out), "--no-figures",
    ])
    assert code == 0
    _, columns, rows = parse_csv(out)
    assert "sdri" in columns
    data = [r for r in rows if r["status"] == "ok"]
    assert len(data) == 10
    assert all(r["sdri"] != "" for r in data)


def test_metrics_determinism_across_jobs(corpus, small_config, tmp_path):
    outs = []
    for tag, jobs in (("a", 1), ("b", 3)):
        out = tmp_path / f"m_{tag}.csv"
        run_cli([
            "metrics", "--clean", str(corpus / "clean"), "--enhanced", str(corpus / "enhanced"),
            "--noisy", str(corpus / "noisy"), "--config", str(small_config),
            "--out", str(out), "--jobs", str(jobs), "--no-figures",
        ])
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_metrics_sdri_without_noisy_is_config_error(corpus, tmp_path):
    code = run_cli([
        "metrics", "--clean", str(corpus / "clean"), "--enhanced", str(corpus / "enhanced"),
        "--sdri", "--out", str(tmp_path / "x.csv"), "--no-figures",
    ])
    assert code == 2


def test_unknown_config_key_rejected(corpus, tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[stft]\nfft_sizes = 128\nhops = 32\nwin_lengths = 128\nbogus = 1\n")
    code = run_cli([
        "loss", "--clean", str(corpus / "clean"), "--enhanced", str(corpus / "clean"),
        "--config", str(bad), "--out", str(tmp_path / "x.csv"), "--no-figures",
    ])
    assert code == 2


def test_per_row_failure_does_not_abort(corpus, small_config, tmp_path):
    broken = tmp_path / "enhanced"
    broken.mkdir()
    for p in (corpus / "enhanced").glob("*.wav"):
        (broken / p.name).write_bytes(p.read_bytes())
    (broken / "utt03.wav").write_bytes(b"RIFFgarbage!")
    out = tmp_path / "loss.csv"
    code = run_cli([
        "loss", "--clean", str(corpus / "clean"), "--enhanced", str(broken),
        "--config", str(small_config), "--out", str(out), "--no-figures",
    ])
    assert code == 0  # not all rows failed
    header, _, rows = parse_csv(out)
    statuses = {r["id"]: r["status"] for r in rows if r["status"] in ("ok", "failed")}
    assert statuses["utt03"] == "failed"
    assert sum(1 for s in statuses.values() if s == "ok") == 9
    assert header["counts.failed"] == "1"


def test_skipped_pairs_reported(corpus, small_config, tmp_path):
    partial = tmp_path / "enhanced"
    partial.mkdir()
    for p in sorted((corpus / "enhanced").glob("*.wav"))[:7]:
        (partial / p.name).write_bytes(p.read_bytes())
    out = tmp_path / "loss.csv"
    code = run_cli([
        "loss", "--clean", str(corpus / "clean"), "--enhanced", str(partial),
        "--config", str(small_config), "--out", str(out), "--no-figures",
    ])
    assert code == 0
    header, _, rows = parse_csv(out)
    assert header["counts.skipped"] == "3"
    assert sum(1 for r in rows if r["status"] == "ok") == 7


def test_jsonl_format(corpus, small_config, tmp_path):
    out = tmp_path / "m.jsonl"
    run_cli([
        "metrics", "--clean", str(corpus / "clean"), "--enhanced", str(corpus / "enhanced"),
        "--config", str(small_config), "--format", "jsonl", "--out", str(out),
        "--no-figures",
    ])
    lines = [json.loads(l) for l in out.read_text().splitlines()]
    assert lines[0]["record"] == "header"
    assert lines[0]["schema_version"] == 1
    assert lines[-1]["record"] == "summary"
    assert sum(1 for l in lines if l["record"] == "row") == 10


def test_inspect_tone_derivatives(tmp_path):
    n = SR
    t = np.arange(n) / SR
    f0 = 8 * SR / 256  # exact center of bin 8 at fft 256
    write_wav(tmp_path / "tone.wav", Waveform(0.8 * np.sin(2 * np.pi * f0 * t), SR))
    out = tmp_path / "d.npz"
    code = run_cli([
        "inspect", str(tmp_path / "tone.wav"), "--what", "derivatives",
        "--stft", "256,64,256,rectangular", "--out", str(out),
    ])
    assert code == 0
    data = np.load(out)
    if_vals = data["if_vals"]
    from phasekit import principal_value

    expected = principal_value(2 * np.pi * f0 * 64 / SR)
    mid = if_vals[5:-5, 8]
    assert np.max(np.abs(mid - expected)) <= 1e-6


def test_inspect_silence_kernel_all_zero(tmp_path):
    write_wav(tmp_path / "sil.wav", Waveform(np.zeros(4000), SR))
    out = tmp_path / "k.npz"
    code = run_cli([
        "inspect", str(tmp_path / "sil.wav"), "--what", "kernel",
        "--stft", "256,64,256", "--out", str(out),
    ])
    assert code == 0
    data = np.load(out)
    assert np.all(data["cos_kernel"] == 0.0)
    assert np.all(data["sin_kernel"] == 0.0)


def test_inspect_kernel_dump_shape(tmp_path):
    rng = np.random.default_rng(0)
    write_wav(tmp_path / "x.wav", Waveform(0.4 * rng.standard_normal(3000), SR))
    out = tmp_path / "k.npz"
    run_cli([
        "inspect", str(tmp_path / "x.wav"), "--what", "kernel",
        "--stft", "128,32,128", "--out", str(out),
    ])
    data = np.load(out)
    n_frames = 1 + (3000 + 2 * 64 - 128) // 32
    n_bins = 65
    assert data["cos_kernel"].shape == (n_frames - 2, n_bins - 2, 3, 3)
    assert list(data["dt_offsets"]) == [-1, 0, 1]
    assert list(data["dk_offsets"]) == [1, 0, -1]


def test_inspect_tsv_dump(tmp_path):
    rng = np.random.default_rng(1)
    write_wav(tmp_path / "x.wav", Waveform(0.4 * rng.standard_normal(1000), SR))
    out = tmp_path / "p.tsv"
    code = run_cli([
        "inspect", str(tmp_path / "x.wav"), "--what", "phase",
        "--stft", "64,32,64", "--out", str(out),
    ])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("frame\tbin\t")
    n_frames = 1 + (1000 + 64 - 64) // 32
    assert len(lines) == 1 + n_frames * 33


def test_figures_rendered_alongside_report(corpus, small_config, tmp_path):
    out = tmp_path / "loss.csv"
    code = run_cli([
        "loss", "--clean", str(corpus / "clean"), "--enhanced", str(corpus / "enhanced"),
        "--config", str(small_config), "--out", str(out), "--figures",
    ])
    assert code == 0
    assert (tmp_path / "loss_losses.png").stat().st_size > 0

    out2 = tmp_path / "m.csv"
    run_cli([
        "metrics", "--clean", str(corpus / "clean"), "--enhanced", str(corpus / "enhanced"),
        "--config", str(small_config), "--out", str(out2), "--figures",
    ])
    assert (tmp_path / "m_metrics.png").stat().st_size > 0


def test_inspect_figure(tmp_path):
    rng = np.random.default_rng(2)
    write_wav(tmp_path / "x.wav", Waveform(0.4 * rng.standard_normal(2000), SR))
    out = tmp_path / "d.npz"
    code = run_cli([
        "inspect", str(tmp_path / "x.wav"), "--what", "derivatives",
        "--stft", "128,32,128", "--out", str(out), "--figures",
    ])
    assert code == 0
    assert (tmp_path / "d_derivatives.png").stat().st_size > 0


def test_inspect_too_small_for_kernel(tmp_path):
    write_wav(tmp_path / "tiny.wav", Waveform(np.full(40, 0.3), SR))
    code = run_cli([
        "inspect", str(tmp_path / "tiny.wav"), "--what", "kernel",
        "--stft", "512,256,512", "--out", str(tmp_path / "k.npz"),
    ])
    assert code == 1  # only 2 frames at this resolution


def test_record_lines_format_alias(corpus, small_config, tmp_path):
    out = tmp_path / "m.jsonl"
    code = run_cli([
        "metrics", "--clean", str(corpus / "clean"), "--enhanced", str(corpus / "clean"),
        "--config", str(small_config), "--format", "record-lines", "--out", str(out),
        "--no-figures",
    ])
    assert code == 0
    first = json.loads(out.read_text().splitlines()[0])
    assert first["record"] == "header"
    assert first["config"]["run.format"] == "jsonl"
