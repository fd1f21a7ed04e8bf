"""Batch command-line front end.

Verbs:

* ``loss``     — training-criterion values over a paired dataset;
* ``metrics``  — evaluation metrics over a paired dataset;
* ``inspect``  — phase / kernel / derivative dumps for one file;
* ``serve``    — line-delimited JSON compute service on stdio (used by the
  out-of-process client bindings).

Reports are deterministic: identical inputs and config produce byte-identical
output regardless of --jobs.
"""

from __future__ import annotations

import argparse
import functools
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .audio_io import PairedPaths, load_triple, pair_paths, read_wav
from .errors import ConfigError, PhasekitError
from .losses import total_loss
from .metrics import compute_metrics
from .phase import (
    KERNEL_DK_OFFSETS,
    KERNEL_DT_OFFSETS,
    continuity_kernel,
    derivative_fields,
    phase_field,
)
from .reports import loss_columns, metric_columns, summarize, write_report
from .runconfig import FORMATS, RunConfig, apply_overrides, load_config_file
from .spectral import StftConfig, stft


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phasekit",
        description="Phase-aware training losses and speech-quality metrics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_batch_flags(p):
        p.add_argument("--clean", required=True, help="directory of clean reference WAVs")
        p.add_argument("--enhanced", required=True, help="directory of enhanced WAVs")
        p.add_argument("--noisy", default=None, help="directory of noisy input WAVs")
        p.add_argument("--config", default=None, help="INI config file")
        p.add_argument("--out", default=None, help="report file (default: stdout)")
        p.add_argument("--format", choices=FORMATS, default=None, help="report format")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers")
        p.add_argument(
            "--figures",
            action=argparse.BooleanOptionalAction,
            default=None,
            help="render PNG figures next to --out (default: on when --out is set)",
        )

    p_loss = sub.add_parser("loss", help="compute training losses over a paired dataset")
    add_batch_flags(p_loss)
    p_loss.add_argument(
        "--preset",
        choices=("pl", "pl-pcl"),
        default=None,
        help="published weight configuration",
    )
    p_loss.add_argument(
        "--pl-mode",
        choices=("wrapped", "noisy-diff"),
        default=None,
        help="phase-loss form: direct wrapped comparison, or difference phases "
        "against the noisy input",
    )

    p_met = sub.add_parser("metrics", help="compute evaluation metrics over a paired dataset")
    add_batch_flags(p_met)
    p_met.add_argument(
        "--sdri",
        action="store_true",
        help="require SDR improvement (needs --noisy)",
    )

    p_ins = sub.add_parser("inspect", help="dump phase/kernel/derivative grids for one WAV")
    p_ins.add_argument("file", help="input WAV")
    p_ins.add_argument(
        "--what", choices=("phase", "kernel", "derivatives"), default="kernel"
    )
    p_ins.add_argument(
        "--stft",
        default="512,128,512",
        help="analysis config as fft,hop,win[,window]",
    )
    p_ins.add_argument("--out", required=True, help="output file (.npz or .tsv)")
    p_ins.add_argument("--figures", action="store_true", help="render a PNG heatmap too")

    sub.add_parser("serve", help="stdio JSON compute service for external bindings")
    return parser


def _resolve_config(args, pl_mode_flag=None, preset=None) -> RunConfig:
    cfg = load_config_file(args.config) if args.config else RunConfig()
    return apply_overrides(cfg, preset=preset, out_format=args.format, pl_mode=pl_mode_flag)


# workers are module-level so ProcessPoolExecutor can pickle them


def _loss_row(paths: PairedPaths, cfg: RunConfig) -> dict:
    row = {"id": paths.utterance_id, "status": "ok", "error": None}
    try:
        triple = load_triple(paths)
        report, _ = total_loss(
            triple.clean,
            triple.enhanced,
            noisy=triple.noisy,
            weights=cfg.weights,
            cfg=cfg.multires,
            pl_mode=cfg.pl_mode,
        )
        row.update(report.to_record())
    except Exception as exc:  # per-row failure must not abort the batch
        row["status"] = "failed"
        row["error"] = str(exc).replace(",", ";").replace("\n", " ")
    return row


def _metric_row(paths: PairedPaths, cfg: RunConfig) -> dict:
    row = {"id": paths.utterance_id, "status": "ok", "error": None}
    try:
        triple = load_triple(paths)
        report = compute_metrics(
            triple.clean,
            triple.enhanced,
            noisy=triple.noisy,
            cfg=cfg.metric_stft,
            snrseg_frame=cfg.snrseg_frame,
            snrseg_hop=cfg.snrseg_hop,
            n_bands=cfg.bands,
            fmin=cfg.fmin,
            fmax=cfg.fmax,
        )
        row.update(report.to_record())
    except Exception as exc:
        row["status"] = "failed"
        row["error"] = str(exc).replace(",", ";").replace("\n", " ")
    return row


def _run_rows(worker, pairs, jobs: int) -> list[dict]:
    if jobs <= 1 or len(pairs) <= 1:
        return [worker(p) for p in pairs]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, pairs))


def _emit(args, cfg: RunConfig, columns, rows, skipped, figure_renderer) -> int:
    summary = summarize(rows, columns)
    n_ok = sum(1 for r in rows if r["status"] == "ok")
    n_failed = len(rows) - n_ok
    header = dict(cfg.effective())
    header.update(
        {
            "paths.clean": str(args.clean),
            "paths.enhanced": str(args.enhanced),
            "paths.noisy": str(args.noisy) if args.noisy else "",
            "counts.ok": str(n_ok),
            "counts.failed": str(n_failed),
            "counts.skipped": str(len(skipped)),
        }
    )
    text = write_report(args.out, cfg.out_format, header, columns, rows, summary)
    if args.out is None:
        sys.stdout.write(text)

    for skip in skipped:
        print(f"skipped {skip.utterance_id}: {skip.reason}", file=sys.stderr)
    for row in rows:
        if row["status"] == "failed":
            print(f"failed {row['id']}: {row['error']}", file=sys.stderr)
    print(
        f"{n_ok} ok, {n_failed} failed, {len(skipped)} skipped",
        file=sys.stderr,
    )

    want_figures = args.figures if args.figures is not None else args.out is not None
    if want_figures and args.out is not None:
        out_base = Path(args.out).with_suffix("")
        for path in figure_renderer(out_base):
            print(f"figure: {path}", file=sys.stderr)

    if rows and n_ok == 0:
        return 1
    return 0


def cmd_loss(args) -> int:
    cfg = _resolve_config(args, pl_mode_flag=args.pl_mode, preset=args.preset)
    if cfg.pl_mode == "noisy-diff" and args.noisy is None:
        raise ConfigError("pl_mode 'noisy-diff' requires --noisy")
    pairs, skipped = pair_paths(args.clean, args.enhanced, args.noisy)
    rows = _run_rows(functools.partial(_loss_row, cfg=cfg), pairs, args.jobs)
    columns = loss_columns(len(cfg.multires))

    from .figures import render_loss_figures

    return _emit(
        args, cfg, columns, rows, skipped,
        lambda base: render_loss_figures(rows, base),
    )


def cmd_metrics(args) -> int:
    cfg = _resolve_config(args)
    if args.sdri and args.noisy is None:
        raise ConfigError("--sdri requires --noisy")
    pairs, skipped = pair_paths(args.clean, args.enhanced, args.noisy)
    rows = _run_rows(functools.partial(_metric_row, cfg=cfg), pairs, args.jobs)
    columns = metric_columns(with_sdri=args.noisy is not None)

    from .figures import render_metric_figures

    return _emit(
        args, cfg, columns, rows, skipped,
        lambda base: render_metric_figures(rows, base),
    )


def _parse_stft_flag(raw: str) -> StftConfig:
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) not in (3, 4):
        raise ConfigError(f"--stft expects fft,hop,win[,window], got {raw!r}")
    try:
        fft, hop, win = (int(p) for p in parts[:3])
    except ValueError:
        raise ConfigError(f"--stft expects integers, got {raw!r}") from None
    window = parts[3] if len(parts) == 4 else "hann"
    try:
        return StftConfig(fft, hop, win, window)
    except PhasekitError as exc:
        raise ConfigError(str(exc)) from None


def _inspect_payload(what: str, spec) -> dict:
    n_frames, n_bins = spec.values.shape
    sr = spec.sample_rate
    cfg = spec.config
    axes = {
        "frame_index": np.arange(n_frames),
        "frame_time_s": np.arange(n_frames) * cfg.hop / sr,
        "bin_index": np.arange(n_bins),
        "bin_freq_hz": np.arange(n_bins) * sr / cfg.fft_size,
    }
    if what == "phase":
        p = phase_field(spec)
        return {"cos_vals": p.cos_vals, "sin_vals": p.sin_vals, "magnitude": p.magnitude, **axes}
    if what == "derivatives":
        d = derivative_fields(spec)
        return {"if_vals": d.if_vals, "gd_vals": d.gd_vals, **axes}
    ks = continuity_kernel(phase_field(spec))
    axes["frame_index"] = np.arange(1, n_frames - 1)  # interior centers only
    axes["frame_time_s"] = axes["frame_index"] * cfg.hop / sr
    axes["bin_index"] = np.arange(1, n_bins - 1)
    axes["bin_freq_hz"] = axes["bin_index"] * sr / cfg.fft_size
    return {
        "cos_kernel": ks.cos_kernel,
        "sin_kernel": ks.sin_kernel,
        "dt_offsets": np.array(KERNEL_DT_OFFSETS),
        "dk_offsets": np.array(KERNEL_DK_OFFSETS),
        **axes,
    }


def _write_tsv_dump(path: Path, what: str, payload: dict) -> None:
    with path.open("w") as fh:
        if what == "kernel":
            fh.write("frame\tbin\tdt\tdk\tcos\tsin\n")
            ck, sk = payload["cos_kernel"], payload["sin_kernel"]
            frames, bins_ = payload["frame_index"], payload["bin_index"]
            for ti, t in enumerate(frames):
                for ki, k in enumerate(bins_):
                    for r, dk in enumerate(KERNEL_DK_OFFSETS):
                        for c, dt in enumerate(KERNEL_DT_OFFSETS):
                            fh.write(
                                f"{t}\t{k}\t{dt}\t{dk}\t{ck[ti, ki, r, c]!r}\t{sk[ti, ki, r, c]!r}\n"
                            )
            return
        grids = [k for k in payload if payload[k].ndim == 2]
        fh.write("frame\tbin\t" + "\t".join(grids) + "\n")
        frames, bins_ = payload["frame_index"], payload["bin_index"]
        for ti, t in enumerate(frames):
            for ki, k in enumerate(bins_):
                cells = "\t".join(repr(float(payload[g][ti, ki])) for g in grids)
                fh.write(f"{t}\t{k}\t{cells}\n")


def cmd_inspect(args) -> int:
    cfg = _parse_stft_flag(args.stft)
    wave = read_wav(args.file)
    spec = stft(wave, cfg)
    payload = _inspect_payload(args.what, spec)

    out = Path(args.out)
    if out.suffix == ".tsv":
        _write_tsv_dump(out, args.what, payload)
    else:
        np.savez(out, **payload)
    print(f"wrote {out}", file=sys.stderr)

    if args.figures:
        from .figures import render_inspect_figures

        for path in render_inspect_figures(args.what, payload, out.with_suffix("")):
            print(f"figure: {path}", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "loss":
            return cmd_loss(args)
        if args.command == "metrics":
            return cmd_metrics(args)
        if args.command == "inspect":
            return cmd_inspect(args)
        if args.command == "serve":
            from .serve import run_stdio

            return run_stdio()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PhasekitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    raise SystemExit(main())
