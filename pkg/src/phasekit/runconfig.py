"""Run configuration: defaults, INI-style config files, CLI overrides.

The config file is flat typed key=value text with sections; unknown sections
or keys are rejected outright so typos cannot silently fall back to defaults.
Every value here is result-affecting and is echoed into the report header;
execution knobs (jobs, figures) deliberately stay out of it so reports are
byte-identical across parallelism settings.
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, replace

from .errors import ConfigError, InputError
from .losses import WEIGHT_PRESETS, LossWeights
from .metrics import FW_BANDS, FW_FMAX, FW_FMIN, SNRSEG_FRAME, default_metric_stft
from .spectral import MultiResConfig, StftConfig, default_multires

_SCHEMA = {
    "stft": ("fft_sizes", "hops", "win_lengths", "window"),
    "weights": ("lambda0", "lambda1", "lambda2", "lambda_p", "lambda_pc"),
    "metrics": (
        "stft_fft",
        "stft_hop",
        "stft_win",
        "stft_window",
        "snrseg_frame",
        "snrseg_hop",
        "bands",
        "fmin",
        "fmax",
    ),
    "run": ("format", "pl_mode"),
}

FORMATS = ("csv", "jsonl", "record-lines")  # record-lines is an alias for jsonl


@dataclass(frozen=True)
class RunConfig:
    multires: MultiResConfig = field(default_factory=default_multires)
    weights: LossWeights = field(default_factory=LossWeights)
    metric_stft: StftConfig = field(default_factory=default_metric_stft)
    snrseg_frame: int = SNRSEG_FRAME
    snrseg_hop: int | None = None
    bands: int = FW_BANDS
    fmin: float = FW_FMIN
    fmax: float = FW_FMAX
    out_format: str = "csv"
    pl_mode: str = "wrapped"

    def effective(self) -> dict[str, str]:
        """Flat result-affecting settings for the report provenance header."""
        res = self.multires.resolutions
        eff = {
            "stft.fft_sizes": ",".join(str(c.fft_size) for c in res),
            "stft.hops": ",".join(str(c.hop) for c in res),
            "stft.win_lengths": ",".join(str(c.win_length) for c in res),
            "stft.window": res[0].window,
            "weights.lambda0": repr(self.weights.lambda0),
            "weights.lambda1": repr(self.weights.lambda1),
            "weights.lambda2": repr(self.weights.lambda2),
            "weights.lambda_p": repr(self.weights.lambda_p),
            "weights.lambda_pc": repr(self.weights.lambda_pc),
            "metrics.stft_fft": str(self.metric_stft.fft_size),
            "metrics.stft_hop": str(self.metric_stft.hop),
            "metrics.stft_win": str(self.metric_stft.win_length),
            "metrics.stft_window": self.metric_stft.window,
            "metrics.snrseg_frame": str(self.snrseg_frame),
            "metrics.snrseg_hop": str(self.snrseg_hop if self.snrseg_hop else self.snrseg_frame),
            "metrics.bands": str(self.bands),
            "metrics.fmin": repr(self.fmin),
            "metrics.fmax": repr(self.fmax),
            "run.format": self.out_format,
            "run.pl_mode": self.pl_mode,
        }
        return eff


def _parse_int_list(raw: str, key: str) -> tuple[int, ...]:
    try:
        return tuple(int(v.strip()) for v in raw.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated integers, got {raw!r}") from None


def _parse_scalar(raw: str, key: str, kind):
    try:
        return kind(raw.strip())
    except ValueError:
        raise ConfigError(f"{key}: expected {kind.__name__}, got {raw!r}") from None


def load_config_file(path) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file: {path}")

    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key in parser[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")

    cfg = RunConfig()
    try:
        if parser.has_section("stft"):
            sec = parser["stft"]
            base = default_multires().resolutions
            ffts = _parse_int_list(sec.get("fft_sizes", ""), "stft.fft_sizes") or tuple(
                c.fft_size for c in base
            )
            hops = _parse_int_list(sec.get("hops", ""), "stft.hops") or tuple(c.hop for c in base)
            wins = _parse_int_list(sec.get("win_lengths", ""), "stft.win_lengths") or tuple(
                c.win_length for c in base
            )
            window = sec.get("window", "hann").strip()
            if not (len(ffts) == len(hops) == len(wins)):
                raise ConfigError("stft: fft_sizes, hops, win_lengths must have equal length")
            cfg = replace(
                cfg,
                multires=MultiResConfig(
                    tuple(StftConfig(f, h, w, window) for f, h, w in zip(ffts, hops, wins))
                ),
            )
        if parser.has_section("weights"):
            sec = parser["weights"]
            kw = {
                key: _parse_scalar(sec[key], f"weights.{key}", float)
                for key in sec
            }
            cfg = replace(cfg, weights=LossWeights(**{**asdict(cfg.weights), **kw}))
        if parser.has_section("metrics"):
            sec = parser["metrics"]
            m = cfg.metric_stft
            metric_stft = StftConfig(
                _parse_scalar(sec.get("stft_fft", str(m.fft_size)), "metrics.stft_fft", int),
                _parse_scalar(sec.get("stft_hop", str(m.hop)), "metrics.stft_hop", int),
                _parse_scalar(sec.get("stft_win", str(m.win_length)), "metrics.stft_win", int),
                sec.get("stft_window", m.window).strip(),
            )
            cfg = replace(
                cfg,
                metric_stft=metric_stft,
                snrseg_frame=_parse_scalar(
                    sec.get("snrseg_frame", str(cfg.snrseg_frame)), "metrics.snrseg_frame", int
                ),
                snrseg_hop=(
                    _parse_scalar(sec["snrseg_hop"], "metrics.snrseg_hop", int)
                    if "snrseg_hop" in sec
                    else cfg.snrseg_hop
                ),
                bands=_parse_scalar(sec.get("bands", str(cfg.bands)), "metrics.bands", int),
                fmin=_parse_scalar(sec.get("fmin", repr(cfg.fmin)), "metrics.fmin", float),
                fmax=_parse_scalar(sec.get("fmax", repr(cfg.fmax)), "metrics.fmax", float),
            )
        if parser.has_section("run"):
            sec = parser["run"]
            cfg = replace(
                cfg,
                out_format=_canonical_format(sec.get("format", cfg.out_format).strip()),
                pl_mode=sec.get("pl_mode", cfg.pl_mode).strip(),
            )
    except InputError as exc:  # bad StftConfig / LossWeights values
        raise ConfigError(str(exc)) from None

    validate_run_config(cfg)
    return cfg


def _canonical_format(fmt: str) -> str:
    return "jsonl" if fmt == "record-lines" else fmt


def validate_run_config(cfg: RunConfig) -> None:
    if cfg.out_format not in ("csv", "jsonl"):
        raise ConfigError(f"run.format must be one of {FORMATS}, got {cfg.out_format!r}")
    if cfg.pl_mode not in ("wrapped", "noisy-diff"):
        raise ConfigError(f"run.pl_mode must be 'wrapped' or 'noisy-diff', got {cfg.pl_mode!r}")
    if cfg.snrseg_frame <= 0 or (cfg.snrseg_hop is not None and cfg.snrseg_hop <= 0):
        raise ConfigError("metrics.snrseg_frame and snrseg_hop must be positive")
    if cfg.bands <= 0 or cfg.fmin <= 0 or cfg.fmax <= cfg.fmin:
        raise ConfigError("metrics band parameters invalid: need bands > 0, 0 < fmin < fmax")


def apply_overrides(
    cfg: RunConfig,
    preset: str | None = None,
    out_format: str | None = None,
    pl_mode: str | None = None,
) -> RunConfig:
    """CLI flags override their config keys."""
    if preset is not None:
        if preset not in WEIGHT_PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(WEIGHT_PRESETS)}")
        cfg = replace(cfg, weights=WEIGHT_PRESETS[preset])
    if out_format is not None:
        cfg = replace(cfg, out_format=_canonical_format(out_format))
    if pl_mode is not None:
        cfg = replace(cfg, pl_mode=pl_mode)
    validate_run_config(cfg)
    return cfg
