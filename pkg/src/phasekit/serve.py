"""Line-delimited JSON compute service on stdio.

This is the stable boundary for out-of-process callers (training loops,
non-Python clients): one JSON request per line, one JSON response per line.

Protocol (version 1):

* ``{"op": "ping"}`` -> ``{"ok": true, "protocol": 1}``
* ``{"op": "register_config", "stft": {"fft_sizes": [...], "hops": [...],
  "win_lengths": [...], "window": "hann"}}`` -> ``{"ok": true, "config_id"}``.
  Ids are content hashes, so re-registration is idempotent.
* ``{"op": "total_loss", "config_id", "weights": {...}, "sample_rate",
  "target", "enhanced", ["noisy"], ["pl_mode"]}`` ->
  ``{"ok": true, "report": {...}, "gradient"}``
* ``{"op": "metrics", "sample_rate", "clean", "enhanced", ["noisy"]}`` ->
  ``{"ok": true, "report": {...}}``
* ``{"op": "shutdown"}`` ends the loop.

Waveforms and gradients travel as base64-encoded little-endian float64, so
values cross the boundary bit-for-bit; report floats use shortest round-trip
decimal, which any IEEE-754 JSON parser restores to the same float64.
Failures answer ``{"ok": false, "code", "message"}`` with the stable error
codes from :mod:`phasekit.errors`.
"""

from __future__ import annotations

import base64
import hashlib
import json
import sys

import numpy as np

from .audio_io import Waveform
from .errors import InputError, PhasekitError, UnknownConfigError
from .losses import LossWeights, total_loss
from .metrics import compute_metrics
from .reports import jsonable_record
from .spectral import MultiResConfig, StftConfig

PROTOCOL_VERSION = 1


class ProtocolError(PhasekitError):
    code = "E_PROTOCOL"


def encode_array(x: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(x, dtype="<f8").tobytes()).decode("ascii")


def decode_array(payload: str) -> np.ndarray:
    try:
        raw = base64.b64decode(payload.encode("ascii"), validate=True)
    except Exception:
        raise ProtocolError("array payload is not valid base64") from None
    if len(raw) % 8 != 0:
        raise ProtocolError("array payload is not a whole number of float64 values")
    return np.frombuffer(raw, dtype="<f8").astype(np.float64)


def _multires_from_dict(d: dict) -> MultiResConfig:
    try:
        ffts = [int(v) for v in d["fft_sizes"]]
        hops = [int(v) for v in d["hops"]]
        wins = [int(v) for v in d["win_lengths"]]
        window = str(d.get("window", "hann"))
    except (KeyError, TypeError, ValueError):
        raise ProtocolError("stft config needs fft_sizes, hops, win_lengths lists") from None
    if not len(ffts) == len(hops) == len(wins):
        raise ProtocolError("stft config lists must have equal length")
    return MultiResConfig(tuple(StftConfig(f, h, w, window) for f, h, w in zip(ffts, hops, wins)))


def _config_id(d: dict) -> str:
    canon = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return "c" + hashlib.sha256(canon.encode()).hexdigest()[:12]


class Service:
    """Registry plus request dispatch; one instance per connection."""

    def __init__(self):
        self._configs: dict[str, MultiResConfig] = {}

    def handle(self, request: dict) -> dict:
        op = request.get("op")
        if op == "ping":
            return {"ok": True, "protocol": PROTOCOL_VERSION}
        if op == "register_config":
            return self._register(request)
        if op == "total_loss":
            return self._total_loss(request)
        if op == "metrics":
            return self._metrics(request)
        raise ProtocolError(f"unknown op {op!r}")

    def _register(self, request: dict) -> dict:
        stft_dict = request.get("stft")
        if not isinstance(stft_dict, dict):
            raise ProtocolError("register_config needs an 'stft' object")
        multires = _multires_from_dict(stft_dict)
        cid = _config_id(stft_dict)
        self._configs[cid] = multires
        return {"ok": True, "config_id": cid}

    def _waveform(self, request: dict, key: str, required: bool = True) -> Waveform | None:
        if key not in request:
            if required:
                raise ProtocolError(f"missing field {key!r}")
            return None
        samples = decode_array(request[key])
        sr = request.get("sample_rate")
        if not isinstance(sr, int) or sr <= 0:
            raise ProtocolError("sample_rate must be a positive integer")
        if samples.size == 0:
            raise InputError(f"{key}: empty waveform")
        return Waveform(samples, sr)

    def _total_loss(self, request: dict) -> dict:
        cid = request.get("config_id")
        if cid not in self._configs:
            raise UnknownConfigError(f"config id {cid!r} was never registered")
        weights_dict = request.get("weights") or {}
        try:
            weights = LossWeights(**{k: float(v) for k, v in weights_dict.items()})
        except TypeError:
            raise ProtocolError("invalid weights object") from None
        target = self._waveform(request, "target")
        enhanced = self._waveform(request, "enhanced")
        noisy = self._waveform(request, "noisy", required=False)
        report, grad = total_loss(
            target,
            enhanced,
            noisy=noisy,
            weights=weights,
            cfg=self._configs[cid],
            pl_mode=request.get("pl_mode", "wrapped"),
        )
        return {
            "ok": True,
            "report": jsonable_record(report.to_record()),
            "gradient": encode_array(grad),
        }

    def _metrics(self, request: dict) -> dict:
        clean = self._waveform(request, "clean")
        enhanced = self._waveform(request, "enhanced")
        noisy = self._waveform(request, "noisy", required=False)
        report = compute_metrics(clean, enhanced, noisy=noisy)
        return {"ok": True, "report": jsonable_record(report.to_record())}


def run_stdio(stdin=None, stdout=None) -> int:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    service = Service()
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
            if not isinstance(request, dict):
                raise ProtocolError("request must be a JSON object")
            if request.get("op") == "shutdown":
                stdout.write(json.dumps({"ok": True}) + "\n")
                stdout.flush()
                break
            response = service.handle(request)
        except PhasekitError as exc:
            response = {"ok": False, "code": exc.code, "message": str(exc)}
        except json.JSONDecodeError as exc:
            response = {"ok": False, "code": "E_PROTOCOL", "message": f"bad JSON: {exc}"}
        except Exception as exc:  # keep the loop alive on unexpected errors
            response = {"ok": False, "code": "E_INTERNAL", "message": str(exc)}
        stdout.write(json.dumps(response, allow_nan=False) + "\n")
        stdout.flush()
    return 0
