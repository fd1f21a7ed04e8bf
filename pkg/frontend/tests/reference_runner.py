"""Equivalence-harness baseline: compute losses/metrics with the phasekit
library directly in-process (no service loop) and print the serialized
records the same way the service does. The TypeScript tests compare client
results against this output bit-for-bit.

stdin:  one JSON document: {"cases": [{...}, ...]}
stdout: one JSON document: {"results": [{...}, ...]}
"""

import base64
import json
import sys

import numpy as np

from phasekit import LossWeights, MultiResConfig, StftConfig, Waveform, compute_metrics, total_loss
from phasekit.reports import jsonable_record


def decode(payload):
    return np.frombuffer(base64.b64decode(payload), dtype="<f8").astype(np.float64)


def encode(x):
    return base64.b64encode(np.ascontiguousarray(x, dtype="<f8").tobytes()).decode()


def run_case(case):
    sr = case["sample_rate"]
    if case["op"] == "total_loss":
        stft = case["stft"]
        multires = MultiResConfig(
            tuple(
                StftConfig(f, h, w, stft.get("window", "hann"))
                for f, h, w in zip(stft["fft_sizes"], stft["hops"], stft["win_lengths"])
            )
        )
        report, grad = total_loss(
            Waveform(decode(case["target"]), sr),
            Waveform(decode(case["enhanced"]), sr),
            noisy=Waveform(decode(case["noisy"]), sr) if "noisy" in case else None,
            weights=LossWeights(**case.get("weights", {})),
            cfg=multires,
            pl_mode=case.get("pl_mode", "wrapped"),
        )
        return {"report": jsonable_record(report.to_record()), "gradient": encode(grad)}
    if case["op"] == "metrics":
        report = compute_metrics(
            Waveform(decode(case["clean"]), sr),
            Waveform(decode(case["enhanced"]), sr),
            noisy=Waveform(decode(case["noisy"]), sr) if "noisy" in case else None,
        )
        return {"report": jsonable_record(report.to_record())}
    raise ValueError(f"unknown op {case['op']!r}")


def main():
    doc = json.load(sys.stdin)
    results = [run_case(c) for c in doc["cases"]]
    json.dump({"results": results}, sys.stdout, allow_nan=False)


if __name__ == "__main__":
    main()
