"""WAV file I/O and clean/noisy/enhanced corpus pairing.

Readers accept linear-PCM 16-bit and IEEE-float 32-bit RIFF files and always
hand back mono float64 in [-1, 1]; the writer emits canonical 44-byte-header
PCM-16 mono. No resampling is performed anywhere: mismatched rates inside a
triple are an error rather than a silent metric change.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InputError, LengthMismatchError, UnsupportedFormatError

# enhancement models commonly pad edges; anything beyond this is mispairing
MAX_LENGTH_SLACK = 512

_PCM16_SCALE = 32768.0


@dataclass(frozen=True)
class Waveform:
    """Mono audio: float64 samples (nominally in [-1, 1]) plus sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise InputError(f"waveform must be 1-D, got shape {samples.shape}")
        if samples.size == 0:
            raise InputError("waveform is empty")
        if self.sample_rate <= 0:
            raise InputError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size


@dataclass(frozen=True)
class UtteranceTriple:
    utterance_id: str
    clean: Waveform
    enhanced: Waveform
    noisy: Waveform | None = None


@dataclass(frozen=True)
class PairedPaths:
    """One matched set of file paths, before any audio is loaded."""

    utterance_id: str
    clean: Path
    enhanced: Path
    noisy: Path | None = None


@dataclass(frozen=True)
class SkippedPair:
    utterance_id: str
    reason: str


@dataclass
class PairingResult:
    triples: list[UtteranceTriple]
    skipped: list[SkippedPair]


def read_wav(path) -> Waveform:
    """Read a PCM-16 or float-32 RIFF WAV; multichannel is averaged to mono."""
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[0:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise FormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos : pos + 4]
        (chunk_size,) = struct.unpack("<I", raw[pos + 4 : pos + 8])
        body = raw[pos + 8 : pos + 8 + chunk_size]
        if len(body) < chunk_size:
            raise FormatError(f"{path}: truncated {chunk_id!r} chunk")
        if chunk_id == b"fmt ":
            if chunk_size < 16:
                raise FormatError(f"{path}: fmt chunk too short")
            fmt = struct.unpack("<HHIIHH", body[:16])
        elif chunk_id == b"data":
            data = body
        pos += 8 + chunk_size + (chunk_size & 1)  # chunks are word-aligned

    if fmt is None or data is None:
        raise FormatError(f"{path}: missing fmt or data chunk")

    audio_format, channels, sample_rate, _byte_rate, _block_align, bits = fmt
    if channels < 1:
        raise FormatError(f"{path}: zero channels")
    if audio_format == 1 and bits == 16:
        if len(data) == 0:
            raise FormatError(f"{path}: empty data chunk")
        flat = np.frombuffer(data[: len(data) - len(data) % (2 * channels)], dtype="<i2")
        x = flat.astype(np.float64) / _PCM16_SCALE
    elif audio_format == 3 and bits == 32:
        if len(data) == 0:
            raise FormatError(f"{path}: empty data chunk")
        flat = np.frombuffer(data[: len(data) - len(data) % (4 * channels)], dtype="<f4")
        x = flat.astype(np.float64)
    else:
        raise UnsupportedFormatError(
            f"{path}: unsupported encoding (format tag {audio_format}, {bits}-bit); "
            "only PCM-16 and IEEE-float-32 are read"
        )

    if x.size == 0:
        raise FormatError(f"{path}: empty data chunk")
    if channels > 1:
        frames = x.size // channels
        x = x[: frames * channels].reshape(frames, channels).mean(axis=1)
    return Waveform(samples=x, sample_rate=int(sample_rate))


def write_wav(path, waveform: Waveform) -> None:
    """Write mono PCM-16 little-endian WAV; samples are clipped to [-1, 1]."""
    x = waveform.samples
    if not np.all(np.isfinite(x)):
        raise InputError("cannot write non-finite samples")
    q = np.clip(np.round(x * _PCM16_SCALE), -32768, 32767).astype("<i2")
    payload = q.tobytes()
    sr = waveform.sample_rate
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, sr, sr * 2, 2, 16)
    header += b"data" + struct.pack("<I", len(payload))
    Path(path).write_bytes(header + payload)


def _wav_names(directory: Path, pattern: str) -> dict[str, Path]:
    return {p.stem: p for p in directory.glob(pattern) if p.is_file()}


def pair_paths(
    clean_dir,
    enhanced_dir,
    noisy_dir=None,
    pattern: str = "*.wav",
) -> tuple[list[PairedPaths], list[SkippedPair]]:
    """Match files across directories by base filename.

    Output order is lexicographic by utterance id, so it depends only on the
    directory contents and never on filesystem enumeration order.
    """
    clean_dir = Path(clean_dir)
    enhanced_dir = Path(enhanced_dir)
    for d in (clean_dir, enhanced_dir) + ((Path(noisy_dir),) if noisy_dir else ()):
        if not d.is_dir():
            raise InputError(f"not a directory: {d}")

    clean = _wav_names(clean_dir, pattern)
    enhanced = _wav_names(enhanced_dir, pattern)
    noisy = _wav_names(Path(noisy_dir), pattern) if noisy_dir else {}

    pairs: list[PairedPaths] = []
    skipped: list[SkippedPair] = []
    for uid in sorted(clean):
        if uid not in enhanced:
            skipped.append(SkippedPair(uid, "no enhanced counterpart"))
            continue
        if noisy_dir is not None and uid not in noisy:
            skipped.append(SkippedPair(uid, "no noisy counterpart"))
            continue
        pairs.append(PairedPaths(uid, clean[uid], enhanced[uid], noisy.get(uid)))
    for uid in sorted(set(enhanced) - set(clean)):
        skipped.append(SkippedPair(uid, "no clean counterpart"))
    skipped.sort(key=lambda s: s.utterance_id)
    return pairs, skipped


def load_triple(paths: PairedPaths) -> UtteranceTriple:
    """Load one matched set, check sample rates, and align lengths.

    Lengths differing by at most MAX_LENGTH_SLACK samples are truncated to the
    shortest; larger mismatches indicate mispaired files and are an error.
    """
    clean = read_wav(paths.clean)
    enhanced = read_wav(paths.enhanced)
    noisy = read_wav(paths.noisy) if paths.noisy is not None else None

    waves = [clean, enhanced] + ([noisy] if noisy is not None else [])
    rates = {w.sample_rate for w in waves}
    if len(rates) != 1:
        raise InputError(f"{paths.utterance_id}: mismatched sample rates {sorted(rates)}")

    lengths = [len(w) for w in waves]
    if max(lengths) - min(lengths) > MAX_LENGTH_SLACK:
        raise LengthMismatchError(
            f"{paths.utterance_id}: length mismatch {lengths} exceeds "
            f"{MAX_LENGTH_SLACK} samples; files are probably mispaired"
        )
    n = min(lengths)
    clean, enhanced = (Waveform(w.samples[:n], w.sample_rate) for w in (clean, enhanced))
    if noisy is not None:
        noisy = Waveform(noisy.samples[:n], noisy.sample_rate)
    return UtteranceTriple(paths.utterance_id, clean, enhanced, noisy)


def pair_directories(clean_dir, enhanced_dir, noisy_dir=None, pattern: str = "*.wav") -> PairingResult:
    """Pair and load whole directories; see pair_paths for the matching rule."""
    pairs, skipped = pair_paths(clean_dir, enhanced_dir, noisy_dir, pattern)
    return PairingResult([load_triple(p) for p in pairs], skipped)
