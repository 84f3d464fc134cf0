"""Audio decoding, MFCC extraction and the feature CSV format.

Everything downstream of this module works on :class:`FeatureMatrix`
objects, so experiments can run from feature files without any audio.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.fft import dct, rfft
from scipy.io import wavfile

from .exceptions import (
    CorruptHeader,
    InputTooShort,
    MalformedRow,
    NonFiniteValue,
    UnsupportedFormat,
)

__all__ = [
    "AudioBuffer",
    "FrameConfig",
    "FeatureMatrix",
    "load_wav",
    "extract_mfcc",
    "mel_filterbank",
    "read_features",
    "write_features",
]

# floor applied to filterbank energies before the log (silent frames)
LOG_FLOOR = np.finfo(np.float64).eps


@dataclass(frozen=True)
class AudioBuffer:
    """Mono audio normalized to [-1, 1]."""

    samples: np.ndarray
    sample_rate: int
    source_id: str = ""

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("AudioBuffer holds mono audio only")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise NonFiniteValue("audio contains non-finite samples")
        if samples.size and np.max(np.abs(samples)) > 1.0:
            raise ValueError("audio samples must lie in [-1, 1]")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class FrameConfig:
    """Framing and cepstral analysis parameters.

    ``num_ceps`` is the feature dimensionality d and includes the energy
    coefficient c0.
    """

    frame_ms: float = 25.0
    hop_ms: float = 10.0
    preemphasis: float = 0.97
    mel_filters: int = 26
    num_ceps: int = 13

    def __post_init__(self):
        if not 0 < self.hop_ms <= self.frame_ms:
            raise ValueError("need 0 < hop_ms <= frame_ms")
        if not 0.0 <= self.preemphasis < 1.0:
            raise ValueError("preemphasis must lie in [0, 1)")
        if not 1 <= self.num_ceps <= self.mel_filters:
            raise ValueError("need 1 <= num_ceps <= mel_filters")

    def frame_length(self, sample_rate: int) -> int:
        return int(round(self.frame_ms * sample_rate / 1000.0))

    def hop_length(self, sample_rate: int) -> int:
        return max(1, int(round(self.hop_ms * sample_rate / 1000.0)))


@dataclass(frozen=True)
class FeatureMatrix:
    """Feature vectors of one speech segment, one row per frame."""

    values: np.ndarray
    segment_id: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values.reshape(1, -1)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"feature matrix must be 2-D and non-empty, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise NonFiniteValue(f"segment {self.segment_id!r} contains non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return self.rows


def load_wav(path) -> AudioBuffer:
    """Read a PCM or IEEE-float WAV file as a mono buffer in [-1, 1].

    Integer PCM is scaled by its full-scale value (8-bit data is unsigned
    and offset by 128); multichannel audio is downmixed by averaging.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    with open(path, "rb") as fh:
        head = fh.read(12)
    if len(head) < 12 or head[:4] not in (b"RIFF", b"RIFX") or head[8:12] != b"WAVE":
        raise CorruptHeader(f"{path}: not a RIFF/WAVE file")

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", wavfile.WavFileWarning)
            rate, data = wavfile.read(path)
    except ValueError as exc:
        msg = str(exc)
        if "Unknown wave file format" in msg or "Unsupported" in msg:
            raise UnsupportedFormat(f"{path}: {msg}") from exc
        raise CorruptHeader(f"{path}: {msg}") from exc
    except (EOFError, OSError) as exc:
        raise CorruptHeader(f"{path}: {exc}") from exc

    if data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    elif np.issubdtype(data.dtype, np.signedinteger):
        # scipy returns integer PCM left-justified in the container type
        samples = data.astype(np.float64) / float(2 ** (8 * data.dtype.itemsize - 1))
    elif np.issubdtype(data.dtype, np.floating):
        samples = data.astype(np.float64)
    else:
        raise UnsupportedFormat(f"{path}: sample type {data.dtype}")

    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    samples = np.clip(samples, -1.0, 1.0)
    return AudioBuffer(samples, int(rate), source_id=path.stem)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_filters: int, nfft: int, sample_rate: int) -> np.ndarray:
    """Triangular filters on the HTK mel scale, 0 Hz to Nyquist.

    Returns an array of shape (n_filters, nfft // 2 + 1).
    """
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_filters + 2))
    bin_freqs = np.arange(nfft // 2 + 1) * sample_rate / nfft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bin_freqs - lo) / (mid - lo)
    falling = (hi - bin_freqs) / (hi - mid)
    return np.maximum(0.0, np.minimum(rising, falling))


def extract_mfcc(audio: AudioBuffer, cfg: FrameConfig = FrameConfig()) -> FeatureMatrix:
    """Compute MFCCs frame by frame.

    Pipeline: pre-emphasis, Hamming window, magnitude spectrum (FFT size
    is the next power of two at or above the frame length), mel
    filterbank, natural log, orthonormal DCT-II.  Column 0 is the energy
    coefficient c0.
    """
    sr = audio.sample_rate
    frame_len = cfg.frame_length(sr)
    hop_len = cfg.hop_length(sr)
    x = audio.samples
    if frame_len < 1 or x.size < frame_len:
        raise InputTooShort(
            f"{x.size} samples is shorter than one {frame_len}-sample frame"
        )

    emphasized = np.empty_like(x)
    emphasized[0] = x[0]
    emphasized[1:] = x[1:] - cfg.preemphasis * x[:-1]

    n_frames = (x.size - frame_len) // hop_len + 1
    frames = np.lib.stride_tricks.sliding_window_view(emphasized, frame_len)[::hop_len]
    frames = frames[:n_frames] * np.hamming(frame_len)

    nfft = 1 << (frame_len - 1).bit_length()
    spectrum = np.abs(rfft(frames, n=nfft, axis=1))
    energies = spectrum @ mel_filterbank(cfg.mel_filters, nfft, sr).T
    log_energies = np.log(np.maximum(energies, LOG_FLOOR))
    ceps = dct(log_energies, type=2, norm="ortho", axis=1)[:, : cfg.num_ceps]

    meta = {"sample_rate": sr, "hop_ms": cfg.hop_ms}
    return FeatureMatrix(ceps, segment_id=audio.source_id, meta=meta)


def _format_value(v: float) -> str:
    return repr(float(v))


def write_features(m: FeatureMatrix, path) -> None:
    """Write ``m`` as a feature CSV with '#' key=value metadata lines."""
    lines = [f"# segment_id={m.segment_id}", f"# dim={m.dim}"]
    for key in ("sample_rate", "hop_ms"):
        if key in m.meta:
            lines.append(f"# {key}={m.meta[key]}")
    lines.extend(",".join(_format_value(v) for v in row) for row in m.values)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_features(path) -> FeatureMatrix:
    """Parse a feature CSV; dimensionality comes from the column count."""
    path = Path(path)
    meta: dict = {}
    rows: list[list[float]] = []
    width = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if rows:
                    raise MalformedRow(f"{path}:{lineno}: comment after data rows")
                key, sep, value = line[1:].strip().partition("=")
                if sep:
                    meta[key.strip()] = value.strip()
                continue
            fields = line.split(",")
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise MalformedRow(
                    f"{path}:{lineno}: expected {width} fields, found {len(fields)}"
                )
            try:
                row = [float(f) for f in fields]
            except ValueError as exc:
                raise MalformedRow(f"{path}:{lineno}: {exc}") from exc
            if not all(math.isfinite(v) for v in row):
                raise NonFiniteValue(f"{path}:{lineno}: non-finite value")
            rows.append(row)

    if not rows:
        raise MalformedRow(f"{path}: no data rows")
    if "dim" in meta and int(meta["dim"]) != width:
        raise MalformedRow(f"{path}: header says dim={meta['dim']} but rows have {width}")

    segment_id = meta.pop("segment_id", None) or os.path.splitext(path.name)[0]
    extra = {}
    if "sample_rate" in meta:
        extra["sample_rate"] = int(meta["sample_rate"])
    if "hop_ms" in meta:
        extra["hop_ms"] = float(meta["hop_ms"])
    return FeatureMatrix(np.array(rows), segment_id=segment_id, meta=extra)
