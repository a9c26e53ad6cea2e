"""Sample-level DSP for the client and TTS paths.

The three integer algorithms (compression, interpolating upsampler and
decimating downsampler) follow their pseudocode literally, including
``floor`` toward negative infinity and the one-sample delay the upsampler
carries between frames.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Protocol, Sequence

import numpy as np

from .audio import (
    DENOISE_FRAME_SAMPLES,
    DENOISE_RATE,
    INT16_MAX,
    INT16_MIN,
    PIPELINE_FRAME_SAMPLES,
    PIPELINE_RATE,
    AudioFrame,
    frame_samples,
    require_frame,
)
from .errors import FramingError, ParameterError

FULL_SCALE = 32768  # level reference for dBFS
RECONSTRUCTION_SCALE = 32767

DENOISE_UPSAMPLE_RATIO = DENOISE_RATE // PIPELINE_RATE


@dataclass(frozen=True)
class DrcConfig:
    threshold_dbfs: float = -10.0
    ratio: float = 2.0

    def __post_init__(self) -> None:
        if self.ratio < 1:
            raise ParameterError(f"compression ratio must be >= 1, got {self.ratio}")
        if self.threshold_dbfs >= 0:
            raise ParameterError(f"threshold must be below 0 dBFS, got {self.threshold_dbfs}")


@dataclass
class ResampleState:
    """Per-stream memory of the interpolating upsampler."""

    previous_sample: int = 0
    ratio: int = DENOISE_UPSAMPLE_RATIO

    def __post_init__(self) -> None:
        if not INT16_MIN <= self.previous_sample <= INT16_MAX:
            raise ParameterError(f"previous_sample {self.previous_sample} outside 16-bit range")
        if self.ratio < 1:
            raise ParameterError(f"ratio must be >= 1, got {self.ratio}")


def dbfs(samples: np.ndarray) -> float:
    """RMS level of a block in dBFS; ``-inf`` for digital silence."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        return -math.inf
    rms = math.sqrt(float(np.mean(samples * samples)))
    if rms == 0.0:
        return -math.inf
    return 20.0 * math.log10(rms / FULL_SCALE)


def _as_int_array(x: AudioFrame | Sequence[int] | np.ndarray) -> np.ndarray:
    if isinstance(x, AudioFrame):
        return x.samples.astype(np.int64)
    arr = np.asarray(x, dtype=np.int64)
    if arr.ndim != 1:
        raise FramingError("expected a one-dimensional sample sequence")
    return arr


def compress_samples(samples: Sequence[int] | np.ndarray, cfg: DrcConfig = DrcConfig()) -> np.ndarray:
    """Memoryless per-sample dynamic range compression on raw samples."""
    s = _as_int_array(samples)
    out = s.copy()
    nz = s != 0
    level = np.full(s.shape, -np.inf)
    level[nz] = 20.0 * np.log10(np.abs(s[nz]) / FULL_SCALE)
    loud = level > cfg.threshold_dbfs
    if np.any(loud):
        compressed = cfg.threshold_dbfs + (level[loud] - cfg.threshold_dbfs) / cfg.ratio
        out[loud] = np.floor(10.0 ** (compressed / 20.0) * np.sign(s[loud]) * RECONSTRUCTION_SCALE).astype(np.int64)
    return out.astype(np.int16)


def drc_compress(frame: AudioFrame, cfg: DrcConfig = DrcConfig()) -> AudioFrame:
    """Compress samples louder than ``cfg.threshold_dbfs`` by ``cfg.ratio``.

    Zero samples and samples at or below the threshold pass through
    unchanged. There is no attack/release smoothing.
    """
    return AudioFrame(compress_samples(frame.samples, cfg), frame.sample_rate_hz)


def upsample_linear(samples: AudioFrame | Sequence[int] | np.ndarray, state: ResampleState, r: int | None = None) -> np.ndarray:
    """Upsample by integer factor ``r`` with linear interpolation.

    For each input sample ``cur`` the output gets ``p + j*(cur - p)/r`` for
    ``j = 0..r-1`` where ``p`` is the preceding input sample (taken from
    ``state`` for the first one). Values are clipped to 16 bits and floored.
    ``state.previous_sample`` is updated to the last input sample.
    """
    r = state.ratio if r is None else r
    if r < 1:
        raise ParameterError(f"upsampling ratio must be >= 1, got {r}")
    x = _as_int_array(samples)
    if x.size == 0:
        return np.zeros(0, dtype=np.int16)
    prev = np.empty_like(x)
    prev[0] = state.previous_sample
    prev[1:] = x[:-1]
    prev_f = prev.astype(np.float64)
    delta = (x - prev).astype(np.float64) / r
    j = np.arange(r, dtype=np.float64)
    v = prev_f[:, None] + j[None, :] * delta[:, None]
    v = np.clip(v, INT16_MIN, INT16_MAX)
    state.previous_sample = int(x[-1])
    return np.floor(v).astype(np.int16).reshape(-1)


def downsample_decimate(samples: AudioFrame | Sequence[int] | np.ndarray, r: int) -> np.ndarray:
    """Keep the first sample of every group of ``r``; output length ``len // r``."""
    if r < 1:
        raise ParameterError(f"downsampling ratio must be >= 1, got {r}")
    x = _as_int_array(samples)
    n = len(x) // r
    return x[: n * r : r].astype(np.int16)


class Denoiser(Protocol):
    """Consumes and returns one 480-sample 48 kHz frame."""

    def __call__(self, frame: AudioFrame) -> AudioFrame: ...


class IdentityDenoiser:
    def __call__(self, frame: AudioFrame) -> AudioFrame:
        require_frame(frame, DENOISE_FRAME_SAMPLES, DENOISE_RATE)
        return frame


class GateDenoiser:
    """Zeroes frames whose RMS level is below ``floor_dbfs``."""

    def __init__(self, floor_dbfs: float = -45.0):
        self.floor_dbfs = floor_dbfs

    def __call__(self, frame: AudioFrame) -> AudioFrame:
        require_frame(frame, DENOISE_FRAME_SAMPLES, DENOISE_RATE)
        if dbfs(frame.samples) < self.floor_dbfs:
            return AudioFrame.silence(DENOISE_FRAME_SAMPLES, DENOISE_RATE)
        return frame


def identity_denoiser() -> Denoiser:
    return IdentityDenoiser()


def gate_denoiser(floor_dbfs: float = -45.0) -> Denoiser:
    return GateDenoiser(floor_dbfs)


def denoise_frame_16k(frame: AudioFrame, state: ResampleState, denoiser: Denoiser) -> AudioFrame:
    """Run a 48 kHz denoiser on a 20 ms 16 kHz frame.

    The frame is upsampled x3 to 960 samples, denoised as two 480-sample
    subframes and decimated back to 320 samples.
    """
    require_frame(frame, PIPELINE_FRAME_SAMPLES, PIPELINE_RATE)
    up = upsample_linear(frame.samples, state, DENOISE_UPSAMPLE_RATIO)
    cleaned = [
        denoiser(AudioFrame(up[i:i + DENOISE_FRAME_SAMPLES], DENOISE_RATE)).samples
        for i in range(0, len(up), DENOISE_FRAME_SAMPLES)
    ]
    down = downsample_decimate(np.concatenate(cleaned), DENOISE_UPSAMPLE_RATIO)
    return AudioFrame(down, PIPELINE_RATE)


def resample_linear(samples: np.ndarray, in_rate: int, out_rate: int) -> np.ndarray:
    """Linear-interpolation resampling at the rational ratio ``out_rate/in_rate``.

    Output sample ``k`` sits at input position ``k * in_rate / out_rate``;
    every position inside the input span is emitted, so the output length is
    ``floor((n - 1) * out_rate / in_rate) + 1`` for ``n`` input samples.
    Values are floored.
    """
    x = np.asarray(samples, dtype=np.int64)
    n = len(x)
    if n == 0:
        return np.zeros(0, dtype=np.int16)
    step = Fraction(in_rate, out_rate)
    num, den = step.numerator, step.denominator
    count = (n - 1) * den // num + 1
    k = np.arange(count, dtype=np.int64)
    pos = k * num
    idx = pos // den
    frac = (pos % den).astype(np.float64) / den
    nxt = np.minimum(idx + 1, n - 1)
    left = x[idx].astype(np.float64)
    y = left + frac * (x[nxt] - x[idx])
    return np.floor(y).astype(np.int16)


def resample_fractional(frames: Sequence[AudioFrame], in_rate: int = 22050) -> list[AudioFrame]:
    """Resample 22.05 kHz audio to 16 kHz 320-sample frames.

    Frames are concatenated, resampled as one stream and re-framed; a final
    partial frame is zero-padded.
    """
    if in_rate != 22050 or any(f.sample_rate_hz != in_rate for f in frames):
        raise ParameterError("fractional resampler expects 22050 Hz input")
    parts = [f.samples for f in frames]
    if not parts:
        return []
    out = resample_linear(np.concatenate(parts), in_rate, PIPELINE_RATE)
    return frame_samples(out, PIPELINE_FRAME_SAMPLES, PIPELINE_RATE)[0]
