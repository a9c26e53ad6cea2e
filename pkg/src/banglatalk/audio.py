"""Audio frame types, framing constants and mono 16-bit WAV I/O."""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .errors import AudioFormatError, FramingError

SAMPLE_RATES = (16000, 22050, 48000)
INT16_MIN = -32768
INT16_MAX = 32767

PIPELINE_RATE = 16000
PIPELINE_FRAME_SAMPLES = 320  # 20 ms @ 16 kHz
DENOISE_RATE = 48000
DENOISE_FRAME_SAMPLES = 480  # 10 ms @ 48 kHz
VAD_FRAME_SAMPLES = 512  # 32 ms @ 16 kHz


class AudioFrame:
    """Immutable block of signed 16-bit mono PCM samples.

    Samples are stored as a read-only ``int16`` array. Construction from a
    wider integer sequence checks the 16-bit range instead of wrapping.
    """

    __slots__ = ("_samples", "_rate")

    def __init__(self, samples: Sequence[int] | np.ndarray, sample_rate_hz: int = PIPELINE_RATE):
        if sample_rate_hz not in SAMPLE_RATES:
            raise FramingError(f"unsupported sample rate {sample_rate_hz}; expected one of {SAMPLE_RATES}")
        arr = np.asarray(samples)
        if arr.ndim != 1:
            raise FramingError("samples must be one-dimensional")
        if arr.dtype != np.int16:
            if arr.size and (arr.dtype.kind not in "iu" or arr.min() < INT16_MIN or arr.max() > INT16_MAX):
                raise FramingError("samples must be integers in [-32768, 32767]")
            arr = arr.astype(np.int16)
        else:
            arr = arr.copy()
        arr.setflags(write=False)
        self._samples = arr
        self._rate = sample_rate_hz

    @property
    def samples(self) -> np.ndarray:
        return self._samples

    @property
    def sample_rate_hz(self) -> int:
        return self._rate

    @property
    def duration_ms(self) -> float:
        return 1000.0 * len(self._samples) / self._rate

    def __len__(self) -> int:
        return len(self._samples)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AudioFrame):
            return NotImplemented
        return self._rate == other._rate and np.array_equal(self._samples, other._samples)

    def __hash__(self) -> int:
        return hash((self._rate, self._samples.tobytes()))

    def __repr__(self) -> str:
        return f"AudioFrame(n={len(self)}, rate={self._rate})"

    def to_bytes(self) -> bytes:
        """Little-endian PCM bytes."""
        return self._samples.astype("<i2").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, sample_rate_hz: int = PIPELINE_RATE) -> AudioFrame:
        if len(data) % 2:
            raise FramingError(f"odd PCM byte count {len(data)}")
        return cls(np.frombuffer(data, dtype="<i2").astype(np.int16), sample_rate_hz)

    @classmethod
    def silence(cls, n: int = PIPELINE_FRAME_SAMPLES, sample_rate_hz: int = PIPELINE_RATE) -> AudioFrame:
        return cls(np.zeros(n, dtype=np.int16), sample_rate_hz)


def require_frame(frame: AudioFrame, n_samples: int, sample_rate_hz: int) -> None:
    """Raise FramingError unless ``frame`` has exactly the given geometry."""
    if frame.sample_rate_hz != sample_rate_hz or len(frame) != n_samples:
        raise FramingError(
            f"expected {n_samples} samples @ {sample_rate_hz} Hz, "
            f"got {len(frame)} @ {frame.sample_rate_hz} Hz"
        )


@dataclass(frozen=True)
class FramingConfig:
    frame_ms: int = 20
    sample_rate_hz: int = PIPELINE_RATE

    def __post_init__(self) -> None:
        if self.frame_ms <= 0 or (self.frame_ms * self.sample_rate_hz) % 1000:
            raise FramingError(f"{self.frame_ms} ms does not hold a whole number of samples at {self.sample_rate_hz} Hz")
        if 1000 % self.frame_ms:
            raise FramingError(f"frame_ms {self.frame_ms} does not divide one second")

    @property
    def samples_per_frame(self) -> int:
        return self.frame_ms * self.sample_rate_hz // 1000

    @property
    def packets_per_second(self) -> int:
        return 1000 // self.frame_ms


def frame_samples(samples: np.ndarray, frame_size: int, sample_rate_hz: int) -> tuple[list[AudioFrame], int]:
    """Split a sample stream into full frames, zero-padding the tail.

    Returns the frames and the number of padding samples appended.
    """
    samples = np.asarray(samples, dtype=np.int16)
    padding = (-len(samples)) % frame_size
    if padding:
        samples = np.concatenate([samples, np.zeros(padding, dtype=np.int16)])
    frames = [AudioFrame(samples[i:i + frame_size], sample_rate_hz) for i in range(0, len(samples), frame_size)]
    return frames, padding


def concat_frames(frames: Iterable[AudioFrame]) -> np.ndarray:
    parts = [f.samples for f in frames]
    if not parts:
        return np.zeros(0, dtype=np.int16)
    return np.concatenate(parts)


class PcmFile(NamedTuple):
    frames: list[AudioFrame]
    sample_rate: int
    padding: int


def _open_checked(path: str | Path) -> wave.Wave_read:
    try:
        wf = wave.open(str(path), "rb")
    except wave.Error as exc:
        raise AudioFormatError(f"{path}: {exc}") from exc
    except EOFError as exc:
        raise AudioFormatError(f"{path}: truncated WAV header") from exc
    if wf.getnchannels() != 1:
        wf.close()
        raise AudioFormatError(f"{path}: expected mono, got {wf.getnchannels()} channels")
    if wf.getsampwidth() != 2:
        wf.close()
        raise AudioFormatError(f"{path}: expected 16-bit samples, got {8 * wf.getsampwidth()}-bit")
    if wf.getframerate() not in SAMPLE_RATES:
        wf.close()
        raise AudioFormatError(f"{path}: unsupported sample rate {wf.getframerate()}")
    return wf


def read_pcm_samples(path: str | Path) -> tuple[np.ndarray, int]:
    """Read a whole mono 16-bit WAV as an int16 array plus its rate."""
    with _open_checked(path) as wf:
        data = wf.readframes(wf.getnframes())
        return np.frombuffer(data, dtype="<i2").astype(np.int16), wf.getframerate()


def read_pcm_wav(path: str | Path, frame_ms: int = 20) -> PcmFile:
    """Read a mono 16-bit WAV into fixed-duration frames.

    The final partial frame is zero-padded; ``padding`` reports how many
    samples were added. Raises ``AudioFormatError`` for stereo, non-16-bit
    or compressed files and ``FileNotFoundError`` for missing paths.
    """
    samples, rate = read_pcm_samples(path)
    framing = FramingConfig(frame_ms, rate)
    frames, padding = frame_samples(samples, framing.samples_per_frame, rate)
    return PcmFile(frames, rate, padding)


def write_pcm_samples(path: str | Path, samples: np.ndarray, sample_rate_hz: int) -> None:
    if sample_rate_hz not in SAMPLE_RATES:
        raise FramingError(f"unsupported sample rate {sample_rate_hz}")
    # open the file first so an unwritable path fails before wave allocates a writer
    with open(path, "wb") as fh, wave.open(fh, "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(sample_rate_hz)
        wf.writeframes(np.asarray(samples, dtype=np.int16).astype("<i2").tobytes())


def write_pcm_wav(path: str | Path, frames: Sequence[AudioFrame], sample_rate_hz: int | None = None) -> None:
    """Write frames to a mono 16-bit WAV.

    All frames must share one sample rate. An empty frame list produces a
    valid zero-length file at ``sample_rate_hz`` (16 kHz if not given).
    """
    rates = {f.sample_rate_hz for f in frames}
    if len(rates) > 1:
        raise FramingError(f"frames mix sample rates {sorted(rates)}")
    rate = rates.pop() if rates else (sample_rate_hz or PIPELINE_RATE)
    if sample_rate_hz is not None and sample_rate_hz != rate:
        raise FramingError(f"frames are {rate} Hz but {sample_rate_hz} Hz was requested")
    write_pcm_samples(path, concat_frames(frames), rate)


class FrameSource:
    """Iterable of 20 ms pipeline frames; the capture abstraction."""

    sample_rate_hz = PIPELINE_RATE

    def __iter__(self) -> Iterator[AudioFrame]:
        raise NotImplementedError

    def close(self) -> None:
        pass


class WavFrameSource(FrameSource):
    """Frame source backed by a 16 kHz WAV file."""

    def __init__(self, path: str | Path, frame_ms: int = 20):
        pcm = read_pcm_wav(path, frame_ms)
        if pcm.sample_rate != PIPELINE_RATE:
            raise AudioFormatError(f"{path}: capture source must be {PIPELINE_RATE} Hz, got {pcm.sample_rate}")
        self.frames = pcm.frames
        self.padding = pcm.padding

    def __iter__(self) -> Iterator[AudioFrame]:
        return iter(self.frames)


class MicrophoneSource(FrameSource):
    """Live capture through ``sounddevice`` (optional dependency)."""

    def __init__(self, frame_ms: int = 20):
        try:
            import sounddevice
        except ImportError as exc:  # pragma: no cover - depends on host audio stack
            raise AudioFormatError("microphone capture needs the 'sounddevice' package") from exc
        self._sd = sounddevice
        self._n = FramingConfig(frame_ms).samples_per_frame
        self._stream = None

    def __iter__(self) -> Iterator[AudioFrame]:  # pragma: no cover - needs a device
        self._stream = self._sd.RawInputStream(samplerate=PIPELINE_RATE, channels=1, dtype="int16", blocksize=self._n)
        self._stream.start()
        while True:
            data, _ = self._stream.read(self._n)
            yield AudioFrame.from_bytes(bytes(data))

    def close(self) -> None:  # pragma: no cover
        if self._stream is not None:
            self._stream.stop()
            self._stream.close()
