"""VAD framing, an energy VAD and the end-of-query state machine."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Protocol

import numpy as np

from .audio import PIPELINE_RATE, VAD_FRAME_SAMPLES, AudioFrame
from .dsp import dbfs

VAD_FRAME_MS = 1000 * VAD_FRAME_SAMPLES // PIPELINE_RATE


class Reframer:
    """Lossless rebuffering of a sample stream into fixed-size blocks."""

    def __init__(self, size: int = VAD_FRAME_SAMPLES):
        self.size = size
        self._buf = np.zeros(0, dtype=np.int16)
        self.samples_out = 0

    @property
    def pending(self) -> int:
        return len(self._buf)

    def push(self, samples: AudioFrame | np.ndarray) -> list[np.ndarray]:
        data = samples.samples if isinstance(samples, AudioFrame) else np.asarray(samples, dtype=np.int16)
        self._buf = np.concatenate([self._buf, data])
        n = len(self._buf) // self.size
        out = [self._buf[i * self.size:(i + 1) * self.size] for i in range(n)]
        self._buf = self._buf[n * self.size:]
        self.samples_out += n * self.size
        return out


def reframe_20_to_32ms(frames: Iterable[AudioFrame]) -> Iterator[AudioFrame]:
    """Turn a stream of 320-sample frames into 512-sample VAD frames."""
    r = Reframer(VAD_FRAME_SAMPLES)
    for frame in frames:
        for block in r.push(frame):
            yield AudioFrame(block, PIPELINE_RATE)


class Vad(Protocol):
    """Speech/silence decision for one 512-sample 16 kHz frame."""

    def __call__(self, frame: np.ndarray) -> bool: ...

    def reset(self) -> None: ...


class EnergyVad:
    """RMS-threshold VAD with a hangover after each speech frame."""

    def __init__(self, threshold_dbfs: float = -40.0, hangover_frames: int = 4):
        self.threshold_dbfs = threshold_dbfs
        self.hangover_frames = hangover_frames
        self._hang = 0

    def __call__(self, frame: np.ndarray | AudioFrame) -> bool:
        samples = frame.samples if isinstance(frame, AudioFrame) else frame
        if dbfs(samples) > self.threshold_dbfs:
            self._hang = self.hangover_frames
            return True
        if self._hang > 0:
            self._hang -= 1
            return True
        return False

    def reset(self) -> None:
        self._hang = 0


def energy_vad(threshold_dbfs: float = -40.0, hangover_frames: int = 4) -> EnergyVad:
    return EnergyVad(threshold_dbfs, hangover_frames)


@dataclass(frozen=True)
class EoqConfig:
    silence_threshold_ms: int = 1200
    vad_frame_ms: int = VAD_FRAME_MS
    max_segment_ms: int = 30000

    @property
    def min_silence_frames(self) -> int:
        return math.ceil(self.silence_threshold_ms / self.vad_frame_ms)

    @property
    def max_segment_frames(self) -> int:
        return math.ceil(self.max_segment_ms / self.vad_frame_ms)


@dataclass(frozen=True)
class SpeechSegment:
    """Voiced audio between segment start and the last voiced frame.

    Times are stream milliseconds from the first VAD frame. ``capped`` marks
    a segment cut at the maximum length rather than by trailing silence.
    """

    samples: np.ndarray
    start_time_ms: float
    end_time_ms: float
    eoq_time_ms: float
    capped: bool = False

    @property
    def duration_ms(self) -> float:
        return 1000.0 * len(self.samples) / PIPELINE_RATE


@dataclass(frozen=True)
class SegmentStart:
    time_ms: float


@dataclass(frozen=True)
class EndOfQuery:
    segment: SpeechSegment

    @property
    def time_ms(self) -> float:
        return self.segment.eoq_time_ms


@dataclass
class _Active:
    start_ms: float
    blocks: list[np.ndarray] = field(default_factory=list)
    voiced_blocks: int = 0
    silence_run: int = 0


class EndOfQueryDetector:
    """IDLE/ACTIVE state machine over VAD decisions.

    Speech in IDLE opens a segment. In ACTIVE every frame is accumulated;
    speech resets the silence counter. When the counter reaches
    ``min_silence_frames`` the segment, trimmed to its last voiced frame,
    is emitted and the detector returns to IDLE.
    """

    def __init__(self, cfg: EoqConfig = EoqConfig()):
        self.cfg = cfg
        self.frame_index = 0
        self._active: _Active | None = None

    @property
    def active(self) -> bool:
        return self._active is not None

    def reset(self) -> None:
        self._active = None

    def step(self, is_speech: bool, frame: np.ndarray | AudioFrame) -> SegmentStart | EndOfQuery | None:
        samples = frame.samples if isinstance(frame, AudioFrame) else np.asarray(frame, dtype=np.int16)
        t0 = self.frame_index * self.cfg.vad_frame_ms
        t1 = t0 + self.cfg.vad_frame_ms
        self.frame_index += 1
        act = self._active
        if act is None:
            if not is_speech:
                return None
            self._active = act = _Active(start_ms=t0)
            act.blocks.append(samples)
            act.voiced_blocks = 1
            if len(act.blocks) >= self.cfg.max_segment_frames:
                return self._finish(t1, capped=True)
            return SegmentStart(t0)
        act.blocks.append(samples)
        if is_speech:
            act.silence_run = 0
            act.voiced_blocks = len(act.blocks)
        else:
            act.silence_run += 1
            if act.silence_run >= self.cfg.min_silence_frames:
                return self._finish(t1)
        if len(act.blocks) >= self.cfg.max_segment_frames:
            return self._finish(t1, capped=True)
        return None

    def _finish(self, now_ms: float, capped: bool = False) -> EndOfQuery:
        act = self._active
        assert act is not None
        self._active = None
        voiced = act.blocks[: act.voiced_blocks]
        end_ms = act.start_ms + act.voiced_blocks * self.cfg.vad_frame_ms
        seg = SpeechSegment(
            samples=np.concatenate(voiced).astype(np.int16),
            start_time_ms=act.start_ms,
            end_time_ms=end_ms,
            eoq_time_ms=now_ms,
            capped=capped,
        )
        return EndOfQuery(seg)


def eoq_step(detector: EndOfQueryDetector, is_speech: bool, frame: np.ndarray | AudioFrame) -> SegmentStart | EndOfQuery | None:
    return detector.step(is_speech, frame)


class Segmenter:
    """20 ms frames in, segment events out: reframe, VAD, end-of-query."""

    def __init__(self, vad: Vad | None = None, cfg: EoqConfig = EoqConfig()):
        self.vad = vad if vad is not None else energy_vad()
        self.reframer = Reframer(VAD_FRAME_SAMPLES)
        self.detector = EndOfQueryDetector(cfg)

    def push(self, frame: AudioFrame) -> list[SegmentStart | EndOfQuery]:
        events = []
        for block in self.reframer.push(frame):
            ev = self.detector.step(self.vad(block), block)
            if ev is not None:
                events.append(ev)
        return events


def segment_frames(frames: Iterable[AudioFrame], vad: Vad | None = None, cfg: EoqConfig = EoqConfig()) -> list[SegmentStart | EndOfQuery]:
    """Run the segmenter over a finished stream (offline helper)."""
    seg = Segmenter(vad, cfg)
    events: list[SegmentStart | EndOfQuery] = []
    for frame in frames:
        events.extend(seg.push(frame))
    return events
