"""Per-stage frame timing, windowed bitrate and end-to-end delay aggregation."""

from __future__ import annotations

import csv
import io
import math
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import InstrumentationError
from .rtp import HEADER_SIZE, RtpPacket

UDP_IPV4_OVERHEAD = 28  # 8-byte UDP + 20-byte IPv4 header


@dataclass(frozen=True)
class StageTimer:
    stage: str
    count: int
    mean_ms: float
    max_ms: float
    p99_ms: float


class StageMetrics:
    """Collects elapsed times per processing stage. Thread-safe."""

    def __init__(self, clock=time.perf_counter):
        self._clock = clock
        self._lock = threading.Lock()
        self._samples: dict[str, list[float]] = {}
        self._open: dict[str, float] = {}

    def record_stage(self, stage: str, elapsed_ms: float) -> None:
        with self._lock:
            self._samples.setdefault(stage, []).append(elapsed_ms)

    def start(self, stage: str) -> None:
        with self._lock:
            if stage in self._open:
                raise InstrumentationError(f"stage {stage!r} started twice")
            self._open[stage] = self._clock()

    def stop(self, stage: str) -> float:
        with self._lock:
            try:
                t0 = self._open.pop(stage)
            except KeyError:
                raise InstrumentationError(f"stage {stage!r} stopped without start") from None
        elapsed = (self._clock() - t0) * 1000.0
        self.record_stage(stage, elapsed)
        return elapsed

    @contextmanager
    def time(self, stage: str) -> Iterator[None]:
        self.start(stage)
        try:
            yield
        finally:
            self.stop(stage)

    def report_stages(self) -> list[StageTimer]:
        with self._lock:
            items = [(k, list(v)) for k, v in self._samples.items() if v]
        rows = []
        for stage, vals in items:
            arr = np.asarray(vals)
            rows.append(StageTimer(stage, len(arr), float(arr.mean()), float(arr.max()), float(np.percentile(arr, 99))))
        return rows

    def total_mean_ms(self, stages: Iterable[str] | None = None) -> float:
        rows = self.report_stages()
        wanted = None if stages is None else set(stages)
        return sum(r.mean_ms for r in rows if wanted is None or r.stage in wanted)

    def format_table(self) -> str:
        rows = self.report_stages()
        lines = [f"{'stage':<14}{'n':>8}{'mean ms':>10}{'max ms':>10}{'p99 ms':>10}"]
        for r in rows:
            lines.append(f"{r.stage:<14}{r.count:>8}{r.mean_ms:>10.3f}{r.max_ms:>10.3f}{r.p99_ms:>10.3f}")
        lines.append(f"{'total':<14}{'':>8}{sum(r.mean_ms for r in rows):>10.3f}")
        return "\n".join(lines)

    def format_lines(self) -> str:
        rows = self.report_stages()
        out = [f"stage_mean_ms,{r.stage},{r.mean_ms:.6f}" for r in rows]
        out.append(f"stage_mean_ms,total,{sum(r.mean_ms for r in rows):.6f}")
        return "\n".join(out)


@dataclass(frozen=True)
class BitrateWindow:
    index: int
    bits: int
    packets: int

    @property
    def kbps(self) -> float:
        return self.bits / 1000.0


@dataclass(frozen=True)
class BitrateReport:
    windows: list[BitrateWindow]

    @property
    def total_bits(self) -> int:
        return sum(w.bits for w in self.windows)

    @property
    def mean_kbps(self) -> float:
        if not self.windows:
            return 0.0
        return self.total_bits / len(self.windows) / 1000.0

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["window", "kbps"])
        for win in self.windows:
            w.writerow([win.index, f"{win.kbps:.3f}"])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def format_lines(self) -> str:
        return f"bitrate,mean_kbps,{self.mean_kbps:.6f}\nbitrate,windows,{len(self.windows)}"


class BitrateTracker:
    """Payload bits in contiguous 1 s windows aligned to the first packet.

    ``header_bytes`` adds a fixed per-packet overhead (0 counts payload only;
    ``HEADER_SIZE + UDP_IPV4_OVERHEAD`` counts everything on the wire).
    """

    def __init__(self, window_s: float = 1.0, header_bytes: int = 0, start: float | None = None):
        self.window_s = window_s
        self.header_bytes = header_bytes
        self.start = start
        self._lock = threading.Lock()
        self._bits: dict[int, int] = {}
        self._packets: dict[int, int] = {}

    def add(self, payload_bytes: int, t: float) -> None:
        with self._lock:
            if self.start is None:
                self.start = t
            idx = max(0, math.floor((t - self.start) / self.window_s))
            self._bits[idx] = self._bits.get(idx, 0) + 8 * (payload_bytes + self.header_bytes)
            self._packets[idx] = self._packets.get(idx, 0) + 1

    def add_packet(self, pkt: RtpPacket, t: float) -> None:
        self.add(len(pkt.payload), t)

    def report(self, until: float | None = None) -> BitrateReport:
        with self._lock:
            if self.start is None:
                return BitrateReport([])
            last = max(self._bits) if self._bits else 0
            if until is not None:
                last = max(last, math.ceil((until - self.start) / self.window_s) - 1)
            return BitrateReport([
                BitrateWindow(i, self._bits.get(i, 0), self._packets.get(i, 0)) for i in range(last + 1)
            ])


def track_bitrate(packets: Iterable[tuple[float, RtpPacket]], include_headers: bool = False) -> BitrateReport:
    """Bitrate windows for ``(send_time_s, packet)`` pairs."""
    tracker = BitrateTracker(header_bytes=HEADER_SIZE + UDP_IPV4_OVERHEAD if include_headers else 0)
    for t, pkt in packets:
        tracker.add_packet(pkt, t)
    return tracker.report()


@dataclass(frozen=True)
class DelayReport:
    delays_ms: list[float]
    errors: int

    @property
    def mean_ms(self) -> float:
        return float(np.mean(self.delays_ms)) if self.delays_ms else math.nan

    def format_lines(self) -> str:
        lines = [f"delay_ms,query{i},{d:.3f}" for i, d in enumerate(self.delays_ms)]
        lines.append(f"delay_ms,mean,{self.mean_ms:.3f}")
        return "\n".join(lines)
