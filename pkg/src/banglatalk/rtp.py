"""RTP v2 wire format, paced UDP sending and a reordering jitter buffer."""

from __future__ import annotations

import logging
import queue
import random
import socket
import struct
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

from .audio import PIPELINE_FRAME_SAMPLES
from .errors import ProtocolError, RtpError, TruncatedPacketError

log = logging.getLogger(__name__)

RTP_VERSION = 2
HEADER_SIZE = 12
SEQ_MOD = 1 << 16
TS_MOD = 1 << 32
PT_OPUS = 111
PT_PASSTHROUGH = 96
MAX_DATAGRAM = 65535

_HEADER = struct.Struct("!BBHII")


@dataclass(frozen=True)
class RtpHeader:
    payload_type: int
    sequence_number: int
    timestamp: int
    ssrc: int
    marker: bool = False
    padding: bool = False
    extension: bool = False
    csrc_count: int = 0
    version: int = RTP_VERSION

    def __post_init__(self) -> None:
        if self.version != RTP_VERSION:
            raise ProtocolError(f"RTP version must be 2, got {self.version}")
        if self.csrc_count != 0:
            raise ProtocolError("CSRC lists are not used by this system")
        if not 0 <= self.payload_type < 128:
            raise RtpError(f"payload type {self.payload_type} does not fit 7 bits")
        if not 0 <= self.sequence_number < SEQ_MOD:
            raise RtpError(f"sequence number {self.sequence_number} does not fit 16 bits")
        if not 0 <= self.timestamp < TS_MOD:
            raise RtpError(f"timestamp {self.timestamp} does not fit 32 bits")
        if not 0 <= self.ssrc < TS_MOD:
            raise RtpError(f"ssrc {self.ssrc} does not fit 32 bits")


@dataclass(frozen=True)
class RtpPacket:
    header: RtpHeader
    payload: bytes

    def __post_init__(self) -> None:
        if not self.payload:
            raise RtpError("RTP payload must be nonempty")

    @property
    def sequence_number(self) -> int:
        return self.header.sequence_number

    @property
    def timestamp(self) -> int:
        return self.header.timestamp

    def __len__(self) -> int:
        return HEADER_SIZE + len(self.payload)


def serialize(pkt: RtpPacket) -> bytes:
    h = pkt.header
    b0 = (h.version << 6) | (int(h.padding) << 5) | (int(h.extension) << 4) | h.csrc_count
    b1 = (int(h.marker) << 7) | h.payload_type
    return _HEADER.pack(b0, b1, h.sequence_number, h.timestamp, h.ssrc) + pkt.payload


def parse(data: bytes) -> RtpPacket:
    """Parse one datagram. Raises TruncatedPacketError or ProtocolError."""
    if len(data) <= HEADER_SIZE:
        raise TruncatedPacketError(f"datagram of {len(data)} bytes has no payload")
    b0, b1, seq, ts, ssrc = _HEADER.unpack_from(data)
    version = b0 >> 6
    if version != RTP_VERSION:
        raise ProtocolError(f"unsupported RTP version {version}")
    header = RtpHeader(
        payload_type=b1 & 0x7F,
        sequence_number=seq,
        timestamp=ts,
        ssrc=ssrc,
        marker=bool(b1 >> 7),
        padding=bool(b0 & 0x20),
        extension=bool(b0 & 0x10),
        csrc_count=b0 & 0x0F,
        version=version,
    )
    return RtpPacket(header, bytes(data[HEADER_SIZE:]))


def seq_delta(a: int, b: int) -> int:
    """Signed distance from ``b`` to ``a`` on the 16-bit sequence circle."""
    d = (a - b) % SEQ_MOD
    return d - SEQ_MOD if d >= SEQ_MOD // 2 else d


class Packetizer:
    """Stamps payloads with consecutive sequence numbers and timestamps.

    Initial sequence number, timestamp and SSRC come from ``random.Random(seed)``.
    """

    def __init__(self, payload_type: int, seed: int | None = None, samples_per_packet: int = PIPELINE_FRAME_SAMPLES):
        rng = random.Random(seed)
        self.payload_type = payload_type
        self.ssrc = rng.getrandbits(32)
        self.sequence_number = rng.getrandbits(16)
        self.timestamp = rng.getrandbits(32)
        self.samples_per_packet = samples_per_packet

    def packetize(self, payload: bytes, marker: bool = False) -> RtpPacket:
        pkt = RtpPacket(RtpHeader(self.payload_type, self.sequence_number, self.timestamp, self.ssrc, marker), payload)
        self.sequence_number = (self.sequence_number + 1) % SEQ_MOD
        self.timestamp = (self.timestamp + self.samples_per_packet) % TS_MOD
        return pkt


@dataclass
class SendReport:
    sent: int = 0
    errors: int = 0
    send_times: list[float] = field(default_factory=list)
    bytes_sent: int = 0

    @property
    def elapsed_s(self) -> float:
        if len(self.send_times) < 2:
            return 0.0
        return self.send_times[-1] - self.send_times[0]


class PacedSender:
    """Sends datagrams on an absolute ``interval_ms`` schedule.

    If the producer falls more than one interval behind, the schedule is
    re-anchored to now rather than bursting to catch up.
    """

    def __init__(
        self,
        sock: socket.socket,
        dest: tuple[str, int],
        interval_ms: float = 20.0,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.sock = sock
        self.dest = dest
        self.interval = interval_ms / 1000.0
        self.clock = clock
        self.sleep = sleep
        self.report = SendReport()
        self._next: float | None = None

    def reset(self) -> None:
        self._next = None

    def send(self, pkt: RtpPacket) -> float:
        now = self.clock()
        if self._next is None or now - self._next > self.interval:
            self._next = now
        while (wait := self._next - self.clock()) > 0:
            self.sleep(wait)
        data = serialize(pkt)
        t = self.clock()
        try:
            self.sock.sendto(data, self.dest)
        except OSError as exc:
            self.report.errors += 1
            log.warning("send of seq %d failed: %s", pkt.sequence_number, exc)
        else:
            self.report.sent += 1
            self.report.bytes_sent += len(data)
        self.report.send_times.append(t)
        self._next += self.interval
        return t


def paced_send(
    stream: Iterable[RtpPacket], sock: socket.socket, dest: tuple[str, int], interval_ms: float = 20.0
) -> SendReport:
    """Send packets at a fixed cadence; socket errors are counted, not raised."""
    sender = PacedSender(sock, dest, interval_ms)
    for pkt in stream:
        sender.send(pkt)
    return sender.report


@dataclass(frozen=True)
class Lost:
    """Loss event for a sequence number the jitter buffer gave up on."""

    sequence_number: int


@dataclass
class JitterStats:
    received: int = 0
    emitted: int = 0
    lost: int = 0
    duplicates: int = 0
    late: int = 0
    malformed: int = 0


class JitterBuffer:
    """Reorders packets by sequence number with a fixed depth.

    ``push`` returns what became playable: packets in sequence order and
    ``Lost`` markers for gaps. A missing sequence number is surrendered once
    a packet ``depth_frames`` or more ahead of it has arrived.
    """

    def __init__(self, depth_frames: int = 3):
        if depth_frames < 1:
            raise ValueError("jitter buffer depth must be >= 1")
        self.depth_frames = depth_frames
        self.next_expected: int | None = None
        self._slots: dict[int, RtpPacket] = {}
        self.stats = JitterStats()

    def __len__(self) -> int:
        return len(self._slots)

    def push(self, pkt: RtpPacket) -> list[RtpPacket | Lost]:
        self.stats.received += 1
        seq = pkt.sequence_number
        if self.next_expected is None:
            self.next_expected = seq
        ahead = seq_delta(seq, self.next_expected)
        if ahead < 0:
            self.stats.late += 1
            return []
        if seq in self._slots:
            self.stats.duplicates += 1
            return []
        self._slots[seq] = pkt
        return self._drain()

    def _furthest_ahead(self) -> int:
        return max(seq_delta(s, self.next_expected) for s in self._slots)

    def _drain(self) -> list[RtpPacket | Lost]:
        out: list[RtpPacket | Lost] = []
        while self._slots:
            nxt = self.next_expected
            if nxt in self._slots:
                out.append(self._slots.pop(nxt))
                self.stats.emitted += 1
            elif self._furthest_ahead() >= self.depth_frames:
                out.append(Lost(nxt))
                self.stats.lost += 1
            else:
                break
            self.next_expected = (nxt + 1) % SEQ_MOD
        return out

    def flush(self) -> list[RtpPacket | Lost]:
        """Release everything still held, marking gaps as lost."""
        out: list[RtpPacket | Lost] = []
        while self._slots:
            nxt = self.next_expected
            if nxt in self._slots:
                out.append(self._slots.pop(nxt))
                self.stats.emitted += 1
            else:
                out.append(Lost(nxt))
                self.stats.lost += 1
            self.next_expected = (nxt + 1) % SEQ_MOD
        return out


class RtpReceiver:
    """Background receive loop: socket -> parse -> jitter buffer -> queue.

    Items put on ``output`` are ``(arrival_time, RtpPacket | Lost)``.
    Malformed datagrams are counted in ``jitter.stats.malformed`` and skipped.
    """

    def __init__(
        self,
        sock: socket.socket,
        jitter: JitterBuffer,
        output: queue.Queue | None = None,
        on_datagram: Callable[[tuple[str, int]], None] | None = None,
        clock: Callable[[], float] = time.monotonic,
    ):
        self.sock = sock
        self.jitter = jitter
        self.output: queue.Queue = output if output is not None else queue.Queue()
        self.on_datagram = on_datagram
        self.clock = clock
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    def start(self) -> RtpReceiver:
        self.sock.settimeout(0.05)
        self._thread = threading.Thread(target=self.run, name="rtp-receiver", daemon=True)
        self._thread.start()
        return self

    def run(self) -> None:
        while not self._stop.is_set():
            try:
                data, addr = self.sock.recvfrom(MAX_DATAGRAM)
            except socket.timeout:
                continue
            except OSError as exc:
                if self._stop.is_set():
                    break
                log.warning("receive failed: %s", exc)
                continue
            now = self.clock()
            try:
                pkt = parse(data)
            except RtpError as exc:
                self.jitter.stats.malformed += 1
                log.debug("dropping malformed datagram from %s: %s", addr, exc)
                continue
            if self.on_datagram is not None:
                self.on_datagram(addr)
            for item in self.jitter.push(pkt):
                self.output.put((now, item))

    def stop(self, flush: bool = True) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join()
        if flush:
            now = self.clock()
            for item in self.jitter.flush():
                self.output.put((now, item))


def receive_loop(sock: socket.socket, jb: JitterBuffer, stop: threading.Event, timeout_s: float = 0.05) -> Iterator[RtpPacket | Lost]:
    """Blocking generator over ordered packets and loss events until ``stop`` is set."""
    sock.settimeout(timeout_s)
    while not stop.is_set():
        try:
            data, _ = sock.recvfrom(MAX_DATAGRAM)
        except socket.timeout:
            continue
        try:
            pkt = parse(data)
        except RtpError:
            jb.stats.malformed += 1
            continue
        yield from jb.push(pkt)
    yield from jb.flush()
