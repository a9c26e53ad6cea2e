"""Client and server orchestration over RTP/UDP.

Client: capture -> DRC -> denoise -> encode -> packetize -> paced send, and
receive -> jitter buffer -> decode -> sink.

Server: receive -> decode -> VAD/end-of-query -> ASR -> LLM stream ->
sentences -> TTS -> resample -> 20 ms framing -> encode -> paced send.
"""

from __future__ import annotations

import logging
import queue
import socket
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .audio import (
    PIPELINE_FRAME_SAMPLES,
    PIPELINE_RATE,
    AudioFrame,
    FrameSource,
    MicrophoneSource,
    WavFrameSource,
    concat_frames,
    write_pcm_samples,
)
from .backends import AsrBackend, LlmBackend, SentenceSegmenter, TtsBackend
from .codec import PASSTHROUGH, CodecConfig, make_codec
from .dsp import DrcConfig, ResampleState, dbfs, denoise_frame_16k, drc_compress, gate_denoiser, identity_denoiser, resample_linear
from .errors import MeasurementError, ParameterError, TransportError
from .metrics import BitrateReport, BitrateTracker, DelayReport, StageMetrics, StageTimer
from .rtp import PT_OPUS, PT_PASSTHROUGH, JitterBuffer, JitterStats, Lost, PacedSender, Packetizer, RtpPacket, RtpReceiver
from .segmenter import EndOfQuery, EoqConfig, SegmentStart, Segmenter, SpeechSegment, energy_vad

log = logging.getLogger(__name__)
event_log = logging.getLogger("banglatalk.events")

FRAME_BUDGET_MS = 20.0
RESPONSE_GAP_S = 0.2
DENOISERS = ("none", "identity", "gate")


class EventKind(str, Enum):
    SEGMENT_START = "segment_start"
    END_OF_QUERY = "end_of_query"
    TRANSCRIPT_READY = "transcript_ready"
    RESPONSE_CHUNK = "response_chunk"
    SENTENCE_READY = "sentence_ready"
    RESPONSE_AUDIO_START = "response_audio_start"
    RESPONSE_AUDIO_END = "response_audio_end"
    DELAY_PROBE = "delay_probe"


@dataclass(frozen=True)
class PipelineEvent:
    kind: EventKind
    timestamp_ms: float
    payload: dict[str, Any] = field(default_factory=dict)


class EventLog:
    """Serialized, monotone event record that also writes one log line per event."""

    def __init__(self, session: str = "s0", clock: Callable[[], float] = time.monotonic):
        self.session = session
        self.clock = clock
        self._lock = threading.Lock()
        self.events: list[PipelineEvent] = []

    def emit(self, kind: EventKind, timestamp_s: float | None = None, **payload: Any) -> PipelineEvent:
        with self._lock:
            t = self.clock() if timestamp_s is None else timestamp_s
            ev = PipelineEvent(kind, t * 1000.0, payload)
            self.events.append(ev)
        detail = " ".join(f"{k}={v!r}" for k, v in payload.items())
        event_log.info("%.3f %s %s %s", ev.timestamp_ms, self.session, kind.value, detail)
        return ev

    def kinds(self) -> list[EventKind]:
        with self._lock:
            return [e.kind for e in self.events]

    def snapshot(self) -> list[PipelineEvent]:
        with self._lock:
            return list(self.events)


def payload_type_for(codec: CodecConfig) -> int:
    return PT_PASSTHROUGH if codec.codec == PASSTHROUGH else PT_OPUS


def parse_address(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise ParameterError(f"expected host:port, got {text!r}")
    try:
        return host, int(port)
    except ValueError:
        raise ParameterError(f"bad port in {text!r}") from None


def _bind_udp(host: str, port: int) -> socket.socket:
    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 1 << 20)
    try:
        sock.bind((host, port))
    except OSError as exc:
        sock.close()
        raise TransportError(f"cannot bind UDP {host}:{port}: {exc}") from exc
    return sock


# --------------------------------------------------------------------------- client


@dataclass
class ClientConfig:
    source: str = "mic"
    sink: str | None = None
    drc_enabled: bool = True
    drc: DrcConfig = field(default_factory=DrcConfig)
    denoiser: str = "gate"
    gate_floor_dbfs: float = -45.0
    codec: CodecConfig = field(default_factory=CodecConfig)
    server: tuple[str, int] = ("127.0.0.1", 5004)
    local_host: str = "0.0.0.0"
    local_port: int = 0
    seed: int = 0
    payload_type: int | None = None
    jitter_depth: int = 3
    realtime: bool = True
    linger_ms: int = 1500
    probe_threshold_dbfs: float = -40.0

    def __post_init__(self) -> None:
        if self.denoiser not in DENOISERS:
            raise ParameterError(f"denoiser must be one of {DENOISERS}, got {self.denoiser!r}")


class ClientProcessor:
    """The per-frame send path: DRC, denoise wrapper, encode.

    Each stage is timed into ``metrics`` under ``drc``, ``denoise`` and
    ``encode``.
    """

    def __init__(self, cfg: ClientConfig, metrics: StageMetrics | None = None):
        self.cfg = cfg
        self.metrics = metrics or StageMetrics()
        self.codec = make_codec(cfg.codec)
        self.resample_state = ResampleState()
        if cfg.denoiser == "gate":
            self.denoiser = gate_denoiser(cfg.gate_floor_dbfs)
        elif cfg.denoiser == "identity":
            self.denoiser = identity_denoiser()
        else:
            self.denoiser = None

    def process(self, frame: AudioFrame):
        if self.cfg.drc_enabled:
            with self.metrics.time("drc"):
                frame = drc_compress(frame, self.cfg.drc)
        if self.denoiser is not None:
            with self.metrics.time("denoise"):
                frame = denoise_frame_16k(frame, self.resample_state, self.denoiser)
        with self.metrics.time("encode"):
            enc = self.codec.encode(frame)
        return frame, enc


@dataclass
class ClientReport:
    frames_sent: int
    send_errors: int
    mean_frame_ms: float
    max_frame_ms: float
    budget_overruns: int
    stages: list[StageTimer]
    bitrate: BitrateReport
    frames_received: int
    frames_concealed: int
    jitter: JitterStats
    events: list[PipelineEvent]
    sent_pcm: np.ndarray
    received_pcm: np.ndarray
    delay: DelayReport | None = None

    def format(self) -> str:
        lines = [
            f"frames sent        {self.frames_sent} (send errors {self.send_errors})",
            f"frame time         mean {self.mean_frame_ms:.3f} ms, max {self.max_frame_ms:.3f} ms, "
            f"over budget {self.budget_overruns}",
            f"upload bitrate     {self.bitrate.mean_kbps:.2f} kbps over {len(self.bitrate.windows)} s",
            f"frames received    {self.frames_received} (concealed {self.frames_concealed})",
        ]
        if self.delay is not None and self.delay.delays_ms:
            lines.append(f"end-to-end delay   mean {self.delay.mean_ms:.1f} ms over {len(self.delay.delays_ms)} queries")
        lines.append("")
        lines.append(_stage_table(self.stages, self.mean_frame_ms))
        return "\n".join(lines)

    def format_lines(self) -> str:
        out = [f"stage_mean_ms,{s.stage},{s.mean_ms:.6f}" for s in self.stages]
        out += [
            f"client,frame_mean_ms,{self.mean_frame_ms:.6f}",
            f"client,frames_sent,{self.frames_sent}",
            f"client,frames_received,{self.frames_received}",
            f"bitrate,mean_kbps,{self.bitrate.mean_kbps:.6f}",
        ]
        if self.delay is not None:
            out.append(self.delay.format_lines())
        return "\n".join(out)


def _stage_table(stages: Sequence[StageTimer], frame_mean: float) -> str:
    lines = [f"{'stage':<12}{'n':>8}{'mean ms':>10}{'max ms':>10}{'p99 ms':>10}"]
    for s in stages:
        lines.append(f"{s.stage:<12}{s.count:>8}{s.mean_ms:>10.3f}{s.max_ms:>10.3f}{s.p99_ms:>10.3f}")
    lines.append(f"{'total':<12}{'':>8}{sum(s.mean_ms for s in stages):>10.3f}")
    lines.append(f"{'frame':<12}{'':>8}{frame_mean:>10.3f}")
    return "\n".join(lines)


class _Playback:
    """Consumes the receiver queue: decode, conceal losses, detect response starts."""

    def __init__(self, codec_cfg: CodecConfig, events: EventLog, in_q: queue.Queue):
        self.codec = make_codec(codec_cfg)
        self.events = events
        self.in_q = in_q
        self.frames: list[AudioFrame] = []
        self.concealed = 0
        self._last_arrival: float | None = None
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, name="client-playback", daemon=True)

    def start(self) -> None:
        self._thread.start()

    def _handle(self, arrival: float, item: RtpPacket | Lost) -> None:
        if isinstance(item, Lost):
            self.frames.append(self.codec.conceal())
            self.concealed += 1
            return
        fresh = self._last_arrival is None or arrival - self._last_arrival > RESPONSE_GAP_S
        if item.header.marker or fresh:
            self.events.emit(EventKind.RESPONSE_AUDIO_START, arrival, seq=item.sequence_number)
        self._last_arrival = arrival
        try:
            self.frames.append(self.codec.decode(item.payload))
        except Exception as exc:
            log.warning("decode of seq %d failed: %s", item.sequence_number, exc)
            self.frames.append(self.codec.conceal())
            self.concealed += 1

    def _run(self) -> None:
        while not (self._stop.is_set() and self.in_q.empty()):
            try:
                arrival, item = self.in_q.get(timeout=0.05)
            except queue.Empty:
                continue
            self._handle(arrival, item)

    def stop(self) -> None:
        self._stop.set()
        self._thread.join()


def _open_source(cfg: ClientConfig) -> FrameSource:
    if cfg.source == "mic":
        return MicrophoneSource()
    return WavFrameSource(cfg.source)


class Client:
    def __init__(self, cfg: ClientConfig, source: FrameSource | Iterable[AudioFrame] | None = None, clock: Callable[[], float] = time.monotonic):
        self.cfg = cfg
        self.source = source if source is not None else _open_source(cfg)
        self.clock = clock
        self.metrics = StageMetrics()
        self.events = EventLog("client", clock)
        self.processor = ClientProcessor(cfg, self.metrics)
        pt = cfg.payload_type if cfg.payload_type is not None else payload_type_for(cfg.codec)
        self.packetizer = Packetizer(pt, cfg.seed)

    def run(self) -> ClientReport:
        cfg = self.cfg
        sock = _bind_udp(cfg.local_host, cfg.local_port)
        jitter = JitterBuffer(cfg.jitter_depth)
        receiver = RtpReceiver(sock, jitter, clock=self.clock)
        playback = _Playback(cfg.codec, self.events, receiver.output)
        sender = PacedSender(sock, cfg.server, 20.0 if cfg.realtime else 0.0, clock=self.clock)
        bitrate = BitrateTracker()
        frame_ms: list[float] = []
        sent: list[np.ndarray] = []
        overruns = 0
        in_voice = False
        last_voiced = 0.0
        receiver.start()
        playback.start()
        try:
            for k, frame in enumerate(self.source):
                t_cap = self.clock()
                t0 = time.perf_counter()
                processed, enc = self.processor.process(frame)
                with self.metrics.time("packetize"):
                    pkt = self.packetizer.packetize(enc.payload, marker=k == 0)
                elapsed = (time.perf_counter() - t0) * 1000.0
                frame_ms.append(elapsed)
                if elapsed > FRAME_BUDGET_MS:
                    overruns += 1
                    log.warning("frame %d took %.2f ms (budget %.0f ms)", k, elapsed, FRAME_BUDGET_MS)
                sent.append(processed.samples)
                t_send = sender.send(pkt)
                bitrate.add(len(pkt.payload), t_send)
                if dbfs(processed.samples) > cfg.probe_threshold_dbfs:
                    in_voice, last_voiced = True, t_cap
                elif in_voice:
                    self.events.emit(EventKind.DELAY_PROBE, last_voiced)
                    in_voice = False
            if in_voice:
                self.events.emit(EventKind.DELAY_PROBE, last_voiced)
            time.sleep(cfg.linger_ms / 1000.0)
        finally:
            receiver.stop(flush=True)
            playback.stop()
            sock.close()
            if hasattr(self.source, "close"):
                self.source.close()
        received = concat_frames(playback.frames)
        if cfg.sink and cfg.sink not in ("speaker", "none"):
            write_pcm_samples(cfg.sink, received, PIPELINE_RATE)
        events = self.events.snapshot()
        try:
            delay = measure_end_to_end_delay(events)
        except MeasurementError:
            delay = None
        arr = np.asarray(frame_ms) if frame_ms else np.zeros(1)
        return ClientReport(
            frames_sent=sender.report.sent,
            send_errors=sender.report.errors,
            mean_frame_ms=float(arr.mean()),
            max_frame_ms=float(arr.max()),
            budget_overruns=overruns,
            stages=self.metrics.report_stages(),
            bitrate=bitrate.report(),
            frames_received=len(playback.frames) - playback.concealed,
            frames_concealed=playback.concealed,
            jitter=jitter.stats,
            events=events,
            sent_pcm=np.concatenate(sent) if sent else np.zeros(0, dtype=np.int16),
            received_pcm=received,
            delay=delay,
        )


def run_client(cfg: ClientConfig, source: FrameSource | Iterable[AudioFrame] | None = None) -> ClientReport:
    return Client(cfg, source).run()


def measure_end_to_end_delay(events: Iterable[PipelineEvent]) -> DelayReport:
    """Pair each client-side response start with the last voiced frame before it.

    A response start with no preceding voiced frame counts as an error; a
    voiced stretch never followed by a response (an invalid query) yields
    no sample.
    """
    ordered = sorted(events, key=lambda e: e.timestamp_ms)
    if not any(e.kind == EventKind.DELAY_PROBE for e in ordered):
        raise MeasurementError("no end-of-speech probes recorded")
    delays: list[float] = []
    errors = 0
    pending: float | None = None
    for ev in ordered:
        if ev.kind == EventKind.DELAY_PROBE:
            pending = ev.timestamp_ms
        elif ev.kind == EventKind.RESPONSE_AUDIO_START:
            if pending is None:
                errors += 1
            else:
                delays.append(ev.timestamp_ms - pending)
                pending = None
    return DelayReport(delays, errors)


# --------------------------------------------------------------------------- server


class Phase(str, Enum):
    LISTENING = "LISTENING"
    PROCESSING = "PROCESSING"
    RESPONDING = "RESPONDING"


@dataclass(frozen=True)
class ResponseFrame:
    frame: AudioFrame
    first: bool


@dataclass(frozen=True)
class ResponseEnd:
    frames: int


def tts_to_pipeline_rate(audio: np.ndarray, rate: int) -> np.ndarray:
    if rate == PIPELINE_RATE:
        return np.asarray(audio, dtype=np.int16)
    if rate == 22050:
        return resample_linear(audio, rate, PIPELINE_RATE)
    raise ParameterError(f"unsupported TTS rate {rate}")


class ServerSession:
    """One conversation: segmentation, backend orchestration and phase tracking.

    Response audio is put on ``output`` as ``ResponseFrame`` items followed by
    a ``ResponseEnd``; whoever transmits them must call ``audio_started`` and
    ``audio_finished`` so the phase advances. Audio arriving while not
    LISTENING is still segmented but its segments are dropped.
    """

    def __init__(
        self,
        asr: AsrBackend,
        llm: LlmBackend,
        tts: TtsBackend,
        vad=None,
        eoq: EoqConfig = EoqConfig(),
        events: EventLog | None = None,
        output: queue.Queue | None = None,
    ):
        self.asr, self.llm, self.tts = asr, llm, tts
        self.segmenter = Segmenter(vad if vad is not None else energy_vad(hangover_frames=0), eoq)
        self.events = events or EventLog("server")
        self.output: queue.Queue = output if output is not None else queue.Queue()
        self._phase = Phase.LISTENING
        self._lock = threading.Lock()
        self._idle = threading.Event()
        self._idle.set()
        self._live_segment = False
        self.responses = 0
        self.discarded_segments = 0

    @property
    def phase(self) -> Phase:
        with self._lock:
            return self._phase

    def _set_phase(self, phase: Phase) -> None:
        with self._lock:
            log.debug("phase %s -> %s", self._phase.value, phase.value)
            self._phase = phase
        if phase is Phase.LISTENING:
            self._idle.set()
        else:
            self._idle.clear()

    def wait_idle(self, timeout: float | None = None) -> bool:
        return self._idle.wait(timeout)

    def on_frame(self, frame: AudioFrame) -> None:
        for ev in self.segmenter.push(frame):
            if isinstance(ev, SegmentStart):
                self._live_segment = self.phase is Phase.LISTENING
                if self._live_segment:
                    self.events.emit(EventKind.SEGMENT_START, stream_ms=ev.time_ms)
            elif isinstance(ev, EndOfQuery):
                if self._live_segment and self.phase is Phase.LISTENING:
                    seg = ev.segment
                    self.events.emit(
                        EventKind.END_OF_QUERY,
                        stream_ms=seg.eoq_time_ms,
                        speech_end_ms=seg.end_time_ms,
                        samples=len(seg.samples),
                        capped=seg.capped,
                    )
                    self._set_phase(Phase.PROCESSING)
                    threading.Thread(target=self._respond, args=(seg,), name="responder", daemon=True).start()
                else:
                    self.discarded_segments += 1
                    log.info("discarding segment that started while busy")
                self._live_segment = False

    def _respond(self, seg: SpeechSegment) -> None:
        frames = 0
        try:
            transcript = self.asr.transcribe(seg)
            self.events.emit(EventKind.TRANSCRIPT_READY, text=transcript)
            splitter = SentenceSegmenter()
            carry = np.zeros(0, dtype=np.int16)

            def speak(sentences):
                nonlocal carry, frames
                for sentence in sentences:
                    text = sentence.text.strip()
                    if not text:
                        continue
                    self.events.emit(EventKind.SENTENCE_READY, text=text)
                    audio = tts_to_pipeline_rate(self.tts.synthesize(text), self.tts.sample_rate_hz)
                    carry = np.concatenate([carry, audio])
                    while len(carry) >= PIPELINE_FRAME_SAMPLES:
                        self.output.put(ResponseFrame(AudioFrame(carry[:PIPELINE_FRAME_SAMPLES]), frames == 0))
                        carry = carry[PIPELINE_FRAME_SAMPLES:]
                        frames += 1

            for chunk in self.llm.stream(transcript):
                self.events.emit(EventKind.RESPONSE_CHUNK, text=chunk)
                speak(splitter.feed(chunk))
            speak(splitter.flush())
            if len(carry):
                tail = np.zeros(PIPELINE_FRAME_SAMPLES, dtype=np.int16)
                tail[: len(carry)] = carry
                self.output.put(ResponseFrame(AudioFrame(tail), frames == 0))
                frames += 1
            if splitter.invalid:
                log.info("invalid query %r; no response", transcript)
        except Exception as exc:
            log.error("backend failure, returning to LISTENING: %s", exc)
        if frames:
            self.output.put(ResponseEnd(frames))
        else:
            self._set_phase(Phase.LISTENING)

    def audio_started(self) -> None:
        self._set_phase(Phase.RESPONDING)
        self.events.emit(EventKind.RESPONSE_AUDIO_START)

    def audio_finished(self, frames: int) -> None:
        self.responses += 1
        self.events.emit(EventKind.RESPONSE_AUDIO_END, frames=frames)
        self._set_phase(Phase.LISTENING)


@dataclass
class ServerConfig:
    host: str = "0.0.0.0"
    port: int = 5004
    codec: CodecConfig = field(default_factory=CodecConfig)
    vad_threshold_dbfs: float = -40.0
    vad_hangover_frames: int = 0
    eoq: EoqConfig = field(default_factory=EoqConfig)
    jitter_depth: int = 3
    seed: int = 1
    payload_type: int | None = None
    client: tuple[str, int] | None = None
    record: str | None = None
    keep_received: bool = False


class Server:
    """UDP front end for one ``ServerSession``.

    Threads: RTP receiver, session loop (decode + segment) and paced sender.
    """

    def __init__(self, cfg: ServerConfig, asr: AsrBackend, llm: LlmBackend, tts: TtsBackend, clock: Callable[[], float] = time.monotonic):
        self.cfg = cfg
        self.clock = clock
        self.events = EventLog("server", clock)
        self.session = ServerSession(
            asr, llm, tts, energy_vad(cfg.vad_threshold_dbfs, cfg.vad_hangover_frames), cfg.eoq, self.events
        )
        self.decoder = make_codec(cfg.codec)
        self.encoder = make_codec(cfg.codec)
        pt = cfg.payload_type if cfg.payload_type is not None else payload_type_for(cfg.codec)
        self.packetizer = Packetizer(pt, cfg.seed)
        self.client_addr = cfg.client
        self.received: list[AudioFrame] = []
        self.frames_in = 0
        self.packets_out = 0
        self.sock: socket.socket | None = None
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self.receiver: RtpReceiver | None = None

    @property
    def address(self) -> tuple[str, int]:
        assert self.sock is not None
        return self.sock.getsockname()

    def _learn_client(self, addr: tuple[str, int]) -> None:
        if self.client_addr is None:
            self.client_addr = addr
            log.info("client address %s:%d", *addr)

    def start(self) -> Server:
        self.sock = _bind_udp(self.cfg.host, self.cfg.port)
        self.receiver = RtpReceiver(self.sock, JitterBuffer(self.cfg.jitter_depth), on_datagram=self._learn_client, clock=self.clock)
        self.receiver.start()
        for target, name in ((self._session_loop, "server-session"), (self._send_loop, "server-sender")):
            t = threading.Thread(target=target, name=name, daemon=True)
            t.start()
            self._threads.append(t)
        return self

    def _session_loop(self) -> None:
        assert self.receiver is not None
        q = self.receiver.output
        while not self._stop.is_set():
            try:
                _, item = q.get(timeout=0.05)
            except queue.Empty:
                continue
            if isinstance(item, Lost):
                frame = self.decoder.conceal()
            else:
                try:
                    frame = self.decoder.decode(item.payload)
                except Exception as exc:
                    log.warning("decode of seq %d failed: %s", item.sequence_number, exc)
                    frame = self.decoder.conceal()
            self.frames_in += 1
            if self.cfg.keep_received or self.cfg.record:
                self.received.append(frame)
            self.session.on_frame(frame)

    def _send_loop(self) -> None:
        sender: PacedSender | None = None
        out = self.session.output
        while not self._stop.is_set():
            try:
                item = out.get(timeout=0.05)
            except queue.Empty:
                continue
            if isinstance(item, ResponseEnd):
                self.session.audio_finished(item.frames)
                continue
            if self.client_addr is None:
                log.warning("no client address yet; dropping response frame")
                continue
            if sender is None:
                sender = PacedSender(self.sock, self.client_addr, 20.0, clock=self.clock)
            if item.first:
                sender.reset()
            pkt = self.packetizer.packetize(self.encoder.encode(item.frame).payload, marker=item.first)
            sender.send(pkt)
            self.packets_out += 1
            if item.first:
                self.session.audio_started()

    def stop(self) -> None:
        self._stop.set()
        if self.receiver is not None:
            self.receiver.stop(flush=False)
        for t in self._threads:
            t.join()
        if self.sock is not None:
            self.sock.close()
        if self.cfg.record:
            write_pcm_samples(self.cfg.record, concat_frames(self.received), PIPELINE_RATE)

    def received_pcm(self) -> np.ndarray:
        return concat_frames(self.received)

    def serve(self, duration_s: float | None = None, stop: threading.Event | None = None) -> None:
        """Block until ``duration_s`` elapses, ``stop`` is set, or interrupted."""
        stop = stop or threading.Event()
        deadline = None if not duration_s else self.clock() + duration_s
        try:
            while not stop.is_set():
                if deadline is not None and self.clock() >= deadline:
                    break
                stop.wait(0.1)
        except KeyboardInterrupt:
            log.info("interrupted")

    def __enter__(self) -> Server:
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def run_server(cfg: ServerConfig, asr: AsrBackend, llm: LlmBackend, tts: TtsBackend, duration_s: float | None = None, stop: threading.Event | None = None) -> Server:
    server = Server(cfg, asr, llm, tts).start()
    try:
        server.serve(duration_s, stop)
    finally:
        server.stop()
    return server


def offline_segments(frames: Iterable[AudioFrame], cfg: ClientConfig, server_cfg: ServerConfig | None = None) -> list[SpeechSegment]:
    """Segments the server would cut from ``frames`` sent by a client with ``cfg``.

    Runs the client send path and the server decode/segment path without a
    network. Exact for the passthrough codec; used to build ASR fingerprint
    tables for scripted backends.
    """
    server_cfg = server_cfg or ServerConfig(codec=cfg.codec)
    proc = ClientProcessor(cfg)
    decoder = make_codec(cfg.codec)
    seg = Segmenter(energy_vad(server_cfg.vad_threshold_dbfs, server_cfg.vad_hangover_frames), server_cfg.eoq)
    out = []
    for frame in frames:
        _, enc = proc.process(frame)
        for ev in seg.push(decoder.decode(enc.payload)):
            if isinstance(ev, EndOfQuery):
                out.append(ev.segment)
    return out
