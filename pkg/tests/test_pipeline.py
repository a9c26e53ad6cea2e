import queue
import re
import threading
import time

import numpy as np
import pytest

from banglatalk.backends import ScriptedAsr, ScriptedLlm, ToneTts
from banglatalk.codec import CodecConfig, opus_available
from banglatalk.errors import MeasurementError, ParameterError, TransportError
from banglatalk.pipeline import (
    ClientConfig,
    ClientProcessor,
    EventKind,
    EventLog,
    Phase,
    PipelineEvent,
    ResponseEnd,
    ResponseFrame,
    ServerConfig,
    ServerSession,
    _bind_udp,
    measure_end_to_end_delay,
    parse_address,
)
from conftest import loopback, query_stream, scripted_backends, speech_like, to_frames

PASS = CodecConfig(codec="passthrough")
RESPONSE = "ঠিক আছে।|"


def plain_client(**kw):
    kw.setdefault("codec", PASS)
    return ClientConfig(source="unused", drc_enabled=False, denoiser="none", **kw)


CYCLE = re.compile(
    r"^(segment_start end_of_query transcript_ready "
    r"(?:(?:response_chunk|sentence_ready|response_audio_start) )*response_audio_end ?)+$"
)


def server_kinds(server):
    return " ".join(e.kind.value for e in server.events.snapshot())


class TestHelpers:
    def test_parse_address(self):
        assert parse_address("127.0.0.1:5004") == ("127.0.0.1", 5004)
        with pytest.raises(ParameterError):
            parse_address("nohost")

    def test_port_in_use(self):
        s = _bind_udp("127.0.0.1", 0)
        try:
            with pytest.raises(TransportError):
                _bind_udp("127.0.0.1", s.getsockname()[1])
        finally:
            s.close()

    def test_bad_denoiser(self):
        with pytest.raises(ParameterError):
            ClientConfig(denoiser="rnn")

    def test_processor_stages(self):
        proc = ClientProcessor(ClientConfig(codec=PASS))
        for f in to_frames(speech_like(3200)):
            proc.process(f)
        assert {s.stage for s in proc.metrics.report_stages()} == {"drc", "denoise", "encode"}

    def test_event_log_monotone(self):
        log = EventLog()
        for k in EventKind:
            log.emit(k)
        ts = [e.timestamp_ms for e in log.snapshot()]
        assert ts == sorted(ts)


class TestDelayMeasurement:
    def ev(self, kind, t):
        return PipelineEvent(kind, t)

    def test_pairs(self):
        evs = [
            self.ev(EventKind.DELAY_PROBE, 1000),
            self.ev(EventKind.RESPONSE_AUDIO_START, 2300),
            self.ev(EventKind.DELAY_PROBE, 5000),  # invalid query, no response
            self.ev(EventKind.DELAY_PROBE, 9000),
            self.ev(EventKind.RESPONSE_AUDIO_START, 10500),
        ]
        r = measure_end_to_end_delay(evs)
        assert r.delays_ms == [1300, 1500] and r.errors == 0

    def test_unpaired_start(self):
        evs = [self.ev(EventKind.DELAY_PROBE, 10), self.ev(EventKind.RESPONSE_AUDIO_START, 5)]
        assert measure_end_to_end_delay(evs).errors == 1

    def test_no_probes(self):
        with pytest.raises(MeasurementError):
            measure_end_to_end_delay([])


def feed(session, samples):
    for f in to_frames(samples):
        session.on_frame(f)


class TestServerSession:
    def make(self, llm=None, asr=None):
        return ServerSession(
            asr or ScriptedAsr({}, "q"),
            llm or ScriptedLlm({"q": RESPONSE}),
            ToneTts(22050),
        )

    def drain(self, s, timeout=5.0):
        frames = []
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            try:
                item = s.output.get(timeout=0.05)
            except queue.Empty:
                continue
            if isinstance(item, ResponseEnd):
                return frames, item
            frames.append(item)
            if item.first:
                s.audio_started()
        raise AssertionError("no ResponseEnd")

    def test_response_framing(self):
        s = self.make()
        feed(s, np.concatenate([speech_like(8000), np.zeros(24000, np.int16)]))
        frames, end = self.drain(s)
        assert s.phase is Phase.RESPONDING
        assert all(isinstance(f, ResponseFrame) and len(f.frame) == 320 for f in frames)
        assert [f.first for f in frames].count(True) == 1 and frames[0].first
        # ceil of resampled tone length over 320
        n22 = round(len(RESPONSE.replace("|", "")) * 0.08 * 22050)
        n16 = (n22 - 1) * 320 // 441 + 1
        assert end.frames == len(frames) == -(-n16 // 320)
        s.audio_finished(end.frames)
        assert s.phase is Phase.LISTENING

    def test_invalid_query(self):
        s = self.make(llm=ScriptedLlm({}))
        feed(s, np.concatenate([speech_like(8000), np.zeros(24000, np.int16)]))
        assert s.wait_idle(2.0)
        time.sleep(0.05)
        assert s.output.empty()
        assert s.phase is Phase.LISTENING
        assert EventKind.RESPONSE_AUDIO_START not in s.events.kinds()

    def test_backend_failure_recovers(self):
        class Boom:
            def transcribe(self, seg):
                raise RuntimeError("asr down")

        s = self.make(asr=Boom())
        feed(s, np.concatenate([speech_like(8000), np.zeros(24000, np.int16)]))
        assert s.wait_idle(2.0)
        assert s.phase is Phase.LISTENING

    def test_segment_during_response_is_discarded(self):
        gate = threading.Event()

        class SlowLlm:
            def stream(self, q):
                gate.wait(5)
                yield RESPONSE

        s = self.make(llm=SlowLlm())
        utt = np.concatenate([speech_like(8000), np.zeros(24000, np.int16)])
        feed(s, utt)
        assert s.phase is Phase.PROCESSING
        feed(s, utt)
        gate.set()
        frames, end = self.drain(s)
        s.audio_finished(end.frames)
        assert s.discarded_segments == 1
        assert s.events.kinds().count(EventKind.END_OF_QUERY) == 1


class TestLoopback:
    def test_passthrough_echo_is_bit_exact(self):
        x = speech_like(32000, seed=5)
        frames = to_frames(x)
        cfg = plain_client(realtime=False, linger_ms=300)
        backends = (ScriptedAsr({}), ScriptedLlm({}), ToneTts())
        report, server = loopback(frames, cfg, ServerConfig(codec=PASS, keep_received=True), backends)
        assert report.frames_sent == 100
        assert np.array_equal(report.sent_pcm, x)
        assert np.array_equal(server.received_pcm(), report.sent_pcm)

    def test_one_query_cycle(self):
        frames = query_stream(1)
        cfg = plain_client()
        scfg = ServerConfig(codec=PASS)
        backends = scripted_backends(frames, cfg, scfg, [RESPONSE])
        report, server = loopback(frames, cfg, scfg, backends)
        assert CYCLE.match(server_kinds(server)), server_kinds(server)
        transcripts = [e.payload["text"] for e in server.events.snapshot() if e.kind is EventKind.TRANSCRIPT_READY]
        assert transcripts == ["query 0"]
        assert report.frames_received == server.packets_out > 0
        assert len(report.delay.delays_ms) == 1
        assert 1200 <= report.delay.delays_ms[0] <= 2000

    def test_two_sequential_queries(self):
        frames = query_stream(2)
        cfg = plain_client()
        scfg = ServerConfig(codec=PASS)
        report, server = loopback(frames, cfg, scfg, scripted_backends(frames, cfg, scfg, [RESPONSE, "আবার বলুন।|"]))
        kinds = server_kinds(server)
        assert CYCLE.match(kinds), kinds
        assert kinds.count("response_audio_end") == 2
        assert server.session.responses == 2

    def test_invalid_query_sends_nothing(self):
        frames = query_stream(1)
        cfg = plain_client()
        scfg = ServerConfig(codec=PASS)
        report, server = loopback(frames, cfg, scfg, scripted_backends(frames, cfg, scfg, [None]))
        assert server.packets_out == 0
        assert report.frames_received == 0
        assert server.session.phase is Phase.LISTENING

    @pytest.mark.skipif(not opus_available(), reason="libopus not installed")
    def test_opus_query_fingerprints_match(self):
        frames = query_stream(1)
        cfg = ClientConfig(source="unused")
        scfg = ServerConfig()
        report, server = loopback(frames, cfg, scfg, scripted_backends(frames, cfg, scfg, [RESPONSE]))
        transcripts = [e.payload["text"] for e in server.events.snapshot() if e.kind is EventKind.TRANSCRIPT_READY]
        assert transcripts == ["query 0"]
        assert report.frames_received > 0
