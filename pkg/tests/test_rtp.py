import random
import socket
import struct
import threading

import pytest
from hypothesis import given
from hypothesis import strategies as st

from banglatalk.errors import ProtocolError, RtpError, TruncatedPacketError
from banglatalk.rtp import (
    JitterBuffer,
    Lost,
    PacedSender,
    Packetizer,
    RtpHeader,
    RtpPacket,
    paced_send,
    parse,
    receive_loop,
    seq_delta,
    serialize,
)

headers = st.builds(
    RtpHeader,
    payload_type=st.integers(0, 127),
    sequence_number=st.integers(0, 65535),
    timestamp=st.integers(0, 2**32 - 1),
    ssrc=st.integers(0, 2**32 - 1),
    marker=st.booleans(),
)


def pkt(seq, payload=b"x"):
    return RtpPacket(RtpHeader(96, seq % 65536, 0, 1), payload)


class TestWire:
    @given(headers, st.binary(min_size=1, max_size=300))
    def test_round_trip(self, h, payload):
        p = RtpPacket(h, payload)
        data = serialize(p)
        assert len(data) == 12 + len(payload)
        assert parse(data) == p

    def test_layout(self):
        p = RtpPacket(RtpHeader(111, 0x1234, 0xDEADBEEF, 0x01020304, marker=True), b"\xaa")
        assert serialize(p) == bytes([0x80, 0x80 | 111, 0x12, 0x34, 0xDE, 0xAD, 0xBE, 0xEF, 1, 2, 3, 4, 0xAA])

    @pytest.mark.parametrize("n", [0, 5, 12])
    def test_truncated(self, n):
        with pytest.raises(TruncatedPacketError):
            parse(bytes([0x80] + [0] * (n - 1)) if n else b"")

    def test_wrong_version(self):
        with pytest.raises(ProtocolError):
            parse(struct.pack("!BBHII", 0x40, 96, 0, 0, 0) + b"x")

    def test_empty_payload_rejected(self):
        with pytest.raises(RtpError):
            RtpPacket(RtpHeader(96, 0, 0, 0), b"")

    def test_field_ranges(self):
        with pytest.raises(RtpError):
            RtpHeader(128, 0, 0, 0)
        with pytest.raises(RtpError):
            RtpHeader(96, 65536, 0, 0)


class TestPacketizer:
    def test_wraparound(self):
        pz = Packetizer(96, seed=0)
        pz.sequence_number = 65534
        pz.timestamp = 2**32 - 320
        seqs, tss = [], []
        for _ in range(4):
            p = pz.packetize(b"a")
            seqs.append(p.sequence_number)
            tss.append(p.timestamp)
        assert seqs == [65534, 65535, 0, 1]
        assert tss == [2**32 - 320, 0, 320, 640]

    def test_seeded(self):
        a, b = Packetizer(111, seed=7), Packetizer(111, seed=7)
        assert (a.ssrc, a.sequence_number, a.timestamp) == (b.ssrc, b.sequence_number, b.timestamp)
        assert a.packetize(b"x") == b.packetize(b"x")

    def test_seq_delta(self):
        assert seq_delta(0, 65535) == 1
        assert seq_delta(65535, 0) == -1
        assert seq_delta(10, 5) == 5


class TestJitterBuffer:
    def test_in_order(self):
        jb = JitterBuffer(3)
        out = [x for s in range(5) for x in jb.push(pkt(s))]
        assert [p.sequence_number for p in out] == [0, 1, 2, 3, 4]

    def test_reorder_within_depth(self):
        jb = JitterBuffer(3)
        out = []
        for s in [0, 2, 1, 3]:
            out += jb.push(pkt(s))
        assert [p.sequence_number for p in out] == [0, 1, 2, 3]
        assert jb.stats.lost == 0

    def test_loss_surrendered(self):
        jb = JitterBuffer(3)
        out = []
        for s in [0, 2, 3]:
            out += jb.push(pkt(s))
        assert [getattr(x, "sequence_number") for x in out] == [0]
        out += jb.push(pkt(4))
        assert out[1] == Lost(1)
        assert [p.sequence_number for p in out[2:]] == [2, 3, 4]

    def test_duplicate_and_late(self):
        jb = JitterBuffer(2)
        jb.push(pkt(0))
        jb.push(pkt(2))
        assert jb.push(pkt(2)) == []
        assert jb.stats.duplicates == 1
        jb.push(pkt(1))
        assert jb.push(pkt(0)) == []
        assert jb.stats.late == 1

    def test_wraparound(self):
        jb = JitterBuffer(3)
        out = []
        for s in [65534, 0, 65535, 1]:
            out += jb.push(pkt(s))
        assert [p.sequence_number for p in out] == [65534, 65535, 0, 1]

    def test_flush(self):
        jb = JitterBuffer(5)
        jb.push(pkt(0))
        jb.push(pkt(3))
        assert jb.flush() == [Lost(1), Lost(2), pkt(3)]

    def test_bad_depth(self):
        with pytest.raises(ValueError):
            JitterBuffer(0)

    @given(st.permutations(list(range(30))), st.integers(1, 6))
    def test_every_sequence_accounted_once(self, order, depth):
        jb = JitterBuffer(depth)
        out = []
        for s in order:
            out += jb.push(pkt(s))
        out += jb.flush()
        seqs = [x.sequence_number for x in out]
        # late packets are dropped; first packet defines the start
        first = order[0]
        assert seqs == list(range(first, 30))
        assert jb.stats.emitted + jb.stats.lost == 30 - first

    def test_loss_rate_accounting(self):
        r = random.Random(3)
        kept = [s for s in range(1000) if r.random() > 0.1]
        jb = JitterBuffer(3)
        out = []
        for s in kept:
            out += jb.push(pkt(s))
        out += jb.flush()
        assert sum(isinstance(x, Lost) for x in out) == kept[-1] - kept[0] + 1 - len(kept)


class FakeClock:
    def __init__(self):
        self.t = 0.0

    def __call__(self):
        return self.t

    def sleep(self, dt):
        self.t += dt


class TestPacing:
    def test_schedule(self):
        clock = FakeClock()
        sent = []

        class Sock:
            def sendto(self, data, dest):
                sent.append(clock.t)

        s = PacedSender(Sock(), ("x", 1), 20, clock, clock.sleep)
        for i in range(5):
            s.send(pkt(i))
        assert sent == pytest.approx([0, 0.02, 0.04, 0.06, 0.08])

    def test_reanchor_when_behind(self):
        clock = FakeClock()

        class Sock:
            def sendto(self, data, dest):
                pass

        s = PacedSender(Sock(), ("x", 1), 20, clock, clock.sleep)
        s.send(pkt(0))
        clock.t = 1.0
        t = s.send(pkt(1))
        assert t == 1.0
        assert s.send(pkt(2)) == pytest.approx(1.02)

    def test_errors_counted(self):
        class Sock:
            def sendto(self, data, dest):
                raise OSError("nope")

        clock = FakeClock()
        s = PacedSender(Sock(), ("x", 1), 20, clock, clock.sleep)
        s.send(pkt(0))
        assert s.report.errors == 1 and s.report.sent == 0

    def test_udp_loopback(self):
        rx = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        rx.bind(("127.0.0.1", 0))
        tx = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        stop = threading.Event()
        got = []

        def run():
            for item in receive_loop(rx, JitterBuffer(3), stop):
                got.append(item)

        th = threading.Thread(target=run)
        th.start()
        pz = Packetizer(96, seed=1)
        packets = [pz.packetize(bytes([i]) * 10) for i in range(10)]
        tx.sendto(b"\x80", rx.getsockname())  # malformed, ignored
        rep = paced_send(packets, tx, rx.getsockname(), 5)
        import time

        time.sleep(0.1)
        stop.set()
        th.join()
        assert rep.sent == 10
        assert got == packets
        rx.close()
        tx.close()
