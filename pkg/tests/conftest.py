import dataclasses
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

RATE = 16000


def tone(n_samples, freq=440.0, amplitude=0.5, rate=RATE):
    t = np.arange(n_samples) / rate
    return np.round(amplitude * 32767 * np.sin(2 * np.pi * freq * t)).astype(np.int16)


def speech_like(n_samples, rate=RATE, seed=0):
    """Harmonic tone with a slow amplitude wobble; stands in for voiced speech."""
    rng = np.random.default_rng(seed)
    t = np.arange(n_samples) / rate
    f0 = rng.uniform(120, 240)
    env = 0.6 + 0.4 * np.sin(2 * np.pi * 3.0 * t)
    sig = sum(0.3 / k * np.sin(2 * np.pi * k * f0 * t) for k in range(1, 6))
    return np.round(env * sig * 32767).astype(np.int16)


def burst_fixture(seconds=60, on_s=1.0, off_s=1.0, rate=RATE):
    """Alternating speech-like bursts and digital silence."""
    period = int((on_s + off_s) * rate)
    on = int(on_s * rate)
    out = np.zeros(seconds * rate, dtype=np.int16)
    for i, start in enumerate(range(0, len(out), period)):
        seg = speech_like(on, rate, seed=i)
        out[start:start + on] = seg[: len(out) - start]
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def to_frames(samples, size=320):
    from banglatalk.audio import frame_samples

    frames, _ = frame_samples(np.asarray(samples, dtype=np.int16), size, RATE)
    return frames


def query_stream(n_queries, speech_s=0.6, gap_s=2.6, lead_s=0.2, seed=0):
    """``n_queries`` speech-like utterances separated by digital silence, as 20 ms frames."""
    parts = [np.zeros(int(lead_s * RATE), dtype=np.int16)]
    for i in range(n_queries):
        parts.append(speech_like(int(speech_s * RATE), seed=seed + i))
        parts.append(np.zeros(int(gap_s * RATE), dtype=np.int16))
    return to_frames(np.concatenate(parts))


def scripted_backends(frames, client_cfg, server_cfg, responses, fallback=None):
    """ASR keyed on the fingerprints the server will see; query i -> responses[i]."""
    from banglatalk.backends import ScriptedAsr, ScriptedLlm, ToneTts, fingerprint
    from banglatalk.pipeline import offline_segments

    segs = offline_segments(frames, client_cfg, server_cfg)
    table = {fingerprint(s): f"query {i}" for i, s in enumerate(segs)}
    llm = {f"query {i}": r for i, r in enumerate(responses) if r is not None}
    asr = ScriptedAsr(table, fallback if fallback is not None else "<unk>")
    return asr, ScriptedLlm(llm), ToneTts(22050), segs


def loopback(frames, client_cfg, server_cfg, backends, settle_s=0.3):
    """Run a server and a client on 127.0.0.1; returns (client report, stopped server)."""
    from banglatalk.pipeline import Client, Server

    asr, llm, tts = backends[:3]
    server_cfg = dataclasses.replace(server_cfg, host="127.0.0.1", port=0)
    server = Server(server_cfg, asr, llm, tts).start()
    try:
        cfg = dataclasses.replace(client_cfg, server=server.address, local_host="127.0.0.1")
        report = Client(cfg, frames).run()
        server.session.wait_idle(5.0)
        time.sleep(settle_s)
    finally:
        server.stop()
    return report, server


ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
