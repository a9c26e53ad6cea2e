"""Frame codecs: a byte-exact passthrough and libopus via ctypes."""

from __future__ import annotations

import ctypes
import ctypes.util
import threading
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .audio import PIPELINE_FRAME_SAMPLES, PIPELINE_RATE, AudioFrame, require_frame
from .errors import CodecError, ParameterError

PASSTHROUGH = "passthrough"
OPUS = "opus"
CODECS = (PASSTHROUGH, OPUS)

PASSTHROUGH_PAYLOAD_BYTES = 2 * PIPELINE_FRAME_SAMPLES

# libopus constants (opus_defines.h)
OPUS_OK = 0
OPUS_APPLICATION_VOIP = 2048
OPUS_APPLICATION_AUDIO = 2049
OPUS_APPLICATION_RESTRICTED_LOWDELAY = 2051
OPUS_SET_BITRATE_REQUEST = 4002
OPUS_SET_VBR_REQUEST = 4006
OPUS_SET_COMPLEXITY_REQUEST = 4010
OPUS_SET_SIGNAL_REQUEST = 4024
OPUS_SIGNAL_VOICE = 3001
MAX_OPUS_PACKET = 1275

APPLICATIONS = {
    "lowdelay": OPUS_APPLICATION_RESTRICTED_LOWDELAY,
    "voip": OPUS_APPLICATION_VOIP,
    "audio": OPUS_APPLICATION_AUDIO,
}


@dataclass(frozen=True)
class CodecConfig:
    codec: str = OPUS
    target_bitrate_bps: int = 24000
    mode: str = "vbr"
    frame_ms: int = 20
    sample_rate_hz: int = PIPELINE_RATE
    channels: int = 1
    application: str = "lowdelay"
    complexity: int = 10

    def __post_init__(self) -> None:
        if self.codec not in CODECS:
            raise ParameterError(f"unknown codec {self.codec!r}; expected one of {CODECS}")
        if self.target_bitrate_bps <= 0:
            raise ParameterError("target bitrate must be positive")
        if self.mode not in ("vbr", "cbr"):
            raise ParameterError(f"mode must be 'vbr' or 'cbr', got {self.mode!r}")
        if self.frame_ms != 20 or self.sample_rate_hz != PIPELINE_RATE or self.channels != 1:
            raise ParameterError("codec framing is fixed at 20 ms mono 16 kHz")
        if self.application not in APPLICATIONS:
            raise ParameterError(f"unknown opus application {self.application!r}")
        if not 0 <= self.complexity <= 10:
            raise ParameterError("complexity must be in 0..10")

    @property
    def frame_samples(self) -> int:
        return self.frame_ms * self.sample_rate_hz // 1000


@dataclass(frozen=True)
class EncodedFrame:
    payload: bytes
    codec_id: str
    source_samples: int = PIPELINE_FRAME_SAMPLES


class Codec(Protocol):
    codec_id: str

    def encode(self, frame: AudioFrame) -> EncodedFrame: ...

    def decode(self, enc: EncodedFrame | bytes) -> AudioFrame: ...

    def conceal(self) -> AudioFrame: ...


def _payload(enc: EncodedFrame | bytes, codec_id: str) -> bytes:
    if isinstance(enc, EncodedFrame):
        if enc.codec_id != codec_id:
            raise CodecError(f"{codec_id} decoder given a {enc.codec_id} frame")
        return enc.payload
    return bytes(enc)


class PassthroughCodec:
    """Raw little-endian PCM; decode(encode(x)) == x."""

    codec_id = PASSTHROUGH

    def __init__(self, cfg: CodecConfig | None = None):
        self.cfg = cfg or CodecConfig(codec=PASSTHROUGH)

    def encode(self, frame: AudioFrame) -> EncodedFrame:
        require_frame(frame, PIPELINE_FRAME_SAMPLES, PIPELINE_RATE)
        return EncodedFrame(frame.to_bytes(), PASSTHROUGH)

    def decode(self, enc: EncodedFrame | bytes) -> AudioFrame:
        data = _payload(enc, PASSTHROUGH)
        if len(data) != PASSTHROUGH_PAYLOAD_BYTES:
            raise CodecError(f"passthrough payload must be {PASSTHROUGH_PAYLOAD_BYTES} bytes, got {len(data)}")
        return AudioFrame.from_bytes(data)

    def conceal(self) -> AudioFrame:
        return AudioFrame.silence()


_lib = None
_lib_lock = threading.Lock()


def _load_libopus() -> ctypes.CDLL:
    global _lib
    with _lib_lock:
        if _lib is not None:
            return _lib
        names = [ctypes.util.find_library("opus"), "libopus.so.0", "libopus.dylib", "opus.dll"]
        for name in filter(None, names):
            try:
                lib = ctypes.CDLL(name)
                break
            except OSError:
                continue
        else:
            raise CodecError("libopus shared library not found")
        vp, i32 = ctypes.c_void_p, ctypes.c_int32
        lib.opus_encoder_create.restype = vp
        lib.opus_encoder_create.argtypes = [i32, ctypes.c_int, ctypes.c_int, ctypes.POINTER(ctypes.c_int)]
        lib.opus_encoder_destroy.argtypes = [vp]
        lib.opus_encoder_ctl.argtypes = [vp, ctypes.c_int, ctypes.c_int]
        lib.opus_encode.restype = i32
        lib.opus_encode.argtypes = [vp, ctypes.c_void_p, ctypes.c_int, ctypes.c_char_p, i32]
        lib.opus_decoder_create.restype = vp
        lib.opus_decoder_create.argtypes = [i32, ctypes.c_int, ctypes.POINTER(ctypes.c_int)]
        lib.opus_decoder_destroy.argtypes = [vp]
        lib.opus_decode.restype = ctypes.c_int
        lib.opus_decode.argtypes = [vp, ctypes.c_char_p, i32, ctypes.c_void_p, ctypes.c_int, ctypes.c_int]
        lib.opus_strerror.restype = ctypes.c_char_p
        lib.opus_get_version_string.restype = ctypes.c_char_p
        _lib = lib
        return lib


def opus_available() -> bool:
    try:
        _load_libopus()
    except CodecError:
        return False
    return True


def opus_version() -> str:
    return _load_libopus().opus_get_version_string().decode()


class OpusCodec:
    """One encoder and one decoder state for a single stream.

    Not thread-safe; use one instance per stream direction.
    """

    codec_id = OPUS

    def __init__(self, cfg: CodecConfig | None = None):
        self.cfg = cfg or CodecConfig()
        self._lib = _load_libopus()
        err = ctypes.c_int()
        self._enc = self._lib.opus_encoder_create(
            self.cfg.sample_rate_hz, self.cfg.channels, APPLICATIONS[self.cfg.application], ctypes.byref(err)
        )
        self._check(err.value, "encoder create")
        self._dec = self._lib.opus_decoder_create(self.cfg.sample_rate_hz, self.cfg.channels, ctypes.byref(err))
        self._check(err.value, "decoder create")
        self._ctl(OPUS_SET_BITRATE_REQUEST, self.cfg.target_bitrate_bps)
        self._ctl(OPUS_SET_VBR_REQUEST, 1 if self.cfg.mode == "vbr" else 0)
        self._ctl(OPUS_SET_COMPLEXITY_REQUEST, self.cfg.complexity)
        self._ctl(OPUS_SET_SIGNAL_REQUEST, OPUS_SIGNAL_VOICE)
        self._out = ctypes.create_string_buffer(MAX_OPUS_PACKET)
        self._pcm = np.zeros(self.cfg.frame_samples, dtype="<i2")

    def _check(self, code: int, what: str) -> None:
        if code < 0:
            raise CodecError(f"opus {what} failed: {self._lib.opus_strerror(code).decode()}")

    def _ctl(self, request: int, value: int) -> None:
        self._check(self._lib.opus_encoder_ctl(self._enc, request, value), f"ctl {request}")

    def encode(self, frame: AudioFrame) -> EncodedFrame:
        require_frame(frame, PIPELINE_FRAME_SAMPLES, PIPELINE_RATE)
        pcm = np.ascontiguousarray(frame.samples, dtype="<i2")
        n = self._lib.opus_encode(self._enc, pcm.ctypes.data, len(pcm), self._out, MAX_OPUS_PACKET)
        self._check(n, "encode")
        return EncodedFrame(self._out.raw[:n], OPUS)

    def decode(self, enc: EncodedFrame | bytes | None) -> AudioFrame:
        """Decode one payload; ``None`` runs packet-loss concealment."""
        data = None if enc is None else _payload(enc, OPUS)
        n = self._lib.opus_decode(
            self._dec, data, 0 if data is None else len(data), self._pcm.ctypes.data, len(self._pcm), 0
        )
        self._check(n, "decode")
        if n != len(self._pcm):
            raise CodecError(f"opus decoded {n} samples, expected {len(self._pcm)}")
        return AudioFrame(self._pcm.astype(np.int16))

    def conceal(self) -> AudioFrame:
        return self.decode(None)

    def close(self) -> None:
        if self._enc:
            self._lib.opus_encoder_destroy(self._enc)
            self._enc = None
        if self._dec:
            self._lib.opus_decoder_destroy(self._dec)
            self._dec = None

    def __del__(self) -> None:
        try:
            self.close()
        except Exception:
            pass


def make_codec(cfg: CodecConfig) -> Codec:
    if cfg.codec == PASSTHROUGH:
        return PassthroughCodec(cfg)
    return OpusCodec(cfg)
