"""Flat ``key = value`` configuration with section prefixes.

Each subcommand owns a section (``client.``, ``server.``, ``eval.``). Keys
inside a section map one-to-one to CLI flags: ``client.codec.bitrate`` in a
file is ``--codec.bitrate`` on the command line. Precedence is defaults,
then file, then flags.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Sequence

from .errors import ConfigError

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in _TRUE:
        return True
    if low in _FALSE:
        return False
    raise ConfigError(f"expected a boolean (on/off), got {text!r}")


@dataclass(frozen=True)
class Option:
    key: str
    type: Callable[[str], Any]
    default: Any
    help: str
    choices: Sequence[str] | None = None

    @property
    def is_bool(self) -> bool:
        return self.type is parse_bool

    def convert(self, raw: str) -> Any:
        if self.choices is not None and raw not in self.choices:
            raise ConfigError(f"{self.key}: {raw!r} is not one of {list(self.choices)}")
        try:
            return self.type(raw)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{self.key}: bad value {raw!r}: {exc}") from None


def read_config_file(path: str | Path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment line."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    out: dict[str, str] = {}
    for n, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{path}:{n}: expected 'key = value'")
        out[key.strip()] = value.strip()
    return out


def resolve(
    options: Sequence[Option],
    section: str,
    file_values: dict[str, str] | None = None,
    flag_values: dict[str, str | None] | None = None,
) -> dict[str, Any]:
    """Merge defaults < file < flags for one section and convert types."""
    table = {o.key: o for o in options}
    values = {o.key: o.default for o in options}
    prefix = section + "."
    for full_key, raw in (file_values or {}).items():
        if not full_key.startswith(prefix):
            continue
        key = full_key[len(prefix):]
        if key not in table:
            raise ConfigError(f"unknown config key {full_key!r}")
        values[key] = table[key].convert(raw)
    for key, raw in (flag_values or {}).items():
        if raw is None:
            continue
        if key not in table:
            raise ConfigError(f"unknown option --{key}")
        values[key] = table[key].convert(raw)
    return values


def echo(section: str, values: dict[str, Any]) -> str:
    return "\n".join(f"{section}.{k} = {values[k]}" for k in sorted(values))


def _str(text: str) -> str:
    return text


CODEC_OPTIONS = [
    Option("codec", _str, "opus", "codec for both directions", ("opus", "passthrough")),
    Option("codec.bitrate", int, 24000, "target bitrate in bit/s"),
    Option("codec.mode", _str, "vbr", "rate control", ("vbr", "cbr")),
    Option("codec.application", _str, "lowdelay", "opus application profile", ("lowdelay", "voip", "audio")),
    Option("codec.complexity", int, 10, "opus encoder complexity 0-10"),
]

CLIENT_OPTIONS = [
    Option("source", _str, "mic", "capture source: 'mic' or a 16 kHz mono WAV path"),
    Option("sink", _str, "none", "playback sink: 'none', 'speaker' or a WAV path"),
    Option("server", _str, "127.0.0.1:5004", "server RTP address host:port"),
    Option("local-host", _str, "0.0.0.0", "local bind address"),
    Option("local-port", int, 0, "local RTP port (0 = any)"),
    Option("seed", int, 0, "seed for RTP sequence/timestamp/SSRC"),
    Option("payload-type", _str, "auto", "RTP payload type or 'auto' (111 opus, 96 passthrough)"),
    Option("jitter-depth", int, 3, "jitter buffer depth in frames"),
    Option("realtime", parse_bool, True, "pace sending at 20 ms"),
    Option("linger-ms", int, 1500, "keep receiving this long after the source ends"),
    Option("drc", parse_bool, True, "enable dynamic range compression"),
    Option("drc.threshold", float, -10.0, "compression threshold in dBFS"),
    Option("drc.ratio", float, 2.0, "compression ratio"),
    Option("denoiser", _str, "gate", "denoiser behind the 48 kHz wrapper", ("none", "identity", "gate")),
    Option("denoiser.floor", float, -45.0, "noise-gate floor in dBFS"),
    Option("probe.threshold", float, -40.0, "voiced-frame level for delay probes in dBFS"),
    Option("report.bitrate-csv", _str, "", "write per-second upload bitrate CSV here"),
    *CODEC_OPTIONS,
]

SERVER_OPTIONS = [
    Option("listen", _str, "0.0.0.0:5004", "RTP listen address host:port"),
    Option("backends", _str, "", "'mock:<file>' or 'http:<base-url>'"),
    Option("client", _str, "", "reply address host:port (default: learn from first packet)"),
    Option("seed", int, 1, "seed for RTP sequence/timestamp/SSRC"),
    Option("payload-type", _str, "auto", "RTP payload type or 'auto'"),
    Option("jitter-depth", int, 3, "jitter buffer depth in frames"),
    Option("vad.threshold", float, -40.0, "energy VAD threshold in dBFS"),
    Option("vad.hangover", int, 0, "energy VAD hangover in 32 ms frames"),
    Option("eoq.silence-ms", int, 1200, "trailing silence that ends a query"),
    Option("eoq.max-segment-ms", int, 30000, "longest segment before a forced end of query"),
    Option("record", _str, "", "write received PCM to this WAV on exit"),
    Option("run-seconds", float, 0.0, "stop after this many seconds (0 = run until interrupted)"),
    *CODEC_OPTIONS,
]

EVAL_OPTIONS = [
    Option("normalize", parse_bool, True, "apply Unicode NFC normalization"),
    Option("punctuation", parse_bool, True, "remove punctuation"),
    Option("cer.spaces", parse_bool, True, "count single spaces as characters in CER"),
    Option("matrix", parse_bool, False, "evaluate all four normalization/punctuation combinations"),
    Option("histogram", _str, "", "write the normalized Levenshtein histogram CSV here"),
]
