"""Command-line entry points: ``client``, ``server`` and ``eval``.

Exit codes: 0 ok, 2 usage/config error, 3 environment/transport error.
Logs go to stderr, reports to stdout.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .audio import AudioFormatError
from .backends import HttpAsr, HttpLlm, HttpTts, load_mock_config
from .codec import CodecConfig
from .config import CLIENT_OPTIONS, EVAL_OPTIONS, SERVER_OPTIONS, Option, echo, read_config_file, resolve
from .dsp import DrcConfig
from .errors import BanglaTalkError, CodecError, ConfigError, ManifestError, ParameterError, TransportError
from .evaluation import ProcessingConfig, evaluate_manifest
from .pipeline import ClientConfig, ServerConfig, Server, parse_address, run_client
from .segmenter import EoqConfig

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_ENV = 3

log = logging.getLogger("banglatalk")


def _add_options(parser: argparse.ArgumentParser, options: Sequence[Option]) -> None:
    for opt in options:
        kwargs = {"dest": opt.key, "default": None, "metavar": "VALUE", "help": f"{opt.help} (default: {opt.default})"}
        if opt.is_bool:
            kwargs.update(nargs="?", const="on", metavar="on|off")
        parser.add_argument(f"--{opt.key}", **kwargs)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="banglatalk", description="Real-time speech assistant client, server and ASR evaluation.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, options, help_text in (
        ("client", CLIENT_OPTIONS, "stream audio to a server and play the response"),
        ("server", SERVER_OPTIONS, "run the speech-assistant session server"),
        ("eval", EVAL_OPTIONS, "score ASR hypotheses from a TSV manifest"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("-v", "--verbose", action="count", default=0)
        if name == "eval":
            p.add_argument("manifest", help="TSV with columns id, region, reference, hypothesis")
        _add_options(p, options)
    return parser


def _setup_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _values(args: argparse.Namespace, section: str, options: Sequence[Option]) -> dict:
    file_values = read_config_file(args.config) if args.config else {}
    flags = {o.key: getattr(args, o.key) for o in options}
    values = resolve(options, section, file_values, flags)
    print(echo(section, values), file=sys.stderr)
    return values


def _payload_type(raw: str) -> int | None:
    if raw == "auto":
        return None
    try:
        pt = int(raw)
    except ValueError:
        raise ConfigError(f"payload-type must be an integer or 'auto', got {raw!r}") from None
    if not 0 <= pt < 128:
        raise ConfigError(f"payload-type {pt} does not fit 7 bits")
    return pt


def _codec(v: dict) -> CodecConfig:
    return CodecConfig(
        codec=v["codec"],
        target_bitrate_bps=v["codec.bitrate"],
        mode=v["codec.mode"],
        application=v["codec.application"],
        complexity=v["codec.complexity"],
    )


def client_config(v: dict) -> ClientConfig:
    return ClientConfig(
        source=v["source"],
        sink=None if v["sink"] == "none" else v["sink"],
        drc_enabled=v["drc"],
        drc=DrcConfig(v["drc.threshold"], v["drc.ratio"]),
        denoiser=v["denoiser"],
        gate_floor_dbfs=v["denoiser.floor"],
        codec=_codec(v),
        server=parse_address(v["server"]),
        local_host=v["local-host"],
        local_port=v["local-port"],
        seed=v["seed"],
        payload_type=_payload_type(v["payload-type"]),
        jitter_depth=v["jitter-depth"],
        realtime=v["realtime"],
        linger_ms=v["linger-ms"],
        probe_threshold_dbfs=v["probe.threshold"],
    )


def server_config(v: dict) -> ServerConfig:
    host, port = parse_address(v["listen"])
    return ServerConfig(
        host=host,
        port=port,
        codec=_codec(v),
        vad_threshold_dbfs=v["vad.threshold"],
        vad_hangover_frames=v["vad.hangover"],
        eoq=EoqConfig(v["eoq.silence-ms"], max_segment_ms=v["eoq.max-segment-ms"]),
        jitter_depth=v["jitter-depth"],
        seed=v["seed"],
        payload_type=_payload_type(v["payload-type"]),
        client=parse_address(v["client"]) if v["client"] else None,
        record=v["record"] or None,
    )


def load_backends(spec: str):
    kind, _, arg = spec.partition(":")
    if kind == "mock" and arg:
        mocks = load_mock_config(arg)
        return mocks.asr, mocks.llm, mocks.tts
    if kind == "http" and arg:
        base = arg.rstrip("/")
        return HttpAsr(base + "/asr"), HttpLlm(base + "/llm"), HttpTts(base + "/tts")
    raise ConfigError(f"backends must be 'mock:<file>' or 'http:<base-url>', got {spec!r}")


def cli_client(args: argparse.Namespace) -> int:
    v = _values(args, "client", CLIENT_OPTIONS)
    cfg = client_config(v)
    report = run_client(cfg)
    print(report.format())
    print(report.format_lines())
    if v["report.bitrate-csv"]:
        report.bitrate.to_csv(v["report.bitrate-csv"])
    return EXIT_OK


def cli_server(args: argparse.Namespace) -> int:
    v = _values(args, "server", SERVER_OPTIONS)
    if not v["backends"]:
        raise ConfigError("--backends is required")
    cfg = server_config(v)
    asr, llm, tts = load_backends(v["backends"])
    server = Server(cfg, asr, llm, tts).start()
    host, port = server.address
    log.warning("listening on %s:%d", host, port)
    try:
        server.serve(v["run-seconds"] or None)
    finally:
        server.stop()
    print(f"server,frames_received,{server.frames_in}")
    print(f"server,responses,{server.session.responses}")
    print(f"server,packets_sent,{server.packets_out}")
    return EXIT_OK


def cli_eval(args: argparse.Namespace) -> int:
    v = _values(args, "eval", EVAL_OPTIONS)
    if not Path(args.manifest).is_file():
        raise ManifestError(f"manifest not found: {args.manifest}")
    if v["matrix"]:
        configs = ProcessingConfig.matrix(v["cer.spaces"])
    else:
        configs = [ProcessingConfig(v["normalize"], v["punctuation"], v["cer.spaces"])]
    reports = [evaluate_manifest(args.manifest, cfg) for cfg in configs]
    if len(reports) > 1:
        print(f"{'normalize':<11}{'punctuation':<13}{'WER':>8}{'CER':>8}")
        for r in reports:
            print(f"{'on' if r.config.normalize else 'off':<11}{'removed' if r.config.remove_punctuation else 'kept':<13}{r.wer:>8.4f}{r.cer:>8.4f}")
        print()
    for r in reports:
        print(r.format_table())
        print(r.format_lines())
        print()
    if v["histogram"]:
        Path(v["histogram"]).write_text(reports[-1].histogram_csv())
    return EXIT_OK


COMMANDS = {"client": cli_client, "server": cli_server, "eval": cli_eval}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _setup_logging(args.verbose)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ParameterError, ManifestError, AudioFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TransportError, CodecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENV
    except BanglaTalkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def _entry(command: str) -> None:
    sys.exit(main([command, *sys.argv[1:]]))


def client_main() -> None:
    _entry("client")


def server_main() -> None:
    _entry("server")


def eval_main() -> None:
    _entry("eval")


if __name__ == "__main__":
    sys.exit(main())
