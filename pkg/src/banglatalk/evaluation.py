"""ASR evaluation: WER, CER, normalized Levenshtein and manifest reports."""

from __future__ import annotations

import csv
import io
import itertools
import math
import unicodedata
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .errors import ManifestError

DEFAULT_PUNCTUATION = frozenset("।॥.,;:!?\"'()-…|")
MANIFEST_COLUMNS = ("id", "region", "reference", "hypothesis")
HISTOGRAM_BIN = 0.05


class UndefinedRateError(ValueError):
    """Error rate requested for an empty reference."""


@dataclass(frozen=True)
class EditCounts:
    substitutions: int = 0
    deletions: int = 0
    insertions: int = 0
    reference_length: int = 0

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def rate(self) -> float:
        if self.reference_length == 0:
            raise UndefinedRateError("error rate undefined for an empty reference")
        return self.errors / self.reference_length

    def __add__(self, other: EditCounts) -> EditCounts:
        return EditCounts(
            self.substitutions + other.substitutions,
            self.deletions + other.deletions,
            self.insertions + other.insertions,
            self.reference_length + other.reference_length,
        )


def edit_distance(ref: Sequence, hyp: Sequence) -> int:
    """Plain Levenshtein distance with unit costs."""
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, 1):
        cur = [i] + [0] * len(hyp)
        for j, h in enumerate(hyp, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (r != h))
        prev = cur
    return prev[-1]


def align(ref: Sequence, hyp: Sequence) -> EditCounts:
    """S/D/I counts from one minimum-cost alignment.

    On ties the backtrace prefers a diagonal step (match or substitution),
    then deletion, then insertion. The total is always the edit distance.
    """
    n, m = len(ref), len(hyp)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        d[i][0] = i
    for j in range(m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        ri = ref[i - 1]
        row, up = d[i], d[i - 1]
        for j in range(1, m + 1):
            row[j] = min(up[j] + 1, row[j - 1] + 1, up[j - 1] + (ri != hyp[j - 1]))
    s = dl = ins = 0
    i, j = n, m
    while i or j:
        if i and j and d[i][j] == d[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            s += ref[i - 1] != hyp[j - 1]
            i, j = i - 1, j - 1
        elif i and d[i][j] == d[i - 1][j] + 1:
            dl += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return EditCounts(s, dl, ins, n)


@dataclass(frozen=True)
class ErrorRate:
    rate: float
    counts: EditCounts


def _collapse_spaces(text: str) -> str:
    return " ".join(text.split())


def wer(reference: str, hypothesis: str) -> ErrorRate:
    ref, hyp = reference.split(), hypothesis.split()
    if not ref:
        raise UndefinedRateError("WER needs at least one reference word")
    counts = align(ref, hyp)
    return ErrorRate(counts.rate, counts)


def cer(reference: str, hypothesis: str, keep_spaces: bool = True) -> ErrorRate:
    """Character error rate on whitespace-collapsed text.

    Single spaces count as characters unless ``keep_spaces`` is false.
    """
    ref, hyp = _collapse_spaces(reference), _collapse_spaces(hypothesis)
    if not keep_spaces:
        ref, hyp = ref.replace(" ", ""), hyp.replace(" ", "")
    if not ref:
        raise UndefinedRateError("CER needs at least one reference character")
    counts = align(ref, hyp)
    return ErrorRate(counts.rate, counts)


def normalized_levenshtein(reference: str, hypothesis: str) -> float:
    longest = max(len(reference), len(hypothesis))
    if longest == 0:
        return 0.0
    return edit_distance(reference, hypothesis) / longest


def remove_punctuation(text: str, punctuation: frozenset[str] = DEFAULT_PUNCTUATION) -> str:
    stripped = "".join(ch for ch in text if ch not in punctuation)
    return _collapse_spaces(stripped)


def nfc(text: str) -> str:
    return unicodedata.normalize("NFC", text)


def normalize(text: str, normalizer: Callable[[str], str] | None = None) -> str:
    return (normalizer or nfc)(text)


@dataclass(frozen=True)
class ProcessingConfig:
    normalize: bool = True
    remove_punctuation: bool = True
    cer_keep_spaces: bool = True

    @property
    def label(self) -> str:
        return f"norm={'on' if self.normalize else 'off'} punct={'removed' if self.remove_punctuation else 'kept'}"

    @classmethod
    def matrix(cls, cer_keep_spaces: bool = True) -> list[ProcessingConfig]:
        return [cls(n, p, cer_keep_spaces) for n, p in itertools.product((False, True), repeat=2)]


def process_text(
    text: str,
    cfg: ProcessingConfig,
    normalizer: Callable[[str], str] | None = None,
    punctuation: frozenset[str] = DEFAULT_PUNCTUATION,
) -> str:
    if cfg.normalize:
        text = normalize(text, normalizer)
    if cfg.remove_punctuation:
        text = remove_punctuation(text, punctuation)
    return _collapse_spaces(text)


@dataclass(frozen=True)
class EvalRecord:
    id: str
    region: str
    reference: str
    hypothesis: str


@dataclass
class Manifest:
    records: list[EvalRecord]
    malformed: int = 0


def read_manifest(path: str | Path) -> Manifest:
    """Read a UTF-8 TSV with header ``id region reference hypothesis``.

    Rows with the wrong number of fields are skipped and counted.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ManifestError(f"manifest not found: {path}") from exc
    rows = list(csv.reader(io.StringIO(text), delimiter="\t", quoting=csv.QUOTE_NONE))
    rows = [r for r in rows if r]
    if not rows:
        raise ManifestError(f"{path}: empty manifest")
    header = [c.strip().lower() for c in rows[0]]
    missing = [c for c in MANIFEST_COLUMNS if c not in header]
    if missing:
        raise ManifestError(f"{path}: header lacks columns {missing}")
    pos = {c: header.index(c) for c in MANIFEST_COLUMNS}
    records, bad = [], 0
    for row in rows[1:]:
        if len(row) != len(header):
            bad += 1
            continue
        records.append(EvalRecord(**{c: row[pos[c]] for c in MANIFEST_COLUMNS}))
    if not records:
        raise ManifestError(f"{path}: no usable rows ({bad} malformed)")
    return Manifest(records, bad)


@dataclass
class EvalReport:
    config: ProcessingConfig
    word_counts: EditCounts
    char_counts: EditCounts
    region_counts: dict[str, EditCounts]
    levenshtein: list[float]
    records: int
    excluded_empty: int = 0
    malformed: int = 0
    histogram: list[int] = field(default_factory=list)

    @property
    def wer(self) -> float:
        return self.word_counts.rate

    @property
    def cer(self) -> float:
        return self.char_counts.rate

    @property
    def region_wer(self) -> dict[str, float]:
        return {k: v.rate for k, v in sorted(self.region_counts.items())}

    @property
    def mean_levenshtein(self) -> float:
        return sum(self.levenshtein) / len(self.levenshtein) if self.levenshtein else math.nan

    def histogram_csv(self) -> str:
        lines = ["bin_start,bin_end,count"]
        for i, c in enumerate(self.histogram):
            lines.append(f"{i * HISTOGRAM_BIN:.2f},{(i + 1) * HISTOGRAM_BIN:.2f},{c}")
        return "\n".join(lines) + "\n"

    def format_table(self) -> str:
        w, c = self.word_counts, self.char_counts
        lines = [
            f"config      {self.config.label}",
            f"records     {self.records} (excluded empty {self.excluded_empty}, malformed {self.malformed})",
            f"WER         {self.wer:.4f}  (S={w.substitutions} D={w.deletions} I={w.insertions} N={w.reference_length})",
            f"CER         {self.cer:.4f}  (S={c.substitutions} D={c.deletions} I={c.insertions} N={c.reference_length})",
            f"Levenshtein {self.mean_levenshtein:.4f} (mean normalized)",
            "",
            f"{'region':<20}{'WER':>8}{'N':>8}",
        ]
        for region, counts in sorted(self.region_counts.items()):
            lines.append(f"{region:<20}{counts.rate:>8.4f}{counts.reference_length:>8}")
        return "\n".join(lines)

    def format_lines(self) -> str:
        tag = f"norm={int(self.config.normalize)};punct={int(self.config.remove_punctuation)}"
        out = [
            f"wer,{tag},{self.wer:.6f}",
            f"cer,{tag},{self.cer:.6f}",
            f"levenshtein_mean,{tag},{self.mean_levenshtein:.6f}",
        ]
        out += [f"region_wer,{region},{rate:.6f}" for region, rate in self.region_wer.items()]
        return "\n".join(out)


def histogram(values: Sequence[float], bin_width: float = HISTOGRAM_BIN) -> list[int]:
    nbins = round(1 / bin_width)
    counts = [0] * nbins
    for v in values:
        counts[min(int(v / bin_width + 1e-9), nbins - 1)] += 1
    return counts


def evaluate_records(
    records: Sequence[EvalRecord],
    cfg: ProcessingConfig = ProcessingConfig(),
    normalizer: Callable[[str], str] | None = None,
    punctuation: frozenset[str] = DEFAULT_PUNCTUATION,
) -> EvalReport:
    """Corpus WER/CER from summed edit counts, plus per-region WER."""
    words, chars = EditCounts(), EditCounts()
    regions: dict[str, EditCounts] = defaultdict(EditCounts)
    lev: list[float] = []
    excluded = 0
    for rec in records:
        ref = process_text(rec.reference, cfg, normalizer, punctuation)
        hyp = process_text(rec.hypothesis, cfg, normalizer, punctuation)
        if not ref.split():
            excluded += 1
            continue
        wc = wer(ref, hyp).counts
        words += wc
        regions[rec.region] += wc
        chars += cer(ref, hyp, cfg.cer_keep_spaces).counts
        lev.append(normalized_levenshtein(ref, hyp))
    if words.reference_length == 0:
        raise ManifestError("no record has a nonempty reference after processing")
    return EvalReport(cfg, words, chars, dict(regions), lev, len(lev), excluded, histogram=histogram(lev))


def evaluate_manifest(path: str | Path, cfg: ProcessingConfig = ProcessingConfig(), **kwargs) -> EvalReport:
    manifest = read_manifest(path)
    report = evaluate_records(manifest.records, cfg, **kwargs)
    report.malformed = manifest.malformed
    return report
