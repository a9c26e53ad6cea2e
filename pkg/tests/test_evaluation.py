import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from banglatalk.errors import ManifestError
from banglatalk.evaluation import (
    EditCounts,
    EvalRecord,
    ProcessingConfig,
    UndefinedRateError,
    align,
    cer,
    edit_distance,
    evaluate_manifest,
    evaluate_records,
    histogram,
    normalized_levenshtein,
    process_text,
    read_manifest,
    remove_punctuation,
    wer,
)
from oracles import optimal_triples


def write_manifest(path, rows, header="id\tregion\treference\thypothesis"):
    path.write_text("\n".join([header, *("\t".join(r) for r in rows)]) + "\n", encoding="utf-8")
    return path


class TestAlignment:
    def test_goldens(self):
        assert wer("a b c", "a x c").rate == pytest.approx(1 / 3)
        assert cer("ab", "ba").rate == 1.0
        assert cer("abcd", "abc").rate == 0.25
        assert wer("a b", "").counts == EditCounts(0, 2, 0, 2)
        assert wer("a", "a b c").counts == EditCounts(0, 0, 2, 1)

    def test_empty_reference(self):
        with pytest.raises(UndefinedRateError):
            wer("", "a")
        with pytest.raises(UndefinedRateError):
            cer("   ", "a")

    def test_oracle_on_random_pairs(self):
        r = random.Random(11)
        for _ in range(1000):
            ref = [r.choice("abc") for _ in range(r.randint(0, 6))]
            hyp = [r.choice("abc") for _ in range(r.randint(0, 6))]
            cost, triples = optimal_triples(ref, hyp)
            c = align(ref, hyp)
            assert c.errors == cost == edit_distance(ref, hyp)
            assert (c.substitutions, c.deletions, c.insertions) in triples

    def test_tie_break_prefers_substitution(self):
        assert align("ab", "ba") == EditCounts(2, 0, 0, 2)

    def test_whitespace_collapsed(self):
        assert cer("a  b", "a b").rate == 0
        assert cer("a b", "ab", keep_spaces=False).rate == 0
        assert cer("a b", "ab").counts.reference_length == 3

    @given(st.lists(st.sampled_from(["ক", "খ", "গ", "ঘ"]), min_size=1, max_size=8),
           st.lists(st.sampled_from(["ক", "খ", "গ", "ঘ"]), max_size=8))
    def test_wer_invariant_under_punctuation_removal(self, ref, hyp):
        # The same punctuation appended to every word does not change WER.
        a = wer(" ".join(ref), " ".join(hyp)).rate
        b = wer(remove_punctuation(" ".join(w + "।" for w in ref)), remove_punctuation(" ".join(w + "।" for w in hyp))).rate
        assert a == b

    @given(st.text(alphabet="abc ", max_size=10), st.text(alphabet="abc ", max_size=10))
    def test_levenshtein_range(self, a, b):
        v = normalized_levenshtein(a, b)
        assert 0 <= v <= 1
        assert (v == 0) == (a == b)


class TestProcessing:
    def test_nfc(self):
        decomposed = "ো"  # e-kar + aa-kar composes to o-kar
        assert process_text(decomposed, ProcessingConfig(True, False)) == "ো"
        assert process_text(decomposed, ProcessingConfig(False, False)) == decomposed

    def test_punctuation(self):
        assert remove_punctuation("আমি, ভালো । আছি!") == "আমি ভালো আছি"

    def test_matrix(self):
        m = ProcessingConfig.matrix()
        assert len(m) == 4 and len(set(m)) == 4

    def test_histogram(self):
        h = histogram([0.0, 0.049, 0.05, 1.0])
        assert len(h) == 20 and h[0] == 2 and h[1] == 1 and h[19] == 1


class TestManifest:
    def test_corpus_wer_sums_counts(self, tmp_path):
        p = write_manifest(tmp_path / "m.tsv", [
            ("1", "dhaka", "a b c d", "a b c d"),
            ("2", "sylhet", "a b c d e f", "a x c d e"),
        ])
        rep = evaluate_manifest(p, ProcessingConfig(False, False))
        assert rep.wer == pytest.approx(0.2)
        assert rep.region_wer == {"dhaka": 0.0, "sylhet": pytest.approx(2 / 6)}

    def test_malformed_rows_counted(self, tmp_path):
        p = write_manifest(tmp_path / "m.tsv", [("1", "r", "a", "a"), ("2", "r", "only three")])
        assert read_manifest(p).malformed == 1
        assert evaluate_manifest(p).malformed == 1

    def test_empty_reference_excluded(self):
        rep = evaluate_records([EvalRecord("1", "r", "a b", "a b"), EvalRecord("2", "r", "।", "x")])
        assert rep.excluded_empty == 1 and rep.records == 1

    def test_empty_and_missing(self, tmp_path):
        (tmp_path / "e.tsv").write_text("")
        with pytest.raises(ManifestError):
            read_manifest(tmp_path / "e.tsv")
        with pytest.raises(ManifestError):
            read_manifest(tmp_path / "missing.tsv")
        with pytest.raises(ManifestError):
            write_manifest(tmp_path / "h.tsv", [("a", "b")], header="x\ty")
            read_manifest(tmp_path / "h.tsv")

    def test_report_formats(self, tmp_path):
        p = write_manifest(tmp_path / "m.tsv", [("1", "r", "a b", "a c")])
        rep = evaluate_manifest(p)
        assert "wer,norm=1;punct=1,0.500000" in rep.format_lines()
        assert rep.histogram_csv().splitlines()[0] == "bin_start,bin_end,count"
        assert "WER" in rep.format_table()
