from __future__ import annotations

import json
import math
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from unitforge.corpus import Manifest, Utterance
from unitforge.evalbleu import (
    BleuError, TokenizedCorpus, asr_bleu, corpus_bleu,
    tailo_digit_form, tailo_split_syllable, tokenize, tokenize_corpus,
)

DATA = Path(__file__).parent / "data"


class TestWord13a:
    def test_punctuation_split(self):
        assert tokenize("Hello, world!", "word13a") == ["Hello", ",", "world", "!"]

    def test_matches_reference_fixture_byte_for_byte(self):
        # expected file produced by the standard BLEU tool's 13a tokenizer
        inputs = (DATA / "tok13a_input.txt").read_text(encoding="utf-8").splitlines()
        expected = (DATA / "tok13a_expected.txt").read_text(encoding="utf-8").splitlines()
        assert len(inputs) == 50
        for line, exp in zip(inputs, expected):
            assert " ".join(tokenize(line, "word13a")) == exp


class TestCharTokenizer:
    def test_cjk(self):
        assert tokenize("你好", "char") == ["你", "好"]

    def test_spaces_dropped(self):
        assert tokenize("a b  c", "char") == ["a", "b", "c"]


class TestTailoTokenizers:
    def test_syllable_split(self):
        assert tokenize("tai5-lo5 su1", "tailo_syllable") == ["tai5", "lo5", "su1"]

    def test_diacritics_become_digits(self):
        assert tailo_digit_form("tâi") == "tai5"
        assert tailo_digit_form("lô") == "lo5"
        assert tailo_digit_form("pōng") == "pong7"
        assert tailo_digit_form("ta̍k") == "tak8"
        assert tokenize("Tâi-lô", "tailo_syllable") == ["tai5", "lo5"]

    def test_initial_final_tokens(self):
        assert tokenize("tai5-lo5 su1", "tailo_initial_final") == \
            ["t", "ai5", "l", "o5", "s", "u1"]

    def test_null_initial_yields_single_token(self):
        assert tokenize("ang5", "tailo_initial_final") == ["ang5"]

    def test_unknown_scheme(self):
        with pytest.raises(BleuError):
            tokenize("x", "word14b")


# representative finals, including vowel-less syllabic nasals
TAILO_FINALS = [
    "a", "ah", "ai", "ainn", "ak", "am", "an", "ang", "ann", "ap", "at", "au",
    "e", "eh", "enn", "i", "ia", "iah", "iam", "ian", "iang", "iann", "iap",
    "iat", "iau", "ik", "im", "in", "ing", "io", "ioh", "iok", "iong", "ip",
    "it", "iu", "iunn", "m", "mh", "ng", "ngh", "o", "oh", "ok", "ong", "oo",
    "op", "u", "ua", "uah", "uai", "uan", "uang", "uann", "uat", "ue", "ueh",
    "uh", "ui", "un", "ut",
]
TAILO_INITIALS_ALL = ["", "p", "ph", "m", "b", "t", "th", "n", "l",
                      "k", "kh", "ng", "g", "h", "ts", "tsh", "s", "j"]


class TestTailoSplit:
    @pytest.mark.parametrize("syllable,expected", [
        ("tsa1", ("ts", "a1")),       # longest match beats "t"
        ("ang5", ("", "ang5")),       # vowel onset
        ("khoo2", ("kh", "oo2")),     # longest match beats "k"
        ("ng", ("", "ng")),           # bare syllabic nasal
        ("m7", ("", "m7")),
        ("png7", ("p", "ng7")),       # consonant + syllabic nasal final
        ("mng5", ("m", "ng5")),
        ("khng3", ("kh", "ng3")),
        ("ngoo2", ("ng", "oo2")),
        ("tshiah4", ("tsh", "iah4")),
        ("ji7", ("j", "i7")),
        ("goa5", ("g", "oa5")),
    ])
    def test_known_splits(self, syllable, expected):
        assert tailo_split_syllable(syllable) == expected

    def test_case_folding(self):
        assert tailo_split_syllable("Tsa1") == ("ts", "a1")

    def test_empty_rejected(self):
        with pytest.raises(BleuError):
            tailo_split_syllable("")

    def test_round_trip_exhaustive_inventory(self):
        # every initial x final x tone recombination must round-trip
        for initial in TAILO_INITIALS_ALL:
            for final in TAILO_FINALS:
                for tone in ("", "1", "2", "3", "4", "5", "6", "7", "8", "9"):
                    syllable = initial + final + tone
                    got_initial, got_final = tailo_split_syllable(syllable)
                    assert got_initial + got_final == syllable, syllable
                    assert got_final, syllable


def corp(lines, scheme="word13a"):
    return tokenize_corpus(lines, scheme)


class TestCorpusBleu:
    def test_identity_is_100(self):
        refs = corp(["the cat sat on the mat", "a longer second sentence here"])
        report = corpus_bleu(refs, refs)
        assert report.bleu == pytest.approx(100.0)
        assert report.brevity_penalty == 1.0
        assert report.precisions == (1.0, 1.0, 1.0, 1.0)

    def test_zero_fourgram_matches_is_zero(self):
        report = corpus_bleu(corp(["a b c d e"]), corp(["a b x d e"]))
        assert report.precisions[3] == 0.0
        assert report.bleu == 0.0

    def test_matches_reference_tool_fixtures(self):
        cases = json.loads((DATA / "bleu_cases.json").read_text(encoding="utf-8"))
        assert len(cases) == 20
        for case in cases:
            hyps = corp(case["hyps"])
            refs = corp(case["refs"])
            for method in ("none", "exp"):
                report = corpus_bleu(hyps, refs, smoothing=method)
                assert report.bleu == pytest.approx(case[f"score_{method}"], abs=0.01), \
                    (case["name"], method)
            report = corpus_bleu(hyps, refs)
            assert report.hyp_len == case["sys_len"]
            assert report.ref_len == case["ref_len"]
            assert report.brevity_penalty == pytest.approx(case["bp"], abs=1e-9)

    def test_segment_count_mismatch(self):
        with pytest.raises(BleuError, match="mismatch"):
            corpus_bleu(corp(["a"]), corp(["a", "b"]))

    def test_empty_corpus(self):
        with pytest.raises(BleuError, match="empty"):
            corpus_bleu(corp([]), corp([]))

    def test_tokenizer_tag_mismatch(self):
        with pytest.raises(BleuError, match="tokenizer"):
            corpus_bleu(corp(["a"]), corp(["a"], scheme="char"))

    def test_reordering_invariance(self):
        hyps = ["the cat sat", "dogs bark at night", "rain falls today"]
        refs = ["the cat sat down", "dogs bark at night", "rain fell today"]
        base = corpus_bleu(corp(hyps), corp(refs))
        flipped = corpus_bleu(corp(hyps[::-1]), corp(refs[::-1]))
        assert flipped.bleu == pytest.approx(base.bleu, abs=1e-12)

    @given(st.lists(
        st.tuples(st.lists(st.sampled_from("abcde"), min_size=1, max_size=8),
                  st.lists(st.sampled_from("abcde"), min_size=1, max_size=8)),
        min_size=1, max_size=6))
    def test_range_and_identity_characterization(self, segs):
        hyps = TokenizedCorpus(tuple(tuple(h) for h, _ in segs), "char")
        refs = TokenizedCorpus(tuple(tuple(r) for _, r in segs), "char")
        report = corpus_bleu(hyps, refs)
        assert 0.0 <= report.bleu <= 100.0 + 1e-9
        if report.bleu == pytest.approx(100.0, abs=1e-9):
            assert hyps.segments == refs.segments

    def test_bp_formula(self):
        report = corpus_bleu(corp(["a b c d e"]), corp(["a b c d e f g"]))
        assert report.brevity_penalty == pytest.approx(math.exp(1 - 7 / 5))


class TableAsr:
    """Test double: fixed audio_ref -> transcript mapping."""

    def __init__(self, table):
        self.table = table

    def run(self, inputs):
        return [self.table[x] for x in inputs]


def manifest_pair(texts, transcripts=None):
    gen = Manifest(records=tuple(
        Utterance(id=f"u{i}", audio_ref=f"wav/{i}.wav") for i in range(len(texts))))
    ref = Manifest(records=tuple(
        Utterance(id=f"u{i}", text=t) for i, t in enumerate(texts)))
    table = {f"wav/{i}.wav": (transcripts or texts)[i] for i in range(len(texts))}
    return gen, ref, TableAsr(table)


class TestAsrBleu:
    def test_oracle_asr_scores_100(self):
        gen, ref, asr = manifest_pair(["the cat sat on the mat", "a second sentence here"])
        assert asr_bleu(gen, ref, asr, scheme="word13a").bleu == pytest.approx(100.0)

    def test_empty_transcripts_score_zero(self):
        texts = ["the cat sat on the mat", "a second sentence here"]
        gen, ref, asr = manifest_pair(texts, transcripts=["", ""])
        assert asr_bleu(gen, ref, asr, scheme="word13a").bleu == 0.0

    def test_pipeline_equals_direct_composition(self):
        texts = [f"sentence number {i} with shared words" for i in range(10)]
        transcripts = list(texts)
        transcripts[4] = "sentence count 4 with shared words"
        gen, ref, asr = manifest_pair(texts, transcripts)
        via_pipeline = asr_bleu(gen, ref, asr, scheme="word13a")
        direct = corpus_bleu(corp(transcripts), corp(texts))
        assert via_pipeline.bleu == pytest.approx(direct.bleu, abs=1e-9)
        assert via_pipeline.precisions == direct.precisions

    def test_id_misalignment(self):
        gen, ref, asr = manifest_pair(["a b c"])
        other = Manifest(records=(Utterance(id="different", text="a b c"),))
        with pytest.raises(BleuError, match="align"):
            asr_bleu(gen, other, asr, scheme="word13a")

    def test_order_independent(self):
        texts = ["first sentence here", "second sentence there", "third sentence gone"]
        gen, ref, asr = manifest_pair(texts)
        shuffled = Manifest(records=ref.records[::-1])
        a = asr_bleu(gen, ref, asr, scheme="word13a")
        b = asr_bleu(gen, shuffled, asr, scheme="word13a")
        assert a == b
