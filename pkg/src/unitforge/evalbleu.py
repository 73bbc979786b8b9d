"""Tokenizers and 4-gram corpus BLEU, plus the ASR-BLEU pipeline wrapper.

Four tokenization schemes are supported:

* ``word13a``: the mteval-v13a word tokenization used by the standard
  BLEU tooling (entity unescaping, punctuation splitting), reproduced
  rule for rule so scores are comparable with that tooling.
* ``char``: one token per non-space character.
* ``tailo_syllable``: Tai-lo romanized syllables, split on hyphens and
  whitespace; tone diacritics are converted to trailing tone digits.
* ``tailo_initial_final``: each syllable further split into its initial
  consonant and its final-with-tone, both emitted as tokens.

BLEU uses corpus-level modified n-gram precisions with clipping, a
geometric mean over orders 1..4 and the standard brevity penalty. The
default smoothing is none (any zero precision gives BLEU 0); NIST-style
exponential smoothing is available via ``smoothing="exp"``.
"""

from __future__ import annotations

import math
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus import Manifest

TOKENIZER_TAGS = ("word13a", "char", "tailo_syllable", "tailo_initial_final")


class BleuError(ValueError):
    pass


# --- word13a -----------------------------------------------------------------

_13A_RULES = (
    (re.compile(r"([\{-\~\[-\` -\&\(-\+\:-\@\/])"), r" \1 "),
    (re.compile(r"([^0-9])([\.,])"), r"\1 \2 "),
    (re.compile(r"([\.,])([^0-9])"), r" \1 \2"),
    (re.compile(r"([0-9])(-)"), r"\1 \2 "),
)


def _tokenize_13a(line: str) -> list[str]:
    norm = line.rstrip()
    norm = norm.replace("<skipped>", "")
    norm = norm.replace("-\n", "")
    norm = norm.replace("\n", " ")
    norm = norm.replace("&quot;", '"')
    norm = norm.replace("&amp;", "&")
    norm = norm.replace("&lt;", "<")
    norm = norm.replace("&gt;", ">")
    norm = f" {norm} "
    for pattern, repl in _13A_RULES:
        norm = pattern.sub(repl, norm)
    return norm.split()


# --- Tai-lo ------------------------------------------------------------------

# initial consonant inventory, longest-match first
TAILO_INITIALS = ("tsh", "kh", "ng", "ph", "th", "ts",
                  "b", "g", "h", "j", "k", "l", "m", "n", "p", "s", "t")

_TAILO_VOWELS = frozenset("aeiou")
# finals with no vowel: syllabic nasals, optionally with a glottal coda
_TAILO_NASAL_FINALS = frozenset({"m", "mh", "ng", "ngh"})

_TONE_MARKS = {
    "́": "2",  # acute
    "̀": "3",  # grave
    "̂": "5",  # circumflex
    "̌": "6",  # caron
    "̄": "7",  # macron
    "̍": "8",  # vertical line above
    "̋": "9",  # double acute
}

_SYLLABLE_SPLIT = re.compile(r"[\s\-]+")


def tailo_digit_form(syllable: str) -> str:
    """Normalize one syllable to lowercase digit-tone form.

    Tone diacritics are stripped and emitted as a trailing digit; an
    already-trailing digit wins over any diacritic.
    """
    decomposed = unicodedata.normalize("NFD", syllable.casefold())
    tone = ""
    kept = []
    for ch in decomposed:
        mark = _TONE_MARKS.get(ch)
        if mark is not None:
            tone = tone or mark
        else:
            kept.append(ch)
    body = unicodedata.normalize("NFC", "".join(kept))
    if body and body[-1].isdigit():
        return body
    return body + tone


def tailo_split_syllable(syllable: str) -> tuple[str, str]:
    """Split a Tai-lo syllable into (initial, final_with_tone).

    The initial is the longest inventory prefix that leaves a
    pronounceable final: one starting with a vowel, or a syllabic nasal
    (m/ng, optionally with -h). Vowel-onset syllables and bare syllabic
    nasals have an empty initial. Always ``initial + final == syllable``
    (after digit-form normalization).
    """
    if not syllable:
        raise BleuError("cannot split an empty syllable")
    norm = tailo_digit_form(syllable)
    body = norm[:-1] if norm and norm[-1].isdigit() else norm
    for initial in TAILO_INITIALS:
        if body.startswith(initial):
            rest = body[len(initial):]
            if rest and (rest[0] in _TAILO_VOWELS or rest in _TAILO_NASAL_FINALS):
                return initial, norm[len(initial):]
    return "", norm


# --- tokenization ------------------------------------------------------------

def _tokenize_tailo_syllables(text: str) -> list[str]:
    return [tailo_digit_form(tok) for tok in _SYLLABLE_SPLIT.split(text) if tok]


def tokenize(text: str, scheme: str) -> list[str]:
    """Tokenize one segment under the given scheme tag."""
    if scheme == "word13a":
        return _tokenize_13a(text)
    if scheme == "char":
        return [ch for ch in text if not ch.isspace()]
    if scheme == "tailo_syllable":
        return _tokenize_tailo_syllables(text)
    if scheme == "tailo_initial_final":
        tokens = []
        for syllable in _tokenize_tailo_syllables(text):
            initial, final = tailo_split_syllable(syllable)
            if initial:
                tokens.append(initial)
            tokens.append(final)
        return tokens
    raise BleuError(f"unknown tokenizer {scheme!r}; expected one of {TOKENIZER_TAGS}")


@dataclass(frozen=True)
class TokenizedCorpus:
    """Per-segment token lists plus the scheme that produced them."""

    segments: tuple[tuple[str, ...], ...]
    tokenizer_tag: str

    def __post_init__(self):
        if self.tokenizer_tag not in TOKENIZER_TAGS:
            raise BleuError(f"unknown tokenizer {self.tokenizer_tag!r}")
        object.__setattr__(self, "segments",
                           tuple(tuple(seg) for seg in self.segments))

    def __len__(self) -> int:
        return len(self.segments)


def tokenize_corpus(lines: Iterable[str], scheme: str) -> TokenizedCorpus:
    return TokenizedCorpus(
        segments=tuple(tuple(tokenize(line, scheme)) for line in lines),
        tokenizer_tag=scheme)


# --- BLEU --------------------------------------------------------------------

@dataclass(frozen=True)
class BleuReport:
    bleu: float
    precisions: tuple[float, ...]
    brevity_penalty: float
    hyp_len: int
    ref_len: int
    smoothing: str = "none"

    def to_dict(self) -> dict:
        return {
            "bleu": self.bleu,
            "precisions": list(self.precisions),
            "brevity_penalty": self.brevity_penalty,
            "hyp_len": self.hyp_len,
            "ref_len": self.ref_len,
            "smoothing": self.smoothing,
        }


def _ngram_counts(tokens: Sequence[str], max_n: int) -> Counter:
    counts: Counter = Counter()
    for n in range(1, max_n + 1):
        for i in range(len(tokens) - n + 1):
            counts[tuple(tokens[i:i + n])] += 1
    return counts


def corpus_bleu(hyps: TokenizedCorpus, refs: TokenizedCorpus,
                max_n: int = 4, smoothing: str = "none") -> BleuReport:
    """Corpus BLEU over aligned tokenized segments (single reference)."""
    if smoothing not in ("none", "exp"):
        raise BleuError(f"unknown smoothing {smoothing!r}; expected 'none' or 'exp'")
    if len(hyps) != len(refs):
        raise BleuError(f"segment count mismatch: {len(hyps)} hyps vs {len(refs)} refs")
    if len(hyps) == 0:
        raise BleuError("empty corpus")
    if hyps.tokenizer_tag != refs.tokenizer_tag:
        raise BleuError(f"tokenizer mismatch: {hyps.tokenizer_tag} vs {refs.tokenizer_tag}")

    correct = [0] * max_n
    total = [0] * max_n
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hyps.segments, refs.segments):
        hyp_len += len(hyp)
        ref_len += len(ref)
        ref_counts = _ngram_counts(ref, max_n)
        for ngram, count in _ngram_counts(hyp, max_n).items():
            n = len(ngram)
            correct[n - 1] += min(count, ref_counts.get(ngram, 0))
            total[n - 1] += count

    precisions = [0.0] * max_n
    smooth_factor = 1.0
    for n in range(max_n):
        if total[n] == 0:
            break
        if correct[n] == 0:
            if smoothing == "exp":
                smooth_factor *= 2.0
                precisions[n] = 1.0 / (smooth_factor * total[n])
        else:
            precisions[n] = correct[n] / total[n]

    if hyp_len == 0:
        brevity_penalty = 0.0
    elif hyp_len < ref_len:
        brevity_penalty = math.exp(1.0 - ref_len / hyp_len)
    else:
        brevity_penalty = 1.0

    if all(p > 0.0 for p in precisions) and brevity_penalty > 0.0:
        log_mean = sum(math.log(p) for p in precisions) / max_n
        bleu = brevity_penalty * math.exp(log_mean) * 100.0
    else:
        bleu = 0.0
    return BleuReport(bleu=bleu, precisions=tuple(precisions),
                      brevity_penalty=brevity_penalty,
                      hyp_len=hyp_len, ref_len=ref_len, smoothing=smoothing)


def asr_bleu(generated: Manifest, reference: Manifest, asr, scheme: str,
             smoothing: str = "none") -> BleuReport:
    """Transcribe generated audio with ``asr`` and score against reference text.

    Manifests must cover the same utterance ids; transcription runs in id
    order so results do not depend on manifest ordering. ``asr`` is any
    adapter exposing ``run(list[str]) -> list[str]`` over audio references.
    """
    gen_ids = set(generated.ids())
    ref_ids = set(reference.ids())
    if gen_ids != ref_ids:
        missing = sorted(gen_ids ^ ref_ids)[:5]
        raise BleuError(f"manifests do not align by id (first differences: {missing})")
    if not gen_ids:
        raise BleuError("empty corpus")

    gen_by_id = {rec.id: rec for rec in generated}
    ref_by_id = {rec.id: rec for rec in reference}
    order = sorted(gen_ids)
    audio_refs = []
    for rec_id in order:
        audio = gen_by_id[rec_id].audio_ref
        if not audio:
            raise BleuError(f"record {rec_id!r} has no audio reference to transcribe")
        audio_refs.append(audio)

    transcripts = asr.run(audio_refs)
    ref_texts = [ref_by_id[rec_id].text or "" for rec_id in order]
    return corpus_bleu(tokenize_corpus(transcripts, scheme),
                       tokenize_corpus(ref_texts, scheme), smoothing=smoothing)
