"""Pseudo-labeling cascades over pluggable adapters, plus corpus filters.

Adapters wrap the models a cascade invokes (ASR, MT, text-to-unit, ...)
without pulling them into this package. Two endpoint schemes exist:

* ``mock:NAME`` - deterministic in-process functions for tests and dry
  runs (``identity``, ``upper``, ``lower``, ``reverse``, ``char_units``,
  ``fail``); any other value is read as a two-column TSV lookup table
  mapping input line to output line.
* ``exec:COMMAND`` - an external command speaking a line protocol: one
  input string per line on stdin, one output string per line on stdout,
  line-aligned.

Adapter outputs can be cached in a content-addressed on-disk store keyed
by (kind, name, input), so re-running a cascade over a large manifest
only recomputes misses. Cache writes are atomic (write then rename).
"""

from __future__ import annotations

import hashlib
import json
import os
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .corpus import Manifest, Utterance, with_records
from .evalbleu import tokenize

CACHE_ENV_VAR = "UNITFORGE_CACHE_DIR"

CORE_FIELDS = ("id", "lang", "audio", "duration_s", "speaker", "text", "units")

FILTER_KINDS = ("min_length", "code_switch")


class CascadeError(ValueError):
    pass


class AdapterError(RuntimeError):
    """One or more adapter invocations failed; carries (input, reason) pairs."""

    def __init__(self, adapter: str, failures: Sequence[tuple[str, str]]):
        preview = "; ".join(f"{inp!r}: {reason}" for inp, reason in failures[:3])
        more = f" (+{len(failures) - 3} more)" if len(failures) > 3 else ""
        super().__init__(f"adapter {adapter} failed on {len(failures)} input(s): {preview}{more}")
        self.adapter = adapter
        self.failures = list(failures)


# --- adapters ----------------------------------------------------------------

class _MockFailure(Exception):
    pass


def _mock_char_units(line: str) -> str:
    return " ".join(str(ord(ch) % 2500) for ch in line)


_BUILTIN_MOCKS: dict[str, Callable[[str], str]] = {
    "identity": lambda line: line,
    "upper": str.upper,
    "lower": str.lower,
    "reverse": lambda line: line[::-1],
    "char_units": _mock_char_units,
}


def _fail_mock(substring: str) -> Callable[[str], str]:
    def fn(line: str) -> str:
        if substring in line:
            raise _MockFailure(f"mock failure triggered by {substring!r}")
        return line
    return fn


@dataclass
class Adapter:
    """A deterministic model invocation endpoint.

    ``run`` raises :class:`AdapterError` if any input fails; ``try_run``
    returns ``None`` for failed inputs instead.
    """

    kind: str
    name: str
    endpoint: str
    cache_dir: Path | None = None
    _table: dict[str, str] | None = field(default=None, repr=False)
    _fn: Callable[[str], str] | None = field(default=None, repr=False)
    _command: list[str] | None = field(default=None, repr=False)

    def __post_init__(self):
        scheme, _, rest = self.endpoint.partition(":")
        if scheme == "mock":
            if rest in _BUILTIN_MOCKS:
                self._fn = _BUILTIN_MOCKS[rest]
            elif rest == "fail" or rest.startswith("fail:"):
                self._fn = _fail_mock(rest.partition(":")[2])
            else:
                self._table = self._load_table(Path(rest))
        elif scheme == "exec":
            if not rest.strip():
                raise CascadeError(f"adapter {self.name!r}: empty exec command")
            self._command = shlex.split(rest)
        else:
            raise CascadeError(
                f"adapter {self.name!r}: unknown endpoint scheme {scheme!r} "
                "(expected mock: or exec:)")
        if self.cache_dir is not None:
            self.cache_dir = Path(self.cache_dir)

    @staticmethod
    def _load_table(path: Path) -> dict[str, str]:
        if not path.exists():
            raise CascadeError(f"mock table {path} does not exist")
        table = {}
        for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            if not raw:
                continue
            cols = raw.split("\t")
            if len(cols) != 2:
                raise CascadeError(f"{path}:{lineno}: mock table rows need 2 columns")
            table[cols[0]] = cols[1]
        return table

    # cache -------------------------------------------------------------------

    def _cache_path(self, line: str) -> Path | None:
        if self.cache_dir is None:
            return None
        digest = hashlib.sha256(
            f"{self.kind}\x00{self.name}\x00{line}".encode("utf-8")).hexdigest()
        return self.cache_dir / self.kind / self.name / digest[:2] / digest

    def _cache_get(self, line: str) -> str | None:
        path = self._cache_path(line)
        if path is not None and path.exists():
            return path.read_text(encoding="utf-8")
        return None

    def _cache_put(self, line: str, output: str) -> None:
        path = self._cache_path(line)
        if path is None:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(output)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    # execution ----------------------------------------------------------------

    def try_run(self, inputs: Sequence[str]) -> list[str | None]:
        outputs: list[str | None] = [None] * len(inputs)
        misses: list[int] = []
        for i, line in enumerate(inputs):
            if "\n" in line or "\r" in line:
                continue  # stays None: not expressible in the line protocol
            cached = self._cache_get(line)
            if cached is not None:
                outputs[i] = cached
            else:
                misses.append(i)

        if misses and self._command is not None:
            self._run_exec([inputs[i] for i in misses], misses, outputs)
        else:
            for i in misses:
                line = inputs[i]
                try:
                    if self._table is not None:
                        if line not in self._table:
                            continue
                        out = self._table[line]
                    else:
                        out = self._fn(line)
                except _MockFailure:
                    continue
                outputs[i] = out
                self._cache_put(line, out)
        return outputs

    def _run_exec(self, lines: list[str], positions: list[int],
                  outputs: list[str | None]) -> None:
        proc = subprocess.run(
            self._command, input="\n".join(lines) + "\n",
            capture_output=True, text=True)
        if proc.returncode != 0:
            return  # all misses stay failed
        produced = proc.stdout.split("\n")
        if produced and produced[-1] == "":
            produced.pop()
        if len(produced) != len(lines):
            return  # line misalignment: cannot attribute outputs safely
        for pos, line, out in zip(positions, lines, produced):
            outputs[pos] = out
            self._cache_put(line, out)

    def run(self, inputs: Sequence[str]) -> list[str]:
        outputs = self.try_run(inputs)
        failures = [(inputs[i], "adapter_error") for i, out in enumerate(outputs) if out is None]
        if failures:
            raise AdapterError(f"{self.kind}/{self.name}", failures)
        return outputs  # type: ignore[return-value]


def make_adapter(kind: str, name: str, endpoint: str,
                 cache_dir: str | Path | None = None) -> Adapter:
    if cache_dir is None:
        env = os.environ.get(CACHE_ENV_VAR)
        cache_dir = Path(env) if env else None
    return Adapter(kind=kind, name=name, endpoint=endpoint,
                   cache_dir=Path(cache_dir) if cache_dir else None)


# --- record fields -----------------------------------------------------------

def get_field(rec: Utterance, name: str) -> str:
    if name == "id":
        return rec.id
    if name == "lang":
        return rec.lang
    if name == "audio":
        return rec.audio_ref or ""
    if name == "duration_s":
        return repr(rec.duration_s) if rec.duration_s is not None else ""
    if name == "speaker":
        return rec.speaker or ""
    if name == "text":
        return rec.text or ""
    if name == "units":
        return " ".join(str(u) for u in rec.units) if rec.units else ""
    return rec.extra.get(name, "")


def set_field(rec: Utterance, name: str, value: str) -> Utterance:
    if name == "id":
        return replace(rec, id=value)
    if name == "lang":
        return replace(rec, lang=value)
    if name == "audio":
        return replace(rec, audio_ref=value or None)
    if name == "duration_s":
        return replace(rec, duration_s=float(value) if value else None)
    if name == "speaker":
        return replace(rec, speaker=value or None)
    if name == "text":
        return replace(rec, text=value)
    if name == "units":
        return replace(rec, units=tuple(int(tok) for tok in value.split()) or None)
    extra = dict(rec.extra)
    extra[name] = value
    return replace(rec, extra=extra)


# --- pipeline spec -----------------------------------------------------------

@dataclass(frozen=True)
class StageSpec:
    adapter: str
    in_field: str
    out_field: str


@dataclass(frozen=True)
class FilterSpec:
    kind: str
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FILTER_KINDS:
            raise CascadeError(f"unknown filter kind {self.kind!r}; expected {FILTER_KINDS}")


@dataclass(frozen=True)
class PipelineSpec:
    stages: tuple[StageSpec, ...] = ()
    filters: tuple[FilterSpec, ...] = ()
    adapters: Mapping[str, str] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, obj: Mapping) -> "PipelineSpec":
        stages = []
        for i, stage in enumerate(obj.get("stages", ())):
            try:
                stages.append(StageSpec(adapter=stage["adapter"],
                                        in_field=stage["in"], out_field=stage["out"]))
            except KeyError as exc:
                raise CascadeError(f"stage {i}: missing key {exc}") from None
        filters = [FilterSpec(kind=f["kind"], params=f.get("params", {}))
                   for f in obj.get("filters", ())]
        return cls(stages=tuple(stages), filters=tuple(filters),
                   adapters=dict(obj.get("adapters", {})))

    @classmethod
    def from_json_file(cls, path: str | Path) -> "PipelineSpec":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# --- filters -----------------------------------------------------------------

def levenshtein(a: Sequence, b: Sequence) -> int:
    """Minimal number of insertions, deletions and substitutions."""
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        current = [i]
        for j, y in enumerate(b, start=1):
            cost = 0 if x == y else 1
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost))
        previous = current
    return previous[-1]


def filter_code_switch(asr_text: str, subtitle: str, tokenizer: str = "char",
                       max_norm_dist: float = 0.5) -> bool:
    """Keep iff the normalized edit distance between ASR output and the
    subtitle stays within ``max_norm_dist`` (distance over subtitle length)."""
    if not 0.0 <= max_norm_dist <= 1.0:
        raise CascadeError(f"max_norm_dist must be in [0, 1], got {max_norm_dist}")
    asr_tokens = tokenize(asr_text, tokenizer)
    sub_tokens = tokenize(subtitle, tokenizer)
    dist = levenshtein(asr_tokens, sub_tokens)
    return dist / max(1, len(sub_tokens)) <= max_norm_dist


def filter_min_length(text: str, min_chars: int) -> bool:
    """Keep iff the text has at least ``min_chars`` non-whitespace characters."""
    if min_chars < 0:
        raise CascadeError(f"min_chars must be >= 0, got {min_chars}")
    return sum(1 for ch in text if not ch.isspace()) >= min_chars


def _apply_filter(spec: FilterSpec, rec: Utterance) -> bool:
    params = dict(spec.params)
    if spec.kind == "min_length":
        return filter_min_length(
            get_field(rec, str(params.get("field", "text"))),
            int(params.get("min_chars", 3)))
    asr_field = str(params.get("field", "asr_text"))
    ref_field = str(params.get("ref_field", "text"))
    return filter_code_switch(
        get_field(rec, asr_field), get_field(rec, ref_field),
        tokenizer=str(params.get("tokenizer", "char")),
        max_norm_dist=float(params.get("max_norm_dist", 0.5)))


# --- orchestration -----------------------------------------------------------

@dataclass(frozen=True)
class CascadeReport:
    input_count: int
    output_count: int
    adapter_error_drops: int
    filter_drops: Mapping[str, int]

    def to_dict(self) -> dict:
        return {
            "input_count": self.input_count,
            "output_count": self.output_count,
            "adapter_error_drops": self.adapter_error_drops,
            "filter_drops": dict(self.filter_drops),
        }


def _validate_spec(src: Manifest, spec: PipelineSpec,
                   adapters: Mapping[str, Adapter]) -> None:
    available = set(CORE_FIELDS)
    for rec in src:
        available.update(rec.extra)
    for i, stage in enumerate(spec.stages):
        if stage.adapter not in adapters:
            raise CascadeError(f"stage {i}: unknown adapter {stage.adapter!r}")
        if stage.in_field not in available:
            if any(s.out_field == stage.in_field for s in spec.stages[i:]):
                raise CascadeError(
                    f"stage {i}: cyclic field dependency: {stage.in_field!r} is "
                    "not produced until a later stage")
            raise CascadeError(
                f"stage {i}: input field {stage.in_field!r} is neither a source "
                "column nor produced by a prior stage")
        available.add(stage.out_field)


def run_cascade(src: Manifest, spec: PipelineSpec,
                adapters: Mapping[str, Adapter]) -> tuple[Manifest, CascadeReport]:
    """Apply the pipeline stages and filters record-wise over a manifest.

    Records whose adapter call fails are dropped with reason
    ``adapter_error``; filters drop in declaration order and each is
    tallied. Surviving records keep the input order, and
    kept + dropped always equals the input count.
    """
    _validate_spec(src, spec, adapters)

    records: list[Utterance | None] = list(src.records)
    adapter_error_drops = 0
    for stage in spec.stages:
        adapter = adapters[stage.adapter]
        live = [i for i, rec in enumerate(records) if rec is not None]
        inputs = [get_field(records[i], stage.in_field) for i in live]
        outputs = adapter.try_run(inputs)
        for i, out in zip(live, outputs):
            if out is None:
                records[i] = None
                adapter_error_drops += 1
            else:
                records[i] = set_field(records[i], stage.out_field, out)

    filter_drops: dict[str, int] = {}
    for idx, fspec in enumerate(spec.filters):
        label = f"{idx}:{fspec.kind}"
        filter_drops[label] = 0
        for i, rec in enumerate(records):
            if rec is not None and not _apply_filter(fspec, rec):
                records[i] = None
                filter_drops[label] += 1

    kept = [rec for rec in records if rec is not None]
    report = CascadeReport(
        input_count=len(src.records),
        output_count=len(kept),
        adapter_error_drops=adapter_error_drops,
        filter_drops=filter_drops,
    )
    return with_records(src, kept), report
