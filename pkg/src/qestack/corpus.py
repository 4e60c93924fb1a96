"""Data model and bit-exact file I/O for WMT-style QE corpora.

File conventions (all plain text, UTF-8, one segment per line, no empty
lines anywhere):

* ``*.src`` / ``*.mt`` / ``*.pe`` -- whitespace-tokenized sentences.
* ``*.tags`` -- interleaved gap/word tags, ``g0 w1 g1 ... wN gN`` (2N+1
  entries for an N-token MT sentence). A word-only variant with N entries
  is supported behind a flag.
* ``*.source_tags`` -- one tag per source token.
* ``*.hter`` -- one float in [0, 1] per line.
* ``*.probs`` -- one float in [0, 1] per token per line.
* ``*.align`` -- space-separated ``i-j`` pairs, 0-based, ``i`` indexing the
  source sentence and ``j`` the MT sentence.

Loaded structures are immutable and safe to share across threads.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass

from .errors import LengthMismatch, ParseError, RangeError

__all__ = [
    "Tag",
    "Stream",
    "Sentence",
    "TargetTags",
    "SourceTags",
    "Entry",
    "TaggedCorpus",
    "PredictionSet",
    "load_corpus",
    "load_predictions",
    "read_manifest",
    "write_tags",
    "write_probs",
    "write_scores",
    "write_alignments",
    "write_sentences",
]


class Tag(enum.Enum):
    OK = "OK"
    BAD = "BAD"

    @classmethod
    def parse(cls, text: str, *, file=None, line=None) -> "Tag":
        if text == "OK":
            return cls.OK
        if text == "BAD":
            return cls.BAD
        raise ParseError(f"invalid tag {text!r} (expected OK or BAD)", file=file, line=line)

    def __str__(self) -> str:
        return self.value


class Stream(enum.Enum):
    """The three token-level prediction streams a system may emit."""

    WORDS = "words"
    GAPS = "gaps"
    SOURCE = "source"


@dataclass(frozen=True)
class Sentence:
    """A tokenized sentence; tokens are non-empty and whitespace-free."""

    tokens: tuple[str, ...]

    def __post_init__(self):
        if not self.tokens:
            raise ParseError("empty sentence")
        for tok in self.tokens:
            if not tok or tok.split() != [tok]:
                raise ParseError(f"token {tok!r} is empty or contains whitespace")

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


@dataclass(frozen=True)
class TargetTags:
    """Word tags for the N MT tokens plus N+1 gap tags (gap 0 precedes the
    first token). The 2N+1 interleaving exists only at the file boundary."""

    word_tags: tuple[Tag, ...]
    gap_tags: tuple[Tag, ...]

    def __post_init__(self):
        if len(self.gap_tags) != len(self.word_tags) + 1:
            raise LengthMismatch(
                f"{len(self.word_tags)} word tags need {len(self.word_tags) + 1} "
                f"gap tags, got {len(self.gap_tags)}"
            )

    def interleaved(self) -> tuple[Tag, ...]:
        out = [self.gap_tags[0]]
        for word, gap in zip(self.word_tags, self.gap_tags[1:]):
            out.append(word)
            out.append(gap)
        return tuple(out)

    @classmethod
    def from_interleaved(cls, tags, *, file=None, line=None) -> "TargetTags":
        tags = tuple(tags)
        if len(tags) < 3 or len(tags) % 2 == 0:
            raise LengthMismatch(
                f"interleaved tag line must hold 2N+1 entries, got {len(tags)}",
                file=file,
                line=line,
            )
        return cls(word_tags=tags[1::2], gap_tags=tags[0::2])

    @classmethod
    def words_only(cls, word_tags) -> "TargetTags":
        word_tags = tuple(word_tags)
        return cls(word_tags=word_tags, gap_tags=(Tag.OK,) * (len(word_tags) + 1))


@dataclass(frozen=True)
class SourceTags:
    tags: tuple[Tag, ...]

    def __len__(self) -> int:
        return len(self.tags)


@dataclass(frozen=True)
class Entry:
    """One aligned segment: source, MT, optional post-edit, labels, HTER and
    word alignments."""

    mt: Sentence
    src: Sentence | None = None
    pe: Sentence | None = None
    target_tags: TargetTags | None = None
    source_tags: SourceTags | None = None
    hter: float | None = None
    alignments: frozenset[tuple[int, int]] | None = None


@dataclass(frozen=True)
class TaggedCorpus:
    entries: tuple[Entry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def mt_lengths(self) -> list[int]:
        return [len(e.mt) for e in self.entries]


@dataclass(frozen=True)
class PredictionSet:
    """Per-system predictions: P(BAD) per MT word, optionally per gap and per
    source token, and optionally one score per sentence."""

    system_id: str
    word_probs: tuple[tuple[float, ...], ...]
    gap_probs: tuple[tuple[float, ...], ...] | None = None
    source_probs: tuple[tuple[float, ...], ...] | None = None
    sentence_scores: tuple[float, ...] | None = None

    def __len__(self) -> int:
        return len(self.word_probs)


# ---------------------------------------------------------------------------
# Low-level line readers. Empty lines are invalid everywhere: degenerate
# segments must be filtered upstream, so we fail fast instead of guessing.
# ---------------------------------------------------------------------------


def _read_lines(path) -> list[str]:
    with open(path, "r", encoding="utf-8") as handle:
        lines = handle.read().splitlines()
    for i, line in enumerate(lines, 1):
        if not line.strip():
            raise ParseError("empty line", file=str(path), line=i)
    return lines


def read_sentences(path) -> list[Sentence]:
    out = []
    for i, line in enumerate(_read_lines(path), 1):
        try:
            out.append(Sentence(tuple(line.split())))
        except ParseError as exc:
            raise ParseError(str(exc), file=str(path), line=i) from None
    return out


def read_tag_lines(path) -> list[list[Tag]]:
    return [
        [Tag.parse(t, file=str(path), line=i) for t in line.split()]
        for i, line in enumerate(_read_lines(path), 1)
    ]


def _parse_float(text, *, file, line) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"invalid float {text!r}", file=file, line=line) from None


def read_score_lines(path) -> list[float]:
    """One float per line; no range restriction (scores may be arbitrary)."""
    out = []
    for i, line in enumerate(_read_lines(path), 1):
        fields = line.split()
        if len(fields) != 1:
            raise ParseError(f"expected one value per line, got {len(fields)}", file=str(path), line=i)
        out.append(_parse_float(fields[0], file=str(path), line=i))
    return out


def read_prob_lines(path) -> list[list[float]]:
    out = []
    for i, line in enumerate(_read_lines(path), 1):
        row = []
        for f in line.split():
            value = _parse_float(f, file=str(path), line=i)
            if not 0.0 <= value <= 1.0:
                raise RangeError(f"probability {value} outside [0, 1]", file=str(path), line=i)
            row.append(value)
        out.append(row)
    return out


def read_alignment_lines(path) -> list[frozenset[tuple[int, int]]]:
    out = []
    for i, line in enumerate(_read_lines(path), 1):
        pairs = set()
        for field_ in line.split():
            left, sep, right = field_.partition("-")
            if not sep or not left.isdigit() or not right.isdigit():
                raise ParseError(f"invalid alignment pair {field_!r}", file=str(path), line=i)
            pairs.add((int(left), int(right)))
        out.append(frozenset(pairs))
    return out


# ---------------------------------------------------------------------------
# Corpus loading
# ---------------------------------------------------------------------------


def _check_counts(counts: dict[str, int]):
    sizes = set(counts.values())
    if len(sizes) > 1:
        detail = ", ".join(f"{name}={n}" for name, n in counts.items())
        raise LengthMismatch(f"files disagree on segment count: {detail}")


def load_corpus(
    *,
    mt,
    src=None,
    pe=None,
    tags=None,
    source_tags=None,
    hter=None,
    align=None,
    word_tags_only: bool = False,
) -> TaggedCorpus:
    """Load a corpus from parallel one-segment-per-line files.

    ``mt`` is required; every other column is optional. All cross-file length
    invariants are validated: equal line counts, 2N+1 entries per target-tag
    line (or N with ``word_tags_only``), source-tag/source length agreement,
    HTER in [0, 1] and alignment indices in range.
    """
    mt_sents = read_sentences(mt)
    counts = {str(mt): len(mt_sents)}

    src_sents = None
    if src is not None:
        src_sents = read_sentences(src)
        counts[str(src)] = len(src_sents)
    pe_sents = None
    if pe is not None:
        pe_sents = read_sentences(pe)
        counts[str(pe)] = len(pe_sents)

    tag_lines = None
    if tags is not None:
        tag_lines = read_tag_lines(tags)
        counts[str(tags)] = len(tag_lines)
    source_tag_lines = None
    if source_tags is not None:
        source_tag_lines = read_tag_lines(source_tags)
        counts[str(source_tags)] = len(source_tag_lines)

    hter_values = None
    if hter is not None:
        hter_values = read_score_lines(hter)
        counts[str(hter)] = len(hter_values)
    alignment_sets = None
    if align is not None:
        alignment_sets = read_alignment_lines(align)
        counts[str(align)] = len(alignment_sets)

    _check_counts(counts)

    entries = []
    for i in range(len(mt_sents)):
        line = i + 1
        mt_sent = mt_sents[i]
        n = len(mt_sent)

        target = None
        if tag_lines is not None:
            row = tag_lines[i]
            if word_tags_only:
                if len(row) != n:
                    raise LengthMismatch(
                        f"expected {n} word tags for {n} MT tokens, got {len(row)}",
                        file=str(tags),
                        line=line,
                    )
                target = TargetTags.words_only(row)
            else:
                if len(row) != 2 * n + 1:
                    raise LengthMismatch(
                        f"expected {2 * n + 1} interleaved tags for {n} MT tokens, got {len(row)}",
                        file=str(tags),
                        line=line,
                    )
                target = TargetTags.from_interleaved(row, file=str(tags), line=line)

        source_tags_value = None
        if source_tag_lines is not None:
            if src_sents is None:
                raise ParseError("source tags supplied without a source file")
            row = source_tag_lines[i]
            if len(row) != len(src_sents[i]):
                raise LengthMismatch(
                    f"expected {len(src_sents[i])} source tags, got {len(row)}",
                    file=str(source_tags),
                    line=line,
                )
            source_tags_value = SourceTags(tuple(row))

        hter_value = None
        if hter_values is not None:
            hter_value = hter_values[i]
            if not 0.0 <= hter_value <= 1.0:
                raise ParseError(f"HTER {hter_value} outside [0, 1]", file=str(hter), line=line)

        alignment = None
        if alignment_sets is not None:
            if src_sents is None:
                raise ParseError("alignments supplied without a source file")
            alignment = alignment_sets[i]
            for s_idx, m_idx in alignment:
                if s_idx >= len(src_sents[i]) or m_idx >= n:
                    raise ParseError(
                        f"alignment {s_idx}-{m_idx} out of range for lengths "
                        f"{len(src_sents[i])}/{n}",
                        file=str(align),
                        line=line,
                    )

        entries.append(
            Entry(
                mt=mt_sent,
                src=src_sents[i] if src_sents is not None else None,
                pe=pe_sents[i] if pe_sents is not None else None,
                target_tags=target,
                source_tags=source_tags_value,
                hter=hter_value,
                alignments=alignment,
            )
        )
    return TaggedCorpus(tuple(entries))


# ---------------------------------------------------------------------------
# Prediction loading
# ---------------------------------------------------------------------------


def _tags_as_probs(path) -> list[list[float]] | None:
    """Tag-only systems enter the ensemble as degenerate probabilities
    (OK -> 0, BAD -> 1). Returns None when the file is not a tag file."""
    with open(path, "r", encoding="utf-8") as handle:
        head = handle.readline().split()
    if head and all(t in ("OK", "BAD") for t in head):
        return [[1.0 if t is Tag.BAD else 0.0 for t in row] for row in read_tag_lines(path)]
    return None


def _load_stream(path, expected_lengths, name) -> tuple[tuple[float, ...], ...]:
    rows = _tags_as_probs(path)
    if rows is None:
        rows = read_prob_lines(path)
    if len(rows) != len(expected_lengths):
        raise LengthMismatch(
            f"{name} stream has {len(rows)} lines, corpus has {len(expected_lengths)}",
            file=str(path),
        )
    for i, (row, expected) in enumerate(zip(rows, expected_lengths), 1):
        if len(row) != expected:
            raise LengthMismatch(
                f"{name} stream: expected {expected} values, got {len(row)}",
                file=str(path),
                line=i,
            )
    return tuple(tuple(row) for row in rows)


def load_predictions(
    corpus: TaggedCorpus,
    system_id: str,
    *,
    words,
    gaps=None,
    source=None,
    sentences=None,
) -> PredictionSet:
    """Load one system's predictions, validating every stream against the
    corpus. ``words`` is required; tag files are accepted anywhere a
    probability file is and map OK/BAD to 0/1."""
    n_mt = corpus.mt_lengths()
    word_probs = _load_stream(words, n_mt, "word")

    gap_probs = None
    if gaps is not None:
        gap_probs = _load_stream(gaps, [n + 1 for n in n_mt], "gap")

    source_probs = None
    if source is not None:
        src_lengths = []
        for i, entry in enumerate(corpus, 1):
            if entry.src is None:
                raise LengthMismatch(f"corpus entry {i} has no source sentence", file=str(source))
            src_lengths.append(len(entry.src))
        source_probs = _load_stream(source, src_lengths, "source")

    sentence_scores = None
    if sentences is not None:
        values = read_score_lines(sentences)
        if len(values) != len(corpus):
            raise LengthMismatch(
                f"sentence stream has {len(values)} lines, corpus has {len(corpus)}",
                file=str(sentences),
            )
        sentence_scores = tuple(values)

    return PredictionSet(
        system_id=system_id,
        word_probs=word_probs,
        gap_probs=gap_probs,
        source_probs=source_probs,
        sentence_scores=sentence_scores,
    )


def read_manifest(path, corpus: TaggedCorpus) -> list[PredictionSet]:
    """Read a system manifest: one system per line,
    ``system_id<TAB>stream=path`` pairs with ``stream`` among
    words/gaps/source/sentences. Paths are relative to the manifest file."""
    base = os.path.dirname(os.path.abspath(path))
    systems = []
    seen = set()
    for i, line in enumerate(_read_lines(path), 1):
        fields = line.split("\t")
        system_id = fields[0].strip()
        if not system_id:
            raise ParseError("missing system id", file=str(path), line=i)
        if system_id in seen:
            raise ParseError(f"duplicate system id {system_id!r}", file=str(path), line=i)
        seen.add(system_id)
        streams = {}
        for field_ in fields[1:]:
            key, sep, value = field_.partition("=")
            if not sep or key not in ("words", "gaps", "source", "sentences"):
                raise ParseError(f"invalid manifest field {field_!r}", file=str(path), line=i)
            streams[key] = os.path.join(base, value)
        if "words" not in streams:
            raise ParseError(f"system {system_id!r} lists no words stream", file=str(path), line=i)
        systems.append(load_predictions(corpus, system_id, **streams))
    if not systems:
        raise ParseError("manifest lists no systems", file=str(path))
    return systems


# ---------------------------------------------------------------------------
# Writers. Floats are written with repr() so that load(write(x)) == x.
# ---------------------------------------------------------------------------


def _write_lines(path, lines):
    with open(path, "w", encoding="utf-8") as handle:
        for line in lines:
            handle.write(line + "\n")


def write_tags(tags, path, *, interleaved: bool = True):
    """Write target or source tags. TargetTags serialize interleaved (2N+1)
    by default or word-only when ``interleaved`` is false; SourceTags always
    serialize as plain per-token lines."""
    lines = []
    for row in tags:
        if isinstance(row, TargetTags):
            seq = row.interleaved() if interleaved else row.word_tags
        elif isinstance(row, SourceTags):
            seq = row.tags
        else:
            seq = tuple(row)
        lines.append(" ".join(t.value for t in seq))
    _write_lines(path, lines)


def write_probs(rows, path):
    for row in rows:
        if not row:
            raise ValueError("cannot serialize an empty probability row")
    _write_lines(path, [" ".join(repr(float(p)) for p in row) for row in rows])


def write_scores(values, path):
    _write_lines(path, [repr(float(v)) for v in values])


def write_alignments(alignment_sets, path):
    lines = []
    for pairs in alignment_sets:
        if not pairs:
            raise ValueError("cannot serialize an empty alignment set (empty lines are invalid)")
        lines.append(" ".join(f"{i}-{j}" for i, j in sorted(pairs)))
    _write_lines(path, lines)


def write_sentences(sentences, path):
    _write_lines(path, [s.text for s in sentences])
