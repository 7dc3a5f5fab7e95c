"""Data model, JSONL ingestion, and privacy scrubbing for messages and annotations.

Messages arrive as line-delimited JSON records (append-oriented streams).
All text is whitespace-normalized and scrubbed of phone numbers, emails,
and Indian license plates before anything downstream sees it.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from datetime import date, datetime
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional, Sequence

PHONE_TOKEN = "<PHONE>"
EMAIL_TOKEN = "<EMAIL>"
PLATE_TOKEN = "<PLATE>"

_PLACEHOLDER_RE = re.compile(r"<PHONE>|<EMAIL>|<PLATE>")

_EMAIL_RE = re.compile(r"[A-Za-z0-9._%+\-]+@[A-Za-z0-9.\-]+\.[A-Za-z]{2,}")

# Two letters, two digits, 1-3 letters, 1-4 digits; space/hyphen separators
# optional.  Boundaries keep it from firing inside longer alphanumeric runs.
_PLATE_RE = re.compile(
    r"(?<![A-Za-z0-9])"
    r"[A-Za-z]{2}[ \-]?\d{2}[ \-]?[A-Za-z]{1,3}[ \-]?\d{1,4}"
    r"(?![A-Za-z0-9])"
)

# Candidate digit runs; only runs with >= 7 digits are treated as phones.
_PHONE_CANDIDATE_RE = re.compile(r"\+?\d(?:[ ()+\-]*\d)*")

_WS_RE = re.compile(r"\s+")


class CorpusError(ValueError):
    """Malformed input data (reports the offending line where known)."""


class Source(str, Enum):
    TIPLINE = "tipline"
    PUBLIC_GROUP = "public_group"
    FACT_CHECK = "fact_check"


class SimilarityLabel(str, Enum):
    """Per-annotator claim-similarity judgement."""

    VERY_SIMILAR = "very_similar"
    SOMEWHAT_SIMILAR = "somewhat_similar"
    SOMEWHAT_DISSIMILAR = "somewhat_dissimilar"
    VERY_DISSIMILAR = "very_dissimilar"
    NA = "na"


class MajorityLabel(str, Enum):
    """Aggregated pair label: a strict-majority annotator label, or none."""

    VERY_SIMILAR = "very_similar"
    SOMEWHAT_SIMILAR = "somewhat_similar"
    SOMEWHAT_DISSIMILAR = "somewhat_dissimilar"
    VERY_DISSIMILAR = "very_dissimilar"
    NA = "na"
    NO_MAJORITY = "no_majority"


class ClaimLabel(str, Enum):
    """Per-annotator claim-detection judgement."""

    YES = "yes"
    PROBABLY = "probably"
    NO = "no"
    WRONG_LANGUAGE = "wrong_language"


_SIMILARITY_ALIASES = {
    "very_similar": SimilarityLabel.VERY_SIMILAR,
    "very similar": SimilarityLabel.VERY_SIMILAR,
    "verysimilar": SimilarityLabel.VERY_SIMILAR,
    "vs": SimilarityLabel.VERY_SIMILAR,
    "somewhat_similar": SimilarityLabel.SOMEWHAT_SIMILAR,
    "somewhat similar": SimilarityLabel.SOMEWHAT_SIMILAR,
    "somewhatsimilar": SimilarityLabel.SOMEWHAT_SIMILAR,
    "ss": SimilarityLabel.SOMEWHAT_SIMILAR,
    "somewhat_dissimilar": SimilarityLabel.SOMEWHAT_DISSIMILAR,
    "somewhat dissimilar": SimilarityLabel.SOMEWHAT_DISSIMILAR,
    "somewhatdissimilar": SimilarityLabel.SOMEWHAT_DISSIMILAR,
    "sd": SimilarityLabel.SOMEWHAT_DISSIMILAR,
    "very_dissimilar": SimilarityLabel.VERY_DISSIMILAR,
    "very dissimilar": SimilarityLabel.VERY_DISSIMILAR,
    "verydissimilar": SimilarityLabel.VERY_DISSIMILAR,
    "vd": SimilarityLabel.VERY_DISSIMILAR,
    "na": SimilarityLabel.NA,
    "n/a": SimilarityLabel.NA,
}

_CLAIM_ALIASES = {
    "yes": ClaimLabel.YES,
    "probably": ClaimLabel.PROBABLY,
    "no": ClaimLabel.NO,
    "wrong_language": ClaimLabel.WRONG_LANGUAGE,
    "wrong language": ClaimLabel.WRONG_LANGUAGE,
    "incorrect_language": ClaimLabel.WRONG_LANGUAGE,
    "incorrect language": ClaimLabel.WRONG_LANGUAGE,
    "n/a": ClaimLabel.WRONG_LANGUAGE,
    "na": ClaimLabel.WRONG_LANGUAGE,
}


def parse_similarity_label(raw: str) -> SimilarityLabel:
    key = raw.strip().lower()
    # Dataset exports sometimes spell N/A with the full interface sentence.
    if key.startswith("n/a"):
        return SimilarityLabel.NA
    if key in _SIMILARITY_ALIASES:
        return _SIMILARITY_ALIASES[key]
    raise CorpusError(f"unknown similarity label: {raw!r}")


def parse_claim_label(raw: str) -> ClaimLabel:
    key = raw.strip().lower()
    if key.startswith("n/a"):
        return ClaimLabel.WRONG_LANGUAGE
    if key in _CLAIM_ALIASES:
        return _CLAIM_ALIASES[key]
    raise CorpusError(f"unknown claim label: {raw!r}")


def normalize_whitespace(text: str) -> str:
    return _WS_RE.sub(" ", text).strip()


def _replace_phones(text: str) -> str:
    def sub(match: re.Match) -> str:
        digits = sum(c.isdigit() for c in match.group(0))
        return PHONE_TOKEN if digits >= 7 else match.group(0)

    return _PHONE_CANDIDATE_RE.sub(sub, text)


def scrub_pii(text: str) -> str:
    """Replace phone numbers, emails, and Indian license plates with placeholders.

    Emails go first so digit runs inside addresses are not mistaken for
    phones; plates next (letter groups shield their digits from the phone
    pattern); 7+ digit runs last.  Total and idempotent: placeholders
    contain no digits or '@' so a second pass is a no-op.
    """
    text = _EMAIL_RE.sub(EMAIL_TOKEN, text)
    text = _PLATE_RE.sub(PLATE_TOKEN, text)
    return _replace_phones(text)


def has_content(scrubbed: str) -> bool:
    """True when text still says something once placeholders are ignored."""
    return bool(_PLACEHOLDER_RE.sub("", scrubbed).strip())


def majority_label(labels: Sequence[SimilarityLabel]) -> MajorityLabel:
    """Label held by a strict majority of annotators, else NO_MAJORITY."""
    if len(labels) < 2:
        raise ValueError("majority_label requires at least 2 annotator labels")
    counts = Counter(labels)
    top, top_count = counts.most_common(1)[0]
    if 2 * top_count > len(labels):
        return MajorityLabel(top.value)
    return MajorityLabel.NO_MAJORITY


@dataclass(frozen=True)
class Message:
    id: str
    text: str
    source: Source
    language: str = "und"
    submitted_at: Optional[datetime] = None

    def to_record(self) -> dict:
        rec = {
            "id": self.id,
            "text": self.text,
            "source": self.source.value,
            "language": self.language,
        }
        if self.submitted_at is not None:
            rec["submitted_at"] = self.submitted_at.isoformat()
        return rec


@dataclass(frozen=True)
class FactCheckReport:
    """A published fact-check; headline and publish date are always present."""

    id: str
    headline: str
    publish_date: date
    lead: Optional[str] = None
    verdict: Optional[str] = None
    url: Optional[str] = None

    def to_message(self, include_lead: bool = False) -> Message:
        text = self.headline
        if include_lead and self.lead:
            text = f"{self.headline} {self.lead}"
        return Message(
            id=self.id,
            text=normalize_whitespace(scrub_pii(normalize_whitespace(text))),
            source=Source.FACT_CHECK,
        )


@dataclass(frozen=True)
class ParallelPair:
    source_text: str
    target_text: str

    def __post_init__(self) -> None:
        if not self.source_text or not self.target_text:
            raise ValueError("parallel pair sides must be non-empty")


@dataclass(frozen=True)
class AnnotatedPair:
    """Two message ids with per-annotator similarity labels."""

    id_a: str
    id_b: str
    annotator_labels: tuple[SimilarityLabel, ...]
    language: Optional[str] = None

    def __post_init__(self) -> None:
        if self.id_a == self.id_b:
            raise ValueError(f"pair references the same id twice: {self.id_a}")

    @property
    def majority(self) -> MajorityLabel:
        return majority_label(self.annotator_labels)


@dataclass(frozen=True)
class ClaimLabelRecord:
    message_id: str
    annotator_labels: tuple[ClaimLabel, ...]


@dataclass
class IngestReport:
    loaded: int = 0
    skipped_empty: list[str] = field(default_factory=list)


def _parse_timestamp(raw: str, lineno: int) -> datetime:
    try:
        return datetime.fromisoformat(raw.replace("Z", "+00:00"))
    except ValueError as exc:
        raise CorpusError(f"line {lineno}: bad submitted_at {raw!r}: {exc}") from exc


class Corpus:
    """In-memory message store.

    Safe for concurrent readers; ingestion builds the updated mapping off to
    the side and publishes it with a single reference swap, so readers never
    observe a half-loaded corpus.
    """

    def __init__(self, messages: Optional[Iterable[Message]] = None):
        self._messages: dict[str, Message] = {}
        if messages:
            for msg in messages:
                self.add(msg)

    def __len__(self) -> int:
        return len(self._messages)

    def __iter__(self) -> Iterator[Message]:
        return iter(self._messages.values())

    def __contains__(self, message_id: str) -> bool:
        return message_id in self._messages

    def get(self, message_id: str) -> Message:
        return self._messages[message_id]

    def ids(self) -> list[str]:
        return list(self._messages)

    def languages(self) -> dict[str, str]:
        return {m.id: m.language for m in self}

    def add(self, message: Message) -> None:
        if message.id in self._messages:
            raise CorpusError(f"duplicate message id: {message.id!r}")
        if not message.text:
            raise CorpusError(f"message {message.id!r} has empty text")
        self._messages[message.id] = message

    def ingest_messages(self, path, default_source: Source = Source.TIPLINE) -> IngestReport:
        """Load a JSONL message file; scrub, normalize, and reject duplicates.

        Records whose text is empty (or only PII placeholders) after
        scrubbing are skipped and reported, not errors.  The corpus is
        published atomically: on any error, no record from the file lands.
        """
        report = IngestReport()
        staged = dict(self._messages)
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CorpusError(f"line {lineno}: malformed record: {exc}") from exc
                if not isinstance(rec, dict) or "id" not in rec or "text" not in rec:
                    raise CorpusError(f"line {lineno}: record needs 'id' and 'text' fields")
                msg_id = str(rec["id"])
                if msg_id in staged:
                    raise CorpusError(f"line {lineno}: duplicate message id: {msg_id!r}")
                text = normalize_whitespace(scrub_pii(normalize_whitespace(str(rec["text"]))))
                if not has_content(text):
                    report.skipped_empty.append(msg_id)
                    continue
                source = Source(rec["source"]) if "source" in rec else default_source
                submitted = None
                if rec.get("submitted_at"):
                    submitted = _parse_timestamp(str(rec["submitted_at"]), lineno)
                staged[msg_id] = Message(
                    id=msg_id,
                    text=text,
                    source=source,
                    language=str(rec.get("language", "und")),
                    submitted_at=submitted,
                )
                report.loaded += 1
        self._messages = staged
        return report

    def export(self, path) -> int:
        with open(path, "w", encoding="utf-8") as fh:
            for msg in self:
                fh.write(json.dumps(msg.to_record(), ensure_ascii=False) + "\n")
        return len(self)


def load_annotated_pairs(path) -> list[AnnotatedPair]:
    """Read pair records: {"id_a", "id_b", "labels": [...], "language"?}."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: malformed record: {exc}") from exc
            try:
                labels = tuple(parse_similarity_label(l) for l in rec["labels"])
                pairs.append(
                    AnnotatedPair(
                        id_a=str(rec["id_a"]),
                        id_b=str(rec["id_b"]),
                        annotator_labels=labels,
                        language=rec.get("language"),
                    )
                )
            except (KeyError, ValueError) as exc:
                raise CorpusError(f"line {lineno}: {exc}") from exc
    return pairs


def load_claim_labels(path) -> list[ClaimLabelRecord]:
    """Read claim-detection records: {"message_id", "labels": [...]}."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: malformed record: {exc}") from exc
            try:
                labels = tuple(parse_claim_label(l) for l in rec["labels"])
                records.append(ClaimLabelRecord(str(rec["message_id"]), labels))
            except (KeyError, ValueError) as exc:
                raise CorpusError(f"line {lineno}: {exc}") from exc
    return records


def load_parallel_pairs(path) -> list[ParallelPair]:
    """Read an OPUS-style extract: one pair per line, source TAB target."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
                raise CorpusError(f"line {lineno}: expected 'source<TAB>target'")
            pairs.append(ParallelPair(parts[0].strip(), parts[1].strip()))
    return pairs


def label_distribution(pairs: Iterable[AnnotatedPair]) -> dict[MajorityLabel, int]:
    """Majority-label counts across a pair dataset (supplemental-style report)."""
    counts = {label: 0 for label in MajorityLabel}
    for pair in pairs:
        counts[pair.majority] += 1
    return counts


def format_label_distribution(
    by_language: Mapping[str, Iterable[AnnotatedPair]]
) -> str:
    """Render per-language majority-label counts plus an 'all' row."""
    order = [
        MajorityLabel.VERY_SIMILAR,
        MajorityLabel.SOMEWHAT_SIMILAR,
        MajorityLabel.SOMEWHAT_DISSIMILAR,
        MajorityLabel.VERY_DISSIMILAR,
        MajorityLabel.NA,
        MajorityLabel.NO_MAJORITY,
    ]
    header = ["language", "VS", "SS", "SD", "VD", "NA", "NM"]
    rows = []
    totals = Counter()
    for lang in sorted(by_language):
        counts = label_distribution(by_language[lang])
        totals.update(counts)
        rows.append([lang] + [str(counts[l]) for l in order])
    rows.append(["all"] + [str(totals[l]) for l in order])
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    for row in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
    return "\n".join(lines)
