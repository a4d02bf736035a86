"""Sentence-level evaluation of language-set predictions."""

from __future__ import annotations

import json
import logging
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .inference import LabelSubset, Prediction, predict_text
from .model_io import ClassifierModel

logger = logging.getLogger(__name__)

# Token tags that never name a language in common CS corpora.
NON_LANGUAGE_TAGS = frozenset({
    "other", "ambiguous", "ne", "mixed", "fw", "unk", "univ", "punct",
    "emoticon", "symbol", "url", "hashtag", "mention", "o", "",
})

SINGLE_MAX_DROP = 20
CS_MAX_DROP = 40

# Pictographic planes, dingbats, regional indicators, variation selectors,
# skin-tone modifiers, ZWJ and the keycap combiner.
EMOJI_RE = re.compile(
    "["
    "\U0001F000-\U0001FAFF"
    "\U00002600-\U000027BF"
    "\U00002B00-\U00002BFF"
    "\U0001F1E6-\U0001F1FF"
    "\U0000FE00-\U0000FE0F"
    "\U0000200D"
    "\U000020E3"
    "\U0000231A-\U0000231B"
    "\U000023E9-\U000023FA"
    "\U000025AA-\U000025FE"
    "\U00002934-\U00002935"
    "\U00003030\U0000303D\U00003297\U00003299"
    "\U000E0020-\U000E007F"
    "]+"
)
USER_TAG_RE = re.compile(r"(?<!\S)@\S*")


class MalformedRecord(ValueError):
    def __init__(self, path, lineno, message):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


class LengthMismatch(ValueError):
    pass


class InsufficientData(ValueError):
    pass


@dataclass(frozen=True)
class GoldSentence:
    text: str
    gold: frozenset[str]
    id: str = ""

    @property
    def is_cs(self) -> bool:
        return len(self.gold) > 1


def load_label_map(path: str | Path) -> dict[str, str]:
    """Tag-to-label map: ``tag<TAB>label`` (or ``tag = label``) per line.

    A tag mapped to ``-`` or nothing is ignored during ingestion.
    """
    mapping = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "\t" in line:
                tag, _, label = line.partition("\t")
            elif "=" in line:
                tag, _, label = line.partition("=")
            else:
                tag, label = line, ""
            label = label.strip()
            mapping[tag.strip()] = "" if label == "-" else label
    return mapping


def _map_tag(tag: str, label_map: dict[str, str] | None) -> str | None:
    if label_map is not None:
        label = label_map.get(tag)
        if label is None:
            label = label_map.get(tag.lower())
        return None if label in (None, "", "-") else label
    return None if tag.lower() in NON_LANGUAGE_TAGS else tag


def _read_conll(path, label_map):
    out = []
    tokens, tags, sid, start = [], [], None, 1

    def flush():
        labels = {l for l in (_map_tag(t, label_map) for t in tags) if l}
        if tokens and labels:
            out.append(GoldSentence(" ".join(tokens), frozenset(labels), sid or f"{path}:{start}"))
        elif tokens:
            logger.debug("%s:%d: sentence has no language tokens, skipped", path, start)

    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n\r")
            if not line.strip():
                flush()
                tokens, tags, sid = [], [], None
                start = lineno + 1
                continue
            if line.startswith("# "):
                m = re.match(r"#\s*(?:sent_enum|sent_id|id)\s*=\s*(.+)", line)
                if m:
                    sid = m.group(1).strip()
                if not tokens:
                    start = lineno + 1
                continue
            parts = line.split("\t")
            if len(parts) < 2 or not parts[0]:
                raise MalformedRecord(path, lineno, "expected 'token<TAB>tag'")
            tokens.append(parts[0])
            tags.append(parts[-1].strip())
    flush()
    return out


def _read_jsonl(path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                text, gold = rec["text"], rec["gold"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise MalformedRecord(path, lineno, f"bad record ({exc})") from None
            if not isinstance(text, str) or not isinstance(gold, list) or not gold:
                raise MalformedRecord(path, lineno, "text must be a string, gold a non-empty list")
            out.append(GoldSentence(text, frozenset(map(str, gold)), str(rec.get("id", lineno))))
    return out


def ingest_token_labeled(
    path: str | Path, format: str = "jsonl", label_map: dict[str, str] | None = None,
) -> list[GoldSentence]:
    """Read a dataset as gold sentences.

    ``conll``: ``token<TAB>tag`` lines with blank lines between sentences; a
    sentence's gold set is the set of language labels among its tokens.
    ``jsonl``: objects with ``text``, ``gold`` and ``id``.
    """
    if format == "conll":
        return _read_conll(path, label_map)
    if format == "jsonl":
        return _read_jsonl(path)
    raise ValueError(f"unknown dataset format {format!r}")


def write_jsonl(sentences: Iterable[GoldSentence], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in sentences:
            rec = {"text": s.text, "gold": sorted(s.gold), "id": s.id}
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def clean_text(text: str) -> str:
    """Drop ``@user`` tags and emoji, then normalize whitespace."""
    text = USER_TAG_RE.sub(" ", text)
    text = EMOJI_RE.sub(" ", text)
    return " ".join(text.split())


def preprocess(sentences: Iterable[GoldSentence]) -> list[GoldSentence]:
    """Clean texts and drop the ones too short to be judged reliably.

    Single-language sentences of 20 bytes or fewer and code-switched ones of
    40 bytes or fewer are dropped.
    """
    out = []
    for s in sentences:
        text = clean_text(s.text)
        limit = CS_MAX_DROP if s.is_cs else SINGLE_MAX_DROP
        if len(text.encode("utf-8")) > limit:
            out.append(GoldSentence(text, s.gold, s.id))
    return out


@dataclass(frozen=True)
class BaselineConfig:
    threshold: float = 0.3
    max_labels: int = 2

    def __post_init__(self):
        if not 0 < self.threshold < 1:
            raise ValueError(f"threshold must be in (0, 1), got {self.threshold}")
        if self.max_labels < 1:
            raise ValueError(f"max_labels must be >= 1, got {self.max_labels}")


def baseline_labels(prediction: Prediction, cfg: BaselineConfig = BaselineConfig()) -> frozenset[str]:
    picked = [l for l, p in zip(prediction.labels, prediction.probs) if p > cfg.threshold]
    return frozenset(picked[: cfg.max_labels])


def baseline_predict(
    sentence: str, model: ClassifierModel, subset: LabelSubset,
    cfg: BaselineConfig = BaselineConfig(),
) -> frozenset[str]:
    """Labels above the probability threshold, at most ``max_labels`` of them."""
    return baseline_labels(predict_text(sentence, model, subset), cfg)


@dataclass
class ReportRow:
    gold: frozenset[str]
    n: int = 0
    em: int = 0
    pm: int = 0
    fp: int | None = None

    @property
    def is_cs(self) -> bool:
        return len(self.gold) > 1

    @property
    def name(self) -> str:
        kind = "CS" if self.is_cs else "Single"
        return f"{kind} {'-'.join(sorted(self.gold))}"


@dataclass
class EvalReport:
    rows: list[ReportRow] = field(default_factory=list)
    # CS predictions whose label set is no gold row
    unmatched_fp: Counter = field(default_factory=Counter)

    def row(self, gold: Iterable[str]) -> ReportRow:
        key = frozenset(gold)
        for r in self.rows:
            if r.gold == key:
                return r
        raise KeyError(sorted(key))

    def to_tsv(self) -> str:
        lines = ["row\tS\tEM\tPM\tFP"]
        for r in self.rows:
            fp = "-" if r.fp is None else str(r.fp)
            lines.append(f"{r.name}\t{r.n}\t{r.em}\t{r.pm}\t{fp}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "rows": [
                {"row": r.name, "gold": sorted(r.gold), "S": r.n, "EM": r.em, "PM": r.pm, "FP": r.fp}
                for r in self.rows
            ],
            "unmatched_fp": {"-".join(sorted(k)): v for k, v in sorted(self.unmatched_fp.items(), key=lambda kv: sorted(kv[0]))},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2)


def _row_order(gold: frozenset[str]):
    return (0 if len(gold) > 1 else 1, sorted(gold))


def score(predictions: Sequence[Iterable[str]], gold: Sequence[GoldSentence]) -> EvalReport:
    """Exact/partial matches per gold label set, false positives for CS rows.

    A prediction is an exact match when it equals the gold set and a partial
    match when it contains at least one gold label (every exact match is
    also partial).  A CS row ``X`` gets a false positive whenever a sentence
    with another gold set is predicted as exactly ``X``.
    """
    if len(predictions) != len(gold):
        raise LengthMismatch(f"{len(predictions)} predictions for {len(gold)} gold sentences")
    preds = [frozenset(p) for p in predictions]
    rows = {g.gold: ReportRow(g.gold) for g in gold}
    for r in rows.values():
        if r.is_cs:
            r.fp = 0
    report = EvalReport(sorted(rows.values(), key=lambda r: _row_order(r.gold)))
    for p, g in zip(preds, gold):
        r = rows[g.gold]
        r.n += 1
        if p == g.gold:
            r.em += 1
        if p & g.gold:
            r.pm += 1
        if p != g.gold and len(p) > 1:
            if p in rows:
                rows[p].fp += 1
            else:
                report.unmatched_fp[p] += 1
    return report


def synthesize_cs(
    corpus_a: Sequence[str], corpus_b: Sequence[str], labels: tuple[str, str],
    min_fraction: float = 0.3, count: int = 100, seed: int = 0, max_tries: int = 1000,
) -> list[GoldSentence]:
    """Glue a word span of a sentence from each corpus into a mixed sentence.

    Each span holds at least ``min_fraction`` of the combined span bytes;
    the span order is random.  Raises :class:`InsufficientData` when the
    corpora cannot satisfy the constraint.
    """
    if not 0 < min_fraction <= 0.5:
        raise ValueError(f"min_fraction must be in (0, 0.5], got {min_fraction}")
    a_sents = [s.split() for s in corpus_a if s.split()]
    b_sents = [s.split() for s in corpus_b if s.split()]
    if not a_sents or not b_sents:
        raise InsufficientData("both corpora need at least one non-empty sentence")
    rng = random.Random(seed)
    out = []
    for n in range(count):
        for _ in range(max_tries):
            sa, sb = rng.choice(a_sents), rng.choice(b_sents)
            i = rng.randrange(len(sa))
            j = rng.randrange(i, len(sa)) + 1
            span_a = sa[i:j]
            la = len(" ".join(span_a).encode("utf-8"))
            # la / (la + lb) >= f and lb / (la + lb) >= f
            lo, hi = la * min_fraction / (1 - min_fraction), la * (1 - min_fraction) / min_fraction
            spans_b = [
                sb[k:m] for k in range(len(sb)) for m in range(k + 1, len(sb) + 1)
                if lo - 1e-9 <= len(" ".join(sb[k:m]).encode("utf-8")) <= hi + 1e-9
            ]
            if spans_b:
                span_b = rng.choice(spans_b)
                break
        else:
            raise InsufficientData(f"no span pair satisfies min_fraction={min_fraction} after {max_tries} tries")
        parts = [span_a, span_b] if rng.random() < 0.5 else [span_b, span_a]
        text = " ".join(parts[0] + parts[1])
        out.append(GoldSentence(text, frozenset(labels), f"synth-{n}"))
    return out
