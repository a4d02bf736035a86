"""Code-switching detection by iteratively masking the dominant language.

Each round predicts the residual sentence, assigns to the winning label the
words whose logit column ranks that label in the top ``beta``, masks those
ranking it in the top ``alpha`` and re-predicts what is left.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .inference import (
    EmptyInput,
    LabelSubset,
    WordLogitMatrix,
    featurize,
    predict,
    tokenize,
    word_logit_matrix,
)
from .model_io import ClassifierModel


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MaskLIDConfig:
    alpha: int = 3
    beta: int = 15
    tau: int = 20
    lam: int = 2
    feature_set_confidence: float = 0.9
    beta_retry_factor: int = 2
    step1_confidence: float | None = None

    def __post_init__(self):
        if self.alpha < 1:
            raise ConfigError(f"alpha must be >= 1, got {self.alpha}")
        if self.beta <= self.alpha:
            raise ConfigError(f"beta ({self.beta}) must be greater than alpha ({self.alpha})")
        if self.tau < 0:
            raise ConfigError(f"tau must be >= 0, got {self.tau}")
        if self.lam < 1:
            raise ConfigError(f"lambda must be >= 1, got {self.lam}")
        if not 0 < self.feature_set_confidence <= 1:
            raise ConfigError(f"feature_set_confidence must be in (0, 1], got {self.feature_set_confidence}")
        if self.beta_retry_factor < 1:
            raise ConfigError(f"beta_retry_factor must be >= 1, got {self.beta_retry_factor}")
        if self.step1_confidence is not None and not 0 <= self.step1_confidence <= 1:
            raise ConfigError(f"step1_confidence must be in [0, 1], got {self.step1_confidence}")

    _ALIASES = {"lambda": "lam", "conf": "feature_set_confidence"}

    @classmethod
    def from_mapping(cls, values: dict, base: "MaskLIDConfig | None" = None) -> "MaskLIDConfig":
        """Build a config from string or numeric values; unknown keys raise."""
        base = base or cls()
        types = {f.name: f.type for f in fields(cls)}
        updates = {}
        for key, raw in values.items():
            name = cls._ALIASES.get(key, key)
            if name not in types:
                raise ConfigError(f"unknown config key {key!r}")
            if raw is None:
                continue
            try:
                if name in ("feature_set_confidence", "step1_confidence"):
                    updates[name] = float(raw)
                else:
                    updates[name] = int(raw)
            except (TypeError, ValueError):
                raise ConfigError(f"bad value for {key}: {raw!r}") from None
        return replace(base, **updates)

    @classmethod
    def from_file(cls, path: str | Path) -> "MaskLIDConfig":
        """Read ``key = value`` lines; ``#`` starts a comment."""
        values = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                key, sep, value = line.partition("=")
                if not sep:
                    raise ConfigError(f"{path}:{lineno}: expected key = value")
                values[key.strip()] = value.strip()
        return cls.from_mapping(values)


class Termination(str, enum.Enum):
    LAMBDA_REACHED = "lambda_reached"
    RESIDUAL_TOO_SHORT = "residual_too_short"
    REPEAT_LANGUAGE = "repeat_language"
    LOW_CONFIDENCE_FEATURE_SET = "low_confidence_feature_set"
    LOW_CONFIDENCE_PREDICTION = "low_confidence_prediction"
    EMPTY_RESIDUAL = "empty_residual"


@dataclass
class MaskState:
    words: list[str]
    masked: list[bool] = field(default_factory=list)
    iteration: int = 0

    def __post_init__(self):
        if not self.masked:
            self.masked = [False] * len(self.words)

    @property
    def byte_lengths(self) -> list[int]:
        return [len(w.encode("utf-8")) for w in self.words]

    def unmasked(self) -> list[int]:
        return [t for t, m in enumerate(self.masked) if not m]

    def residual_words(self) -> list[str]:
        return [self.words[t] for t in self.unmasked()]

    def mask(self, indices) -> int:
        n = 0
        for t in indices:
            if not self.masked[t]:
                self.masked[t] = True
                n += 1
        return n


def joined_byte_len(words: Sequence[str]) -> int:
    """Byte length of ``words`` joined by single spaces."""
    if not words:
        return 0
    return sum(len(w.encode("utf-8")) for w in words) + len(words) - 1


def residual_byte_len(state: MaskState) -> int:
    return joined_byte_len(state.residual_words())


@dataclass(frozen=True)
class LanguageAssignment:
    label: str
    word_indices: tuple[int, ...]
    words: tuple[str, ...]
    byte_length: int
    probability: float
    iteration: int

    @property
    def text(self) -> str:
        return " ".join(self.words)


@dataclass(frozen=True)
class Round:
    """What one iteration saw and did; ``masked`` is cumulative."""

    iteration: int
    label: str
    probability: float
    assigned: tuple[int, ...]
    accepted: bool
    masked: tuple[int, ...]


@dataclass(frozen=True)
class SentencePrediction:
    assignments: tuple[LanguageAssignment, ...]
    termination: Termination
    rounds: tuple[Round, ...] = ()

    @property
    def labels(self) -> list[str]:
        return [a.label for a in self.assignments]

    def to_dict(self) -> dict:
        return {
            "labels": self.labels,
            "assignments": [_listify(asdict(a)) for a in self.assignments],
            "termination": self.termination.value,
        }


def _listify(d: dict) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}


def column_ranks(matrix: WordLogitMatrix, row: int) -> np.ndarray:
    """0-based rank of label ``row`` within every column of ``matrix``.

    Ranking is by value descending; equal values rank lower label rows first.
    """
    values = matrix.values
    v = values[row]
    higher = (values > v).sum(axis=0)
    tied_before = (values[:row] == v).sum(axis=0)
    return higher + tied_before


def top_rank_member(matrix: WordLogitMatrix, row: int, t: int, k: int) -> bool:
    """Whether label ``row`` is among the ``k`` largest entries of column ``t``."""
    if k < 1:
        raise ValueError(f"rank cutoff must be >= 1, got {k}")
    col = matrix.values[:, t]
    v = col[row]
    rank = int((col > v).sum() + (col[:row] == v).sum())
    return rank < k


def validate_feature_set(
    words: Sequence[str], label: str, model: ClassifierModel,
    subset: LabelSubset, cfg: MaskLIDConfig,
) -> tuple[bool, float]:
    """Accept ``words`` as evidence for ``label``.

    The joined words must be at least ``tau`` bytes long and, predicted on
    their own, give ``label`` a probability of at least the configured
    feature-set confidence.
    """
    if not words:
        return False, 0.0
    pred = predict(featurize(list(words), model), model, subset)
    prob = pred.prob(label)
    ok = joined_byte_len(words) >= cfg.tau and prob >= cfg.feature_set_confidence
    return ok, prob


def _members(ranks: np.ndarray, candidates: list[int], k: int) -> list[int]:
    return [t for t in candidates if ranks[t] < k]


def masklid(
    sentence: str, model: ClassifierModel, subset: LabelSubset,
    cfg: MaskLIDConfig | None = None,
) -> SentencePrediction:
    """Detect the set of languages in ``sentence``.

    Word logits are computed once from the original sentence.  Every round
    re-predicts the unmasked words, and the round's label is emitted only
    when its assigned words pass :func:`validate_feature_set` (after at most
    one retry with an enlarged ``beta``).  Words ranking the label within
    ``alpha`` are masked whether or not it was emitted.
    """
    cfg = cfg or MaskLIDConfig()
    words = tokenize(sentence)
    if not words:
        raise EmptyInput("sentence has no tokens")
    V = word_logit_matrix(featurize(words, model), model, subset)
    state = MaskState(words)
    accepted: list[LanguageAssignment] = []
    rounds: list[Round] = []
    reason = Termination.LAMBDA_REACHED

    while state.iteration < cfg.lam:
        residual = state.residual_words()
        if not residual:
            reason = Termination.EMPTY_RESIDUAL
            break
        state.iteration += 1
        label, prob = predict(featurize(residual, model), model, subset).top
        if cfg.step1_confidence is not None and prob < cfg.step1_confidence:
            reason = Termination.LOW_CONFIDENCE_PREDICTION
            break
        if label in (a.label for a in accepted):
            reason = Termination.REPEAT_LANGUAGE
            break

        row = subset.position(label)
        ranks = column_ranks(V, row)
        candidates = state.unmasked()
        assigned = _members(ranks, candidates, cfg.beta)
        if joined_byte_len([words[t] for t in assigned]) < cfg.tau:
            assigned = _members(ranks, candidates, cfg.beta * cfg.beta_retry_factor)
        assigned_words = [words[t] for t in assigned]
        ok, fs_prob = validate_feature_set(assigned_words, label, model, subset, cfg)
        if ok:
            accepted.append(LanguageAssignment(
                label, tuple(assigned), tuple(assigned_words),
                joined_byte_len(assigned_words), fs_prob, state.iteration,
            ))

        n_masked = state.mask(_members(ranks, candidates, cfg.alpha))
        rounds.append(Round(
            state.iteration, label, prob, tuple(assigned), ok,
            tuple(t for t, m in enumerate(state.masked) if m),
        ))
        if residual_byte_len(state) <= cfg.tau:
            reason = Termination.RESIDUAL_TOO_SHORT
            break
        if n_masked == 0:
            # the next round would see the same residual and the same label
            reason = Termination.REPEAT_LANGUAGE if ok else Termination.LOW_CONFIDENCE_FEATURE_SET
            break

    return SentencePrediction(tuple(accepted), reason, tuple(rounds))
