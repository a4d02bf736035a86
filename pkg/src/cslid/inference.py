"""Sentence posteriors and per-word logits for a loaded classifier."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .model_io import EOS, LABEL_PREFIX, ClassifierModel, hash_token, strip_label, word_ngram_ids

# fastText token separators
_SEPARATORS = re.compile(r"[ \t\n\v\f\r\x00]+")


class EmptyInput(ValueError):
    pass


class EmptyFeatureSet(ValueError):
    pass


class NoLabelsMatched(ValueError):
    pass


def tokenize(sentence: str) -> list[str]:
    return [w for w in _SEPARATORS.split(sentence) if w]


@dataclass(frozen=True)
class LabelSubset:
    """Rows of the output matrix taking part in prediction, ascending."""

    indices: tuple[int, ...]
    names: tuple[str, ...]
    source: str | None = None

    def __post_init__(self):
        if not self.indices:
            raise NoLabelsMatched("label subset is empty")
        if len(set(self.indices)) != len(self.indices):
            raise ValueError("label subset contains duplicates")
        if len(self.names) != len(self.indices):
            raise ValueError("names and indices differ in length")

    def __len__(self):
        return len(self.indices)

    def position(self, name: str) -> int:
        return self.names.index(name)


def full_subset(model: ClassifierModel) -> LabelSubset:
    return LabelSubset(tuple(range(model.nlabels)), tuple(model.labels))


def read_label_file(path: str | Path) -> list[str]:
    """One label per line; blank lines and ``#`` comments are skipped."""
    names = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                names.append(line)
    return names


def restrict_labels(
    model: ClassifierModel, names: Iterable[str], source: str | None = None,
) -> tuple[LabelSubset, list[str]]:
    """Subset of ``model`` labels named in ``names``.

    Names may carry the ``__label__`` prefix or not.  Returns the subset and
    the names that matched nothing.
    """
    lookup = {name: i for i, name in enumerate(model.labels)}
    chosen, missing = set(), []
    for name in names:
        i = lookup.get(strip_label(name))
        if i is None:
            missing.append(name)
        else:
            chosen.add(i)
    if not chosen:
        raise NoLabelsMatched(f"none of {len(missing)} requested labels exist in the model")
    indices = tuple(sorted(chosen))
    labels = model.labels
    return LabelSubset(indices, tuple(labels[i] for i in indices), source), missing


def load_subset(model: ClassifierModel, path: str | Path | None) -> tuple[LabelSubset, list[str]]:
    if path is None:
        return full_subset(model), []
    return restrict_labels(model, read_label_file(path), source=str(path))


@dataclass(frozen=True)
class SentenceFeatures:
    """Input-matrix rows of a sentence.

    ``word_ids[t]`` are the rows building word ``t``; ``extra_ids`` are rows
    that belong to no single word (end-of-sentence token, word n-grams).
    """

    words: tuple[str, ...]
    word_ids: tuple[tuple[int, ...], ...]
    extra_ids: tuple[int, ...]

    @property
    def T(self) -> int:
        return sum(len(ids) for ids in self.word_ids) + len(self.extra_ids)

    def all_ids(self) -> list[int]:
        ids = [i for w in self.word_ids for i in w]
        ids.extend(self.extra_ids)
        return ids


def featurize(sentence: str | Sequence[str], model: ClassifierModel) -> SentenceFeatures:
    """Feature rows of ``sentence`` as the reference reads a single line.

    A sentence may be given pre-tokenized.  The end-of-sentence token is
    appended, as the reference does for every predicted line.
    """
    words = tokenize(sentence) if isinstance(sentence, str) else [w for w in sentence if w]
    if not words:
        raise EmptyInput("sentence has no tokens")
    d = model.dictionary
    word_ids = []
    hashes = []
    for w in words:
        wid = d.get_id(w)
        is_label = wid >= d.nwords if wid >= 0 else w.startswith(LABEL_PREFIX)
        if is_label:
            word_ids.append(())
            continue
        word_ids.append(model.word_feature_ids(w))
        hashes.append(hash_token(w))
    extra = []
    eos = d.word_id(EOS)
    if eos >= 0:
        extra.append(eos)
    hashes.append(hash_token(EOS))
    hp = model.hyperparams
    if hp.word_ngrams > 1:
        extra.extend(word_ngram_ids(hashes, hp.word_ngrams, hp.bucket, d.nwords, d.prune_map))
    return SentenceFeatures(tuple(words), tuple(word_ids), tuple(extra))


@dataclass(frozen=True)
class Prediction:
    """Labels ranked by descending probability."""

    labels: tuple[str, ...]
    probs: np.ndarray
    indices: tuple[int, ...]

    @property
    def top(self) -> tuple[str, float]:
        return self.labels[0], float(self.probs[0])

    def prob(self, label: str) -> float:
        return float(self.probs[self.labels.index(label)])

    def topk(self, k: int) -> list[tuple[str, float]]:
        return [(l, float(p)) for l, p in zip(self.labels[:k], self.probs[:k])]


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = np.exp(z - z.max())
    return z / z.sum()


def hidden_vector(features: SentenceFeatures, model: ClassifierModel) -> np.ndarray:
    ids = features.all_ids()
    if not ids:
        raise EmptyFeatureSet("sentence produced no features")
    return model.input[ids].mean(axis=0, dtype=np.float32)


def rank(logits: np.ndarray, subset: LabelSubset) -> Prediction:
    """Softmax over ``logits`` (one per subset row) and rank descending."""
    probs = softmax(logits)
    order = np.lexsort((np.arange(len(probs)), -probs))
    return Prediction(
        tuple(subset.names[i] for i in order),
        probs[order],
        tuple(subset.indices[i] for i in order),
    )


def logits(features: SentenceFeatures, model: ClassifierModel, subset: LabelSubset) -> np.ndarray:
    """Subset logits, accumulated in float64 so they do not depend on the subset."""
    hidden = hidden_vector(features, model).astype(np.float64)
    return model.output[list(subset.indices)].astype(np.float64) @ hidden


def predict(features: SentenceFeatures, model: ClassifierModel, subset: LabelSubset) -> Prediction:
    return rank(logits(features, model, subset), subset)


def predict_text(sentence: str, model: ClassifierModel, subset: LabelSubset) -> Prediction:
    return predict(featurize(sentence, model), model, subset)


@dataclass(frozen=True)
class WordLogitMatrix:
    """Per-label, per-word logits; row ``r`` is ``labels.names[r]``."""

    labels: LabelSubset
    words: tuple[str, ...]
    embeddings: np.ndarray
    values: np.ndarray

    @property
    def byte_lengths(self) -> list[int]:
        return [len(w.encode("utf-8")) for w in self.words]

    def column(self, t: int) -> np.ndarray:
        return self.values[:, t]


def word_logit_matrix(
    features: SentenceFeatures, model: ClassifierModel, subset: LabelSubset,
) -> WordLogitMatrix:
    """Logits of every subset label for every word's summed embedding."""
    if not features.words:
        raise EmptyInput("sentence has no tokens")
    emb = np.zeros((len(features.words), model.dim), dtype=np.float32)
    for t, ids in enumerate(features.word_ids):
        if ids:
            emb[t] = model.input[list(ids)].sum(axis=0, dtype=np.float32)
    values = model.output[list(subset.indices)].astype(np.float64) @ emb.T.astype(np.float64)
    return WordLogitMatrix(subset, features.words, emb, values)
