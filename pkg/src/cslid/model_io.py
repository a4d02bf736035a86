"""Reader for fastText supervised ``.bin`` models and its feature hashing.

Only the unquantized version-12 format is understood.  Matrices are mapped
read-only from the file, so loading a multi-gigabyte model is cheap and the
resulting :class:`ClassifierModel` can be shared between threads.
"""

from __future__ import annotations

import enum
import logging
import mmap
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

FASTTEXT_MAGIC = 793712314
FASTTEXT_VERSION = 12

EOS = "</s>"
BOW = "<"
EOW = ">"
LABEL_PREFIX = "__label__"

FNV_OFFSET_BASIS = 2166136261
FNV_PRIME = 16777619
WORD_NGRAM_MULTIPLIER = 116049371

_U32 = 0xFFFFFFFF
_U64 = 0xFFFFFFFFFFFFFFFF


class ModelFormatError(ValueError):
    """Raised when a model file cannot be read."""


class BadMagic(ModelFormatError):
    pass


class UnsupportedVersion(ModelFormatError):
    pass


class QuantizedUnsupported(ModelFormatError):
    pass


class TruncatedFile(ModelFormatError):
    pass


class NonSupervisedModel(ModelFormatError):
    pass


class LossKind(enum.IntEnum):
    HS = 1
    NS = 2
    SOFTMAX = 3
    OVA = 4


class ModelKind(enum.IntEnum):
    CBOW = 1
    SKIPGRAM = 2
    SUPERVISED = 3


class EntryType(enum.IntEnum):
    WORD = 0
    LABEL = 1


@dataclass(frozen=True)
class ModelHyperparams:
    """The args block stored in the model header (field order as on disk)."""

    dim: int
    ws: int = 5
    epoch: int = 5
    min_count: int = 1
    neg: int = 5
    word_ngrams: int = 1
    loss: int = LossKind.SOFTMAX
    model: int = ModelKind.SUPERVISED
    bucket: int = 0
    minn: int = 0
    maxn: int = 0
    lr_update_rate: int = 100
    t: float = 1e-4

    def __post_init__(self):
        if self.dim <= 0:
            raise ModelFormatError(f"dim must be positive, got {self.dim}")
        if self.bucket < 0:
            raise ModelFormatError(f"bucket must be >= 0, got {self.bucket}")
        if self.maxn > 0 and self.minn > self.maxn:
            raise ModelFormatError(f"minn={self.minn} > maxn={self.maxn}")

    @property
    def loss_kind(self) -> str:
        return "softmax" if self.loss == LossKind.SOFTMAX else "other"

    @property
    def model_kind(self) -> str:
        return "supervised" if self.model == ModelKind.SUPERVISED else "other"


@dataclass(frozen=True)
class DictEntry:
    word: str
    count: int
    type: EntryType


@dataclass(frozen=True)
class FeatureDictionary:
    """Vocabulary of a model: word entries first, then label entries.

    ``prune_map`` is ``None`` for unpruned models.  For pruned models it maps
    a hash bucket to its compacted row offset; buckets missing from the map
    have no embedding.
    """

    entries: tuple[DictEntry, ...]
    nwords: int
    nlabels: int
    ntokens: int = 0
    prune_map: dict[int, int] | None = None
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.nwords + self.nlabels != len(self.entries):
            raise ModelFormatError(
                f"dictionary size {len(self.entries)} != nwords + nlabels "
                f"({self.nwords} + {self.nlabels})"
            )
        index = {e.word: i for i, e in enumerate(self.entries)}
        if len(index) != len(self.entries):
            raise ModelFormatError("dictionary contains duplicate entries")
        object.__setattr__(self, "_index", index)

    @property
    def words(self) -> list[str]:
        return [e.word for e in self.entries[: self.nwords]]

    @property
    def labels(self) -> list[str]:
        return [e.word for e in self.entries[self.nwords:]]

    def get_id(self, token: str) -> int:
        """Entry id of ``token`` or -1 when absent."""
        return self._index.get(token, -1)

    def word_id(self, token: str) -> int:
        """Id of ``token`` if it is a word entry, else -1."""
        i = self._index.get(token, -1)
        return i if 0 <= i < self.nwords else -1

    def bucket_row(self, bucket_id: int) -> int | None:
        """Input-matrix row of a hashed feature bucket, honoring pruning."""
        if self.prune_map is None:
            return self.nwords + bucket_id
        offset = self.prune_map.get(bucket_id)
        return None if offset is None else self.nwords + offset


@dataclass(frozen=True, eq=False)
class ClassifierModel:
    hyperparams: ModelHyperparams
    dictionary: FeatureDictionary
    input: np.ndarray
    output: np.ndarray
    path: str | None = None
    _subword_cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        hp, d = self.hyperparams, self.dictionary
        if self.input.ndim != 2 or self.output.ndim != 2:
            raise ModelFormatError("matrices must be two-dimensional")
        if self.input.shape[1] != hp.dim or self.output.shape[1] != hp.dim:
            raise ModelFormatError(
                f"matrix widths {self.input.shape[1]}/{self.output.shape[1]} "
                f"do not match dim={hp.dim}"
            )
        if self.output.shape[0] != d.nlabels:
            raise ModelFormatError(
                f"output matrix has {self.output.shape[0]} rows, expected {d.nlabels}"
            )
        if d.prune_map is None:
            expected_rows = d.nwords + hp.bucket
        else:
            expected_rows = d.nwords + len(d.prune_map)
        if self.input.shape[0] != expected_rows:
            raise ModelFormatError(
                f"input matrix has {self.input.shape[0]} rows, expected {expected_rows}"
            )

    @property
    def dim(self) -> int:
        return self.hyperparams.dim

    @property
    def nlabels(self) -> int:
        return self.dictionary.nlabels

    @property
    def labels(self) -> list[str]:
        """Label names with the ``__label__`` prefix removed."""
        return [strip_label(x) for x in self.dictionary.labels]

    def word_feature_ids(self, word: str) -> tuple[int, ...]:
        """Input rows that build ``word``: its own id plus its subwords."""
        ids = self._subword_cache.get(word)
        if ids is None:
            ids = tuple(subword_ids(word, self.hyperparams, self.dictionary))
            self._subword_cache[word] = ids
        return ids


def strip_label(label: str) -> str:
    return label[len(LABEL_PREFIX):] if label.startswith(LABEL_PREFIX) else label


# -- hashing ---------------------------------------------------------------


def hash_token(token: bytes | str) -> int:
    """32-bit FNV-1a hash of ``token`` as computed by fastText.

    fastText feeds each byte through a signed ``char`` before widening to
    ``uint32``, so bytes >= 0x80 are XORed in sign-extended form.  For ASCII
    input this is plain FNV-1a.
    """
    if isinstance(token, str):
        token = token.encode("utf-8")
    h = FNV_OFFSET_BASIS
    for b in token:
        if b >= 0x80:
            b |= 0xFFFFFF00
        h = ((h ^ b) * FNV_PRIME) & _U32
    return h


def char_ngrams(word: str, minn: int, maxn: int) -> list[bytes]:
    """Character n-grams of ``<word>`` with ``minn <= n <= maxn`` characters.

    N-grams are cut on UTF-8 character boundaries.  The lone boundary markers
    ``<`` and ``>`` are never emitted as unigrams.
    """
    if maxn <= 0:
        return []
    data = (BOW + word + EOW).encode("utf-8")
    size = len(data)
    grams = []
    for i in range(size):
        if data[i] & 0xC0 == 0x80:
            continue
        j, n = i, 1
        while j < size and n <= maxn:
            j += 1
            while j < size and data[j] & 0xC0 == 0x80:
                j += 1
            if n >= minn and not (n == 1 and (i == 0 or j == size)):
                grams.append(data[i:j])
            n += 1
    return grams


def subword_ids(word: str, hp: ModelHyperparams, dictionary: FeatureDictionary) -> list[int]:
    """Feature ids making up ``word``: the word id if known, then n-gram buckets."""
    wid = dictionary.word_id(word)
    ids = [wid] if wid >= 0 else []
    if word == EOS or hp.maxn <= 0 or hp.bucket == 0:
        return ids
    for gram in char_ngrams(word, hp.minn, hp.maxn):
        row = dictionary.bucket_row(hash_token(gram) % hp.bucket)
        if row is not None:
            ids.append(row)
    return ids


def word_ngram_ids(
    word_hashes: list[int], order: int, bucket: int, nwords: int,
    prune_map: dict[int, int] | None = None,
) -> list[int]:
    """Ids of word n-grams (2 <= n <= order) over consecutive token hashes.

    The reference stores token hashes as ``int32`` and widens them to
    ``uint64`` with sign extension before combining; that is reproduced here.
    """
    if order < 1:
        raise ValueError(f"word n-gram order must be >= 1, got {order}")
    if bucket == 0:
        return []
    signed = [h - (1 << 32) if h >= 0x80000000 else h for h in word_hashes]
    ids = []
    for i in range(len(signed)):
        h = signed[i] & _U64
        for j in range(i + 1, min(len(signed), i + order)):
            h = (h * WORD_NGRAM_MULTIPLIER + signed[j]) & _U64
            b = h % bucket
            if prune_map is None:
                ids.append(nwords + b)
            elif b in prune_map:
                ids.append(nwords + prune_map[b])
    return ids


# -- binary reader ---------------------------------------------------------


class _Reader:
    def __init__(self, buf, path):
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.buf):
            raise TruncatedFile(f"{self.path}: unexpected end of file at byte {self.pos}")
        values = struct.unpack_from(fmt, self.buf, self.pos)
        self.pos += size
        return values if len(values) > 1 else values[0]

    def cstring(self) -> bytes:
        end = self.buf.find(b"\0", self.pos)
        if end < 0:
            raise TruncatedFile(f"{self.path}: unterminated string at byte {self.pos}")
        s = self.buf[self.pos:end]
        self.pos = end + 1
        return bytes(s)

    def matrix(self, what: str) -> np.ndarray:
        if self.take("<?"):
            raise QuantizedUnsupported(f"{self.path}: quantized {what} matrix is not supported")
        rows, cols = self.take("<qq")
        if rows < 0 or cols < 0:
            raise ModelFormatError(f"{self.path}: negative {what} matrix shape {rows}x{cols}")
        nbytes = rows * cols * 4
        if self.pos + nbytes > len(self.buf):
            raise TruncatedFile(
                f"{self.path}: {what} matrix needs {nbytes} bytes, "
                f"{len(self.buf) - self.pos} left"
            )
        arr = np.frombuffer(self.buf, dtype="<f4", count=rows * cols, offset=self.pos)
        self.pos += nbytes
        return arr.reshape(rows, cols)


def load_model(path: str | Path) -> ClassifierModel:
    """Load a supervised fastText model from ``path``.

    Raises a :class:`ModelFormatError` subclass for files that are not an
    unquantized version-12 supervised model, and ``OSError`` for unreadable
    paths.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        try:
            buf = mmap.mmap(fh.fileno(), 0, access=mmap.ACCESS_READ)
        except ValueError:  # empty file cannot be mapped
            buf = b""
    r = _Reader(buf, path)

    magic = r.take("<i")
    if magic != FASTTEXT_MAGIC:
        raise BadMagic(f"{path}: not a fastText model (magic {magic})")
    version = r.take("<i")
    if version != FASTTEXT_VERSION:
        raise UnsupportedVersion(f"{path}: format version {version}, only {FASTTEXT_VERSION} is supported")

    *ints, t = r.take("<12id")
    hp = ModelHyperparams(*ints, t=t)
    if hp.model != ModelKind.SUPERVISED:
        raise NonSupervisedModel(f"{path}: model kind {hp.model} is not supervised")
    if hp.loss != LossKind.SOFTMAX:
        logger.warning("%s: loss %s is not softmax; probabilities use softmax anyway", path, hp.loss)

    size, nwords, nlabels, ntokens, prune_size = r.take("<iiiqq")
    entries = []
    for _ in range(size):
        word = r.cstring().decode("utf-8", errors="replace")
        count, etype = r.take("<qb")
        entries.append(DictEntry(word, count, EntryType(etype)))
    prune_map = None
    if prune_size >= 0:
        prune_map = {}
        for _ in range(prune_size):
            k, v = r.take("<ii")
            prune_map[k] = v
    dictionary = FeatureDictionary(tuple(entries), nwords, nlabels, ntokens, prune_map)

    inp = r.matrix("input")
    out = r.matrix("output")
    for what, m in (("input", inp), ("output", out)):
        if m.size and not np.isfinite(m).all():
            raise ModelFormatError(f"{path}: {what} matrix contains non-finite values")
    if r.pos != len(buf):
        logger.warning("%s: %d trailing bytes ignored", path, len(buf) - r.pos)
    return ClassifierModel(hp, dictionary, inp, out, path=str(path))
