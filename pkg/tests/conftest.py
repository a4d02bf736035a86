import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ftwriter import write_model  # noqa: E402

from cslid.model_io import load_model  # noqa: E402

TINY_WORDS = ["</s>", "kahve", "film", "love", "coffee", "shop", "gece", "şarkı", "café"]
TINY_LABELS = ["__label__tur_Latn", "__label__eng_Latn", "__label__fra_Latn"]
TINY_DIM, TINY_BUCKET = 4, 16


def tiny_arrays(seed=7):
    """Dyadic weights (multiples of 1/8) so float32 sums and dots are exact."""
    rng = np.random.default_rng(seed)
    inp = rng.integers(-8, 9, size=(len(TINY_WORDS) + TINY_BUCKET, TINY_DIM)) / 8
    out = rng.integers(-8, 9, size=(len(TINY_LABELS), TINY_DIM)) / 8
    return inp.astype(np.float32), out.astype(np.float32)


@pytest.fixture(scope="session")
def tiny_path(tmp_path_factory):
    inp, out = tiny_arrays()
    path = tmp_path_factory.mktemp("models") / "tiny.bin"
    return write_model(
        path, words=TINY_WORDS, labels=TINY_LABELS, input_matrix=inp,
        output_matrix=out, dim=TINY_DIM, bucket=TINY_BUCKET, minn=2, maxn=3,
        word_ngrams=2,
    )


@pytest.fixture(scope="session")
def tiny_model(tiny_path):
    return load_model(tiny_path)


# Words cueing one label each.  Output rows are unit vectors, so a word's
# column in the logit matrix is its own embedding's first three entries.
CUE_WORDS = {
    "aaa_Latn": ["aaaa", "abab", "acac", "adad", "aeae", "afaf", "av", "aw", "ax", "ay", "az"],
    "bbb_Latn": ["bbbb", "baba", "bcbc", "bdbd", "bebe", "bfbf"],
    "ccc_Latn": ["cccc", "caca", "cbcb", "cdcd", "cece", "cfcf"],
}
CUE_PROFILE = {
    "aaa_Latn": [8.0, -4.0, -2.0, 0.0],
    "bbb_Latn": [-4.0, 8.0, -2.0, 0.0],
    "ccc_Latn": [-4.0, -2.0, 8.0, 0.0],
}
# aaa is second in both columns, yet wins a sentence made of the two
AMBIGUOUS = {"mixb": [5.0, 6.0, 0.0, 0.0], "mixc": [5.0, 0.0, 6.0, 0.0]}


def cue_model_file(path):
    words = ["</s>"]
    rows = [[0.0] * 4]
    for label, ws in CUE_WORDS.items():
        for w in ws:
            words.append(w)
            rows.append(CUE_PROFILE[label])
    for w, row in AMBIGUOUS.items():
        words.append(w)
        rows.append(row)
    labels = ["__label__" + l for l in CUE_WORDS]
    out = np.eye(3, 4, dtype=np.float32)
    return write_model(path, words=words, labels=labels, input_matrix=rows,
                       output_matrix=out, dim=4)


@pytest.fixture(scope="session")
def cue_path(tmp_path_factory):
    return cue_model_file(tmp_path_factory.mktemp("models") / "cue.bin")


@pytest.fixture(scope="session")
def cue_model(cue_path):
    return load_model(cue_path)
