"""Code-switching language identification on top of fastText classifiers."""

from .evaluation import (
    BaselineConfig,
    EvalReport,
    GoldSentence,
    baseline_predict,
    ingest_token_labeled,
    preprocess,
    score,
    synthesize_cs,
)
from .inference import (
    LabelSubset,
    Prediction,
    WordLogitMatrix,
    featurize,
    full_subset,
    predict,
    predict_text,
    restrict_labels,
    word_logit_matrix,
)
from .masklid import MaskLIDConfig, SentencePrediction, Termination, masklid
from .model_io import ClassifierModel, hash_token, load_model

__version__ = "0.1.0"
