"""Open-vocabulary temporal action localization with two-stage self-training.

Configuration arguments accept a dict (merged over the synthetic defaults by
the C++ side, unknown keys rejected), a JSON string, or None for defaults.
"""

import json as _json

from . import _ovtal
from ._ovtal import (  # noqa: F401
    Benchmark as _Benchmark,
    ConfigError,
    DataError,
    InvalidInput,
    Model,
    NumericalError,
    PseudoDataset,
    Video,
    Vocabulary,
    average_precision,
    decode_talf,
    default_config,
    diou_loss,
    ema_update,
    encode_talf,
    interpolate_features,
    normalize_word,
    porter_stem,
    soft_nms,
    spearman,
    split_categories,
    tiou,
)

__version__ = _ovtal.__version__


def _cfg(config):
    if config is None:
        return ""
    if isinstance(config, str):
        return config
    return _json.dumps(config)


def normalize_config(config=None):
    """Full effective configuration as a dict."""
    return _ovtal.normalize_config(_cfg(config))


def benchmark(config=None):
    return _Benchmark(_cfg(config))


def train_stage1(labeled, config=None):
    return _ovtal.train_stage1(labeled, _cfg(config))


def pseudo_label(model, pool, config=None):
    return _ovtal.pseudo_label(model, pool, _cfg(config))


def train_stage2(stage1, labeled, pseudo, config=None):
    return _ovtal.train_stage2(stage1, labeled, pseudo, _cfg(config))


def self_train(stage1, labeled, pool, config=None):
    """Returns (model, pseudo_dataset); the model is stage1 when no pseudo-label survives."""
    return _ovtal.self_train(stage1, labeled, pool, _cfg(config))


def proposals(model, video):
    return _ovtal.proposals(model, video)


def detect(model, video, vocab, config=None):
    return _ovtal.detect(model, video, vocab, _cfg(config))


def evaluate_model(model, videos, vocab, config=None):
    return _ovtal.evaluate_model(model, videos, vocab, _cfg(config))


def pseudo_label_quality(pseudo, hidden):
    return _ovtal.pseudo_label_quality(pseudo, hidden)


def run_sweep(axis, values, seeds, config=None):
    """Returns the sweep as CSV text."""
    return _ovtal.run_sweep(axis, [str(v) for v in values], list(seeds), _cfg(config))
