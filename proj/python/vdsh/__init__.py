# SPDX-License-Identifier: Apache-2.0
"""Variational deep semantic hashing: training, binary codes and Hamming search."""

from ._vdsh import (
    ConfigError,
    Corpus,
    DataError,
    DivergenceError,
    HashIndex,
    Model,
    binarize,
    evaluate,
    fit_thresholds,
    hamming,
    kl_to_standard_normal,
    synthetic_jsonl,
    tokenize,
    train,
)

__all__ = [
    "ConfigError",
    "Corpus",
    "DataError",
    "DivergenceError",
    "HashIndex",
    "Model",
    "binarize",
    "evaluate",
    "fit_thresholds",
    "hamming",
    "kl_to_standard_normal",
    "synthetic_jsonl",
    "tokenize",
    "train",
]
