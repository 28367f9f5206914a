"""Lexical post-OCR correction against a gazetteer vocabulary.

A recognized label is replaced by the closest vocabulary surface under
Levenshtein distance; ties go to the more popular surface, then to the
alphabetically smaller one.
"""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import InputError
from .text import normalize_label

log = logging.getLogger(__name__)

DEFAULT_MAX_DISTANCE = 2


def levenshtein(a: str, b: str) -> int:
    """Minimum number of single-character insertions, deletions and substitutions."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


@dataclass(frozen=True)
class VocabularyEntry:
    surface: str
    frequency: int


@dataclass(frozen=True)
class CorrectionResult:
    postocr_label: str
    matched: bool
    distance: int = 0


class Vocabulary(Mapping):
    """Immutable surface -> frequency table with a length index for candidate search."""

    def __init__(self, frequencies: Mapping[str, int] | None = None, skipped: int = 0):
        self._freq = dict(sorted((frequencies or {}).items()))
        self.skipped = skipped
        buckets = defaultdict(list)
        for surface in self._freq:
            buckets[len(surface)].append(surface)
        self._by_length = dict(buckets)

    def __getitem__(self, surface):
        return self._freq[surface]

    def __iter__(self):
        return iter(self._freq)

    def __len__(self):
        return len(self._freq)

    def entries(self) -> list[VocabularyEntry]:
        return [VocabularyEntry(s, f) for s, f in self._freq.items()]

    def candidates(self, length: int, spread: int):
        for n in range(max(1, length - spread), length + spread + 1):
            yield from self._by_length.get(n, ())


def _name_and_popularity(entity):
    if isinstance(entity, tuple):
        return entity[0], entity[1]
    return entity.name, entity.popularity


def build_vocabulary(entities: Iterable) -> Vocabulary:
    """Aggregate popularity per normalized entity name.

    ``entities`` yields objects with ``name`` / ``popularity`` attributes or
    plain ``(name, popularity)`` tuples. Names that normalize to nothing are
    skipped and counted in ``Vocabulary.skipped``.
    """
    freq: dict[str, int] = defaultdict(int)
    skipped = 0
    for ent in entities:
        name, pop = _name_and_popularity(ent)
        surface = normalize_label(name or "")
        if not surface:
            skipped += 1
            continue
        if int(pop) < 1:
            raise InputError(f"popularity of {name!r} must be >= 1, got {pop}")
        freq[surface] += int(pop)
    if skipped:
        log.warning("vocabulary: skipped %d entities with empty names", skipped)
    return Vocabulary(freq, skipped=skipped)


def effective_threshold(normalized: str, max_distance: int) -> int:
    return min(max_distance, len(normalized) // 3)


def correct(text: str, vocab: Vocabulary, max_distance: int = DEFAULT_MAX_DISTANCE) -> CorrectionResult:
    if max_distance < 0:
        raise InputError("max_distance must be >= 0")
    norm = normalize_label(text)
    if norm in vocab:
        return CorrectionResult(norm, True, 0)
    limit = effective_threshold(norm, max_distance)
    best = None
    for surface in vocab.candidates(len(norm), limit):
        d = levenshtein(norm, surface)
        if d > limit:
            continue
        key = (d, -vocab[surface], surface)
        if best is None or key < best:
            best = key
    if best is None:
        return CorrectionResult(norm, False, 0)
    return CorrectionResult(best[2], True, best[0])


class PostOCRCorrector(BaseEstimator, TransformerMixin):
    """Learns a vocabulary from gazetteer entities and corrects recognized labels.

    ``fit`` takes entities (or ``(name, popularity)`` pairs); ``transform``
    maps an iterable of strings to an object array of corrected labels.
    Use :meth:`correct_one` for the full :class:`CorrectionResult`.
    """

    def __init__(self, max_distance: int = DEFAULT_MAX_DISTANCE):
        self.max_distance = max_distance

    def fit(self, X, y=None):
        if self.max_distance < 0:
            raise InputError("max_distance must be >= 0")
        self.vocabulary_ = build_vocabulary(X)
        return self

    def correct_one(self, text: str) -> CorrectionResult:
        check_is_fitted(self, "vocabulary_")
        return correct(text, self.vocabulary_, self.max_distance)

    def transform(self, X):
        check_is_fitted(self, "vocabulary_")
        return np.array([self.correct_one(t).postocr_label for t in X], dtype=object)
