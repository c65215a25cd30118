"""Action and adverb vocabularies plus the text word-vector format.

Word vectors use the common text layout: one token per line followed by
its vector components, space separated.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, VocabularyError


def load_word_vectors(path) -> dict[str, np.ndarray]:
    """Read a text word-vector file into token -> float64 vector."""
    vectors: dict[str, np.ndarray] = {}
    dim = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            token = parts[0]
            try:
                vec = np.array([float(x) for x in parts[1:]], dtype=float)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad vector component ({exc})") from None
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise DataError(
                    f"{path}:{lineno}: vector has {vec.size} components, expected {dim}")
            vectors[token] = vec
    return vectors


def save_word_vectors(path, vectors: dict[str, np.ndarray]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for token in vectors:
            comps = " ".join(repr(float(x)) for x in vectors[token])
            fh.write(f"{token} {comps}\n")


@dataclass
class ActionVocabulary:
    """Clustered action names with dense ids and their pretrained vectors."""

    names: list[str]
    vectors: np.ndarray  # (A, embed_dim)
    _index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.names) != len(set(self.names)):
            raise VocabularyError("duplicate action names")
        if self.vectors.shape[0] != len(self.names):
            raise VocabularyError(
                f"{len(self.names)} actions but {self.vectors.shape[0]} vectors")
        self.vectors = np.asarray(self.vectors, dtype=float)
        self._index = {n: i for i, n in enumerate(self.names)}

    def __len__(self):
        return len(self.names)

    def id_of(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise VocabularyError(f"unknown action {name!r}") from None

    def vector_of(self, a: int) -> np.ndarray:
        return self.vectors[a]

    def digest(self) -> str:
        h = hashlib.sha256()
        for n in self.names:
            h.update(n.encode("utf-8") + b"\0")
        h.update(np.ascontiguousarray(self.vectors).tobytes())
        return h.hexdigest()


@dataclass
class AdverbVocabulary:
    """Adverbs with dense ids, an involutive antonym map, optional vectors."""

    names: list[str]
    antonym: list[int]
    vectors: np.ndarray | None = None  # (M, embed_dim) when present
    _index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.names) != len(set(self.names)):
            raise VocabularyError("duplicate adverb names")
        m = len(self.names)
        if len(self.antonym) != m:
            raise VocabularyError("antonym list length mismatch")
        for i, j in enumerate(self.antonym):
            if not 0 <= j < m or j == i or self.antonym[j] != i:
                raise VocabularyError(
                    "antonym map must be an involution without fixed points")
        if self.vectors is not None:
            self.vectors = np.asarray(self.vectors, dtype=float)
            if self.vectors.shape[0] != m:
                raise VocabularyError("adverb vector count mismatch")
        self._index = {n: i for i, n in enumerate(self.names)}

    def __len__(self):
        return len(self.names)

    def id_of(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise VocabularyError(f"unknown adverb {name!r}") from None

    def antonym_of(self, m: int) -> int:
        return self.antonym[m]

    def pair_representative(self, m: int) -> int:
        """Canonical member of m's antonym pair (the smaller id)."""
        return min(m, self.antonym[m])

    def pairs(self) -> list[tuple[int, int]]:
        return [(i, self.antonym[i]) for i in range(len(self.names)) if i < self.antonym[i]]

    def vector_of(self, m: int) -> np.ndarray:
        if self.vectors is None:
            raise VocabularyError(f"no pretrained vector for adverb {self.names[m]!r}")
        return self.vectors[m]

    def digest(self) -> str:
        h = hashlib.sha256()
        for n, a in zip(self.names, self.antonym):
            h.update(f"{n}\0{a};".encode("utf-8"))
        if self.vectors is not None:
            h.update(np.ascontiguousarray(self.vectors).tobytes())
        return h.hexdigest()


def build_action_vocabulary(names: list[str], vectors: dict[str, np.ndarray]) -> ActionVocabulary:
    """Vocabulary over ``names`` (sorted, deduplicated) with vectors looked up by name."""
    ordered = sorted(set(names))
    missing = [n for n in ordered if n not in vectors]
    if missing:
        raise VocabularyError(f"no pretrained vector for actions: {', '.join(missing)}")
    mat = np.stack([vectors[n] for n in ordered])
    return ActionVocabulary(ordered, mat)


def build_adverb_vocabulary(pairs: list[tuple[str, str]],
                            vectors: dict[str, np.ndarray] | None = None,
                            require_vectors: bool = False) -> AdverbVocabulary:
    """Vocabulary from antonym pairs; ids follow sorted pair order."""
    names: list[str] = []
    for a, b in sorted((min(p), max(p)) for p in pairs):
        if a == b:
            raise VocabularyError(f"adverb {a!r} paired with itself")
        names.extend([a, b])
    if len(names) != len(set(names)):
        raise VocabularyError("adverb appears in more than one antonym pair")
    antonym = []
    for i in range(0, len(names), 2):
        antonym.extend([i + 1, i])
    mat = None
    if vectors is not None:
        present = [n in vectors for n in names]
        if all(present):
            mat = np.stack([vectors[n] for n in names])
        elif require_vectors:
            missing = [n for n, ok in zip(names, present) if not ok]
            raise VocabularyError(f"no pretrained vector for adverbs: {', '.join(missing)}")
    return AdverbVocabulary(names, antonym, mat)
