"""Annotations, temporal windows, sample assembly and dataset splitting."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .errors import SplitError, StoreFormatError, VocabularyError
from .features import FeatureStore
from .vocab import ActionVocabulary, AdverbVocabulary

log = logging.getLogger(__name__)

ANNOTATION_FIELDS = ("video_id", "action", "adverb", "timestamp", "split")
NO_SPLIT = "-"


@dataclass(frozen=True)
class AnnotationRecord:
    """One weakly timestamped action-adverb label on a video."""

    video_id: str
    action: str
    adverb: str
    timestamp: float
    split: str = NO_SPLIT

    def group_key(self) -> str:
        """Task/group id: the video id prefix before the first underscore."""
        return self.video_id.split("_", 1)[0]


@dataclass
class VideoSample:
    """A model-ready training/eval instance: one feature window plus ids."""

    features: np.ndarray  # (T, D)
    pad_mask: np.ndarray  # (T,) bool, true on padded rows
    action: int
    adverb: int
    video_id: str


def extract_window(store: FeatureStore, video_id: str, timestamp: float,
                   window: int) -> tuple[np.ndarray, np.ndarray]:
    """The window-sized slice of per-second rows centered on the timestamp.

    The center row is floor(timestamp); rows outside the video are
    zero-filled with their pad flag set.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    feats = store.get(video_id)
    s, d = feats.shape
    center = int(np.floor(timestamp))
    start = center - window // 2
    out = np.zeros((window, d))
    pad = np.ones(window, dtype=bool)
    lo = max(start, 0)
    hi = min(start + window, s)
    if hi > lo:
        out[lo - start:hi - start] = feats[lo:hi]
        pad[lo - start:hi - start] = False
    return out, pad


def load_annotations(path, actions: ActionVocabulary | None = None,
                     adverbs: AdverbVocabulary | None = None) -> list[AnnotationRecord]:
    """Read the tab-separated annotation format, validating as it goes."""
    records: list[AnnotationRecord] = []
    seen: set[tuple] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != len(ANNOTATION_FIELDS):
                raise StoreFormatError(
                    f"{path}:{lineno}: expected {len(ANNOTATION_FIELDS)} fields, "
                    f"got {len(parts)}")
            vid, action, adverb, ts, split = parts
            try:
                timestamp = float(ts)
            except ValueError:
                raise StoreFormatError(f"{path}:{lineno}: bad timestamp {ts!r}") from None
            if timestamp < 0:
                raise StoreFormatError(f"{path}:{lineno}: negative timestamp")
            if actions is not None:
                try:
                    actions.id_of(action)
                except VocabularyError:
                    raise StoreFormatError(
                        f"{path}:{lineno}: unknown action {action!r}") from None
            if adverbs is not None:
                try:
                    adverbs.id_of(adverb)
                except VocabularyError:
                    raise StoreFormatError(
                        f"{path}:{lineno}: unknown adverb {adverb!r}") from None
            key = (vid, timestamp, action, adverb)
            if key in seen:
                raise StoreFormatError(f"{path}:{lineno}: duplicate record {key}")
            seen.add(key)
            records.append(AnnotationRecord(vid, action, adverb, timestamp, split))
    if not records:
        log.warning("annotation file %s is empty", path)
    return records


def save_annotations(path, records, header_lines: list[str] | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in header_lines or []:
            fh.write(f"# {line}\n")
        fh.write("# " + "\t".join(ANNOTATION_FIELDS) + "\n")
        for r in records:
            fh.write(f"{r.video_id}\t{r.action}\t{r.adverb}\t{r.timestamp!r}\t{r.split}\n")


def split_dataset(records: list[AnnotationRecord], rng: np.random.Generator,
                  n_test_groups: int | None = None,
                  test_fraction: float | None = None,
                  tolerance: float = 0.1) -> tuple[list[AnnotationRecord],
                                                   list[AnnotationRecord]]:
    """Group-disjoint train/test split, re-tagging the records.

    Either a test-group count or a test record fraction (with tolerance)
    must be given.  Every group lands entirely on one side.
    """
    groups = sorted({r.group_key() for r in records})
    if len(groups) < 2:
        raise SplitError("cannot split a single-group dataset")
    order = list(rng.permutation(len(groups)))
    shuffled = [groups[i] for i in order]

    if n_test_groups is not None:
        if not 1 <= n_test_groups < len(groups):
            raise SplitError(
                f"n_test_groups must be in [1, {len(groups) - 1}], got {n_test_groups}")
        test_groups = set(shuffled[:n_test_groups])
    elif test_fraction is not None:
        if not 0 < test_fraction < 1:
            raise SplitError(f"test_fraction must be in (0, 1), got {test_fraction}")
        counts = {g: 0 for g in groups}
        for r in records:
            counts[r.group_key()] += 1
        target = test_fraction * len(records)
        test_groups: set[str] = set()
        total = 0
        for g in shuffled:
            if total >= target:
                break
            test_groups.add(g)
            total += counts[g]
        if not 1 <= len(test_groups) < len(groups):
            raise SplitError("degenerate split: all or no groups in test")
        if abs(total / len(records) - test_fraction) > tolerance:
            raise SplitError(
                f"achieved test fraction {total / len(records):.3f} outside "
                f"{test_fraction} +- {tolerance}")
    else:
        raise SplitError("one of n_test_groups or test_fraction is required")

    train, test = [], []
    for r in records:
        if r.group_key() in test_groups:
            test.append(replace(r, split="test"))
        else:
            train.append(replace(r, split="train"))
    return train, test


def build_samples(store: FeatureStore, records: list[AnnotationRecord],
                  actions: ActionVocabulary, adverbs: AdverbVocabulary,
                  window: int) -> list[VideoSample]:
    """Resolve names to ids and cut each record's feature window."""
    samples = []
    for r in records:
        feats, pad = extract_window(store, r.video_id, r.timestamp, window)
        samples.append(VideoSample(feats, pad, actions.id_of(r.action),
                                   adverbs.id_of(r.adverb), r.video_id))
    return samples


def mask_modality(features: np.ndarray, keep: str, split: int | None = None) -> np.ndarray:
    """Zero out the feature half not in ``keep``.

    ``keep`` is "both", "appearance" (first half), "motion" (second
    half) or "neither".  ``split`` overrides the default midpoint.
    """
    if keep == "both":
        return features
    split = features.shape[1] // 2 if split is None else split
    out = features.copy()
    if keep == "appearance":
        out[:, split:] = 0.0
    elif keep == "motion":
        out[:, :split] = 0.0
    elif keep == "neither":
        out[:] = 0.0
    else:
        raise ValueError(f"unknown modality {keep!r}")
    return out
