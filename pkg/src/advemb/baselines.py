"""Classifier baselines: one-vs-all linear SVMs and a small MLP.

Both operate on a uniformly weighted (mean over unpadded segments)
representation of the window and rank adverbs by classifier confidence.
"""

from __future__ import annotations

import numpy as np
from sklearn.neural_network import MLPClassifier
from sklearn.svm import LinearSVC

from .dataset import VideoSample
from .retrieval import Ranking


def pooled_features(sample: VideoSample) -> np.ndarray:
    keep = ~sample.pad_mask
    return sample.features[keep].mean(axis=0)


class SvmBaseline:
    """A binary one-vs-all linear SVM per adverb."""

    def __init__(self, n_adverbs: int, seed: int = 0, c: float = 1.0):
        self.n_adverbs = n_adverbs
        self.seed = seed
        self.c = c
        self._models: list[LinearSVC] | None = None

    def fit(self, samples: list[VideoSample]) -> "SvmBaseline":
        x = np.stack([pooled_features(s) for s in samples])
        y = np.array([s.adverb for s in samples])
        self._models = []
        for m in range(self.n_adverbs):
            clf = LinearSVC(C=self.c, random_state=self.seed)
            clf.fit(x, (y == m).astype(int))
            self._models.append(clf)
        return self

    def scores(self, sample: VideoSample) -> np.ndarray:
        """Per-adverb confidence; higher means more likely."""
        if self._models is None:
            raise RuntimeError("baseline not trained")
        x = pooled_features(sample)[None, :]
        return np.array([float(m.decision_function(x)[0]) for m in self._models])


class MlpBaseline:
    """An n-way MLP of two fully connected layers."""

    def __init__(self, n_adverbs: int, seed: int = 0, hidden: int = 64,
                 max_iter: int = 500):
        self.n_adverbs = n_adverbs
        self.seed = seed
        self.hidden = hidden
        self.max_iter = max_iter
        self._model: MLPClassifier | None = None
        self._classes: np.ndarray | None = None

    def fit(self, samples: list[VideoSample]) -> "MlpBaseline":
        x = np.stack([pooled_features(s) for s in samples])
        y = np.array([s.adverb for s in samples])
        self._model = MLPClassifier(hidden_layer_sizes=(self.hidden,),
                                    random_state=self.seed, max_iter=self.max_iter)
        self._model.fit(x, y)
        self._classes = self._model.classes_
        return self

    def scores(self, sample: VideoSample) -> np.ndarray:
        if self._model is None:
            raise RuntimeError("baseline not trained")
        probs = self._model.predict_proba(pooled_features(sample)[None, :])[0]
        out = np.zeros(self.n_adverbs)
        out[self._classes] = probs
        return out


def rank_video_to_adverb(baseline, sample: VideoSample, antonym_of=None,
                         setting: str = "all") -> Ranking:
    """Adverb ranking from classifier confidences (negated into scores)."""
    conf = baseline.scores(sample)
    if setting == "antonym":
        cands = sorted({sample.adverb, antonym_of(sample.adverb)})
    else:
        cands = list(range(len(conf)))
    return Ranking(f"video:{sample.video_id}", cands,
                   [-float(conf[m]) for m in cands], {sample.adverb})


def rank_adverb_to_video(baseline, adverb: int, videos: list[VideoSample],
                         antonym_of=None, setting: str = "all") -> Ranking:
    """Video ranking by the adverb's classifier confidence."""
    if setting == "antonym":
        pair = {adverb, antonym_of(adverb)}
        idx = [i for i, v in enumerate(videos) if v.adverb in pair]
    else:
        idx = list(range(len(videos)))
    scores = [-float(baseline.scores(videos[i])[adverb]) for i in idx]
    relevant = {i for i in idx if videos[i].adverb == adverb}
    return Ranking(f"adverb:{adverb}", idx, scores, relevant)
