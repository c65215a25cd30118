import numpy as np
import pytest

from advemb.dataset import VideoSample
from advemb.vocab import ActionVocabulary, AdverbVocabulary


def make_vocabs(n_actions, n_pairs, embed_dim, seed=0):
    rng = np.random.default_rng(seed)
    actions = ActionVocabulary(
        [f"act{i:02d}" for i in range(n_actions)],
        rng.standard_normal((n_actions, embed_dim)) / np.sqrt(embed_dim))
    names, antonym = [], []
    for p in range(n_pairs):
        names += [f"adv{p}a", f"adv{p}b"]
        antonym += [2 * p + 1, 2 * p]
    adverbs = AdverbVocabulary(
        names, antonym,
        rng.standard_normal((2 * n_pairs, embed_dim)) / np.sqrt(embed_dim))
    return actions, adverbs


def make_sample(rng, t_len, d, action=0, adverb=0, pad_rows=(), video_id="v0"):
    feats = rng.standard_normal((t_len, d))
    pad = np.zeros(t_len, dtype=bool)
    for r in pad_rows:
        pad[r] = True
        feats[r] = 0.0
    return VideoSample(feats, pad, action, adverb, video_id)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
