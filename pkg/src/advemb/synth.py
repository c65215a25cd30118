"""Synthetic data with planted ground truth.

Each clean video hides one span of adverb-transformed action-signature
rows (plus distractor spans of other actions and Gaussian noise); a
configurable fraction of training videos keeps its label while the
signal is removed, mimicking narrated-but-not-shown supervision noise.
Adverb ground truth is an orthogonal map per adverb, the antonym being
its inverse, so adverb effects are action-dependent and cannot be
captured by a constant translation.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import AnnotationRecord, split_dataset
from .errors import ConfigError
from .features import FeatureStore


@dataclass
class SynthConfig:
    num_actions: int = 10
    num_adverb_pairs: int = 3
    window: int = 20                 # T
    feat_dim: int = 32               # D
    embed_dim: int = 300             # dimension of the emitted word vectors
    num_videos: int = 1000
    video_seconds: int = 40
    num_groups: int = 83
    test_groups: int = 18
    span_offset: tuple[int, int] = (-3, 1)   # span start relative to floor(timestamp)
    span_length: tuple[int, int] = (4, 8)
    noise_fraction: float = 0.0
    distractor_count: int = 2
    signal_to_noise: float = 5.0
    rotation_angle: float = 0.5
    seed: int = 0

    def validate(self) -> None:
        half = self.window // 2
        if self.span_offset[0] < -half or self.span_offset[1] + self.span_length[1] > self.window - half:
            raise ConfigError(
                f"relevant span (offset {self.span_offset}, length {self.span_length}) "
                f"does not fit a window of {self.window}")
        if not 0 <= self.noise_fraction < 1:
            raise ConfigError(f"noise_fraction must be in [0, 1), got {self.noise_fraction}")
        if self.num_actions < 2 or self.num_adverb_pairs < 1:
            raise ConfigError("need at least 2 actions and 1 adverb pair")
        if self.num_groups < 2 or not 1 <= self.test_groups < self.num_groups:
            raise ConfigError("need at least 2 groups and 1 <= test_groups < num_groups")
        if self.video_seconds < self.window:
            raise ConfigError("videos shorter than the window are not useful")


@dataclass
class SynthTruth:
    """What the generator planted, for oracle checks."""

    signatures: np.ndarray            # (A, D) latent action vectors
    rotations: np.ndarray             # (M, D, D) latent adverb transforms
    spans: dict[str, tuple[int, int]]  # video_id -> [start, end) rows of the true span
    labels: dict[str, tuple[int, int]]  # video_id -> (action id, adverb id)
    absent: set[str] = field(default_factory=set)  # videos whose labeled signal is missing

    def to_json(self) -> str:
        return json.dumps({
            "signatures": self.signatures.tolist(),
            "rotations": self.rotations.tolist(),
            "spans": {k: list(v) for k, v in sorted(self.spans.items())},
            "labels": {k: list(v) for k, v in sorted(self.labels.items())},
            "absent": sorted(self.absent),
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SynthTruth":
        d = json.loads(text)
        return cls(np.array(d["signatures"]), np.array(d["rotations"]),
                   {k: (v[0], v[1]) for k, v in d["spans"].items()},
                   {k: (v[0], v[1]) for k, v in d["labels"].items()},
                   set(d["absent"]))


def action_names(n: int) -> list[str]:
    return [f"act{i:03d}" for i in range(n)]


def adverb_pair_names(n: int) -> list[tuple[str, str]]:
    return [(f"adv{p:02d}a", f"adv{p:02d}b") for p in range(n)]


def _cayley_rotation(rng: np.random.Generator, dim: int, angle: float) -> np.ndarray:
    """A random orthogonal map of bounded effect; its transpose is its inverse."""
    b = rng.standard_normal((dim, dim))
    s = (b - b.T) / 2.0
    s *= angle / max(np.linalg.norm(s, 2), 1e-12)
    eye = np.eye(dim)
    return np.linalg.solve(eye + s, eye - s)


def synth_generate(cfg: SynthConfig) -> tuple[FeatureStore, list[AnnotationRecord], SynthTruth]:
    """Generate (features, annotations, planted truth) as a pure function of the seed."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    a_n = cfg.num_actions
    m_n = 2 * cfg.num_adverb_pairs
    d = cfg.feat_dim

    sig = rng.standard_normal((a_n, d))
    sig /= np.linalg.norm(sig, axis=1, keepdims=True)

    rot = np.empty((m_n, d, d))
    for p in range(cfg.num_adverb_pairs):
        r = _cayley_rotation(rng, d, cfg.rotation_angle)
        rot[2 * p] = r
        rot[2 * p + 1] = r.T

    sigma = 0.0
    if math.isfinite(cfg.signal_to_noise):
        sigma = 1.0 / (cfg.signal_to_noise * math.sqrt(d))

    store = FeatureStore()
    records: list[AnnotationRecord] = []
    spans: dict[str, tuple[int, int]] = {}
    labels: dict[str, tuple[int, int]] = {}
    planted: dict[str, tuple[int, int]] = {}  # what actually went into the span

    s_len = cfg.video_seconds
    half = cfg.window // 2
    for v in range(cfg.num_videos):
        vid = f"g{v % cfg.num_groups:03d}_v{v:05d}"
        a = int(rng.integers(a_n))
        m = int(rng.integers(m_n))
        ts = float(rng.uniform(half, s_len - half))
        center = int(math.floor(ts))
        off = int(rng.integers(cfg.span_offset[0], cfg.span_offset[1] + 1))
        length = int(rng.integers(cfg.span_length[0], cfg.span_length[1] + 1))
        start = max(0, min(center + off, s_len - length))
        span = (start, start + length)

        feats = sigma * rng.standard_normal((s_len, d)) if sigma else np.zeros((s_len, d))
        feats[span[0]:span[1]] += rot[m] @ sig[a]

        span_rows = np.zeros(s_len, dtype=bool)
        span_rows[span[0]:span[1]] = True
        for _ in range(cfg.distractor_count):
            da = int(rng.integers(a_n - 1))
            da = da if da < a else da + 1
            dm = int(rng.integers(m_n))
            dlen = int(rng.integers(cfg.span_length[0], cfg.span_length[1] + 1))
            dstart = int(rng.integers(0, s_len - dlen + 1))
            rows = np.arange(dstart, dstart + dlen)
            rows = rows[~span_rows[rows]]
            feats[rows] += rot[dm] @ sig[da]

        store.add(vid, feats)
        records.append(AnnotationRecord(vid, action_names(a_n)[a],
                                        _adverb_name(m), ts))
        spans[vid] = span
        labels[vid] = (a, m)
        planted[vid] = (a, m)

    train, test = split_dataset(records, rng, n_test_groups=cfg.test_groups)
    records = train + test

    # remove the labeled signal from a fraction of the training videos
    absent: set[str] = set()
    n_noisy = round(cfg.noise_fraction * len(train))
    if n_noisy:
        pick = rng.choice(len(train), size=n_noisy, replace=False)
        for i in sorted(pick):
            r = train[i]
            vid = r.video_id
            a, m = labels[vid]
            feats = store.get(vid)
            lo, hi = spans[vid]
            feats[lo:hi] -= rot[m] @ sig[a]
            fa = int(rng.integers(a_n - 1))
            fa = fa if fa < a else fa + 1
            fm = int(rng.integers(m_n))
            feats[lo:hi] += rot[fm] @ sig[fa]
            planted[vid] = (fa, fm)
            absent.add(vid)

    return store, records, SynthTruth(sig, rot, spans, labels, absent)


def _adverb_name(m: int) -> str:
    pair, side = divmod(m, 2)
    return f"adv{pair:02d}{'ab'[side]}"


def synth_word_vectors(cfg: SynthConfig) -> dict[str, np.ndarray]:
    """Pretrained-style vectors for the synthetic vocabulary.

    Drawn from a generator derived from the config seed but independent
    of the feature draws, so data and vectors can be rebuilt separately.
    """
    rng = np.random.default_rng(cfg.seed + 1_000_003)
    vectors: dict[str, np.ndarray] = {}
    for name in action_names(cfg.num_actions):
        vectors[name] = rng.standard_normal(cfg.embed_dim) / math.sqrt(cfg.embed_dim)
    for a, b in adverb_pair_names(cfg.num_adverb_pairs):
        vectors[a] = rng.standard_normal(cfg.embed_dim) / math.sqrt(cfg.embed_dim)
        vectors[b] = rng.standard_normal(cfg.embed_dim) / math.sqrt(cfg.embed_dim)
    return vectors


def decode_span_label(feats: np.ndarray, span: tuple[int, int], truth: SynthTruth,
                      ) -> tuple[int, int]:
    """Nearest planted (action, adverb) for the span's mean feature row."""
    mean = feats[span[0]:span[1]].mean(axis=0)
    best, best_score = (0, 0), -np.inf
    m_n = truth.rotations.shape[0]
    for a in range(truth.signatures.shape[0]):
        for m in range(m_n):
            score = float(mean @ (truth.rotations[m] @ truth.signatures[a]))
            if score > best_score:
                best, best_score = (a, m), score
    return best


def synth_config_json(cfg: SynthConfig) -> str:
    return json.dumps(asdict(cfg), sort_keys=True)
