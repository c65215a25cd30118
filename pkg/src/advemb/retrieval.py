"""Retrieval inference and evaluation metrics.

Adverbs are retrieved for a video by ranking the distances from the
video's embedding to every transformed action; videos are retrieved for
an adverb by ranking each video's distance to the transform of its own
action.  The "antonym" setting restricts candidates to an adverb and its
antonym, where precision-at-1 equals binary accuracy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .autodiff import euclidean_distance
from .dataset import VideoSample, mask_modality
from .errors import DataError
from .model import ModelParams, apply_modifier, build_query, embed_action, embed_video

log = logging.getLogger(__name__)

SETTINGS = ("all", "antonym")
DIRECTIONS = ("v2a", "a2v", "v2act")


@dataclass
class Ranking:
    """Candidates ordered by ascending score; ties broken by ascending id."""

    query: str
    candidates: list[int]
    scores: list[float]
    relevant: set[int]

    def __post_init__(self):
        order = sorted(range(len(self.candidates)),
                       key=lambda i: (self.scores[i], self.candidates[i]))
        self.candidates = [self.candidates[i] for i in order]
        self.scores = [self.scores[i] for i in order]

    def average_precision(self) -> float | None:
        """Mean of the precision at each relevant hit; None without relevant ids."""
        if not self.relevant:
            return None
        hits = 0
        precisions = []
        for rank, cand in enumerate(self.candidates, 1):
            if cand in self.relevant:
                hits += 1
                precisions.append(hits / rank)
        if not precisions:
            return None
        return float(np.sum(precisions) / len(precisions))


def _sample_embedding(mp: ModelParams, sample: VideoSample,
                      adverb_for_query: int | None = None) -> np.ndarray:
    m = sample.adverb if adverb_for_query is None else adverb_for_query
    q = build_query(mp, sample.action, m)
    return embed_video(mp, sample, query_vec=q)


def _query_depends_on_adverb(mp: ModelParams) -> bool:
    return mp.hyper.query in ("adverb_glove", "vec_wm", "modified_action")


def rank_video_to_adverb(mp: ModelParams, sample: VideoSample,
                         setting: str = "all") -> Ranking:
    """Rank candidate adverbs by distance to the video's embedding."""
    if setting == "antonym":
        cands = sorted({sample.adverb, mp.adverbs.antonym_of(sample.adverb)})
    elif setting == "all":
        cands = list(range(len(mp.adverbs)))
    else:
        raise ValueError(f"unknown setting {setting!r}")
    if not cands:
        raise DataError("empty candidate set")
    ga = embed_action(mp, sample.action)
    scores = []
    if _query_depends_on_adverb(mp):
        for m in cands:
            fp = _sample_embedding(mp, sample, adverb_for_query=m)
            scores.append(euclidean_distance(fp, apply_modifier(mp, m, ga)))
    else:
        fp = _sample_embedding(mp, sample)
        scores = [euclidean_distance(fp, apply_modifier(mp, m, ga)) for m in cands]
    return Ranking(f"video:{sample.video_id}", cands, scores, {sample.adverb})


def rank_adverb_to_video(mp: ModelParams, adverb: int, videos: list[VideoSample],
                         setting: str = "all",
                         embeddings: list[np.ndarray] | None = None) -> Ranking:
    """Rank videos for an adverb query.

    Each video is scored by the distance from the adverb's transform of
    the video's own action to that video's embedding.  Pass precomputed
    ``embeddings`` (aligned with ``videos``) to avoid re-embedding.
    """
    if not videos:
        raise DataError("empty video corpus")
    if setting == "antonym":
        pair = {adverb, mp.adverbs.antonym_of(adverb)}
        idx = [i for i, v in enumerate(videos) if v.adverb in pair]
    elif setting == "all":
        idx = list(range(len(videos)))
    else:
        raise ValueError(f"unknown setting {setting!r}")
    if not idx:
        raise DataError("no candidate videos for this adverb")
    scores = []
    for i in idx:
        v = videos[i]
        fp = (embeddings[i] if embeddings is not None
              else _sample_embedding(mp, v, adverb_for_query=adverb
                                     if _query_depends_on_adverb(mp) else None))
        target = apply_modifier(mp, adverb, embed_action(mp, v.action))
        scores.append(euclidean_distance(target, fp))
    relevant = {i for i in idx if videos[i].adverb == adverb}
    return Ranking(f"adverb:{mp.adverbs.names[adverb]}", idx, scores, relevant)


def rank_video_to_action(mp: ModelParams, sample: VideoSample) -> Ranking:
    """Rank every action by distance from the video embedded with its true action."""
    fp = _sample_embedding(mp, sample)
    cands = list(range(len(mp.actions)))
    scores = [euclidean_distance(fp, embed_action(mp, a)) for a in cands]
    return Ranking(f"video:{sample.video_id}", cands, scores, {sample.action})


def mean_average_precision(rankings: list[Ranking]) -> float:
    """Mean AP over rankings; rankings without relevant candidates are skipped."""
    aps = []
    skipped = 0
    for r in rankings:
        ap = r.average_precision()
        if ap is None:
            skipped += 1
        else:
            aps.append(ap)
    if skipped:
        log.warning("mAP: skipped %d rankings without relevant candidates", skipped)
    if not aps:
        raise DataError("no rankings with relevant candidates")
    return float(np.sum(aps) / len(aps))


def antonym_p_at_1(rankings: list[Ranking]) -> float:
    """Fraction of two-candidate rankings whose top candidate is the labeled one."""
    if not rankings:
        raise DataError("no rankings")
    correct = 0
    for r in rankings:
        if len(r.candidates) != 2:
            raise DataError(
                f"antonym P@1 needs exactly 2 candidates, got {len(r.candidates)}")
        correct += r.candidates[0] in r.relevant
    return correct / len(rankings)


# ---------------------------------------------------------------------------
# full evaluation


@dataclass
class EvalReport:
    """All retrieval metrics of one model on one sample set."""

    n_samples: int
    modality: str
    metrics: dict[str, float] = field(default_factory=dict)
    per_adverb: dict[str, dict[str, float]] = field(default_factory=dict)

    def to_tsv(self, header_lines: list[str] | None = None) -> str:
        lines = [f"# {h}" for h in header_lines or []]
        lines.append("# metric\tvalue")
        lines.append(f"n_samples\t{self.n_samples}")
        lines.append(f"modality\t{self.modality}")
        for k in sorted(self.metrics):
            lines.append(f"{k}\t{self.metrics[k]:.6f}")
        for adverb in sorted(self.per_adverb):
            for k in sorted(self.per_adverb[adverb]):
                lines.append(f"{adverb}.{k}\t{self.per_adverb[adverb][k]:.6f}")
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        rows = [f"{'metric':32s} value", "-" * 42]
        rows.append(f"{'n_samples':32s} {self.n_samples}")
        rows.append(f"{'modality':32s} {self.modality}")
        for k in sorted(self.metrics):
            rows.append(f"{k:32s} {self.metrics[k]:.4f}")
        for adverb in sorted(self.per_adverb):
            for k in sorted(self.per_adverb[adverb]):
                rows.append(f"{adverb + '.' + k:32s} {self.per_adverb[adverb][k]:.4f}")
        return "\n".join(rows) + "\n"


def _masked_samples(samples: list[VideoSample], modality: str,
                    split: int | None) -> list[VideoSample]:
    if modality == "both":
        return samples
    return [VideoSample(mask_modality(s.features, modality, split), s.pad_mask,
                        s.action, s.adverb, s.video_id) for s in samples]


def evaluate(mp: ModelParams, samples: list[VideoSample], modality: str = "both",
             modality_split: int | None = None, per_adverb: bool = False) -> EvalReport:
    """Compute every direction/setting metric on ``samples``."""
    if not samples:
        raise DataError("no evaluation samples")
    samples = _masked_samples(samples, modality, modality_split)
    report = EvalReport(n_samples=len(samples), modality=modality)

    v2a_all = [rank_video_to_adverb(mp, s, "all") for s in samples]
    v2a_ant = [rank_video_to_adverb(mp, s, "antonym") for s in samples]
    report.metrics["v2a_all_map"] = mean_average_precision(v2a_all)
    report.metrics["v2a_antonym_p1"] = antonym_p_at_1(v2a_ant)
    report.metrics["v2a_antonym_map"] = mean_average_precision(v2a_ant)

    embeddings = None
    if not _query_depends_on_adverb(mp):
        embeddings = [_sample_embedding(mp, s) for s in samples]
    adverbs_present = sorted({s.adverb for s in samples})
    a2v_all, a2v_ant = [], []
    for m in range(len(mp.adverbs)):
        if m not in adverbs_present:
            continue
        a2v_all.append(rank_adverb_to_video(mp, m, samples, "all", embeddings))
        a2v_ant.append(rank_adverb_to_video(mp, m, samples, "antonym", embeddings))
    report.metrics["a2v_all_map"] = mean_average_precision(a2v_all)
    report.metrics["a2v_antonym_map"] = mean_average_precision(a2v_ant)

    v2act = [rank_video_to_action(mp, s) for s in samples]
    report.metrics["v2act_map"] = mean_average_precision(v2act)

    if per_adverb:
        for m in adverbs_present:
            name = mp.adverbs.names[m]
            subset = [i for i, s in enumerate(samples) if s.adverb == m]
            report.per_adverb[name] = {
                "n": float(len(subset)),
                "v2a_all_map": mean_average_precision([v2a_all[i] for i in subset]),
                "v2a_antonym_p1": antonym_p_at_1([v2a_ant[i] for i in subset]),
            }
    return report
