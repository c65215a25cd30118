"""Two-stage training: action-only triplets first, then the joint losses
with modifiers learned at their own (slower) rate."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .autodiff import Tape
from .dataset import VideoSample
from .errors import ConfigError, NumericError, SamplingError
from .model import ModelHyper, ModelParams, init_model, sample_loss_nodes
from .optim import adam_step, zero_grads
from .vocab import ActionVocabulary, AdverbVocabulary

log = logging.getLogger(__name__)

LOSS_MODES = ("dual", "single", "dual_any_adverb")
STAGE_ACTIONS = "actions_only"
STAGE_JOINT = "joint"


@dataclass
class TrainConfig:
    epochs: int = 1000
    stage1_epochs: int = 200
    batch_size: int = 512
    lr: float = 1e-4
    modifier_lr: float = 1e-5
    margin: float = 1.0
    window: int = 20
    seed: int = 0
    embed_dim: int = 300
    head_dim: int = 75
    n_heads: int = 4
    attn_hidden: int = 64
    softmax_scale: str = "window"
    modifier: str = "linear"
    attention: str = "sdp"
    query: str = "action_embedding"
    loss_mode: str = "dual"
    train_g: bool = True
    stage1_freeze_attention: bool = False
    g_init: str = "pretrained"
    modifier_init: str = "identity"
    checkpoint_every: int = 100

    def validate(self) -> None:
        if self.stage1_epochs > self.epochs:
            raise ConfigError(
                f"stage1_epochs ({self.stage1_epochs}) exceeds epochs ({self.epochs})")
        if self.lr <= 0 or self.modifier_lr <= 0:
            raise ConfigError("learning rates must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")
        if self.loss_mode not in LOSS_MODES:
            raise ConfigError(f"unknown loss mode {self.loss_mode!r}")

    def hyper(self, feat_dim: int) -> ModelHyper:
        return ModelHyper(feat_dim=feat_dim, window=self.window,
                          embed_dim=self.embed_dim, head_dim=self.head_dim,
                          n_heads=self.n_heads, margin=self.margin,
                          modifier=self.modifier, attention=self.attention,
                          query=self.query, softmax_scale=self.softmax_scale,
                          attn_hidden=self.attn_hidden, train_g=self.train_g)


@dataclass
class EpochStats:
    epoch: int
    stage: str
    loss_act: float
    loss_adv: float
    grad_norm: float


@dataclass
class TrainLog:
    epochs: list[EpochStats] = field(default_factory=list)
    wall_time: float = 0.0

    def to_tsv(self, header_lines: list[str] | None = None) -> str:
        lines = [f"# {h}" for h in header_lines or []]
        lines.append("# epoch\tstage\tloss_act\tloss_adv\tgrad_norm")
        for s in self.epochs:
            lines.append(f"{s.epoch}\t{s.stage}\t{s.loss_act!r}\t{s.loss_adv!r}"
                         f"\t{s.grad_norm!r}")
        lines.append(f"# wall_time_seconds: {self.wall_time:.3f}")
        return "\n".join(lines) + "\n"


def sample_batch(samples: list[VideoSample], rng: np.random.Generator,
                 batch_size: int, n_actions: int | None = None
                 ) -> list[tuple[VideoSample, int]]:
    """Uniform with-replacement batch, each anchor paired with a negative action.

    The negative is drawn uniformly from the other actions present in the
    batch, falling back to the whole vocabulary when the batch is
    single-action.
    """
    if not samples:
        raise SamplingError("empty dataset")
    all_actions = sorted({s.action for s in samples})
    if len(all_actions) < 2:
        raise SamplingError("need at least 2 distinct actions to sample negatives")
    if n_actions is None:
        n_actions = max(all_actions) + 1
    idx = rng.integers(0, len(samples), size=batch_size)
    chosen = [samples[i] for i in idx]
    present = sorted({s.action for s in chosen})
    batch = []
    for s in chosen:
        pool = [a for a in present if a != s.action]
        if not pool:
            pool = [a for a in range(n_actions) if a != s.action]
        neg = pool[int(rng.integers(len(pool)))]
        batch.append((s, neg))
    return batch


def _stage_param_names(mp: ModelParams, stage: str, cfg: TrainConfig) -> list[str]:
    if stage == STAGE_JOINT:
        return mp.trainable_names(include_modifiers=True)
    names = mp.trainable_names(include_modifiers=False)
    if cfg.stage1_freeze_attention:
        names = [n for n in names if not n.startswith("attn_")]
    return names


def _draw_mode_extras(mp: ModelParams, cfg: TrainConfig, batch, rng):
    """Per-anchor negative-adverb / negative-kind draws for the ablation loss modes."""
    m_n = len(mp.adverbs)
    extras = []
    for s, _neg in batch:
        if cfg.loss_mode == "single":
            kind = ("action", "adverb", "both")[int(rng.integers(3))]
            if kind == "action":
                extras.append((kind, None))
                continue
            other = int(rng.integers(m_n - 1))
            other = other if other < s.adverb else other + 1
            extras.append((kind, other))
        elif cfg.loss_mode == "dual_any_adverb":
            other = int(rng.integers(m_n - 1))
            other = other if other < s.adverb else other + 1
            extras.append((None, other))
        else:
            extras.append((None, None))
    return extras


def _batch_tape(mp: ModelParams, cfg: TrainConfig, batch, extras,
                stage: str) -> tuple[float, float]:
    """Pure-Python path: one tape over the whole batch, one backward."""
    tape = Tape()
    act_nodes, adv_nodes = [], []
    for (s, neg), (kind, other) in zip(batch, extras):
        if stage == STAGE_ACTIONS:
            la, lv = sample_loss_nodes(tape, mp, s, neg, STAGE_ACTIONS)
        elif cfg.loss_mode == "single":
            la, lv = sample_loss_nodes(tape, mp, s, neg, STAGE_JOINT,
                                       neg_adverb=other, single_neg=kind)
        else:
            la, lv = sample_loss_nodes(tape, mp, s, neg, STAGE_JOINT,
                                       neg_adverb=other)
        act_nodes.append(la)
        if lv is not None:
            adv_nodes.append(lv)
    # mean over the batch of (L_act + L_adv) == mean(L_act) + mean(L_adv)
    total = tape.mean(act_nodes)
    if adv_nodes:
        total = tape.add(total, tape.mean(adv_nodes))
    _check_finite(batch, act_nodes, adv_nodes)
    tape.backward(total)
    mean_act = math.fsum(float(n.value) for n in act_nodes) / len(act_nodes)
    mean_adv = (math.fsum(float(n.value) for n in adv_nodes) / len(adv_nodes)
                if adv_nodes else 0.0)
    return mean_act, mean_adv


def _check_finite(batch, act_nodes, adv_nodes) -> None:
    bad = [s.video_id for (s, _), n in zip(batch, act_nodes)
           if not math.isfinite(float(n.value))]
    if adv_nodes:
        bad += [s.video_id for (s, _), n in zip(batch, adv_nodes)
                if not math.isfinite(float(n.value))]
    if bad:
        raise NumericError(f"non-finite loss on samples: {', '.join(sorted(set(bad)))}")


def _kernel_supported(cfg: TrainConfig) -> bool:
    return (cfg.loss_mode == "dual"
            and cfg.attention in ("sdp", "single", "average")
            and cfg.query == "action_embedding")


def _batch_kernel(kern, mp: ModelParams, cfg: TrainConfig, batch,
                  stage: str) -> tuple[float, float]:
    """Compiled path: fused per-sample forward/backward over the batch."""
    b = len(batch)
    t, d = batch[0][0].features.shape
    feats = np.empty((b, t, d))
    pad = np.empty((b, t), dtype=np.uint8)
    a_idx = np.empty(b, dtype=np.int64)
    m_idx = np.empty(b, dtype=np.int64)
    neg_idx = np.empty(b, dtype=np.int64)
    for i, (s, neg) in enumerate(batch):
        feats[i] = s.features
        pad[i] = s.pad_mask
        a_idx[i] = s.action
        m_idx[i] = s.adverb
        neg_idx[i] = neg
    sum_act, sum_adv = kern.batch_grads(mp, feats, pad, a_idx, m_idx, neg_idx,
                                        np.array(mp.adverbs.antonym, dtype=np.int64),
                                        stage == STAGE_JOINT)
    mean_act, mean_adv = sum_act / b, sum_adv / b
    if not (math.isfinite(mean_act) and math.isfinite(mean_adv)):
        raise NumericError("non-finite loss in compiled batch "
                           f"(videos {', '.join(s.video_id for s, _ in batch)})")
    for p in mp.params.values():
        p.grad /= b
    return mean_act, mean_adv


def train_epoch(mp: ModelParams, samples: list[VideoSample], stage: str,
                cfg: TrainConfig, rng: np.random.Generator) -> tuple[float, float, float]:
    """One pass of ceil(N / batch_size) sampled batches; returns epoch stats."""
    if stage not in (STAGE_ACTIONS, STAGE_JOINT):
        raise ConfigError(f"unknown stage {stage!r}")
    kern = backend.kernels() if _kernel_supported(cfg) else None
    n_batches = max(1, math.ceil(len(samples) / cfg.batch_size))
    step_names = _stage_param_names(mp, stage, cfg)
    sums = np.zeros(2)
    grad_norm = 0.0
    for _ in range(n_batches):
        batch = sample_batch(samples, rng, cfg.batch_size, len(mp.actions))
        extras = _draw_mode_extras(mp, cfg, batch, rng)
        zero_grads(mp.parameter_list())
        if kern is not None:
            means = _batch_kernel(kern, mp, cfg, batch, stage)
        else:
            means = _batch_tape(mp, cfg, batch, extras, stage)
        sums += means
        grad_norm = math.sqrt(math.fsum(
            float(np.sum(mp.params[n].grad ** 2)) for n in step_names))
        for name in step_names:
            lr = cfg.modifier_lr if name.startswith("mod_") else cfg.lr
            adam_step(mp.params[name], lr)
        zero_grads(mp.parameter_list())
    return sums[0] / n_batches, sums[1] / n_batches, grad_norm


def train(cfg: TrainConfig, samples: list[VideoSample], actions: ActionVocabulary,
          adverbs: AdverbVocabulary, checkpoint_path=None,
          resume=None) -> tuple[ModelParams, TrainLog]:
    """Run the full schedule; returns the model and its per-epoch log.

    ``resume`` is a loaded checkpoint; training continues from its epoch
    with its parameters and generator state, so an interrupted run and an
    uninterrupted one end in identical states.
    """
    cfg.validate()
    if not samples:
        raise SamplingError("no training samples")
    start = time.perf_counter()
    if resume is not None:
        from dataclasses import asdict
        if asdict(resume.config) != asdict(cfg):
            raise ConfigError("resume checkpoint was trained with a different config")
        mp = resume.model
        rng = np.random.default_rng(cfg.seed)
        rng.bit_generator.state = resume.rng_state
        first_epoch = resume.epoch
    else:
        rng = np.random.default_rng(cfg.seed)
        feat_dim = samples[0].features.shape[1]
        mp = init_model(cfg.hyper(feat_dim), actions, adverbs, rng,
                        g_init=cfg.g_init, modifier_init=cfg.modifier_init)
        first_epoch = 0

    log_obj = TrainLog()
    for epoch in range(first_epoch, cfg.epochs):
        stage = STAGE_ACTIONS if epoch < cfg.stage1_epochs else STAGE_JOINT
        loss_act, loss_adv, grad_norm = train_epoch(mp, samples, stage, cfg, rng)
        log_obj.epochs.append(EpochStats(epoch, stage, loss_act, loss_adv, grad_norm))
        if epoch % 50 == 0 or epoch == cfg.epochs - 1:
            log.info("epoch %d (%s): loss_act=%.4f loss_adv=%.4f",
                     epoch, stage, loss_act, loss_adv)
        if checkpoint_path is not None and cfg.checkpoint_every > 0 \
                and (epoch + 1) % cfg.checkpoint_every == 0 and epoch + 1 < cfg.epochs:
            from .checkpoint import checkpoint_save
            p = str(checkpoint_path) + f".ep{epoch + 1:05d}"
            checkpoint_save(p, mp, cfg, rng.bit_generator.state, epoch + 1)
    if checkpoint_path is not None:
        from .checkpoint import checkpoint_save
        checkpoint_save(checkpoint_path, mp, cfg, rng.bit_generator.state, cfg.epochs)
    log_obj.wall_time = time.perf_counter() - start
    return mp, log_obj
