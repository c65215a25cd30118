"""The joint video-text embedding model.

Actions live in a shared space as rows of a trainable embedding table;
each adverb owns a transformation of that space (its "modifier"); videos
are embedded by multi-head scaled dot-product attention over per-second
segment features, queried by the action embedding.  Ablation variants of
the modifier, the attention, and the attention query are selected through
:class:`ModelHyper`.

Tape-building functions (suffix ``_node``) record onto a
:class:`~advemb.autodiff.Tape` for training; the plain functions compute
values only and are used at inference time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import (Node, Parameter, Tape, euclidean_distance, hinge,
                       masked_scaled_softmax, xavier_uniform)
from .errors import ConfigError, DegenerateInputError, DimensionMismatch, VocabularyError
from .vocab import ActionVocabulary, AdverbVocabulary

MODIFIER_KINDS = ("fixed_translation", "learned_translation", "linear", "nonlinear")
ATTENTION_KINDS = ("single", "average", "class_agnostic", "class_specific", "sdp")
QUERY_KINDS = ("action_embedding", "action_onehot", "adverb_glove", "vec_wm",
               "modified_action")


@dataclass
class ModelHyper:
    """Architecture hyperparameters and variant selectors."""

    feat_dim: int
    window: int = 20
    embed_dim: int = 300
    head_dim: int = 75
    n_heads: int = 4
    margin: float = 1.0
    modifier: str = "linear"
    attention: str = "sdp"
    query: str = "action_embedding"
    softmax_scale: str = "window"  # "window": sqrt(T) as written; "key_dim": sqrt(head_dim)
    attn_hidden: int = 64          # hidden width of the class-agnostic/specific filter
    train_g: bool = True

    def __post_init__(self):
        if self.attention == "sdp" and self.n_heads * self.head_dim != self.embed_dim:
            raise ConfigError(
                f"n_heads*head_dim must equal embed_dim "
                f"({self.n_heads}*{self.head_dim} != {self.embed_dim})")
        if self.modifier not in MODIFIER_KINDS:
            raise ConfigError(f"unknown modifier kind {self.modifier!r}")
        if self.attention not in ATTENTION_KINDS:
            raise ConfigError(f"unknown attention kind {self.attention!r}")
        if self.query not in QUERY_KINDS:
            raise ConfigError(f"unknown query kind {self.query!r}")
        if self.softmax_scale not in ("window", "key_dim"):
            raise ConfigError(f"unknown softmax scale {self.softmax_scale!r}")

    @property
    def scale(self) -> float:
        return math.sqrt(self.window if self.softmax_scale == "window" else self.head_dim)

    def query_dim(self, n_actions: int) -> int:
        if self.query == "action_onehot":
            return n_actions
        if self.query == "vec_wm":
            return self.embed_dim * self.embed_dim
        return self.embed_dim


@dataclass
class ModelParams:
    """All trainable state plus the vocabularies it is tied to.

    Per-adverb modifier matrices and per-head attention projections are
    stored as row-blocks of stacked parameters; ``modifier_matrix`` and
    ``head_weights`` give the per-adverb / per-head views.
    """

    hyper: ModelHyper
    actions: ActionVocabulary
    adverbs: AdverbVocabulary
    params: dict[str, Parameter] = field(default_factory=dict)

    @property
    def g(self) -> Parameter:
        return self.params["g"]

    def parameter_list(self) -> list[Parameter]:
        return list(self.params.values())

    def modifier_param_names(self) -> list[str]:
        return [n for n in self.params if n.startswith("mod_")]

    def trainable_names(self, include_modifiers: bool = True) -> list[str]:
        names = []
        for n in self.params:
            if n == "g" and not self.hyper.train_g:
                continue
            if n.startswith("mod_") and not include_modifiers:
                continue
            names.append(n)
        return names

    def modifier_matrix(self, m: int) -> np.ndarray:
        e = self.hyper.embed_dim
        return self.params["mod_w"].value[m * e:(m + 1) * e]

    def head_weights(self, i: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(W_q, W_k, W_v) of attention head i."""
        k = self.hyper.head_dim
        sl = slice(i * k, (i + 1) * k)
        return (self.params["attn_q"].value[sl], self.params["attn_k"].value[sl],
                self.params["attn_v"].value[sl])


def init_model(hyper: ModelHyper, actions: ActionVocabulary, adverbs: AdverbVocabulary,
               rng: np.random.Generator, g_init: str = "pretrained",
               modifier_init: str = "identity") -> ModelParams:
    """Build a model with fresh parameters.

    ``g_init``: "pretrained" copies the action vocabulary vectors,
    "random" draws them.  ``modifier_init``: "identity" makes every
    modifier a no-op at the start, "random" draws all modifier weights
    (used for chance calibration).
    """
    e, d = hyper.embed_dim, hyper.feat_dim
    a_n, m_n = len(actions), len(adverbs)
    params: dict[str, Parameter] = {}

    if g_init == "pretrained":
        if actions.vectors.shape[1] != e:
            raise ConfigError(
                f"pretrained action vectors are {actions.vectors.shape[1]}-D, "
                f"embed_dim is {e}")
        g0 = actions.vectors.copy()
    elif g_init == "random":
        g0 = rng.standard_normal((a_n, e)) / math.sqrt(e)
    else:
        raise ConfigError(f"unknown g_init {g_init!r}")
    params["g"] = Parameter(g0, "g")

    hk = hyper.n_heads * hyper.head_dim
    if hyper.attention == "sdp":
        qdim = hyper.query_dim(a_n)
        params["attn_q"] = Parameter(
            xavier_uniform(rng, qdim, hyper.head_dim, (hk, qdim)), "attn_q")
        params["attn_k"] = Parameter(
            xavier_uniform(rng, d, hyper.head_dim, (hk, d)), "attn_k")
        params["attn_v"] = Parameter(
            xavier_uniform(rng, d, hyper.head_dim, (hk, d)), "attn_v")
        params["attn_out"] = Parameter(
            xavier_uniform(rng, hk, e, (e, hk)), "attn_out")
    elif hyper.attention in ("single", "average"):
        params["attn_v"] = Parameter(
            xavier_uniform(rng, d, hyper.head_dim, (hk, d)), "attn_v")
        params["attn_out"] = Parameter(
            xavier_uniform(rng, hk, e, (e, hk)), "attn_out")
    else:  # class_agnostic / class_specific
        n_filters = a_n if hyper.attention == "class_specific" else 1
        params["attn_w1"] = Parameter(
            xavier_uniform(rng, hyper.attn_hidden, 1, (n_filters, hyper.attn_hidden)),
            "attn_w1")
        params["attn_w2"] = Parameter(
            xavier_uniform(rng, d, hyper.attn_hidden, (hyper.attn_hidden, d)), "attn_w2")
        params["attn_w3"] = Parameter(
            xavier_uniform(rng, d, e, (e, d)), "attn_w3")

    if hyper.modifier == "linear":
        if modifier_init == "identity":
            w = np.tile(np.eye(e), (m_n, 1))
        else:
            w = xavier_uniform(rng, e, e, (m_n * e, e))
        params["mod_w"] = Parameter(w, "mod_w")
    elif hyper.modifier == "learned_translation":
        if modifier_init == "identity":
            b = np.stack([adverbs.vector_of(m) for m in range(m_n)])
            if b.shape[1] != e:
                raise ConfigError("adverb vectors do not match embed_dim")
        else:
            b = rng.standard_normal((m_n, e)) / math.sqrt(e)
        params["mod_b"] = Parameter(b, "mod_b")
    elif hyper.modifier == "nonlinear":
        params["mod_w1"] = Parameter(xavier_uniform(rng, e, e, (m_n * e, e)), "mod_w1")
        params["mod_w2"] = Parameter(xavier_uniform(rng, e, e, (m_n * e, e)), "mod_w2")
        params["mod_b"] = Parameter(np.zeros((m_n, e)), "mod_b")
    else:  # fixed_translation: the adverb vector is the (constant) transform
        for m in range(m_n):
            adverbs.vector_of(m)  # fail early if missing

    return ModelParams(hyper, actions, adverbs, params)


# ---------------------------------------------------------------------------
# plain forward (inference)


def embed_action(mp: ModelParams, a: int) -> np.ndarray:
    """Row a of the action embedding table."""
    if not 0 <= a < len(mp.actions):
        raise VocabularyError(f"action id {a} out of range")
    return mp.g.value[a].copy()


def apply_modifier(mp: ModelParams, m: int, z: np.ndarray) -> np.ndarray:
    """The adverb's transform of an embedding-space point."""
    if not 0 <= m < len(mp.adverbs):
        raise VocabularyError(f"adverb id {m} out of range")
    z = np.asarray(z, dtype=float)
    e = mp.hyper.embed_dim
    if z.shape != (e,):
        raise DimensionMismatch(f"apply_modifier: expected ({e},), got {z.shape}")
    kind = mp.hyper.modifier
    if kind == "linear":
        return mp.modifier_matrix(m) @ z
    if kind == "fixed_translation":
        return z + mp.adverbs.vector_of(m)
    if kind == "learned_translation":
        return z + mp.params["mod_b"].value[m]
    w1 = mp.params["mod_w1"].value[m * e:(m + 1) * e]
    w2 = mp.params["mod_w2"].value[m * e:(m + 1) * e]
    b = mp.params["mod_b"].value[m]
    return w2 @ np.maximum(w1 @ z + b, 0.0)


def fixed_attention_weights(pad: np.ndarray, kind: str) -> np.ndarray:
    """Uniform (average) or center-segment (single) pooling weights."""
    keep = ~np.asarray(pad, dtype=bool)
    if not keep.any():
        raise DegenerateInputError("all segments padded")
    t = keep.size
    w = np.zeros(t)
    if kind == "average":
        w[keep] = 1.0 / keep.sum()
    else:  # single: center segment, or the nearest unpadded one
        center = t // 2
        if keep[center]:
            w[center] = 1.0
        else:
            idx = np.flatnonzero(keep)
            w[idx[np.argmin(np.abs(idx - center))]] = 1.0
    return w


def attention_head(mp: ModelParams, i: int, features: np.ndarray, pad: np.ndarray,
                   query_vec: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One scaled dot-product head: (pooled context, attention weights)."""
    wq, wk, wv = mp.head_weights(i)
    keep = ~np.asarray(pad, dtype=bool)
    if not keep.any():
        raise DegenerateInputError("all segments padded")
    q = wq @ query_vec                       # (head_dim,)
    k = wk @ features.T                      # (head_dim, T)
    logits = q @ k                           # (T,)
    weights = masked_scaled_softmax(logits, mp.hyper.scale, keep)
    context = (wv @ features.T) @ weights    # (head_dim,)
    return context, weights


def video_embedding(mp: ModelParams, features: np.ndarray, pad: np.ndarray,
                    query_vec: np.ndarray | None = None, action_id: int | None = None,
                    return_weights: bool = False):
    """Embed a feature window into the joint space.

    Dispatches on the configured attention variant.  ``query_vec`` is
    required for sdp attention; ``action_id`` for class-specific
    attention.  With ``return_weights`` the per-head (sdp) or single
    (other variants) attention weights come back too.
    """
    kind = mp.hyper.attention
    pad = np.asarray(pad, dtype=bool)
    keep = ~pad
    if not keep.any():
        raise DegenerateInputError("all segments padded")

    if kind == "sdp":
        if query_vec is None:
            raise ConfigError("sdp attention needs a query vector")
        contexts, weights = [], []
        for i in range(mp.hyper.n_heads):
            c, w = attention_head(mp, i, features, pad, query_vec)
            contexts.append(c)
            weights.append(w)
        emb = mp.params["attn_out"].value @ np.concatenate(contexts)
        return (emb, np.stack(weights)) if return_weights else emb

    if kind in ("single", "average"):
        w = fixed_attention_weights(pad, kind)
        pooled = mp.params["attn_v"].value @ (features.T @ w)
        emb = mp.params["attn_out"].value @ pooled
        return (emb, w) if return_weights else emb

    # class-agnostic / class-specific filter
    if kind == "class_specific":
        if action_id is None:
            raise ConfigError("class_specific attention needs the action id")
        if not 0 <= action_id < len(mp.actions):
            raise VocabularyError(f"action id {action_id} out of range")
        w1 = mp.params["attn_w1"].value[action_id]
    else:
        w1 = mp.params["attn_w1"].value[0]
    scores = np.tanh(features @ mp.params["attn_w2"].value.T) @ w1  # (T,)
    w = masked_scaled_softmax(scores, 1.0, keep)
    emb = mp.params["attn_w3"].value @ (features.T @ w)
    return (emb, w) if return_weights else emb


def build_query(mp: ModelParams, action_id: int, adverb_id: int) -> np.ndarray:
    """The vector fed to the attention query projection."""
    kind = mp.hyper.query
    if kind == "action_embedding":
        return embed_action(mp, action_id)
    if kind == "action_onehot":
        if not 0 <= action_id < len(mp.actions):
            raise VocabularyError(f"action id {action_id} out of range")
        q = np.zeros(len(mp.actions))
        q[action_id] = 1.0
        return q
    if kind == "adverb_glove":
        rep = mp.adverbs.pair_representative(adverb_id)
        return mp.adverbs.vector_of(rep).copy()
    if kind == "vec_wm":
        if mp.hyper.modifier != "linear":
            raise ConfigError("vec_wm query requires the linear modifier")
        rep = mp.adverbs.pair_representative(adverb_id)
        return mp.modifier_matrix(rep).reshape(-1).copy()
    # modified_action
    return apply_modifier(mp, adverb_id, embed_action(mp, action_id))


def embed_video(mp: ModelParams, sample, query_vec: np.ndarray | None = None,
                return_weights: bool = False):
    """Embedding of a sample's window; the query defaults to the variant's choice."""
    if query_vec is None:
        query_vec = build_query(mp, sample.action, sample.adverb)
    return video_embedding(mp, sample.features, sample.pad_mask, query_vec,
                           action_id=sample.action, return_weights=return_weights)


def triplet_loss(anchor: np.ndarray, pos: np.ndarray, neg: np.ndarray,
                 margin: float) -> float:
    if margin <= 0:
        raise ValueError(f"margin must be positive, got {margin}")
    return hinge(euclidean_distance(anchor, pos) - euclidean_distance(anchor, neg)
                 + margin)


def action_loss(mp: ModelParams, sample, neg_action: int) -> float:
    """Triplet against a different action, both targets adverb-modified."""
    if neg_action == sample.action:
        raise ValueError("negative action must differ from the sample's action")
    fp = embed_video(mp, sample)
    ga = embed_action(mp, sample.action)
    gn = embed_action(mp, neg_action)
    m = sample.adverb
    return triplet_loss(fp, apply_modifier(mp, m, ga), apply_modifier(mp, m, gn),
                        mp.hyper.margin)


def adverb_loss(mp: ModelParams, sample) -> float:
    """Triplet whose negative is the antonym's transform of the same action."""
    fp = embed_video(mp, sample)
    ga = embed_action(mp, sample.action)
    m = sample.adverb
    mbar = mp.adverbs.antonym_of(m)
    return triplet_loss(fp, apply_modifier(mp, m, ga), apply_modifier(mp, mbar, ga),
                        mp.hyper.margin)


# ---------------------------------------------------------------------------
# tape forward (training)


def query_node(tape: Tape, mp: ModelParams, action_id: int, adverb_id: int) -> Node:
    kind = mp.hyper.query
    if kind == "action_embedding":
        return tape.row(tape.param(mp.g), action_id)
    if kind == "vec_wm":
        if mp.hyper.modifier != "linear":
            raise ConfigError("vec_wm query requires the linear modifier")
        e = mp.hyper.embed_dim
        rep = mp.adverbs.pair_representative(adverb_id)
        return tape.flatten(tape.block(tape.param(mp.params["mod_w"]),
                                       rep * e, (rep + 1) * e))
    if kind == "modified_action":
        return modifier_node(tape, mp, adverb_id,
                             tape.row(tape.param(mp.g), action_id))
    return tape.constant(build_query(mp, action_id, adverb_id))


def modifier_node(tape: Tape, mp: ModelParams, m: int, z: Node) -> Node:
    kind = mp.hyper.modifier
    e = mp.hyper.embed_dim
    if kind == "linear":
        w = tape.block(tape.param(mp.params["mod_w"]), m * e, (m + 1) * e)
        return tape.matmul(w, z)
    if kind == "fixed_translation":
        return tape.add(z, tape.constant(mp.adverbs.vector_of(m)))
    if kind == "learned_translation":
        return tape.add(z, tape.row(tape.param(mp.params["mod_b"]), m))
    w1 = tape.block(tape.param(mp.params["mod_w1"]), m * e, (m + 1) * e)
    w2 = tape.block(tape.param(mp.params["mod_w2"]), m * e, (m + 1) * e)
    b = tape.row(tape.param(mp.params["mod_b"]), m)
    return tape.matmul(w2, tape.relu(tape.add(tape.matmul(w1, z), b)))


def video_embed_node(tape: Tape, mp: ModelParams, features: np.ndarray,
                     pad: np.ndarray, query: Node | None, action_id: int) -> Node:
    kind = mp.hyper.attention
    pad = np.asarray(pad, dtype=bool)
    keep = ~pad
    if not keep.any():
        raise DegenerateInputError("all segments padded")
    xt = tape.constant(features.T)  # (D, T)

    if kind == "sdp":
        hd, nh = mp.hyper.head_dim, mp.hyper.n_heads
        k_all = tape.matmul(tape.param(mp.params["attn_k"]), xt)
        v_all = tape.matmul(tape.param(mp.params["attn_v"]), xt)
        q_all = tape.matmul(tape.param(mp.params["attn_q"]), query)
        contexts = []
        for i in range(nh):
            i0, i1 = i * hd, (i + 1) * hd
            logits = tape.matmul(tape.block(q_all, i0, i1), tape.block(k_all, i0, i1))
            alpha = tape.masked_softmax(logits, mp.hyper.scale, keep)
            contexts.append(tape.matmul(tape.block(v_all, i0, i1), alpha))
        return tape.matmul(tape.param(mp.params["attn_out"]), tape.concat(contexts))

    if kind in ("single", "average"):
        w = tape.constant(fixed_attention_weights(pad, kind))
        pooled = tape.matmul(tape.param(mp.params["attn_v"]), tape.matmul(xt, w))
        return tape.matmul(tape.param(mp.params["attn_out"]), pooled)

    # class-agnostic / class-specific
    x = tape.constant(features)  # (T, D)
    h = tape.tanh(tape.matmul(x, tape.transpose(tape.param(mp.params["attn_w2"]))))
    row = action_id if kind == "class_specific" else 0
    scores = tape.matmul(h, tape.row(tape.param(mp.params["attn_w1"]), row))
    alpha = tape.masked_softmax(scores, 1.0, keep)
    pooled = tape.matmul(xt, alpha)
    return tape.matmul(tape.param(mp.params["attn_w3"]), pooled)


def sample_loss_nodes(tape: Tape, mp: ModelParams, sample, neg_action: int,
                      stage: str, neg_adverb: int | None = None,
                      single_neg: str | None = None) -> tuple[Node, Node | None]:
    """(L_act, L_adv) nodes for one sample; L_adv is None outside the joint stage.

    ``stage`` is "actions_only" or "joint".  For the single-loss ablation
    ``single_neg`` picks the negative kind ("action", "adverb" or "both")
    and the combined loss comes back in the first slot.  ``neg_adverb``
    supplies the drawn non-antonym negative where a mode needs one.
    """
    margin = mp.hyper.margin
    q = query_node(tape, mp, sample.action, sample.adverb)
    fp = video_embed_node(tape, mp, sample.features, sample.pad_mask, q, sample.action)
    g_node = tape.param(mp.g)
    ga = tape.row(g_node, sample.action)
    gneg = tape.row(g_node, neg_action)

    def trip(pos, neg):
        d_pos = tape.euclidean(fp, pos)
        d_neg = tape.euclidean(fp, neg)
        return tape.hinge(tape.shift(tape.sub(d_pos, d_neg), margin))

    if stage == "actions_only":
        return trip(ga, gneg), None

    m = sample.adverb
    t_pos = modifier_node(tape, mp, m, ga)
    if single_neg is not None:
        if single_neg == "action":
            t_neg = modifier_node(tape, mp, m, gneg)
        elif single_neg == "adverb":
            t_neg = modifier_node(tape, mp, neg_adverb, ga)
        else:
            t_neg = modifier_node(tape, mp, neg_adverb, gneg)
        return trip(t_pos, t_neg), None

    l_act = trip(t_pos, modifier_node(tape, mp, m, gneg))
    adv_neg = mp.adverbs.antonym_of(m) if neg_adverb is None else neg_adverb
    l_adv = trip(t_pos, modifier_node(tape, mp, adv_neg, ga))
    return l_act, l_adv
