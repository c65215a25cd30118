"""Straight-line reimplementations used as independent test oracles.

Everything here works on nested Python lists with explicit loops and the
math module only, so it shares no code path with the package under test.
"""

import math


def to_lists(arr):
    if hasattr(arr, "tolist"):
        return arr.tolist()
    return arr


def mat_vec(w, v):
    return [sum(w[i][j] * v[j] for j in range(len(v))) for i in range(len(w))]


def mat_mat(a, b):
    rows, inner, cols = len(a), len(b), len(b[0])
    return [[sum(a[i][k] * b[k][j] for k in range(inner)) for j in range(cols)]
            for i in range(rows)]


def vec_sub(u, v):
    return [a - b for a, b in zip(u, v)]


def vec_add(u, v):
    return [a + b for a, b in zip(u, v)]


def euclid(u, v):
    return math.sqrt(sum((a - b) ** 2 for a, b in zip(u, v)))


def hinge(x):
    return x if x > 0 else 0.0


def softmax(logits, scale, keep):
    scaled = [l / scale for l, k in zip(logits, keep) if k]
    mx = max(scaled)
    exps = [math.exp(s - mx) for s in scaled]
    total = sum(exps)
    out = []
    i = 0
    for k in keep:
        if k:
            out.append(exps[i] / total)
            i += 1
        else:
            out.append(0.0)
    return out


def attention_head(wq, wk, wv, feats, keep, query, scale):
    """One head: weights from scaled query-key dot products, pooled values."""
    q = mat_vec(wq, query)
    t_len = len(feats)
    logits = []
    for t in range(t_len):
        k_t = mat_vec(wk, feats[t])
        logits.append(sum(a * b for a, b in zip(q, k_t)))
    weights = softmax(logits, scale, keep)
    ctx = [0.0] * len(wv)
    for t in range(t_len):
        if weights[t] == 0.0:
            continue
        v_t = mat_vec(wv, feats[t])
        for i in range(len(ctx)):
            ctx[i] += weights[t] * v_t[i]
    return ctx, weights


def embed_video(heads, wh, feats, keep, query, scale):
    """Multi-head attention then the output projection."""
    concat = []
    for wq, wk, wv in heads:
        ctx, _ = attention_head(wq, wk, wv, feats, keep, query, scale)
        concat.extend(ctx)
    return mat_vec(wh, concat)


def modifier(kind, z, w=None, b=None, w1=None, w2=None, vec=None):
    if kind == "linear":
        return mat_vec(w, z)
    if kind == "fixed_translation":
        return vec_add(z, vec)
    if kind == "learned_translation":
        return vec_add(z, b)
    u = [bi + s for bi, s in zip(b, mat_vec(w1, z))]
    r = [x if x > 0 else 0.0 for x in u]
    return mat_vec(w2, r)


def triplet(anchor, pos, neg, margin):
    return hinge(euclid(anchor, pos) - euclid(anchor, neg) + margin)


def class_agnostic_embed(w1, w2, w3, feats, keep):
    """softmax(w1 tanh(W2 f(x))) pooling of W3 f(x)."""
    scores = []
    for t in range(len(feats)):
        h = [math.tanh(s) for s in mat_vec(w2, feats[t])]
        scores.append(sum(a * b for a, b in zip(w1, h)))
    weights = softmax(scores, 1.0, keep)
    d = len(feats[0])
    pooled = [0.0] * d
    for t in range(len(feats)):
        for j in range(d):
            pooled[j] += weights[t] * feats[t][j]
    return mat_vec(w3, pooled), weights


def average_precision(scored, relevant):
    """AP from (score, id) pairs, ties broken by ascending id."""
    order = sorted(range(len(scored)), key=lambda i: (scored[i][0], scored[i][1]))
    hits = 0
    precs = []
    for rank, i in enumerate(order, 1):
        if scored[i][1] in relevant:
            hits += 1
            precs.append(hits / rank)
    if not precs:
        return None
    return sum(precs) / len(precs)
