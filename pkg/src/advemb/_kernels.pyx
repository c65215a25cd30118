# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Fused per-sample forward/backward for the training inner loop.

Covers the default configuration family (sdp / single / average
attention, every modifier kind, action-embedding query, paired losses).
The trainer falls back to the tape engine for anything else.  Gradients
accumulate unscaled into the Parameter.grad buffers; the caller divides
by the batch size.
"""

from libc.math cimport exp, sqrt

import numpy as np

cdef enum:
    ATTN_SDP = 0
    ATTN_SINGLE = 1
    ATTN_AVERAGE = 2

cdef enum:
    MOD_LINEAR = 0
    MOD_FIXED = 1
    MOD_LEARNED = 2
    MOD_NONLINEAR = 3


cdef inline void _modifier_forward(int kind, int m, int e,
                                   double[:, ::1] mod_w, double[:, ::1] mod_b,
                                   double[:, ::1] mod_w1, double[:, ::1] mod_w2,
                                   double[:, ::1] adv_vec,
                                   double[::1] z, double[::1] out,
                                   double[::1] u) noexcept nogil:
    """out = O_m(z); for the nonlinear kind, u keeps the pre-activation."""
    cdef int i, j, base
    cdef double acc
    if kind == MOD_LINEAR:
        base = m * e
        for i in range(e):
            acc = 0.0
            for j in range(e):
                acc += mod_w[base + i, j] * z[j]
            out[i] = acc
    elif kind == MOD_FIXED:
        for i in range(e):
            out[i] = z[i] + adv_vec[m, i]
    elif kind == MOD_LEARNED:
        for i in range(e):
            out[i] = z[i] + mod_b[m, i]
    else:
        base = m * e
        for i in range(e):
            acc = mod_b[m, i]
            for j in range(e):
                acc += mod_w1[base + i, j] * z[j]
            u[i] = acc
        for i in range(e):
            acc = 0.0
            for j in range(e):
                if u[j] > 0.0:
                    acc += mod_w2[base + i, j] * u[j]
            out[i] = acc


cdef inline void _modifier_backward(int kind, int m, int e,
                                    double[:, ::1] mod_w,
                                    double[:, ::1] mod_w1, double[:, ::1] mod_w2,
                                    double[::1] z, double[::1] u,
                                    double[::1] dt,
                                    double[:, ::1] d_mod_w, double[:, ::1] d_mod_b,
                                    double[:, ::1] d_mod_w1, double[:, ::1] d_mod_w2,
                                    double[::1] dz, double[::1] scratch) noexcept nogil:
    """Accumulate modifier grads and add the z-gradient into dz."""
    cdef int i, j, base
    cdef double acc, du
    if kind == MOD_LINEAR:
        base = m * e
        for i in range(e):
            for j in range(e):
                d_mod_w[base + i, j] += dt[i] * z[j]
        for j in range(e):
            acc = 0.0
            for i in range(e):
                acc += mod_w[base + i, j] * dt[i]
            dz[j] += acc
    elif kind == MOD_FIXED:
        for i in range(e):
            dz[i] += dt[i]
    elif kind == MOD_LEARNED:
        for i in range(e):
            d_mod_b[m, i] += dt[i]
            dz[i] += dt[i]
    else:
        base = m * e
        # dr = W2^T dt, masked by relu; scratch holds du
        for j in range(e):
            if u[j] > 0.0:
                acc = 0.0
                for i in range(e):
                    acc += mod_w2[base + i, j] * dt[i]
                scratch[j] = acc
            else:
                scratch[j] = 0.0
        for i in range(e):
            if u[i] > 0.0:
                for j in range(e):
                    d_mod_w2[base + j, i] += dt[j] * u[i]
        for i in range(e):
            du = scratch[i]
            if du != 0.0:
                d_mod_b[m, i] += du
                for j in range(e):
                    d_mod_w1[base + i, j] += du * z[j]
        for j in range(e):
            acc = 0.0
            for i in range(e):
                acc += mod_w1[base + i, j] * scratch[i]
            dz[j] += acc


def batch_grads(mp, double[:, :, ::1] feats, unsigned char[:, ::1] pad,
                long[::1] a_idx, long[::1] m_idx, long[::1] neg_idx,
                long[::1] antonym, bint joint):
    """Accumulate raw per-sample gradients for a batch; returns loss sums."""
    hyper = mp.hyper
    cdef int attention = {"sdp": ATTN_SDP, "single": ATTN_SINGLE,
                          "average": ATTN_AVERAGE}[hyper.attention]
    cdef int modifier = {"linear": MOD_LINEAR, "fixed_translation": MOD_FIXED,
                         "learned_translation": MOD_LEARNED,
                         "nonlinear": MOD_NONLINEAR}[hyper.modifier]
    cdef int b = feats.shape[0]
    cdef int t_len = feats.shape[1]
    cdef int d = feats.shape[2]
    cdef int e = hyper.embed_dim
    cdef int hd = hyper.head_dim
    cdef int nh = hyper.n_heads
    cdef int hk = nh * hd
    cdef double margin = hyper.margin
    cdef double scale = hyper.scale

    params = mp.params
    cdef double[:, ::1] g = params["g"].value
    cdef double[:, ::1] d_g = params["g"].grad

    empty2 = np.zeros((1, 1))
    cdef double[:, ::1] wq = empty2, wk = empty2, wv = empty2, wh = empty2
    cdef double[:, ::1] d_wq = empty2, d_wk = empty2, d_wv = empty2, d_wh = empty2
    if attention == ATTN_SDP:
        wq = params["attn_q"].value
        wk = params["attn_k"].value
        d_wq = params["attn_q"].grad
        d_wk = params["attn_k"].grad
    wv = params["attn_v"].value
    wh = params["attn_out"].value
    d_wv = params["attn_v"].grad
    d_wh = params["attn_out"].grad

    cdef double[:, ::1] mod_w = empty2, mod_b = empty2
    cdef double[:, ::1] mod_w1 = empty2, mod_w2 = empty2, adv_vec = empty2
    cdef double[:, ::1] d_mod_w = empty2, d_mod_b = empty2
    cdef double[:, ::1] d_mod_w1 = empty2, d_mod_w2 = empty2
    if joint:
        if modifier == MOD_LINEAR:
            mod_w = params["mod_w"].value
            d_mod_w = params["mod_w"].grad
        elif modifier == MOD_FIXED:
            adv_vec = np.ascontiguousarray(mp.adverbs.vectors)
        elif modifier == MOD_LEARNED:
            mod_b = params["mod_b"].value
            d_mod_b = params["mod_b"].grad
        else:
            mod_w1 = params["mod_w1"].value
            mod_w2 = params["mod_w2"].value
            mod_b = params["mod_b"].value
            d_mod_w1 = params["mod_w1"].grad
            d_mod_w2 = params["mod_w2"].grad
            d_mod_b = params["mod_b"].grad

    # scratch
    kbuf = np.empty((hk, t_len))
    vbuf = np.empty((hk, t_len))
    cdef double[:, ::1] kb = kbuf, vb = vbuf
    cdef double[::1] qb = np.empty(hk)
    cdef double[:, ::1] alpha = np.empty((nh, t_len))
    cdef double[::1] ctx = np.empty(hk)
    cdef double[::1] fp = np.empty(e)
    cdef double[::1] pooled = np.empty(d)
    cdef double[::1] fixed_w = np.empty(t_len)
    cdef double[::1] tpos = np.empty(e)
    cdef double[::1] tnegA = np.empty(e)
    cdef double[::1] tnegM = np.empty(e)
    cdef double[::1] u_pos = np.empty(e)
    cdef double[::1] u_negA = np.empty(e)
    cdef double[::1] u_negM = np.empty(e)
    cdef double[::1] dfp = np.empty(e)
    cdef double[::1] dt_buf = np.empty(e)
    cdef double[::1] dz = np.empty(e)
    cdef double[::1] dzneg = np.empty(e)
    cdef double[::1] dctx = np.empty(hk)
    cdef double[::1] dq = np.empty(e)
    cdef double[::1] dalpha = np.empty(t_len)
    cdef double[::1] dlogit = np.empty(t_len)
    cdef double[::1] dqh = np.empty(hd)
    cdef double[::1] scratch = np.empty(e)

    cdef double sum_act = 0.0, sum_adv = 0.0
    cdef int i, a, m, mbar, aneg, h, k, tt, j, base, center, best, n_keep
    cdef double acc, mx, ssum, dpos, dnegA, dnegM, l_act, l_adv
    cdef double gp, gA, gM, coeff, sdot

    with nogil:
        for i in range(b):
            a = a_idx[i]
            m = m_idx[i]
            mbar = antonym[m]
            aneg = neg_idx[i]

            # ---- video forward -------------------------------------------
            if attention == ATTN_SDP:
                for k in range(hk):
                    acc = 0.0
                    for j in range(e):
                        acc += wq[k, j] * g[a, j]
                    qb[k] = acc
                for k in range(hk):
                    for tt in range(t_len):
                        if pad[i, tt]:
                            kb[k, tt] = 0.0
                            vb[k, tt] = 0.0
                        else:
                            acc = 0.0
                            ssum = 0.0
                            for j in range(d):
                                acc += wk[k, j] * feats[i, tt, j]
                                ssum += wv[k, j] * feats[i, tt, j]
                            kb[k, tt] = acc
                            vb[k, tt] = ssum
                for h in range(nh):
                    base = h * hd
                    mx = -1e300
                    for tt in range(t_len):
                        if pad[i, tt]:
                            continue
                        acc = 0.0
                        for k in range(hd):
                            acc += qb[base + k] * kb[base + k, tt]
                        alpha[h, tt] = acc / scale
                        if alpha[h, tt] > mx:
                            mx = alpha[h, tt]
                    ssum = 0.0
                    for tt in range(t_len):
                        if pad[i, tt]:
                            alpha[h, tt] = 0.0
                        else:
                            alpha[h, tt] = exp(alpha[h, tt] - mx)
                            ssum += alpha[h, tt]
                    for tt in range(t_len):
                        alpha[h, tt] /= ssum
                    for k in range(hd):
                        acc = 0.0
                        for tt in range(t_len):
                            acc += alpha[h, tt] * vb[base + k, tt]
                        ctx[base + k] = acc
            else:
                n_keep = 0
                for tt in range(t_len):
                    fixed_w[tt] = 0.0
                    if not pad[i, tt]:
                        n_keep += 1
                if attention == ATTN_AVERAGE:
                    for tt in range(t_len):
                        if not pad[i, tt]:
                            fixed_w[tt] = 1.0 / n_keep
                else:
                    center = t_len // 2
                    if not pad[i, center]:
                        best = center
                    else:
                        best = -1
                        for tt in range(t_len):
                            if not pad[i, tt]:
                                if best < 0 or (tt - center if tt > center else center - tt) < (best - center if best > center else center - best):
                                    best = tt
                    fixed_w[best] = 1.0
                for j in range(d):
                    acc = 0.0
                    for tt in range(t_len):
                        if fixed_w[tt] != 0.0:
                            acc += fixed_w[tt] * feats[i, tt, j]
                    pooled[j] = acc
                for k in range(hk):
                    acc = 0.0
                    for j in range(d):
                        acc += wv[k, j] * pooled[j]
                    ctx[k] = acc

            for j in range(e):
                acc = 0.0
                for k in range(hk):
                    acc += wh[j, k] * ctx[k]
                fp[j] = acc

            # ---- text targets --------------------------------------------
            if joint:
                _modifier_forward(modifier, m, e, mod_w, mod_b, mod_w1, mod_w2,
                                  adv_vec, g[a], tpos, u_pos)
                _modifier_forward(modifier, m, e, mod_w, mod_b, mod_w1, mod_w2,
                                  adv_vec, g[aneg], tnegA, u_negA)
                _modifier_forward(modifier, mbar, e, mod_w, mod_b, mod_w1, mod_w2,
                                  adv_vec, g[a], tnegM, u_negM)
            else:
                for j in range(e):
                    tpos[j] = g[a, j]
                    tnegA[j] = g[aneg, j]

            dpos = 0.0
            dnegA = 0.0
            dnegM = 0.0
            for j in range(e):
                dpos += (fp[j] - tpos[j]) ** 2
                dnegA += (fp[j] - tnegA[j]) ** 2
                if joint:
                    dnegM += (fp[j] - tnegM[j]) ** 2
            dpos = sqrt(dpos)
            dnegA = sqrt(dnegA)
            dnegM = sqrt(dnegM)

            l_act = dpos - dnegA + margin
            if l_act < 0.0:
                l_act = 0.0
            sum_act += l_act
            l_adv = 0.0
            if joint:
                l_adv = dpos - dnegM + margin
                if l_adv < 0.0:
                    l_adv = 0.0
                sum_adv += l_adv

            # ---- loss backward -------------------------------------------
            gp = 0.0
            gA = 0.0
            gM = 0.0
            if l_act > 0.0:
                gp += 1.0
                gA = -1.0
            if joint and l_adv > 0.0:
                gp += 1.0
                gM = -1.0
            if gp == 0.0 and gA == 0.0 and gM == 0.0:
                continue

            for j in range(e):
                dfp[j] = 0.0
                dz[j] = 0.0
                dzneg[j] = 0.0

            # positive target
            if gp != 0.0 and dpos > 0.0:
                for j in range(e):
                    coeff = gp * (fp[j] - tpos[j]) / dpos
                    dfp[j] += coeff
                    dt_buf[j] = -coeff
                if joint:
                    _modifier_backward(modifier, m, e, mod_w, mod_w1, mod_w2,
                                       g[a], u_pos, dt_buf, d_mod_w, d_mod_b,
                                       d_mod_w1, d_mod_w2, dz, scratch)
                else:
                    for j in range(e):
                        dz[j] += dt_buf[j]
            # action negative
            if gA != 0.0 and dnegA > 0.0:
                for j in range(e):
                    coeff = gA * (fp[j] - tnegA[j]) / dnegA
                    dfp[j] += coeff
                    dt_buf[j] = -coeff
                if joint:
                    _modifier_backward(modifier, m, e, mod_w, mod_w1, mod_w2,
                                       g[aneg], u_negA, dt_buf, d_mod_w, d_mod_b,
                                       d_mod_w1, d_mod_w2, dzneg, scratch)
                else:
                    for j in range(e):
                        dzneg[j] += dt_buf[j]
            # antonym negative
            if gM != 0.0 and dnegM > 0.0:
                for j in range(e):
                    coeff = gM * (fp[j] - tnegM[j]) / dnegM
                    dfp[j] += coeff
                    dt_buf[j] = -coeff
                _modifier_backward(modifier, mbar, e, mod_w, mod_w1, mod_w2,
                                   g[a], u_negM, dt_buf, d_mod_w, d_mod_b,
                                   d_mod_w1, d_mod_w2, dz, scratch)

            # ---- video backward ------------------------------------------
            for k in range(hk):
                acc = 0.0
                for j in range(e):
                    d_wh[j, k] += dfp[j] * ctx[k]
                    acc += wh[j, k] * dfp[j]
                dctx[k] = acc

            if attention == ATTN_SDP:
                for j in range(e):
                    dq[j] = 0.0
                for h in range(nh):
                    base = h * hd
                    for tt in range(t_len):
                        if pad[i, tt]:
                            dalpha[tt] = 0.0
                            continue
                        acc = 0.0
                        for k in range(hd):
                            acc += dctx[base + k] * vb[base + k, tt]
                        dalpha[tt] = acc
                    # dV then attn_v grads
                    for k in range(hd):
                        for tt in range(t_len):
                            if pad[i, tt]:
                                continue
                            coeff = alpha[h, tt] * dctx[base + k]
                            if coeff != 0.0:
                                for j in range(d):
                                    d_wv[base + k, j] += coeff * feats[i, tt, j]
                    # softmax backward
                    sdot = 0.0
                    for tt in range(t_len):
                        sdot += alpha[h, tt] * dalpha[tt]
                    for tt in range(t_len):
                        if pad[i, tt]:
                            dlogit[tt] = 0.0
                        else:
                            dlogit[tt] = alpha[h, tt] * (dalpha[tt] - sdot) / scale
                    for k in range(hd):
                        acc = 0.0
                        for tt in range(t_len):
                            acc += dlogit[tt] * kb[base + k, tt]
                        dqh[k] = acc
                    # attn_k grads via dK[k,t] = dlogit[t] * q_h[k]
                    for k in range(hd):
                        for tt in range(t_len):
                            if pad[i, tt] or dlogit[tt] == 0.0:
                                continue
                            coeff = dlogit[tt] * qb[base + k]
                            for j in range(d):
                                d_wk[base + k, j] += coeff * feats[i, tt, j]
                    for k in range(hd):
                        for j in range(e):
                            d_wq[base + k, j] += dqh[k] * g[a, j]
                            dq[j] += wq[base + k, j] * dqh[k]
                for j in range(e):
                    dz[j] += dq[j]  # query is the action embedding
            else:
                for k in range(hk):
                    if dctx[k] != 0.0:
                        for j in range(d):
                            d_wv[k, j] += dctx[k] * pooled[j]

            for j in range(e):
                d_g[a, j] += dz[j]
                d_g[aneg, j] += dzneg[j]

    return sum_act, sum_adv
