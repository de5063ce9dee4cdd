"""
oracles.py - Implémentations de référence naïves (boucles explicites)

Utilisées par les tests pour comparer les opérations vectorisées. Avec des
entrées à valeurs entières, les résultats doivent être identiques bit à bit.
"""

import math

import numpy as np


def naive_matmul(a, b):
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m), dtype=np.float64)
    for i in range(n):
        for j in range(m):
            for p in range(k):
                out[i, j] += a[i, p] * b[p, j]
    return out


def naive_linear(x, w, b=None):
    flat = x.reshape(-1, x.shape[-1])
    out = naive_matmul(flat, w)
    if b is not None:
        out = out + b
    return out.reshape(x.shape[:-1] + (w.shape[1],))


def naive_avg_pool(x):
    n, t, h, w, c = x.shape
    out = np.zeros((n, 1, 1, 1, c), dtype=np.float64)
    for i in range(n):
        for ch in range(c):
            s = 0.0
            for a in range(t):
                for b in range(h):
                    for d in range(w):
                        s += x[i, a, b, d, ch]
            out[i, 0, 0, 0, ch] = s / (t * h * w)
    return out


def naive_depthwise(x, k, bias):
    n, t, h, w, c = x.shape
    size = k.shape[0]
    p = size // 2
    out = np.zeros(x.shape, dtype=np.float64)
    for i in range(n):
        for f in range(t):
            for y in range(h):
                for z in range(w):
                    for ch in range(c):
                        s = bias[ch]
                        for dy in range(size):
                            for dz in range(size):
                                yy, zz = y + dy - p, z + dz - p
                                if 0 <= yy < h and 0 <= zz < w:
                                    s += x[i, f, yy, zz, ch] * k[dy, dz, ch]
                        out[i, f, y, z, ch] = s
    return out


def naive_conv3d(x, k, bias, stride, padding):
    """Corrélation croisée [N,T,H,W,C_in] x [kt,kh,kw,C_in,C_out]."""
    n, t, h, w, cin = x.shape
    kt, kh, kw, _, cout = k.shape
    st, sh, sw = stride
    pt, ph, pw = padding
    to = (t + 2 * pt - kt) // st + 1
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (w + 2 * pw - kw) // sw + 1
    out = np.zeros((n, to, ho, wo, cout), dtype=np.float64)
    for i in range(n):
        for a in range(to):
            for b in range(ho):
                for c in range(wo):
                    for o in range(cout):
                        s = 0.0 if bias is None else bias[o]
                        for da in range(kt):
                            for db in range(kh):
                                for dc in range(kw):
                                    ta, hb, wc = a * st + da - pt, b * sh + db - ph, c * sw + dc - pw
                                    if 0 <= ta < t and 0 <= hb < h and 0 <= wc < w:
                                        for ci in range(cin):
                                            s += x[i, ta, hb, wc, ci] * k[da, db, dc, ci, o]
                        out[i, a, b, c, o] = s
    return out


def naive_conv2d(x, k, bias, stride, padding):
    return naive_conv3d(x, k[np.newaxis], bias, (1, stride, stride), (0, padding, padding))


def naive_shift(x, groups):
    """
    Déplace chaque canal position par position ; `groups` est une liste de
    (start, stop, axe 1..3, décalage). Canaux hors groupes recopiés.
    """
    out = np.zeros_like(x)
    moved = set()
    n, t, h, w, c = x.shape
    for start, stop, axis, offset in groups:
        for ch in range(start, stop):
            moved.add(ch)
            for i in range(n):
                for a in range(t):
                    for b in range(h):
                        for d in range(w):
                            src = [a, b, d]
                            src[axis - 1] -= offset
                            extent = (t, h, w)[axis - 1]
                            if 0 <= src[axis - 1] < extent:
                                out[i, a, b, d, ch] = x[i, src[0], src[1], src[2], ch]
    for ch in range(c):
        if ch not in moved:
            out[..., ch] = x[..., ch]
    return out


def naive_attention(x, wq, wk, wv, wh, bh, heads):
    """Attention multi-têtes : boucle quadratique sur les paires de tokens."""
    n, s, d = x.shape
    dh = d // heads
    q, k, v = x @ wq, x @ wk, x @ wv
    out = np.zeros((n, s, d), dtype=np.float64)
    for i in range(n):
        for head in range(heads):
            sl = slice(head * dh, (head + 1) * dh)
            for a in range(s):
                scores = np.array([np.dot(q[i, a, sl], k[i, b, sl]) / math.sqrt(dh) for b in range(s)])
                weights = np.exp(scores - scores.max())
                weights /= weights.sum()
                for b in range(s):
                    out[i, a, sl] += weights[b] * v[i, b, sl]
    return out @ wh + bh
