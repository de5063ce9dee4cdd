"""
ops.py - Opérations différentiables

Chaque opération calcule son résultat avec numpy puis s'enregistre sur la
bande active avec son produit vecteur-jacobienne :
- linear, matmul, transpose
- layer_norm
- gelu (approximation tanh), sigmoid, softmax
- global_avg_pool
- depthwise_conv2d (3x3 par image), strided_conv (formes 2D et 3D)
- drop_path, cross_entropy

Les entrées vidéo sont au format [N, T, H, W, C] ; les opérations linéaires
agissent sur le dernier axe quel que soit le nombre d'axes de tête.
"""

import math

import numpy as np

from src.config import Config
from src.errors import ConfigError, DimensionError, NumericError
from src.tensor import as_array, mul, record, unbroadcast


def _require_rank(name, data, rank):
    if data.ndim != rank:
        raise DimensionError(f"{name} : rang {rank} attendu, reçu forme {data.shape}")


def linear(x, w, b=None):
    """y = x·w + b sur le dernier axe ; w est [d_in, d_out]."""
    xd, wd = as_array(x), as_array(w)
    if wd.ndim != 2 or xd.shape[-1] != wd.shape[0]:
        raise DimensionError(f"linear : entrée {xd.shape} incompatible avec poids {wd.shape}")
    out = xd @ wd
    bd = None
    if b is not None:
        bd = as_array(b)
        if bd.shape != (wd.shape[1],):
            raise DimensionError(f"linear : biais {bd.shape} incompatible avec poids {wd.shape}")
        out = out + bd

    def vjp(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = g @ wd.T
        gw = xd.reshape(-1, xd.shape[-1]).T @ g2
        if bd is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    inputs = (x, w) if b is None else (x, w, b)
    return record('linear', inputs, out, vjp)


def matmul(a, b):
    """Produit matriciel par lots (np.matmul)."""
    xa, xb = as_array(a), as_array(b)
    if xa.ndim < 2 or xb.ndim < 2 or xa.shape[-1] != xb.shape[-2]:
        raise DimensionError(f"matmul : formes incompatibles {xa.shape} et {xb.shape}")
    out = np.matmul(xa, xb)

    def vjp(g):
        ga = np.matmul(g, np.swapaxes(xb, -1, -2))
        gb = np.matmul(np.swapaxes(xa, -1, -2), g)
        return unbroadcast(ga, xa.shape), unbroadcast(gb, xb.shape)

    return record('matmul', (a, b), out, vjp)


def transpose(x, axes):
    data = as_array(x)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return record('transpose', (x,), np.transpose(data, axes), lambda g: (np.transpose(g, inverse),))


def layer_norm(x, gamma, beta, eps=None):
    """
    Normalisation par token sur le dernier axe puis affine gamma/beta.

    Lève NumericError (avec l'indice du token) si l'entrée contient des
    valeurs non finies.
    """
    eps = Config.LN_EPS if eps is None else eps
    if eps <= 0:
        raise ConfigError(f"layer_norm : eps doit être > 0, reçu {eps}")
    xd, gd, bd = as_array(x), as_array(gamma), as_array(beta)
    d = xd.shape[-1]
    if gd.shape != (d,) or bd.shape != (d,):
        raise DimensionError(f"layer_norm : gamma {gd.shape} / beta {bd.shape} pour d={d}")
    finite = np.isfinite(xd).all(axis=-1)
    if not finite.all():
        token = tuple(int(i) for i in np.argwhere(~finite)[0])
        raise NumericError(f"layer_norm : valeur non finie au token {token}", index=token)
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gd + bd

    def vjp(g):
        lead = tuple(range(g.ndim - 1))
        gxhat = g * gd
        gx = inv * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                    - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return record('layer_norm', (x, gamma, beta), out, vjp)


_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


def gelu(x):
    xd = as_array(x)
    k = Config.GELU_COEF
    t = np.tanh(_SQRT_2_OVER_PI * (xd + k * xd ** 3))
    out = 0.5 * xd * (1.0 + t)

    def vjp(g):
        du = _SQRT_2_OVER_PI * (1.0 + 3.0 * k * xd * xd)
        return (g * (0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t * t) * du),)

    return record('gelu', (x,), out, vjp)


def _sigmoid(xd):
    e = np.exp(-np.abs(xd))
    return np.where(xd >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(xd.dtype)


def sigmoid(x):
    s = _sigmoid(as_array(x))
    return record('sigmoid', (x,), s, lambda g: (g * s * (1.0 - s),))


def softmax(x, axis=-1):
    xd = as_array(x)
    if not -xd.ndim <= axis < xd.ndim:
        raise DimensionError(f"softmax : axe {axis} invalide pour forme {xd.shape}")
    e = np.exp(xd - xd.max(axis=axis, keepdims=True))
    s = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return record('softmax', (x,), s, vjp)


def global_avg_pool(x):
    """[N, T, H, W, C] -> [N, 1, 1, 1, C], moyenne sur les T·H·W positions."""
    xd = as_array(x)
    _require_rank('global_avg_pool', xd, 5)
    count = xd.shape[1] * xd.shape[2] * xd.shape[3]
    # accumulation en float64 : le résultat ne dépend pas de l'ordre des frames
    out = xd.mean(axis=(1, 2, 3), keepdims=True, dtype=np.float64).astype(xd.dtype)
    shape = xd.shape

    def vjp(g):
        return (np.broadcast_to(g / count, shape).astype(g.dtype),)

    return record('global_avg_pool', (x,), out, vjp)


def depthwise_conv2d(x, kernel, bias, kernel_size=Config.DWCONV_KERNEL):
    """
    Convolution en profondeur par image : un filtre k x k par canal, stride 1,
    padding nul de k // 2 ; la forme de sortie est celle de l'entrée.
    """
    xd, kd, bd = as_array(x), as_array(kernel), as_array(bias)
    _require_rank('depthwise_conv2d', xd, 5)
    if kd.ndim != 3 or kd.shape[:2] != (kernel_size, kernel_size):
        raise ConfigError(f"depthwise_conv2d : noyau {kd.shape[:2]} != ({kernel_size}, {kernel_size})")
    c = xd.shape[-1]
    if kd.shape[2] != c or bd.shape != (c,):
        raise DimensionError(f"depthwise_conv2d : noyau {kd.shape} / biais {bd.shape} pour C={c}")
    p = kernel_size // 2
    h, w = xd.shape[2], xd.shape[3]
    xp = np.pad(xd, ((0, 0), (0, 0), (p, p), (p, p), (0, 0)))
    out = np.zeros_like(xd)
    for i in range(kernel_size):
        for j in range(kernel_size):
            out += xp[:, :, i:i + h, j:j + w, :] * kd[i, j]
    out += bd

    def vjp(g):
        gxp = np.zeros_like(xp)
        gk = np.empty_like(kd)
        for i in range(kernel_size):
            for j in range(kernel_size):
                gxp[:, :, i:i + h, j:j + w, :] += g * kd[i, j]
                gk[i, j] = (g * xp[:, :, i:i + h, j:j + w, :]).sum(axis=(0, 1, 2, 3))
        return gxp[:, :, p:p + h, p:p + w, :], gk, g.sum(axis=(0, 1, 2, 3))

    return record('depthwise_conv2d', (x, kernel, bias), out, vjp)


def _triple(value, name):
    if isinstance(value, int):
        return value, value, value
    value = tuple(int(v) for v in value)
    if len(value) == 3:
        return value
    raise DimensionError(f"strided_conv : {name} invalide {value}")


def conv_output_extent(size, kernel, stride, padding):
    return (size + 2 * padding - kernel) // stride + 1


def strided_conv(x, kernel, bias=None, stride=1, padding=0):
    """
    Corrélation croisée standard sur [N, T, H, W, C_in].

    Noyau de rang 4 [kh, kw, C_in, C_out] : forme 2D appliquée image par image.
    Noyau de rang 5 [kt, kh, kw, C_in, C_out] : forme 3D.
    """
    xd, wd = as_array(x), as_array(kernel)
    _require_rank('strided_conv', xd, 5)
    if wd.ndim == 4:
        wd3 = wd[np.newaxis]
        sh, sw = (stride, stride) if isinstance(stride, int) else tuple(stride)
        ph, pw = (padding, padding) if isinstance(padding, int) else tuple(padding)
        st, pt = 1, 0
    elif wd.ndim == 5:
        wd3 = wd
        st, sh, sw = _triple(stride, 'stride')
        pt, ph, pw = _triple(padding, 'padding')
    else:
        raise DimensionError(f"strided_conv : noyau de rang 4 ou 5 attendu, reçu {wd.shape}")
    n, t, h, w, cin = xd.shape
    kt, kh, kw, kcin, cout = wd3.shape
    if kcin != cin:
        raise DimensionError(f"strided_conv : entrée {xd.shape} incompatible avec noyau {wd.shape}")
    to = conv_output_extent(t, kt, st, pt)
    ho = conv_output_extent(h, kh, sh, ph)
    wo = conv_output_extent(w, kw, sw, pw)
    if min(to, ho, wo) < 1 or min(st, sh, sw) < 1:
        raise DimensionError(
            f"strided_conv : sortie dégénérée ({to}, {ho}, {wo}) pour entrée {xd.shape}, noyau {wd.shape}")
    xp = np.pad(xd, ((0, 0), (pt, pt), (ph, ph), (pw, pw), (0, 0)))
    cols = np.empty((n, to, ho, wo, kt, kh, kw, cin), dtype=xd.dtype)
    for a in range(kt):
        for b in range(kh):
            for c in range(kw):
                cols[:, :, :, :, a, b, c, :] = xp[:, a:a + st * (to - 1) + 1:st,
                                                  b:b + sh * (ho - 1) + 1:sh,
                                                  c:c + sw * (wo - 1) + 1:sw, :]
    k = kt * kh * kw * cin
    flat = cols.reshape(-1, k)
    out = (flat @ wd3.reshape(k, cout)).reshape(n, to, ho, wo, cout)
    bd = None
    if bias is not None:
        bd = as_array(bias)
        if bd.shape != (cout,):
            raise DimensionError(f"strided_conv : biais {bd.shape} pour C_out={cout}")
        out = out + bd

    def vjp(g):
        g2 = g.reshape(-1, cout)
        gw = (flat.T @ g2).reshape(wd.shape)
        gcols = (g2 @ wd3.reshape(k, cout).T).reshape(cols.shape)
        gxp = np.zeros_like(xp)
        for a in range(kt):
            for b in range(kh):
                for c in range(kw):
                    gxp[:, a:a + st * (to - 1) + 1:st,
                        b:b + sh * (ho - 1) + 1:sh,
                        c:c + sw * (wo - 1) + 1:sw, :] += gcols[:, :, :, :, a, b, c, :]
        gx = gxp[:, pt:pt + t, ph:ph + h, pw:pw + w, :]
        if bd is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    inputs = (x, kernel) if bias is None else (x, kernel, bias)
    return record('strided_conv', inputs, out, vjp)


def drop_path(x, rate, rng=None, training=False):
    """
    Profondeur stochastique par échantillon ; identité en évaluation.
    rate = 1 annule toute la branche (réglage dégénéré des tests).
    """
    if not training or rate <= 0.0:
        return x
    xd = as_array(x)
    if rate >= 1.0:
        return mul(x, np.zeros((xd.shape[0],) + (1,) * (xd.ndim - 1), dtype=xd.dtype))
    if rng is None:
        raise ConfigError("drop_path en entraînement exige un générateur aléatoire")
    keep = 1.0 - rate
    mask = (rng.random(xd.shape[0]) < keep).astype(xd.dtype) / keep
    return mul(x, mask.reshape((xd.shape[0],) + (1,) * (xd.ndim - 1)).astype(xd.dtype))


def cross_entropy(logits, labels, label_smoothing=0.0):
    """Entropie croisée moyenne sur le lot ; logits [N, K], labels entiers [N]."""
    xd = as_array(logits)
    _require_rank('cross_entropy', xd, 2)
    labels = np.asarray(labels, dtype=np.int64)
    n, k = xd.shape
    if labels.shape != (n,) or labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise DimensionError(f"cross_entropy : labels {labels.shape} invalides pour logits {xd.shape}")
    shifted = xd - xd.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    target = np.full((n, k), label_smoothing / k, dtype=xd.dtype)
    target[np.arange(n), labels] += 1.0 - label_smoothing
    loss = np.asarray(-(target * log_p).sum() / n, dtype=xd.dtype)

    def vjp(g):
        return ((np.exp(log_p) - target) * (g / n),)

    return record('cross_entropy', (logits,), loss, vjp)
