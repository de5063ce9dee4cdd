"""
blocks.py - Couche Affine-Shift, bloc MLP, attention de référence et variantes

Une couche Affine-Shift complète (entrée x de forme [N, T, H, W, C]) :

    V = LN(x) · W_v
    Z = Shift(V)
    Ẑ = Z ⊙ σ(MLP_SE(AVG(Z))) + DWConv(Z)
    Y = Ẑ · W_h + b_h + x
    sortie = Y + DropPath(MLP(LN(Y)))

Les drapeaux de BlockConfig désactivent l'échelle (use_scale), le biais
(use_bias), ajoutent un shift avant le MLP (extra_mlp_shift), réduisent la
couche à Y = x + Shift(x) (only_shift) ou remplacent le mélangeur par une
attention multi-têtes (use_mhsa).

Noms des paramètres (relatifs au préfixe du bloc) :
    norm1.gamma, norm1.beta, w_v, se.fc1.w, se.fc1.b, se.fc2.w, se.fc2.b,
    dw.kernel, dw.bias, w_h, b_h, norm2.gamma, norm2.beta,
    mlp.fc1.w, mlp.fc1.b, mlp.fc2.w, mlp.fc2.b
    (référence MHSA : attn.w_q, attn.w_k, attn.w_v à la place de w_v / se / dw)
"""

import math
from dataclasses import replace

from src.errors import ConfigError, DimensionError
from src.ops import (depthwise_conv2d, drop_path, gelu, global_avg_pool, layer_norm, linear, matmul,
                     sigmoid, softmax, transpose)
from src.shift import shift
from src.specs import BlockVariant
from src.tensor import add, as_array, init_array, mul, reshape, to_sequence, to_video


def parameter_shapes(cfg):
    """Ordered (name, shape, init) triples for one layer built from `cfg`."""
    d, hidden = cfg.d, cfg.hidden
    shapes = []
    if cfg.use_mhsa:
        shapes += [
            ('norm1.gamma', (d,), 'ones'), ('norm1.beta', (d,), 'zeros'),
            ('attn.w_q', (d, d), 'normal'), ('attn.w_k', (d, d), 'normal'), ('attn.w_v', (d, d), 'normal'),
            ('w_h', (d, d), 'normal'), ('b_h', (d,), 'zeros'),
        ]
    elif not cfg.only_shift:
        shapes += [('norm1.gamma', (d,), 'ones'), ('norm1.beta', (d,), 'zeros'), ('w_v', (d, d), 'normal')]
        if cfg.use_scale:
            r = cfg.se_hidden
            shapes += [
                ('se.fc1.w', (d, r), 'normal'), ('se.fc1.b', (r,), 'zeros'),
                ('se.fc2.w', (r, d), 'normal'), ('se.fc2.b', (d,), 'zeros'),
            ]
        if cfg.use_bias:
            k = cfg.dwconv_kernel
            shapes += [('dw.kernel', (k, k, d), 'normal'), ('dw.bias', (d,), 'zeros')]
        shapes += [('w_h', (d, d), 'normal'), ('b_h', (d,), 'zeros')]
    shapes += [
        ('norm2.gamma', (d,), 'ones'), ('norm2.beta', (d,), 'zeros'),
        ('mlp.fc1.w', (d, hidden), 'normal'), ('mlp.fc1.b', (hidden,), 'zeros'),
        ('mlp.fc2.w', (hidden, d), 'normal'), ('mlp.fc2.b', (d,), 'zeros'),
    ]
    return shapes


def count_block_params(cfg):
    return sum(math.prod(shape) for _, shape, _ in parameter_shapes(cfg))


def init_block(tree, prefix, cfg, rng):
    """Register the layer's parameters under `prefix` and return the scoped view."""
    for name, shape, kind in parameter_shapes(cfg):
        tree.add(f"{prefix}.{name}", init_array(rng, shape, kind))
    return tree.scope(prefix)


def _require(params, names, branch):
    missing = [n for n in names if n not in params]
    if missing:
        raise ConfigError(f"Branche {branch} activée mais paramètres absents : {missing}")


def value_projection(x, w_v, ln_params):
    """V = LN(x) · W_v (pas de biais sur W_v)."""
    gamma, beta = ln_params
    return linear(layer_norm(x, gamma, beta), w_v)


def affine_shift_mixer(v, cfg, params):
    """
    Ẑ = Z ⊙ σ(MLP_SE(AVG(Z))) + DWConv(Z) avec Z = Shift(v).

    Sans échelle ni biais, renvoie exactement Shift(v).
    """
    z = shift(v, cfg.shift)
    out = z
    if cfg.use_scale:
        _require(params, ('se.fc1.w', 'se.fc1.b', 'se.fc2.w', 'se.fc2.b'), 'scale')
        pooled = global_avg_pool(z)
        hidden = gelu(linear(pooled, params['se.fc1.w'], params['se.fc1.b']))
        gate = sigmoid(linear(hidden, params['se.fc2.w'], params['se.fc2.b']))
        out = mul(z, gate)
    if cfg.use_bias:
        _require(params, ('dw.kernel', 'dw.bias'), 'bias')
        out = add(out, depthwise_conv2d(z, params['dw.kernel'], params['dw.bias'], cfg.dwconv_kernel))
    return out


def mlp_block(y, cfg, params, rng=None, training=False, drop_path_rate=None):
    """
    y + DropPath(fc2(GELU(fc1(LN(y))))), largeur cachée E·d.

    Avec extra_mlp_shift, la sortie du LN est décalée avant fc1.
    """
    rate = cfg.drop_path_rate if drop_path_rate is None else drop_path_rate
    h = layer_norm(y, params['norm2.gamma'], params['norm2.beta'])
    if cfg.extra_mlp_shift:
        h = shift(h, cfg.shift)
    h = gelu(linear(h, params['mlp.fc1.w'], params['mlp.fc1.b']))
    h = linear(h, params['mlp.fc2.w'], params['mlp.fc2.b'])
    return add(y, drop_path(h, rate, rng, training))


def mhsa_reference(x, mcfg, params):
    """
    Attention multi-têtes exacte sur [N, S, d] :
    softmax(q kᵀ / sqrt(d_h)) v par tête, concaténation puis projection W_h.
    """
    data = as_array(x)
    if data.ndim != 3 or data.shape[-1] != mcfg.d:
        raise DimensionError(f"mhsa_reference : [N, S, {mcfg.d}] attendu, reçu {data.shape}")
    n, s, d = data.shape
    h, dh = mcfg.heads, mcfg.head_dim

    def heads(t):
        return transpose(reshape(t, (n, s, h, dh)), (0, 2, 1, 3))

    q = heads(linear(x, params['attn.w_q']))
    k = heads(linear(x, params['attn.w_k']))
    v = heads(linear(x, params['attn.w_v']))
    scores = mul(matmul(q, transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
    attn = softmax(scores, axis=-1)
    o = reshape(transpose(matmul(attn, v), (0, 2, 1, 3)), (n, s, d))
    return linear(o, params['w_h'], params['b_h'])


def affine_shift_layer(x, cfg, params, rng=None, training=False, drop_path_rate=None):
    """
    Couche complète sur [N, T, H, W, C] ; la forme de sortie est celle de l'entrée.

    drop_path_rate surcharge cfg.drop_path_rate (1.0 accepté) et ne touche que
    la branche MLP.
    """
    data = as_array(x)
    if data.ndim != 5 or data.shape[-1] != cfg.d:
        raise DimensionError(f"affine_shift_layer : [N,T,H,W,{cfg.d}] attendu, reçu {data.shape}")
    if cfg.only_shift:
        y = add(x, shift(x, cfg.shift))
    elif cfg.use_mhsa:
        _, t, hh, ww, _ = data.shape
        seq = to_sequence(layer_norm(x, params['norm1.gamma'], params['norm1.beta']))
        y = add(x, to_video(mhsa_reference(seq, cfg.mhsa, params), t, hh, ww))
    else:
        v = value_projection(x, params['w_v'], (params['norm1.gamma'], params['norm1.beta']))
        z = affine_shift_mixer(v, cfg, params)
        y = add(linear(z, params['w_h'], params['b_h']), x)
    return mlp_block(y, cfg, params, rng, training, drop_path_rate)


_VARIANT_FLAGS = {
    BlockVariant.R1: dict(use_scale=False, use_bias=False),
    BlockVariant.R2: dict(use_scale=False, use_bias=True),
    BlockVariant.R3: dict(use_scale=True, use_bias=False),
    BlockVariant.R4: dict(use_scale=True, use_bias=True),
    BlockVariant.R5: dict(use_scale=True, use_bias=True, extra_mlp_shift=True),
    BlockVariant.R6: dict(use_scale=False, use_bias=False, only_shift=True),
}


def make_variant(row, base_cfg):
    """BlockConfig for ablation row R1..R6 (ConfigError for an unknown row)."""
    row = row if isinstance(row, BlockVariant) else BlockVariant.parse(row)
    flags = dict(use_scale=True, use_bias=True, extra_mlp_shift=False, only_shift=False, use_mhsa=False)
    flags.update(_VARIANT_FLAGS[row])
    return replace(base_cfg, **flags)
