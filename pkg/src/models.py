"""
models.py - Réseaux AST (image) et VAST (vidéo)

Ce module assemble les réseaux hiérarchiques :
- Stem : patch embedding chevauchant (7x7, stride 4, pad 3) puis LN ;
  en 3D, noyau temporel 3 / stride 2 / pad 1 (T divisé par deux)
- Étages : C_i canaux, n_i couches Affine-Shift, expansion E_i
- Transitions : convolution k x k de stride 2 puis LN (résolution / 2)
- Tête : moyenne sur tous les tokens puis classifieur linéaire

Le plan des couches (plan_layers) est une description statique partagée par
la construction du modèle (build_model) et par l'analyseur de coût.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from src.blocks import affine_shift_layer, make_variant, parameter_shapes as block_shapes
from src.config import Config
from src.errors import DimensionError
from src.ops import conv_output_extent, global_avg_pool, layer_norm, linear, strided_conv
from src.specs import BlockConfig, StemKind
from src.tensor import ParameterTree, as_array, init_array, reshape

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LayerPlan:
    """
    Une entrée du plan : stem, transition, couche ou tête.

    in_shape / out_shape sont les formes (T, H, W, C) par échantillon.
    """
    name: str
    kind: str
    in_shape: Tuple[int, int, int, int]
    out_shape: Tuple[int, int, int, int]
    kernel: Tuple[int, ...] = ()
    stride: Tuple[int, ...] = ()
    padding: Tuple[int, ...] = ()
    block: Optional[BlockConfig] = None
    drop_path_rate: float = 0.0
    num_classes: int = 0

    def parameter_shapes(self):
        """(full name, shape, init) for every parameter this layer owns."""
        if self.kind == 'block':
            return [(f"{self.name}.{n}", s, k) for n, s, k in block_shapes(self.block)]
        if self.kind == 'head':
            c = self.in_shape[-1]
            return [(f"{self.name}.w", (c, self.num_classes), 'normal'),
                    (f"{self.name}.b", (self.num_classes,), 'zeros')]
        c_in, c_out = self.in_shape[-1], self.out_shape[-1]
        return [
            (f"{self.name}.kernel", tuple(self.kernel) + (c_in, c_out), 'normal'),
            (f"{self.name}.bias", (c_out,), 'zeros'),
            (f"{self.name}.norm.gamma", (c_out,), 'ones'),
            (f"{self.name}.norm.beta", (c_out,), 'zeros'),
        ]

    @property
    def params(self):
        return sum(math.prod(shape) for _, shape, _ in self.parameter_shapes())


def _check_input_dims(spec):
    multiple = spec.input_multiple
    if spec.height % multiple or spec.width % multiple:
        raise DimensionError(
            f"{spec.name} : H={spec.height} et W={spec.width} doivent être divisibles par {multiple}")


def _downsample_geometry():
    k = Config.DOWNSAMPLE_KERNEL
    return k, 2, (k - 1) // 2 if k % 2 else 0


def plan_layers(spec):
    """
    Plan statique du réseau décrit par `spec`.

    Lève DimensionError si H ou W n'est pas un multiple de 32 (4 pour micro).
    """
    _check_input_dims(spec)
    t, h, w = spec.frames, spec.height, spec.width
    stages = spec.stages
    c1 = stages[0].channels
    if spec.stem is StemKind.THREE_D:
        kernel = (Config.STEM_TIME_KERNEL, Config.STEM_KERNEL, Config.STEM_KERNEL)
        stride = (Config.STEM_TIME_STRIDE, Config.STEM_STRIDE, Config.STEM_STRIDE)
        padding = (Config.STEM_TIME_PADDING, Config.STEM_PADDING, Config.STEM_PADDING)
    else:
        kernel = (Config.STEM_KERNEL, Config.STEM_KERNEL)
        stride = (Config.STEM_STRIDE, Config.STEM_STRIDE)
        padding = (Config.STEM_PADDING, Config.STEM_PADDING)
    ho = conv_output_extent(h, kernel[-2], stride[-2], padding[-2])
    wo = conv_output_extent(w, kernel[-1], stride[-1], padding[-1])
    shape = (spec.frames_out, ho, wo, c1)
    plans = [LayerPlan('stem', 'stem', (t, h, w, spec.in_channels), shape, kernel, stride, padding)]

    total_blocks = sum(s.depth for s in stages)
    index = 0
    k, s, p = _downsample_geometry()
    for i, stage in enumerate(stages):
        prefix = f"stage{i + 1}"
        if i > 0:
            tt, hh, ww, _ = shape
            out = (tt, conv_output_extent(hh, k, s, p), conv_output_extent(ww, k, s, p), stage.channels)
            plans.append(LayerPlan(f"{prefix}.down", 'downsample', shape, out, (k, k), (s, s), (p, p)))
            shape = out
        base = BlockConfig(
            d=stage.channels,
            shift=spec.shift_spec(stage.channels),
            se_reduction=spec.se_reduction,
            mlp_expansion=stage.expansion,
        )
        cfg = make_variant(spec.block_variant, base)
        for j in range(stage.depth):
            # profondeur stochastique croissante linéairement sur toutes les couches
            rate = spec.drop_path_rate * index / (total_blocks - 1) if total_blocks > 1 else spec.drop_path_rate
            plans.append(LayerPlan(f"{prefix}.block{j}", 'block', shape, shape, block=cfg, drop_path_rate=rate))
            index += 1
    plans.append(LayerPlan('head', 'head', shape, (1, 1, 1, spec.num_classes), num_classes=spec.num_classes))
    return plans


@dataclass
class Model:
    """Réseau construit : spec, plan des couches et arbre de paramètres."""
    spec: object
    plans: list
    params: ParameterTree = field(default_factory=ParameterTree)

    def __call__(self, x, rng=None, training=False):
        return model_forward(self, x, rng, training)

    @property
    def blocks(self):
        return [p for p in self.plans if p.kind == 'block']

    def count_params(self):
        return self.params.count()


def build_model(spec, seed=0):
    """
    Initialise tous les paramètres depuis `seed`, dans l'ordre du plan.

    Deux constructions avec la même graine sont identiques bit à bit.
    """
    plans = plan_layers(spec)
    rng = np.random.default_rng(seed)
    model = Model(spec, plans)
    for plan in plans:
        for name, shape, kind in plan.parameter_shapes():
            model.params.add(name, init_array(rng, shape, kind))
    logger.info("Modèle %s construit : %d paramètres (graine %d)", spec.name, model.params.count(), seed)
    return model


def _conv_norm(x, plan, params):
    y = strided_conv(x, params[f"{plan.name}.kernel"], params[f"{plan.name}.bias"],
                     stride=plan.stride, padding=plan.padding)
    return layer_norm(y, params[f"{plan.name}.norm.gamma"], params[f"{plan.name}.norm.beta"])


def stem_forward(x, plan, params):
    """Patch embedding : [N, T, H, W, C_in] -> [N, T', H/4, W/4, C_1]."""
    return _conv_norm(x, plan, params)


def downsample(x, plan, params):
    """Transition entre étages : résolution spatiale / 2, C_in -> C_out, puis LN."""
    shape = as_array(x).shape
    if shape[2] % 2 or shape[3] % 2:
        raise DimensionError(f"downsample : dimensions spatiales impaires {shape[2:4]}")
    return _conv_norm(x, plan, params)


def head_forward(features, plan, params):
    """Moyenne sur les T·H·W tokens puis classifieur : logits [N, num_classes]."""
    pooled = global_avg_pool(features)
    n, c = as_array(pooled).shape[0], as_array(pooled).shape[-1]
    return linear(reshape(pooled, (n, c)), params[f"{plan.name}.w"], params[f"{plan.name}.b"])


def model_forward(model, x, rng=None, training=False):
    """Stem -> étages (avec transitions) -> tête ; enregistré sur la bande active."""
    shape = as_array(x).shape
    expected = model.spec.input_shape
    if len(shape) != 5 or tuple(shape[1:]) != expected:
        raise DimensionError(f"Entrée de forme {tuple(shape)}, attendu [N, {', '.join(map(str, expected))}]")
    params = model.params
    h = x
    for plan in model.plans:
        if plan.kind == 'stem':
            h = stem_forward(h, plan, params)
        elif plan.kind == 'downsample':
            h = downsample(h, plan, params)
        elif plan.kind == 'block':
            h = affine_shift_layer(h, plan.block, params.scope(plan.name), rng, training, plan.drop_path_rate)
        else:
            h = head_forward(h, plan, params)
    return h
