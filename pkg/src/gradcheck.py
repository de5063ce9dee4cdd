"""
gradcheck.py - Contrôle des gradients par différences finies centrées

Pour chaque cas, la perte est f = Σ sortie ⊙ R (R aléatoire fixe). Le
gradient analytique (backward) est comparé, sur un échantillon de
coordonnées de chaque feuille, à (f(x + h) - f(x - h)) / 2h.

Erreur relative : ‖a - n‖₂ / (‖a‖₂ + ‖n‖₂) sur les coordonnées tirées.

Les calculs sont faits en float64 (contexte `precision`) ; les mêmes
opérations servent en float32 pour l'entraînement.

Trois suites : ops, blocks, model.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from src import blocks, models, ops
from src.config import Config
from src.shift import shift
from src.specs import BlockConfig, BlockVariant, Family, ModelSpec, ModelVariant, ShiftSpec
from src.tensor import Parameter, ParameterTree, Tape, Tensor, backward, mul, precision, sum_all

logger = logging.getLogger(__name__)

SCOPES = ('ops', 'blocks', 'model')


@dataclass
class CheckResult:
    name: str
    seed: int
    rel_error: float
    passed: bool

    def line(self):
        status = 'PASS' if self.passed else 'FAIL'
        return f"{status} {self.name} seed={self.seed} rel_err={self.rel_error:.3e}"


def _grad_of(leaf):
    if isinstance(leaf, Parameter):
        return leaf.grad.data
    return leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)


def _sample_coords(rng, shape, limit):
    size = int(np.prod(shape))
    flat = rng.choice(size, size=min(size, limit), replace=False)
    return [np.unravel_index(int(i), shape) for i in np.sort(flat)]


def check(name, fn, leaves, seed=0, step=Config.GRADCHECK_STEP, tol=Config.GRADCHECK_TOL,
          max_coords=Config.GRADCHECK_MAX_COORDS):
    """
    Compare backward aux différences finies pour `fn()` par rapport à `leaves`
    (Tensor requires_grad ou Parameter, modifiés en place pendant le test).
    """
    rng = np.random.default_rng(seed + 7919)
    projection = rng.standard_normal(np.shape(fn().data))

    def f():
        return float((fn().data * projection).sum())

    for leaf in leaves:
        leaf.zero_grad()
    with Tape() as tape:
        loss = sum_all(mul(fn(), projection))
    backward(tape, loss)

    analytic, numeric = [], []
    for leaf in leaves:
        grad = _grad_of(leaf)
        for idx in _sample_coords(rng, leaf.data.shape, max_coords):
            original = leaf.data[idx]
            leaf.data[idx] = original + step
            f_plus = f()
            leaf.data[idx] = original - step
            f_minus = f()
            leaf.data[idx] = original
            analytic.append(grad[idx])
            numeric.append((f_plus - f_minus) / (2 * step))
    a, n = np.array(analytic), np.array(numeric)
    denom = np.linalg.norm(a) + np.linalg.norm(n)
    rel = float(np.linalg.norm(a - n) / denom) if denom > 0 else 0.0
    result = CheckResult(name, seed, rel, rel < tol)
    logger.info(result.line())
    return result


def _leaf(rng, shape, scale=1.0):
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=True)


def _randomize(tree, rng, scale=0.5):
    for p in tree.values():
        p.data = rng.standard_normal(p.shape) * scale


def _ops_cases(rng):
    x3 = _leaf(rng, (2, 3, 5))
    w = _leaf(rng, (5, 4))
    b = _leaf(rng, (4,))
    yield 'ops.linear', lambda: ops.linear(x3, w, b), [x3, w, b]

    xl, g, be = _leaf(rng, (2, 3, 6)), _leaf(rng, (6,)), _leaf(rng, (6,))
    yield 'ops.layer_norm', lambda: ops.layer_norm(xl, g, be), [xl, g, be]

    xa = _leaf(rng, (2, 3, 4))
    yield 'ops.gelu', lambda: ops.gelu(xa), [xa]
    yield 'ops.sigmoid', lambda: ops.sigmoid(xa), [xa]
    yield 'ops.softmax', lambda: ops.softmax(xa, axis=-1), [xa]

    xm, ym = _leaf(rng, (2, 3, 4)), _leaf(rng, (2, 4, 3))
    yield 'ops.matmul', lambda: ops.matmul(xm, ym), [xm, ym]

    xv = _leaf(rng, (1, 2, 4, 4, 3))
    yield 'ops.global_avg_pool', lambda: ops.global_avg_pool(xv), [xv]

    k, kb = _leaf(rng, (3, 3, 3)), _leaf(rng, (3,))
    yield 'ops.depthwise_conv2d', lambda: ops.depthwise_conv2d(xv, k, kb), [xv, k, kb]

    k2, b2 = _leaf(rng, (3, 3, 3, 2)), _leaf(rng, (2,))
    yield 'ops.strided_conv2d', lambda: ops.strided_conv(xv, k2, b2, stride=2, padding=1), [xv, k2, b2]

    k3, b3 = _leaf(rng, (3, 3, 3, 3, 2)), _leaf(rng, (2,))
    yield 'ops.strided_conv3d', lambda: ops.strided_conv(xv, k3, b3, stride=(2, 2, 2), padding=(1, 1, 1)), [xv, k3, b3]

    xs = _leaf(rng, (1, 2, 3, 3, 12))
    spec = ShiftSpec.video(12)
    yield 'ops.shift', lambda: shift(xs, spec), [xs]

    logits = _leaf(rng, (4, 3))
    labels = rng.integers(0, 3, 4)
    yield 'ops.cross_entropy', lambda: ops.cross_entropy(logits, labels, 0.1), [logits]


def _block_cfg(d=8, fraction=Fraction(3, 4)):
    return BlockConfig(d=d, shift=ShiftSpec.video(d, fraction), mlp_expansion=2)


def _blocks_cases(rng):
    base = _block_cfg()
    for row in BlockVariant:
        cfg = blocks.make_variant(row, base)
        tree = ParameterTree()
        params = blocks.init_block(tree, 'block', cfg, rng)
        _randomize(tree, rng)
        x = _leaf(rng, (1, 2, 4, 4, cfg.d))
        yield (f"blocks.{row.value}",
               lambda cfg=cfg, x=x, params=params: blocks.affine_shift_layer(x, cfg, params),
               [x] + list(tree.values()))

    mcfg = BlockConfig(d=8, shift=ShiftSpec.video(8, 0), use_scale=False, use_bias=False, use_mhsa=True, heads=2)
    tree = ParameterTree()
    params = blocks.init_block(tree, 'attn', mcfg, rng)
    _randomize(tree, rng)
    xs = _leaf(rng, (2, 4, 8))
    yield 'blocks.mhsa', lambda: blocks.mhsa_reference(xs, mcfg.mhsa, params), [xs] + list(tree.values())

    plan = models.LayerPlan('down', 'downsample', (1, 4, 4, 8), (1, 2, 2, 12), (2, 2), (2, 2), (0, 0))
    tree = ParameterTree()
    for name, shape, kind in plan.parameter_shapes():
        tree.add(name, rng.standard_normal(shape) * 0.5)
    xd = _leaf(rng, (1, 1, 4, 4, 8))
    yield 'blocks.downsample', lambda: models.downsample(xd, plan, tree), [xd] + list(tree.values())


def micro_check_spec():
    """Micro-modèle à 4 couches de dimension réduite pour le contrôle de bout en bout."""
    return ModelSpec(variant=ModelVariant.MICRO, family=Family.VIDEO, frames=2, height=8, width=8,
                     num_classes=3, micro_channels=12, micro_depth=4, micro_expansion=2)


def _model_cases(rng):
    model = models.build_model(micro_check_spec(), int(rng.integers(0, 2 ** 31)))
    _randomize(model.params, rng, 0.3)
    x = _leaf(rng, (1,) + model.spec.input_shape)
    yield 'model.micro', lambda: models.model_forward(model, x), [x] + list(model.params.values())


_SUITES = {'ops': _ops_cases, 'blocks': _blocks_cases, 'model': _model_cases}


def run_suite(scope, seed=0, seeds=Config.GRADCHECK_SEEDS):
    """Exécute une suite sur `seeds` graines consécutives ; renvoie la liste des résultats."""
    if scope not in _SUITES:
        raise ValueError(f"Portée inconnue : {scope!r} (attendu {', '.join(SCOPES)})")
    results = []
    with precision(np.float64):
        for s in range(seed, seed + seeds):
            rng = np.random.default_rng(s)
            for name, fn, leaves in _SUITES[scope](rng):
                results.append(check(name, fn, leaves, seed=s))
    return results
