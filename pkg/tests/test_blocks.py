"""
Tests de la couche Affine-Shift, du bloc MLP, de l'attention de référence
et des variantes d'ablation.
"""

import unittest
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest

from src import gradcheck
from src.blocks import (affine_shift_layer, affine_shift_mixer, count_block_params, init_block, make_variant,
                        mhsa_reference, mlp_block, parameter_shapes, value_projection)
from src.errors import ConfigError
from src.ops import depthwise_conv2d, gelu, layer_norm, linear, sigmoid
from src.shift import shift
from src.specs import BlockConfig, BlockVariant, MHSAConfig, ShiftAxis, ShiftSpec
from src.tensor import ParameterTree, precision
from tests.oracles import naive_attention


def _cfg(d=8, fraction=Fraction(3, 4), **kwargs):
    return BlockConfig(d=d, shift=ShiftSpec.video(d, fraction), mlp_expansion=2, **kwargs)


def _block(cfg, seed=0, scale=0.5):
    rng = np.random.default_rng(seed)
    tree = ParameterTree()
    params = init_block(tree, 'b', cfg, rng)
    for p in tree.values():
        p.data = rng.standard_normal(p.shape) * scale
    return tree, params


def _x(shape, seed=1):
    return np.random.default_rng(seed).standard_normal(shape).astype(np.float32)


class TestMixer(unittest.TestCase):
    """Branches échelle / biais du mélangeur."""

    def test_porte_nulle_donne_moitie_du_shift(self):
        cfg = make_variant('R3', _cfg())
        tree, params = _block(cfg)
        for name in ('se.fc1.w', 'se.fc1.b', 'se.fc2.w', 'se.fc2.b'):
            params[name].data = np.zeros(params[name].shape)
        v = _x((1, 2, 4, 4, 8))
        out = affine_shift_mixer(v, cfg, params).data
        np.testing.assert_array_equal(out, 0.5 * shift(v, cfg.shift).data)

    def test_noyau_delta_double_le_shift(self):
        cfg = make_variant('R2', _cfg())
        tree, params = _block(cfg)
        delta = np.zeros((3, 3, 8))
        delta[1, 1] = 1
        params['dw.kernel'].data = delta
        params['dw.bias'].data = np.zeros(8)
        v = _x((1, 2, 4, 4, 8))
        np.testing.assert_array_equal(affine_shift_mixer(v, cfg, params).data, 2 * shift(v, cfg.shift).data)

    def test_sans_branches_identique_au_shift(self):
        cfg = make_variant('R1', _cfg())
        _, params = _block(cfg)
        v = _x((2, 2, 4, 4, 8))
        assert affine_shift_mixer(v, cfg, params).data.tobytes() == shift(v, cfg.shift).data.tobytes()

    def test_composition_complete(self):
        cfg = _cfg()
        _, params = _block(cfg, seed=3)
        v = _x((2, 2, 4, 4, 8), seed=4).astype(np.float64)
        p = {k: params[k].data.astype(np.float64) for k in
             ('se.fc1.w', 'se.fc1.b', 'se.fc2.w', 'se.fc2.b', 'dw.kernel', 'dw.bias')}
        z = shift(v, cfg.shift).data.astype(np.float64)
        pooled = z.mean(axis=(1, 2, 3), keepdims=True)
        h = pooled @ p['se.fc1.w'] + p['se.fc1.b']
        h = 0.5 * h * (1 + np.tanh(np.sqrt(2 / np.pi) * (h + 0.044715 * h ** 3)))
        gate = 1 / (1 + np.exp(-(h @ p['se.fc2.w'] + p['se.fc2.b'])))
        expected = z * gate + depthwise_conv2d(z, p['dw.kernel'], p['dw.bias']).data
        np.testing.assert_allclose(affine_shift_mixer(v, cfg, params).data, expected, atol=1e-5)

    def test_porte_dans_intervalle_ouvert(self):
        cfg = _cfg()
        _, params = _block(cfg, seed=5, scale=3.0)
        z = shift(_x((1, 2, 4, 4, 8)), cfg.shift)
        hidden = gelu(linear(z.data.mean(axis=(1, 2, 3), keepdims=True), params['se.fc1.w'], params['se.fc1.b']))
        gate = sigmoid(linear(hidden, params['se.fc2.w'], params['se.fc2.b'])).data
        assert np.all(gate > 0) and np.all(gate < 1)

    def test_parametres_manquants(self):
        _, params = _block(make_variant('R1', _cfg()))
        with self.assertRaises(ConfigError):
            affine_shift_mixer(_x((1, 2, 4, 4, 8)), _cfg(), params)


class TestLayer(unittest.TestCase):

    def test_projection_valeur_identite(self):
        x = _x((1, 6, 8))
        out = value_projection(x, np.eye(8, dtype=np.float32), (np.ones(8), np.zeros(8)))
        np.testing.assert_array_equal(out.data, layer_norm(x, np.ones(8), np.zeros(8)).data)

    def test_poids_nuls_point_fixe(self):
        cfg = _cfg()
        tree, params = _block(cfg)
        for name, p in tree.items():
            value = 1.0 if name.endswith('gamma') else 0.0
            p.data = np.full(p.shape, value)
        x = _x((2, 2, 4, 4, 8))
        np.testing.assert_array_equal(affine_shift_layer(x, cfg, params).data, x)

    def test_forme_preservee_par_etage(self):
        for d in (64, 128, 320, 512):
            cfg = BlockConfig(d=d, shift=ShiftSpec.image(d), mlp_expansion=4)
            tree = ParameterTree()
            params = init_block(tree, 'b', cfg, np.random.default_rng(0))
            x = _x((1, 1, 2, 2, d))
            assert affine_shift_layer(x, cfg, params).shape == x.shape

    def test_drop_path_epargne_le_melangeur(self):
        cfg = _cfg()
        _, params = _block(cfg)
        x = _x((2, 2, 4, 4, 8))
        v = value_projection(x, params['w_v'], (params['norm1.gamma'], params['norm1.beta']))
        expected = (linear(affine_shift_mixer(v, cfg, params), params['w_h'], params['b_h']) + x).data
        out = affine_shift_layer(x, cfg, params, rng=np.random.default_rng(0), training=True, drop_path_rate=1.0)
        np.testing.assert_array_equal(out.data, expected)

    def test_mlp_second_poids_nul(self):
        cfg = _cfg()
        _, params = _block(cfg)
        params['mlp.fc2.w'].data = np.zeros(params['mlp.fc2.w'].shape)
        params['mlp.fc2.b'].data = np.zeros(8)
        y = _x((1, 2, 4, 4, 8))
        np.testing.assert_array_equal(mlp_block(y, cfg, params).data, y)

    def test_largeur_cachee(self):
        cfg = BlockConfig(d=64, shift=ShiftSpec.image(64), mlp_expansion=8)
        shapes = dict((n, s) for n, s, _ in parameter_shapes(cfg))
        assert shapes['mlp.fc1.w'] == (64, 512)

    def test_decompte_par_couche(self):
        for d, e in ((64, 8), (320, 4)):
            cfg = BlockConfig(d=d, shift=ShiftSpec.image(d), mlp_expansion=e)
            assert count_block_params(cfg) == int((2.5 + 2 * e) * d * d + (17.25 + e) * d)

    def test_determinisme(self):
        cfg = _cfg()
        outs = []
        for _ in range(2):
            _, params = _block(cfg, seed=9)
            outs.append(affine_shift_layer(_x((1, 2, 4, 4, 8)), cfg, params).data.tobytes())
        assert outs[0] == outs[1]


class TestMHSA(unittest.TestCase):

    def _params(self, d=8, seed=0):
        cfg = BlockConfig(d=d, shift=ShiftSpec.video(d, 0), use_scale=False, use_bias=False, use_mhsa=True,
                          heads=2)
        return cfg, _block(cfg, seed)[1]

    def test_token_unique(self):
        cfg, params = self._params()
        x = _x((2, 1, 8))
        expected = linear(linear(x, params['attn.w_v']), params['w_h'], params['b_h']).data
        np.testing.assert_allclose(mhsa_reference(x, cfg.mhsa, params).data, expected, atol=1e-6)

    def test_requetes_uniformes_moyenne(self):
        cfg, params = self._params()
        params['attn.w_q'].data = np.zeros((8, 8))
        x = _x((1, 5, 8))
        values = linear(x, params['attn.w_v']).data.mean(axis=1, keepdims=True)
        expected = np.broadcast_to(linear(values, params['w_h'], params['b_h']).data, (1, 5, 8))
        np.testing.assert_allclose(mhsa_reference(x, cfg.mhsa, params).data, expected, atol=1e-5)

    def test_oracle_quadratique(self):
        cfg, params = self._params(seed=2)
        x = _x((2, 5, 8), seed=3)
        p = {k: params[k].data for k in ('attn.w_q', 'attn.w_k', 'attn.w_v', 'w_h', 'b_h')}
        expected = naive_attention(x.astype(np.float64), *(p[k].astype(np.float64) for k in p), heads=2)
        np.testing.assert_allclose(mhsa_reference(x, cfg.mhsa, params).data, expected, atol=1e-5)

    def test_tetes_non_divisibles(self):
        with self.assertRaises(ConfigError):
            MHSAConfig(8, 3)


def test_drapeaux_des_variantes():
    base = _cfg()
    r4 = make_variant(BlockVariant.R4, base)
    assert (r4.use_scale, r4.use_bias, r4.extra_mlp_shift, r4.only_shift) == (True, True, False, False)
    assert make_variant('r5', base).extra_mlp_shift
    r6 = make_variant('R6', base)
    assert r6.only_shift and not (r6.use_scale or r6.use_bias)
    assert not make_variant('R1', base).use_scale and not make_variant('R1', base).use_bias
    with pytest.raises(ConfigError):
        make_variant('R7', base)


def test_lecture_des_lignes_et_des_axes():
    for row in BlockVariant:
        assert BlockVariant.parse(row) is row
        assert BlockVariant.parse(row.value.lower()) is row
    for axis in ShiftAxis:
        assert ShiftAxis.parse(axis) is axis
    with pytest.raises(ConfigError):
        BlockVariant.parse('R7')


def test_r6_moins_de_parametres_que_r4():
    base = _cfg()
    assert count_block_params(make_variant('R6', base)) < count_block_params(make_variant('R4', base))


def test_r6_shift_avec_residu():
    cfg = make_variant('R6', _cfg())
    tree, params = _block(cfg)
    params['mlp.fc2.w'].data = np.zeros(params['mlp.fc2.w'].shape)
    params['mlp.fc2.b'].data = np.zeros(8)
    x = _x((1, 2, 4, 4, 8))
    np.testing.assert_array_equal(affine_shift_layer(x, cfg, params).data, x + shift(x, cfg.shift).data)
    assert 'w_v' not in params and 'w_h' not in params


def test_configurations_invalides():
    spec = ShiftSpec.video(8)
    with pytest.raises(ConfigError):
        BlockConfig(d=8, shift=spec, only_shift=True)
    with pytest.raises(ConfigError):
        BlockConfig(d=10, shift=ShiftSpec.video(10))
    with pytest.raises(ConfigError):
        BlockConfig(d=8, shift=spec, use_mhsa=True)
    with pytest.raises(ConfigError):
        BlockConfig(d=8, shift=ShiftSpec.video(12))
    with pytest.raises(ConfigError):
        replace(_cfg(), dwconv_kernel=5)


@pytest.mark.parametrize('seed', range(5))
def test_gradients_des_variantes(seed):
    with precision(np.float64):
        for name, fn, leaves in gradcheck._blocks_cases(np.random.default_rng(seed)):
            result = gradcheck.check(name, fn, leaves, seed=seed)
            assert result.passed, result.line()
