"""
Tests du fichier JSON de configuration de modèle
"""

import json
from fractions import Fraction

import pytest

from src.errors import ConfigError, FormatError
from src.model_config import dump_config, load_config, parse_config, save_config, valider_config
from src.specs import BlockVariant, Family, ModelVariant, ShiftAxis, StemKind


def test_valeurs_par_defaut():
    config = parse_config('{}')
    spec = config.spec
    assert spec.variant is ModelVariant.MICRO and spec.family is Family.VIDEO
    assert (spec.frames, spec.height, spec.width) == (8, 32, 32)
    assert spec.num_classes == 2 and spec.block_variant is BlockVariant.R4
    assert config.seed == 0


def test_surcharges_completes():
    config = parse_config(json.dumps({
        'model': 'vast-ti', 'stem': '3d', 'frames': 16, 'height': 224, 'width': 224, 'num_classes': 174,
        'shift': {'axes': ['time', 'width'], 'fraction': '1/4', 'offset': 2},
        'block_variant': 'r5', 'drop_path_rate': 0.3, 'seed': 7,
    }))
    spec = config.spec
    assert spec.stem is StemKind.THREE_D and spec.frames_out == 8
    assert spec.axes == (ShiftAxis.TIME, ShiftAxis.WIDTH)
    assert spec.fraction == Fraction(1, 4) and spec.shift_offset == 2
    assert spec.block_variant is BlockVariant.R5
    assert config.seed == 7


def test_aller_retour_stable(tmp_path):
    text = json.dumps({'model': 'ast-s', 'height': 256, 'width': 256, 'shift': {'fraction': 0.25}})
    first = parse_config(text)
    dumped = dump_config(first)
    second = parse_config(dumped)
    assert (second.spec.axes, second.spec.fraction) == (first.spec.axes, first.spec.fraction)
    assert dump_config(second) == dumped
    save_config(tmp_path / 'model.json', second)
    assert load_config(tmp_path / 'model.json') == second


@pytest.mark.parametrize('data', [
    {'modele': 'ast-ti'},
    {'shift': {'axes': ['time'], 'amplitude': 1}},
    {'model': 'ast-xl'},
    {'stem': '4d'},
    {'frames': 'huit'},
    {'height': True},
    {'block_variant': 'R9'},
    {'shift': {'axes': 'time'}},
    {'shift': {'axes': ['depth']}},
    {'shift': {'fraction': '3/2'}},
    {'model': 'ast-ti', 'stem': '3d'},
    {'seed': -1},
    {'seed': 1.5},
    {'shift': {'fraction': True}},
    {'shift': {'fraction': [1, 3]}},
    [],
])
def test_configurations_rejetees(data):
    with pytest.raises(ConfigError):
        valider_config(data)


def test_json_mal_forme():
    with pytest.raises(FormatError) as excinfo:
        parse_config('{"model": ')
    assert excinfo.value.offset == 10
