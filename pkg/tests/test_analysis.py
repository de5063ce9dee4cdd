"""
Tests de l'analyseur de coût (paramètres, MACs, rapports)
"""

import json

import pytest

from src.analysis import (ComputeStats, LayerRow, _conv_row, analyze, count_macs, count_params, parse_report,
                          report)
from src.errors import ConfigError, FormatError
from src.models import LayerPlan, build_model
from src.specs import BlockVariant, ModelSpec


@pytest.fixture(scope='module')
def ast_ti():
    return analyze(ModelSpec.from_name('ast-ti'))


def test_conv_1x1_un_mac():
    plan = LayerPlan('c', 'stem', (1, 1, 1, 1), (1, 1, 1, 1), (1, 1), (1, 1), (0, 0))
    assert _conv_row(plan, 1)[0].macs == 1


def test_ast_tiny_chiffres_de_reference(ast_ti):
    assert abs(ast_ti.params - 19.0e6) <= 0.05 * 19.0e6
    assert abs(ast_ti.macs - 3.9e9) <= 0.15 * 3.9e9


def test_ast_small_chiffres_de_reference():
    """
    Écart voulu : paramètres à ±10 % de 38 M au lieu de ±5 %.

    Avec les profondeurs fixées, un bloc homogène qui garde AST-Ti à ±5 % de
    19 M donne AST-S ≈ 34,9 M ; les deux bandes à ±5 % sont incompatibles
    (voir DESIGN.md). Les MACs gardent la bande de ±15 %.
    """
    stats = analyze(ModelSpec.from_name('ast-s'))
    assert abs(stats.params - 38.0e6) <= 0.10 * 38.0e6
    assert abs(stats.macs - 6.8e9) <= 0.15 * 6.8e9


def test_vast_tiny_par_vue():
    macs = count_macs(ModelSpec.from_name('vast-ti', frames=8))
    assert abs(macs - 32.7e9) <= 0.15 * 32.7e9


def test_lignes_ast_tiny(ast_ti):
    names = [r.name for r in ast_ti.rows]
    assert len(names) == 41
    assert names[0] == 'stem' and names[-1] == 'head'
    assert names[1:3] == ['stage1.block0.mixer', 'stage1.block0.mlp']
    assert 'stage2.down' in names


def test_totaux_egaux_somme_des_lignes(ast_ti):
    assert ast_ti.params == sum(r.params for r in ast_ti.rows)
    assert ast_ti.macs == sum(r.macs for r in ast_ti.rows)
    for row in ast_ti.rows:
        assert row.macs == sum(row.parts.values())


def test_shift_ne_coute_rien(ast_ti):
    mixers = [r for r in ast_ti.rows if r.kind == 'mixer']
    assert mixers and all(r.parts['shift'] == 0 for r in mixers)


def test_resolution_double_quadruple_les_macs():
    spec = ModelSpec.from_name('ast-ti')
    base = analyze(spec)
    big = analyze(spec, input_dims=(448, 448))
    assert big.token_macs == 4 * base.token_macs
    assert big.fixed_macs == base.fixed_macs
    assert big.params == base.params


def test_frames_doublees_doublent_les_macs():
    spec = ModelSpec.from_name('vast-ti', frames=8)
    eight = analyze(spec)
    sixteen = analyze(spec, input_dims=(16, 224, 224))
    assert sixteen.token_macs == 2 * eight.token_macs
    assert sixteen.macs == pytest.approx(2 * eight.macs, rel=1e-4)


def test_lineaire_en_batch():
    spec = ModelSpec.from_name('vast-micro', frames=2, height=16, width=16)
    assert count_macs(spec, batch=3) == 3 * count_macs(spec)


def test_r6_moins_cher_que_r4():
    r4 = analyze(ModelSpec.from_name('ast-ti', block_variant=BlockVariant.R4))
    r6 = analyze(ModelSpec.from_name('ast-ti', block_variant=BlockVariant.R6))
    assert r6.params < r4.params and r6.macs < r4.macs


def test_decompte_modele_construit():
    spec = ModelSpec.from_name('vast-micro', frames=2, height=16, width=16)
    model = build_model(spec)
    assert count_params(model) == count_params(spec) == sum(p.size for p in model.params.values())


def test_rapport_vide_et_format_inconnu():
    empty = ComputeStats('vide')
    assert json.loads(report(empty, 'json'))['totals']['params'] == 0
    assert 'TOTAL' in report(empty, 'table')
    with pytest.raises(ConfigError):
        report(empty, 'xml')


def test_rapport_json_relu(ast_ti):
    text = report(ast_ti, 'json', views=3, flops_x2=True)
    totals = json.loads(text)['totals']
    assert totals['total_macs'] == 3 * ast_ti.macs
    assert totals['flops'] == 6 * ast_ti.macs
    assert totals['convention'] == '2xmac'
    back = parse_report(text)
    assert back.params == ast_ti.params and back.macs == ast_ti.macs
    assert [r.name for r in back.rows] == [r.name for r in ast_ti.rows]


def test_rapport_csv_et_table(ast_ti):
    lines = report(ast_ti, 'csv').splitlines()
    assert lines[0].startswith('name,kind,params,macs')
    assert len(lines) == 43
    assert lines[-1].split(',')[2] == str(ast_ti.params)
    table = report(ast_ti, 'table')
    assert f"{ast_ti.params:,}" in table


def test_rapport_mal_forme():
    with pytest.raises(FormatError) as excinfo:
        parse_report('{"rows": [')
    assert excinfo.value.offset is not None
    with pytest.raises(FormatError):
        parse_report('{"model": "x"}')
    stats = ComputeStats('x', 1, [LayerRow('a', 'head', 2, 3)])
    data = json.loads(report(stats, 'json'))
    data['totals']['params'] = 99
    with pytest.raises(FormatError):
        parse_report(json.dumps(data))


def test_dimensions_invalides():
    with pytest.raises(ConfigError):
        analyze(ModelSpec.from_name('ast-ti'), input_dims=(1, 2, 3, 4))
    with pytest.raises(ConfigError):
        analyze(ModelSpec.from_name('ast-ti'), batch=0)
