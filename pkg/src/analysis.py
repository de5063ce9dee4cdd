"""
analysis.py - Comptage statique des paramètres et des MACs

Convention : une multiplication-accumulation (MAC) compte pour une unité ;
c'est la convention des colonnes « FLOPs » des articles de vision. L'option
flops_x2 du rapport double le total.

Chaque couche du plan produit une ou deux lignes (une couche Affine-Shift
donne une ligne `mixer` et une ligne `mlp`). Pour chaque ligne :
- macs : MACs des convolutions, projections linéaires, DWConv et MLP SE
- fixed_macs : part calculée une fois par clip (MLP SE sur les features
  poolées, classifieur) ; le reste est proportionnel au nombre de tokens
- elementwise : opérations élément par élément (LN, portes, résidus),
  listées mais exclues du total
- parts : détail par sous-opération (le shift compte toujours 0)
"""

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Tuple

from src.errors import ConfigError, FormatError
from src.models import Model, plan_layers

REPORT_FORMATS = ('table', 'json', 'csv')
CSV_COLUMNS = ('name', 'kind', 'params', 'macs', 'fixed_macs', 'elementwise', 'output_shape')


@dataclass
class LayerRow:
    name: str
    kind: str
    params: int
    macs: int
    fixed_macs: int = 0
    elementwise: int = 0
    output_shape: Tuple[int, ...] = ()
    parts: Dict[str, int] = field(default_factory=dict)


@dataclass
class ComputeStats:
    """Totaux et détail par couche ; les totaux sont la somme des lignes."""
    name: str = ''
    batch: int = 1
    rows: List[LayerRow] = field(default_factory=list)

    @property
    def params(self):
        return sum(r.params for r in self.rows)

    @property
    def macs(self):
        return sum(r.macs for r in self.rows)

    @property
    def fixed_macs(self):
        return sum(r.fixed_macs for r in self.rows)

    @property
    def token_macs(self):
        return self.macs - self.fixed_macs


def _tokens(shape):
    return shape[0] * shape[1] * shape[2]


def _conv_row(plan, batch):
    c_in, c_out = plan.in_shape[-1], plan.out_shape[-1]
    tokens = _tokens(plan.out_shape)
    macs = batch * tokens * math.prod(plan.kernel) * c_in * c_out
    return [LayerRow(plan.name, plan.kind, plan.params, macs,
                     elementwise=batch * tokens * c_out * 2,
                     output_shape=(batch,) + plan.out_shape,
                     parts={'conv': macs, 'norm': 0})]


def _block_rows(plan, batch):
    cfg = plan.block
    d, s = cfg.d, _tokens(plan.in_shape)
    shapes = plan.parameter_shapes()
    mlp_names = ('.norm2.', '.mlp.')
    mlp_params = sum(math.prod(sh) for n, sh, _ in shapes if any(m in n for m in mlp_names))
    mixer_params = plan.params - mlp_params
    out_shape = (batch,) + plan.out_shape

    parts = {'shift': 0}
    fixed = 0
    elementwise = 0
    if cfg.only_shift:
        elementwise = s * d
    elif cfg.use_mhsa:
        parts['qkv'] = 3 * s * d * d
        parts['attention'] = 2 * s * s * d
        parts['w_h'] = s * d * d
        elementwise = s * d * 2 + cfg.heads * s * s
        parts.pop('shift')
    else:
        parts['w_v'] = s * d * d
        elementwise = s * d * 2
        if cfg.use_scale:
            parts['se'] = 2 * d * cfg.se_hidden
            fixed = parts['se']
            elementwise += s * d
        if cfg.use_bias:
            parts['dwconv'] = s * cfg.dwconv_kernel ** 2 * d
            elementwise += s * d
        parts['w_h'] = s * d * d
    mixer_parts = {k: batch * v for k, v in parts.items()}
    mixer = LayerRow(f"{plan.name}.mixer", 'mixer', mixer_params, sum(mixer_parts.values()),
                     fixed_macs=batch * fixed, elementwise=batch * elementwise,
                     output_shape=out_shape, parts=mixer_parts)

    mlp_parts = {'fc1': batch * s * d * cfg.hidden, 'fc2': batch * s * cfg.hidden * d}
    if cfg.extra_mlp_shift:
        mlp_parts['shift'] = 0
    mlp = LayerRow(f"{plan.name}.mlp", 'mlp', mlp_params, sum(mlp_parts.values()),
                   elementwise=batch * (2 * s * d + s * cfg.hidden),
                   output_shape=out_shape, parts=mlp_parts)
    return [mixer, mlp]


def _head_row(plan, batch):
    c, k = plan.in_shape[-1], plan.num_classes
    macs = batch * c * k
    return [LayerRow(plan.name, 'head', plan.params, macs, fixed_macs=macs,
                     elementwise=batch * _tokens(plan.in_shape) * c,
                     output_shape=(batch, k), parts={'pool': 0, 'linear': macs})]


def analyze(spec, input_dims=None, batch=1):
    """
    Statistiques de coût pour `spec`, éventuellement à d'autres dimensions
    d'entrée (T, H, W) ou (H, W).
    """
    if input_dims is not None:
        dims = tuple(int(v) for v in input_dims)
        if len(dims) == 2:
            spec = replace(spec, height=dims[0], width=dims[1])
        elif len(dims) == 3:
            spec = replace(spec, frames=dims[0], height=dims[1], width=dims[2])
        else:
            raise ConfigError(f"input_dims doit être (H, W) ou (T, H, W), reçu {dims}")
    if batch < 1:
        raise ConfigError(f"batch doit être >= 1 : {batch}")
    stats = ComputeStats(spec.name, batch)
    for plan in plan_layers(spec):
        if plan.kind in ('stem', 'downsample'):
            stats.rows += _conv_row(plan, batch)
        elif plan.kind == 'block':
            stats.rows += _block_rows(plan, batch)
        else:
            stats.rows += _head_row(plan, batch)
    return stats


def count_params(model):
    """Nombre exact de scalaires apprenables (Model construit ou ModelSpec)."""
    if isinstance(model, Model):
        return model.params.count()
    return sum(plan.params for plan in plan_layers(model))


def count_macs(spec, input_dims=None, batch=1):
    return analyze(spec, input_dims, batch).macs


def _totals(stats, views, flops_x2):
    total = stats.macs * views
    return {
        'params': stats.params,
        'macs': stats.macs,
        'fixed_macs': stats.fixed_macs,
        'views': views,
        'total_macs': total,
        'flops': total * 2 if flops_x2 else total,
        'convention': '2xmac' if flops_x2 else 'mac',
    }


def report(stats, fmt='table', views=1, flops_x2=False):
    """
    Rapport déterministe : lignes dans l'ordre du réseau, totaux en dernier.
    """
    if fmt not in REPORT_FORMATS:
        raise ConfigError(f"Format de rapport inconnu : {fmt!r} (attendu {', '.join(REPORT_FORMATS)})")
    totals = _totals(stats, views, flops_x2)
    if fmt == 'json':
        rows = []
        for row in stats.rows:
            data = asdict(row)
            data['output_shape'] = list(row.output_shape)
            rows.append(data)
        return json.dumps({'model': stats.name, 'batch': stats.batch, 'rows': rows, 'totals': totals},
                          sort_keys=True, indent=2)
    if fmt == 'csv':
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(CSV_COLUMNS)
        for row in stats.rows:
            writer.writerow([row.name, row.kind, row.params, row.macs, row.fixed_macs, row.elementwise,
                             'x'.join(map(str, row.output_shape))])
        writer.writerow(['TOTAL', '', totals['params'], totals['macs'], totals['fixed_macs'], '', ''])
        return buffer.getvalue()

    width = max([len(r.name) for r in stats.rows] + [5])
    lines = [f"{'layer':<{width}}  {'params':>12}  {'MACs':>15}  output"]
    for row in stats.rows:
        lines.append(f"{row.name:<{width}}  {row.params:>12,}  {row.macs:>15,}  "
                     f"{'x'.join(map(str, row.output_shape))}")
    lines.append('-' * len(lines[0]))
    lines.append(f"{'TOTAL':<{width}}  {totals['params']:>12,}  {totals['macs']:>15,}")
    lines.append(f"Params : {totals['params'] / 1e6:.2f} M ; "
                 f"{'FLOPs (2xMAC)' if flops_x2 else 'FLOPs (MAC)'} : {totals['flops'] / 1e9:.2f} G"
                 f" ({views} vue(s))")
    return '\n'.join(lines)


def parse_report(text):
    """Relit un rapport JSON en ComputeStats (FormatError si mal formé)."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"Rapport JSON invalide : {e.msg}", offset=e.pos)
    try:
        rows = [LayerRow(r['name'], r['kind'], int(r['params']), int(r['macs']), int(r['fixed_macs']),
                         int(r['elementwise']), tuple(r['output_shape']), dict(r['parts']))
                for r in data['rows']]
        stats = ComputeStats(data['model'], int(data['batch']), rows)
        totals = data['totals']
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"Rapport incomplet : {e}")
    if totals['params'] != stats.params or totals['macs'] != stats.macs:
        raise FormatError("Totaux incohérents avec les lignes du rapport")
    return stats
