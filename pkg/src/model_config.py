"""
model_config.py - Configuration JSON d'un modèle

Lit, valide et réécrit le fichier JSON qui décrit un modèle (variante, stem,
dimensions d'entrée, classes, surcharges du shift, ligne d'ablation, graine).
Les clés inconnues sont refusées, les clés absentes prennent leur valeur par
défaut. La sortie de dump_config est canonique : parse -> dump -> parse est stable.
"""

import json
from dataclasses import dataclass
from typing import Any, Dict

from src.errors import ConfigError, FormatError
from src.specs import BlockVariant, ModelSpec, ShiftAxis, StemKind

# clé -> (type attendu, défaut)
SCHEMA: Dict[str, Any] = {
    'model': (str, 'vast-micro'),
    'stem': (str, '2d'),
    'frames': (int, None),
    'height': (int, 32),
    'width': (int, 32),
    'num_classes': (int, 2),
    'in_channels': (int, 3),
    'shift': (dict, None),
    'block_variant': (str, 'R4'),
    'drop_path_rate': (float, 0.0),
    'seed': (int, 0),
}
SHIFT_KEYS = {'axes', 'fraction', 'offset'}


@dataclass(frozen=True)
class ModelConfig:
    spec: ModelSpec
    seed: int = 0


def _typed(key, value, type_):
    if type_ is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if type_ is int and isinstance(value, bool):
        raise ConfigError(f"{key} doit être un entier")
    if not isinstance(value, type_):
        raise ConfigError(f"{key} doit être de type {type_.__name__}, reçu {type(value).__name__}")
    return value


def valider_config(data):
    """Valide un dict déjà décodé et construit le ModelConfig correspondant.

    Lève ConfigError pour toute clé inconnue ou valeur invalide.
    """
    if not isinstance(data, dict):
        raise ConfigError("La configuration doit être un objet JSON")
    unknown = sorted(set(data) - set(SCHEMA))
    if unknown:
        raise ConfigError(f"Clés inconnues : {', '.join(unknown)}")
    values = {}
    for key, (type_, default) in SCHEMA.items():
        values[key] = _typed(key, data[key], type_) if key in data and data[key] is not None else default

    overrides = {
        'stem': StemKind(values['stem']) if values['stem'] in ('2d', '3d') else None,
        'height': values['height'],
        'width': values['width'],
        'num_classes': values['num_classes'],
        'in_channels': values['in_channels'],
        'block_variant': BlockVariant.parse(values['block_variant']),
        'drop_path_rate': values['drop_path_rate'],
    }
    if overrides['stem'] is None:
        raise ConfigError(f"stem doit être '2d' ou '3d', reçu {values['stem']!r}")
    if values['frames'] is not None:
        overrides['frames'] = values['frames']

    shift = values['shift']
    if shift is not None:
        extra = sorted(set(shift) - SHIFT_KEYS)
        if extra:
            raise ConfigError(f"Clés inconnues dans shift : {', '.join(extra)}")
        if 'axes' in shift:
            if not isinstance(shift['axes'], list):
                raise ConfigError("shift.axes doit être une liste")
            overrides['shift_axes'] = tuple(ShiftAxis.parse(a) for a in shift['axes'])
        if 'fraction' in shift:
            fraction = shift['fraction']
            if isinstance(fraction, bool) or not isinstance(fraction, (str, int, float)):
                raise ConfigError(f"shift.fraction doit être une fraction ('1/3', 0.5), reçu {fraction!r}")
            overrides['shift_fraction'] = fraction
        if 'offset' in shift:
            overrides['shift_offset'] = _typed('shift.offset', shift['offset'], int)

    if values['seed'] < 0:
        raise ConfigError(f"seed doit être un entier positif ou nul, reçu {values['seed']}")
    spec = ModelSpec.from_name(values['model'], **overrides)
    return ModelConfig(spec, values['seed'])


def parse_config(text):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"JSON de configuration invalide : {e.msg}", offset=e.pos)
    return valider_config(data)


def dump_config(config):
    """JSON canonique (clés triées) ; tous les champs sont explicites."""
    spec = config.spec
    data = {
        'model': spec.name,
        'stem': spec.stem.value,
        'frames': spec.frames,
        'height': spec.height,
        'width': spec.width,
        'num_classes': spec.num_classes,
        'in_channels': spec.in_channels,
        'shift': {
            'axes': [a.name.lower() for a in spec.axes],
            'fraction': str(spec.fraction),
            'offset': spec.shift_offset,
        },
        'block_variant': spec.block_variant.value,
        'drop_path_rate': spec.drop_path_rate,
        'seed': config.seed,
    }
    return json.dumps(data, sort_keys=True, indent=2)


def load_config(path):
    with open(path, 'r', encoding='utf-8') as f:
        return parse_config(f.read())


def save_config(path, config):
    with open(path, 'w', encoding='utf-8') as f:
        f.write(dump_config(config) + "\n")
