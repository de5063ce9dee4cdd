"""
specs.py - Types du domaine

Ce module définit les énumérations et les configurations immuables partagées
par tous les modules :
- ShiftAxis / ShiftSpec : axes décalés, fraction de canaux, amplitude
- BlockVariant / BlockConfig / MHSAConfig : couche Affine-Shift et ses variantes
- StageSpec / ModelSpec : architectures AST (image) et VAST (vidéo)
- ToyTask / TrainConfig : tâches jouets et hyperparamètres d'entraînement

Chaque configuration valide ses invariants à la construction et lève
ConfigError en cas de violation.
"""

import enum
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Optional, Tuple

from src.config import Config
from src.errors import ConfigError


class ShiftAxis(enum.Enum):
    """
    Axes de décalage ; la valeur est l'indice de l'axe dans [N, T, H, W, C].
    """
    TIME = 1
    HEIGHT = 2
    WIDTH = 3

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        try:
            return cls[str(name).upper()]
        except KeyError:
            raise ConfigError(f"Axe de shift inconnu : {name!r}")


class StemKind(enum.Enum):
    """Patch embedding : 2D (par image) ou 3D (noyau temporel 3, stride 2)."""
    TWO_D = "2d"
    THREE_D = "3d"


class Family(enum.Enum):
    """AST (image, shift h/w) ou VAST (vidéo, shift t/h/w)."""
    IMAGE = "ast"
    VIDEO = "vast"


class ModelVariant(enum.Enum):
    TINY = "ti"
    SMALL = "s"
    MEDIUM = "m"
    MICRO = "micro"


class BlockVariant(enum.Enum):
    """
    Lignes de l'ablation des blocs.

    R1 : sans échelle ni biais      R4 : bloc complet
    R2 : sans échelle               R5 : complet + shift dans le MLP
    R3 : sans biais                 R6 : shift seul (pas de W_v / W_h)
    """
    R1 = "R1"
    R2 = "R2"
    R3 = "R3"
    R4 = "R4"
    R5 = "R5"
    R6 = "R6"

    @classmethod
    def parse(cls, row):
        if isinstance(row, cls):
            return row
        try:
            return cls(str(row).upper())
        except ValueError:
            raise ConfigError(f"Variante de bloc inconnue : {row!r}")


class TaskKind(enum.Enum):
    TEMPORAL_ORDER = "temporal-order"
    STATIC_PATTERN = "static-pattern"


def parse_fraction(value):
    """Accept '1/3', 0.5, Fraction or int; return a Fraction in [0, 1]."""
    try:
        frac = Fraction(value) if not isinstance(value, float) else Fraction(value).limit_denominator(1000)
    except (ValueError, ZeroDivisionError, TypeError):
        raise ConfigError(f"Fraction invalide : {value!r}")
    if frac < 0:
        raise ConfigError(f"La fraction de shift doit être positive : {frac}")
    if frac > 1:
        raise ConfigError(f"La fraction de shift ne peut pas dépasser 1 : {frac}")
    return frac


_AXIS_ORDER = (ShiftAxis.TIME, ShiftAxis.HEIGHT, ShiftAxis.WIDTH)


@dataclass(frozen=True)
class ShiftSpec:
    """
    Paramètres du Shift(X, p, b).

    Attributs :
        axes : axes décalés, normalisés dans l'ordre (temps, hauteur, largeur)
        total_fraction : fraction totale p de canaux décalés
        offset_magnitude : amplitude du décalage (positions)
        channels : nombre de canaux C du tenseur décalé
    """
    axes: Tuple[ShiftAxis, ...]
    total_fraction: Fraction
    offset_magnitude: int = Config.SHIFT_OFFSET
    channels: int = 1

    def __post_init__(self):
        axes = tuple(ShiftAxis.parse(a) if not isinstance(a, ShiftAxis) else a for a in self.axes)
        if len(set(axes)) != len(axes):
            raise ConfigError(f"Axes de shift dupliqués : {axes}")
        object.__setattr__(self, 'axes', tuple(a for a in _AXIS_ORDER if a in axes))
        object.__setattr__(self, 'total_fraction', parse_fraction(self.total_fraction))
        if self.offset_magnitude < 1:
            raise ConfigError(f"L'amplitude du décalage doit être >= 1 : {self.offset_magnitude}")
        if self.channels < 1:
            raise ConfigError(f"Nombre de canaux invalide : {self.channels}")
        if self.total_fraction > 0 and not self.axes:
            raise ConfigError("Une fraction non nulle exige au moins un axe")

    @classmethod
    def image(cls, channels, fraction=Config.SHIFT_FRACTION_IMAGE, offset=Config.SHIFT_OFFSET):
        return cls((ShiftAxis.HEIGHT, ShiftAxis.WIDTH), fraction, offset, channels)

    @classmethod
    def video(cls, channels, fraction=Config.SHIFT_FRACTION_VIDEO, offset=Config.SHIFT_OFFSET):
        return cls(_AXIS_ORDER, fraction, offset, channels)

    def without(self, axis):
        """Same spec with one axis removed (total fraction unchanged)."""
        return replace(self, axes=tuple(a for a in self.axes if a != axis))

    def to_dict(self):
        return {
            'axes': [a.name.lower() for a in self.axes],
            'fraction': str(self.total_fraction),
            'offset': self.offset_magnitude,
        }


@dataclass(frozen=True)
class MHSAConfig:
    """Attention multi-têtes de référence : d = heads * head_dim."""
    d: int
    heads: int = Config.MHSA_HEADS

    def __post_init__(self):
        if self.heads < 1 or self.d % self.heads != 0:
            raise ConfigError(f"d={self.d} n'est pas divisible par heads={self.heads}")

    @property
    def head_dim(self):
        return self.d // self.heads


@dataclass(frozen=True)
class BlockConfig:
    """
    Réglages d'une couche Affine-Shift.

    Les drapeaux encodent exactement les lignes R1..R6 plus la référence MHSA :
    only_shift exclut tous les autres drapeaux, use_mhsa exclut tous les
    drapeaux de shift.
    """
    d: int
    shift: ShiftSpec
    se_reduction: int = Config.SE_REDUCTION
    dwconv_kernel: int = Config.DWCONV_KERNEL
    use_scale: bool = True
    use_bias: bool = True
    extra_mlp_shift: bool = False
    only_shift: bool = False
    use_mhsa: bool = False
    mlp_expansion: int = 4
    drop_path_rate: float = 0.0
    heads: int = Config.MHSA_HEADS

    def __post_init__(self):
        if self.d < 1:
            raise ConfigError(f"Dimension de canal invalide : {self.d}")
        if self.shift.channels != self.d:
            raise ConfigError(f"ShiftSpec prévu pour {self.shift.channels} canaux, bloc de dimension {self.d}")
        if self.se_reduction < 1 or self.d % self.se_reduction != 0:
            raise ConfigError(f"d={self.d} n'est pas divisible par se_reduction={self.se_reduction}")
        if self.dwconv_kernel != Config.DWCONV_KERNEL:
            raise ConfigError(f"Noyau DWConv {self.dwconv_kernel} != {Config.DWCONV_KERNEL}")
        if self.mlp_expansion < 1:
            raise ConfigError(f"Expansion MLP invalide : {self.mlp_expansion}")
        if not 0.0 <= self.drop_path_rate < 1.0:
            raise ConfigError(f"drop_path_rate doit être dans [0, 1) : {self.drop_path_rate}")
        if self.only_shift and (self.use_scale or self.use_bias or self.extra_mlp_shift or self.use_mhsa):
            raise ConfigError("only_shift exclut tous les autres drapeaux")
        if self.use_mhsa:
            if self.use_scale or self.use_bias or self.extra_mlp_shift:
                raise ConfigError("use_mhsa exclut les drapeaux de shift")
            MHSAConfig(self.d, self.heads)

    @property
    def hidden(self):
        return self.mlp_expansion * self.d

    @property
    def se_hidden(self):
        return self.d // self.se_reduction

    @property
    def mhsa(self):
        return MHSAConfig(self.d, self.heads)


# Profondeurs par étage ; canaux et expansions communs aux trois variantes
STAGE_CHANNELS = (64, 128, 320, 512)
STAGE_EXPANSIONS = (8, 8, 4, 4)
STAGE_DEPTHS = {
    ModelVariant.TINY: (3, 4, 8, 3),
    ModelVariant.SMALL: (3, 4, 22, 3),
    ModelVariant.MEDIUM: (3, 8, 33, 3),
}


@dataclass(frozen=True)
class StageSpec:
    """Un étage : C_i canaux, `depth` blocs, expansion E_i, réduction spatiale."""
    channels: int
    depth: int
    expansion: int
    reduction: int


@dataclass(frozen=True)
class ModelSpec:
    """
    Description complète d'un réseau AST/VAST.

    La variante détermine entièrement les étages ; les réglages de shift sont
    dérivés de la famille (image : 1/3 sur {h, w}, vidéo : 1/2 sur {t, h, w})
    sauf surcharge explicite.
    """
    variant: ModelVariant
    family: Family = Family.IMAGE
    stem: StemKind = StemKind.TWO_D
    frames: int = 1
    height: int = 224
    width: int = 224
    num_classes: int = 1000
    in_channels: int = 3
    shift_axes: Optional[Tuple[ShiftAxis, ...]] = None
    shift_fraction: Optional[Fraction] = None
    shift_offset: int = Config.SHIFT_OFFSET
    block_variant: BlockVariant = BlockVariant.R4
    drop_path_rate: float = 0.0
    se_reduction: int = Config.SE_REDUCTION
    micro_channels: int = Config.MICRO_CHANNELS
    micro_depth: int = Config.MICRO_DEPTH
    micro_expansion: int = Config.MICRO_EXPANSION

    def __post_init__(self):
        if not isinstance(self.variant, ModelVariant):
            raise ConfigError(f"Variante invalide : {self.variant!r}")
        if self.frames < 1 or self.height < 1 or self.width < 1:
            raise ConfigError(f"Dimensions d'entrée invalides : T={self.frames} H={self.height} W={self.width}")
        if self.num_classes < 1 or self.in_channels < 1:
            raise ConfigError("num_classes et in_channels doivent être >= 1")
        if self.family is Family.IMAGE and self.stem is StemKind.THREE_D:
            raise ConfigError("Le stem 3D est réservé aux modèles vidéo")
        if self.shift_axes is not None:
            object.__setattr__(self, 'shift_axes', tuple(
                a if isinstance(a, ShiftAxis) else ShiftAxis.parse(a) for a in self.shift_axes))
        if self.shift_fraction is not None:
            object.__setattr__(self, 'shift_fraction', parse_fraction(self.shift_fraction))
        if not 0.0 <= self.drop_path_rate < 1.0:
            raise ConfigError(f"drop_path_rate doit être dans [0, 1) : {self.drop_path_rate}")

    @classmethod
    def from_name(cls, name, **overrides):
        """Build a spec from 'ast-ti', 'vast-s', 'vast-micro'..."""
        try:
            family_name, variant_name = str(name).lower().split('-', 1)
            family = Family(family_name)
            variant = ModelVariant(variant_name)
        except ValueError:
            raise ConfigError(f"Modèle inconnu : {name!r} (attendu ast|vast-ti|s|m|micro)")
        if family is Family.VIDEO:
            overrides.setdefault('frames', 8)
        return cls(variant=variant, family=family, **overrides)

    @property
    def name(self):
        return f"{self.family.value}-{self.variant.value}"

    @property
    def axes(self):
        if self.shift_axes is not None:
            return self.shift_axes
        if self.family is Family.VIDEO:
            return _AXIS_ORDER
        return (ShiftAxis.HEIGHT, ShiftAxis.WIDTH)

    @property
    def fraction(self):
        if self.shift_fraction is not None:
            return self.shift_fraction
        if self.family is Family.VIDEO:
            return Config.SHIFT_FRACTION_VIDEO
        return Config.SHIFT_FRACTION_IMAGE

    @property
    def stages(self):
        if self.variant is ModelVariant.MICRO:
            return (StageSpec(self.micro_channels, self.micro_depth, self.micro_expansion, Config.STEM_STRIDE),)
        depths = STAGE_DEPTHS[self.variant]
        return tuple(
            StageSpec(c, n, e, Config.STEM_STRIDE * 2 ** i)
            for i, (c, n, e) in enumerate(zip(STAGE_CHANNELS, depths, STAGE_EXPANSIONS))
        )

    @property
    def input_multiple(self):
        return Config.STEM_STRIDE if self.variant is ModelVariant.MICRO else Config.INPUT_MULTIPLE

    @property
    def frames_out(self):
        """Temporal extent after the stem (halved by the 3D stem)."""
        if self.stem is StemKind.THREE_D:
            return (self.frames + 2 * Config.STEM_TIME_PADDING - Config.STEM_TIME_KERNEL) // Config.STEM_TIME_STRIDE + 1
        return self.frames

    @property
    def input_shape(self):
        return (self.frames, self.height, self.width, self.in_channels)

    def shift_spec(self, channels):
        return ShiftSpec(self.axes, self.fraction, self.shift_offset, channels)


@dataclass(frozen=True)
class ToyTask:
    """
    Tâche jouet spatio-temporelle.

    temporal-order : classe = ordre des deux motifs (A puis B ou B puis A) ;
    static-pattern : classe = orientation des rayures, lisible sur une seule image.
    """
    kind: TaskKind = TaskKind.TEMPORAL_ORDER
    frames: int = Config.TOY_FRAMES
    height: int = Config.TOY_SIZE
    width: int = Config.TOY_SIZE
    channels: int = 3
    num_classes: int = 2
    samples: int = Config.TOY_SAMPLES
    seed: int = 0
    noise: float = Config.TOY_NOISE

    def __post_init__(self):
        if not isinstance(self.kind, TaskKind):
            object.__setattr__(self, 'kind', TaskKind(self.kind))
        if self.channels != 3:
            raise ConfigError("Les tâches jouets utilisent C=3")
        if self.frames < 1 or self.height < 2 or self.width < 2:
            raise ConfigError(f"Dimensions invalides : T={self.frames} H={self.height} W={self.width}")
        if self.samples < self.num_classes:
            raise ConfigError(f"samples={self.samples} < num_classes={self.num_classes}")
        if self.kind is TaskKind.TEMPORAL_ORDER:
            if self.num_classes != 2:
                raise ConfigError("La tâche temporal-order a exactement 2 classes")
            if self.frames < 2 or self.frames % 2:
                raise ConfigError(f"temporal-order exige un nombre pair de frames >= 2 : {self.frames}")
            if self.samples % 2:
                raise ConfigError(f"temporal-order génère des paires : samples={self.samples} doit être pair")
        elif not 2 <= self.num_classes <= 4:
            raise ConfigError("static-pattern supporte de 2 à 4 orientations")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparamètres AdamW + cosinus avec warmup linéaire."""
    lr: float = Config.TOY_LR
    min_lr: float = Config.MIN_LR
    warmup_steps: int = Config.WARMUP_STEPS
    epochs: int = Config.EPOCHS
    batch_size: int = Config.BATCH_SIZE
    weight_decay: float = Config.WEIGHT_DECAY
    beta1: float = Config.ADAM_BETA1
    beta2: float = Config.ADAM_BETA2
    eps: float = Config.ADAM_EPS
    label_smoothing: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0 or self.min_lr < 0:
            raise ConfigError(f"Taux d'apprentissage négatif : lr={self.lr} min_lr={self.min_lr}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs et batch_size doivent être >= 1")
        if self.warmup_steps < 0:
            raise ConfigError(f"warmup_steps négatif : {self.warmup_steps}")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ConfigError(f"label_smoothing doit être dans [0, 1) : {self.label_smoothing}")

    def total_steps(self, train_samples):
        return self.epochs * -(-train_samples // self.batch_size)

    def validate_for(self, train_samples):
        """Warmup must fit inside the run."""
        total = self.total_steps(train_samples)
        if self.warmup_steps > total:
            raise ConfigError(f"warmup_steps={self.warmup_steps} > total_steps={total}")
        return total


# Recettes d'entraînement par jeu de données (lr de base donné pour un batch de 128)
RECIPES = {
    'kinetics': {'lr': 2e-4, 'drop_path_rate': 0.1, 'stem': StemKind.TWO_D},
    'ssv2': {'lr': 4e-4, 'drop_path_rate': 0.3, 'stem': StemKind.THREE_D},
}
