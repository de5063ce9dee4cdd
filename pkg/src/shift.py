"""
shift.py - Opérateur Shift(X, p, b) et son adjoint

Le tenseur [N, T, H, W, C] est découpé en groupes de canaux contigus ; chaque
groupe est translaté d'un décalage signé le long d'un axe (temps, hauteur ou
largeur), les positions libérées sont remplies de zéros et les canaux restants
sont recopiés tels quels.

Règle de partition (déterministe) :
- taille d'un groupe g = floor(C · p / (2 · nb_axes))
- ordre des groupes : axes (temps, hauteur, largeur), puis signe (+ puis -)
- les canaux non décalés occupent la fin
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.errors import DimensionError
from src.specs import ShiftAxis
from src.tensor import as_array, record


@dataclass(frozen=True)
class ChannelGroup:
    """Canaux [start, stop) translatés de `offset` positions le long de `axis`."""
    start: int
    stop: int
    axis: ShiftAxis
    offset: int

    @property
    def size(self):
        return self.stop - self.start


@dataclass(frozen=True)
class ChannelPartition:
    """Groupes décalés (dans l'ordre) et plage finale des canaux non décalés."""
    groups: Tuple[ChannelGroup, ...]
    unshifted: Tuple[int, int]

    def __iter__(self):
        return iter(self.groups)

    def __len__(self):
        return len(self.groups)

    @property
    def shifted_channels(self):
        return sum(g.size for g in self.groups)

    def channels_on(self, axis):
        """Indices of the channels moved along `axis`."""
        return [c for g in self.groups if g.axis is axis for c in range(g.start, g.stop)]


def partition_channels(spec):
    """
    Découpe les C canaux de `spec` en groupes (plage, axe, décalage signé).

    Exemple : C=12, axes {h, w}, p=1/3 -> +h, -h, +w, -w d'un canal chacun,
    8 canaux non décalés.
    """
    c = spec.channels
    groups = []
    if spec.total_fraction > 0:
        size = int(c * spec.total_fraction / (2 * len(spec.axes)))
        if size > 0:
            start = 0
            for axis in spec.axes:
                for sign in (1, -1):
                    groups.append(ChannelGroup(start, start + size, axis, sign * spec.offset_magnitude))
                    start += size
    tail = groups[-1].stop if groups else 0
    return ChannelPartition(tuple(groups), (tail, c))


def _translate(src, dst, axis, offset):
    """dst[..., i, ...] = src[..., i - offset, ...] along `axis`, zero elsewhere."""
    extent = src.shape[axis]
    if abs(offset) >= extent:
        return
    lead = (slice(None),) * axis
    if offset > 0:
        dst[lead + (slice(offset, None),)] = src[lead + (slice(None, extent - offset),)]
    else:
        dst[lead + (slice(None, extent + offset),)] = src[lead + (slice(-offset, None),)]


def _apply(data, partition, sign):
    out = np.zeros_like(data)
    lo, hi = partition.unshifted
    out[..., lo:hi] = data[..., lo:hi]
    for group in partition:
        channels = slice(group.start, group.stop)
        block = np.zeros_like(data[..., channels])
        _translate(data[..., channels], block, group.axis.value, sign * group.offset)
        out[..., channels] = block
    return out


def _check(name, data, spec):
    if data.ndim != 5:
        raise DimensionError(f"{name} : disposition [N,T,H,W,C] attendue, reçu forme {data.shape}")
    if data.shape[-1] != spec.channels:
        raise DimensionError(f"{name} : {data.shape[-1]} canaux, ShiftSpec prévu pour {spec.channels}")


def shift(x, spec):
    """Translate chaque groupe de canaux de son décalage ; remplissage par zéros."""
    data = as_array(x)
    _check('shift', data, spec)
    partition = partition_channels(spec)
    if not partition.groups:
        return record('shift', (x,), data.copy(), lambda g: (g,))
    out = _apply(data, partition, 1)
    return record('shift', (x,), out, lambda g: (_apply(g, partition, -1),))


def shift_vjp(grad_out, spec):
    """Adjoint du shift : mêmes groupes, décalages opposés."""
    data = as_array(grad_out)
    _check('shift_vjp', data, spec)
    partition = partition_channels(spec)
    out = _apply(data, partition, -1)
    return record('shift_vjp', (grad_out,), out, lambda g: (_apply(g, partition, 1),))
