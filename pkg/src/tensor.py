"""
tensor.py - Noyau tensoriel dense et différentiation automatique (mode inverse)

Ce module fournit :
- Tensor : tableau dense de rang <= 5 (float32 par défaut), contigu, row-major
- Parameter : tenseur apprenable nommé, avec son gradient accumulé
- ParameterTree : dictionnaire ordonné nom -> Parameter (noms uniques)
- Tape : bande ordonnée des opérations enregistrées pendant le forward
- backward : passe arrière unique qui remplit les gradients

Une bande est active dans un contexte `with Tape() as tape:` ; hors bande les
opérations sont de simples fonctions numpy (mode évaluation). La bande active
et la précision sont locales au thread.
"""

import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from src.config import Config
from src.errors import DimensionError, UsageError

MAX_RANK = 5

_state = threading.local()


def default_dtype():
    return getattr(_state, 'dtype', np.float32)


@contextmanager
def precision(dtype):
    """Temporarily switch the dtype used for new tensors (float64 for gradient checks)."""
    previous = default_dtype()
    _state.dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        _state.dtype = previous


def current_tape():
    stack = getattr(_state, 'tapes', None)
    return stack[-1] if stack else None


def _check_shape(shape):
    if len(shape) > MAX_RANK:
        raise DimensionError(f"Rang {len(shape)} > {MAX_RANK} : forme {tuple(shape)}")
    if any(n < 1 for n in shape):
        raise DimensionError(f"Toutes les étendues doivent être >= 1 : forme {tuple(shape)}")


class Tensor:
    """
    Tableau dense avec métadonnées de forme.

    Attributs :
        data : np.ndarray contigu du dtype courant
        requires_grad : feuille différentiable (hors Parameter)
        grad : gradient accumulé pour une feuille, sinon None
    """
    __slots__ = ('data', 'requires_grad', 'grad', '_tape', '_node')

    def __init__(self, data, requires_grad=False):
        arr = np.ascontiguousarray(np.asarray(data, dtype=default_dtype()))
        _check_shape(arr.shape)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self._tape = None
        self._node = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype})"

    def accumulate(self, g):
        self.grad = g.copy() if self.grad is None else self.grad + g

    def zero_grad(self):
        self.grad = None

    # --- opérations élémentaires enregistrées sur la bande ---

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(other))

    def __rsub__(self, other):
        return add(other, neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)


class Parameter:
    """
    Paramètre apprenable nommé.

    Attributs :
        name : chemin unique dans le modèle (ex : "stage2.block3.w_v")
        tensor : valeur courante
        grad : Tensor de même forme, accumulé jusqu'à remise à zéro explicite
    """
    __slots__ = ('name', 'tensor', 'grad')

    def __init__(self, name, data):
        self.name = name
        self.tensor = Tensor(data)
        self.grad = Tensor(np.zeros_like(self.tensor.data))

    @property
    def data(self):
        return self.tensor.data

    @data.setter
    def data(self, value):
        value = np.asarray(value, dtype=self.tensor.dtype)
        if value.shape != self.shape:
            raise DimensionError(f"{self.name} : forme {value.shape} != {self.shape}")
        self.tensor.data = np.ascontiguousarray(value)

    @property
    def shape(self):
        return self.tensor.shape

    @property
    def size(self):
        return self.tensor.size

    def accumulate(self, g):
        if g.shape != self.shape:
            raise DimensionError(f"Gradient de {self.name} : forme {g.shape} != {self.shape}")
        self.grad.data += g

    def zero_grad(self):
        self.grad.data[...] = 0

    def cast(self, dtype):
        """Re-type value and gradient in place (used by the float64 gradient checks)."""
        self.tensor.data = self.tensor.data.astype(dtype)
        self.grad.data = self.grad.data.astype(dtype)

    def __repr__(self):
        return f"Parameter(name='{self.name}', shape={self.shape})"


def trunc_normal(rng, shape, std=Config.INIT_STD, bound=2.0):
    """Normal(0, std) resampled until every draw lies within ±bound·std."""
    values = rng.standard_normal(shape)
    outside = np.abs(values) > bound
    while outside.any():
        values[outside] = rng.standard_normal(int(outside.sum()))
        outside = np.abs(values) > bound
    return (values * std).astype(np.float32)


def init_array(rng, shape, kind):
    if kind == 'normal':
        return trunc_normal(rng, shape)
    if kind == 'ones':
        return np.ones(shape, dtype=np.float32)
    if kind == 'zeros':
        return np.zeros(shape, dtype=np.float32)
    raise ValueError(f"Initialisation inconnue : {kind}")


class ParameterTree(dict):
    """Dictionnaire ordonné nom -> Parameter ; les noms sont uniques."""

    def add(self, name, data):
        if name in self:
            raise UsageError(f"Nom de paramètre dupliqué : {name}")
        param = Parameter(name, data)
        self[name] = param
        return param

    def scope(self, prefix):
        return ScopedParameters(self, prefix)

    def count(self):
        return sum(p.size for p in self.values())

    def zero_grad(self):
        for p in self.values():
            p.zero_grad()

    def cast(self, dtype):
        for p in self.values():
            p.cast(dtype)

    def state(self):
        return {name: p.data for name, p in self.items()}

    def load_state(self, arrays):
        missing = set(self) - set(arrays)
        unexpected = set(arrays) - set(self)
        if missing or unexpected:
            raise UsageError(f"Arbre incompatible : manquants={sorted(missing)} inattendus={sorted(unexpected)}")
        for name, arr in arrays.items():
            self[name].data = arr


class ScopedParameters:
    """Vue d'un ParameterTree sous un préfixe : params['w_v'] -> tree['stage1.block0.w_v']."""

    def __init__(self, tree, prefix):
        self._tree = tree
        self._prefix = prefix

    def _key(self, name):
        return f"{self._prefix}.{name}" if self._prefix else name

    def __getitem__(self, name):
        return self._tree[self._key(name)]

    def __contains__(self, name):
        return self._key(name) in self._tree

    def get(self, name, default=None):
        return self._tree.get(self._key(name), default)

    def scope(self, prefix):
        return ScopedParameters(self._tree, self._key(prefix))


@dataclass
class Node:
    """
    Noeud de la bande.

    op : identifiant de l'opération
    parents : indices des noeuds parents (None pour une entrée constante)
    vjp : produit vecteur-jacobienne, renvoie un gradient par entrée
    sink : Parameter ou Tensor feuille recevant le gradient
    """
    op: str
    parents: Tuple[Optional[int], ...]
    vjp: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]]
    sink: object = None


class Tape:
    """
    Bande d'enregistrement des opérations (ordre topologique par construction).
    """

    def __init__(self):
        self.nodes = []
        self._leaves = {}

    def __enter__(self):
        stack = getattr(_state, 'tapes', None)
        if stack is None:
            stack = _state.tapes = []
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _state.tapes.pop()
        return False

    def __len__(self):
        return len(self.nodes)

    def track(self, value):
        """Return the node index carrying `value`, registering leaves on first use."""
        if isinstance(value, Parameter):
            index = self._leaves.get(id(value))
            if index is None:
                index = self._append(Node('param', (), None, sink=value))
                self._leaves[id(value)] = index
            return index
        if isinstance(value, Tensor):
            if value._tape is self:
                return value._node
            if value.requires_grad:
                index = self._leaves.get(id(value))
                if index is None:
                    index = self._append(Node('leaf', (), None, sink=value))
                    self._leaves[id(value)] = index
                return index
        return None

    def _append(self, node):
        self.nodes.append(node)
        return len(self.nodes) - 1


def as_array(value):
    if isinstance(value, Parameter):
        return value.data
    if isinstance(value, Tensor):
        return value.data
    return np.asarray(value, dtype=default_dtype())


def as_tensor(value):
    if isinstance(value, Tensor):
        return value
    if isinstance(value, Parameter):
        return value.tensor
    return Tensor(value)


def record(op, inputs, out, vjp):
    """
    Wrap `out` in a Tensor and register it on the active tape.

    `vjp(g)` must return one gradient (or None) per entry of `inputs`.
    """
    result = Tensor.__new__(Tensor)
    result.data = np.ascontiguousarray(out)
    result.requires_grad = False
    result.grad = None
    result._tape = None
    result._node = None
    _check_shape(result.data.shape)
    tape = current_tape()
    if tape is None:
        return result
    parents = tuple(tape.track(v) for v in inputs)
    if all(p is None for p in parents):
        return result
    result._tape = tape
    result._node = tape._append(Node(op, parents, vjp))
    return result


def backward(tape, loss):
    """
    Passe arrière : propage dLoss/dx du noeud de perte vers toutes les feuilles.

    Les gradients s'accumulent dans Parameter.grad (et Tensor.grad des feuilles)
    jusqu'à remise à zéro explicite ; deux appels successifs doublent donc les
    gradients.
    """
    if not isinstance(loss, Tensor) or loss.size != 1:
        shape = getattr(loss, 'shape', None)
        raise UsageError(f"La perte doit être un scalaire, reçu forme {shape}")
    if loss._tape is not tape or loss._node is None:
        raise UsageError("La perte n'a pas été produite par des opérations de cette bande")
    grads = [None] * len(tape.nodes)
    grads[loss._node] = np.ones_like(loss.data)
    for index in range(loss._node, -1, -1):
        g = grads[index]
        if g is None:
            continue
        grads[index] = None
        node = tape.nodes[index]
        if node.sink is not None:
            node.sink.accumulate(g)
        if node.vjp is None:
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if parent is None or pg is None:
                continue
            grads[parent] = pg if grads[parent] is None else grads[parent] + pg


# --- opérations élémentaires ---

def unbroadcast(g, shape):
    """Sum `g` over broadcast axes so that it matches `shape`."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b):
    xa, xb = as_array(a), as_array(b)
    out = xa + xb

    def vjp(g):
        return unbroadcast(g, xa.shape), unbroadcast(g, xb.shape)

    return record('add', (a, b), out, vjp)


def mul(a, b):
    xa, xb = as_array(a), as_array(b)
    out = xa * xb

    def vjp(g):
        return unbroadcast(g * xb, xa.shape), unbroadcast(g * xa, xb.shape)

    return record('mul', (a, b), out, vjp)


def neg(a):
    return record('neg', (a,), -as_array(a), lambda g: (-g,))


def reshape(x, shape):
    """Metadata-only reshape; the payload is shared, never copied."""
    data = as_array(x)
    try:
        out = data.reshape(shape)
    except ValueError:
        raise DimensionError(f"Reshape impossible : {data.shape} -> {tuple(shape)}")
    original = data.shape
    return record('reshape', (x,), out, lambda g: (g.reshape(original),))


def to_sequence(x):
    """[N, T, H, W, C] -> [N, S, d] avec S = T·H·W et d = C."""
    shape = as_array(x).shape
    if len(shape) != 5:
        raise DimensionError(f"Disposition vidéo [N,T,H,W,C] attendue, reçu {shape}")
    n, t, h, w, c = shape
    return reshape(x, (n, t * h * w, c))


def to_video(x, frames, height, width):
    """[N, S, d] -> [N, T, H, W, C]."""
    shape = as_array(x).shape
    if len(shape) != 3 or shape[1] != frames * height * width:
        raise DimensionError(f"Séquence {shape} incompatible avec la grille ({frames}, {height}, {width})")
    return reshape(x, (shape[0], frames, height, width, shape[2]))


def sum_all(x):
    """Somme de tous les éléments (scalaire)."""
    data = as_array(x)
    shape = data.shape
    return record('sum', (x,), np.asarray(data.sum(), dtype=data.dtype),
                  lambda g: (np.broadcast_to(g, shape).copy(),))
