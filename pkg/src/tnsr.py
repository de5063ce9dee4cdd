"""
tnsr.py - Conteneur binaire TNSR (tenseurs, arbres de paramètres, jeux de données)

Enregistrement d'un tenseur (tout en little-endian) :

    "TNSR"          4 octets
    version         u16 (= 1)
    dtype           u8  (0 = f32)
    rank            u8
    extents         rank x u32
    payload         prod(extents) x f32, row-major

Un fichier d'arbre est une suite d'enregistrements, chacun précédé de la
longueur (u32) puis des octets UTF-8 de son nom. La relecture est exacte bit
à bit, motifs NaN compris.
"""

import logging
import math

import numpy as np

from src.errors import FormatError
from src.tensor import MAX_RANK

logger = logging.getLogger(__name__)

MAGIC = b"TNSR"
VERSION = 1
DTYPE_F32 = 0
HEADER_SIZE = 8


def encode_tensor(array):
    """Bytes of one TNSR record for `array` (converted to f32)."""
    array = np.asarray(array)
    if array.ndim > MAX_RANK:
        raise FormatError(f"Rang {array.ndim} > {MAX_RANK} non supporté")
    if array.dtype != np.float32:
        array = array.astype(np.float32)
    parts = [
        MAGIC,
        np.array([VERSION], dtype='<u2').tobytes(),
        np.array([DTYPE_F32, array.ndim], dtype='u1').tobytes(),
        np.array(array.shape, dtype='<u4').tobytes(),
        np.ascontiguousarray(array).astype('<f4', copy=False).tobytes(),
    ]
    return b"".join(parts)


def decode_tensor(buf, offset=0):
    """
    Décode un enregistrement à partir de `offset`.

    Returns:
        tuple: (np.ndarray float32, offset suivant)
    """
    if len(buf) - offset < HEADER_SIZE:
        raise FormatError("En-tête TNSR tronqué", offset=offset)
    if bytes(buf[offset:offset + 4]) != MAGIC:
        raise FormatError(f"Magic inconnu {bytes(buf[offset:offset + 4])!r}", offset=offset)
    version = int(np.frombuffer(buf, dtype='<u2', count=1, offset=offset + 4)[0])
    if version != VERSION:
        raise FormatError(f"Version TNSR {version} non supportée", offset=offset + 4)
    dtype, rank = (int(v) for v in np.frombuffer(buf, dtype='u1', count=2, offset=offset + 6))
    if dtype != DTYPE_F32:
        raise FormatError(f"Code dtype {dtype} inconnu", offset=offset + 6)
    if rank > MAX_RANK:
        raise FormatError(f"Rang {rank} > {MAX_RANK}", offset=offset + 7)
    pos = offset + HEADER_SIZE
    if len(buf) - pos < 4 * rank:
        raise FormatError("Étendues tronquées", offset=pos)
    shape = tuple(int(v) for v in np.frombuffer(buf, dtype='<u4', count=rank, offset=pos))
    if any(n < 1 for n in shape):
        raise FormatError(f"Étendue nulle dans {shape}", offset=pos)
    pos += 4 * rank
    count = math.prod(shape)
    if len(buf) - pos < 4 * count:
        raise FormatError(f"Payload tronqué : {4 * count} octets attendus, {len(buf) - pos} disponibles", offset=pos)
    data = np.frombuffer(buf, dtype='<f4', count=count, offset=pos).astype(np.float32).reshape(shape)
    return data, pos + 4 * count


def _read(path):
    with open(path, 'rb') as f:
        return f.read()


def write_tensor(path, array):
    with open(path, 'wb') as f:
        f.write(encode_tensor(array))


def read_tensor(path):
    """Lit un fichier contenant exactement un enregistrement."""
    buf = _read(path)
    array, end = decode_tensor(buf)
    if end != len(buf):
        raise FormatError("Octets en trop après le tenseur", offset=end)
    return array


def encode_tree(arrays):
    parts = []
    for name, array in arrays.items():
        raw = name.encode('utf-8')
        parts.append(np.array([len(raw)], dtype='<u4').tobytes())
        parts.append(raw)
        parts.append(encode_tensor(array))
    return b"".join(parts)


def decode_tree(buf):
    """Décode une suite d'enregistrements nommés (ordre conservé)."""
    arrays = {}
    pos = 0
    while pos < len(buf):
        if len(buf) - pos < 4:
            raise FormatError("Longueur de nom tronquée", offset=pos)
        size = int(np.frombuffer(buf, dtype='<u4', count=1, offset=pos)[0])
        pos += 4
        if len(buf) - pos < size:
            raise FormatError("Nom tronqué", offset=pos)
        try:
            name = bytes(buf[pos:pos + size]).decode('utf-8')
        except UnicodeDecodeError:
            raise FormatError("Nom non UTF-8", offset=pos)
        if name in arrays:
            raise FormatError(f"Nom dupliqué : {name}", offset=pos)
        pos += size
        arrays[name], pos = decode_tensor(buf, pos)
    return arrays


def write_tree(path, arrays):
    with open(path, 'wb') as f:
        f.write(encode_tree(arrays))
    logger.info("Arbre écrit : %s (%d tenseurs)", path, len(arrays))


def read_tree(path):
    return decode_tree(_read(path))


def save_params(path, tree):
    """Point de contrôle d'un ParameterTree."""
    write_tree(path, tree.state())


def load_params(path, tree):
    tree.load_state(read_tree(path))
    return tree


def save_dataset(path, dataset):
    """Les labels sont stockés en f32 (entiers exactement représentables)."""
    write_tree(path, {
        'x_train': dataset.x_train, 'y_train': dataset.y_train,
        'x_val': dataset.x_val, 'y_val': dataset.y_val,
    })


def load_dataset_arrays(path):
    arrays = read_tree(path)
    for key in ('y_train', 'y_val'):
        if key in arrays:
            arrays[key] = arrays[key].astype(np.int64)
    return arrays
