"""💾 Бинарный формат PLGF для функций на сетке.

Заголовок: b"PLGF", байт версии (1), p, k, n как <I, байт типа (0: точные дроби,
1: float64, 2: complex128). Дальше p^{kn} значений: пары int64 (числитель,
знаменатель), float64 или пары float64 (Re, Im), little-endian.
"""

import logging
import struct
from fractions import Fraction

import numpy as np

from popdiff.core.gridfn import COMPLEX, EXACT, FLOAT, GridFunction
from popdiff.errors import BadMagic, CorruptLength, UsageError, VersionMismatch

MAGIC = b"PLGF"
VERSION = 1
_HEADER = struct.Struct("<4sBIIIB")
_KIND_CODES = {EXACT: 0, FLOAT: 1, COMPLEX: 2}
_KINDS = {code: kind for kind, code in _KIND_CODES.items()}


def encode_function(f):
    header = _HEADER.pack(MAGIC, VERSION, f.p, f.k, f.n, _KIND_CODES[f.value_kind])
    if f.value_kind == EXACT:
        pairs = [(v.numerator, v.denominator) for v in f.values]
        if any(abs(a) >= 2**63 or b >= 2**63 for a, b in pairs):
            raise UsageError("числитель или знаменатель не помещается в int64")
        body = np.array(pairs, dtype="<i8").reshape(-1).tobytes()
    elif f.value_kind == FLOAT:
        body = np.asarray(f.values, dtype="<f8").tobytes()
    else:
        body = np.asarray(f.values, dtype="<c16").tobytes()
    return header + body


def decode_function(data):
    if len(data) < _HEADER.size:
        raise CorruptLength(f"файл короче заголовка: {len(data)} байт")
    magic, version, p, k, n, code = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagic(f"ожидалось {MAGIC!r}, получено {magic!r}")
    if version != VERSION:
        raise VersionMismatch(f"версия формата {version}, поддерживается {VERSION}")
    if code not in _KINDS:
        raise CorruptLength(f"неизвестный тип значений {code}")
    kind = _KINDS[code]
    size = p ** (k * n)
    width = 16 if kind in (EXACT, COMPLEX) else 8
    body = data[_HEADER.size:]
    if len(body) != size * width:
        raise CorruptLength(f"ожидалось {size * width} байт значений, получено {len(body)}")

    if kind == EXACT:
        raw = np.frombuffer(body, dtype="<i8").reshape(size, 2)
        values = np.empty(size, dtype=object)
        values[:] = [Fraction(int(a), int(b)) for a, b in raw.tolist()]
    elif kind == FLOAT:
        values = np.frombuffer(body, dtype="<f8").copy()
    else:
        values = np.frombuffer(body, dtype="<c16").copy()
    return GridFunction(p, k, n, values, kind)


def fn_write(path, f):
    data = encode_function(f)
    with open(path, "wb") as file:
        file.write(data)
    logging.info(f"💾 Записана функция (F_{f.p}^{f.n})^{f.k} в {path}: {len(data)} байт")
    return len(data)


def fn_read(path):
    with open(path, "rb") as file:
        return decode_function(file.read())
