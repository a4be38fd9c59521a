"""🔢 Точная арифметика над F_p: скаляры, многочлены, матрицы.

Матрицы хранятся как неизменяемые numpy-массивы int64 с элементами в [0, p).
Все вычисления точные, все элементарные операции приводятся по модулю p.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from popdiff.errors import BothZero, DimensionMismatch, InvalidModulus, Singular


@lru_cache(maxsize=None)
def is_prime(n):
    """Проверка простоты делением (модули здесь маленькие)."""
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    d = 3
    while d * d <= n:
        if n % d == 0:
            return False
        d += 2
    return True


def check_modulus(p):
    """⛔ Разрешены только нечётные простые."""
    if not isinstance(p, (int, np.integer)) or p == 2 or not is_prime(int(p)):
        raise InvalidModulus(f"модуль должен быть нечётным простым, получено {p}")
    return int(p)


def mod_p(a, p):
    return np.asarray(a, dtype=np.int64) % p


# ---------------------------------------------------------------------------
# Линейная алгебра на сырых массивах
# ---------------------------------------------------------------------------

def rref(a, p):
    """Приведённая ступенчатая форма над F_p. Возвращает (R, pivots)."""
    R = mod_p(a, p).copy()
    if R.ndim != 2:
        raise DimensionMismatch(f"ожидалась матрица, получена форма {R.shape}")
    rows, cols = R.shape
    pivots = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        nz = np.nonzero(R[r:, c])[0]
        if nz.size == 0:
            continue
        piv = r + int(nz[0])
        if piv != r:
            R[[r, piv]] = R[[piv, r]]
        inv = pow(int(R[r, c]), -1, p)
        R[r] = (R[r] * inv) % p
        column = R[:, c].copy()
        column[r] = 0
        hit = np.nonzero(column)[0]
        if hit.size:
            R[hit] = (R[hit] - np.outer(column[hit], R[r])) % p
        pivots.append(c)
        r += 1
    return R, pivots


def rank_mod(a, p):
    a = np.asarray(a)
    if a.size == 0:
        return 0
    return len(rref(a, p)[1])


def row_basis(a, p):
    """Независимые строки, порождающие то же пространство (в форме RREF)."""
    a = np.asarray(a, dtype=np.int64)
    if a.size == 0:
        width = a.shape[1] if a.ndim == 2 else 0
        return np.zeros((0, width), dtype=np.int64)
    R, pivots = rref(a, p)
    return R[: len(pivots)].copy()


def nullspace(a, p):
    """Базис (по строкам) правого ядра {x : a x = 0}."""
    a = mod_p(a, p)
    cols = a.shape[1]
    if a.shape[0] == 0:
        return np.eye(cols, dtype=np.int64)
    R, pivots = rref(a, p)
    free = [j for j in range(cols) if j not in set(pivots)]
    basis = np.zeros((len(free), cols), dtype=np.int64)
    for t, f in enumerate(free):
        basis[t, f] = 1
        for i, pc in enumerate(pivots):
            basis[t, pc] = (-R[i, f]) % p
    return basis


def solve(a, b, p):
    """Одно решение a x = b (свободные переменные = 0) или None."""
    a = mod_p(a, p)
    b = mod_p(b, p).reshape(-1, 1)
    cols = a.shape[1]
    R, pivots = rref(np.concatenate([a, b], axis=1), p)
    if cols in pivots:
        return None
    x = np.zeros(cols, dtype=np.int64)
    for i, pc in enumerate(pivots):
        x[pc] = R[i, -1]
    return x


def inv_mod(a, p):
    a = mod_p(a, p)
    k = a.shape[0]
    if a.shape != (k, k):
        raise DimensionMismatch(f"обращение неквадратной матрицы {a.shape}")
    R, pivots = rref(np.concatenate([a, np.eye(k, dtype=np.int64)], axis=1), p)
    if pivots[:k] != list(range(k)):
        raise Singular("матрица вырождена над F_p")
    return R[:, k:].copy()


def det_mod(a, p):
    M = mod_p(a, p).copy()
    k = M.shape[0]
    det = 1
    for c in range(k):
        nz = np.nonzero(M[c:, c])[0]
        if nz.size == 0:
            return 0
        piv = c + int(nz[0])
        if piv != c:
            M[[c, piv]] = M[[piv, c]]
            det = -det
        det = (det * int(M[c, c])) % p
        inv = pow(int(M[c, c]), -1, p)
        below = M[c + 1:, c].copy()
        if below.size:
            M[c + 1:] = (M[c + 1:] - np.outer(below * inv % p, M[c])) % p
    return det % p


# ---------------------------------------------------------------------------
# Скаляры
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FpScalar:
    value: int
    p: int

    def __post_init__(self):
        object.__setattr__(self, "p", check_modulus(self.p))
        object.__setattr__(self, "value", int(self.value) % self.p)

    def _coerce(self, other):
        if isinstance(other, FpScalar):
            if other.p != self.p:
                raise DimensionMismatch(f"разные модули: {self.p} и {other.p}")
            return other.value
        return int(other)

    def __add__(self, other):
        return FpScalar(self.value + self._coerce(other), self.p)

    def __sub__(self, other):
        return FpScalar(self.value - self._coerce(other), self.p)

    def __mul__(self, other):
        return FpScalar(self.value * self._coerce(other), self.p)

    __radd__ = __add__
    __rmul__ = __mul__

    def __neg__(self):
        return FpScalar(-self.value, self.p)

    def inverse(self):
        if self.value == 0:
            raise Singular("обращение нуля в F_p")
        return FpScalar(pow(self.value, -1, self.p), self.p)

    def __truediv__(self, other):
        return self * FpScalar(self._coerce(other), self.p).inverse()

    def __int__(self):
        return self.value


# ---------------------------------------------------------------------------
# Многочлены
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FpPoly:
    """Коэффициенты от младшего к старшему; старший ненулевой (или пустой кортеж)."""

    coeffs: tuple
    p: int

    def __post_init__(self):
        object.__setattr__(self, "p", check_modulus(self.p))
        c = [int(x) % self.p for x in self.coeffs]
        while c and c[-1] == 0:
            c.pop()
        object.__setattr__(self, "coeffs", tuple(c))

    @classmethod
    def monomial(cls, degree, p, coeff=1):
        return cls((0,) * degree + (coeff,), p)

    @property
    def coefficients(self):
        return tuple(FpScalar(c, self.p) for c in self.coeffs)

    @property
    def degree(self):
        return len(self.coeffs) - 1

    def is_zero(self):
        return not self.coeffs

    def is_one(self):
        return self.coeffs == (1,)

    def monic(self):
        if self.is_zero():
            return self
        inv = pow(self.coeffs[-1], -1, self.p)
        return FpPoly(tuple(c * inv for c in self.coeffs), self.p)

    def _check(self, other):
        if self.p != other.p:
            raise DimensionMismatch(f"разные модули: {self.p} и {other.p}")

    def __add__(self, other):
        self._check(other)
        n = max(len(self.coeffs), len(other.coeffs))
        a = self.coeffs + (0,) * (n - len(self.coeffs))
        b = other.coeffs + (0,) * (n - len(other.coeffs))
        return FpPoly(tuple(x + y for x, y in zip(a, b)), self.p)

    def __neg__(self):
        return FpPoly(tuple(-c for c in self.coeffs), self.p)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, int):
            return FpPoly(tuple(c * other for c in self.coeffs), self.p)
        self._check(other)
        if self.is_zero() or other.is_zero():
            return FpPoly((), self.p)
        out = [0] * (len(self.coeffs) + len(other.coeffs) - 1)
        for i, a in enumerate(self.coeffs):
            for j, b in enumerate(other.coeffs):
                out[i + j] += a * b
        return FpPoly(tuple(out), self.p)

    def divmod(self, other):
        self._check(other)
        if other.is_zero():
            raise Singular("деление на нулевой многочлен")
        rem = list(self.coeffs)
        inv = pow(other.coeffs[-1], -1, self.p)
        shift = len(rem) - len(other.coeffs)
        quot = [0] * max(shift + 1, 0)
        while shift >= 0 and rem:
            factor = (rem[-1] * inv) % self.p
            quot[shift] = factor
            for j, c in enumerate(other.coeffs):
                rem[shift + j] = (rem[shift + j] - factor * c) % self.p
            while rem and rem[-1] == 0:
                rem.pop()
            shift = len(rem) - len(other.coeffs)
        return FpPoly(tuple(quot), self.p), FpPoly(tuple(rem), self.p)

    def __mod__(self, other):
        return self.divmod(other)[1]

    def __call__(self, x):
        acc = 0
        for c in reversed(self.coeffs):
            acc = (acc * int(x) + c) % self.p
        return acc

    def eval_matrix(self, A):
        """Q(A) схемой Горнера."""
        k = A.rows
        acc = FpMatrix.zeros(k, k, self.p)
        eye = FpMatrix.identity(k, self.p)
        for c in reversed(self.coeffs):
            acc = acc @ A + eye * c
        return acc

    def __str__(self):
        if self.is_zero():
            return "0"
        terms = []
        for i in range(self.degree, -1, -1):
            c = self.coeffs[i]
            if c:
                terms.append(f"{c}" + ("" if i == 0 else ("t" if i == 1 else f"t^{i}")))
        return " + ".join(terms)


def poly_gcd(f, g):
    """Монический НОД; (0, 0) → BothZero."""
    if f.is_zero() and g.is_zero():
        raise BothZero("НОД двух нулевых многочленов не определён")
    a, b = f, g
    while not b.is_zero():
        a, b = b, a % b
    return a.monic()


def negate_argument(f):
    """f(t) ↦ f(−t)."""
    return FpPoly(tuple(c if i % 2 == 0 else -c for i, c in enumerate(f.coeffs)), f.p)


# ---------------------------------------------------------------------------
# Матрицы
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FpMatrix:
    data: np.ndarray
    p: int

    def __post_init__(self):
        object.__setattr__(self, "p", check_modulus(self.p))
        arr = np.array(self.data, dtype=np.int64)
        if arr.ndim != 2:
            raise DimensionMismatch(f"матрица должна быть двумерной, форма {arr.shape}")
        arr %= self.p
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_rows(cls, rows, p):
        return cls(np.array(rows, dtype=np.int64).reshape(len(rows), -1), p)

    @classmethod
    def identity(cls, k, p):
        return cls(np.eye(k, dtype=np.int64), p)

    @classmethod
    def zeros(cls, r, c, p):
        return cls(np.zeros((r, c), dtype=np.int64), p)

    @classmethod
    def scalar(cls, value, k, p):
        return cls(np.eye(k, dtype=np.int64) * value, p)

    @property
    def rows(self):
        return self.data.shape[0]

    @property
    def cols(self):
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    @property
    def entries(self):
        return tuple(FpScalar(int(v), self.p) for v in self.data.reshape(-1))

    def is_square(self):
        return self.rows == self.cols

    def __getitem__(self, idx):
        return int(self.data[idx])

    def __eq__(self, other):
        if not isinstance(other, FpMatrix):
            return NotImplemented
        return self.p == other.p and self.shape == other.shape and np.array_equal(self.data, other.data)

    def __hash__(self):
        return hash((self.p, self.shape, self.data.tobytes()))

    def _same(self, other):
        if self.p != other.p:
            raise DimensionMismatch(f"разные модули: {self.p} и {other.p}")
        if self.shape != other.shape:
            raise DimensionMismatch(f"формы {self.shape} и {other.shape} не совпадают")

    def __add__(self, other):
        self._same(other)
        return FpMatrix(self.data + other.data, self.p)

    def __sub__(self, other):
        self._same(other)
        return FpMatrix(self.data - other.data, self.p)

    def __neg__(self):
        return FpMatrix(-self.data, self.p)

    def __mul__(self, c):
        return FpMatrix(self.data * (int(c) % self.p), self.p)

    __rmul__ = __mul__

    def __matmul__(self, other):
        if self.p != other.p:
            raise DimensionMismatch(f"разные модули: {self.p} и {other.p}")
        if self.cols != other.rows:
            raise DimensionMismatch(f"нельзя умножить {self.shape} на {other.shape}")
        return FpMatrix(self.data @ other.data, self.p)

    @property
    def T(self):
        return FpMatrix(self.data.T, self.p)

    def trace(self):
        return int(np.trace(self.data)) % self.p

    def is_symmetric(self):
        return self.is_square() and np.array_equal(self.data, self.data.T)

    def is_skew(self):
        return self.is_square() and np.array_equal(self.data, (-self.data.T) % self.p)

    def power(self, e):
        result = FpMatrix.identity(self.rows, self.p)
        base = self
        while e:
            if e & 1:
                result = result @ base
            base = base @ base
            e >>= 1
        return result

    def inverse(self):
        return mat_inverse(self)

    def rank(self):
        return mat_rank(self)

    def det(self):
        return mat_det(self)

    def is_invertible(self):
        return self.is_square() and mat_det(self) != 0

    def flat(self):
        return self.data.reshape(-1)

    def to_list(self):
        return self.data.tolist()

    def __repr__(self):
        return f"FpMatrix({self.to_list()}, p={self.p})"


def mat_inverse(A):
    return FpMatrix(inv_mod(A.data, A.p), A.p)


def mat_rank(A):
    return rank_mod(A.data, A.p)


def mat_det(A):
    if not A.is_square():
        raise DimensionMismatch(f"определитель неквадратной матрицы {A.shape}")
    return det_mod(A.data, A.p)


def min_poly(A):
    """📐 Минимальный многочлен через крыловские степени vec(A^i)."""
    if not A.is_square():
        raise DimensionMismatch(f"минимальный многочлен неквадратной матрицы {A.shape}")
    p = A.p
    powers = [FpMatrix.identity(A.rows, p).flat()]
    current = FpMatrix.identity(A.rows, p)
    for d in range(1, A.rows + 1):
        current = current @ A
        krylov = np.stack(powers, axis=1)
        sol = solve(krylov, -current.flat(), p)
        if sol is not None:
            return FpPoly(tuple(int(c) for c in sol) + (1,), p)
        powers.append(current.flat())
    raise Singular("минимальный многочлен не найден (нарушена теорема Гамильтона–Кэли)")


def char_poly(A):
    """Характеристический многочлен det(tI − A) без делений (алгоритм Берковица)."""
    if not A.is_square():
        raise DimensionMismatch(f"характеристический многочлен неквадратной матрицы {A.shape}")
    a, p = A.data, A.p
    C = [1]  # коэффициенты от старшего к младшему
    for r in range(A.rows):
        Ar, R, S = a[:r, :r], a[r, :r], a[:r, r]
        column = [1, int(-a[r, r]) % p]
        v = S.copy()
        for _ in range(r):
            column.append(int(-(R @ v)) % p)
            v = (Ar @ v) % p
        C = [sum(column[i - j] * C[j] for j in range(r + 1) if i - j >= 0) % p for i in range(r + 2)]
    return FpPoly(tuple(reversed(C)), p)


def random_matrix(rng, rows, cols, p):
    return FpMatrix(rng.integers(0, p, size=(rows, cols)), p)


def random_invertible(rng, k, p):
    """Случайная обратимая матрица (выборка с отклонением)."""
    while True:
        M = random_matrix(rng, k, k, p)
        if mat_det(M) != 0:
            return M


def random_symmetric(rng, n, p):
    upper = np.triu(rng.integers(0, p, size=(n, n)))
    return FpMatrix(upper + np.triu(upper, 1).T, p)


def random_skew(rng, n, p):
    upper = np.triu(rng.integers(0, p, size=(n, n)), 1)
    return FpMatrix(upper - upper.T, p)


def all_vectors(m, p):
    """Все векторы F_p^m: строка i: цифры i в системе счисления p, младшая первой."""
    count = p**m
    idx = np.arange(count, dtype=np.int64)
    out = np.empty((count, m), dtype=np.int64)
    for j in range(m):
        out[:, j] = idx % p
        idx //= p
    return out


def encode_vectors(vectors, p):
    """Обратное к all_vectors: строки цифр → индексы."""
    vectors = np.asarray(vectors, dtype=np.int64)
    weights = p ** np.arange(vectors.shape[-1], dtype=np.int64)
    return (vectors % p) @ weights
