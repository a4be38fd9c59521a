"""🗺️ Функции на G^k = (F_p^n)^k и k-симметризованные квадратичные факторы.

Точка X ∈ G^k: матрица k×n (строки: компоненты). Индекс точки: цифры X
в системе счисления p построчно, цифра (0, 0) младшая.
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np

from popdiff.config import guard
from popdiff.core.ffalg import (
    FpMatrix,
    all_vectors,
    check_modulus,
    encode_vectors,
    mat_rank,
    random_skew,
    random_symmetric,
    rank_mod,
)
from popdiff.core.patterns import GRID_VECTORS, SubspaceBasis
from popdiff.errors import DimensionMismatch, NotSymmetric, UsageError

EXACT = "exact-rational"
FLOAT = "float"
COMPLEX = "complex-float"
VALUE_KINDS = (EXACT, FLOAT, COMPLEX)


class Grid:
    """Перечисление G^k с кодированием точек в индексы."""

    def __init__(self, p, k, n):
        self.p = check_modulus(p)
        self.k = int(k)
        self.n = int(n)
        self.size = guard(self.p ** (self.k * self.n), f"сетка (F_{p}^{n})^{k}")

    @cached_property
    def flat_points(self):
        return all_vectors(self.k * self.n, self.p)

    @property
    def points(self):
        return self.flat_points.reshape(self.size, self.k, self.n)

    def encode(self, X):
        X = np.asarray(X, dtype=np.int64)
        return encode_vectors(X.reshape(X.shape[:-2] + (self.k * self.n,)), self.p)

    def decode(self, index):
        return FpMatrix(self.flat_points[int(index)].reshape(self.k, self.n), self.p)

    def shift(self, D, C=None):
        """Индексы X + C·D для всех X."""
        D = np.asarray(D.data if isinstance(D, FpMatrix) else D, dtype=np.int64)
        if C is not None:
            D = np.asarray(C.data if isinstance(C, FpMatrix) else C) @ D
        return encode_vectors((self.flat_points + D.reshape(-1)) % self.p, self.p)

    def apply(self, A):
        """Индексы A·X для всех X."""
        A = np.asarray(A.data if isinstance(A, FpMatrix) else A, dtype=np.int64)
        return self.encode(np.einsum("ij,bjn->bin", A, self.points) % self.p)

    def negation(self):
        return encode_vectors((-self.flat_points) % self.p, self.p)


@dataclass(frozen=True)
class GridPoint:
    X: FpMatrix
    index: int

    @classmethod
    def from_matrix(cls, X):
        p = X.p
        weights = p ** np.arange(X.rows * X.cols, dtype=np.int64)
        return cls(X, int(X.flat() @ weights))

    @classmethod
    def from_index(cls, index, p, k, n):
        if not 0 <= index < p ** (k * n):
            raise DimensionMismatch(f"индекс {index} вне [0, {p}^{k * n})")
        digits = []
        rest = int(index)
        for _ in range(k * n):
            digits.append(rest % p)
            rest //= p
        return cls(FpMatrix(np.array(digits).reshape(k, n), p), int(index))

    @classmethod
    def zero(cls, p, k, n):
        return cls(FpMatrix.zeros(k, n, p), 0)


# ---------------------------------------------------------------------------
# Функции на сетке
# ---------------------------------------------------------------------------

def _as_fraction(v):
    return v if isinstance(v, Fraction) else Fraction(v)


@dataclass(frozen=True, eq=False)
class GridFunction:
    p: int
    k: int
    n: int
    values: np.ndarray
    value_kind: str = EXACT
    unit_interval: bool = False
    one_bounded: bool = False

    def __post_init__(self):
        if self.value_kind not in VALUE_KINDS:
            raise UsageError(f"неизвестный тип значений {self.value_kind}")
        size = self.p ** (self.k * self.n)
        raw = np.asarray(self.values)
        if raw.shape != (size,):
            raise DimensionMismatch(f"ожидалось {size} значений, получено {raw.shape}")
        if self.value_kind == EXACT:
            vals = np.empty(size, dtype=object)
            vals[:] = [_as_fraction(v) for v in raw.tolist()]
        elif self.value_kind == FLOAT:
            vals = raw.astype(np.float64)
        else:
            vals = raw.astype(np.complex128)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

        if self.unit_interval:
            if self.value_kind == COMPLEX:
                raise UsageError("флаг [0,1] несовместим с комплексными значениями")
            low, high = min(vals), max(vals)
            if low < 0 or high > 1:
                raise UsageError(f"значения вне [0,1]: min={float(low)}, max={float(high)}")
        if self.one_bounded and self.value_kind != EXACT:
            if np.max(np.abs(vals)) > 1 + 1e-12:
                raise UsageError("функция не ограничена единицей по модулю")

    # 🏗️ конструкторы

    @classmethod
    def constant(cls, p, k, n, value, kind=EXACT):
        size = p ** (k * n)
        vals = [Fraction(value)] * size if kind == EXACT else np.full(size, value)
        unit = kind != COMPLEX and 0 <= value <= 1
        return cls(p, k, n, np.array(vals, dtype=object if kind == EXACT else None), kind, unit, abs(value) <= 1)

    @classmethod
    def indicator(cls, p, k, n, mask):
        mask = np.asarray(mask, dtype=bool)
        return cls(p, k, n, np.where(mask, 1, 0), EXACT, True, True)

    @classmethod
    def random_set(cls, rng, p, k, n, density):
        size = p ** (k * n)
        return cls.indicator(p, k, n, rng.random(size) < density)

    @property
    def grid(self):
        return Grid(self.p, self.k, self.n)

    @property
    def size(self):
        return self.values.shape[0]

    def same_shape(self, other):
        return (self.p, self.k, self.n) == (other.p, other.k, other.n)

    def with_values(self, values, kind=None, unit_interval=None, one_bounded=None):
        return GridFunction(
            self.p, self.k, self.n, values,
            self.value_kind if kind is None else kind,
            self.unit_interval if unit_interval is None else unit_interval,
            self.one_bounded if one_bounded is None else one_bounded,
        )

    def compose(self, index_map):
        """x ↦ f(σ(x)) для перестановки индексов σ."""
        return self.with_values(self.values[np.asarray(index_map)])

    def to_float(self):
        if self.value_kind == FLOAT:
            return self
        if self.value_kind == COMPLEX:
            raise UsageError("комплексную функцию нельзя привести к вещественной")
        return self.with_values(np.array([float(v) for v in self.values]), FLOAT)

    def to_complex(self):
        if self.value_kind == COMPLEX:
            return self
        return self.with_values(self.to_float().values.astype(np.complex128), COMPLEX, False)

    def to_exact(self):
        if self.value_kind == EXACT:
            return self
        if self.value_kind == COMPLEX:
            raise UsageError("комплексную функцию нельзя привести к рациональной")
        return self.with_values(np.array([Fraction(float(v)) for v in self.values], dtype=object), EXACT)

    def numeric(self):
        """Значения как float/complex массив для вычислений с плавающей точкой."""
        if self.value_kind == EXACT:
            return np.array([float(v) for v in self.values])
        return self.values

    def mean(self):
        if self.value_kind == EXACT:
            nums, Q = exact_numerators(self)
            return Fraction(int(sum(nums.tolist())), Q * self.size)
        if self.value_kind == FLOAT:
            return math.fsum(self.values) / self.size
        return complex(math.fsum(self.values.real), math.fsum(self.values.imag)) / self.size

    def sq_norm(self):
        """E|f|²."""
        if self.value_kind == EXACT:
            return sum(v * v for v in self.values) / self.size
        return math.fsum(np.abs(self.values) ** 2) / self.size

    def support(self):
        if self.value_kind == EXACT:
            return np.nonzero(np.array([v != 0 for v in self.values]))[0]
        return np.nonzero(self.values)[0]

    def __eq__(self, other):
        if not isinstance(other, GridFunction):
            return NotImplemented
        return (
            self.same_shape(other)
            and self.value_kind == other.value_kind
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


def exact_numerators(f):
    """(числители, общий знаменатель) точной функции; int64, если помещается."""
    dens = [v.denominator for v in f.values]
    Q = math.lcm(*dens) if dens else 1
    nums = [v.numerator * (Q // v.denominator) for v in f.values]
    bound = max((abs(x) for x in nums), default=0)
    if bound < 2**62:
        return np.array(nums, dtype=np.int64), Q
    return np.array(nums, dtype=object), Q


def transform(f, A):
    """f ∘ A⁻¹ для обратимой k×k матрицы A (замена переменных X ↦ AX)."""
    grid = f.grid
    return f.compose(grid.apply(A.inverse()))


# ---------------------------------------------------------------------------
# Квадратичные факторы
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadraticFactor:
    p: int
    n: int
    B1: tuple = ()
    B2: tuple = ()
    B3: tuple = ()

    def __post_init__(self):
        check_modulus(self.p)
        vectors = tuple(np.asarray(r, dtype=np.int64).reshape(-1) % self.p for r in self.B1)
        for r in vectors:
            if r.shape != (self.n,):
                raise DimensionMismatch(f"вектор фактора длины {r.shape[0]}, ожидалось {self.n}")
        for M in self.B2 + self.B3:
            if M.shape != (self.n, self.n) or M.p != self.p:
                raise DimensionMismatch(f"матрица фактора {M.shape} над F_{M.p}")
        for M in self.B2:
            if not M.is_symmetric():
                raise NotSymmetric(f"матрица B2 не симметрична: {M.to_list()}")
        for N in self.B3:
            if not N.is_skew():
                raise NotSymmetric(f"матрица B3 не кососимметрична: {N.to_list()}")
        object.__setattr__(self, "B1", vectors)
        object.__setattr__(self, "B2", tuple(self.B2))
        object.__setattr__(self, "B3", tuple(self.B3))

    @property
    def complexity(self):
        return (len(self.B1), len(self.B2), len(self.B3))

    def atom_dim(self, k):
        d1, d2, d3 = self.complexity
        return k * d1 + k * (k + 1) // 2 * d2 + k * (k - 1) // 2 * d3

    def linear_matrix(self):
        if not self.B1:
            return np.zeros((0, self.n), dtype=np.int64)
        return np.stack(self.B1)

    def append(self, B1=(), B2=(), B3=()):
        return QuadraticFactor(self.p, self.n, self.B1 + tuple(B1), self.B2 + tuple(B2), self.B3 + tuple(B3))

    def to_dict(self):
        return {
            "p": self.p,
            "n": self.n,
            "B1": [r.tolist() for r in self.B1],
            "B2": [M.to_list() for M in self.B2],
            "B3": [N.to_list() for N in self.B3],
        }

    @classmethod
    def from_dict(cls, data):
        p, n = int(data["p"]), int(data["n"])
        return cls(
            p, n,
            tuple(data.get("B1", [])),
            tuple(FpMatrix.from_rows(M, p) for M in data.get("B2", [])),
            tuple(FpMatrix.from_rows(N, p) for N in data.get("B3", [])),
        )


@dataclass(frozen=True)
class FactorImage:
    b1: np.ndarray  # (d₁, k)
    b2: np.ndarray  # (d₂, k, k) симметричные
    b3: np.ndarray  # (d₃, k, k) кососимметричные

    def coordinates(self, p):
        k = self.b1.shape[1] if self.b1.size else (self.b2.shape[1] if self.b2.size else 0)
        return image_coordinates(self.b1[None], self.b2[None], self.b3[None], k, p)[0]


def factor_eval_batch(factor, Xs):
    """Образы B(X) для пачки точек Xs формы (B, k, n)."""
    Xs = np.asarray(Xs, dtype=np.int64)
    if Xs.shape[-1] != factor.n:
        raise DimensionMismatch(f"точки длины {Xs.shape[-1]}, фактор над F_p^{factor.n}")
    p = factor.p
    batch, k = Xs.shape[0], Xs.shape[1]
    if factor.B1:
        b1 = np.einsum("bkn,dn->bdk", Xs, factor.linear_matrix()) % p
    else:
        b1 = np.zeros((batch, 0, k), dtype=np.int64)

    def quadratic(mats):
        if not mats:
            return np.zeros((batch, 0, k, k), dtype=np.int64)
        stack = np.stack([M.data for M in mats])
        return np.einsum("bin,dnm,bjm->bdij", Xs, stack, Xs) % p

    return b1, quadratic(factor.B2), quadratic(factor.B3)


def image_coordinates(b1, b2, b3, k, p):
    """Координаты образа в F_p^m: B1 целиком, B2: верхний треугольник, B3: строго верхний."""
    batch = b1.shape[0]
    upper = np.triu_indices(k)
    strict = np.triu_indices(k, 1)
    parts = [
        b1.reshape(batch, -1),
        b2[:, :, upper[0], upper[1]].reshape(batch, -1),
        b3[:, :, strict[0], strict[1]].reshape(batch, -1),
    ]
    return np.concatenate(parts, axis=1) % p


def factor_eval(factor, X):
    """B(X) = (X r_i, X M_i Xᵀ, X N_j Xᵀ)."""
    b1, b2, b3 = factor_eval_batch(factor, X.X.data[None])
    image = FactorImage(b1[0], b2[0], b3[0])
    assert np.array_equal(image.b2, np.swapaxes(image.b2, -1, -2))
    assert np.array_equal(image.b3, (-np.swapaxes(image.b3, -1, -2)) % factor.p)
    return image


def atom_labels(factor, grid):
    """Номер атома для каждой точки сетки и число атомов."""
    b1, b2, b3 = factor_eval_batch(factor, grid.points)
    coords = image_coordinates(b1, b2, b3, grid.k, grid.p)
    if coords.shape[1] == 0:
        return np.zeros(grid.size, dtype=np.int64), 1
    _, labels = np.unique(coords, axis=0, return_inverse=True)
    labels = labels.reshape(-1)
    return labels, int(labels.max()) + 1


def factor_rank(factor):
    """Наименьший ранг нетривиальной комбинации Σa_iM_i + Σb_jN_j (0 при зависимых r_i)."""
    p, n = factor.p, factor.n
    if factor.B1 and rank_mod(factor.linear_matrix(), p) < len(factor.B1):
        return 0
    mats = factor.B2 + factor.B3
    if not mats:
        return n
    guard(p ** len(mats), "factor_rank: перебор комбинаций", limit=10**7)
    stack = np.stack([M.data for M in mats])
    best = n
    for coeffs in all_vectors(len(mats), p)[1:]:
        lead = coeffs[np.nonzero(coeffs)[0][0]]
        if lead != 1:
            continue  # ранг не меняется при умножении на скаляр
        combo = np.tensordot(coeffs, stack, axes=1) % p
        best = min(best, rank_mod(combo, p))
        if best == 0:
            break
    return best


def conditional_expectation(f, factor):
    """E[f|𝔅]: среднее f по атому, содержащему X."""
    if f.value_kind == COMPLEX:
        raise UsageError("условное ожидание определено для рациональных и вещественных функций")
    grid = f.grid
    labels, atoms = atom_labels(factor, grid)
    counts = np.bincount(labels, minlength=atoms)
    if f.value_kind == EXACT:
        nums, Q = exact_numerators(f)
        sums = np.zeros(atoms, dtype=object)
        sums[:] = 0
        np.add.at(sums, labels, nums.astype(object))
        per_atom = np.array([Fraction(int(s), int(c) * Q) for s, c in zip(sums, counts)], dtype=object)
    else:
        per_atom = np.bincount(labels, weights=f.values, minlength=atoms) / counts
    logging.debug(f"🧮 Условное ожидание по {atoms} атомам")
    return f.with_values(per_atom[labels])


def energy(f, factor):
    """‖E[f|𝔅]‖₂²."""
    return conditional_expectation(f, factor).sq_norm()


def is_measurable(f, factor):
    labels, atoms = atom_labels(factor, f.grid)
    values = f.values
    first = {}
    for idx, lab in enumerate(labels.tolist()):
        v = values[idx]
        if lab in first:
            if first[lab] != v:
                return False
        else:
            first[lab] = v
    return True


def refines(fine, coarse, grid):
    """Каждый атом fine лежит внутри одного атома coarse."""
    lab_f, atoms_f = atom_labels(fine, grid)
    lab_c, _ = atom_labels(coarse, grid)
    pairs = np.unique(np.stack([lab_f, lab_c], axis=1), axis=0)
    return pairs.shape[0] == atoms_f


@dataclass(frozen=True)
class LinearKernel:
    H: GridFunction
    H_perp: SubspaceBasis
    density: Fraction


def coset_labels(factor, grid):
    """Метка смежного класса по H: значения линейной части фактора."""
    b1, _, _ = factor_eval_batch(QuadraticFactor(factor.p, factor.n, factor.B1), grid.points)
    if b1.shape[1] == 0:
        return np.zeros(grid.size, dtype=np.int64)
    return encode_vectors(b1.reshape(grid.size, -1), grid.p)


def linear_kernel_H(factor, k):
    """H = {D : D r_i = 0 для всех i} и его аннулятор H^⊥ ⊆ F_p^{kn}."""
    p, n = factor.p, factor.n
    grid = Grid(p, k, n)
    labels = coset_labels(factor, grid)
    H = GridFunction.indicator(p, k, n, labels == 0)

    vectors = []
    for r in factor.B1:
        for row in range(k):
            v = np.zeros(k * n, dtype=np.int64)
            v[row * n:(row + 1) * n] = r
            vectors.append(v)
    H_perp = SubspaceBasis.span(vectors, p, k * n, GRID_VECTORS, k)
    density = Fraction(int(np.count_nonzero(labels == 0)), grid.size)
    return LinearKernel(H, H_perp, density)


# ---------------------------------------------------------------------------
# Квадратичные фазы
# ---------------------------------------------------------------------------

def phase_function(r, M, p, k, n):
    """g(X) = e_p(rᵀx + xᵀMx), x: построчная развёртка X."""
    r = np.asarray(r, dtype=np.int64).reshape(-1) % p
    if not M.is_symmetric():
        raise NotSymmetric("матрица фазы должна быть симметричной")
    if r.shape != (k * n,) or M.shape != (k * n, k * n):
        raise DimensionMismatch(f"фаза ожидает r длины {k * n} и M {k * n}×{k * n}")
    grid = Grid(p, k, n)
    x = grid.flat_points
    exponent = (x @ r + np.einsum("bi,ij,bj->b", x, M.data, x)) % p
    values = np.exp(2j * np.pi * exponent / p)
    return GridFunction(p, k, n, values, COMPLEX, False, True)


def refine_with_phase(factor, r, M, k):
    """🧩 Добавляет к фактору блоки (r_i, M_ii, M'_ij, M''_ij), по которым фаза измерима."""
    p, n = factor.p, factor.n
    r = np.asarray(r, dtype=np.int64).reshape(-1) % p
    half = pow(2, -1, p)
    blocks = M.data
    B1 = [r[i * n:(i + 1) * n] for i in range(k)]
    B2, B3 = [], []
    for i in range(k):
        B2.append(FpMatrix(blocks[i * n:(i + 1) * n, i * n:(i + 1) * n], p))
        for j in range(i + 1, k):
            Mij = blocks[i * n:(i + 1) * n, j * n:(j + 1) * n]
            B2.append(FpMatrix((Mij + Mij.T) * half, p))
            B3.append(FpMatrix((Mij - Mij.T) * half, p))
    return factor.append(B1, B2, B3)


def random_factor(rng, p, n, d1=0, d2=0, d3=0):
    """Случайный фактор заданной сложности."""
    B1 = tuple(rng.integers(0, p, size=n) for _ in range(d1))
    B2 = tuple(random_symmetric(rng, n, p) for _ in range(d2))
    B3 = tuple(random_skew(rng, n, p) for _ in range(d3))
    return QuadraticFactor(p, n, B1, B2, B3)


def full_rank_factor(p, n, d1=1, d2=1, d3=0):
    """Фактор из единичных векторов, x·x и стандартной кососимметричной формы (d₂, d₃ ≤ 1)."""
    if d2 > 1 or d3 > 1:
        raise UsageError("full_rank_factor строит не более одной квадратичной формы каждого типа")
    B1 = tuple(np.eye(n, dtype=np.int64)[i] for i in range(d1))
    B2 = tuple(FpMatrix.scalar(c + 1, n, p) for c in range(d2))
    B3 = []
    for _ in range(d3):
        N = np.zeros((n, n), dtype=np.int64)
        for i in range(0, n - 1, 2):
            N[i, i + 1], N[i + 1, i] = 1, -1
        B3.append(FpMatrix(N, p))
    return QuadraticFactor(p, n, B1, B2, tuple(B3))


def linear_rank(factor):
    return mat_rank(FpMatrix(factor.linear_matrix(), factor.p)) if factor.B1 else 0
