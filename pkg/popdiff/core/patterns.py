"""🧩 Алгебра паттернов: допустимость, спектральное условие, подпространства Ξ, Λ, Ψ, Ω."""

import json
import logging
import os
from dataclasses import dataclass

import numpy as np

from popdiff.config import guard
from popdiff.core.ffalg import (
    FpMatrix,
    all_vectors,
    check_modulus,
    min_poly,
    negate_argument,
    nullspace,
    poly_gcd,
    rank_mod,
    row_basis,
    solve,
)
from popdiff.errors import DimensionMismatch, NotContained, Singular, UsageError

VECTORS = "vectors-of-F_p^k-tuples"
SYMMETRIC_4 = "symmetric-matrix-4-tuples"
SKEW_4 = "skew-matrix-4-tuples"
PAIR_SYMMETRIC = "pair-tuples-symmetric"
PAIR_SKEW = "pair-tuples-skew"
FULL = "full"
GRID_VECTORS = "grid-vectors"


@dataclass(frozen=True)
class PatternSpec:
    p: int
    k: int
    M1: FpMatrix
    M2: FpMatrix
    name: str = ""

    def __post_init__(self):
        check_modulus(self.p)
        for label, M in (("M1", self.M1), ("M2", self.M2)):
            if M.shape != (self.k, self.k):
                raise DimensionMismatch(f"{label} имеет форму {M.shape}, ожидалось {(self.k, self.k)}")
            if M.p != self.p:
                raise DimensionMismatch(f"{label} задана над F_{M.p}, паттерн над F_{self.p}")

    @property
    def J(self):
        return self.M2 @ self.M1.inverse()

    def coefficients(self, points=4):
        """Матрицы C_j точек X + C_j D: 0, M₁, M₂, M₁+M₂."""
        zero = FpMatrix.zeros(self.k, self.k, self.p)
        mats = [zero, self.M1, self.M2, self.M1 + self.M2]
        return mats[:points]

    @classmethod
    def from_dict(cls, data):
        try:
            p, k = int(data["p"]), int(data["k"])
            return cls(
                p=p,
                k=k,
                M1=FpMatrix.from_rows(data["M1"], p),
                M2=FpMatrix.from_rows(data["M2"], p),
                name=data.get("name", ""),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise UsageError(f"некорректное описание паттерна: {e}") from e

    def to_dict(self):
        return {"p": self.p, "k": self.k, "M1": self.M1.to_list(), "M2": self.M2.to_list(), "name": self.name}


def rotated_square_spec(p=5):
    """Паттерн (x,y), (x+a,y+b), (x+b,y−a), (x+a+b,y+b−a)."""
    return PatternSpec(p, 2, FpMatrix.identity(2, p), FpMatrix.from_rows([[0, 1], [-1, 0]], p), "rotated-square")


def diagonal_square_spec(p=5):
    """Диагональная форма: (x+a,y+b), (x+2a,y−2b), (x+3a,y−b)."""
    return PatternSpec(p, 2, FpMatrix.identity(2, p), FpMatrix.from_rows([[2, 0], [0, -2]], p), "diagonal-square")


def ap4_spec(p=5):
    return PatternSpec(p, 1, FpMatrix.identity(1, p), FpMatrix.from_rows([[2]], p), "ap4")


PRESETS = {
    "rotated-square": rotated_square_spec,
    "diagonal-square": diagonal_square_spec,
    "ap4": ap4_spec,
}


def load_spec(source):
    """📄 Паттерн из JSON-файла или по имени пресета (rotated-square, ap4, …)."""
    if isinstance(source, dict):
        return PatternSpec.from_dict(source)
    stem = os.path.splitext(os.path.basename(str(source)))[0]
    if not os.path.exists(str(source)):
        if stem in PRESETS:
            return PRESETS[stem]()
        raise UsageError(f"файл паттерна {source} не найден")
    with open(source, "r", encoding="utf-8") as file:
        return PatternSpec.from_dict(json.load(file))


# ---------------------------------------------------------------------------
# Подпространства
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SubspaceBasis:
    """Подпространство F_p^m, заданное независимыми строками (в форме RREF)."""

    p: int
    ambient_dim: int
    basis: np.ndarray
    ambient_kind: str = FULL
    k: int = 0

    def __post_init__(self):
        rows = np.asarray(self.basis, dtype=np.int64).reshape(-1, self.ambient_dim) % self.p
        rows = row_basis(rows, self.p)
        rows.setflags(write=False)
        object.__setattr__(self, "basis", rows)
        if not self._in_declared_ambient():
            raise NotContained(f"базис не лежит в объемлющем пространстве {self.ambient_kind}")

    @classmethod
    def span(cls, vectors, p, ambient_dim, kind=FULL, k=0):
        vectors = np.asarray(vectors, dtype=np.int64).reshape(-1, ambient_dim)
        return cls(p, ambient_dim, vectors, kind, k)

    @classmethod
    def zero(cls, p, ambient_dim, kind=FULL, k=0):
        return cls(p, ambient_dim, np.zeros((0, ambient_dim), dtype=np.int64), kind, k)

    @property
    def dim(self):
        return self.basis.shape[0]

    def _components(self, copies):
        return self.basis.reshape(self.dim, copies, self.k, self.k)

    def _in_declared_ambient(self):
        if self.dim == 0:
            return True
        if self.ambient_kind in (SYMMETRIC_4, PAIR_SYMMETRIC):
            blocks = self._components(self.ambient_dim // (self.k * self.k))
            return np.array_equal(blocks, np.swapaxes(blocks, -1, -2))
        if self.ambient_kind in (SKEW_4, PAIR_SKEW):
            blocks = self._components(self.ambient_dim // (self.k * self.k))
            return np.array_equal(blocks, (-np.swapaxes(blocks, -1, -2)) % self.p)
        return True

    def contains_vector(self, v):
        v = np.asarray(v, dtype=np.int64).reshape(1, self.ambient_dim)
        return rank_mod(np.vstack([self.basis, v]), self.p) == self.dim

    def contains(self, other):
        if other.ambient_dim != self.ambient_dim or other.p != self.p:
            return False
        return rank_mod(np.vstack([self.basis, other.basis]), self.p) == self.dim

    def __eq__(self, other):
        if not isinstance(other, SubspaceBasis):
            return NotImplemented
        # двойное включение
        return self.contains(other) and other.contains(self)

    def __hash__(self):
        return hash((self.p, self.ambient_dim, self.basis.tobytes()))

    def elements(self):
        guard(self.p**self.dim, "перечисление подпространства")
        coeffs = all_vectors(self.dim, self.p)
        return (coeffs @ self.basis) % self.p

    def membership_matrix(self):
        """Строки C с C v = 0 ⇔ v в подпространстве (внутри F_p^m)."""
        return nullspace(self.basis, self.p) if self.dim else np.eye(self.ambient_dim, dtype=np.int64)

    def to_dict(self):
        return {
            "kind": self.ambient_kind,
            "ambient_dim": self.ambient_dim,
            "dim": self.dim,
            "basis": self.basis.tolist(),
        }


def _symmetry_basis(k, p, kind):
    """Базис S_k (symmetric) или S'_k (skew) как список k×k массивов."""
    mats = []
    for i in range(k):
        for j in range(i, k):
            if kind == "symmetric":
                E = np.zeros((k, k), dtype=np.int64)
                E[i, j] = 1
                E[j, i] = 1
                mats.append(E)
            elif i < j:
                E = np.zeros((k, k), dtype=np.int64)
                E[i, j] = 1
                E[j, i] = p - 1
                mats.append(E)
    return mats


def matrix_ambient(k, p, kind, copies=4):
    """(S_k)^copies или (S'_k)^copies внутри F_p^{copies·k²}."""
    blocks = _symmetry_basis(k, p, kind)
    if copies == 4:
        label = SYMMETRIC_4 if kind == "symmetric" else SKEW_4
    else:
        label = PAIR_SYMMETRIC if kind == "symmetric" else PAIR_SKEW
    vectors = []
    for c in range(copies):
        for E in blocks:
            v = np.zeros((copies, k, k), dtype=np.int64)
            v[c] = E
            vectors.append(v.reshape(-1))
    return SubspaceBasis.span(vectors, p, copies * k * k, label, k)


def vector_ambient(k, p, copies=4):
    return SubspaceBasis(p, copies * k, np.eye(copies * k, dtype=np.int64), VECTORS, k)


def orth_complement(space, ambient):
    """{v ∈ ambient : ⟨v, w⟩ = 0 для всех w ∈ space} относительно tr(AᵀB)."""
    if not ambient.contains(space):
        raise NotContained("подпространство не лежит в объемлющем")
    p = space.p
    gram = (ambient.basis @ space.basis.T) % p
    coeffs = nullspace(gram.T, p)
    return SubspaceBasis(p, ambient.ambient_dim, (coeffs @ ambient.basis) % p, ambient.ambient_kind, ambient.k)


# ---------------------------------------------------------------------------
# Допустимость и спектральное условие
# ---------------------------------------------------------------------------

def check_admissible(spec):
    """✅ M₁, M₂, M₁−M₂, M₁+M₂ обратимы над F_p."""
    mats = (spec.M1, spec.M2, spec.M1 - spec.M2, spec.M1 + spec.M2)
    return all(M.is_invertible() for M in mats)


def spectral_ok(A):
    """НОД(Q(t), Q(−t)) = 1 для минимального многочлена Q матрицы A."""
    Q = min_poly(A)
    return poly_gcd(Q, negate_argument(Q).monic()).is_one()


def check_spectral(spec):
    """Никакие два собственных значения M₁M₂⁻¹ не противоположны."""
    if not spec.M2.is_invertible():
        raise Singular("M2 необратима, спектральное условие не определено")
    return spectral_ok(spec.M1 @ spec.M2.inverse())


def reduce_to_identity_form(spec):
    """(M₁, M₂) ↦ (I, M₂M₁⁻¹)."""
    if not spec.M1.is_invertible():
        raise Singular("M1 необратима, сведение к (I, J) невозможно")
    return PatternSpec(spec.p, spec.k, FpMatrix.identity(spec.k, spec.p), spec.J, spec.name)


# ---------------------------------------------------------------------------
# Подпространства ограничений
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstraintSpaces:
    J: FpMatrix
    R: FpMatrix
    Xi: SubspaceBasis
    Lambda: SubspaceBasis
    LambdaPrime: SubspaceBasis
    Psi: SubspaceBasis
    Omega: SubspaceBasis
    OmegaPrime: SubspaceBasis

    @property
    def k(self):
        return self.J.rows

    @property
    def p(self):
        return self.J.p

    def lambda_perp(self, kind="symmetric"):
        space = self.Lambda if kind == "symmetric" else self.LambdaPrime
        return orth_complement(space, matrix_ambient(self.k, self.p, kind, 4))

    def omega_perp(self, kind="symmetric"):
        space = self.Omega if kind == "symmetric" else self.OmegaPrime
        return orth_complement(space, matrix_ambient(self.k, self.p, kind, 2))

    def to_dict(self):
        return {
            "J": self.J.to_list(),
            "Xi": self.Xi.to_dict(),
            "Lambda": self.Lambda.to_dict(),
            "LambdaPrime": self.LambdaPrime.to_dict(),
            "Psi": self.Psi.to_dict(),
            "Omega": self.Omega.to_dict(),
            "OmegaPrime": self.OmegaPrime.to_dict(),
            "Lambda_perp_dim": self.lambda_perp("symmetric").dim,
            "LambdaPrime_perp_dim": self.lambda_perp("skew").dim,
        }


def _linear_map_matrix(k, p, fn):
    """Матрица линейного отображения A ↦ fn(A) на vec(A) (построчная развёртка)."""
    cols = []
    for idx in range(k * k):
        E = np.zeros((k, k), dtype=np.int64)
        E.flat[idx] = 1
        cols.append(fn(E).reshape(-1) % p)
    return np.stack(cols, axis=1)


def constraint_spaces(J, p=None):
    """📐 Ξ_J, Λ_J, Λ'_J, Ψ_J, Ω_J, Ω'_J.

    Ξ_J = {A : JᵀA = AJ}; для симметричной A это значит, что AJ симметрична.
    Λ_J = {(−A, −AR, AR, A)} с A ∈ Ξ_J ∩ S_k и R = (I+J)(I−J)⁻¹.
    """
    p = J.p if p is None else p
    check_modulus(p)
    k = J.rows
    I = FpMatrix.identity(k, p)
    for label, M in (("J", J), ("I−J", I - J), ("I+J", I + J)):
        if not M.is_invertible():
            raise Singular(f"{label} необратима над F_{p}")
    R = (I + J) @ (I - J).inverse()
    Jd = J.data

    commute = _linear_map_matrix(k, p, lambda A: Jd.T @ A - A @ Jd)
    sym = _linear_map_matrix(k, p, lambda A: A - A.T)
    skew = _linear_map_matrix(k, p, lambda A: A + A.T)

    xi = SubspaceBasis(p, k * k, nullspace(commute, p), FULL, k)
    xi_sym = nullspace(np.vstack([commute, sym]), p)
    xi_skew = nullspace(np.vstack([commute, skew]), p)

    def four_tuples(rows):
        out = []
        for row in rows:
            A = row.reshape(k, k)
            AR = (A @ R.data) % p
            out.append(np.concatenate([-A, -AR, AR, A]).reshape(-1))
        return out

    def pairs(rows):
        out = []
        for row in rows:
            A = row.reshape(k, k)
            out.append(np.concatenate([-A, -(A @ R.data)]).reshape(-1))
        return out

    lam = SubspaceBasis.span(four_tuples(xi_sym), p, 4 * k * k, SYMMETRIC_4, k)
    lam_prime = SubspaceBasis.span(four_tuples(xi_skew), p, 4 * k * k, SKEW_4, k)
    omega = SubspaceBasis.span(pairs(xi_sym), p, 2 * k * k, PAIR_SYMMETRIC, k)
    omega_prime = SubspaceBasis.span(pairs(xi_skew), p, 2 * k * k, PAIR_SKEW, k)

    eye = np.eye(k, dtype=np.int64)
    zero = np.zeros((k, k), dtype=np.int64)
    psi_equations = np.block([
        [eye, -eye, -eye, eye],
        [Jd, -(eye + Jd), zero, eye],
    ])
    psi = SubspaceBasis(p, 4 * k, nullspace(psi_equations, p), VECTORS, k)

    logging.info(f"📐 Подпространства для J={J.to_list()}: dim Λ={lam.dim}, dim Λ'={lam_prime.dim}, dim Ψ={psi.dim}")
    return ConstraintSpaces(J, R, xi, lam, lam_prime, psi, omega, omega_prime)


def psi_span_bruteforce(J):
    """Точная линейная оболочка {(x, x+d, x+Jd, x+(I+J)d)}."""
    p, k = J.p, J.rows
    vecs = all_vectors(k, p)
    out = []
    for d in vecs:
        Jd = (J.data @ d) % p
        out.append(np.concatenate([vecs, vecs + d, vecs + Jd, vecs + d + Jd], axis=1) % p)
    return SubspaceBasis.span(np.vstack(out), p, 4 * k, VECTORS, k)


def coset_equal(tuple4, spaces, kind="symmetric"):
    """(M⁽¹⁾,M⁽²⁾) + Ω^⊥ = (M⁽⁴⁾,M⁽³⁾) + Ω^⊥."""
    k, p = spaces.k, spaces.p
    blocks = np.asarray(tuple4, dtype=np.int64).reshape(4, k, k)
    diff = np.concatenate([blocks[0] - blocks[3], blocks[1] - blocks[2]]).reshape(-1) % p
    return spaces.omega_perp(kind).contains_vector(diff)


def in_algebra_of_square(A):
    """A ∈ F_p[A²]: A = Σ c_i A^{2i}, i < k."""
    k, p = A.rows, A.p
    square = A @ A
    columns = [FpMatrix.identity(k, p).flat()]
    current = FpMatrix.identity(k, p)
    for _ in range(1, k):
        current = current @ square
        columns.append(current.flat())
    return solve(np.stack(columns, axis=1), A.flat(), p) is not None


def annihilator_bruteforce(J, n, kind="symmetric"):
    """🔍 Аннулятор образов X M Xᵀ по всем (X, D) и всем M данного типа симметрии.

    Ограничения линейны по M, поэтому достаточно базиса S_n (или S'_n).
    """
    p, k = J.p, J.rows
    guard(p ** (2 * k * n), "annihilator_bruteforce")
    ambient = matrix_ambient(k, p, kind, 4)
    forms = _symmetry_basis(n, p, kind)
    if ambient.dim == 0 or not forms:
        return ambient

    I = np.eye(k, dtype=np.int64)
    coeffs = [np.zeros((k, k), dtype=np.int64), I, J.data, I + J.data]
    points = all_vectors(k * n, p).reshape(-1, k, n)
    W = ambient.basis
    rows = np.zeros((0, ambient.dim), dtype=np.int64)

    for D in points:
        shifted = [(points + C @ D) % p for C in coeffs]
        for M in forms:
            images = [np.einsum("bij,jl,bml->bim", Y, M, Y) % p for Y in shifted]
            stacked = np.concatenate([img.reshape(len(points), -1) for img in images], axis=1)
            constraint = np.unique((stacked @ W.T) % p, axis=0)
            rows = row_basis(np.vstack([rows, constraint]), p)
        if rows.shape[0] == ambient.dim:
            break  # аннулятор уже нулевой

    coeff = nullspace(rows, p) if rows.shape[0] else np.eye(ambient.dim, dtype=np.int64)
    return SubspaceBasis(p, ambient.ambient_dim, (coeff @ W) % p, ambient.ambient_kind, k)


def projection_check(L):
    """Каждая точка образа линейного L: F_p^r → F_p^s имеет ровно p^{r−t} прообразов."""
    p = L.p
    r = L.cols
    guard(p**r, "projection_check")
    xs = all_vectors(r, p)
    images = (xs @ L.data.T) % p
    _, counts = np.unique(images, axis=0, return_counts=True)
    t = L.rank()
    exact = bool(len(counts) == p**t and np.all(counts == p ** (r - t)))
    return {"rank": t, "image_size": int(len(counts)), "preimage_size": p ** (r - t), "exact": exact}
