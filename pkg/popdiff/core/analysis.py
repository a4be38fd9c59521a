"""📊 Счёт паттернов, популярные разности, нормы Гауэрса и проверки равнораспределения."""

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from popdiff.config import get_guard_limit, guard
from popdiff.core.ffalg import FpMatrix, encode_vectors, nullspace, rank_mod
from popdiff.core.gridfn import (
    COMPLEX,
    EXACT,
    Grid,
    GridFunction,
    coset_labels,
    exact_numerators,
    factor_eval_batch,
    image_coordinates,
    is_measurable,
    linear_rank,
)
from popdiff.core.patterns import constraint_spaces, spectral_ok
from popdiff.errors import DimensionMismatch, NotAutomorphism, NotMeasurable, UsageError

FLOAT_SLACK = 1e-9


@dataclass
class PatternCountReport:
    alpha: object
    counts: dict
    max_d: object
    argmax_d: int | None
    threshold: object
    threshold_hits: int
    points: int
    backend: str
    differences: int = 0
    method: str = "dense"

    @property
    def markov_fraction(self):
        return self.threshold_hits / self.differences if self.differences else 0.0

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "max_d": self.argmax_d,
            "argmax": self.argmax_d,
            "beta_max": self.max_d,
            "threshold": self.threshold,
            "hits": self.threshold_hits,
            "markov_fraction": self.markov_fraction,
            "points": self.points,
            "method": self.method,
            "backend": self.backend,
        }


@dataclass
class EquidistributionReport:
    support_ok: bool
    predicted_cell_probability: Fraction
    max_multiplicative_deviation: float
    cells_observed: int
    predicted_dim: int
    observed_dim: int
    total: int
    prediction_reliable: bool = True
    label: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def support_full(self):
        return self.cells_observed == round(1 / self.predicted_cell_probability)

    def to_dict(self):
        return {
            "label": self.label,
            "support_ok": self.support_ok,
            "support_full": self.support_full,
            "predicted_cell_probability": self.predicted_cell_probability,
            "predicted_dim": self.predicted_dim,
            "observed_dim": self.observed_dim,
            "cells_observed": self.cells_observed,
            "max_multiplicative_deviation": self.max_multiplicative_deviation,
            "total": self.total,
            "prediction_reliable": self.prediction_reliable,
            **self.extra,
        }


def _backend_of(f, backend):
    if backend is None:
        return "exact" if f.value_kind == EXACT else "float"
    if backend == "exact" and f.value_kind != EXACT:
        raise UsageError("точный счёт требует рациональных значений")
    return backend


def _epsilon(epsilon, backend):
    if backend == "exact":
        return Fraction(str(epsilon)) if isinstance(epsilon, float) else Fraction(epsilon)
    return float(epsilon)


class _ProductSum:
    """Σ_X Π_j f(X + C_j D) для одной функции: точные целые или компенсированные float."""

    def __init__(self, f, points, backend):
        self.size = f.size
        self.backend = backend
        if backend == "exact":
            nums, Q = exact_numerators(f)
            big = nums.dtype == object or int(np.max(np.abs(nums), initial=0)) ** points * self.size >= 2**62
            self.values = nums.astype(object) if big else nums
            self.scale = Q**points * self.size
        else:
            self.values = f.numeric()

    def reduce(self, products):
        if self.backend == "exact":
            return Fraction(int(products.sum()), self.scale)
        if np.iscomplexobj(products):
            return complex(math.fsum(products.real), math.fsum(products.imag)) / self.size
        return math.fsum(products) / self.size

    def gather(self, indices):
        return self.values[indices]


def pattern_count(f, spec, d, points=4, backend=None):
    """β(d) = E_X f(X) f(X+M₁D) f(X+M₂D) f(X+(M₁+M₂)D) (без последнего множителя при points=3)."""
    if (f.p, f.k) != (spec.p, spec.k) or d.X.shape != (f.k, f.n):
        raise DimensionMismatch("размерности функции, паттерна и разности не согласованы")
    backend = _backend_of(f, backend)
    grid = f.grid
    acc = _ProductSum(f, points, backend)
    return _beta(acc, grid, spec.coefficients(points), d.X.data)


def _beta(acc, grid, coeffs, D):
    products = None
    for C in coeffs:
        vals = acc.gather(grid.shift(D, C))
        products = vals if products is None else products * vals
    return acc.reduce(products)


def _sparse_betas(f, acc, grid, coeffs, chunk_cells=2 * 10**7):
    """β(d) для всех d ∈ supp f − supp f: остальные разности дают ноль."""
    support = f.support()
    pts = grid.flat_points[support]
    p = grid.p
    diffs = (pts[None, :, :] - pts[:, None, :]).reshape(-1, pts.shape[1]) % p
    candidates = np.unique(encode_vectors(diffs, p))
    betas = {}
    per_chunk = max(1, chunk_cells // max(1, len(support) * pts.shape[1]))
    mats = [np.asarray(C.data) for C in coeffs]
    for start in range(0, len(candidates), per_chunk):
        idx = candidates[start:start + per_chunk]
        Ds = grid.points[idx]
        products = None
        for C in mats:
            shifts = np.einsum("ij,bjn->bin", C, Ds).reshape(len(idx), 1, -1)
            cells = encode_vectors((pts[None, :, :] + shifts) % p, p)
            vals = acc.gather(cells)
            products = vals if products is None else products * vals
        for row, d in enumerate(idx.tolist()):
            betas[d] = acc.reduce(products[row])
    return betas


def popular_search(f, spec, epsilon, points=4, backend=None, method="auto"):
    """🔎 Перебор всех разностей d и поиск популярных (β(d) ≥ α^points − ε)."""
    if points not in (3, 4):
        raise UsageError("поддерживаются паттерны из 3 и 4 точек")
    if (f.p, f.k) != (spec.p, spec.k):
        raise DimensionMismatch("функция и паттерн заданы над разными группами")
    backend = _backend_of(f, backend)
    grid = f.grid
    N = grid.size
    if method == "auto":
        method = "dense" if N * N <= get_guard_limit() else "sparse"
    coeffs = spec.coefficients(points)
    acc = _ProductSum(f, points, backend)

    if method == "dense":
        guard(N * N, "popular_search")
        counts = {d: _beta(acc, grid, coeffs, grid.points[d]) for d in range(N)}
    else:
        guard(len(f.support()) ** 2, "popular_search (разреженный режим)")
        counts = _sparse_betas(f, acc, grid, coeffs)

    alpha = f.mean()
    threshold = alpha**points - _epsilon(epsilon, backend)
    slack = 0 if backend == "exact" else FLOAT_SLACK

    best, best_d, hits = None, None, 0
    for d in sorted(counts):
        if d == 0:
            continue
        beta = counts[d]
        if best is None or beta > best:
            best, best_d = beta, d
        if beta >= threshold - slack:
            hits += 1
    zero = Fraction(0) if backend == "exact" else 0.0
    missing = (N - 1) - sum(1 for d in counts if d != 0)
    if missing:
        # разности вне supp − supp дают β = 0
        if 0 >= threshold - slack:
            hits += missing
        first_missing = next(d for d in range(1, N) if d not in counts)
        if best is None or zero > best or (zero == best and first_missing < best_d):
            best, best_d = zero, first_missing

    logging.info(f"🔎 popular_search: α={float(alpha):.4f}, max β={float(best):.6f} при d={best_d}, попаданий {hits}")
    return PatternCountReport(alpha, counts, best, best_d, threshold, hits, points, backend, N - 1, method)


# ---------------------------------------------------------------------------
# Нормы Гауэрса
# ---------------------------------------------------------------------------

def _shift_table(grid):
    guard(grid.size * grid.size, "таблица сдвигов")
    return np.stack([grid.shift(h) for h in grid.flat_points])


def multiplicative_derivative(f, h):
    """∂_h f(x) = f(x)·conj f(x+h)."""
    vals = f.to_complex().values if f.value_kind != COMPLEX else f.values
    shifted = vals[f.grid.shift(h.X.data)]
    return GridFunction(f.p, f.k, f.n, vals * np.conj(shifted), COMPLEX, False, f.one_bounded)


def _gowers_power_recursive(batch, table, s):
    """‖·‖^{2^s} для пачки функций (B, N) через производные."""
    if s == 1:
        means = batch.mean(axis=1)
        return np.abs(means) ** 2
    B, N = batch.shape
    derived = batch[:, None, :] * np.conj(batch[:, table])
    powers = _gowers_power_recursive(derived.reshape(B * N, N), table, s - 1)
    return powers.reshape(B, N).mean(axis=1)


def _gowers_power_direct(vals, table, s):
    """Прямое разложение E_{x,h} Π_ω C^{|ω|} f(x + ω·h)."""
    N = vals.shape[0]
    total = 0.0 + 0.0j
    base = np.arange(N)
    for prefix in np.ndindex(*([N] * (s - 1))):
        corners = {(): base}
        for h in prefix:
            corners = {**{w + (0,): idx for w, idx in corners.items()},
                       **{w + (1,): table[h][idx] for w, idx in corners.items()}}
        product = np.ones((N, N), dtype=np.complex128)
        for w, idx in corners.items():
            for last in (0, 1):
                cells = table[:, idx] if last else np.broadcast_to(idx, (N, N))
                term = vals[cells]
                if (sum(w) + last) % 2:
                    term = np.conj(term)
                product *= term
        total += product.sum()
    return total / N ** (s + 1)


def gowers_norm(f, s, method="auto"):
    """‖f‖_{U^s}; U¹ = |E f|."""
    if s < 1:
        raise UsageError("норма Гауэрса определена для s ≥ 1")
    vals = f.numeric().astype(np.complex128)
    N = vals.shape[0]
    if s == 1:
        return float(abs(vals.mean()))
    if method == "auto":
        method = "direct" if N ** (s + 1) <= min(get_guard_limit(), 10**7) else "recursive"

    if method == "fourier":
        if s != 2:
            raise UsageError("fourier-режим вычисляет только U²")
        spectrum = np.fft.fftn(vals.reshape((f.p,) * (f.k * f.n))) / N
        power = float(np.sum(np.abs(spectrum) ** 4))
    else:
        table = _shift_table(f.grid)
        if method == "direct":
            guard(N ** (s + 1), "gowers_norm (прямое разложение)")
            power = _gowers_power_direct(vals, table, s).real
        elif method == "recursive":
            guard(N**s, "gowers_norm (рекурсия)")
            power = float(_gowers_power_recursive(vals[None, :], table, s)[0])
        else:
            raise UsageError(f"неизвестный режим {method}")
    return max(float(power), 0.0) ** (1.0 / 2**s)


def _as_group_automorphism(A, k, n):
    """k×k матрицу превращаем в действие A ⊗ I_n на построчной развёртке."""
    if A.shape == (k * n, k * n):
        return A
    if A.shape == (k, k):
        return FpMatrix(np.kron(A.data, np.eye(n, dtype=np.int64)), A.p)
    raise DimensionMismatch(f"автоморфизм формы {A.shape} не действует на (F_p^{n})^{k}")


def von_neumann_check(fs, autos):
    """|E_{x,d} Π f_i(x + A_i d)| ≤ min_i ‖f_i‖_{U^{s−1}}."""
    s = len(fs)
    if s < 2 or len(autos) != s:
        raise UsageError("нужно s ≥ 2 функций и столько же автоморфизмов")
    f0 = fs[0]
    for f in fs:
        if not f.same_shape(f0):
            raise DimensionMismatch("функции заданы на разных группах")
    k, n = f0.k, f0.n
    mats = [_as_group_automorphism(A, k, n) for A in autos]
    for i, A in enumerate(mats):
        if not A.is_invertible():
            raise NotAutomorphism(f"A_{i + 1} вырождена")
        for j in range(i + 1, s):
            if not (A - mats[j]).is_invertible():
                raise NotAutomorphism(f"A_{i + 1} − A_{j + 1} вырождена")

    grid = f0.grid
    p = grid.p
    vals = [f.numeric().astype(np.complex128) for f in fs]
    guard(grid.size * grid.size, "von_neumann_check")
    total_re, total_im = [], []
    for d in grid.flat_points:
        product = np.ones(grid.size, dtype=np.complex128)
        for v, A in zip(vals, mats):
            cells = encode_vectors((grid.flat_points + A.data @ d) % p, p)
            product *= v[cells]
        total_re.append(math.fsum(product.real))
        total_im.append(math.fsum(product.imag))
    lhs = abs(complex(math.fsum(total_re), math.fsum(total_im))) / grid.size**2
    rhs = min(gowers_norm(f, s - 1) for f in fs)
    return {"lhs": lhs, "rhs": rhs, "holds": lhs <= rhs + FLOAT_SLACK}


# ---------------------------------------------------------------------------
# Гистограммы и равнораспределение
# ---------------------------------------------------------------------------

class CellHistogram:
    """Точная гистограмма векторов F_p^m; плотная при p^m ≤ 2^22."""

    def __init__(self, p, m):
        self.p, self.m = p, m
        self.dense = p**m <= 2**22
        self.counts = np.zeros(p**m, dtype=np.int64) if self.dense else Counter()
        self.pending = []
        self.pending_size = 0
        self.total = 0

    def add(self, vectors):
        codes = encode_vectors(vectors, self.p) if self.m else np.zeros(len(vectors), dtype=np.int64)
        self.total += len(codes)
        self.pending.append(codes)
        self.pending_size += len(codes)
        if self.pending_size >= 2**20:
            self._flush()

    def _flush(self):
        if not self.pending:
            return
        codes = np.concatenate(self.pending)
        self.pending, self.pending_size = [], 0
        if self.dense:
            self.counts += np.bincount(codes, minlength=self.counts.shape[0])
        else:
            uniq, cnt = np.unique(codes, return_counts=True)
            self.counts.update(dict(zip(uniq.tolist(), cnt.tolist())))

    def cells(self):
        self._flush()
        if self.dense:
            codes = np.nonzero(self.counts)[0]
            return codes, self.counts[codes]
        codes = np.array(sorted(self.counts), dtype=np.int64)
        return codes, np.array([self.counts[c] for c in codes.tolist()], dtype=np.int64)

    def decode(self, codes):
        out = np.empty((len(codes), self.m), dtype=np.int64)
        rest = codes.copy()
        for j in range(self.m):
            out[:, j] = rest % self.p
            rest //= self.p
        return out

    def report(self, predicted_dim, support_ok, label, reliable=True):
        codes, counts = self.cells()
        p = self.p
        prob = Fraction(1, p**predicted_dim)
        scale = p**predicted_dim
        deviation = float(max(abs(scale * int(c) / self.total - 1) for c in counts.tolist()))
        vectors = self.decode(codes)
        observed = rank_mod((vectors - vectors[0]) % p, p) if len(vectors) > 1 else 0
        return EquidistributionReport(
            bool(support_ok), prob, deviation, int(len(codes)), int(predicted_dim),
            int(observed), int(self.total), reliable, label,
        )


def linear_quadratic_distribution(Gamma, Phi, n, p):
    """Гистограмма (Γx, xᵀΦ_i x) по всем x ∈ F_p^n."""
    grid = Grid(p, 1, n)
    xs = grid.flat_points
    Gamma = np.asarray(Gamma, dtype=np.int64).reshape(-1, n) % p
    d1, d2 = Gamma.shape[0], len(Phi)
    lin = (xs @ Gamma.T) % p
    quad = [np.einsum("bi,ij,bj->b", xs, M.data, xs) % p for M in Phi]
    vectors = np.concatenate([lin] + [q[:, None] for q in quad], axis=1) if quad else lin

    left_null = nullspace(Gamma.T, p) if d1 else np.zeros((0, 0), dtype=np.int64)
    support_ok = not left_null.size or not np.any((lin @ left_null.T) % p)
    t = rank_mod(Gamma, p) if d1 else 0
    hist = CellHistogram(p, d1 + d2)
    hist.add(vectors)
    return hist.report(t + d2, support_ok, "linear-quadratic")


def pattern_tuple_distribution(factor, J, restrict_to_H=False):
    """🧮 Совместное распределение (𝖡(X), 𝖡(X+D), 𝖡(X+JD), 𝖡(X+(I+J)D)) по всем парам."""
    p, n, k = factor.p, factor.n, J.rows
    grid = Grid(p, k, n)
    guard(grid.size * grid.size, "pattern_tuple_distribution")
    d1, d2, d3 = factor.complexity
    reliable = spectral_ok(J)
    if not reliable:
        logging.warning(f"⚠️ J={J.to_list()} нарушает спектральное условие, предсказание ненадёжно")
    spaces = constraint_spaces(J)
    lam_perp_dim = spaces.lambda_perp("symmetric").dim
    lam_prime_perp_dim = spaces.lambda_perp("skew").dim

    if restrict_to_H:
        D_indices = np.nonzero(coset_labels(factor, grid) == 0)[0]
        linear_dim = k
    else:
        D_indices = np.arange(grid.size)
        linear_dim = spaces.Psi.dim
    predicted_dim = d1 * linear_dim + d2 * lam_perp_dim + d3 * lam_prime_perp_dim

    psi_check = spaces.Psi.membership_matrix()
    I = np.eye(k, dtype=np.int64)
    coeffs = [np.zeros((k, k), dtype=np.int64), I, J.data, I + J.data]
    per_point = factor.atom_dim(k)
    hist = CellHistogram(p, 4 * per_point)
    support_ok = True
    X = grid.points

    for d in D_indices:
        D = X[d]
        images = [factor_eval_batch(factor, (X + C @ D) % p) for C in coeffs]
        b1 = np.stack([img[0] for img in images], axis=2)  # (N, d₁, 4, k)
        if d1:
            lin = b1.reshape(grid.size, d1, 4 * k)
            if restrict_to_H:
                ok = np.all(lin == np.tile(lin[..., :k], 4))
            else:
                ok = not np.any(np.einsum("bdm,cm->bdc", lin, psi_check) % p)
            support_ok = support_ok and bool(ok)
        for family, lam in ((1, spaces.Lambda), (2, spaces.LambdaPrime)):
            if not images[0][family].shape[1] or not lam.dim:
                continue
            tuples = np.stack([img[family] for img in images], axis=2)  # (N, d, 4, k, k)
            flat = tuples.reshape(grid.size, tuples.shape[1], 4 * k * k)
            if np.any(np.einsum("bdm,cm->bdc", flat, lam.basis) % p):
                support_ok = False
        coords = np.concatenate(
            [image_coordinates(*img, k, p) for img in images], axis=1
        ) if per_point else np.zeros((grid.size, 0), dtype=np.int64)
        hist.add(coords)

    report = hist.report(predicted_dim, support_ok, "pattern-tuple", reliable)
    report.extra = {"restrict_to_H": restrict_to_H, "J": J.to_list(), "complexity": [d1, d2, d3]}
    logging.info(f"🧮 Распределение кортежей: клеток {report.cells_observed}, отклонение {report.max_multiplicative_deviation:.4f}")
    return report


def abstract_atom_distribution(factor, k=1):
    """(𝖡(X), 𝖡(D), 𝖡′(X,D)) с 𝖡′ = (X M_i Dᵀ, X N_j Dᵀ) против равномерного."""
    p, n = factor.p, factor.n
    grid = Grid(p, k, n)
    guard(grid.size * grid.size, "abstract_atom_distribution")
    d1, d2, d3 = factor.complexity
    mats = factor.B2 + factor.B3
    stack = np.stack([M.data for M in mats]) if mats else None
    dim = 2 * factor.atom_dim(k) + k * k * (d2 + d3)
    hist = CellHistogram(p, dim)
    X = grid.points
    own = image_coordinates(*factor_eval_batch(factor, X), k, p)
    for d in range(grid.size):
        D = X[d]
        parts = [own, np.broadcast_to(own[d], own.shape)]
        if stack is not None:
            mixed = np.einsum("bin,dnm,jm->bdij", X, stack, D) % p
            parts.append(mixed.reshape(grid.size, -1))
        hist.add(np.concatenate(parts, axis=1))
    report = hist.report(dim, True, "abstract-atoms")
    report.extra = {"complexity": [d1, d2, d3], "rank_linear": linear_rank(factor)}
    return report


def structured_pattern_average(f, factor, J):
    """E_{X,D}[f(X)f(X+D)f(X+JD)f(X+(I+J)D)·1_H(D)] против p^{−kd₁}·α⁴ с поправкой на отклонение."""
    if f.value_kind != EXACT:
        raise UsageError("структурированное среднее считается в точной арифметике")
    if not is_measurable(f, factor):
        raise NotMeasurable("функция не постоянна на атомах фактора")
    p, k = f.p, J.rows
    grid = f.grid
    I = FpMatrix.identity(k, p)
    coeffs = [FpMatrix.zeros(k, k, p), I, J, I + J]
    acc = _ProductSum(f, 4, "exact")
    H = np.nonzero(coset_labels(factor, grid) == 0)[0]
    total = Fraction(0)
    for d in H:
        total += _beta(acc, grid, coeffs, grid.points[d])
    lhs = total / grid.size

    alpha = f.mean()
    density = Fraction(1, p ** (k * len(factor.B1)))
    dist = pattern_tuple_distribution(factor, J, restrict_to_H=True)
    delta = Fraction(dist.max_multiplicative_deviation)
    result = {
        "lhs": lhs,
        "alpha": alpha,
        "deviation": delta,
        "support_full": dist.support_full,
        "tolerance": None,
        "bound": None,
        "holds": None,
    }
    if not (dist.support_ok and dist.support_full) or delta >= 1:
        logging.warning(
            f"⚠️ Кортежи атомов не равнораспределены (клеток {dist.cells_observed}, отклонение {float(delta):.3f}): оценка не определена"
        )
        return result
    # частота клетки ≥ (1−δ)·равномерная, а E f ≤ (1+δ)·среднее при равномерных атомах
    tol = 1 - (1 - delta) / (1 + delta) ** 4
    bound = density * alpha**4 * (1 - tol)
    result.update(tolerance=tol, bound=bound, holds=lhs >= bound)
    return result

