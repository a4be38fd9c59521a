"""🔺 Трёхточечные паттерны в конечных абелевых группах: множества Бора, сглаженный счёт,
разложение регулярности, поиск популярных разностей и подъём на отрезок [N]^k."""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from popdiff.config import guard
from popdiff.core.analysis import PatternCountReport, popular_search
from popdiff.core.ffalg import FpMatrix, all_vectors, det_mod, encode_vectors, is_prime
from popdiff.core.gridfn import GridFunction
from popdiff.core.patterns import PatternSpec
from popdiff.errors import InvariantViolation, NonConvergent, NoPrimeInWindow, NotAutomorphism, Singular, UsageError

CYCLIC = "Z_N"
VECTOR = "vector"


class FiniteGroup:
    """Z_N или (Z/pZ)^m; элементы: строки цифр, индекс как в all_vectors."""

    def __init__(self, modulus, dim=1, kind=CYCLIC):
        if kind == CYCLIC and dim != 1:
            raise UsageError("циклическая группа имеет размерность 1")
        if kind == VECTOR and not is_prime(modulus):
            raise UsageError(f"векторная группа требует простого модуля, получено {modulus}")
        if modulus < 2:
            raise UsageError("модуль группы должен быть не меньше 2")
        self.modulus = int(modulus)
        self.dim = int(dim)
        self.kind = kind
        self.size = guard(self.modulus**self.dim, f"группа {kind}")
        self.elements = all_vectors(self.dim, self.modulus)

    def __repr__(self):
        if self.kind == CYCLIC:
            return f"Z_{self.modulus}"
        return f"F_{self.modulus}^{self.dim}"

    def encode(self, vectors):
        return encode_vectors(np.asarray(vectors) % self.modulus, self.modulus)

    def as_element(self, x):
        return np.asarray(x, dtype=np.int64).reshape(self.dim) % self.modulus

    def shift(self, h):
        """Индексы x + h."""
        return self.encode(self.elements + self.as_element(h))

    def apply(self, M):
        """Индексы Mx."""
        return self.encode(self.elements @ np.asarray(M).T)

    def dual(self, M, xi):
        """Характер ξ∘M = Mᵀξ."""
        return (np.asarray(M).T @ self.as_element(xi)) % self.modulus

    def pairing(self, xi):
        """Числители ξ·x mod modulus по всем x."""
        return (self.elements @ self.as_element(xi)) % self.modulus

    def is_automorphism(self, M):
        M = np.asarray(M, dtype=np.int64)
        if self.kind == CYCLIC:
            return math.gcd(int(M[0, 0]) % self.modulus, self.modulus) == 1
        return det_mod(M, self.modulus) != 0

    def fourier(self, values):
        """f̂(ξ) = E_x f(x) e(−ξ·x)."""
        shaped = np.asarray(values, dtype=np.complex128).reshape((self.modulus,) * self.dim)
        return np.fft.fftn(shaped).reshape(-1) / self.size

    def inverse_fourier(self, coeffs):
        shaped = np.asarray(coeffs, dtype=np.complex128).reshape((self.modulus,) * self.dim)
        return np.fft.ifftn(shaped).reshape(-1) * self.size

    def convolve(self, f, g):
        """(f∗g)(x) = E_y f(y) g(x − y)."""
        out = self.inverse_fourier(self.fourier(f) * self.fourier(g))
        if not (np.iscomplexobj(f) or np.iscomplexobj(g)):
            return out.real
        return out


def fourier_transform(f, group):
    return group.fourier(_values(f, group))


def _as_multiplier(M, group):
    if isinstance(M, FpMatrix):
        M = M.data
    M = np.asarray(M, dtype=np.int64) % group.modulus
    if M.ndim == 0:
        M = M * np.eye(group.dim, dtype=np.int64) % group.modulus
    if M.shape != (group.dim, group.dim):
        raise UsageError(f"автоморфизм формы {M.shape} не действует на {group!r}")
    return M


@dataclass
class FiniteGroupSpec:
    group: FiniteGroup
    M1: np.ndarray
    M2: np.ndarray
    strict: bool = True

    def __post_init__(self):
        self.M1 = _as_multiplier(self.M1, self.group)
        self.M2 = _as_multiplier(self.M2, self.group)
        for label, M in (("M1", self.M1), ("M2", self.M2)):
            if not self.group.is_automorphism(M):
                raise NotAutomorphism(f"{label} не автоморфизм {self.group!r}")
        if self.strict and not self.group.is_automorphism((self.M1 - self.M2) % self.group.modulus):
            raise NotAutomorphism("M1 − M2 не автоморфизм")

    @classmethod
    def from_dict(cls, data):
        """{"kind":"Z_N","N":101,"M1":2,"M2":3} или {"kind":"vector","p":5,"n":3,"M1":[[...]],"M2":[[...]]}."""
        try:
            if data["kind"] == CYCLIC:
                group = FiniteGroup(int(data["N"]))
            elif data["kind"] == VECTOR:
                group = FiniteGroup(int(data["p"]), int(data["n"]), VECTOR)
            else:
                raise UsageError(f"неизвестный тип группы {data['kind']}")
            return cls(group, data["M1"], data["M2"], bool(data.get("strict", True)))
        except (KeyError, TypeError, ValueError) as e:
            raise UsageError(f"некорректное описание группы: {e}") from e

    def to_dict(self):
        out = {"kind": self.group.kind, "M1": self.M1.tolist(), "M2": self.M2.tolist()}
        if self.group.kind == CYCLIC:
            out["N"] = self.group.modulus
        else:
            out.update({"p": self.group.modulus, "n": self.group.dim})
        return out


def _values(f, group):
    if isinstance(f, GridFunction):
        values = f.numeric()
    else:
        values = np.asarray(f)
    if values.shape != (group.size,):
        raise UsageError(f"ожидалось {group.size} значений функции, получено {values.shape}")
    return values


# ---------------------------------------------------------------------------
# Множества Бора
# ---------------------------------------------------------------------------

def _as_radius(delta):
    delta = Fraction(str(delta)) if isinstance(delta, float) else Fraction(delta)
    if not 0 < delta <= Fraction(1, 2):
        raise UsageError(f"радиус Бора должен лежать в (0, 1/2], получено {delta}")
    return delta


@dataclass
class BohrSet:
    group: FiniteGroup
    S: tuple
    delta: Fraction
    mask: np.ndarray = field(repr=False)

    @property
    def size(self):
        return int(np.count_nonzero(self.mask))

    @property
    def measure(self):
        return Fraction(self.size, self.group.size)

    @property
    def members(self):
        return np.nonzero(self.mask)[0]

    def to_dict(self):
        return {
            "group": repr(self.group),
            "S": [list(map(int, xi)) for xi in self.S],
            "delta": self.delta,
            "size": self.size,
            "measure": self.measure,
        }


def bohr_set(group, S, delta):
    """🎯 B(S, δ) = {x : max_ξ ‖ξ·x‖_{R/Z} < δ} точно в целых числах."""
    delta = _as_radius(delta)
    chars = tuple(tuple(int(v) for v in group.as_element(xi)) for xi in S)
    chars = tuple(dict.fromkeys(chars))
    mask = np.ones(group.size, dtype=bool)
    m = group.modulus
    for xi in chars:
        r = group.pairing(xi)
        dist = np.minimum(r, m - r)
        if delta.denominator * m >= 2**62:
            dist = dist.astype(object)
        mask &= np.asarray(dist * delta.denominator < delta.numerator * m, dtype=bool)
    return BohrSet(group, chars, delta, mask)


def mu_measure(B):
    """μ_B = 1_B / μ(B)."""
    return B.mask.astype(np.float64) * (B.group.size / B.size)


def nu_measure(B):
    """ν = μ_B ∗ μ_B."""
    mu = mu_measure(B)
    nu = B.group.convolve(mu, mu)
    # отрицательный шум БПФ вне B + B
    return np.where(np.abs(nu) < 1e-12, 0.0, nu)


def derived_bohr(B, spec):
    """B′ = {r : M₁r, M₂r ∈ B(T, γ₁)} как B(T′, γ₁) с T′ = {ξ∘M₁} ∪ {ξ∘M₂}."""
    group = B.group
    for label, M in (("M1", spec.M1), ("M2", spec.M2)):
        if not group.is_automorphism(M):
            raise NotAutomorphism(f"{label} не автоморфизм {group!r}")
    T_prime = [group.dual(spec.M1, xi) for xi in B.S] + [group.dual(spec.M2, xi) for xi in B.S]
    derived = bohr_set(group, T_prime, B.delta)
    direct = B.mask[group.apply(spec.M1)] & B.mask[group.apply(spec.M2)]
    if not np.array_equal(direct, derived.mask):
        raise InvariantViolation("B′ по формуле не совпал с прямым определением")
    return derived


# ---------------------------------------------------------------------------
# Сглаженный счёт
# ---------------------------------------------------------------------------

def smoothed_3pt_count(f, spec, B, backend="direct"):
    """E_{x,d} f(x) f(x+M₁d) f(x+M₂d) ν(d)."""
    group = spec.group
    values = _values(f, group).astype(np.float64)
    nu = nu_measure(B)
    N = group.size
    if backend == "direct":
        support = np.nonzero(nu)[0]
        guard(N * len(support), "smoothed_3pt_count (прямой)")
        terms = []
        for d in support:
            D = group.elements[d]
            i1 = group.shift(spec.M1 @ D)
            i2 = group.shift(spec.M2 @ D)
            terms.append(nu[d] * math.fsum(values * values[i1] * values[i2]))
        return math.fsum(terms) / (N * N)
    if backend == "fourier":
        guard(N * N, "smoothed_3pt_count (Фурье)")
        fhat = group.fourier(values)
        nuhat = group.fourier(nu)
        neg = group.encode(-group.elements)
        dual1 = group.encode(group.elements @ spec.M1)  # M₁ᵀξ по строкам
        dual2 = group.encode(group.elements @ spec.M2)
        total = 0.0 + 0.0j
        for xi2 in range(N):
            xi3 = np.arange(N)
            first = fhat[neg[group.encode(group.elements[xi2] + group.elements[xi3])]]
            weight = nuhat[neg[group.encode(group.elements[dual1[xi2]] + group.elements[dual2[xi3]])]]
            total += fhat[xi2] * np.sum(first * fhat[xi3] * weight)
        return float(total.real)
    raise UsageError(f"неизвестный backend {backend}")


# ---------------------------------------------------------------------------
# Разложение регулярности
# ---------------------------------------------------------------------------

def default_growth(t):
    return math.exp(t / 8)


@dataclass
class RegularityDecomposition:
    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray
    T: tuple
    gamma1: float
    gamma2: float
    bohr: BohrSet
    epsilon: float
    stages: int
    lipschitz_constant: float

    def contracts(self, f, S0=()):
        group = self.bohr.group
        f = np.asarray(f, dtype=np.float64)
        f3_hat = np.abs(group.fourier(self.f3))
        t_set = set(self.T)
        return {
            "sum_matches": bool(np.allclose(self.f1 + self.f2 + self.f3, f, rtol=0, atol=1e-12)),
            "mean_gap": abs(math.fsum(self.f1) - math.fsum(f)) / group.size,
            "f1_range": (float(self.f1.min()), float(self.f1.max())),
            "f2_norm": math.sqrt(math.fsum(self.f2**2) / group.size),
            "f3_fourier_max": float(f3_hat.max()),
            "lipschitz_constant": self.lipschitz_constant,
            "S0_in_T": all(tuple(int(v) for v in group.as_element(xi)) in t_set for xi in S0),
        }


def lipschitz_constant(f1, B, epsilon):
    """max_{r∈B, x} |f₁(x+r) − f₁(x)| / ε."""
    group = B.group
    guard(group.size * B.size, "lipschitz_constant")
    worst = 0.0
    for r in B.members:
        worst = max(worst, float(np.max(np.abs(f1[group.shift(group.elements[r])] - f1))))
    return worst / epsilon


def regularity_decompose(f, group, epsilon, delta, S0=(), omega1=None, omega2=None):
    """🧱 f = f₁ + f₂ + f₃: f₁ = f ∗ ν, f₃: малые коэффициенты Фурье остатка, f₂: остальное."""
    values = _values(f, group).astype(np.float64)
    if values.min() < 0 or values.max() > 1:
        raise UsageError("разложение требует функции со значениями в [0,1]")
    omega1 = omega1 or default_growth
    omega2 = omega2 or default_growth
    cap = math.ceil(epsilon**-2 * delta**-2)
    fhat = group.fourier(values)
    gamma1 = 1.0 / omega1(len(S0) + 1.0 / delta + 1.0 / epsilon)

    for stage in range(1, cap + 1):
        gamma2 = 1.0 / omega2(1.0 / gamma1)
        large = np.nonzero(np.abs(fhat) >= gamma2)[0]
        T = tuple(dict.fromkeys(
            [tuple(int(v) for v in group.as_element(xi)) for xi in S0]
            + [tuple(int(v) for v in group.elements[i]) for i in large]
        ))
        B = bohr_set(group, T, Fraction(min(gamma1, 0.5)))
        f1 = group.convolve(values, nu_measure(B))
        ghat = group.fourier(values - f1)
        f3 = group.inverse_fourier(np.where(np.abs(ghat) <= gamma2, ghat, 0)).real
        f2 = values - f1 - f3
        norm = math.sqrt(math.fsum(f2**2) / group.size)
        logging.debug(f"🧱 Этап {stage}: γ₁={gamma1:.3g}, γ₂={gamma2:.3g}, |T|={len(T)}, ‖f₂‖={norm:.4g}")
        if norm <= epsilon:
            C = lipschitz_constant(f1, B, epsilon)
            logging.info(f"🧱 Разложение за {stage} этап(ов): |T|={len(T)}, |B|={B.size}, C={C:.4f}")
            return RegularityDecomposition(f1, f2, f3, T, gamma1, gamma2, B, epsilon, stage, C)
        gamma1 /= 2
    raise NonConvergent(f"‖f₂‖ > ε после {cap} этапов")


# ---------------------------------------------------------------------------
# Популярные разности
# ---------------------------------------------------------------------------

def popular_3pt_search(A, spec, epsilon):
    """🔎 #{x : x, x+M₁d, x+M₂d ∈ A} ≥ (α³ − ε)N по всем d ≠ 0."""
    if isinstance(A, GridFunction):
        if not isinstance(spec, PatternSpec):
            raise UsageError("для функции на (F_p^n)^k нужен PatternSpec")
        return popular_search(A, spec, epsilon, points=3, backend="exact")

    group = spec.group
    mask = _values(A, group).astype(bool)
    N = group.size
    guard(N * N, "popular_3pt_search")
    img1 = group.elements @ spec.M1.T
    img2 = group.elements @ spec.M2.T
    counts = {}
    for d in range(N):
        hit = mask & mask[group.encode(group.elements + img1[d])] & mask[group.encode(group.elements + img2[d])]
        counts[d] = Fraction(int(np.count_nonzero(hit)), N)
    alpha = Fraction(int(np.count_nonzero(mask)), N)
    eps = Fraction(str(epsilon)) if isinstance(epsilon, float) else Fraction(epsilon)
    threshold = alpha**3 - eps
    best, best_d, hits = None, None, 0
    for d in range(1, N):
        if best is None or counts[d] > best:
            best, best_d = counts[d], d
        hits += counts[d] >= threshold
    return PatternCountReport(alpha, counts, best, best_d, threshold, hits, 3, "exact", N - 1)


# ---------------------------------------------------------------------------
# Подъём на отрезок
# ---------------------------------------------------------------------------

def _int_det(M):
    """Определитель целочисленной матрицы над Q."""
    A = [[Fraction(int(v)) for v in row] for row in np.asarray(M)]
    k = len(A)
    det = Fraction(1)
    for c in range(k):
        piv = next((r for r in range(c, k) if A[r][c] != 0), None)
        if piv is None:
            return 0
        if piv != c:
            A[c], A[piv] = A[piv], A[c]
            det = -det
        det *= A[c][c]
        for r in range(c + 1, k):
            factor = A[r][c] / A[c][c]
            A[r] = [a - factor * b for a, b in zip(A[r], A[c])]
    return int(det)


def choose_prime(N, k, epsilon, dets, widen=True, max_widenings=10):
    """Простое p ∈ (N, (1+ε/k)N), не делящее ни один из определителей."""
    eps = Fraction(str(epsilon)) if isinstance(epsilon, float) else Fraction(epsilon)
    for _ in range(max_widenings + 1):
        upper = (1 + eps / k) * N
        q = N + 1
        while q < upper:
            if q > 2 and is_prime(q) and all(d % q for d in dets):
                return q, eps
            q += 1
        if not widen:
            break
        logging.warning(f"⚠️ В окне ({N}, {float(upper):.2f}) нет подходящего простого, ε удваивается")
        eps *= 2
    raise NoPrimeInWindow(f"нет простого в ({N}, (1+ε/k)N) для ε={epsilon}")


def _as_mask(A, N, k):
    if isinstance(A, np.ndarray) and A.dtype == bool and A.shape == (N,) * k:
        return A
    mask = np.zeros((N,) * k, dtype=bool)
    for point in A:
        point = tuple(int(v) for v in np.atleast_1d(point))
        if len(point) != k or not all(0 <= v < N for v in point):
            raise UsageError(f"точка {point} вне [N]^k")
        mask[point] = True
    return mask


def lift_to_interval(A, N, M1, M2, epsilon, k=1, widen=True, max_triples=10000):
    """🪜 Поиск популярной разности в [N]^k через вложение в (Z/pZ)^k."""
    M1 = np.asarray(M1, dtype=np.int64).reshape(k, k)
    M2 = np.asarray(M2, dtype=np.int64).reshape(k, k)
    dets = [_int_det(M) for M in (M1, M2, M1 - M2)]
    if not all(dets):
        raise Singular("M1, M2 и M1 − M2 должны быть обратимы над Q")
    guard(N**k, "lift_to_interval")
    mask = _as_mask(A, N, k)

    p, eps = choose_prime(N, k, epsilon, dets, widen)
    group = FiniteGroup(p, k, VECTOR)
    embedded = np.zeros((p,) * k, dtype=bool)
    embedded[tuple(slice(0, N) for _ in range(k))] = mask
    # индекс группы: координата 0 младшая, поэтому оси массива разворачиваются
    flat = np.transpose(embedded, tuple(range(k - 1, -1, -1))).reshape(-1)

    S0 = [row for row in M1] + [row for row in M2]
    trim = eps / k
    radius = min(eps / (2 * k), Fraction(1, 2))
    bohr = bohr_set(group, S0, radius)

    members = np.argwhere(mask)  # целые точки A
    num, den = trim.numerator, trim.denominator
    # отбрасываем x у границы: x_i ∉ [(ε/k)p, (1−ε/k)p]
    scaled = members * den
    inner = members[(scaled >= num * p).all(axis=1) & (scaled <= (den - num) * p).all(axis=1)]
    guard(bohr.size * max(1, len(members)), "lift_to_interval: перебор разностей")

    best = {"d": None, "count": -1, "count_mod_p": 0, "triples": []}
    half = p // 2
    for idx in bohr.members:
        if idx == 0:
            continue
        d = group.elements[idx]
        d_c = np.where(d > half, d - p, d)
        steps = [M1 @ d_c, M2 @ d_c]
        # шаги |(M_i d)_j| < δ₀p, а x_i ∈ [2δ₀p, (1−2δ₀)p]: x + шаг не переходит через p
        if any(np.any(np.abs(s) * radius.denominator > radius.numerator * p) for s in steps):
            continue
        mod_hits = flat & flat[group.shift(M1 @ d)] & flat[group.shift(M2 @ d)]
        count_mod_p = int(np.count_nonzero(mod_hits))
        triples = []
        for x in inner:
            pts = [x, x + steps[0], x + steps[1]]
            if all(0 <= v < N for pt in pts for v in pt) and all(mask[tuple(pt)] for pt in pts[1:]):
                triples.append(tuple(tuple(int(v) for v in pt) for pt in pts))
        if len(triples) > best["count"]:
            best = {"d": d_c, "count": len(triples), "count_mod_p": count_mod_p, "triples": triples}

    audit = all(
        all(0 <= v < N for pt in tri for v in pt) and all(mask[pt] for pt in tri)
        for tri in best["triples"]
    )
    alpha = Fraction(int(mask.sum()), N**k)
    report = {
        "N": N,
        "k": k,
        "p": p,
        "epsilon": Fraction(str(epsilon)) if isinstance(epsilon, float) else Fraction(epsilon),
        "epsilon_used": eps,
        "bohr_radius": radius,
        "bohr_size": bohr.size,
        "alpha": alpha,
        "best_d": None if best["d"] is None else best["d"].tolist(),
        "lifted_count": max(best["count"], 0),
        "count_mod_p": best["count_mod_p"],
        "reference": float(alpha**3) * N**k,
        "audit_passed": audit,
        "triples": best["triples"][:max_triples],
    }
    logging.info(f"🪜 Подъём: p={p}, |B|={bohr.size}, лучших троек {report['lifted_count']}, аудит {audit}")
    return report
