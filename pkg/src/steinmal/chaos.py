"""Finite-dimensional Wiener chaos algebra of order <= 2.

Over an orthonormal basis of size M, an order-2 multiple integral with
symmetric coefficient matrix K evaluates on a standard Gaussian vector xi as
xi' K xi - tr K (so I2(e_i (x) e_i) = xi_i^2 - 1 and the symmetrized
off-diagonal pair gives xi_i xi_j).  First-order integrals are linear forms.
The Malliavin derivative is the ordinary gradient in xi, the pseudo-inverse
of the Ornstein-Uhlenbeck generator divides the order-n component by n, and
the 1-contraction of two order-2 kernels is their matrix product.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "ChaosVariable",
    "symmetrize",
    "divergence_linear",
    "isometry_inner",
    "contract1",
    "contract1_raw",
    "gradient_inner_identity",
    "build_gamma_kernels",
    "exact_cross_moment",
    "contraction_norm_combinatorial",
    "contraction_norm_matrix",
    "gradient_inner_second_moment",
    "kernel_to_csv",
    "kernel_from_csv",
]


def symmetrize(k: np.ndarray) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    return 0.5 * (k + k.T)


def _check_square(k: np.ndarray, m: Optional[int] = None) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ValueError(f"kernel must be square, got shape {k.shape}")
    if m is not None and k.shape[0] != m:
        raise ValueError(f"kernel dimension {k.shape[0]} != {m}")
    if not np.all(np.isfinite(k)):
        raise ValueError("kernel has non-finite entries")
    return k


@dataclass
class ChaosVariable:
    """c0 + I1(first) + I2(second) in M coordinates.

    ``second`` is symmetrized on construction.  Expectation equals c0 and
    the variance is |first|^2 + 2 ||second||_F^2.
    """

    dimension: int
    c0: float = 0.0
    first: Optional[np.ndarray] = None
    second: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        if self.first is None:
            self.first = np.zeros(self.dimension)
        self.first = np.asarray(self.first, dtype=float)
        if self.first.shape != (self.dimension,):
            raise ValueError("first-order coefficients have wrong length")
        if not np.all(np.isfinite(self.first)):
            raise ValueError("first-order coefficients must be finite")
        if self.second is None:
            self.second = np.zeros((self.dimension, self.dimension))
        self.second = symmetrize(_check_square(self.second, self.dimension))

    def _check_xi(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if xi.shape[-1] != self.dimension:
            raise ValueError(
                f"xi has dimension {xi.shape[-1]}, expected {self.dimension}")
        return xi

    def value(self, xi) -> np.ndarray:
        """c0 + first . xi + xi' K xi - tr K (vectorized over leading axes)."""
        xi = self._check_xi(xi)
        t = xi @ self.second
        quad = np.sum(t * xi, axis=-1) - np.trace(self.second)
        return self.c0 + xi @ self.first + quad

    def gradient(self, xi) -> np.ndarray:
        """Malliavin derivative in coordinates: first + 2 K xi."""
        xi = self._check_xi(xi)
        return self.first + 2.0 * (xi @ self.second)

    def inverse_generator(self) -> "ChaosVariable":
        """Apply the pseudo-inverse of the OU generator to the centered part."""
        return ChaosVariable(self.dimension, 0.0, self.first.copy(),
                             0.5 * self.second)

    def variance(self) -> float:
        return float(self.first @ self.first +
                     2.0 * np.sum(self.second * self.second))

    @classmethod
    def pure_second(cls, kernel: np.ndarray) -> "ChaosVariable":
        kernel = _check_square(kernel)
        return cls(kernel.shape[0], 0.0, None, kernel)

    @classmethod
    def pure_first(cls, coeff: np.ndarray) -> "ChaosVariable":
        coeff = np.asarray(coeff, dtype=float)
        return cls(len(coeff), 0.0, coeff, None)


def divergence_linear(field_matrix: np.ndarray, xi) -> np.ndarray:
    """Divergence (Skorokhod integral) of the linear field u(xi) = B xi.

    For symmetric B this equals the pure second chaos with kernel B evaluated
    at xi, which is exactly the identity delta(D(-L)^{-1}(F - EF)) = F - EF
    on linear fields.
    """
    b = _check_square(field_matrix)
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != b.shape[0]:
        raise ValueError("dimension mismatch between field and xi")
    return np.sum((xi @ b) * xi, axis=-1) - np.trace(b)


def isometry_inner(k1: np.ndarray, k2: np.ndarray) -> float:
    """E[I2(k1) I2(k2)] = 2 tr(k1 k2) for symmetric kernels."""
    k1 = _check_square(k1)
    k2 = _check_square(k2, k1.shape[0])
    return 2.0 * float(np.sum(k1 * k2.T))


def contract1_raw(k1: np.ndarray, k2: np.ndarray) -> np.ndarray:
    """1-contraction of order-2 coefficient matrices: the matrix product."""
    k1 = _check_square(k1)
    k2 = _check_square(k2, k1.shape[0])
    return k1 @ k2


def contract1(k1: np.ndarray, k2: np.ndarray) -> np.ndarray:
    """Symmetrized 1-contraction, the kernel usable inside an order-2 integral."""
    return symmetrize(contract1_raw(k1, k2))


def gradient_inner_identity(k1: np.ndarray, k2: np.ndarray, xi):
    """Both sides of <DU, DV> = 2 E[UV] + 4 I2(k1 o k2) for pure second chaos.

    Returns (lhs, rhs); they agree identically in exact arithmetic.
    """
    k1 = _check_square(k1)
    k2 = _check_square(k2, k1.shape[0])
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != k1.shape[0]:
        raise ValueError("dimension mismatch")
    lhs = 4.0 * np.sum((xi @ k1) * (xi @ k2), axis=-1)
    q = contract1(k1, k2)
    tr = float(np.trace(contract1_raw(k1, k2)))
    rhs = 4.0 * tr + 4.0 * (np.sum((xi @ q) * xi, axis=-1) - np.trace(q))
    return lhs, rhs


def _validate_nm(n: int, m: int):
    if n < 2:
        raise ValueError("need n >= 2")
    if not 1 <= m <= n:
        raise ValueError(f"overlap size must satisfy 1 <= m <= {n}, got {m}")


def build_gamma_kernels(n: int, m: int):
    """Coefficient matrices of the two overlapping quadratic averages.

    The first variable averages symmetrized pair products over basis vectors
    1..n; the second uses a basis sharing the first m coordinates, with its
    remaining n - m vectors mapped to fresh coordinates n+1 .. 2n-m.
    Returns (kernel_u, kernel_v, total_dimension).
    """
    _validate_nm(n, m)
    dim = 2 * n - m
    coeff = 1.0 / (n - 1)
    ku = np.zeros((dim, dim))
    ku[:n, :n] = coeff
    np.fill_diagonal(ku[:n, :n], 0.0)
    kv = np.zeros((dim, dim))
    idx = np.concatenate([np.arange(m), np.arange(n, dim)])
    block = np.full((n, n), coeff)
    np.fill_diagonal(block, 0.0)
    kv[np.ix_(idx, idx)] = block
    return ku, kv, dim


def exact_cross_moment(n: int, m: int) -> float:
    """E[UV] for the overlapping pair: 2 m (m - 1) / (n - 1)^2."""
    _validate_nm(n, m)
    return 2.0 * m * (m - 1) / (n - 1) ** 2


def contraction_norm_combinatorial(n: int, m: int) -> float:
    """Closed-form overlap count for the squared contraction norm.

    Known to disagree with the direct matrix value by a convention-dependent
    factor (4.5 vs 1.125 at n = m = 3); both are reported and the matrix
    value is the ground truth for variance computations.
    """
    _validate_nm(n, m)
    return 4.0 * m * (m - 1) / (n - 1) ** 4 * ((n - 1) + (m - 2) * (n - 2))


def contraction_norm_matrix(n: int, m: int) -> float:
    """Squared Frobenius norm of the explicit kernel product."""
    ku, kv, _ = build_gamma_kernels(n, m)
    prod = contract1_raw(ku, kv)
    return float(np.sum(prod * prod))


def gradient_inner_second_moment(n: int, m: int) -> float:
    """E[<DU, DV>^2] via Gaussian quadratic-form moments.

    <DU, DV> = 4 xi' Q xi with Q = sym(ku kv), and for a symmetric quadratic
    form E[(xi' Q xi)^2] = (tr Q)^2 + 2 ||Q||_F^2.
    """
    ku, kv, _ = build_gamma_kernels(n, m)
    q = contract1(ku, kv)
    tr = float(np.trace(q))
    frob2 = float(np.sum(q * q))
    return 16.0 * (tr * tr + 2.0 * frob2)


def kernel_to_csv(kernel: np.ndarray, path) -> None:
    kernel = _check_square(kernel)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        for row in kernel:
            writer.writerow([repr(float(v)) for v in row])


def kernel_from_csv(path) -> np.ndarray:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    return _check_square(np.array(rows))
