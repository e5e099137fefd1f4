"""Maxwellian-weighted Hermite discretization of velocity space.

Coefficients are taken against the orthonormal functions

    psi_n(xi) = He_n1(xi_1) He_n2(xi_2) He_n3(xi_3) / sqrt(n1! n2! n3!) * M(xi)^{1/2}

with ``He`` the probabilists' Hermite polynomials and ``M`` the normalized
Maxwellian (2 pi)^{-3/2} exp(-|xi|^2 / 2).  In this basis multiplication by
``xi_i`` is the three-term ladder, the five collision invariants are exact
coefficient vectors, and every polynomial moment is a fixed row vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import factorial, comb, sqrt, pi
from pathlib import Path

import numpy as np
from numpy.polynomial import hermite_e
from scipy.linalg import eigh, null_space
from scipy.special import erf

__all__ = [
    "VelocityBasis",
    "CollisionOperator",
    "build_basis",
    "collision_frequency",
    "build_collision",
    "project_P",
    "theta_moment",
    "lambda_moment",
    "load_matrix_file",
    "save_matrix_file",
]


def _graded_indices(degree_cap):
    out = []
    for d in range(degree_cap + 1):
        for n1 in range(d, -1, -1):
            for n2 in range(d - n1, -1, -1):
                out.append((n1, n2, d - n1 - n2))
    return out


def _normalized_hermite(x, nmax):
    """Values of He_n(x)/sqrt(n!) for n = 0..nmax, shape (nmax+1, len(x))."""
    x = np.asarray(x, dtype=float)
    out = np.empty((nmax + 1,) + x.shape)
    out[0] = 1.0
    if nmax >= 1:
        out[1] = x
    for n in range(1, nmax):
        out[n + 1] = (x * out[n] - sqrt(n) * out[n - 1]) / sqrt(n + 1)
    return out


@dataclass(frozen=True, eq=False)
class VelocityBasis:
    degree_cap: int
    index_map: tuple
    transport: np.ndarray  # (3, dim, dim)
    null_vectors: np.ndarray  # (5, dim): e_a, e_b1, e_b2, e_b3, e_c
    quad_nodes: np.ndarray  # (nq, 3)
    quad_weights: np.ndarray  # (nq,), sum to 1 against M
    quad_values: np.ndarray  # (nq, dim) normalized Hermite products at nodes
    _position: dict = field(repr=False)

    @property
    def dim(self):
        return len(self.index_map)

    def position(self, n):
        """Flat index of the multi-index ``n``."""
        return self._position[tuple(n)]

    @cached_property
    def projection(self):
        """Orthogonal projector onto the collision invariants."""
        return self.null_vectors.T @ self.null_vectors

    @cached_property
    def micro_basis(self):
        """Orthonormal columns spanning range(I - P)."""
        return null_space(self.null_vectors)

    def monomial(self, powers):
        """Coefficient vector of xi^powers * M^{1/2}."""
        if sum(powers) > self.degree_cap:
            raise ValueError(
                f"monomial of degree {sum(powers)} exceeds degree_cap={self.degree_cap}"
            )
        factors = []
        for p in powers:
            c = hermite_e.poly2herme([0.0] * p + [1.0])
            factors.append({n: c[n] * sqrt(factorial(n)) for n in range(len(c)) if c[n] != 0.0})
        v = np.zeros(self.dim)
        for n1, c1 in factors[0].items():
            for n2, c2 in factors[1].items():
                for n3, c3 in factors[2].items():
                    v[self.position((n1, n2, n3))] += c1 * c2 * c3
        return v

    def synthesize(self, coeffs, xi):
        """Evaluate sum_n coeffs[n] psi_n at velocity points ``xi`` of shape (..., 3)."""
        xi = np.asarray(xi, dtype=float)
        vals = self._values(xi.reshape(-1, 3))
        gauss = (2 * pi) ** -0.75 * np.exp(-0.25 * np.sum(xi.reshape(-1, 3) ** 2, axis=1))
        return ((vals @ np.asarray(coeffs)) * gauss).reshape(xi.shape[:-1])

    def _values(self, pts):
        h = [_normalized_hermite(pts[:, i], self.degree_cap + 1) for i in range(3)]
        cols = [h[0][n1] * h[1][n2] * h[2][n3] for (n1, n2, n3) in self.index_map]
        return np.stack(cols, axis=1)

    # moment row vectors -------------------------------------------------

    @cached_property
    def a_row(self):
        return self.monomial((0, 0, 0))

    @cached_property
    def b_rows(self):
        return np.stack([self.monomial(_unit(i)) for i in range(3)])

    @cached_property
    def c_row(self):
        sq = sum(self.monomial(_unit(i, 2)) for i in range(3))
        return (sq - 3.0 * self.monomial((0, 0, 0))) / 6.0

    @cached_property
    def theta_rows(self):
        """Row vectors of Theta_ij, shape (3, 3, dim)."""
        rows = np.empty((3, 3, self.dim))
        one = self.monomial((0, 0, 0))
        for i in range(3):
            for j in range(3):
                p = np.add(_unit(i), _unit(j))
                rows[i, j] = self.monomial(tuple(p)) - one
        return rows

    @cached_property
    def lambda_rows(self):
        """Row vectors of Lambda_i, shape (3, dim); needs degree_cap >= 3."""
        if self.degree_cap < 3:
            raise ValueError("Lambda moments need degree_cap >= 3")
        rows = np.empty((3, self.dim))
        for i in range(3):
            cubic = sum(self.monomial(tuple(np.add(_unit(i), _unit(l, 2)))) for l in range(3))
            rows[i] = (cubic - 5.0 * self.monomial(_unit(i))) / 10.0
        return rows


def _unit(i, power=1):
    p = [0, 0, 0]
    p[i] = power
    return tuple(p)


def build_basis(degree_cap):
    """Tensor Hermite basis truncated at total degree ``degree_cap``.

    Quadrature uses ``degree_cap + 4`` Gauss-Hermite points per axis.
    """
    if int(degree_cap) != degree_cap or degree_cap < 2:
        raise ValueError(f"degree_cap must be an integer >= 2, got {degree_cap!r}")
    degree_cap = int(degree_cap)
    index_map = tuple(_graded_indices(degree_cap))
    position = {n: i for i, n in enumerate(index_map)}
    dim = len(index_map)
    assert dim == comb(degree_cap + 3, 3)

    transport = np.zeros((3, dim, dim))
    for col, n in enumerate(index_map):
        for i in range(3):
            up = list(n)
            up[i] += 1
            if tuple(up) in position:
                transport[i, position[tuple(up)], col] = sqrt(n[i] + 1)
            if n[i] > 0:
                down = list(n)
                down[i] -= 1
                transport[i, position[tuple(down)], col] = sqrt(n[i])

    x, w = hermite_e.hermegauss(degree_cap + 4)
    w = w / sqrt(2 * pi)
    grid = np.stack(np.meshgrid(x, x, x, indexing="ij"), axis=-1).reshape(-1, 3)
    weights = np.einsum("i,j,k->ijk", w, w, w).reshape(-1)

    basis = VelocityBasis(
        degree_cap=degree_cap,
        index_map=index_map,
        transport=transport,
        null_vectors=np.zeros((5, dim)),
        quad_nodes=grid,
        quad_weights=weights,
        quad_values=np.zeros((0, dim)),
        _position=position,
    )
    null = np.zeros((5, dim))
    null[0] = basis.monomial((0, 0, 0))
    for i in range(3):
        null[1 + i] = basis.monomial(_unit(i))
    null[4] = (sum(basis.monomial(_unit(i, 2)) for i in range(3)) - 3.0 * null[0]) / sqrt(6.0)
    object.__setattr__(basis, "null_vectors", null)
    object.__setattr__(basis, "quad_values", basis._values(grid))
    return basis


def collision_frequency(speed):
    """Hard-sphere collision frequency nu(|xi|).

    Closed form of 2 pi E|xi - Z| with Z standard normal in R^3.  Accepts
    scalars or arrays.
    """
    s = np.asarray(speed, dtype=float)
    if np.any(s < 0) or np.any(~np.isfinite(s)):
        raise ValueError("speed must be finite and nonnegative")
    small = s < 1e-3
    safe = np.where(small, 1.0, s)
    mean_abs = sqrt(2 / pi) * np.exp(-0.5 * safe**2) + (safe + 1 / safe) * erf(safe / sqrt(2))
    series = sqrt(2 / pi) * (2.0 + s**2 / 3.0)
    out = 2 * pi * np.where(small, series, mean_abs)
    return out if out.ndim else float(out)


@dataclass(frozen=True, eq=False)
class CollisionOperator:
    """Symmetric negative semidefinite L with the five invariants in its kernel.

    ``weight`` is the nu-weight Gram matrix W used for coercivity, and
    ``coercivity`` is the largest lambda0 with -v.Lv >= lambda0 v.Wv on
    microscopic v.
    """

    kind: str
    matrix: np.ndarray
    weight: np.ndarray
    nu0: float | None
    coercivity: float
    gap: float  # smallest eigenvalue of -L on range(I - P)


def _micro_pencil(basis, L, W):
    Q = basis.micro_basis
    negL = -(Q.T @ L @ Q)
    negL = 0.5 * (negL + negL.T)
    Wq = Q.T @ W @ Q
    Wq = 0.5 * (Wq + Wq.T)
    gap = float(np.linalg.eigvalsh(negL)[0])

    lam0 = float(eigh(negL, Wq, eigvals_only=True)[0])
    return lam0, gap


def nu_gram(basis):
    """Gram matrix of multiplication by nu(|xi|), by tensor Gauss-Hermite quadrature."""
    nu = collision_frequency(np.linalg.norm(basis.quad_nodes, axis=1))
    V = basis.quad_values
    N = V.T @ ((basis.quad_weights * nu)[:, None] * V)
    return 0.5 * (N + N.T)


def build_collision(basis, kind="const", nu0=1.0, path=None):
    """Assemble the linearized collision operator on ``basis``.

    ``kind`` is one of ``"const"`` (L = -nu0 (I - P)), ``"variable"``
    (L = -(I - P) N (I - P) with N the nu-multiplication Gram matrix) or
    ``"external"`` (matrix read from ``path``, symmetrized and projected
    onto range(I - P)).
    """
    dim = basis.dim
    P = basis.projection
    I = np.eye(dim)
    if kind == "const":
        if not nu0 > 0:
            raise ValueError("nu0 must be positive")
        L = -nu0 * (I - P)
        W = nu0 * I
        return CollisionOperator("const", L, W, float(nu0), 1.0, float(nu0))
    if kind == "variable":
        N = nu_gram(basis)
        L = -(I - P) @ N @ (I - P)
        L = 0.5 * (L + L.T)
        lam0, gap = _micro_pencil(basis, L, N)
        return CollisionOperator("variable", L, N, None, lam0, gap)
    if kind == "external":
        if path is None:
            raise ValueError("external collision operator needs a path")
        raw = load_matrix_file(path)
        if raw.shape != (dim, dim):
            raise ValueError(f"external matrix has shape {raw.shape}, basis needs ({dim}, {dim})")
        L = 0.5 * (raw + raw.T)
        L = (I - P) @ L @ (I - P)
        L = 0.5 * (L + L.T)
        lam0, gap = _micro_pencil(basis, L, I)
        if not lam0 > 1e-12:
            raise ValueError(
                f"external matrix is not negative definite on range(I-P): lambda0={lam0:.3e}"
            )
        return CollisionOperator("external", L, I, None, lam0, gap)
    raise ValueError(f"unknown collision kind {kind!r}")


def load_matrix_file(path):
    """Read a square real matrix.

    Text files start with a ``dim=<n>`` line followed by n*n whitespace
    separated entries in row-major order.  Files ending in ``.npy`` are read
    with :func:`numpy.load`.
    """
    path = Path(path)
    if path.suffix == ".npy":
        return np.asarray(np.load(path), dtype=float)
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("dim="):
            raise ValueError(f"{path}: expected 'dim=<n>' header, got {header!r}")
        n = int(header[4:])
        data = np.array(fh.read().split(), dtype=float)
    if data.size != n * n:
        raise ValueError(f"{path}: expected {n * n} entries, found {data.size}")
    return data.reshape(n, n)


def save_matrix_file(path, matrix):
    """Write ``matrix`` in the format read by :func:`load_matrix_file`."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError("matrix must be square")
    if Path(path).suffix == ".npy":
        np.save(path, matrix)
        return
    n = matrix.shape[0]
    with open(path, "w") as fh:
        fh.write(f"dim={n}\n")
        for row in matrix:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def _check_length(basis, coeffs):
    coeffs = np.asarray(coeffs)
    if coeffs.shape[-1] != basis.dim:
        raise ValueError(f"coefficient vector has length {coeffs.shape[-1]}, expected {basis.dim}")
    return coeffs


def project_P(basis, coeffs):
    """Split ``coeffs`` into macroscopic moments (a, b, c) and the microscopic part."""
    u = _check_length(basis, coeffs)
    a = basis.a_row @ u
    b = basis.b_rows @ u
    c = basis.c_row @ u
    micro = u - basis.projection @ u
    return a, b, c, micro


def theta_moment(basis, coeffs):
    u = _check_length(basis, coeffs)
    return np.einsum("ijn,n->ij", basis.theta_rows, u)


def lambda_moment(basis, coeffs):
    u = _check_length(basis, coeffs)
    return basis.lambda_rows @ u
