"""Per-Fourier-mode generators of the linearized kinetic dynamics.

For a wave vector ``k`` the flattened mode state is ``x = [u, E, B]`` (velocity
coefficients followed by the two field vectors) and the dynamics read
``dx/dt = A(k) x``.  Supported models:

``be``
    linearized Boltzmann, ``x = u``.
``vpb1``
    one-species Vlasov-Poisson-Boltzmann; the field is eliminated through
    ``E = -i k a / |k|^2`` and ``x = u``.
``vmb1``
    one-species Vlasov-Maxwell-Boltzmann, ``x = [u, E, B]``.
``vmb2-rate``
    two species sharing one basis, ``x = [u+, u-, E, B]``, with a mixture
    relaxation whose invariants are the two densities and the total momentum
    and energy.  Used for decay-rate comparison only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import null_space

from .velocity_basis import CollisionOperator, VelocityBasis

__all__ = [
    "MODELS",
    "ModelSpec",
    "ModeState",
    "Generator",
    "assemble_generator",
    "cross_matrix",
    "constraint_residuals",
    "make_admissible",
    "spectral_abscissa",
    "moment_residuals",
]

MODELS = ("be", "vpb1", "vmb1", "vmb2-rate")
_ALIASES = {"vmb2": "vmb2-rate", "vmb2rate": "vmb2-rate"}


def _model_id(name):
    name = str(name).lower()
    name = _ALIASES.get(name, name)
    if name not in MODELS:
        raise ValueError(f"unknown model {name!r}; choose from {MODELS}")
    return name


@dataclass(frozen=True)
class ModelSpec:
    model: str
    collision: CollisionOperator
    notes: str = ""

    def __post_init__(self):
        object.__setattr__(self, "model", _model_id(self.model))

    @property
    def has_fields(self):
        return self.model in ("vmb1", "vmb2-rate")

    @property
    def species(self):
        return 2 if self.model == "vmb2-rate" else 1


def state_size(model, dim):
    model = _model_id(model)
    if model in ("be", "vpb1"):
        return dim
    if model == "vmb1":
        return dim + 6
    return 2 * dim + 6


def cross_matrix(k):
    """Real matrix C with C @ v = k x v."""
    k1, k2, k3 = np.asarray(k, dtype=float)
    return np.array([[0.0, -k3, k2], [k3, 0.0, -k1], [-k2, k1, 0.0]])


@dataclass
class ModeState:
    """One Fourier mode.  ``u_hat`` has length dim (2*dim for vmb2-rate)."""

    model: str
    k: np.ndarray
    u_hat: np.ndarray
    E_hat: np.ndarray | None = None
    B_hat: np.ndarray | None = None

    def __post_init__(self):
        self.model = _model_id(self.model)
        self.k = np.asarray(self.k, dtype=float)
        self.u_hat = np.asarray(self.u_hat, dtype=complex)
        if self.model in ("vmb1", "vmb2-rate"):
            self.E_hat = (
                np.zeros(3, complex) if self.E_hat is None else np.asarray(self.E_hat, complex)
            )
            self.B_hat = (
                np.zeros(3, complex) if self.B_hat is None else np.asarray(self.B_hat, complex)
            )
        else:
            self.E_hat = None
            self.B_hat = None

    def to_vector(self):
        if self.E_hat is None:
            return self.u_hat.copy()
        return np.concatenate([self.u_hat, self.E_hat, self.B_hat])

    @classmethod
    def from_vector(cls, model, k, x, dim):
        model = _model_id(model)
        x = np.asarray(x, dtype=complex)
        if x.shape != (state_size(model, dim),):
            raise ValueError(
                f"state vector has shape {x.shape}, expected ({state_size(model, dim)},)"
            )
        if model in ("be", "vpb1"):
            return cls(model, k, x)
        nu = dim * (2 if model == "vmb2-rate" else 1)
        return cls(model, k, x[:nu], x[nu : nu + 3], x[nu + 3 : nu + 6])

    def electric_field(self, basis):
        """E_hat, reconstructed from the density for vpb1; zero for be."""
        if self.model == "vpb1":
            kk = self.k @ self.k
            return -1j * self.k * (basis.a_row @ self.u_hat) / kk
        if self.model == "be":
            return np.zeros(3, complex)
        return self.E_hat

    def charge(self, basis):
        if self.model == "vmb2-rate":
            d = basis.dim
            return basis.a_row @ self.u_hat[:d] - basis.a_row @ self.u_hat[d:]
        return basis.a_row @ self.u_hat[: basis.dim]


def _mixture_projector(basis):
    d = basis.dim
    ea, eb, ec = basis.null_vectors[0], basis.null_vectors[1:4], basis.null_vectors[4]
    vecs = [np.concatenate([ea, 0 * ea]), np.concatenate([0 * ea, ea])]
    for v in list(eb) + [ec]:
        vecs.append(np.concatenate([v, v]) / np.sqrt(2.0))
    V = np.stack(vecs)
    assert V.shape == (6, 2 * d)
    return V.T @ V


def mixture_collision(basis, collision):
    """Two-species relaxation -(I - P2) (W + W) (I - P2) built from ``collision.weight``."""
    if collision.kind == "external":
        raise ValueError("vmb2-rate supports only const and variable collision kinds")
    d = basis.dim
    P2 = _mixture_projector(basis)
    W2 = np.zeros((2 * d, 2 * d))
    W2[:d, :d] = collision.weight
    W2[d:, d:] = collision.weight
    Q = np.eye(2 * d) - P2
    L2 = -Q @ W2 @ Q
    return 0.5 * (L2 + L2.T)


@dataclass(frozen=True, eq=False)
class Generator:
    """Dense complex generator ``A`` with ``dx/dt = A x`` for one mode."""

    A: np.ndarray
    k: np.ndarray
    model: ModelSpec
    basis: VelocityBasis = field(repr=False)
    collision_matrix: np.ndarray = field(repr=False)

    @property
    def size(self):
        return self.A.shape[0]

    @cached_property
    def energy_gram(self):
        """Gram matrix S of the physical energy x^H S x."""
        S = np.eye(self.size)
        if self.model.model == "vpb1":
            a = self.basis.a_row
            S = S + np.outer(a, a) / (self.k @ self.k)
        return S

    @cached_property
    def constraint_rows(self):
        """Rows g with g @ x = (i k.E - charge, i k.B); empty for be and vpb1."""
        d = self.basis.dim
        m = self.model.model
        if m in ("be", "vpb1"):
            return np.zeros((0, self.size), complex)
        G = np.zeros((2, self.size), complex)
        if m == "vmb1":
            G[0, :d] = -self.basis.a_row
            off = d
        else:
            G[0, :d] = -self.basis.a_row
            G[0, d : 2 * d] = self.basis.a_row
            off = 2 * d
        G[0, off : off + 3] = 1j * self.k
        G[1, off + 3 : off + 6] = 1j * self.k
        return G

    @cached_property
    def tangent_basis(self):
        """Orthonormal columns spanning the constraint manifold {G x = 0}."""
        G = self.constraint_rows
        if G.shape[0] == 0:
            return np.eye(self.size, dtype=complex)
        return null_space(G)

    @cached_property
    def dissipative_part(self):
        """Hermitian (S A + A^H S) / 2."""
        S = self.energy_gram
        H = S @ self.A
        return 0.5 * (H + H.conj().T)

    def kinetic_slices(self):
        d = self.basis.dim
        return [slice(s * d, (s + 1) * d) for s in range(self.model.species)]

    def field_slices(self):
        if not self.model.has_fields:
            return None, None
        off = self.model.species * self.basis.dim
        return slice(off, off + 3), slice(off + 3, off + 6)

    def state(self, x):
        return ModeState.from_vector(self.model.model, self.k, x, self.basis.dim)


def assemble_generator(k, model, basis):
    """Build ``A(k)`` for ``model`` (a :class:`ModelSpec`) on ``basis``."""
    k = np.asarray(k, dtype=float)
    if k.shape != (3,):
        raise ValueError("k must be a real 3-vector")
    L = model.collision.matrix
    d = basis.dim
    if L.shape != (d, d):
        raise ValueError(f"collision matrix is {L.shape}, basis dimension is {d}")
    kT = np.tensordot(k, basis.transport, axes=1)
    kin = -1j * kT + L
    eb = basis.null_vectors[1:4]  # xi_i M^{1/2} exactly
    m = model.model

    if m == "be":
        A = kin.astype(complex)
        Lfull = L
    elif m == "vpb1":
        kk = k @ k
        if kk == 0.0:
            raise ValueError("vpb1 generator is singular at k = 0")
        A = kin.astype(complex)
        # xi M^{1/2} . E with E = -i k a / |k|^2
        A += np.outer(eb.T @ (-1j * k / kk), basis.a_row)
        Lfull = L
    elif m == "vmb1":
        n = d + 6
        A = np.zeros((n, n), complex)
        A[:d, :d] = kin
        A[:d, d : d + 3] = eb.T
        A[d : d + 3, :d] = -basis.b_rows
        C = cross_matrix(k)
        A[d : d + 3, d + 3 :] = 1j * C
        A[d + 3 :, d : d + 3] = -1j * C
        Lfull = L
    else:
        L2 = mixture_collision(basis, model.collision)
        n = 2 * d + 6
        A = np.zeros((n, n), complex)
        A[: 2 * d, : 2 * d] = L2
        A[:d, :d] += -1j * kT
        A[d : 2 * d, d : 2 * d] += -1j * kT
        e = 2 * d
        A[:d, e : e + 3] = eb.T
        A[d : 2 * d, e : e + 3] = -eb.T
        A[e : e + 3, :d] = -basis.b_rows
        A[e : e + 3, d : 2 * d] = basis.b_rows
        C = cross_matrix(k)
        A[e : e + 3, e + 3 :] = 1j * C
        A[e + 3 :, e : e + 3] = -1j * C
        Lfull = L2
    return Generator(A=A, k=k, model=model, basis=basis, collision_matrix=Lfull)


def constraint_residuals(state, basis):
    """Return ``(i k.E - charge, i k.B)`` for a field-carrying state."""
    if state.E_hat is None:
        raise ValueError(f"model {state.model!r} carries no field constraints")
    gauss_E = 1j * (state.k @ state.E_hat) - state.charge(basis)
    gauss_B = 1j * (state.k @ state.B_hat)
    return complex(gauss_E), complex(gauss_B)


def make_admissible(state, basis):
    """Project the fields of ``state`` onto the Gauss-constraint manifold."""
    if state.E_hat is None:
        return state
    kk = float(state.k @ state.k)
    gE, _ = constraint_residuals(state, basis)
    if kk == 0.0:
        if abs(state.charge(basis)) > 0.0:
            raise ValueError("k = 0 with nonzero charge: Gauss law cannot be satisfied")
        return ModeState(
            state.model, state.k, state.u_hat.copy(), state.E_hat.copy(), state.B_hat.copy()
        )
    E = state.E_hat - gE * (-1j * state.k) / kk
    B = state.B_hat - state.k * (state.k @ state.B_hat) / kk
    return ModeState(state.model, state.k, state.u_hat.copy(), E, B)


def spectral_abscissa(gen, restrict=True):
    """Largest real part of the eigenvalues of ``A`` on the constraint manifold.

    Real parts are recomputed from eigenvectors as x^H H x / x^H S x (H the
    dissipative part, S the energy Gram), which stays accurate when the decay
    rate is many orders below ||A||.  Returns ``(abscissa, eigenvalues)``.
    """
    A = gen.A
    if restrict and gen.constraint_rows.shape[0]:
        Q = gen.tangent_basis
        Ar = Q.conj().T @ A @ Q
        w, Y = np.linalg.eig(Ar)
        X = Q @ Y
    else:
        w, X = np.linalg.eig(A)
    H, S = gen.dissipative_part, gen.energy_gram
    num = np.sum(X.conj() * (H @ X), axis=0).real
    den = np.sum(X.conj() * (S @ X), axis=0).real
    re = num / den
    w = re + 1j * w.imag
    return float(np.max(re)), w


def _moments(basis, u):
    P = basis.projection
    micro = u - P @ u
    a = basis.a_row @ u
    b = basis.b_rows @ u
    c = basis.c_row @ u
    theta = np.einsum("ijn,n->ij", basis.theta_rows, micro)
    lam = basis.lambda_rows @ micro
    return a, b, c, micro, theta, lam


def moment_residuals(gen, x, dxdt, h=None):
    """Residuals of the five Fourier moment equations of a one-species model.

    ``x`` and ``dxdt`` are a state and its time derivative; ``h`` an optional
    microscopic source on the kinetic block.  Returns the Euclidean norms of
    the residuals of the a, b, c, Theta and Lambda equations (length 5).
    """
    if gen.model.model == "vmb2-rate":
        raise ValueError("moment equations are stated for one-species models")
    basis = gen.basis
    k = gen.k
    ik = 1j * k
    kT = np.tensordot(k, basis.transport, axes=1)
    st = gen.state(x)
    u, du = st.u_hat, gen.state(dxdt).u_hat
    E = st.electric_field(basis)

    a, b, c, micro, theta, lam = _moments(basis, u)
    da, db, dc, _, dtheta, dlam = _moments(basis, du)
    ell = -1j * (kT @ micro) + gen.collision_matrix @ u
    if h is not None:
        ell = ell + np.asarray(h)
    th_ell = np.einsum("ijn,n->ij", basis.theta_rows, ell)
    lam_ell = basis.lambda_rows @ ell
    kb = k @ b
    kl = k @ lam

    r1 = da + 1j * kb
    r2 = db + ik * (a + 2 * c) + 1j * (k @ theta) - E
    r3 = dc + 1j * kb / 3 + 5j * kl / 3
    r4 = (
        dtheta
        + np.outer(ik, b)
        + np.outer(b, ik)
        - np.eye(3) * (2j * kb / 3 + 10j * kl / 3)
        - th_ell
    )
    r5 = dlam + ik * c - lam_ell
    return np.array([abs(r1), np.linalg.norm(r2), abs(r3), np.linalg.norm(r4), np.linalg.norm(r5)])
