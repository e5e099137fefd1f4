"""Time-frequency Lyapunov functionals as Hermitian forms on one Fourier mode.

A real quadratic functional of the mode state is stored as a Hermitian matrix
``M`` with value ``x^H M x``.  Sesquilinear pairings ``Re (F x | G x)`` of two
linear maps become ``(G^H F + F^H G) / 2``.  The energy form is the natural
energy plus small interactive corrections that pair macroscopic moments with
microscopic moments and fields; the Lyapunov inequality

    M_E A + A^H M_E + lambda M_D <= 0

is checked on the tangent space of the Gauss constraints.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cholesky, eigh, LinAlgError

from .spectral_generator import cross_matrix

log = logging.getLogger(__name__)

__all__ = [
    "QuadForm",
    "FunctionalCoefficients",
    "StateMaps",
    "base_form",
    "dissipation_form",
    "interaction_form_1",
    "interaction_form_2",
    "assemble_E",
    "verify_lyapunov",
    "tune_constants",
    "TuningError",
    "morder_form",
    "decay_constant",
    "source_constant",
]


@dataclass(frozen=True, eq=False)
class QuadForm:
    M: np.ndarray
    label: str = ""

    def __post_init__(self):
        M = np.asarray(self.M)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("quadratic form matrix must be square")
        if not np.allclose(M, M.conj().T, atol=1e-12 * max(1.0, np.abs(M).max())):
            raise ValueError(f"form {self.label!r} is not Hermitian")
        object.__setattr__(self, "M", 0.5 * (M + M.conj().T))

    def __call__(self, x):
        x = np.asarray(x)
        return float(np.real(x.conj() @ self.M @ x))

    def __add__(self, other):
        return QuadForm(self.M + other.M, f"{self.label}+{other.label}")

    def scaled(self, s, label=None):
        return QuadForm(s * self.M, label or f"{s:g}*{self.label}")


@dataclass
class FunctionalCoefficients:
    kappa1: float = 0.1
    kappa2: float = 0.1
    kappa3: float = 0.1
    kappa4: float = 0.1
    lambda_report: float = 0.0
    equiv_lo: float = 1.0
    equiv_hi: float = 1.0
    per_k: list = field(default_factory=list)

    def __post_init__(self):
        if not 0 < self.equiv_lo <= self.equiv_hi:
            raise ValueError("need 0 < equiv_lo <= equiv_hi")
        if self.lambda_report < 0:
            raise ValueError("lambda_report must be nonnegative")

    @property
    def kappas(self):
        return (self.kappa1, self.kappa2, self.kappa3, self.kappa4)

    def to_report(self, grid):
        return {
            "kappa1": self.kappa1,
            "kappa2": self.kappa2,
            "kappa3": self.kappa3,
            "kappa4": self.kappa4,
            "lambda_min": self.lambda_report,
            "equiv_lo": self.equiv_lo,
            "equiv_hi": self.equiv_hi,
            "grid": [list(map(float, k)) for k in grid],
            "per_k": self.per_k,
        }


class StateMaps:
    """Linear maps from the flattened state of ``gen`` to moments and fields.

    Each attribute is a complex matrix with one row per output component:
    ``a`` (1), ``b`` (3), ``c`` (1), ``micro`` (dim), ``theta`` (9, on the
    microscopic part, row 3*i + j), ``lam`` (3, microscopic part), ``E`` (3)
    and ``B`` (3, zero rows when the model has no magnetic field).
    """

    def __init__(self, gen):
        if gen.model.species != 1:
            raise ValueError("functionals are built for one-species models")
        basis = gen.basis
        n, d = gen.size, basis.dim
        Pm = np.eye(d) - basis.projection

        def lift(rows):
            rows = np.atleast_2d(rows)
            out = np.zeros((rows.shape[0], n), complex)
            out[:, :d] = rows
            return out

        self.a = lift(basis.a_row)
        self.b = lift(basis.b_rows)
        self.c = lift(basis.c_row)
        self.micro = lift(Pm)
        self.theta = lift(basis.theta_rows.reshape(9, d) @ Pm)
        self.lam = lift(basis.lambda_rows @ Pm)
        k = gen.k
        if gen.model.model == "vmb1":
            self.E = np.zeros((3, n), complex)
            self.E[:, d : d + 3] = np.eye(3)
            self.B = np.zeros((3, n), complex)
            self.B[:, d + 3 :] = np.eye(3)
        elif gen.model.model == "vpb1":
            self.E = np.outer(-1j * k / (k @ k), self.a[0])
            self.B = np.zeros((3, n), complex)
        else:
            self.E = np.zeros((3, n), complex)
            self.B = np.zeros((3, n), complex)
        self.weight = gen.model.collision.weight
        self.n = n


def _pair(F, G):
    """Hermitian matrix of x -> Re (F x | G x)."""
    H = G.conj().T @ F
    return 0.5 * (H + H.conj().T)


def base_form(gen):
    """Natural energy ||u||^2 + |E|^2 + |B|^2 (the physical energy for vpb1)."""
    return QuadForm(gen.energy_gram.astype(complex), "base")


def dissipation_form(gen, parts=None):
    """Hermitian dissipation form of the mode.

    ``parts`` selects terms from ``micro``, ``kE`` (|k.E|^2), ``macro``
    (|k|^2/(1+|k|^2) |(a, b, c)|^2), ``E`` (|k|^2/(1+|k|^2)^2 |E|^2) and ``B``
    (|k|^4/(1+|k|^2)^3 |B|^2); default is all of them.
    """
    parts = ("micro", "kE", "macro", "E", "B") if parts is None else tuple(parts)
    S = StateMaps(gen)
    k = gen.k
    kk = float(k @ k)
    M = np.zeros((S.n, S.n), complex)
    for p in parts:
        if p == "micro":
            M += S.micro.conj().T @ S.weight @ S.micro
        elif p == "kE":
            kE = k[None, :] @ S.E
            M += kE.conj().T @ kE
        elif p == "macro":
            abc = np.vstack([S.a, S.b, S.c])
            M += kk / (1 + kk) * (abc.conj().T @ abc)
        elif p == "E":
            M += kk / (1 + kk) ** 2 * (S.E.conj().T @ S.E)
        elif p == "B":
            M += kk**2 / (1 + kk) ** 3 * (S.B.conj().T @ S.B)
        else:
            raise ValueError(f"unknown dissipation part {p!r}")
    return QuadForm(M, "D")


def interaction_form_1(gen, kappa1):
    """Macroscopic interactive functional pairing c with Lambda, b with Theta, a with b."""
    S = StateMaps(gen)
    k = gen.k
    kk = float(k @ k)
    ik = 1j * k
    ikc = np.outer(ik, S.c[0])
    M = _pair(ikc, S.lam)
    ikb = ik @ S.b  # i k . b as a row
    for i in range(3):
        for j in range(3):
            F = ik[i] * S.b[j] + ik[j] * S.b[i] - (2.0 / 3.0) * (i == j) * ikb
            M += _pair(F[None, :], S.theta[3 * i + j][None, :])
    M += kappa1 * _pair(np.outer(ik, S.a[0]), S.b)
    return QuadForm(M / (1 + kk), "E1")


def interaction_form_2(gen, kappa2):
    """Field interactive functional pairing k x E with k x b and i k x B with E."""
    S = StateMaps(gen)
    k = gen.k
    kk = float(k @ k)
    C = cross_matrix(k)
    M = -_pair(C @ S.E, C @ S.b) / (1 + kk) ** 2
    M -= kappa2 * kk * _pair(1j * C @ S.B, S.E) / (1 + kk) ** 3
    return QuadForm(M, "E2")


def assemble_E(gen, coeffs):
    """M_E = M_base + kappa4 (M_1 + kappa3 M_2)."""
    k1, k2, k3, k4 = coeffs.kappas if hasattr(coeffs, "kappas") else coeffs
    M = base_form(gen).M.copy()
    if k4 != 0.0:
        M += k4 * (interaction_form_1(gen, k1).M + k3 * interaction_form_2(gen, k2).M)
    return QuadForm(M, "E")


def _restrict(gen, M, restrict):
    if restrict and gen.constraint_rows.shape[0]:
        Q = gen.tangent_basis
        return Q.conj().T @ M @ Q
    return M


def _whitener(Dq):
    scale = np.abs(Dq).max()
    if scale == 0.0:
        return None
    try:
        R = cholesky(Dq, lower=False)
    except LinAlgError:
        return None
    if np.min(np.abs(np.diag(R))) ** 2 < 1e-13 * scale:
        return None
    return R


def verify_lyapunov(gen, M_E, M_D, restrict=True, rtol=1e-3, eig_tol=1e-10, exact=False):
    """Largest lambda >= 0 with M_E A + A^H M_E + lambda M_D <= 0.

    Works on the constraint tangent space unless ``restrict`` is false.  When
    M_D is positive definite there the pencil is whitened by its Cholesky
    factor, so the test is invariant to the scale of M_D; otherwise the raw
    matrix is tested with absolute eigenvalue tolerance ``eig_tol`` relative
    to its norm.  Returns 0 when infeasible at lambda = 0.  ``exact`` returns
    the closed-form value from the whitened pencil instead of bisection.
    """
    ME = M_E.M if isinstance(M_E, QuadForm) else np.asarray(M_E)
    MD = M_D.M if isinstance(M_D, QuadForm) else np.asarray(M_D)
    for name, M in (("M_E", ME), ("M_D", MD)):
        if M.shape != gen.A.shape:
            raise ValueError(f"{name} has shape {M.shape}, generator is {gen.A.shape}")
        if not np.allclose(M, M.conj().T, atol=1e-12 * max(1.0, np.abs(M).max())):
            raise ValueError(f"{name} is not Hermitian")
    Y = ME @ gen.A
    Y = Y + Y.conj().T
    Yq = _restrict(gen, Y, restrict)
    Dq = _restrict(gen, MD, restrict)
    Yq = 0.5 * (Yq + Yq.conj().T)
    Dq = 0.5 * (Dq + Dq.conj().T)

    R = _whitener(Dq)
    if R is not None:
        Rinv = np.linalg.inv(R)
        Z = Rinv.conj().T @ Yq @ Rinv
        top = float(eigh(0.5 * (Z + Z.conj().T), eigvals_only=True)[-1])
        # eigenvalues within eig_tol of zero are neutral directions
        if top > -eig_tol:
            return 0.0
        if exact:
            return -top
        tol = 0.0

        def worst(lam):
            return top + lam

    else:
        if exact:
            raise ValueError("exact lambda needs M_D positive definite on the subspace")
        tol = eig_tol * max(1.0, np.abs(Yq).max())

        def worst(lam):
            return float(eigh(Yq + lam * Dq, eigvals_only=True)[-1])

        if worst(0.0) > tol:
            return 0.0

    lo, hi = 0.0, 1.0
    for _ in range(200):
        if worst(hi) > tol:
            break
        lo, hi = hi, 2 * hi
    else:
        return lo
    while hi - lo > rtol * max(lo, 1e-300):
        mid = 0.5 * (lo + hi)
        if worst(mid) <= tol:
            lo = mid
        else:
            hi = mid
        if hi < 1e-300:
            break
    return lo


def equivalence_bounds(gen, M_E, restrict=True):
    """Extreme generalized eigenvalues of the pencil (M_E, M_base)."""
    ME = _restrict(gen, M_E.M, restrict)
    MB = _restrict(gen, base_form(gen).M, restrict)
    w = eigh(0.5 * (ME + ME.conj().T), 0.5 * (MB + MB.conj().T), eigvals_only=True)
    return float(w[0]), float(w[-1])


def decay_constant(gen, M_D, restrict=True):
    """Largest c with M_D >= c phi(|k|) M_base on the tangent space."""
    kk = float(gen.k @ gen.k)
    phi = kk**2 / (1 + kk) ** 3
    if phi == 0.0:
        return 0.0
    D = _restrict(gen, M_D.M, restrict)
    B = _restrict(gen, base_form(gen).M, restrict)
    w = eigh(0.5 * (D + D.conj().T), 0.5 * (B + B.conj().T), eigvals_only=True)
    return float(w[0]) / phi


def source_constant(gen, M_E):
    """Operator norm of h -> 2 M_E [h, 0, 0] for microscopic h measured in the nu^{-1/2} norm.

    With this constant C, Young's inequality bounds the source contribution to
    dE/dt by a small multiple of the dissipation plus a multiple of C^2
    times the squared nu^{-1/2} norm of h.
    """
    if gen.model.species != 1:
        raise ValueError("functionals are built for one-species models")
    basis = gen.basis
    d = basis.dim
    ME = M_E.M if isinstance(M_E, QuadForm) else np.asarray(M_E)
    W = gen.model.collision.weight
    w, V = eigh(0.5 * (W + W.T))
    half = (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T
    block = 2.0 * ME[:, :d] @ (np.eye(d) - basis.projection) @ half
    return float(np.linalg.norm(block, 2))


class TuningError(RuntimeError):
    """Raised when no feasible constants are found; carries the worst mode."""

    def __init__(self, message, k=None, vector=None, coefficients=None):
        super().__init__(message)
        self.k = k
        self.vector = vector
        self.coefficients = coefficients


def _evaluate(kvec, kappas, factory, restrict):
    gen = factory(kvec)
    ME = assemble_E(gen, kappas)
    MD = dissipation_form(gen)
    lo, hi = equivalence_bounds(gen, ME, restrict)
    lam = verify_lyapunov(gen, ME, MD, restrict=restrict)
    return {"k": [float(x) for x in kvec], "lambda": lam, "equiv_lo": lo, "equiv_hi": hi}


def _worst_vector(gen, ME, MD, restrict):
    Y = ME.M @ gen.A
    Y = Y + Y.conj().T
    Q = gen.tangent_basis if restrict else np.eye(gen.size)
    w, V = eigh(Q.conj().T @ Y @ Q)
    return Q @ V[:, -1]


def _map(fn, items, workers):
    if workers is None or workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def tune_constants(
    k_grid,
    factory,
    start=(0.1, 0.1, 0.1, 0.1),
    equiv_floor=0.25,
    equiv_ceiling=4.0,
    lambda_floor=1e-5,
    max_iter=60,
    restrict=True,
    workers=None,
):
    """Search (kappa1, kappa2, kappa3, kappa4) making the functional work on a k-grid.

    ``factory`` maps a wave vector to a :class:`Generator`.  The search is a
    logarithmic coordinate descent: while some grid point fails, the
    coordinate (in the order kappa4, kappa3, kappa1, kappa2) whose halving
    most improves the worst grid point is halved.
    """
    grid = [np.asarray(k, dtype=float) for k in k_grid]
    if not grid:
        raise ValueError("k_grid is empty")
    if any(float(k @ k) == 0.0 for k in grid):
        raise ValueError("k_grid must exclude k = 0")
    order = (3, 2, 0, 1)  # kappa4, kappa3, kappa1, kappa2

    def score(rows):
        # positive margin means every point passes
        margins = []
        for r in rows:
            m_lam = np.log(max(r["lambda"], 1e-300) / lambda_floor)
            m_lo = np.log(r["equiv_lo"] / equiv_floor) if r["equiv_lo"] > 0 else -np.inf
            m_hi = np.log(equiv_ceiling / r["equiv_hi"])
            margins.append(min(m_lam, m_lo, m_hi))
        return float(np.min(margins)), int(np.argmin(margins))

    kappas = list(start)
    rows = _map(lambda k: _evaluate(k, kappas, factory, restrict), grid, workers)
    best, worst_idx = score(rows)
    for it in range(max_iter):
        if best >= 0:
            break
        trials = []
        for c in order:
            trial = list(kappas)
            trial[c] *= 0.5
            trows = _map(lambda k: _evaluate(k, trial, factory, restrict), grid, workers)
            trials.append((score(trows)[0], c, trial, trows))
        s, c, trial, trows = max(trials, key=lambda t: t[0])
        log.debug("iteration %d: halve kappa%d, margin %.3g -> %.3g", it, c + 1, best, s)
        kappas, rows = trial, trows
        best, worst_idx = score(rows)
    if best < 0:
        kvec = grid[worst_idx]
        gen = factory(kvec)
        ME, MD = assemble_E(gen, kappas), dissipation_form(gen)
        vec = _worst_vector(gen, ME, MD, restrict)
        raise TuningError(
            f"no feasible constants after {max_iter} iterations; worst k = {kvec.tolist()}",
            k=kvec,
            vector=vec,
            coefficients=kappas,
        )
    lam_min = min(r["lambda"] for r in rows)
    return FunctionalCoefficients(
        kappa1=kappas[0],
        kappa2=kappas[1],
        kappa3=kappas[2],
        kappa4=kappas[3],
        lambda_report=lam_min,
        equiv_lo=min(r["equiv_lo"] for r in rows),
        equiv_hi=max(r["equiv_hi"] for r in rows),
        per_k=rows,
    )


def morder_form(M, k, m):
    """Form of the m-th derivative layer: sum over |alpha| = m of multinomial-weighted |k^alpha|^2 M."""
    if int(m) != m or m < 0:
        raise ValueError("m must be a nonnegative integer")
    k = np.asarray(k, dtype=float)
    scale = float(k @ k) ** int(m)
    Mat = M.M if isinstance(M, QuadForm) else np.asarray(M)
    return QuadForm(scale * Mat, f"m{int(m)}")
