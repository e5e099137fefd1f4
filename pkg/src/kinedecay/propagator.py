"""Exact-in-time evolution of single Fourier modes.

``exp(t A)`` is applied through one eigendecomposition of ``A`` shared by all
sample times.  When the eigenvector matrix is badly conditioned the
propagator falls back to ``scipy.linalg.expm`` per time.  Forced problems use
the Duhamel formula with Gauss-Legendre quadrature between output times.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import LinAlgError, expm

from .spectral_generator import ModeState, moment_residuals

log = logging.getLogger(__name__)

__all__ = [
    "Propagator",
    "Trajectory",
    "propagate",
    "propagate_with_source",
    "CSV_COLUMNS",
]

CSV_COLUMNS = ("time", "E", "D", "gaussE", "gaussB", "norm_u", "norm_E", "norm_B")
COND_LIMIT = 1e8
MACRO_TOL = 1e-10
_GL_ORDER = 8
_MAX_PANELS = 20000


class Propagator:
    """Caches the spectral factorization ``A = V diag(w) V^{-1}`` of a generator."""

    def __init__(self, gen, cond_limit=COND_LIMIT):
        self.gen = gen
        A = gen.A
        self.exact = False
        try:
            w, V = np.linalg.eig(A)
            cond = np.linalg.cond(V)
            if np.isfinite(cond) and cond <= cond_limit:
                self.w, self.V = w, V
                self.Vinv = np.linalg.inv(V)
                self.exact = True
            else:
                log.info("eigenvector condition %.3g, using expm", cond)
                self.w = w
        except LinAlgError:
            log.info("eigendecomposition failed, using expm")
            self.w = None
        self.rho = (
            float(np.max(np.abs(self.w))) if self.w is not None else float(np.linalg.norm(A, 2))
        )

    def apply(self, t, x):
        """exp(t A) x for scalar ``t >= 0``."""
        x = np.asarray(x, dtype=complex)
        if t == 0.0:
            return x.copy()
        if self.exact:
            return self.V @ (np.exp(t * self.w) * (self.Vinv @ x))
        try:
            return expm(t * self.gen.A) @ x
        except (LinAlgError, ValueError) as exc:
            raise RuntimeError("both eigendecomposition and expm failed") from exc

    def apply_many(self, times, x):
        """States at all ``times`` as rows of an array."""
        x = np.asarray(x, dtype=complex)
        times = np.asarray(times, dtype=float)
        if not self.exact:
            return np.array([self.apply(t, x) for t in times])
        c = self.Vinv @ x
        out = (self.V @ (np.exp(np.outer(self.w, times)) * c[:, None])).T
        out[times == 0.0] = x
        return out

    def forced_increment(self, t0, t1, source):
        """int_{t0}^{t1} exp((t1 - s) A) source(s) ds by panelled Gauss-Legendre."""
        length = t1 - t0
        if length <= 0.0:
            return np.zeros(self.gen.size, complex)
        panels = int(np.ceil(length * max(self.rho, 1e-300) / 2.0))
        if panels > _MAX_PANELS:
            log.warning("Duhamel interval needs %d panels, capping at %d", panels, _MAX_PANELS)
            panels = _MAX_PANELS
        panels = max(panels, 1)
        xg, wg = np.polynomial.legendre.leggauss(_GL_ORDER)
        edges = np.linspace(t0, t1, panels + 1)
        acc = np.zeros(self.gen.size, complex)
        for a, b in zip(edges[:-1], edges[1:]):
            half = 0.5 * (b - a)
            for s, wt in zip(a + half * (xg + 1), half * wg):
                acc += wt * self.apply(t1 - s, source(s))
        return acc


@dataclass
class Trajectory:
    """Sampled solution of one mode together with its diagnostics."""

    times: np.ndarray
    vectors: np.ndarray
    gen: object = field(repr=False)
    source: object = field(default=None, repr=False)
    discarded_macro: float = 0.0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def states(self):
        return [self.gen.state(x) for x in self.vectors]

    def _field_parts(self):
        gen = self.gen
        sE, sB = gen.field_slices()
        if sE is None:
            if gen.model.model == "vpb1":
                a = self.vectors @ gen.basis.a_row
                E = np.outer(a, -1j * gen.k / float(gen.k @ gen.k))
            else:
                E = np.zeros((len(self.times), 3), complex)
            return E, np.zeros((len(self.times), 3), complex)
        return self.vectors[:, sE], self.vectors[:, sB]

    @cached_property
    def diagnostics(self):
        gen = self.gen
        X = self.vectors
        S, H = gen.energy_gram, gen.dissipative_part
        energy = np.einsum("ti,ij,tj->t", X.conj(), S, X).real
        dissipation = -2.0 * np.einsum("ti,ij,tj->t", X.conj(), H, X).real
        G = gen.constraint_rows
        if G.shape[0]:
            res = X @ G.T
            gE, gB = np.abs(res[:, 0]), np.abs(res[:, 1])
        else:
            gE = gB = np.zeros(len(self.times))
        E, B = self._field_parts()
        nu = sum(np.linalg.norm(X[:, s], axis=1) ** 2 for s in gen.kinetic_slices()) ** 0.5
        return {
            "time": self.times,
            "E": energy,
            "D": dissipation,
            "gaussE": gE,
            "gaussB": gB,
            "norm_u": nu,
            "norm_E": np.linalg.norm(E, axis=1),
            "norm_B": np.linalg.norm(B, axis=1),
        }

    @cached_property
    def moment_residuals(self):
        """(n_times, 5) residuals of the moment equations, with d/dt = A x."""
        gen = self.gen
        if gen.model.model == "vmb2-rate":
            raise ValueError("moment equations are stated for one-species models")
        out = np.empty((len(self.times), 5))
        for j, (t, x) in enumerate(zip(self.times, self.vectors)):
            dx = gen.A @ x
            h = None
            if self.source is not None:
                h = self.source(t)
                dx = dx.copy()
                dx[: gen.basis.dim] += h
            out[j] = moment_residuals(gen, x, dx, h)
        return out

    def to_csv(self, path):
        diag = self.diagnostics
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for j in range(len(self.times)):
                w.writerow([f"{float(diag[c][j]):.17g}" for c in CSV_COLUMNS])

    def save_states(self, path):
        """Binary dump of the full complex state matrix (rows = samples)."""
        np.save(path, self.vectors)


def _check_times(times):
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if times.size == 0:
        raise ValueError("times is empty")
    if np.any(times < 0) or np.any(np.diff(times) <= 0):
        raise ValueError("times must be nonnegative and strictly increasing")
    return times


def _vector(gen, state0):
    if isinstance(state0, ModeState):
        x = state0.to_vector()
    else:
        x = np.asarray(state0, dtype=complex)
    if x.shape != (gen.size,):
        raise ValueError(f"state has shape {x.shape}, generator size is {gen.size}")
    return x


def propagate(gen, state0, times, propagator=None):
    """Sample ``exp(t A) state0`` at ``times``."""
    times = _check_times(times)
    prop = propagator or Propagator(gen)
    X = prop.apply_many(times, _vector(gen, state0))
    return Trajectory(times, X, gen)


def _micro_source(gen, source):
    """Wrap ``source`` (callable or constant) as a projected kinetic-block source."""
    basis = gen.basis
    d = basis.dim
    nspec = gen.model.species
    P = basis.projection
    fn = source if callable(source) else (lambda t, _h=np.asarray(source, complex): _h)
    worst = [0.0]

    def kinetic(t):
        h = np.asarray(fn(t), dtype=complex)
        if h.shape != (nspec * d,):
            raise ValueError(f"source has shape {h.shape}, expected ({nspec * d},)")
        h = h.copy()
        for s in range(nspec):
            blk = h[s * d : (s + 1) * d]
            macro = P @ blk
            mnorm = float(np.linalg.norm(macro))
            if mnorm > MACRO_TOL * max(1.0, float(np.linalg.norm(blk))):
                raise ValueError(
                    f"source has a macroscopic component of norm {mnorm:.3g} at t = {t:.6g}"
                )
            worst[0] = max(worst[0], mnorm)
            h[s * d : (s + 1) * d] = blk - macro
        return h

    def full(t):
        x = np.zeros(gen.size, complex)
        x[: nspec * d] = kinetic(t)
        return x

    return kinetic, full, worst


def propagate_with_source(gen, state0, source, times, propagator=None):
    """Solution of ``dx/dt = A x + [h(t), 0, 0]`` sampled at ``times``.

    ``source`` is a callable ``t -> h`` or a constant kinetic vector.  ``h``
    must be microscopic; components along the collision invariants above
    1e-10 are rejected and smaller ones are projected out (the largest
    discarded norm is stored on the trajectory).
    """
    times = _check_times(times)
    prop = propagator or Propagator(gen)
    x0 = _vector(gen, state0)
    kinetic, full, worst = _micro_source(gen, source)
    X = prop.apply_many(times, x0)
    forced = np.zeros(gen.size, complex)
    t_prev = 0.0
    for j, t in enumerate(times):
        forced = prop.apply(t - t_prev, forced) + prop.forced_increment(t_prev, t, full)
        X[j] = X[j] + forced
        t_prev = t
    return Trajectory(times, X, gen, source=kinetic, discarded_macro=worst[0])
