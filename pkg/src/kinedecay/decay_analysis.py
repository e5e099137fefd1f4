"""Decay kernels, the L^p-L^q rate calculus, and whole-space decay fits.

The whole-space norm of a radial family of modes is synthesized from its
Fourier modes,

    ||nabla^m U(t)||^2 = 4 pi int_0^inf r^{2+2m} |U(t, r)|^2 dr,

with composite Simpson quadrature in ``ln r`` on a log-spaced grid and a
small-ball cap below the first node.  Fitted exponents are least-squares
slopes of ``log ||U(t)||`` against ``log(1 + t)``.
"""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy.integrate import simpson
from scipy.stats import linregress

from .propagator import Propagator
from .spectral_generator import (
    ModelSpec,
    ModeState,
    _model_id,
    assemble_generator,
    spectral_abscissa,
)

log = logging.getLogger(__name__)

__all__ = [
    "DecayKernelSpec",
    "DecayReport",
    "phi",
    "phi_saturating",
    "theoretical_rate",
    "model_rate",
    "radial_grid",
    "radial_weights",
    "norm_over_kspace",
    "fit_exponent",
    "kernel_fit",
    "standard_datum",
    "mode_norms",
    "compare_models",
    "kernel_bound_violation",
    "write_table",
]

INF = math.inf


def phi(k_norm):
    """Reference kernel |k|^4 / (1 + |k|^2)^3."""
    r = np.asarray(k_norm, dtype=float)
    if np.any(r < 0):
        raise ValueError("k_norm must be nonnegative")
    r2 = r * r
    out = r2 * r2 / (1.0 + r2) ** 3
    return float(out) if out.ndim == 0 else out


def phi_saturating(k_norm):
    """Kernel |k|^2 / (1 + |k|^2) of models without regularity loss."""
    r = np.asarray(k_norm, dtype=float)
    if np.any(r < 0):
        raise ValueError("k_norm must be nonnegative")
    out = r * r / (1.0 + r * r)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class DecayKernelSpec:
    """Kernel ``scale * phi(|k|)`` with low-frequency order ``sigma_plus`` and
    high-frequency order ``sigma_minus`` (0 meaning no regularity loss)."""

    sigma_plus: float
    sigma_minus: float
    phi: Callable = phi
    scale: float = 1.0

    def __post_init__(self):
        if self.sigma_plus <= 0:
            raise ValueError("sigma_plus must be positive")
        if self.sigma_minus < 0:
            raise ValueError("sigma_minus must be nonnegative")
        if self.sigma_minus and self.sigma_minus <= self.sigma_plus:
            log.info(
                "sigma_minus=%g does not exceed sigma_plus=%g", self.sigma_minus, self.sigma_plus
            )

    def __call__(self, k_norm):
        return self.scale * self.phi(k_norm)

    @property
    def ordered(self):
        return self.sigma_minus > self.sigma_plus


@dataclass
class DecayReport:
    model: str
    functional: str
    low_exp: float | None
    high_exp: float | None
    fitted_rate: float
    stderr: float
    theoretical_rate: Fraction
    tolerance: float
    passed: bool = field(init=False)

    def __post_init__(self):
        if self.stderr < 0:
            raise ValueError("stderr must be nonnegative")
        self.passed = abs(self.fitted_rate + float(self.theoretical_rate)) <= self.tolerance

    def row(self):
        return {
            "model": self.model,
            "functional": self.functional,
            "fitted_rate": self.fitted_rate,
            "theoretical_rate": -float(self.theoretical_rate),
            "pass": self.passed,
        }


def _frac(x, name):
    if x == INF:
        return None
    try:
        return Fraction(x)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{name} must be rational or inf, got {x!r}") from exc


def theoretical_rate(p, q, r, m, sigma, sigma_plus, sigma_minus):
    """Exponents of the L^p-L^q estimate for the kernel exp(-phi(k) t).

    Returns ``(low, high, loss)`` with ``low = 3/sigma_plus (1/p - 1/q) +
    m/sigma_plus``, ``high = sigma/sigma_minus`` and ``loss`` the number of
    extra derivatives required of the data.  All arithmetic is exact; ``q``
    may be ``math.inf``.
    """
    P, R, Q = _frac(p, "p"), _frac(r, "r"), _frac(q, "q")
    if P is None or R is None:
        raise ValueError("p and r must be finite")
    if not (1 <= P <= 2 and 1 <= R <= 2):
        raise ValueError("need 1 <= p, r <= 2")
    if Q is not None and Q < 2:
        raise ValueError("need q >= 2")
    if int(m) != m or m < 0:
        raise ValueError("m must be a nonnegative integer")
    S = _frac(sigma, "sigma")
    if S is None or S < 0:
        raise ValueError("sigma must be a finite nonnegative number")
    sp, sm = _frac(sigma_plus, "sigma_plus"), _frac(sigma_minus, "sigma_minus")
    if sp is None or sp <= 0 or sm is None or sm <= 0:
        raise ValueError("sigma_plus and sigma_minus must be positive and finite")
    inv_q = Fraction(0) if Q is None else 1 / Q
    low = 3 / sp * (1 / P - inv_q) + Fraction(int(m)) / sp
    high = S / sm
    if S.denominator == 1 and R == 2 and Q == 2:
        loss = int(S)
    else:
        loss = math.floor(S + 3 * (1 / R - inv_q)) + 1
    return low, high, loss


# Order of the low-frequency kernel and extra field weight of each model.
_MODEL_KERNEL = {
    "be": (2, 0),
    "vpb1": (2, 1),  # the norm carries |a|^2 / |k|^2
    "vmb1": (4, 0),
    "vmb2-rate": (2, 0),
}
_FUNCTIONAL = {
    "be": "||u||^2",
    "vpb1": "||u||^2+|a|^2/|k|^2",
    "vmb1": "||u||^2+|E|^2+|B|^2",
    "vmb2-rate": "||u+||^2+||u-||^2+|E|^2+|B|^2",
}


def model_rate(model, p=1, q=2):
    """Theoretical L^2 decay exponent (positive) of a model's standard datum.

    A field weight ``|k|^{-s}`` lowers the exponent by ``s / sigma_plus``.
    """
    sp, weight = _MODEL_KERNEL[_model_id(model)]
    low, _, _ = theoretical_rate(p, q, 2, 0, 0, sp, 2)
    return low - Fraction(weight, sp)


def radial_grid(r_min=1e-3, r_max=30.0, count=400, spacing="log"):
    if not (0 < r_min < r_max) or count < 3:
        raise ValueError("need 0 < r_min < r_max and count >= 3")
    if spacing == "log":
        return np.geomspace(r_min, r_max, int(count))
    if spacing == "linear":
        return np.linspace(r_min, r_max, int(count))
    raise ValueError(f"unknown spacing {spacing!r}")


def radial_weights(grid, m=0, origin_cap=True):
    """Weights w with sum_j w_j f(r_j) ~ int r^{2+2m} f(r) dr over the grid.

    Simpson's rule is applied in ``ln r`` for log-spaced grids and in ``r``
    otherwise.  With ``origin_cap`` the ball below the first node adds
    ``r_0^{3+2m} / (3+2m)`` times ``f(r_0)``.
    """
    r = np.asarray(grid, dtype=float)
    if r.ndim != 1 or r.size == 0:
        raise ValueError("radial grid is empty")
    if np.any(r <= 0) or np.any(np.diff(r) <= 0):
        raise ValueError("radial grid must be positive and strictly increasing")
    if int(m) != m or m < 0:
        raise ValueError("m must be a nonnegative integer")
    p = 2 + 2 * int(m)
    n = r.size
    if n == 1:
        w = np.zeros(1)
    else:
        s = np.log(r)
        log_spaced = np.allclose(np.diff(s), s[1] - s[0], rtol=1e-9)
        x = s if log_spaced else r
        jac = r ** (p + 1) if log_spaced else r**p
        w = np.array([simpson(np.eye(n)[j], x=x) for j in range(n)]) * jac
    if origin_cap:
        w[0] += r[0] ** (p + 1) / (p + 1)
    return w


def _mode_sq(item, basis=None):
    if isinstance(item, ModeState):
        if item.model == "vpb1":
            if basis is None:
                raise ValueError("vpb1 modes need the basis to reconstruct the field")
            E = item.electric_field(basis)
            return float(np.vdot(item.u_hat, item.u_hat).real + np.vdot(E, E).real)
        x = item.to_vector()
        return float(np.vdot(x, x).real)
    return float(item)


def norm_over_kspace(mode_solutions, m=0, radial_grid=None, weights=None, basis=None):
    """(4 pi int r^{2+2m} |U(t, r)|^2 dr)^{1/2} for a radial family of modes.

    ``mode_solutions`` maps ``|k|`` to a :class:`ModeState` or to ``|U|^2``
    directly; it may also be a sequence aligned with ``radial_grid``.  For
    ``vpb1`` states pass ``basis`` so the field can be reconstructed.
    """
    if isinstance(mode_solutions, dict):
        radii = np.array(sorted(mode_solutions))
        vals = np.array([_mode_sq(mode_solutions[r], basis) for r in radii])
        if radial_grid is not None and not np.allclose(radii, radial_grid):
            raise ValueError("mode radii do not match the radial grid")
    else:
        vals = np.array([_mode_sq(v, basis) for v in mode_solutions])
        if radial_grid is None:
            raise ValueError("a sequence of modes needs radial_grid")
        radii = np.asarray(radial_grid, dtype=float)
    if radii.size == 0:
        raise ValueError("radial grid is empty")
    if vals.shape != radii.shape:
        raise ValueError("one value per grid radius is required")
    w = radial_weights(radii, m) if weights is None else np.asarray(weights, dtype=float)
    total = 4.0 * np.pi * float(w @ vals)
    return math.sqrt(max(total, 0.0))


def fit_exponent(times, values, window=(1e2, 1e5)):
    """Slope and standard error of log(value) against log(1 + t) in ``window``."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape:
        raise ValueError("times and values differ in length")
    sel = (t >= window[0]) & (t <= window[1])
    if np.count_nonzero(sel) < 8:
        raise ValueError(f"only {np.count_nonzero(sel)} samples in window, need 8")
    if np.any(v[sel] <= 0) or not np.all(np.isfinite(v[sel])):
        raise ValueError("values in the fit window must be positive and finite")
    res = linregress(np.log1p(t[sel]), np.log(v[sel]))
    return float(res.slope), float(res.stderr)


def _workers(workers):
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("KINEDECAY_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _pmap(fn, items, workers):
    workers = _workers(workers)
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def kernel_fit(factory, grid, kernel=phi, low_cut=0.1, high_cut=10.0, workers=None):
    """Fit the per-mode decay rate ``-max Re eig A(r)`` over a radial grid.

    ``factory`` maps a radius to a :class:`Generator`.  Returns ``(c, low,
    high, gaps)``: ``c`` is the minimum of gap / kernel, ``low`` and ``high``
    the log-log slopes of the gap for ``r <= low_cut`` and ``r >= high_cut``.
    """
    r = np.asarray(grid, dtype=float)
    if r.size == 0 or np.any(r <= 0):
        raise ValueError("radial grid must be nonempty and positive")
    if r.min() > 1e-3 * (1 + 1e-9) or r.max() < 1e3 * (1 - 1e-9):
        log.warning("grid [%g, %g] is short of three decades on a side", r.min(), r.max())

    def gap(radius):
        return -spectral_abscissa(factory(radius))[0]

    gaps = np.array(_pmap(gap, list(r), workers))
    bad = np.flatnonzero(gaps <= 0)
    if bad.size:
        raise ValueError(f"nonnegative spectral abscissa at |k| = {r[bad[0]]:.17g}")
    lo, hi = r <= low_cut, r >= high_cut
    if np.count_nonzero(lo) < 2 or np.count_nonzero(hi) < 2:
        raise ValueError("grid needs at least two radii on each side of the cuts")
    low = linregress(np.log(r[lo]), np.log(gaps[lo])).slope
    high = linregress(np.log(r[hi]), np.log(gaps[hi])).slope
    c = float(np.min(gaps / kernel(r)))
    return c, float(low), float(high), gaps


def _profile(r):
    # bounded transform at low frequency, (1 + r^2)^{-2} decay above r = 1
    return 1.0 if r <= 1.0 else 4.0 / (1.0 + r * r) ** 2


def _micro_unit(basis):
    v = np.zeros(basis.dim)
    v[basis.position((1, 1, 0))] = 1.0
    return v


def standard_datum(gen):
    """Standard initial mode for the wave vector of ``gen`` (k along e1).

    ``be``, ``vpb1``: ``e_a + e_c + w``; ``vmb1``: ``e_c + w`` with
    transverse ``E = e2``, ``B = e3``; ``vmb2-rate``: both species equal to
    ``e_a + e_c + w`` (no net charge) with the same transverse fields.  Here
    ``w`` is the fixed unit microscopic vector ``xi_1 xi_2 M^{1/2}``.  The
    whole state is scaled by a radial profile equal to 1 on ``|k| <= 1`` and
    decaying like ``|k|^{-4}`` beyond.
    """
    basis = gen.basis
    model = gen.model.model
    k = gen.k
    r = float(np.sqrt(k @ k))
    nv = basis.null_vectors
    w = _micro_unit(basis)
    E = np.array([0.0, 1.0, 0.0])
    B = np.array([0.0, 0.0, 1.0])
    if model in ("be", "vpb1"):
        st = ModeState(model, k, nv[0] + nv[4] + w)
    elif model == "vmb1":
        st = ModeState(model, k, nv[4] + w, E, B)
    else:
        u = nv[0] + nv[4] + w
        st = ModeState(model, k, np.concatenate([u, u]), E, B)
    return st.to_vector() * _profile(r)


def mode_norms(gen, times, x0=None):
    """Energy |U(t, k)|^2 (with the field reconstructed for vpb1) at ``times``."""
    x0 = standard_datum(gen) if x0 is None else x0
    X = Propagator(gen).apply_many(times, x0)
    return np.einsum("ti,ij,tj->t", X.conj(), gen.energy_gram, X).real


def kernel_bound_violation(gen, times, coeffs, x0, kernel_scale):
    """Largest ratio of |U(t)| to the envelope sqrt(hi/lo) exp(-lambda c phi t / (2 hi)).

    ``coeffs`` is a :class:`FunctionalCoefficients`; ``kernel_scale`` the
    decay constant ``c`` with ``D >= c phi(|k|) |U|^2``.  Values at most 1
    mean the bound holds.
    """
    r = float(np.sqrt(gen.k @ gen.k))
    lo, hi, lam = coeffs.equiv_lo, coeffs.equiv_hi, coeffs.lambda_report
    X = Propagator(gen).apply_many(times, x0)
    S = gen.energy_gram
    n0 = math.sqrt(float(np.vdot(x0, S @ x0).real))
    norms = np.sqrt(np.einsum("ti,ij,tj->t", X.conj(), S, X).real) / n0
    env = math.sqrt(hi / lo) * np.exp(-lam * kernel_scale * phi(r) * np.asarray(times) / (2 * hi))
    return float(np.max(norms / env))


def _run_model(model, collision, basis, grid, times, m, workers):
    spec = ModelSpec(model, collision)

    def one(r):
        return mode_norms(assemble_generator([r, 0.0, 0.0], spec, basis), times)

    sq = np.array(_pmap(one, list(grid), workers))  # (n_r, n_t)
    w = radial_weights(grid, m)
    norms = np.sqrt(4.0 * np.pi * (w @ sq))
    return norms


def compare_models(
    models,
    basis,
    collision,
    grid=None,
    times=None,
    window=(1e2, 1e5),
    m=0,
    tolerance=0.05,
    workers=None,
):
    """Fit the whole-space decay exponent of each model's standard datum.

    Returns ``(reports, detail)`` where ``detail`` holds the sampled norm
    curves keyed by model.
    """
    grid = radial_grid() if grid is None else np.asarray(grid, dtype=float)
    times = np.geomspace(window[0], window[1], 41) if times is None else np.asarray(times)
    reports, detail = [], {}
    for model in models:
        mid = _model_id(model)
        norms = _run_model(mid, collision, basis, grid, times, m, workers)
        slope, err = fit_exponent(times, norms, window)
        rep = DecayReport(
            model=mid,
            functional=_FUNCTIONAL[mid],
            low_exp=None,
            high_exp=None,
            fitted_rate=slope,
            stderr=err,
            theoretical_rate=model_rate(mid),
            tolerance=tolerance,
        )
        reports.append(rep)
        detail[mid] = {"times": times.tolist(), "norms": norms.tolist()}
        log.info("%s: fitted %.4f, expected %s", mid, slope, -model_rate(mid))
    return reports, detail


def write_table(reports, csv_path, json_path=None, detail=None):
    """Write the comparison table as CSV and, optionally, a JSON detail file."""
    cols = ("model", "functional", "fitted_rate", "theoretical_rate", "pass")
    with open(csv_path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for rep in reports:
            row = rep.row()
            fh.write(
                f"{row['model']},{row['functional']},{row['fitted_rate']:.17g},"
                f"{row['theoretical_rate']:.17g},{str(row['pass']).lower()}\n"
            )
    if json_path is not None:
        payload = []
        for rep in reports:
            d = asdict(rep)
            d["theoretical_rate"] = str(-rep.theoretical_rate)
            d["passed"] = rep.passed
            if detail is not None:
                d.update(detail.get(rep.model, {}))
            payload.append(d)
        with open(json_path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
