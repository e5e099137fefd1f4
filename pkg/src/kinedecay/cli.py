"""Command-line harness: ``kinedecay {tune,verify,spectrum,decay,compare,moments}``.

Every subcommand reads an optional JSON config, writes its report into the
output directory and exits nonzero on failure with a JSON error object on
stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings

import numpy as np
from scipy.integrate import quad

from . import decay_analysis as da
from .config import dumps, load_config, worker_count
from .lyapunov import (
    FunctionalCoefficients,
    TuningError,
    assemble_E,
    decay_constant,
    dissipation_form,
    equivalence_bounds,
    source_constant,
    tune_constants,
    verify_lyapunov,
)
from .propagator import Propagator, propagate
from .spectral_generator import ModelSpec, assemble_generator, make_admissible
from .velocity_basis import build_basis, build_collision

log = logging.getLogger("kinedecay")

TOLERANCES = {"gauss": 1e-10, "moments": 1e-8, "semigroup": 1e-10, "energy": 1e-8}
FUNCTIONAL_MODELS = ("be", "vpb1", "vmb1")


class HarnessError(RuntimeError):
    def __init__(self, message, **info):
        super().__init__(message)
        self.info = info


def _setup(cfg):
    basis = build_basis(cfg.degree_cap)
    collision = build_collision(basis, cfg.collision, cfg.nu0, cfg.collision_path)
    return basis, collision


def _write(cfg, name, payload):
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, name)
    with open(path, "w") as fh:
        fh.write(dumps(payload) + "\n")
    return path


def _lyapunov_model(cfg):
    model = cfg.models[0]
    if model not in FUNCTIONAL_MODELS:
        raise HarnessError(f"the Lyapunov functional is defined for {FUNCTIONAL_MODELS}")
    return model


def _nonzero_radii(cfg):
    radii = cfg.k_radii()
    keep = radii[radii > 0]
    if keep.size < radii.size:
        warnings.warn("k = 0 removed from the grid: the functional is stated for k != 0")
    if keep.size == 0:
        raise HarnessError("grid has no nonzero wave numbers")
    return keep


def cmd_tune(cfg):
    model = _lyapunov_model(cfg)
    basis, collision = _setup(cfg)
    spec = ModelSpec(model, collision)
    grid = [cfg.wave_vector(r) for r in _nonzero_radii(cfg)]
    try:
        coeffs = tune_constants(
            grid,
            lambda k: assemble_generator(k, spec, basis),
            equiv_floor=cfg.equiv_floor,
            equiv_ceiling=cfg.equiv_ceiling,
            lambda_floor=cfg.lambda_floor,
            workers=worker_count(cfg),
        )
    except TuningError as exc:
        raise HarnessError(str(exc), k=list(map(float, exc.k)), kappas=exc.coefficients)
    report = coeffs.to_report(grid)
    report.update(model=model, degree_cap=cfg.degree_cap, collision=cfg.collision)
    return _write(cfg, "tune.json", report), report


def _invariants(gen, rng, cfg):
    """Constraint, moment, semigroup and energy-balance residuals of one mode."""
    x = rng.standard_normal(gen.size) + 1j * rng.standard_normal(gen.size)
    if gen.constraint_rows.shape[0]:
        x = make_admissible(gen.state(x), gen.basis).to_vector()
    nx = float(np.linalg.norm(x))
    prop = Propagator(gen)
    times = np.array([0.0, 0.25, 0.5, 1.0, 2.0])
    traj = propagate(gen, x, times, prop)
    diag = traj.diagnostics
    out = {"gauss": float(max(diag["gaussE"].max(), diag["gaussB"].max()) / nx)}
    if gen.model.model != "vmb2-rate":
        out["moments"] = float(traj.moment_residuals.max() / nx)
    out["semigroup"] = float(
        np.linalg.norm(prop.apply(1.0, prop.apply(1.0, x)) - prop.apply(2.0, x)) / nx
    )
    if cfg.collision == "const":
        H = gen.dissipative_part

        def rate(t):
            y = prop.apply(t, x)
            return float(-2.0 * np.vdot(y, H @ y).real)

        T = 1.0
        integral = quad(rate, 0.0, T, epsabs=0.0, epsrel=1e-12, limit=4000)[0]
        drop = diag["E"][0] - diag["E"][times.tolist().index(T)]
        out["energy"] = float(abs(drop - integral) / diag["E"][0])
    return out


def _kappas(cfg):
    if cfg.kappas is not None:
        return cfg.kappas
    path = os.path.join(cfg.out, "tune.json")
    if os.path.exists(path):
        with open(path) as fh:
            rep = json.load(fh)
        return tuple(rep[f"kappa{i}"] for i in range(1, 5))
    return FunctionalCoefficients().kappas


def cmd_verify(cfg):
    model = _lyapunov_model(cfg)
    basis, collision = _setup(cfg)
    spec = ModelSpec(model, collision)
    kappas = _kappas(cfg)
    rng = np.random.default_rng(cfg.seed)
    rows, failures = [], []
    for r in _nonzero_radii(cfg):
        k = cfg.wave_vector(r)
        gen = assemble_generator(k, spec, basis)
        ME, MD = assemble_E(gen, kappas), dissipation_form(gen)
        lam = verify_lyapunov(gen, ME, MD)
        lo, hi = equivalence_bounds(gen, ME)
        inv = _invariants(gen, rng, cfg)
        row = {
            "k": k.tolist(),
            "lambda": lam,
            "equiv_lo": lo,
            "equiv_hi": hi,
            "decay_constant": decay_constant(gen, MD),
            "source_constant": source_constant(gen, ME),
            **inv,
        }
        rows.append(row)
        bad = [
            name
            for name, ok in (
                ("lambda", lam >= cfg.lambda_floor),
                ("equiv_lo", lo >= cfg.equiv_floor),
                ("equiv_hi", hi <= cfg.equiv_ceiling),
            )
            if not ok
        ]
        bad += [n for n, tol in TOLERANCES.items() if n in inv and not inv[n] <= tol]
        if bad:
            failures.append({"k": k.tolist(), "failed": bad})
    report = {
        "model": model,
        "kappas": list(kappas),
        "lambda_min": min(r["lambda"] for r in rows),
        "equiv_lo": min(r["equiv_lo"] for r in rows),
        "equiv_hi": max(r["equiv_hi"] for r in rows),
        "max_residuals": {
            n: max(r[n] for r in rows) for n in TOLERANCES if all(n in r for r in rows)
        },
        "tolerances": TOLERANCES,
        "per_k": rows,
        "failures": failures,
    }
    path = _write(cfg, "verify.json", report)
    if failures:
        raise HarnessError(
            f"verification failed at {len(failures)} wave vector(s)",
            k=failures[0]["k"],
            failed=failures[0]["failed"],
            report=path,
        )
    return path, report


def cmd_spectrum(cfg):
    basis, collision = _setup(cfg)
    radii = cfg.spectrum_grid.values()
    out = {}
    for model in cfg.models:
        spec = ModelSpec(model, collision)
        kernel = da.phi if model in ("vmb1", "vmb2-rate") else da.phi_saturating
        c, low, high, gaps = da.kernel_fit(
            lambda r: assemble_generator(cfg.wave_vector(r), spec, basis),
            radii,
            kernel=kernel,
            workers=worker_count(cfg),
        )
        out[model] = {"c": c, "low_exp": low, "high_exp": high, "radii": radii, "gaps": gaps}
    return _write(cfg, "spectrum.json", out), out


def _compare(cfg):
    basis, collision = _setup(cfg)
    return da.compare_models(
        cfg.models,
        basis,
        collision,
        grid=cfg.radial_grid.values(),
        times=cfg.time_grid.values(),
        window=cfg.fit_window,
        m=cfg.m,
        tolerance=cfg.rate_tolerance,
        workers=worker_count(cfg),
    )


def cmd_decay(cfg):
    reports, detail = _compare(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    paths = []
    for rep in reports:
        path = os.path.join(cfg.out, f"decay_{rep.model}.csv")
        with open(path, "w") as fh:
            fh.write("time,norm\n")
            for t, n in zip(detail[rep.model]["times"], detail[rep.model]["norms"]):
                fh.write(f"{t:.17g},{n:.17g}\n")
        paths.append(path)
    summary = {
        rep.model: {
            "fitted_rate": rep.fitted_rate,
            "stderr": rep.stderr,
            "theoretical_rate": -float(rep.theoretical_rate),
            "pass": rep.passed,
        }
        for rep in reports
    }
    _write(cfg, "decay.json", summary)
    if not all(r.passed for r in reports):
        raise HarnessError("decay rate outside tolerance", models=[r.model for r in reports])
    return paths, summary


def cmd_compare(cfg):
    reports, detail = _compare(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    csv_path = os.path.join(cfg.out, "table1.csv")
    da.write_table(reports, csv_path)
    payload = []
    for rep in reports:
        payload.append(
            {
                "model": rep.model,
                "functional": rep.functional,
                "fitted_rate": rep.fitted_rate,
                "stderr": rep.stderr,
                "theoretical_rate": -float(rep.theoretical_rate),
                "theoretical_fraction": str(-rep.theoretical_rate),
                "pass": rep.passed,
                **detail[rep.model],
            }
        )
    _write(cfg, "table1.json", payload)
    if not all(r.passed for r in reports):
        raise HarnessError("decay rate outside tolerance", csv=csv_path)
    return csv_path, payload


def cmd_moments(cfg):
    basis, collision = _setup(cfg)
    model = cfg.models[0]
    spec = ModelSpec(model, collision)
    r = _nonzero_radii(cfg)[0]
    gen = assemble_generator(cfg.wave_vector(r), spec, basis)
    x0 = da.standard_datum(gen)
    traj = propagate(gen, x0, cfg.time_grid.values())
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, f"moments_{model}.csv")
    traj.to_csv(path)
    summary = {"model": model, "k": gen.k.tolist(), "trajectory": path}
    if model != "vmb2-rate":
        res = traj.moment_residuals
        summary["max_moment_residual"] = res.max(axis=0)
        summary["relative"] = float(res.max() / np.linalg.norm(x0))
        if summary["relative"] > TOLERANCES["moments"]:
            raise HarnessError("moment residuals exceed tolerance", k=gen.k.tolist())
    _write(cfg, f"moments_{model}.json", summary)
    return path, summary


COMMANDS = {
    "tune": cmd_tune,
    "verify": cmd_verify,
    "spectrum": cmd_spectrum,
    "decay": cmd_decay,
    "compare": cmd_compare,
    "moments": cmd_moments,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="kinedecay", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="JSON experiment configuration")
    parser.add_argument("--model", action="append", help="model id (repeatable)")
    parser.add_argument("--degree-cap", type=int)
    parser.add_argument("--out", help="output directory")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        cfg = load_config(args.config, models=args.model, degree_cap=args.degree_cap, out=args.out)
        path, _ = COMMANDS[args.command](cfg)
    except Exception as exc:  # reported as JSON, never a traceback
        err = {"command": args.command, "error": type(exc).__name__, "message": str(exc)}
        err.update(getattr(exc, "info", {}))
        sys.stderr.write(dumps(err) + "\n")
        return 1
    print(path if isinstance(path, str) else "\n".join(path))
    return 0


if __name__ == "__main__":
    sys.exit(main())
