from itertools import product
from math import factorial

import numpy as np
import pytest
from conftest import random_state
from hypothesis import given, settings
from hypothesis import strategies as st

from kinedecay.decay_analysis import phi, radial_weights
from kinedecay.lyapunov import (
    FunctionalCoefficients,
    QuadForm,
    TuningError,
    assemble_E,
    base_form,
    decay_constant,
    dissipation_form,
    equivalence_bounds,
    interaction_form_1,
    interaction_form_2,
    morder_form,
    source_constant,
    tune_constants,
    verify_lyapunov,
)
from kinedecay.propagator import Propagator
from kinedecay.spectral_generator import ModelSpec, assemble_generator
from kinedecay.velocity_basis import lambda_moment, project_P, theta_moment

KAPPAS = (0.1, 0.1, 0.1, 0.1)
# golden value from the first verified build (vmb1, degree 6, |k| = 1)
LAMBDA_K1 = 8.766035836939618e-4


def test_quadform_rejects_non_hermitian():
    with pytest.raises(ValueError):
        QuadForm(np.array([[0, 1], [0, 0]], complex), "bad")
    q = QuadForm(np.eye(2, dtype=complex), "I")
    assert (q + q)(np.array([1, 1j])) == pytest.approx(4.0)
    assert q.scaled(3.0)(np.array([1, 0])) == pytest.approx(3.0)


def test_coefficients_invariants():
    with pytest.raises(ValueError):
        FunctionalCoefficients(equiv_lo=2.0, equiv_hi=1.0)
    with pytest.raises(ValueError):
        FunctionalCoefficients(lambda_report=-1.0)
    rep = FunctionalCoefficients().to_report([[1.0, 0, 0]])
    assert set(rep) == {
        "kappa1",
        "kappa2",
        "kappa3",
        "kappa4",
        "lambda_min",
        "equiv_lo",
        "equiv_hi",
        "grid",
        "per_k",
    }


def test_base_form_examples(make_gen, basis6):
    gen = make_gen("vmb1", [1, 0, 0])
    M = base_form(gen)
    d = basis6.dim
    x = np.zeros(gen.size, complex)
    assert M(x) == 0
    x[5] = 1
    assert M(x) == pytest.approx(1.0)
    x = np.zeros(gen.size, complex)
    x[d] = 1
    x[d + 4] = 1
    assert M(x) == pytest.approx(2.0)


def test_dissipation_examples(make_gen, basis6):
    gen = make_gen("vmb1", [1, 0, 0])
    D = dissipation_form(gen)
    d = basis6.dim
    x = np.zeros(gen.size, complex)
    x[:d] = basis6.null_vectors[0]
    assert D(x) == pytest.approx(0.5)
    x = np.zeros(gen.size, complex)
    x[d + 4] = 1  # B along e2, perpendicular to k
    assert D(x) == pytest.approx(1 / 8)
    x = np.zeros(gen.size, complex)
    x[basis6.position((1, 1, 0))] = 1
    assert D(x) == pytest.approx(1.0)
    assert np.linalg.eigvalsh(D.M).min() > -1e-14


def test_dissipation_parts(make_gen):
    gen = make_gen("vmb1", [0.7, 0.2, 0])
    total = dissipation_form(gen).M
    parts = sum(dissipation_form(gen, [p]).M for p in ("micro", "kE", "macro", "E", "B"))
    np.testing.assert_allclose(total, parts, atol=1e-15)
    with pytest.raises(ValueError):
        dissipation_form(gen, ["heat"])


def _direct_E1(gen, x, kappa1):
    basis = gen.basis
    k = gen.k
    ik = 1j * k
    u = x[: basis.dim]
    a, b, c, micro = project_P(basis, u)
    th = theta_moment(basis, micro)
    lam = lambda_moment(basis, micro)
    val = np.vdot(lam, ik * c)
    for i in range(3):
        for j in range(3):
            f = ik[i] * b[j] + ik[j] * b[i] - (2 / 3) * (i == j) * (ik @ b)
            val += np.conj(th[i, j]) * f
    val += kappa1 * np.vdot(b, ik * a)
    return val.real / (1 + k @ k)


def _direct_E2(gen, x, kappa2):
    basis = gen.basis
    d = basis.dim
    k = gen.k
    b = project_P(basis, x[:d])[1]
    E, B = x[d : d + 3], x[d + 3 : d + 6]
    kk = k @ k
    t1 = np.vdot(np.cross(k, b), np.cross(k, E)).real / (1 + kk) ** 2
    t2 = np.vdot(E, 1j * np.cross(k, B)).real * kk / (1 + kk) ** 3
    return -t1 - kappa2 * t2


def test_interaction_forms_match_direct_formula(make_gen, rng):
    for k in ([1.0, 0, 0], [0.3, -1.2, 0.5], [20.0, 3.0, -4.0]):
        gen = make_gen("vmb1", k)
        M1 = interaction_form_1(gen, 0.37)
        M2 = interaction_form_2(gen, 0.59)
        for _ in range(100):
            x = rng.standard_normal(gen.size) + 1j * rng.standard_normal(gen.size)
            scale = np.vdot(x, x).real
            assert M1(x) == pytest.approx(_direct_E1(gen, x, 0.37), abs=1e-12 * scale)
            assert M2(x) == pytest.approx(_direct_E2(gen, x, 0.59), abs=1e-12 * scale)


def test_interaction_form_1_vanishes_on_fluid_without_density(make_gen, basis6, rng):
    gen = make_gen("vmb1", [0.4, 0.5, -0.6])
    M1 = interaction_form_1(gen, 1.0)
    d = basis6.dim
    x = np.zeros(gen.size, complex)
    x[:d] = rng.standard_normal(4) @ basis6.null_vectors[1:]
    x[d:] = rng.standard_normal(6)
    assert M1(x) == pytest.approx(0.0, abs=1e-14)


def test_interaction_forms_vanish_at_zero_k(make_gen):
    gen = make_gen("vmb1", [0, 0, 0])
    assert np.abs(interaction_form_1(gen, 1.0).M).max() == 0
    assert np.abs(interaction_form_2(gen, 1.0).M).max() == 0
    np.testing.assert_array_equal(assemble_E(gen, KAPPAS).M, base_form(gen).M)


def test_interaction_form_2_longitudinal_field(make_gen, basis6, rng):
    k = np.array([0.4, 0.5, -0.6])
    gen = make_gen("vmb1", k)
    M2 = interaction_form_2(gen, 1.0)
    d = basis6.dim
    x = np.zeros(gen.size, complex)
    x[d : d + 3] = 1.7 * k
    x[d + 3 :] = rng.standard_normal(3)
    micro = (np.eye(d) - basis6.projection) @ rng.standard_normal(d)
    x[:d] = micro + basis6.null_vectors[0]
    assert M2(x) == pytest.approx(0.0, abs=1e-14)


def test_assemble_E_degenerate(make_gen):
    gen = make_gen("vmb1", [1, 0, 0])
    np.testing.assert_array_equal(assemble_E(gen, (0.1, 0.1, 0.1, 0.0)).M, base_form(gen).M)


def test_verify_be_microscopic_only(make_gen):
    gen = make_gen("be", [0.5, 0, 0])
    lam = verify_lyapunov(gen, base_form(gen), dissipation_form(gen, ["micro"]))
    assert lam == pytest.approx(2.0, rel=1e-3)


def test_verify_base_form_sees_no_field_dissipation(make_gen):
    gen = make_gen("vmb1", [1, 0, 0])
    assert verify_lyapunov(gen, base_form(gen), dissipation_form(gen)) == 0.0


def test_verify_tuned_golden(make_gen):
    gen = make_gen("vmb1", [1, 0, 0])
    ME, MD = assemble_E(gen, KAPPAS), dissipation_form(gen)
    lam = verify_lyapunov(gen, ME, MD)
    exact = verify_lyapunov(gen, ME, MD, exact=True)
    assert lam > 0
    assert exact == pytest.approx(LAMBDA_K1, rel=1e-9)
    assert lam == pytest.approx(exact, rel=1e-3)
    assert lam <= exact


def test_verify_lambda_is_sharp(make_gen):
    gen = make_gen("vmb1", [0.3, 0, 0])
    ME, MD = assemble_E(gen, KAPPAS), dissipation_form(gen)
    lam = verify_lyapunov(gen, ME, MD, exact=True)
    Q = gen.tangent_basis
    Y = ME.M @ gen.A
    Y = Y + Y.conj().T
    for scale, sign in ((0.999, -1), (1.001, 1)):
        top = np.linalg.eigvalsh(Q.conj().T @ (Y + scale * lam * MD.M) @ Q).max()
        assert np.sign(top) == sign


def test_verify_rejects_bad_input(make_gen):
    gen = make_gen("vmb1", [1, 0, 0])
    bad = np.zeros(gen.A.shape, complex)
    bad[0, 1] = 1.0
    with pytest.raises(ValueError):
        verify_lyapunov(gen, bad, dissipation_form(gen))
    with pytest.raises(ValueError):
        verify_lyapunov(gen, np.eye(3), dissipation_form(gen))


def test_equivalence_bounds_pencil(make_gen, rng):
    gen = make_gen("vmb1", [0.8, 0.1, 0])
    ME = assemble_E(gen, KAPPAS)
    lo, hi = equivalence_bounds(gen, ME)
    assert 0.5 <= lo <= hi <= 1.5
    for _ in range(50):
        x = random_state(gen, rng)
        ratio = ME(x) / base_form(gen)(x)
        assert lo - 1e-12 <= ratio <= hi + 1e-12


def test_tune_single_point():
    from kinedecay.velocity_basis import build_basis, build_collision

    basis = build_basis(6)
    spec = ModelSpec("vmb1", build_collision(basis))
    coeffs = tune_constants([[1.0, 0, 0]], lambda k: assemble_generator(k, spec, basis))
    assert coeffs.lambda_report > 0
    assert coeffs.equiv_lo >= 0.25


def test_tune_wide_grid_ratio(make_gen):
    grid = [[r, 0, 0] for r in (0.1, 1.0, 10.0, 1e3)]
    coeffs = tune_constants(grid, lambda k: make_gen("vmb1", k))
    ratios = [row["lambda"] / phi(np.linalg.norm(row["k"])) for row in coeffs.per_k]
    assert min(ratios) > 0
    assert coeffs.per_k[-1]["lambda"] > 0


def test_tune_rejects_bad_grids(make_gen):
    with pytest.raises(ValueError):
        tune_constants([], lambda k: make_gen("vmb1", k))
    with pytest.raises(ValueError):
        tune_constants([[0, 0, 0]], lambda k: make_gen("vmb1", k))


def test_tune_exhaustion_reports_worst_mode(make_gen):
    with pytest.raises(TuningError) as info:
        tune_constants([[1.0, 0, 0]], lambda k: make_gen("vmb1", k), lambda_floor=10.0, max_iter=2)
    err = info.value
    np.testing.assert_array_equal(err.k, [1.0, 0, 0])
    assert err.vector.shape == (90,)
    assert len(err.coefficients) == 4


def test_tune_recovers_from_large_start(make_gen):
    coeffs = tune_constants(
        [[1.0, 0, 0], [0.05, 0, 0]], lambda k: make_gen("vmb1", k), start=(0.1, 0.1, 0.1, 10.0)
    )
    assert coeffs.kappa4 < 10.0
    assert coeffs.lambda_report > 0


def test_decay_constant_positive_on_grid(make_gen):
    for r in np.geomspace(1e-3, 1e3, 13):
        gen = make_gen("vmb1", [r, 0, 0])
        assert decay_constant(gen, dissipation_form(gen)) > 0.1


def test_source_constant(make_gen, basis6):
    gen = make_gen("vmb1", [1, 0, 0])
    assert source_constant(gen, base_form(gen)) == pytest.approx(2.0, rel=1e-12)
    ME = assemble_E(gen, KAPPAS)
    d = basis6.dim
    oracle = np.linalg.norm(2 * ME.M[:, :d] @ (np.eye(d) - basis6.projection), 2)
    assert source_constant(gen, ME) == pytest.approx(oracle, rel=1e-12)


def test_morder_examples(make_gen, rng):
    gen = make_gen("vmb1", [2.0, 0, 0])
    ME = assemble_E(gen, KAPPAS)
    np.testing.assert_array_equal(morder_form(ME, gen.k, 0).M, ME.M)
    np.testing.assert_allclose(morder_form(ME, gen.k, 1).M, 4 * ME.M)
    with pytest.raises(ValueError):
        morder_form(ME, gen.k, -1)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3), st.integers(0, 3))
def test_morder_direct_multinomial_sum(k, m):
    k = np.array(k)
    total = 0.0
    for alpha in product(range(m + 1), repeat=3):
        if sum(alpha) != m:
            continue
        weight = factorial(m) / np.prod([factorial(a) for a in alpha])
        total += weight * np.prod(np.abs(k) ** (2 * np.array(alpha)))
    M = np.eye(2, dtype=complex)
    assert morder_form(M, k, m).M[0, 0].real == pytest.approx(total, rel=1e-12, abs=1e-300)


def test_energy_functional_nonincreasing_along_flow(make_gen, rng):
    for r in (0.05, 1.0, 30.0):
        gen = make_gen("vmb1", [r, 0, 0])
        ME, MD = assemble_E(gen, KAPPAS), dissipation_form(gen)
        lam = verify_lyapunov(gen, ME, MD)
        lo, hi = equivalence_bounds(gen, ME)
        c = decay_constant(gen, MD)
        x0 = random_state(gen, rng)
        times = np.linspace(0, 40, 81)
        X = Propagator(gen).apply_many(times, x0)
        E = np.einsum("ti,ij,tj->t", X.conj(), ME.M, X).real
        assert np.all(np.diff(E) <= 1e-12 * E[0])
        # dE/dt <= -lam D <= -lam c phi |U|^2 <= -(lam c phi / hi) E
        bound = E[0] * np.exp(-lam * c * phi(r) * times / hi)
        assert np.all(E <= bound * (1 + 1e-9))


def test_parseval_sum_nonincreasing(make_gen):
    radii = np.geomspace(1e-2, 10, 25)
    w = radial_weights(radii, 0)
    times = np.linspace(0, 20, 21)
    total = np.zeros_like(times)
    for r, wr in zip(radii, w):
        gen = make_gen("vmb1", [r, 0, 0])
        ME = assemble_E(gen, KAPPAS)
        x0 = np.zeros(gen.size, complex)
        x0[: gen.basis.dim] = gen.basis.null_vectors[4]
        x0[gen.basis.dim + 1] = 1.0
        X = Propagator(gen).apply_many(times, x0)
        for m in range(3):
            Mm = morder_form(ME, gen.k, m).M
            total += wr * np.einsum("ti,ij,tj->t", X.conj(), Mm, X).real
    assert np.all(np.diff(total) <= 1e-12 * total[0])
