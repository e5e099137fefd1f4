import numpy as np
import pytest
from conftest import random_state
from hypothesis import given, settings
from hypothesis import strategies as st

from kinedecay.spectral_generator import (
    MODELS,
    ModelSpec,
    ModeState,
    assemble_generator,
    constraint_residuals,
    make_admissible,
    moment_residuals,
    spectral_abscissa,
    state_size,
)

# golden value from the first verified build (degree 6, nu0 = 1)
VMB1_ABSCISSA_K1 = -0.12523828945868548


def test_model_registry_and_aliases(const6):
    assert MODELS == ("be", "vpb1", "vmb1", "vmb2-rate")
    assert ModelSpec("VMB2", const6).model == "vmb2-rate"
    with pytest.raises(ValueError):
        ModelSpec("vlasov", const6)


@pytest.mark.parametrize("model,size", [("be", 84), ("vpb1", 84), ("vmb1", 90), ("vmb2-rate", 174)])
def test_state_sizes(make_gen, model, size):
    assert state_size(model, 84) == size
    assert make_gen(model, [0.3, 0, 0]).size == size


def test_vmb1_plasma_oscillation_at_zero_k(make_gen, basis6):
    gen = make_gen("vmb1", [0, 0, 0])
    d = basis6.dim
    idx = [basis6.position((1, 0, 0)), d]  # b_1 and E_1
    sub = gen.A[np.ix_(idx, idx)]
    np.testing.assert_allclose(sub, [[0, 1], [-1, 0]], atol=1e-15)
    np.testing.assert_allclose(np.sort(np.linalg.eigvals(sub).imag), [-1, 1], atol=1e-15)


def test_be_conservation_at_zero_k(make_gen, basis6):
    gen = make_gen("be", [0, 0, 0])
    np.testing.assert_allclose(gen.A @ basis6.null_vectors.T, 0, atol=1e-15)
    assert spectral_abscissa(gen)[0] == pytest.approx(0.0, abs=1e-14)


def test_be_block_structure(make_gen, basis6, const6):
    k = np.array([0.2, -0.5, 0.7])
    gen = make_gen("be", k)
    kT = sum(k[i] * basis6.transport[i] for i in range(3))
    np.testing.assert_allclose(gen.A, -1j * kT + const6.matrix, atol=0)


def test_vmb1_golden_abscissa(make_gen):
    abscissa, _ = spectral_abscissa(make_gen("vmb1", [1, 0, 0]))
    assert abscissa < 0
    assert abscissa == pytest.approx(VMB1_ABSCISSA_K1, rel=1e-9)


def test_vpb1_reconstructs_gauss_law(make_gen, basis6, rng):
    k = np.array([0.4, 0.1, -0.2])
    gen = make_gen("vpb1", k)
    st_ = gen.state(rng.standard_normal(gen.size) + 0j)
    E = st_.electric_field(basis6)
    assert 1j * (k @ E) == pytest.approx(basis6.a_row @ st_.u_hat, rel=1e-14)


def test_vpb1_rejects_zero_k(basis6, const6):
    with pytest.raises(ValueError):
        assemble_generator([0, 0, 0], ModelSpec("vpb1", const6), basis6)


def test_dimension_mismatch_rejected(const6):
    from kinedecay.velocity_basis import build_basis

    with pytest.raises(ValueError):
        assemble_generator([1, 0, 0], ModelSpec("be", const6), build_basis(4))
    with pytest.raises(ValueError):
        assemble_generator([1, 0], ModelSpec("be", const6), build_basis(6))


def test_constraint_residual_examples(basis6):
    k = np.array([0.3, -0.4, 1.2])
    d = basis6.dim
    st_ = ModeState("vmb1", k, np.zeros(d), np.zeros(3), k)
    gE, gB = constraint_residuals(st_, basis6)
    assert gB == pytest.approx(1j * (k @ k))
    assert gE == 0
    Eperp = np.cross(k, [1.0, 0, 0])
    st_ = ModeState("vmb1", k, np.zeros(d), Eperp, np.zeros(3))
    assert constraint_residuals(st_, basis6)[0] == pytest.approx(0, abs=1e-15)
    with pytest.raises(ValueError):
        constraint_residuals(ModeState("be", k, np.zeros(d)), basis6)


def test_make_admissible_examples(basis6, rng):
    k = np.array([0.3, -0.4, 1.2])
    d = basis6.dim
    st_ = make_admissible(ModeState("vmb1", k, np.zeros(d), k, k), basis6)
    np.testing.assert_allclose(st_.E_hat, 0, atol=1e-15)
    np.testing.assert_allclose(st_.B_hat, 0, atol=1e-15)
    u = rng.standard_normal(d)
    st_ = make_admissible(
        ModeState("vmb1", k, u, rng.standard_normal(3), rng.standard_normal(3)), basis6
    )
    again = make_admissible(st_, basis6)
    np.testing.assert_allclose(again.E_hat, st_.E_hat, atol=1e-15)
    np.testing.assert_allclose(again.B_hat, st_.B_hat, atol=1e-15)


def test_make_admissible_zero_k(basis6):
    neutral = ModeState("vmb1", np.zeros(3), basis6.null_vectors[1], np.ones(3), np.ones(3))
    assert make_admissible(neutral, basis6).E_hat.tolist() == [1, 1, 1]
    charged = ModeState("vmb1", np.zeros(3), basis6.null_vectors[0], np.zeros(3), np.zeros(3))
    with pytest.raises(ValueError):
        make_admissible(charged, basis6)
    st2 = ModeState("vmb2-rate", np.zeros(3), np.concatenate([basis6.null_vectors[0]] * 2))
    assert make_admissible(st2, basis6).charge(basis6) == 0


@settings(max_examples=30, deadline=None)
@given(
    st.lists(st.floats(-5, 5), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 1e-3),
    st.integers(0, 2**31),
    st.sampled_from(["vmb1", "vmb2-rate"]),
)
def test_make_admissible_random(basis6, const6, k, seed, model):
    gen = assemble_generator(np.array(k), ModelSpec(model, const6), basis6)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(gen.size) + 1j * rng.standard_normal(gen.size)
    st_ = make_admissible(gen.state(x), basis6)
    gE, gB = constraint_residuals(st_, basis6)
    scale = np.linalg.norm(x) * (1 + np.linalg.norm(k))
    assert abs(gE) <= 1e-13 * scale and abs(gB) <= 1e-13 * scale


@pytest.mark.parametrize("model", ["vmb1", "vmb2-rate"])
@pytest.mark.parametrize("k", [[1, 0, 0], [0.3, -2.0, 0.7], [1e-3, 0, 0], [50, 10, 0]])
def test_constraint_invariance(make_gen, model, k):
    gen = make_gen(model, k)
    G = gen.constraint_rows
    assert np.abs(G @ gen.A).max() <= 1e-12 * max(1.0, np.abs(gen.A).max())


@pytest.mark.parametrize("model", ["be", "vmb1"])
def test_energy_identity(make_gen, const6, model):
    gen = make_gen(model, [0.4, 0.9, -0.3])
    d = gen.basis.dim
    expected = np.zeros(gen.A.shape)
    expected[:d, :d] = 2 * const6.matrix
    np.testing.assert_allclose(gen.A + gen.A.conj().T, expected, atol=1e-14)


def test_energy_identity_vpb1(make_gen, const6):
    # the physical energy adds |a|^2 / |k|^2; its dissipation is still 2 L
    gen = make_gen("vpb1", [0.4, 0.9, -0.3])
    np.testing.assert_allclose(2 * gen.dissipative_part, 2 * const6.matrix, atol=1e-14)


def test_vmb2_mixture_invariants(make_gen, basis6):
    gen = make_gen("vmb2-rate", [0, 0, 0])
    d = basis6.dim
    L2 = gen.collision_matrix
    ea = basis6.null_vectors[0]
    for v in (np.concatenate([ea, 0 * ea]), np.concatenate([0 * ea, ea])):
        np.testing.assert_allclose(L2 @ v, 0, atol=1e-14)
    for e in basis6.null_vectors[1:]:
        np.testing.assert_allclose(L2 @ np.concatenate([e, e]), 0, atol=1e-14)
        # momentum/energy difference between species relaxes
        assert np.linalg.norm(L2 @ np.concatenate([e, -e])) > 0.5
    assert L2.shape == (2 * d, 2 * d)


@pytest.mark.parametrize("model", ["be", "vpb1", "vmb1", "vmb2-rate"])
def test_abscissa_negative_on_grid(make_gen, model):
    for r in np.geomspace(1e-2, 1e2, 9):
        assert spectral_abscissa(make_gen(model, [r, 0, 0]))[0] < 0


def test_abscissa_rayleigh_matches_eig(make_gen):
    gen = make_gen("be", [1.0, 0, 0])
    a, w = spectral_abscissa(gen)
    assert a == pytest.approx(np.linalg.eigvals(gen.A).real.max(), rel=1e-9)


@pytest.mark.parametrize("model", ["be", "vpb1", "vmb1"])
def test_moment_equations_hold(make_gen, rng, model):
    gen = make_gen(model, [0.6, -0.2, 0.9])
    x = random_state(gen, rng)
    res = moment_residuals(gen, x, gen.A @ x)
    assert res.max() <= 1e-12 * np.linalg.norm(x)
    # a wrong derivative is detected
    assert moment_residuals(gen, x, 1.01 * gen.A @ x).max() > 1e-6


def test_moment_equations_with_source(make_gen, rng, basis6):
    gen = make_gen("vmb1", [0.6, -0.2, 0.9])
    x = random_state(gen, rng)
    h = (np.eye(basis6.dim) - basis6.projection) @ rng.standard_normal(basis6.dim)
    dx = gen.A @ x
    dx[: basis6.dim] += h
    assert moment_residuals(gen, x, dx, h).max() <= 1e-12 * np.linalg.norm(x)


def test_moment_residuals_two_species_rejected(make_gen):
    gen = make_gen("vmb2-rate", [1, 0, 0])
    with pytest.raises(ValueError):
        moment_residuals(gen, np.zeros(gen.size), np.zeros(gen.size))


def test_state_roundtrip(make_gen, rng):
    gen = make_gen("vmb2-rate", [1, 0, 0])
    x = rng.standard_normal(gen.size) + 0j
    np.testing.assert_array_equal(gen.state(x).to_vector(), x)
    with pytest.raises(ValueError):
        ModeState.from_vector("vmb1", [1, 0, 0], x, 84)
