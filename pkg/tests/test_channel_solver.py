import numpy as np
import pytest

from collision_response.channel_solver import (
    BornAmplitudes, ChannelClosedError, ExactAmplitudes, PotentialSpec, PotentialTerm, SMatrixTable,
    ThresholdError, analytic_barrier, born_amplitude, cross_section_operators, solve_smatrix,
    solve_smatrix_batch, star_product, two_level_barrier, verify_optical_theorem, verify_unitarity,
)
from collision_response.operator_core import HermitianOperator, SystemSpec, random_hermitian


def scalar_barrier(V0, width=1.0, mass=1.0):
    spec = SystemSpec(np.array([0.0]))
    pot = PotentialSpec((PotentialTerm(HermitianOperator([[1.0]]), ((-width / 2, width / 2, V0),)),), mass)
    return spec, pot


def test_free_potential_identity():
    spec = SystemSpec(np.array([-0.5, 0.5]))
    block = solve_smatrix(spec, PotentialSpec(()), 3.0)
    assert np.allclose(block.s, np.eye(4)) and np.allclose(block.t, 0)
    assert verify_unitarity(block)["b3"] == 0.0
    o = verify_optical_theorem(block)
    assert o["general"] == 0.0 and o["forward"] == 0.0


@pytest.mark.parametrize("E,V0", [(2.0, 1.0), (0.4, 1.0), (5.0, -2.0)])
def test_scalar_barrier_matches_closed_form(E, V0):
    spec, pot = scalar_barrier(V0)
    block = solve_smatrix(spec, pot, E)
    t, r = analytic_barrier(E, V0, 1.0)
    assert abs(block.s[0, 0] - t) <= 1e-10
    assert abs(block.s[1, 0] - r) <= 1e-10
    # symmetric barrier: right incidence mirrors left incidence
    assert abs(block.s[1, 1] - t) <= 1e-10
    assert abs(block.s[0, 1] - r) <= 1e-10


def test_degenerate_levels_decouple_in_rotated_basis():
    V0, E = 1.3, 2.2
    spec = SystemSpec(np.array([0.0, 0.0]))
    pot = PotentialSpec((PotentialTerm(HermitianOperator([[0, V0], [V0, 0]]), ((-0.5, 0.5, 1.0),)),))
    s = solve_smatrix(spec, pot, E).s
    R = np.array([[1, 1], [1, -1]]) / np.sqrt(2)  # columns: sigma_x eigenvectors (+V0, -V0)
    tp, rp = analytic_barrier(E, V0, 1.0)
    tm, rm = analytic_barrier(E, -V0, 1.0)
    T, Rf = R @ np.diag([tp, tm]) @ R.T, R @ np.diag([rp, rm]) @ R.T
    expected = np.block([[T, Rf], [Rf, T]])
    assert np.max(np.abs(s - expected)) <= 1e-8


def test_threshold_rejected():
    spec, pot = two_level_barrier(V0=1.0)
    with pytest.raises(ThresholdError):
        solve_smatrix(spec, pot, 0.5)


def test_closed_channel_excluded():
    spec, pot = two_level_barrier(V0=1.0)
    block = solve_smatrix(spec, pot, 0.0)
    assert block.open.tolist() == [True, False] and block.s.shape == (2, 2)
    assert verify_unitarity(block)["b3"] <= 1e-12


def test_strongly_closed_channels_stay_finite():
    # deep evanescent channel: transfer matrices would overflow here
    spec = SystemSpec(np.array([0.0, 5000.0]))
    pot = PotentialSpec((PotentialTerm(HermitianOperator([[0, 3], [3, 0]]), ((-20.0, 20.0, 1.0),)),))
    block = solve_smatrix(spec, pot, 10.0)
    assert np.all(np.isfinite(block.s))
    assert verify_unitarity(block)["b3"] <= 1e-10


def test_random_multilayer_unitarity(rng):
    spec = SystemSpec(np.sort(rng.normal(size=3)))
    terms = tuple(PotentialTerm(HermitianOperator(random_hermitian(3, rng)), ((x, x + 0.7, 1.0),))
                  for x in (-1.0, 0.0, 1.5))
    pot = PotentialSpec(terms)
    s, open_ = solve_smatrix_batch(spec, pot, np.linspace(2.0, 8.0, 25))
    for k in range(25):
        idx = np.flatnonzero(np.concatenate([open_[k], open_[k]]))
        sub = s[k][np.ix_(idx, idx)]
        assert np.max(np.abs(sub.conj().T @ sub - np.eye(idx.size))) <= 1e-10


def test_star_product_identity_and_associativity(rng):
    n = 2
    eye = np.block([[np.zeros((n, n)), np.eye(n)], [np.eye(n), np.zeros((n, n))]])
    A = rng.normal(size=(2 * n, 2 * n)) * 0.3 + 0j
    B = rng.normal(size=(2 * n, 2 * n)) * 0.3 + 0j
    C = rng.normal(size=(2 * n, 2 * n)) * 0.3 + 0j
    assert np.allclose(star_product(A, eye), A) and np.allclose(star_product(eye, A), A)
    assert np.allclose(star_product(star_product(A, B), C), star_product(A, star_product(B, C)))


def test_born_zero_potential():
    spec = SystemSpec(np.array([-0.5, 0.5]))
    assert born_amplitude(spec, PotentialSpec(()), 0, 1, 1, 1, 10.0) == 0


def test_born_elastic_forward_and_backward():
    V0, p, a = 10.0, 100.0, 1.0
    spec, pot = scalar_barrier(V0, a)
    E = p**2 / 2
    fwd = born_amplitude(spec, pot, 0, 1, 0, 1, E)
    assert fwd == pytest.approx(V0 * a / p, rel=1e-12)
    back = born_amplitude(spec, pot, 0, 1, 0, -1, E)
    assert abs(back) == pytest.approx(abs(np.sin(p * a) / (p * a)) * V0 * a / p, rel=1e-10)


def test_born_closed_channel_error():
    spec, pot = two_level_barrier(V0=1.0)
    with pytest.raises(ChannelClosedError):
        born_amplitude(spec, pot, 0, 1, 1, 1, 0.5)


def test_born_first_order_agreement():
    spec, pot1 = two_level_barrier(V0=1.0)
    E = np.linspace(4000, 6000, 7)
    ratios = []
    for V0 in (0.4, 0.2, 0.1):
        pot = pot1.scaled(V0)
        diff = np.abs(ExactAmplitudes(spec, pot).t_full(E) - BornAmplitudes(spec, pot).t_full(E))
        ratios.append(diff.max() / V0)
    for a, b in zip(ratios, ratios[1:]):
        assert 0.4 <= b / a <= 0.6


def test_optical_theorem_barrier(fast_model):
    block = solve_smatrix(fast_model["spec"], fast_model["pot"], 5000.3)
    o = verify_optical_theorem(block)
    assert o["general"] <= 1e-10 and o["forward"] <= 1e-10 and o["max_im_forward"] <= 1e-12
    for sigma in cross_section_operators(block).values():
        assert np.linalg.eigvalsh(sigma)[0] >= -1e-12
    u = verify_unitarity(block)
    assert max(u.values()) <= 1e-10


def test_table_interpolation_matches_exact(fast_model):
    spec, pot = fast_model["spec"], fast_model["pot"]
    table = SMatrixTable.build(spec, pot, np.linspace(4700, 5300, 1201))
    E = np.array([4812.37, 5000.0, 5231.9])
    assert np.max(np.abs(table.t_full(E) - ExactAmplitudes(spec, pot).t_full(E))) <= 1e-8
    with pytest.raises(ValueError, match="covers"):
        table.t_full([100.0])
    blk = table.block(10)
    assert verify_unitarity(blk)["b3"] <= 1e-10


def test_potential_validation():
    op = HermitianOperator(np.eye(2))
    with pytest.raises(ValueError, match="overlap"):
        PotentialTerm(op, ((0, 2, 1), (1, 3, 1)))
    with pytest.raises(ValueError):
        PotentialTerm(op, ((1, 0, 1),))
    with pytest.raises(ValueError, match="same space"):
        PotentialSpec((PotentialTerm(op, ((0, 1, 1),)), PotentialTerm(HermitianOperator([[1.0]]), ((0, 1, 1),))))
    pot = PotentialSpec.from_segments([(0.0, 1.0, np.eye(2)), (2.0, 3.0, 2 * np.eye(2))])
    segs = pot.segments(2)
    assert [(a, b) for a, b, _ in segs] == [(0.0, 1.0), (1.0, 2.0), (2.0, 3.0)]
    assert np.allclose(segs[1][2], 0)
