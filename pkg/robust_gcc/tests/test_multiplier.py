from dataclasses import replace

import numpy as np
import pytest

from robust_gcc.core.multiplier import (
    MultiplierSet,
    admissible_point,
    assemble,
    fixed_point_residual,
    s_matrix,
)
from robust_gcc.exceptions import DimensionError, NotPositiveSemidefiniteError
from robust_gcc.model.system import CostFunctional, UncertainSystem, close_loop
from robust_gcc.model.uncertainty import DeltaRealization, UncertaintyBlock, expand_delta, sample_delta

MIXED_STRUCTURE = (UncertaintyBlock(1, 1, 1), UncertaintyBlock(2, 1, 1), UncertaintyBlock(1, 2, 2))


def _random_loop(rng, structure, dzw_norm=0.5):
    """Random closed loop with ||D_z^w|| = dzw_norm and D_y^w = 0."""
    n_p = sum(b.n_p for b in structure)
    n_q = sum(b.n_q for b in structure)
    n_x, n_u = 3, 2
    dzw = rng.standard_normal((n_q, n_p))
    dzw *= dzw_norm / np.linalg.norm(dzw, 2)
    system = UncertainSystem(
        a=rng.standard_normal((n_x, n_x)),
        bu=rng.standard_normal((n_x, n_u)),
        bw=rng.standard_normal((n_x, n_p)),
        cy=np.eye(n_x),
        dyw=np.zeros((n_x, n_p)),
        cz=rng.standard_normal((n_q, n_x)),
        dzu=rng.standard_normal((n_q, n_u)),
        dzw=dzw,
        structure=structure
    )
    cost = CostFunctional.from_weights(np.eye(n_x), np.eye(n_u))
    return close_loop(system, cost, 0.2 * rng.standard_normal((n_u, n_x)))


def _random_multipliers(rng, structure):
    blocks = []
    for spec in structure:
        g = rng.standard_normal((spec.repeats, spec.repeats))
        blocks.append(g @ g.T)
    return MultiplierSet(blocks=tuple(blocks), structure=structure)


def test_assemble_scalar_blocks():
    structure = (UncertaintyBlock(1, 1, 1), UncertaintyBlock(1, 1, 1))
    ms = MultiplierSet(blocks=(np.array([[2.0]]), np.array([[3.0]])), structure=structure)
    lambda_p, lambda_q = assemble(ms)
    np.testing.assert_array_equal(lambda_p, np.diag([2.0, 3.0]))
    np.testing.assert_array_equal(lambda_q, np.diag([2.0, 3.0]))


def test_assemble_rectangular_block():
    structure = (UncertaintyBlock(2, 1, 3),)
    block = np.array([[2.0, 1.0], [1.0, 2.0]])
    lambda_p, lambda_q = assemble(MultiplierSet(blocks=(block,), structure=structure))
    assert lambda_p.shape == (2, 2)
    assert lambda_q.shape == (6, 6)
    np.testing.assert_array_equal(lambda_q, np.kron(block, np.eye(3)))


def test_multipliers_commute_with_delta(rng):
    ms = _random_multipliers(rng, MIXED_STRUCTURE)
    lambda_p, lambda_q = assemble(ms)
    delta = expand_delta(MIXED_STRUCTURE, sample_delta(MIXED_STRUCTURE, rng))
    np.testing.assert_allclose(lambda_p @ delta, delta @ lambda_q, atol=1e-12)


def test_multiplier_rejects_indefinite():
    with pytest.raises(NotPositiveSemidefiniteError):
        MultiplierSet(blocks=(np.array([[-1.0]]),), structure=(UncertaintyBlock(1, 1, 1),))


def test_multiplier_rejects_wrong_size():
    with pytest.raises(DimensionError):
        MultiplierSet(blocks=(np.eye(2),), structure=(UncertaintyBlock(1, 1, 1),))


def test_multiplier_inverse_roundtrip(rng):
    ms = _random_multipliers(rng, MIXED_STRUCTURE)
    ms = ms + MultiplierSet.uniform(MIXED_STRUCTURE, 0.1)
    back = ms.inverse().inverse()
    for a, b in zip(ms.blocks, back.blocks):
        np.testing.assert_allclose(a, b, atol=1e-9)


def test_s_matrix_identity_case(plant, cost):
    cl = close_loop(plant, cost, np.zeros((2, 3)))
    s = s_matrix(cl, np.eye(2), np.eye(2))
    np.testing.assert_allclose(s[:3, :3], plant.cz.T @ plant.cz)
    np.testing.assert_allclose(s[:3, 3:], np.zeros((3, 2)))
    np.testing.assert_allclose(s[3:, 3:], -np.eye(2))


def test_s_matrix_zero_output(plant, cost):
    system = replace(plant, cz=np.zeros((2, 3)), dzu=np.zeros((2, 2)))
    cl = close_loop(system, cost, np.zeros((2, 3)))
    lambda_p = np.diag([2.0, 5.0])
    s = s_matrix(cl, lambda_p, lambda_p)
    expected = np.zeros((5, 5))
    expected[3:, 3:] = -lambda_p
    np.testing.assert_array_equal(s, expected)


def test_s_matrix_rejects_shapes(plant, cost):
    cl = close_loop(plant, cost, np.zeros((2, 3)))
    with pytest.raises(DimensionError):
        s_matrix(cl, np.eye(3), np.eye(2))


def test_s_procedure_is_sound_on_samples(rng):
    structure = MIXED_STRUCTURE
    checked = 0
    for _ in range(10):
        cl = _random_loop(rng, structure)
        for _ in range(10):
            lambda_p, lambda_q = assemble(_random_multipliers(rng, structure))
            s = s_matrix(cl, lambda_p, lambda_q)
            for _ in range(100):
                xi = admissible_point(cl, rng.standard_normal(cl.n_x), sample_delta(structure, rng))
                assert xi @ s @ xi >= -1e-7 * (1 + xi @ xi) * max(1.0, np.linalg.norm(s, 2))
                checked += 1
    assert checked == 10_000


def test_uniform_multiplier_scales_identity_form(rng):
    cl = _random_loop(rng, MIXED_STRUCTURE)
    n_p, n_q = cl.bwbar.shape[1], cl.czbar.shape[0]
    reference = s_matrix(cl, np.eye(n_p), np.eye(n_q))
    for value in (0.3, 1.0, 7.5):
        lambda_p, lambda_q = assemble(MultiplierSet.uniform(MIXED_STRUCTURE, value))
        np.testing.assert_allclose(s_matrix(cl, lambda_p, lambda_q), value * reference,
                                   rtol=1e-12, atol=1e-12)


def test_admissible_points_form_a_cone(rng):
    structure = MIXED_STRUCTURE
    cl = _random_loop(rng, structure)
    lambda_p, lambda_q = assemble(_random_multipliers(rng, structure))
    s = s_matrix(cl, lambda_p, lambda_q)
    for _ in range(20):
        d = sample_delta(structure, rng)
        x = rng.standard_normal(cl.n_x)
        xi = admissible_point(cl, x, d)
        for alpha in (0.0, 0.25, 3.0, 40.0):
            scaled = alpha * xi
            assert fixed_point_residual(cl, scaled, d) <= 1e-9 * (1 + np.linalg.norm(scaled))
            np.testing.assert_allclose(admissible_point(cl, alpha * x, d), scaled,
                                       rtol=1e-10, atol=1e-10)
            assert scaled @ s @ scaled == pytest.approx(alpha ** 2 * (xi @ s @ xi),
                                                        rel=1e-9, abs=1e-9)


def test_admissible_point_solves_fixed_point(rng):
    structure = MIXED_STRUCTURE
    cl = _random_loop(rng, structure)
    d = sample_delta(structure, rng)
    xi = admissible_point(cl, rng.standard_normal(cl.n_x), d)
    assert fixed_point_residual(cl, xi, d) < 1e-10


def test_admissible_point_at_origin(plant, cost, rng):
    cl = close_loop(plant, cost, np.zeros((2, 3)))
    d = sample_delta(plant.structure, rng)
    xi = admissible_point(cl, np.zeros(3), d)
    np.testing.assert_array_equal(xi, np.zeros(5))


def test_boundary_realization(plant, cost):
    cl = close_loop(plant, cost, np.zeros((2, 3)))
    lambda_p, lambda_q = assemble(MultiplierSet.uniform(plant.structure))
    s = s_matrix(cl, lambda_p, lambda_q)
    d = DeltaRealization(blocks=(np.array([[1.0]]), np.array([[-1.0]])))
    xi = admissible_point(cl, np.array([1.0, -2.0, 0.5]), d)
    # |Delta_i| = 1 makes every channel tight, so the quadratic form vanishes
    assert abs(xi @ s @ xi) < 1e-10
