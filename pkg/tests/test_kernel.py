import math

import numpy as np
import pytest

from rieszlab import kernel as kn
from rieszlab.geometry import Ball, DiscreteMeasure, Sphere, discretize, point_cloud


def _mc_mean(sample, p, n=400_000, seed=0):
    rng = np.random.default_rng(seed)
    x, y = sample(rng, n), sample(rng, n)
    return float(np.mean(np.linalg.norm(x - y, axis=1) ** p))


def _ball(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1)[:, None] * rng.random(n)[:, None] ** (1 / 3)


def _disk(rng, n):
    t = 2 * np.pi * rng.random(n)
    r = np.sqrt(rng.random(n))
    return np.column_stack([r * np.cos(t), r * np.sin(t)])


def test_ball_constant_closed_forms():
    # mean inverse distance in the unit ball is 6/5
    assert kn.ball_constant(-1.0) == pytest.approx(1.2, rel=1e-14)
    assert kn.ball_constant(0.0) == pytest.approx(1.0, rel=1e-14)


def test_disk_constant_closed_form():
    assert kn.disk_constant(-1.0) == pytest.approx(16 / (3 * math.pi), rel=1e-12)
    assert kn.disk_constant(0.0) == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("p", [-0.8, -0.5, 1.0])
def test_cell_constants_match_monte_carlo(p):
    assert kn.ball_constant(p) == pytest.approx(_mc_mean(_ball, p), rel=1e-2)
    assert kn.disk_constant(p) == pytest.approx(_mc_mean(_disk, p, seed=1), rel=1e-2)


def test_segment_constant():
    rng = np.random.default_rng(3)
    s, t = 2 * rng.random(400_000) - 1, 2 * rng.random(400_000) - 1
    assert kn.segment_constant(-0.5) == pytest.approx(np.mean(np.abs(s - t) ** -0.5), rel=1e-2)


def test_tube_matches_monte_carlo_and_is_continuous_at_newtonian_exponent():
    rho, ell = 0.1, 1.0
    rng = np.random.default_rng(7)

    def tube(rng, n):
        th = 2 * np.pi * rng.random(n)
        return np.column_stack([ell * rng.random(n), rho * np.cos(th), rho * np.sin(th)])

    assert kn.tube_self_interaction(rho, ell, -0.5)[0] == pytest.approx(_mc_mean(tube, -0.5), rel=1e-2)
    a = kn.tube_self_interaction(rho, ell, -1.0)[0]
    b = kn.tube_self_interaction(rho, ell, -1.0 + 1e-7)[0]
    assert a == pytest.approx(b, rel=1e-5)
    assert np.isfinite(kn.tube_self_interaction(1e-300, 1.0, -1.0)[0])


def test_kernel_symmetric_positive_definite():
    c = discretize(Ball((0.0, 0.0, 0.0), 1.0), 3)
    for alpha in (1.0, 1.5, 2.0):
        K = kn.assemble_kernel(c, alpha).matrix
        assert np.array_equal(K, K.T)
        assert np.linalg.eigvalsh(K)[0] > 0


def test_off_diagonal_is_exact_kernel():
    c = point_cloud([[0, 0, 0], [3.0, 0, 4.0]])
    K = kn.assemble_kernel(c, 1.5).matrix
    assert K[0, 1] == pytest.approx(5.0 ** -1.5, rel=1e-15)


def test_potential_at_node_uses_diagonal():
    c = discretize(Sphere((0.0, 0.0, 0.0), 1.0), 3)
    ctx = kn.assemble_kernel(c, 2.0)
    m = np.full(c.size, 1.0 / c.size)
    assert np.allclose(kn.potential_at(ctx, m, c.nodes[:5]), kn.potential_on_nodes(ctx, m)[:5], rtol=1e-12)


def test_energy_helpers_agree():
    c = discretize(Ball((0.0, 0.0, 0.0), 1.0), 3)
    ctx = kn.assemble_kernel(c, 2.0)
    rng = np.random.default_rng(0)
    a, b = rng.random(c.size), rng.random(c.size)
    lhs = kn.energy_norm(ctx, a, b) ** 2
    rhs = kn.energy(ctx, a) - 2 * kn.mutual_energy(ctx, a, b) + kn.energy(ctx, b)
    assert lhs == pytest.approx(rhs, rel=1e-10)
    far = point_cloud([[5.0, 0, 0], [6.0, 0, 0]])
    mu, nu = DiscreteMeasure(c, a), DiscreteMeasure(far, [1.0, 2.0])
    direct = sum(nu.masses[j] * kn.measure_potential(mu, far.nodes[j:j + 1], 2.0)[0] for j in range(2))
    assert kn.cross_energy(mu, nu, 2.0) == pytest.approx(direct, rel=1e-12)


def test_parameter_checks():
    with pytest.raises(ValueError):
        kn.check_alpha(2.5, 3)
    with pytest.raises(ValueError):
        kn.check_alpha(2.0, 2)
    with pytest.raises(ValueError):
        kn.assemble_kernel(discretize(Ball((0.0, 0.0, 0.0), 1.0), 3), 2.0, node_cap=10)
    with pytest.raises(ValueError):
        kn.cross_kernel(np.zeros((1, 3)), np.zeros((1, 3)), 2.0)
