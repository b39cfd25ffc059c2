import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import _instances as inst
from rieszlab import kernel as kn
from rieszlab.geometry import point_cloud
from rieszlab.solvers import (
    QpProblem, kkt_residual, minimize_cone, minimize_simplex, objective, project_simplex, simplex_multiplier,
)


def _ctx(n, seed):
    rng = np.random.default_rng(seed)
    P = rng.uniform(-1, 1, size=(n, 3))
    return kn.assemble_kernel(point_cloud(P, 0.05), 2.0), rng


@given(st.integers(2, 40), st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_simplex_solution_satisfies_kkt(n, seed):
    ctx, rng = _ctx(n, seed)
    b = rng.uniform(0, 3, n)
    sol = minimize_simplex(QpProblem(ctx, b, "simplex", 1e-10))
    mu = sol.masses.masses
    assert sol.converged
    assert mu.sum() == pytest.approx(1.0, abs=1e-12) and mu.min() >= 0
    assert sol.kkt_residual <= 1e-8
    assert sol.multiplier == pytest.approx(simplex_multiplier(ctx.matrix, b, mu), abs=1e-8)
    # no random feasible point does better
    trial = rng.dirichlet(np.ones(n), size=200)
    assert sol.objective <= min(objective(ctx.matrix, b, t) for t in trial) + 1e-12


@given(st.integers(2, 40), st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_cone_solution_satisfies_kkt(n, seed):
    ctx, rng = _ctx(n, seed)
    b = rng.uniform(-1, 3, n)
    sol = minimize_cone(QpProblem(ctx, b, "cone", 1e-10))
    mu = sol.masses.masses
    assert sol.converged and mu.min() >= 0
    assert sol.kkt_residual <= 1e-8
    assert kkt_residual(ctx.matrix, b, mu, "cone") == pytest.approx(sol.kkt_residual, abs=1e-12)
    # for the cone, optimality forces mu^T (K mu - b) = 0
    assert mu @ (ctx.matrix @ mu - b) == pytest.approx(0.0, abs=1e-8)


def test_cone_with_nonpositive_field_is_zero():
    ctx, _ = _ctx(5, 1)
    sol = minimize_cone(QpProblem(ctx, -np.ones(5), "cone"))
    assert np.all(sol.masses.masses == 0) and sol.objective == 0


@pytest.mark.parametrize("seed", range(6))
def test_matches_brute_force_lattice(seed):
    ctx, b = inst.small_instance(seed)
    K = ctx.matrix
    sol = minimize_simplex(QpProblem(ctx, b, "simplex", 1e-12))
    grid = inst.grid_minimum(K, b, "simplex", 0.02)
    bound = np.linalg.eigvalsh(K)[-1] * len(b) * 0.02 ** 2
    assert sol.objective <= grid + 1e-12
    assert grid - sol.objective <= bound


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=30))
@settings(max_examples=100, deadline=None)
def test_project_simplex_properties(v):
    v = np.array(v)
    x = project_simplex(v)
    assert x.min() >= 0 and x.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(project_simplex(x), x, atol=1e-12)
    # projection is the nearest feasible point: check against random simplex points
    rng = np.random.default_rng(0)
    for t in rng.dirichlet(np.ones(v.size), size=20):
        assert np.linalg.norm(v - x) <= np.linalg.norm(v - t) + 1e-12


def test_problem_validation():
    ctx, _ = _ctx(3, 0)
    with pytest.raises(ValueError):
        QpProblem(ctx, np.ones(4))
    with pytest.raises(ValueError):
        QpProblem(ctx, np.array([1.0, np.nan, 1.0]))
    with pytest.raises(ValueError):
        QpProblem(ctx, np.ones(3), "box")
    with pytest.raises(ValueError):
        QpProblem(ctx, np.ones(3), tol=0)


def test_trace_records_progress(tmp_path):
    ctx, rng = _ctx(20, 2)
    sol = minimize_simplex(QpProblem(ctx, rng.uniform(0, 2, 20), "simplex"), trace=True)
    assert sol.trace
    sol.write_trace(tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().startswith("iteration,objective,kkt_residual")
