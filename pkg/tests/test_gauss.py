import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rieszlab import gauss as ga
from rieszlab import kernel as kn
from rieszlab.geometry import Ball, DiscreteMeasure, Sphere, discretize, point_cloud

ORIGIN = (0.0, 0.0, 0.0)


@pytest.fixture(scope="module")
def sphere():
    c = discretize(Sphere(ORIGIN, 1.0), 6)
    return c, kn.assemble_kernel(c, 2.0)


@pytest.fixture(scope="module")
def ball():
    c = discretize(Ball(ORIGIN, 1.0), 5)
    return c, kn.assemble_kernel(c, 2.0)


@pytest.mark.parametrize("q", [0.1, 0.5, 1.0, 3.0])
def test_sphere_centre_charge(sphere, q):
    c, ctx = sphere
    rep = ga.solve_weighted(c, ga.FieldSpec(ORIGIN, q), ctx=ctx)
    assert rep.converged and rep.kkt_residual <= 1e-8
    assert rep.value == pytest.approx(1 - 2 * q, abs=0.02)
    assert rep.constant == pytest.approx(1 - q, abs=0.02)
    # the minimizer spreads over the whole sphere
    assert rep.support_indices.size == c.size


def test_constant_sign_regimes(ball):
    c, ctx = ball
    z = (2.0, 0.0, 0.0)
    lo = ga.solve_weighted(c, ga.FieldSpec(z, 1.0), ctx=ctx)
    hi = ga.solve_weighted(c, ga.FieldSpec(z, 3.0), ctx=ctx)
    assert lo.constant > 0 > hi.constant


def test_small_charge_gives_equilibrium(ball):
    from rieszlab import potential_ops as po
    c, ctx = ball
    eq = po.equilibrium_measure(c, 2.0, ctx=ctx)
    rep = ga.solve_weighted(c, ga.FieldSpec((2.0, 0.0, 0.0), 1e-6), ctx=ctx)
    assert np.abs(rep.lam.masses - eq.gamma.masses / eq.capacity).sum() <= 1e-4
    assert rep.constant == pytest.approx(1 / eq.capacity, rel=1e-4)


def test_value_decreases_with_charge(ball):
    c, ctx = ball
    vals = [ga.solve_weighted(c, ga.FieldSpec((2.0, 0.0, 0.0), q), ctx=ctx).value for q in (0.5, 1, 2, 4)]
    assert np.all(np.diff(vals) < 0)


def test_constant_identity_and_weighted_kkt(ball):
    c, ctx = ball
    rep = ga.solve_weighted(c, ga.FieldSpec((0.0, 2.0, 0.0), 1.2), ctx=ctx)
    assert rep.constant == pytest.approx(rep.multiplier, abs=1e-8)
    assert rep.weighted_kkt_min >= -1e-8 and rep.weighted_kkt_support <= 1e-8


def test_cone_bound_is_below_simplex_value(ball):
    c, ctx = ball
    fld = ga.FieldSpec((2.0, 0.0, 0.0), 2.0)
    assert ga.cone_lower_bound(c, fld, ctx) <= ga.solve_weighted(c, fld, ctx=ctx).value + 1e-10


def test_solution_formula_branches(ball):
    c, ctx = ball
    low = ga.check_solution_formula(c, ga.FieldSpec((2.0, 0.0, 0.0), 1.0), ctx=ctx)
    assert low.branch == "q_below_H" and low.relative_energy_residual <= 1e-6
    from rieszlab import potential_ops as po
    hm = po.harmonic_measure((2.0, 0.0, 0.0), c, 2.0, ctx=ctx)
    H = 1 / hm.swept.total
    top = ga.check_solution_formula(c, ga.FieldSpec((2.0, 0.0, 0.0), H), harmonic=hm, ctx=ctx)
    assert top.branch == "q_equals_H" and top.relative_energy_residual <= 1e-6
    with pytest.raises(ValueError):
        ga.check_solution_formula(c, ga.FieldSpec((2.0, 0.0, 0.0), 1.1 * H), harmonic=hm, ctx=ctx)


def test_weighted_constant_formula():
    c = point_cloud([[0, 0, 0.0], [1.0, 0, 0]])
    rep = ga.solve_weighted(c, ga.FieldSpec((5.0, 0, 0), 1.0))
    out = ga.weighted_constant(rep, 2.0, 1.0)
    assert out["applicable"] and out["formula"] == pytest.approx(0.5)
    assert not ga.weighted_constant(rep, 0.5, 1.0)["applicable"]


def test_field_validation():
    with pytest.raises(ValueError):
        ga.FieldSpec(ORIGIN, 0.0)
    with pytest.raises(ValueError):
        ga.FieldSpec((np.nan, 0, 0), 1.0)
    c = point_cloud([[0, 0, 0.0], [1.0, 0, 0]])
    with pytest.raises(ValueError):
        ga.FieldSpec(ORIGIN, 1.0).linear_term(c)


@given(st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_d_bl_properties(seed):
    rng = np.random.default_rng(seed)
    a = point_cloud(rng.uniform(-2, 2, (6, 3)))
    b = point_cloud(rng.uniform(-2, 2, (5, 3)))
    mu = DiscreteMeasure(a, rng.random(6))
    nu = DiscreteMeasure(b, rng.random(5))
    assert ga.d_bl(mu, mu) == pytest.approx(0.0, abs=1e-15)
    dab, dba = ga.d_bl(mu, nu), ga.d_bl(nu, mu)
    assert dab >= 0 and dab == pytest.approx(dba, rel=1e-12, abs=1e-15)
    # every unit moves at cost <= 2 or stays unmatched at cost 1 per side
    assert dab <= 2 * min(mu.total, nu.total) + abs(mu.total - nu.total) + 1e-12
    # any measure against the zero measure costs half the cap per unit
    zero = DiscreteMeasure(b, np.zeros(5))
    assert ga.d_bl(mu, zero) == pytest.approx(mu.total)


def test_continuity_scan_rejects_inside_path():
    c = discretize(Ball(ORIGIN, 1.0), 3)
    with pytest.raises(ValueError):
        ga.continuity_scan(c, [[0.5, 0, 0], [2, 0, 0]], descriptor=Ball(ORIGIN, 1.0))
    with pytest.raises(ValueError):
        ga.continuity_scan(c, [[2, 0, 0]], mode="fixed", q=2.0)


def test_cap_mass_counts_direction():
    c = point_cloud([[1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0]])
    m = DiscreteMeasure(c, [0.2, 0.3, 0.5])
    assert ga.cap_mass(m, (5.0, 0, 0), 0.1) == pytest.approx(0.2)
