import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from epicampaign.errors import ParameterError
from epicampaign.joint import joint_solve, project_to_seed_simplex
from epicampaign.network import from_mapping
from epicampaign.pmp import fbs_solve
from epicampaign.scenario import CostModel, Scenario, SeedSpec, TimeProfile

from oracles import grid_projection_2class

TOY = from_mapping({4: 0.5, 5: 0.5})
SMALL = from_mapping({2: 0.3, 3: 0.5, 5: 0.2})


def toy_scenario(dist=TOY, **kw):
    base = dict(n_grid=21, beta=TimeProfile.constant(0.3), gamma=TimeProfile.constant(3.0),
                cost=CostModel(5.0), seed=SeedSpec("uniform", i0=0.05))
    base.update(kw)
    return Scenario(dist, **base)


# --- projection ----------------------------------------------------------------

def test_feasible_point_is_unchanged():
    v = np.array([0.1, 0.02, 0.05])
    B = float(SMALL.p @ v)
    out = project_to_seed_simplex(v, SMALL, B)
    np.testing.assert_allclose(out.values, v, atol=1e-12)


def test_single_class_projection_is_forced():
    dist = from_mapping({7: 1.0})
    out = project_to_seed_simplex(np.array([0.9]), dist, 0.3)
    assert out.values[0] == pytest.approx(0.3, abs=1e-12)


def test_two_class_projection_matches_dense_scan():
    out = project_to_seed_simplex(np.array([1.0, 0.0]), TOY, 0.25)
    ref = grid_projection_2class([1.0, 0.0], TOY.p, 0.25)
    np.testing.assert_allclose(out.values, ref, atol=1e-4)
    np.testing.assert_allclose(out.values, [0.5, 0.0], atol=1e-12)


@pytest.mark.parametrize("B", [0.0, -0.1, 1.5, float("nan")])
def test_seed_budget_out_of_range(B):
    with pytest.raises(ParameterError):
        project_to_seed_simplex(np.zeros(3), SMALL, B)


@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3), st.floats(0.001, 1.0))
def test_projection_is_feasible(v, B):
    out = project_to_seed_simplex(np.array(v), SMALL, B).values
    assert np.all(out >= 0) and np.all(out <= 1)
    assert float(SMALL.p @ out) == pytest.approx(B, abs=1e-9)


@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3), st.floats(0.001, 1.0))
def test_projection_is_idempotent(v, B):
    once = project_to_seed_simplex(np.array(v), SMALL, B).values
    twice = project_to_seed_simplex(once, SMALL, B).values
    np.testing.assert_allclose(twice, once, atol=1e-9)


# --- joint solve ---------------------------------------------------------------

def test_full_seed_budget_infects_everyone():
    rep = joint_solve(toy_scenario(), 1.0)
    np.testing.assert_allclose(rep.seed.values, 1.0)
    assert rep.J == pytest.approx(1.0, abs=1e-12)


def test_single_class_reduces_to_sweep():
    dist = from_mapping({6: 1.0})
    scn = toy_scenario(dist)
    rep = joint_solve(scn, 0.05)
    ref = fbs_solve(scn, np.array([0.05]))
    assert rep.J == pytest.approx(ref.J, abs=1e-10)


def test_toy_matches_exhaustive_seed_grid():
    scn = toy_scenario()
    B = 0.05
    p1, p2 = TOY.p
    x1 = np.linspace(0.0, B / p1, 201)
    grid_J = [fbs_solve(scn, np.array([a, (B - p1 * a) / p2])).J for a in x1]
    rep = joint_solve(scn, B, n_starts=3)
    assert rep.J >= max(grid_J) - 1e-10
    assert abs(rep.J - max(grid_J)) < 1e-4


def test_pl2_small_seed_targets_high_degrees(pl2_scn):
    rep = joint_solve(pl2_scn, 0.01)
    p = pl2_scn.dist.p
    mass = p * rep.seed.values
    n = pl2_scn.dist.n_classes
    top = mass[n - n // 4:].sum() / mass.sum()
    assert top >= 0.5


@pytest.mark.parametrize("B", [0.01, 0.2])
def test_joint_dominates_uniform_and_is_feasible(er_scn, B):
    rep = joint_solve(er_scn, B)
    uniform = fbs_solve(er_scn, np.full(er_scn.dist.n_classes, B))
    assert rep.J >= uniform.J - 1e-8
    x = rep.seed.values
    assert np.all(x >= 0) and np.all(x <= 1)
    assert rep.seed.mass(er_scn.dist.p) == pytest.approx(B, abs=1e-9)
    assert np.all(np.diff(rep.history) >= 0)


def _adjoint_fd_error(n_grid):
    scn = toy_scenario(SMALL, n_grid=n_grid)
    i0 = np.array([0.05, 0.04, 0.08])
    rep = fbs_solve(scn, i0, tol=1e-12)
    h = 1e-5
    err = []
    for k in range(3):
        up, dn = i0.copy(), i0.copy()
        up[k] += h
        dn[k] -= h
        fd = (fbs_solve(scn, up, tol=1e-12).J - fbs_solve(scn, dn, tol=1e-12).J) / (2 * h)
        err.append(abs(rep.adjoints.values[k, 0] - fd))
    return max(err)


def test_adjoint_gradient_matches_finite_differences():
    assert _adjoint_fd_error(201) < 2e-6


def test_adjoint_gradient_error_is_second_order():
    # the initial adjoint is the gradient of the continuous problem; the gap to
    # the discrete one shrinks like dt^2
    ratio = _adjoint_fd_error(21) / _adjoint_fd_error(81)
    assert 12 < ratio < 20


def test_fd_gradient_reaches_same_optimum():
    scn = toy_scenario(SMALL)
    a = joint_solve(scn, 0.05)
    b = joint_solve(scn, 0.05, gradient="fd")
    assert a.J == pytest.approx(b.J, abs=1e-6)


def test_unknown_gradient_rejected():
    with pytest.raises(ParameterError):
        joint_solve(toy_scenario(SMALL), 0.05, gradient="exact")


def test_joint_is_deterministic():
    scn = toy_scenario(SMALL)
    a = joint_solve(scn, 0.05, n_starts=4)
    b = joint_solve(scn, 0.05, n_starts=4)
    np.testing.assert_array_equal(a.seed.values, b.seed.values)
    assert a.J == b.J


def test_seed_csv_layout():
    rep = joint_solve(toy_scenario(SMALL), 0.05)
    lines = rep.seed.to_csv().splitlines()
    assert lines[0] == "k,i0_k"
    assert [int(l.split(",")[0]) for l in lines[1:]] == [2, 3, 5]
