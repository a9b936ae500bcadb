import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ratelab import InconclusiveError, InputError, Space, SolverError
from ratelab import mappings as mp
from ratelab import schemes as sc
from ratelab.geometry import unit_ball

line = Space(1, radius=1)
half = sc.constant_seq(0.5)


def test_browder_point_examples():
    ball = unit_ball(2)
    u = np.array([0.6, -0.2])
    z = sc.browder_point(ball, mp.identity(), u, half, 0, tau=1e-12)
    assert ball.dist(z, u) <= 1e-12
    c = np.array([0.0, 0.8])
    z = sc.browder_point(ball, mp.constant(c), u, half, 0, tau=1e-12)
    np.testing.assert_allclose(z, 0.5 * c + 0.5 * u, atol=1e-12)
    z = sc.browder_point(Space(2, radius=1), mp.scaled_identity(0.5), (1, 0), half, 0, tau=1e-13)
    np.testing.assert_allclose(z, (2 / 3, 0), atol=1e-12)


def test_viscosity_browder_point_examples():
    ball = unit_ball(2)
    c = np.array([0.4, 0.2])
    a = sc.viscosity_browder_point(ball, mp.scaled_identity(0.5), mp.constant(c), half, 0, tau=1e-13)
    b = sc.browder_point(ball, mp.scaled_identity(0.5), c, half, 0, tau=1e-13)
    np.testing.assert_allclose(a, b, atol=1e-12)
    z = sc.viscosity_browder_point(line, mp.identity(), mp.scaled_identity(0.5), half, 0, tau=1e-13)
    assert abs(z[0]) <= 1e-12
    phi = mp.scaled_identity(0.25)
    z = sc.viscosity_browder_point(line, mp.scaled_identity(0.5), phi, half, 0, tau=1e-13)
    assert abs(z[0]) <= 1e-12


def test_solve_implicit_certificate():
    ball = unit_ball(3)
    sol = sc.solve_implicit(ball, mp.rotation(1.0), mp.scaled_identity(0.5), None, 0.1, 1e-11)
    G = lambda x: ball.w_combine(mp.rotation(1.0)(x), 0.5 * x, 0.1)
    assert ball.dist(sol.point, G(sol.point)) <= 1e-11
    assert sol.error_bound == pytest.approx(sol.residual / (0.1 * 0.5))
    assert sol.iterations <= sol.budget


def test_solve_implicit_budget_exhaustion_raises():
    with pytest.raises(SolverError) as info:
        sc._banach(lambda x: -x, np.array([1.0]), 1e-12, 1.0, 3, line)
    assert info.value.residual == pytest.approx(2.0)


def test_browder_budget_formula():
    assert sc.browder_budget(1e-10, 0.5, 1) == math.ceil(math.log(0.5e-10) / math.log(0.5)) + 1
    assert sc.browder_budget(1e-10, 1.0, 1) == 1
    assert sc.default_tau(0.5) == 1e-10
    assert sc.default_tau(1e-6) == pytest.approx(1e-12)


def test_halpern_examples():
    ball = unit_ball(2)
    x, u = np.array([0.2, 0.1]), np.array([-0.5, 0.5])
    tr = sc.halpern_traj(ball, mp.identity(), u, x, sc.constant_seq(0.25))
    np.testing.assert_allclose(tr[1], 0.75 * x + 0.25 * u)
    c = np.array([0.3, 0.3])
    tr = sc.halpern_traj(ball, mp.constant(c), c, c, half)
    np.testing.assert_allclose(tr.window(0, 20), np.tile(c, (21, 1)))
    tr = sc.halpern_traj(line, mp.identity(), [1.0], [0.0], half)
    np.testing.assert_allclose(tr.window(0, 3)[:, 0], [0, 0.5, 0.75, 0.875])


def test_viscosity_halpern_examples():
    ball = unit_ball(2)
    c, x0 = np.array([0.1, -0.4]), np.array([0.5, 0.5])
    T = mp.rotation(0.7)
    a = sc.viscosity_halpern_traj(ball, T, mp.constant(c), x0, sc.one_over_n_plus_1())
    b = sc.halpern_traj(ball, T, c, x0, sc.one_over_n_plus_1())
    np.testing.assert_array_equal(a.window(0, 50), b.window(0, 50))
    tr = sc.viscosity_halpern_traj(line, mp.identity(), mp.scaled_identity(0.5), [1.0], half)
    np.testing.assert_allclose(tr.window(0, 2)[:, 0], [1, 0.75, 9 / 16])
    tr = sc.viscosity_halpern_traj(ball, mp.scaled_identity(0.5), mp.scaled_identity(0.25), [0.0, 0.0], half)
    assert np.all(tr.window(0, 10) == 0)


def test_km_examples():
    tr = sc.km_traj(unit_ball(2), mp.identity(), [0.3, 0.4], half)
    np.testing.assert_array_equal(tr.window(0, 5), np.tile([0.3, 0.4], (6, 1)))
    tr = sc.km_traj(line, mp.scaled_identity(-1.0), [1.0], half)
    np.testing.assert_allclose(tr.window(0, 4)[:, 0], [1, 0, 0, 0, 0])
    tr = sc.km_traj(unit_ball(2), mp.rotation(math.pi), [1.0, 0.0], half)
    np.testing.assert_allclose(tr[1], [0, 0], atol=1e-15)


def test_vkm_examples():
    ball = unit_ball(2)
    T, phi, x0 = mp.rotation(0.3), mp.scaled_identity(0.5), np.array([0.6, -0.1])
    a = sc.vkm_traj(ball, T, phi, x0, sc.one_over_n_plus_1(), sc.constant_seq(1.0))
    b = sc.viscosity_halpern_traj(ball, T, phi, x0, sc.one_over_n_plus_1())
    np.testing.assert_allclose(a.window(0, 100), b.window(0, 100), atol=1e-15)
    a = sc.vkm_traj(ball, T, phi, x0, sc.zero_seq(), half)
    b = sc.km_traj(ball, T, x0, half)
    np.testing.assert_array_equal(a.window(0, 100), b.window(0, 100))
    tr = sc.vkm_traj(line, mp.identity(), mp.constant([0.0]), [1.0], half, half)
    assert tr[1][0] == pytest.approx(0.75)


def test_start_outside_c_rejected():
    with pytest.raises(InputError):
        sc.km_traj(unit_ball(2), mp.identity(), [2.0, 0.0], half)


def test_sequence_domain_enforced():
    with pytest.raises(InputError):
        sc.constant_seq(1.5)(0)
    with pytest.raises(InputError):
        sc.harmonic_power(1, scale=2.0)(0)
    assert sc.zero_seq()(4) == 0


def test_horizon_budget_is_inconclusive():
    tr = sc.km_traj(line, mp.identity(), [0.0], half)
    tr.max_horizon = 10
    with pytest.raises(InconclusiveError):
        tr[10]


def test_inject_zero_errors_is_identity():
    ball = unit_ball(2)
    base = sc.viscosity_halpern_traj(ball, mp.rotation(0.4), mp.scaled_identity(0.5), [0.5, 0.0], half)
    pert = sc.inject_errors(sc.viscosity_halpern_traj(ball, mp.rotation(0.4), mp.scaled_identity(0.5), [0.5, 0.0], half), sc.zero_seq())
    np.testing.assert_array_equal(base.window(0, 30), pert.window(0, 30))


def test_inject_errors_explicit_respects_budget():
    ball = Space(2, radius=0.5, b=1)
    errs = sc.harmonic_power(2)
    tr = sc.inject_errors(sc.viscosity_halpern_traj(ball, mp.scaled_identity(0.5), mp.constant([0.4, 0.2]), [0.3, -0.2], half), errs)
    res = tr.residuals(0, 200)
    assert np.all(res[1:] <= errs.values(200) + 1e-12)
    assert ball.contains(tr.window(0, 200))


def test_inject_errors_implicit_respects_budget():
    ball = Space(2, radius=0.5, b=1)
    errs = sc.harmonic_power(2)
    base = sc.viscosity_browder_traj(ball, mp.scaled_identity(0.5), mp.constant([0.4, 0.2]), sc.one_over_n_plus_1())
    tr = sc.inject_errors(base, errs)
    res = tr.residuals(0, 100)
    assert np.all(res <= errs.values(101) + 1e-12)
    assert np.any(tr.injected(0, 100) > 0)


def test_error_ratio_premise_examples():
    eps = sc.harmonic_power(2)
    rho = lambda e: max(0, math.ceil(1 / e) - 1)
    rep = sc.error_ratio_premise(eps, sc.one_over_n_plus_1(), rho=rho)
    assert rep.passed
    rep = sc.error_ratio_premise(sc.constant_seq(0.01), sc.constant_seq(0.5))
    assert rep.failed
    rep = sc.error_ratio_premise(sc.constant_seq(0.01), sc.constant_seq(0.5), rho=lambda e: 0, eps_grid=(0.1, 0.01))
    assert rep.failed
    assert rep.witnesses == [{"eps": 0.01, "rho": 0, "index": 0, "ratio": 0.02}]


def test_implicit_trajectory_records_certificates():
    ball = Space(2, radius=0.5, b=1)
    tr = sc.viscosity_browder_traj(ball, mp.scaled_identity(0.5), mp.constant([0.4, 0.2]), sc.one_over_n_plus_1())
    alphas = sc.one_over_n_plus_1().values(51)
    taus = np.minimum(1e-10, alphas * 1e-6)
    assert np.all(tr.residuals(0, 50) <= taus)
    assert tr.slack(0, 50) == pytest.approx(2 * tr.error_bounds(0, 50).max())


def test_to_csv(tmp_path):
    tr = sc.halpern_traj(line, mp.identity(), [1.0], [0.0], half)
    path = tmp_path / "t.csv"
    tr.to_csv(path, upto=3)
    rows = path.read_text().splitlines()
    assert rows[0] == "index,x0,residual,injected_error"
    assert rows[3].startswith("2,0.75,")


radii = st.floats(min_value=0.0, max_value=1.0)
angles = st.floats(min_value=0, max_value=2 * math.pi)


@settings(max_examples=40, deadline=None)
@given(radii, angles, st.floats(0.05, 1.0), st.floats(0.0, 0.9))
def test_every_emitted_point_in_c(r, theta, beta, c):
    ball = unit_ball(2)
    x0 = r * np.array([math.cos(theta), math.sin(theta)])
    tr = sc.vkm_traj(ball, mp.rotation(1.3), mp.scaled_identity(c), x0, sc.one_over_n_plus_1(), sc.constant_seq(beta))
    assert ball.contains(tr.window(0, 60), 1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(-0.9, 0.9))
def test_browder_residual_below_tolerance(alpha, u):
    sol = sc.solve_implicit(line, mp.scaled_identity(-0.7), None, np.array([u]), alpha, 1e-11)
    G = lambda x: line.w_combine(-0.7 * x, np.array([u]), alpha)
    assert line.dist(sol.point, G(sol.point)) <= 1e-11
    exact = alpha * u / (1 + 0.7 * (1 - alpha))
    assert abs(sol.point[0] - exact) <= sol.error_bound + 1e-15
