import json
import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ratelab import InconclusiveError, Space
from ratelab import mappings as mp
from ratelab import rate_calculus as rc
from ratelab import schemes as sc
from ratelab import transformers as tr
from ratelab import verifier as vf
from ratelab.geometry import unit_ball

line = Space(1, radius=1)
half = sc.constant_seq(0.5)
plus2 = rc.parse_counterfunction("affine 1 2")
double = rc.parse_counterfunction("affine 2 0")


def geometric():
    """x_n = 1 - 2^-n."""
    return sc.halpern_traj(line, mp.identity(), [1.0], [0.0], half)


def test_constant_trajectory_witness_zero():
    tr_ = sc.km_traj(unit_ball(2), mp.identity(), [0.2, 0.2], half)
    w = vf.find_metastable_window(tr_, 1e-9, double, 0)
    assert w.n == 0 and w.max_pairwise_distance == 0.0


def test_geometric_window_examples():
    w = vf.find_metastable_window(geometric(), 0.25, plus2, 10)
    assert (w.n, w.window_end) == (2, 4)
    assert w.max_pairwise_distance == pytest.approx(3 / 16)
    # f(0) = 0 makes the window at 0 a single point; from n = 1 on the
    # diameter is 2^-n - 2^-2n, first <= 2^-10 at n = 10
    assert vf.find_metastable_window(geometric(), 2**-10, double, 100).n == 0
    w = vf.find_metastable_window(geometric(), 2**-10, double, 100, N=1)
    assert w.n == 10


def test_window_start_respects_N():
    w = vf.find_metastable_window(geometric(), 0.25, plus2, 10, N=5)
    assert w.n == 5


def test_falsified_bound_returns_none():
    assert vf.find_metastable_window(geometric(), 2**-10, double, 9, N=1) is None


def test_window_beyond_feasible_index_is_inconclusive():
    far = rc.parse_counterfunction("const 2000000")
    with pytest.raises(InconclusiveError):
        vf.find_metastable_window(geometric(), 2**-60, far, 3)


def test_bound_beyond_feasible_without_witness_is_inconclusive(monkeypatch):
    monkeypatch.setattr(vf, "FEASIBLE_INDEX", 40)
    with pytest.raises(InconclusiveError):
        vf.find_metastable_window(geometric(), 1e-30, double, 10**9, N=1)


def test_cauchy_rate_examples():
    const = sc.km_traj(unit_ball(2), mp.identity(), [0.1, 0.0], half)
    assert vf.check_cauchy_rate(const, lambda e: 0, [1, 0.01]).passed
    rho = lambda e: max(0, math.ceil(math.log2(2 / float(e))))
    assert vf.check_cauchy_rate(geometric(), rho, [1, 0.25, 2**-10, 2**-20]).passed
    rep = vf.check_cauchy_rate(geometric(), lambda e: 0, [0.25])
    assert rep.failed
    (wit,) = rep.witnesses
    assert wit["pair"][0] == 0 and wit["distance"] > 0.25
    g = geometric()
    assert abs(g[3][0] - g[0][0]) == 0.875


def test_cauchy_rate_infeasible_is_inconclusive():
    rep = vf.check_cauchy_rate(geometric(), lambda e: 10**7, [0.5])
    assert rep.status == "inconclusive"


def test_brute_force_xu_examples():
    ora = vf.brute_force_xu(lambda i: 0.5, 1.0, lambda i: 0.0, 0, 40, 1.0, eps=0.25)
    assert ora.premise_ok
    np.testing.assert_allclose(ora.a[:10], [2.0**-i for i in range(10)])
    A = rc.DivergenceRate(lambda k: 2 * k, monotone=True)
    s = rc.sigma1(A, 1, F(1, 4), 0)
    assert s == 7
    assert ora.confirms(0.25, s, 40) and ora.a[7] == 2**-7
    eps = 0.1
    ora = vf.brute_force_xu(lambda i: 0.3, 1.0, lambda i: eps / 2, 0, 300, 1.0, eps=eps)
    assert ora.premise_ok and ora.a[-1] == pytest.approx(eps / 2)
    assert ora.first_good_index(eps, 300) <= rc.sigma1(rc.DivergenceRate(lambda k: math.ceil(k / 0.3)), 1, F(1, 10), 0)
    ora = vf.brute_force_xu(lambda i: 0.0, 1.0, lambda i: 0.0, 0, 20, 1.0, eps=0.25)
    assert not ora.premise_ok and "divergence" in ora.premise_note
    assert np.all(ora.a == 1.0)


def test_divergence_and_product_rate_helpers():
    lams = np.full(100, 0.5)
    A = vf.divergence_rate_from(lams)
    assert A(1) == 1 and A(3) == 5 and A(0) == 0
    assert A(1000) > 100
    P = vf.product_rate_from(lams)
    assert P(0, 0.25) == 1 and P(4, 0.5) == 4


@settings(max_examples=60, deadline=None)
@given(
    st.floats(0.05, 1.0),
    st.floats(0.0, 1.0),
    st.floats(0.0, 0.4),
    st.sampled_from([F(1, 2), F(1, 4), F(1, 16), F(1, 100)]),
    st.integers(0, 5),
)
def test_sigma1_sound_against_extremal_sequence(lam, a0, bfrac, eps, N):
    # b_i <= eps/2 on [N, p]; before N it may be as large as B
    b_seq = lambda i: 1.0 if i < N else bfrac * float(eps)
    A = rc.DivergenceRate(lambda k: math.ceil(k / lam), monotone=True)
    s = rc.sigma1(A, 1, eps, N)
    p = s + 200
    ora = vf.brute_force_xu(lambda i: lam, a0, b_seq, N, p, 1.0, eps=float(eps))
    assert ora.premise_ok
    assert ora.confirms(float(eps), s, p)


def halpern_bound(eps, f):
    inp = tr.TransformerInputs(b=1, delta=F(1, 2), theta=rc.lift_cauchy(rc.counterfunction_rate(rc.parse_eps_rate("inv 1"))), A=rc.DivergenceRate(lambda k: 2 * k, monotone=True))
    return tr.psi_viscosity_halpern_single(inp, eps, f)


F_GRID = [rc.parse_counterfunction(s) for s in ("const 10", "affine 1 5", "affine 2 0")]


def test_bound_soundness_viscosity_browder():
    ball = Space(2, radius=0.5, b=1)
    traj = sc.viscosity_browder_traj(ball, mp.scaled_identity(0.5), mp.constant([0.4, 0.2]), sc.one_over_n_plus_1())
    inp = tr.TransformerInputs(b=1, delta=F(1, 2), theta=rc.lift_cauchy(rc.counterfunction_rate(rc.parse_eps_rate("inv 1"))))
    rep = vf.check_bound_soundness(traj, lambda e, f: tr.psi_viscosity_browder_single(inp, e, f), [1, 0.5, 0.25], F_GRID)
    assert rep.passed
    rows = rep.measured["rows"]
    assert rows[0]["bound"] == 32 and rows[0]["witness"] <= 32
    assert len(rep.details["bound_traces"]) == 9


def test_vkm_beta_one_matches_viscosity_halpern():
    ball = Space(2, radius=0.5, b=1)
    T, phi, x0 = mp.scaled_identity(0.5), mp.constant([0.4, 0.2]), [0.3, -0.2]
    a = sc.vkm_traj(ball, T, phi, x0, half, sc.constant_seq(1.0))
    b = sc.viscosity_halpern_traj(ball, T, phi, x0, half)
    ra = vf.check_bound_soundness(a, halpern_bound, [3, 1], F_GRID, provenance={})
    rb = vf.check_bound_soundness(b, halpern_bound, [3, 1], F_GRID, provenance={})
    assert ra.passed
    assert json.dumps(ra.measured, default=str) == json.dumps(rb.measured, default=str)
    assert ra.witnesses == rb.witnesses


def test_corrupted_bound_fails():
    traj = sc.halpern_traj(line, mp.identity(), [1.0], [0.0], half)
    rep = vf.check_bound_soundness(traj, lambda e, f: 0, [2**-10], [rc.parse_counterfunction("affine 1 5")])
    assert rep.failed
    (wit,) = rep.witnesses
    assert wit["bound"] == 0 and wit["distance"] > 2**-10


def test_parallel_rows_keep_grid_order():
    traj = geometric()
    bound = lambda e, f: 64
    eps = [0.5, 0.25, 2**-8, 2**-12]
    serial = vf.check_bound_soundness(traj, bound, eps, F_GRID)
    parallel = vf.check_bound_soundness(traj, bound, eps, F_GRID, max_workers=4)
    assert serial.measured == parallel.measured


def test_inconclusive_distinct_from_failure():
    traj = geometric()
    rep = vf.check_bound_soundness(traj, lambda e, f: 5, [0.5], [rc.parse_counterfunction("const 3000000")])
    assert rep.status == "inconclusive" and not rep.witnesses


def test_slack_enters_tolerance():
    ball = Space(2, radius=0.5, b=1)
    traj = sc.viscosity_browder_traj(ball, mp.scaled_identity(0.5), mp.constant([0.4, 0.2]), sc.one_over_n_plus_1())
    w = vf.find_metastable_window(traj, 0.5, F_GRID[1], 32)
    assert w.tolerance == pytest.approx(0.5 + traj.slack(w.n, w.window_end) + vf.FLOAT_SLACK)
    assert traj.slack(w.n, w.window_end) > 0


def test_window_diameter_large_line_shortcut(monkeypatch):
    monkeypatch.setattr(vf, "MAX_WINDOW", 10)
    diam, pair = vf.window_diameter(geometric(), 0, 50)
    assert diam == pytest.approx(1 - 2**-50) and pair == (0, 50)
    traj2 = sc.km_traj(unit_ball(2), mp.rotation(1.0), [0.5, 0.0], half)
    with pytest.raises(InconclusiveError):
        vf.window_diameter(traj2, 0, 50)


def test_reports_to_csv(tmp_path):
    rep = vf.check_cauchy_rate(geometric(), lambda e: 0, [0.25])
    out = tmp_path / "s.csv"
    vf.reports_to_csv([rep], out)
    assert out.read_text().splitlines() == ["check_id,status,n_witnesses", f"{rep.check_id},fail,1"]
