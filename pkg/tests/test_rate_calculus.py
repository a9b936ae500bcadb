from fractions import Fraction

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

import oracles
from ratelab import ContractError, InputError
from ratelab.rate_calculus import (
    Affine,
    CauchyRate,
    Const,
    DivergenceRate,
    MetaRate,
    ProductRate,
    ShiftedMetaRate,
    cauchy_as_meta,
    ceil_clamped,
    ceil_ln,
    ceil_log,
    exact,
    lift_cauchy,
    meta_const_as_cauchy,
    monotone_majorant,
    parse_counterfunction,
    parse_eps_rate,
    shift_meta,
    shifted_product_rate,
    sigma1,
    sigma2,
    sigma2_with_meta,
)
from ratelab.verifier import brute_force_xu

A2 = DivergenceRate(lambda k: 2 * k, monotone=True)
A1 = DivergenceRate(lambda k: k, monotone=True)
inv = CauchyRate(lambda e: ceil_clamped(1 / e))


def test_ceil_clamped_examples():
    assert ceil_clamped(-3.2) == 0
    assert ceil_clamped(0) == 0
    assert ceil_clamped(2.1) == 3
    assert ceil_clamped(Fraction(7, 2)) == 4
    with pytest.raises(InputError):
        ceil_clamped(float("nan"))


def test_exact_parses_rationals():
    assert exact("3/8") == Fraction(3, 8)
    assert exact(0.5) == Fraction(1, 2)
    with pytest.raises(InputError):
        exact("a/b")
    with pytest.raises(InputError):
        exact(float("inf"))


def test_ceil_log_is_least_power():
    assert ceil_log(Fraction(1, 2), Fraction(1, 16)) == 4
    assert ceil_log(Fraction(1, 2), Fraction(1, 17)) == 5
    assert ceil_log(Fraction(1, 2), 2) == 0
    with pytest.raises(InputError):
        ceil_log(Fraction(3, 2), Fraction(1, 2))


@settings(max_examples=200, deadline=None)
@given(st.fractions(min_value=Fraction(1, 1000), max_value=Fraction(999, 1000)),
       st.fractions(min_value=Fraction(1, 10**6), max_value=Fraction(2)))
def test_ceil_log_matches_oracle(base, target):
    assume(target > 0)
    m = ceil_log(base, target)
    assert m == oracles.log_ceil(base, target)
    assert base**m <= target or m == 0
    if m > 0:
        assert base ** (m - 1) > target


def test_ceil_log_large_exponent_path():
    base = 1 - Fraction(1, 10**6)
    m = ceil_log(base, Fraction(1, 10**9))
    assert m == oracles.log_ceil(base, Fraction(1, 10**9))


def test_sigma1_examples():
    assert sigma1(A2, 1, 2, 0) == 1
    assert sigma1(A2, 1, 1, 0) == 3
    assert sigma1(A1, 4, 1, 2) == 6
    with pytest.raises(InputError):
        sigma1(A1, 0, 1, 0)


def test_sigma2_examples():
    shift_inv = shifted_product_rate(parse_eps_rate("inv 1"))
    assert sigma2(shift_inv, 1, 1, 0) == 3
    assert sigma2(shift_inv, 1, 2, 5) == 7
    ident = ProductRate(lambda m, e: m)
    assert sigma2(ident, 3, Fraction(1, 7), 0) == 1


def test_sigma2_clamps_large_eps_and_records_it():
    value, meta = sigma2_with_meta(shifted_product_rate(parse_eps_rate("inv 1")), 1, 10, 0)
    assert meta["clamped"] and meta["product_eps"] == 1
    assert value == 2


def test_cauchy_as_meta_examples():
    assert cauchy_as_meta(inv)(Fraction(1, 2), Const(3)) == 2
    assert cauchy_as_meta(CauchyRate(lambda e: 0))(Fraction(1, 9), Affine(2, 1)) == 0
    sq = CauchyRate(lambda e: ceil_clamped(1 / (e * e)))
    assert cauchy_as_meta(sq)(Fraction(1, 3), Const(0)) == 9


def test_meta_const_as_cauchy_examples():
    phi = MetaRate(lambda e, f: ceil_clamped(1 / e), f_independent=True)
    assert meta_const_as_cauchy(phi)(1) == 1
    five = MetaRate(lambda e, f: 5, f_independent=True)
    assert all(meta_const_as_cauchy(five)(e) == 5 for e in (Fraction(1, 3), 1, 7))
    with pytest.raises(ContractError):
        meta_const_as_cauchy(MetaRate(lambda e, f: f(0)))


def test_round_trip_is_identity_on_grid():
    back = meta_const_as_cauchy(cauchy_as_meta(inv))
    for k in range(12):
        e = Fraction(1, 2**k)
        assert back(e) == inv(e)


def test_shift_meta_examples():
    assert shift_meta(MetaRate(lambda e, f: 5), 1, Const(0), 9) == 9
    assert shift_meta(MetaRate(lambda e, f: f(0)), 1, Affine(1, 3), 0) == 3
    assert shift_meta(MetaRate(lambda e, f: 0), 1, Affine(2, 2), 0) == 0


def test_shift_meta_uses_shifted_counterfunction():
    # phi(eps, g) = g(0) sees f(max{N, 0}) = f(N)
    assert shift_meta(MetaRate(lambda e, g: g(0)), 1, Affine(1, 3), 4) == 7


def test_monotone_majorant_examples():
    theta = ShiftedMetaRate(lambda e, f, N: max(0, 10 - N))
    maj = monotone_majorant(theta)
    assert maj(1, Const(0), 3) == 10
    mono = lift_cauchy(inv)
    assert monotone_majorant(mono) is mono
    assert monotone_majorant(ShiftedMetaRate(lambda e, f, N: 7))(1, Const(0), 5) == 7


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 40), st.integers(0, 40), st.sampled_from([Fraction(1), Fraction(1, 3), Fraction(2, 7)]))
def test_majorant_is_monotone_and_dominates(n1, n2, eps):
    theta = ShiftedMetaRate(lambda e, f, N: (7 * N) % 11)
    maj = monotone_majorant(theta)
    lo, hi = sorted((n1, n2))
    assert maj(eps, Const(0), lo) <= maj(eps, Const(0), hi)
    assert maj(eps, Const(0), hi) >= theta(eps, Const(0), hi)


def test_lift_cauchy_flags():
    th = lift_cauchy(inv)
    assert th.monotone_in_N and th.f_independent
    assert th(Fraction(1, 4), Const(0), 2) == 4
    assert th(Fraction(1, 4), Const(0), 9) == 9


def test_counterfunction_dsl_round_trip():
    for text in ("const 10", "affine 1 5", "affine 2 0", "pow 2 1", "max const 4 affine 3 1"):
        f = parse_counterfunction(text)
        assert parse_counterfunction(f.dsl()) == f
    f = parse_counterfunction("max const 4 affine 3 1")
    assert [f(n) for n in range(3)] == [4, 4, 7]
    with pytest.raises(InputError):
        parse_counterfunction("affine 1")
    with pytest.raises(InputError):
        parse_counterfunction("const -1")
    with pytest.raises(InputError):
        parse_counterfunction("const 1 2")


def test_eps_rate_dsl():
    r = parse_eps_rate("max inv 1 offset 1 invpow 2 2")
    assert r(Fraction(1, 2)) == max(2, 8 - 1)
    assert parse_eps_rate(r.dsl()) == r
    assert parse_eps_rate("zero")(Fraction(1, 99)) == 0
    with pytest.raises(InputError):
        parse_eps_rate("log 2")


def test_divergence_rate_validation():
    half = lambda i: 0.5
    assert A2.validate(half, range(1, 20)) is None
    too_fast = DivergenceRate(lambda k: k)
    assert too_fast.validate(half, range(1, 5)) == 2


def test_product_rate_validation():
    half = lambda i: 0.5
    ok = ProductRate(lambda m, e: m + ceil_log(Fraction(1, 2), e))
    assert ok.validate(half, range(5), [Fraction(1, 2), Fraction(1, 10)]) is None
    bad = ProductRate(lambda m, e: m)
    assert bad.validate(half, [0], [Fraction(1, 10)]) == (0, Fraction(1, 10))


def test_sigma1_matches_oracle_on_grid():
    for B in (1, 2, 5):
        for k in range(8):
            eps = Fraction(3, 2**k)
            for N in (0, 3):
                assert sigma1(A2, B, eps, N) == oracles.sigma1(lambda j: 2 * j, B, eps, N)


lam_lists = st.lists(st.floats(min_value=0.05, max_value=1.0), min_size=1, max_size=6)


@settings(max_examples=150, deadline=None)
@given(lam_lists, st.floats(0, 1), st.integers(0, 20), st.sampled_from([Fraction(1), Fraction(1, 4), Fraction(1, 16)]),
       st.floats(0, 1))
def test_sigma1_soundness_on_xu_sequences(lams, a0, N, eps, frac):
    # periodic lambda with positive minimum: divergence rate A(k) = ceil(k / min) * len - 1 is valid
    period = len(lams)
    lo = min(lams)
    A = DivergenceRate(lambda k: max(0, ceil_clamped(Fraction(k) / Fraction(lo)) * period - 1), monotone=True)
    p = sigma1(A, 1, eps, N) + 30
    bs = lambda i: float(eps) / 2 * frac if i >= N else 1.0
    orc = brute_force_xu(lambda i: lams[i % period], a0, bs, N, p, B=1.0, eps=float(eps))
    assert orc.premise_ok
    assert orc.confirms(float(eps), sigma1(A, 1, eps, N), p)


@settings(max_examples=150, deadline=None)
@given(st.floats(min_value=0.05, max_value=0.95), st.floats(0, 1), st.integers(0, 20),
       st.sampled_from([Fraction(1), Fraction(1, 4), Fraction(1, 16)]))
def test_sigma2_soundness_on_xu_sequences(lam, a0, N, eps):
    q = Fraction(1) - Fraction(lam)
    Ap = ProductRate(lambda m, e: m + ceil_log(q, e))
    p = sigma2(Ap, 1, eps, N) + 30
    orc = brute_force_xu(lambda i: lam, a0, lambda i: 0.0 if i >= N else 1.0, N, p, B=1.0, eps=float(eps))
    assert orc.confirms(float(eps), sigma2(Ap, 1, eps, N), p)
