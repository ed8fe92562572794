import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coneground.geometry import (GeometryError, RevolutionSplit, exponent_report, measure_weight,
                                  parse_domain, polar_to_st, spherical_to_stt, st_to_polar)


def test_polar_examples():
    assert np.allclose(polar_to_st(1, 0), (1, 0))
    assert np.allclose(polar_to_st(1, math.pi / 4), (math.sqrt(2) / 2, math.sqrt(2) / 2))
    assert np.allclose(polar_to_st(2, math.pi / 3), (1, math.sqrt(3)))


def test_polar_round_trip():
    rng = np.random.default_rng(7)
    r = rng.uniform(0.01, 10, 100)
    th = rng.uniform(0, math.pi / 2, 100)
    r2, th2 = st_to_polar(*polar_to_st(r, th))
    assert np.max(np.abs(r2 - r)) < 1e-12
    assert np.max(np.abs(th2 - th)) < 1e-12


def test_spherical_examples():
    assert np.allclose(spherical_to_stt(1, math.pi / 2, 0), (1, 0, 0), atol=1e-15)
    for phi in (0.0, 0.3, 1.2):
        assert np.allclose(spherical_to_stt(1, 0, phi), (0, 0, 1))
    assert np.allclose(spherical_to_stt(2, math.pi / 4, math.pi / 4), (1, 1, math.sqrt(2)))
    s, t, tau = spherical_to_stt(3.0, 0.7, 0.2)
    assert math.isclose(s * s + t * t + tau * tau, 9.0)


def test_exponent_examples():
    rep = exponent_report(RevolutionSplit((2, 2)))
    assert rep.two_star == 4
    assert rep.theoremA_mono == 6
    assert rep.pi4_kminus_upper == 6
    rep3 = exponent_report(RevolutionSplit((2, 2, 2)))
    assert math.isclose(rep3.p1, 10 / 3) and math.isclose(rep3.p2, 10 / 3)
    assert rep3.p1 > rep3.two_star == 3
    rep = exponent_report(RevolutionSplit((2, 2)), beta=1.0)
    assert rep.breaking_threshold == 26
    N = 4
    assert math.isclose(16 * (N + 2) / (N - 2) ** 2 + 2, 26)


def test_n_equals_one_sentinel():
    rep = exponent_report(RevolutionSplit((3, 1)))
    assert math.isinf(rep.theoremA_mono)
    assert rep.to_dict()["theoremA_mono"] == "inf"


def test_split_validation():
    with pytest.raises(GeometryError):
        RevolutionSplit((2, 0))
    with pytest.raises(GeometryError):
        RevolutionSplit((1, 1))
    with pytest.raises(GeometryError):
        RevolutionSplit.parse("2,x")


splits = st.lists(st.integers(1, 6), min_size=2, max_size=3).filter(lambda p: sum(p) >= 3)


@settings(max_examples=60, deadline=None)
@given(splits, st.floats(0.1, 5), st.floats(0.1, 100))
def test_bounds_exceed_two(parts, alpha, beta):
    rep = exponent_report(RevolutionSplit(tuple(parts)), alpha, beta)
    vals = [rep.two_star, rep.theoremA_no_mono, rep.theoremA_mono, rep.pi4_kminus_upper,
            rep.henon_upper, rep.singular_upper, rep.breaking_threshold, rep.fullspace_window[0]]
    if len(parts) == 3:
        vals += [rep.p1, rep.p2, rep.p3]
    assert all(v > 2 for v in vals)


def test_alpha_zero_window_edge():
    # with alpha = 0 the full-space window starts exactly at 2
    rep = exponent_report(RevolutionSplit((2, 2)), alpha=0.0)
    assert rep.singular_upper == 2 and rep.fullspace_window[0] == 2


@settings(max_examples=60, deadline=None)
@given(splits, st.floats(0, 5), st.floats(0, 5))
def test_monotone_in_alpha(parts, a1, a2):
    lo, hi = sorted((a1, a2))
    r1 = exponent_report(RevolutionSplit(tuple(parts)), lo)
    r2 = exponent_report(RevolutionSplit(tuple(parts)), hi)
    assert r2.henon_upper >= r1.henon_upper
    assert r2.singular_upper >= r1.singular_upper


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 8), st.integers(2, 8), st.integers(2, 8))
def test_p1_supercritical(m, n, l):
    rep = exponent_report(RevolutionSplit((m, n, l)))
    assert rep.p1 > rep.two_star
    if m >= n:
        assert rep.p2 >= rep.p1


@pytest.mark.parametrize("N", [5, 7, 9, 11, 13])
def test_p3_odd_dimension(N):
    l = (N - 1) // 2
    best = max(exponent_report(RevolutionSplit((m, N - l - m, l))).p3
               for m in range(1, N - l))
    assert math.isclose(best, 2 * (N + 3) / (N - 1))


def test_measure_weight_examples():
    assert math.isclose(measure_weight((1, math.pi / 4), (2, 2)), 0.5)
    assert measure_weight((1.3, 0.0), (2, 2)) == 0
    assert abs(measure_weight((1, math.pi / 2, math.pi / 4), (2, 2, 2))) < 1e-15


def test_parse_domain_presets():
    ann = parse_domain("annulus(1,2)", "2,2")
    assert ann.radial_range() == (1.0, 2.0)
    assert parse_domain("ball", "2,2").bounded_at_origin
    bump = parse_domain("pi4-bump(1,2.2,0.05)", "2,2")
    th = np.linspace(0, math.pi / 4, 50)
    assert np.all(np.diff(bump.inner(th)) >= 0) and np.all(np.diff(bump.outer(th)) <= 0)
    assert parse_domain("truncated-rn(8)", "2,2").radius == 8
    for bad in ("annulus(2,1)", "bogus", "pi4-bump(1,1.1,0.4)", "annulus(1"):
        with pytest.raises(GeometryError):
            parse_domain(bad, "2,2")
