import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from coneground.discretize import Field, build_grid
from coneground.geometry import parse_domain
from coneground.groundstate import (DegenerateRay, GroundStateConfig, InsufficientWindow,
                                    Potential, Problem, ProblemError, RadialProfile, Weight,
                                    decay_check, energy, find_ground_state, moser_sequence,
                                    nehari_rescale, relative_residual, solve_radial)
from coneground.symmetry import nonradiality_index


@pytest.fixture(scope="module")
def annulus_problem():
    return Problem(parse_domain("annulus(1,2)", "2,2"), 3.0)


@pytest.fixture(scope="module")
def small_state(annulus_problem):
    return find_ground_state(annulus_problem, GroundStateConfig(nr=32, ntheta=16))


def test_problem_validation():
    ann = parse_domain("annulus(1,2)", "2,2")
    with pytest.raises(ProblemError):
        Problem(ann, 2.0)
    with pytest.raises(ProblemError):
        Problem(parse_domain("truncated-rn(8)", "2,2"), 3.0, lam=0.0)
    with pytest.raises(ProblemError):
        Problem(parse_domain("annulus(1,2)", "3,2", "pi2-annular"), 3.0, cone="K-")
    prob = Problem(ann, 3.0, Weight.tabulated(lambda r, t: 1 + t), cone="K-")
    with pytest.raises(ProblemError):
        prob.validate_on(build_grid(ann, 8, 8))
    with pytest.warns(UserWarning):
        Problem(ann, 7.0, cone="K-")


def test_energy_zero(annulus_problem):
    g = build_grid(annulus_problem.domain, 16, 16)
    assert energy(Field.zeros(g), annulus_problem) == 0


def test_energy_scaling(annulus_problem):
    g = build_grid(annulus_problem.domain, 16, 16)
    u = Field.from_function(g, lambda r, t: np.sin(np.pi * (r - 1)) * (2 + np.cos(4 * t)))
    A = 2 * energy(u, annulus_problem) + 2 / 3 * np.sum(np.abs(u.values) ** 3 * g.weights)
    B = np.sum(np.abs(u.values) ** 3 * g.weights) / 3
    for s in (0.5, 1.0, 2.0):
        assert math.isclose(energy(u * s, annulus_problem), s * s * A / 2 - s ** 3 * B,
                            rel_tol=1e-12)


def test_nehari_fixed_and_closed_form(annulus_problem):
    g = build_grid(annulus_problem.domain, 16, 16)
    u = Field.from_function(g, lambda r, t: np.sin(np.pi * (r - 1)))
    t1, v = nehari_rescale(u, annulus_problem)
    t2, _ = nehari_rescale(v, annulus_problem)
    assert math.isclose(t2, 1.0, rel_tol=1e-12)

    # p = 4, ||u||^2 = 2, int a u^4 = 8  ->  t* = 1/2
    prob4 = Problem(annulus_problem.domain, 4.0, cone="K+")
    op = prob4.operator(g)
    q = op.energy_form(u.vector)
    s = math.sqrt(2 / q)
    pot = np.sum(np.abs(u.vector * s) ** 4 * op.weights)
    prob4 = Problem(annulus_problem.domain, 4.0, Weight.constant(8 / pot), cone="K+")
    t, _ = nehari_rescale(u * s, prob4)
    assert math.isclose(t, 0.5, rel_tol=1e-12)


def test_nehari_matches_line_search(annulus_problem):
    g = build_grid(annulus_problem.domain, 16, 16)
    u = Field.from_function(g, lambda r, t: np.sin(np.pi * (r - 1)) * (1 + t)) * 2
    t, _ = nehari_rescale(u, annulus_problem)
    best = minimize_scalar(lambda s: -energy(u * s, annulus_problem), bounds=(1e-3, 1e3),
                           method="bounded", options={"xatol": 1e-10})
    assert math.isclose(t, best.x, rel_tol=1e-6)


def test_degenerate_ray(annulus_problem):
    g = build_grid(annulus_problem.domain, 16, 16)
    with pytest.raises(DegenerateRay):
        nehari_rescale(Field.zeros(g), annulus_problem)


def test_ground_state_certificate(annulus_problem, small_state):
    res = small_state
    tol = 1e-6
    assert res.converged
    assert res.residual <= tol
    assert res.membership.is_member
    assert res.u.values[res.u.grid.mask].min() >= -tol
    assert res.nehari_gap <= tol * res.norm_sq
    assert res.energy > 0
    assert abs(res.energy - (0.5 - 1 / 3) * res.potential_integral) <= 2 * tol * res.energy
    cs = [row[1] for row in res.history]
    assert abs(cs[-1] - cs[-2]) <= tol * abs(cs[-1])
    assert math.isclose(relative_residual(res.u, annulus_problem), res.residual)


def test_zero_guess_replaced(annulus_problem):
    g = build_grid(annulus_problem.domain, 16, 8)
    res = find_ground_state(annulus_problem, GroundStateConfig(nr=16, ntheta=8), grid=g,
                            u0=Field.zeros(g))
    assert res.converged and any("zero initial guess" in n for n in res.notes)


def test_max_outer_flag(annulus_problem):
    res = find_ground_state(annulus_problem, GroundStateConfig(nr=16, ntheta=8, max_outer=3))
    assert not res.converged
    assert any("MaxOuterIterations" in n for n in res.notes)
    assert res.residual == min(row[2] for row in res.history)


def test_henon_ball():
    prob = Problem(parse_domain("ball", "2,2"), 4.5, Weight.power(2.0), cone="K+")
    res = find_ground_state(prob, GroundStateConfig(nr=48, ntheta=16))
    assert res.converged and res.membership.is_member and res.energy > 0


def test_radial_nehari_and_embedding(annulus_problem):
    rad = solve_radial(annulus_problem, GroundStateConfig(nr=64))
    assert rad.converged
    assert rad.nehari_gap <= 1e-6 * rad.norm_sq
    # the radial scheme is the 2-D scheme restricted to radial fields
    for n in (32, 64):
        one = solve_radial(annulus_problem, GroundStateConfig(nr=n))
        g = build_grid(annulus_problem.domain, n, 8)
        assert relative_residual(one.u.embed(g), annulus_problem) <= 1e-5


def test_radial_matches_2d_on_ball():
    prob = Problem(parse_domain("ball", "2,2"), 3.0, cone="K+")
    cfg = GroundStateConfig(nr=48, ntheta=16)
    two = find_ground_state(prob, cfg)
    one = solve_radial(prob, cfg)
    assert abs(two.energy - one.energy) / one.energy < 0.01
    assert nonradiality_index(two.u) < 1e-2


def test_truncation_radius_doubling():
    energies = []
    for R, nr in ((8, 64), (16, 128)):
        prob = Problem(parse_domain(f"truncated-rn({R})", "2,2"), 5.0, Weight.power(2.0),
                       lam=1.0, cone="K+")
        energies.append(find_ground_state(prob, GroundStateConfig(nr=nr, ntheta=16)).energy)
    assert abs(energies[1] - energies[0]) / energies[0] < 0.01


def test_moser_examples():
    assert moser_sequence(4, 6, 1, 4).values == [1, 2, 5, 14, 41]
    p, q = 4.0, 6.0
    assert (p - 2) / (q - 2) < 1
    seq = moser_sequence(5.9, 6, 1, 40)
    assert seq.diverged and all(b > a for a, b in zip(seq.values, seq.values[1:]))
    with pytest.raises(ValueError):
        moser_sequence(6, 6, 1)
    with pytest.raises(ValueError):
        moser_sequence(4, 6, 0.5)


@settings(max_examples=100, deadline=None)
@given(st.floats(2.01, 50), st.floats(0.01, 50), st.floats(1, 5))
def test_moser_diverges(p, gap, t0):
    seq = moser_sequence(p, p + gap, t0, 100000)
    assert seq.diverged
    assert all(b > a for a, b in zip(seq.values, seq.values[1:]))


def _ball_field(nr, fn):
    g = build_grid(parse_domain("ball", "2,2"), nr, 8)
    return Field.from_function(g, lambda r, t: fn(r) + 0 * t)


def test_decay_power_law():
    rep = decay_check(_ball_field(64, lambda r: r ** 3), 3.0)
    assert abs(rep.slope - 3.0) < 1e-6 and rep.passes


def test_decay_flat_exponential():
    u = _ball_field(256, lambda r: np.exp(-1 / r))
    for target in (1, 2, 5, 10, 20):
        assert decay_check(u, target).passes


def test_decay_insufficient_window():
    with pytest.raises(InsufficientWindow):
        decay_check(_ball_field(64, lambda r: r ** 2), 1.0, fit_window=(0.01, 0.05))


def test_decay_radial_profile():
    e = np.linspace(0, 1, 129)
    prof = RadialProfile(e, (0.5 * (e[1:] + e[:-1])) ** 4, 4)
    assert abs(decay_check(prof, 3.0).slope - 4) < 1e-9


def test_singular_decay_end_to_end():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        prob = Problem(parse_domain("ball", "2,2"), 3.0, potential=Potential.inverse_power(4.0),
                       cone="K+")
    res = find_ground_state(prob, GroundStateConfig(nr=64, ntheta=16))
    assert res.converged
    assert decay_check(res.u, 2.0).slope > 2
