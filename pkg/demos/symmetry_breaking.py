"""Radial ground states lose stability on thin annuli far from the origin.

For annuli (R, R+1) in R^4 the Hardy constant grows like R^2, so the
breaking threshold 4(N+2)/beta + 2 drops toward 2.  Once it falls below p
the second variation along u*psi1 is negative and the cone-constrained
ground state is visibly nonradial.
"""

from coneground.geometry import parse_domain
from coneground.groundstate import GroundStateConfig, Problem, find_ground_state, solve_radial
from coneground.spectra import angular_eigs, hardy_constant
from coneground.symmetry import breaking_threshold, nonradiality_index, second_variation_radial

p = 4.5
pair = angular_eigs("omega", k=1, n=2)[1]
print(f"mu1 = {pair.value:.4f}")
print(f"{'R':>4} {'beta':>10} {'p*':>8} {'M':>12} {'bound':>12} {'index':>8}")
for R in (0.25, 0.5, 1.0, 2.0, 4.0):
    prob = Problem(parse_domain(f"annulus({R:g},{R + 1:g})", "2,2"), p, cone="K+")
    beta = hardy_constant(prob.domain, nr=64, ntheta=8).value
    rad = solve_radial(prob, GroundStateConfig(nr=128))
    sv = second_variation_radial(rad.u, pair.vector, prob, beta, pair.value)
    gs = find_ground_state(prob, GroundStateConfig(nr=64, ntheta=32))
    print(f"{R:4g} {beta:10.3f} {breaking_threshold(4, beta):8.4f} {sv.value:12.3f} "
          f"{sv.bound:12.3f} {nonradiality_index(gs.u):8.4f}")
