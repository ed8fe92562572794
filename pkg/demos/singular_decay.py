"""Ground state with the potential |x|^-alpha vanishes faster than any power at 0.

The fitted log-log slope of the angular envelope near the origin grows as
the grid resolves smaller radii.
"""

import warnings

from coneground.geometry import parse_domain
from coneground.groundstate import GroundStateConfig, Potential, Problem, decay_check, find_ground_state

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    prob = Problem(parse_domain("ball", "2,2"), 3.0, potential=Potential.inverse_power(4.0),
                   cone="K+")
for nr in (32, 64, 128):
    gs = find_ground_state(prob, GroundStateConfig(nr=nr, ntheta=16))
    rep = decay_check(gs.u, 2.0)
    print(f"nr={nr:4d} energy={gs.energy:.6f} slope={rep.slope:.2f}")
