"""Hardy constant of the unit ball in R^4 on graded radial grids.

The exact value ((N-2)/2)^2 = 1 is not attained.  The discrete error mixes a
truncation term ~ 1/depth^2 with a resolution term ~ (depth/nr)^2, so refining
one without the other need not help; scaling both together and taking one
Richardson step does.
"""

from coneground.geometry import parse_domain
from coneground.spectra import hardy_constant, hardy_richardson

ball = parse_domain("ball", "2,2")
for nr, depth in ((32, 12), (64, 18), (128, 24)):
    print(f"nr={nr:4d} depth={depth:3d} beta={hardy_constant(ball, nr=nr, ntheta=16, log_depth=depth).value:.5f}")
coarse, fine, extra = hardy_richardson(ball, nr=128, ntheta=16)
print(f"richardson: {coarse:.5f} {fine:.5f} -> {extra:.5f}")
