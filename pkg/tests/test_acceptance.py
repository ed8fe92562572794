"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Run with pytest (lines appear in the report) or directly:
    python3 tests/test_acceptance.py
"""

import io
import json
import math
import os
import sys
import time
import warnings
from contextlib import redirect_stdout

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

import sympy as sp  # noqa: E402
from hypothesis import given, settings  # noqa: E402
from hypothesis import strategies as st  # noqa: E402
from scipy.integrate import quad  # noqa: E402

from coneground.cli import main as cli_main  # noqa: E402
from coneground.cones import is_member  # noqa: E402
from coneground.discretize import Field, assemble, build_grid  # noqa: E402
from coneground.elliptic import LinearSolveConfig, pointwise_invariance, solve_linear  # noqa: E402
from coneground.geometry import parse_domain  # noqa: E402
from coneground.groundstate import (GroundStateConfig, Potential, Problem, Weight,  # noqa: E402
                                    decay_check, find_ground_state, moser_sequence,
                                    solve_radial)
from coneground.spectra import (angular_eigs, hardy_constant, hardy_richardson,  # noqa: E402
                                singular_hardy_bound, singular_hardy_constant)
from coneground.symmetry import (breaking_threshold, multiplicity_count,  # noqa: E402
                                 nonradiality_index, second_variation_radial)
from oracles import as_function, double_operator, f, r, t, triple_operator  # noqa: E402

DIRECT = LinearSolveConfig(backend="direct")


def report(num, ok, elapsed, limit, detail):
    ok = bool(ok) and elapsed < limit
    line = f"criterion {num}: {'PASS' if ok else 'FAIL'} ({elapsed:.2f}s < {limit:g}s) {detail}"
    return ok, line


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


# --------------------------------------------------------------------------
# checks


def check_1():
    lines, ok_all = [], True
    for N in (4, 6, 8):
        # the weight cos^{n-1} sin^{n-1} with n = N/2 carries the dimension
        def run_n(N=N):
            return angular_eigs("omega", k=1, ncells=512, n=N // 2)[1]

        pair, dt = timed(run_n)
        mu = 4.0 * (N + 2)
        rel_mu = abs(pair.value - mu) / mu
        n = N // 2

        def exact(th):
            return -np.cos(4 * th) + (2 - N) / (2 + N)

        wq = lambda th: (math.cos(th) * math.sin(th)) ** (n - 1)  # noqa: E731
        norm = math.sqrt(quad(lambda th: exact(th) ** 2 * wq(th), 0, math.pi / 4)[0])
        prof = pair.vector
        ref = exact(prof.theta) / norm
        l2 = math.sqrt(np.sum((prof.psi - ref) ** 2 * prof.cell_mass))
        ok, line = report(1, rel_mu <= 1e-4 and l2 <= 1e-4, dt, 1.0,
                          f"N={N} mu1={pair.value:.6f} rel={rel_mu:.1e} psi_L2={l2:.1e}")
        ok_all &= ok
        lines.append(line)
    return ok_all, "\n".join(lines)


def check_2():
    def run():
        ball = parse_domain("ball", "2,2")
        b = hardy_constant(ball, nr=128, ntheta=64).value
        return b, hardy_richardson(ball, nr=128, ntheta=64)

    (b, (_, _, extra)), dt = timed(run)
    ok = abs(b - 1) <= 0.02 and abs(extra - 1) <= 0.005
    return report(2, ok, dt, 30, f"beta={b:.5f} extrapolated={extra:.5f}")


def check_3():
    def run():
        return [hardy_constant(parse_domain(f"annulus({R},{R + 1})", "2,2"), nr=64,
                               ntheta=8).value for R in (2, 4, 8, 16)]

    vals, dt = timed(run)
    ok = all(b > a for a, b in zip(vals, vals[1:]))
    return report(3, ok, dt, 120, "beta0=" + ",".join(f"{v:.2f}" for v in vals))


def _mms_double():
    dom = parse_domain("annulus(1,2)", "2,2")
    u = sp.sin(sp.pi * (r - 1)) * (1 + sp.cos(4 * t))
    rhs, exact = double_operator(u, 2, 2), as_function(u)
    errs = []
    for n in (16, 32, 64):
        g = build_grid(dom, n, n)
        v, _ = solve_linear(assemble(g), Field.from_function(g, rhs), DIRECT)
        errs.append(np.max(np.abs(v.values - g.evaluate(exact))))
    return np.array(errs[:-1]) / errs[1:]


def _mms_triple():
    dom = parse_domain("annulus(1,2)", "2,2,2")
    u = sp.sin(sp.pi * (r - 1)) * (1 + sp.sin(t) ** 4 * sp.cos(4 * f))
    rhs, exact = triple_operator(u, 2, 2, 2), as_function(u, r, t, f)
    errs = []
    for n in (8, 16, 32):
        g = build_grid(dom, n, n, n)
        v, _ = solve_linear(assemble(g), Field.from_function(g, rhs), DIRECT)
        errs.append(np.max(np.abs(v.values - g.evaluate(exact))))
    return np.array(errs[:-1]) / errs[1:]


def check_4():
    (dr, tr), dt = timed(lambda: (_mms_double(), _mms_triple()))
    ok = np.all(np.abs(dr - 4) <= 0.5) and np.all(np.abs(tr - 4) <= 0.5)
    return report(4, ok, dt, 60, f"double={np.round(dr, 3).tolist()} triple={np.round(tr, 3).tolist()}")


def check_5():
    def run():
        prob = Problem(parse_domain("annulus(1,2)", "2,2"), 3.0)
        cfg = GroundStateConfig(nr=64, ntheta=32)
        return prob, find_ground_state(prob, cfg), solve_radial(prob, cfg)

    (prob, res, rad), dt = timed(run)
    tol = 1e-6
    u = res.u
    cube = float(np.sum(np.abs(u.values) ** 3 * u.grid.weights))
    e_rel = abs(res.energy - (0.5 - 1 / 3) * cube) / res.energy
    idx = nonradiality_index(u)
    e_gap = abs(res.energy - rad.energy) / rad.energy
    ok = (res.converged and res.residual <= tol and u.values[u.grid.mask].min() >= 0
          and res.membership.is_member and res.nehari_gap <= tol * res.norm_sq
          and e_rel <= 2e-6 and idx <= 5e-3 and e_gap <= 0.01)
    return report(5, ok, dt, 120,
                  f"residual={res.residual:.1e} nehari={res.nehari_gap / res.norm_sq:.1e} "
                  f"energy_rel={e_rel:.1e} index={idx:.1e} radial_gap={e_gap:.1e}")


def check_6():
    def run():
        prob = Problem(parse_domain("annulus(1,2)", "2,2"), 3.0, Weight.constant(), cone="K-")
        viol = []
        for n in (16, 32, 64):
            g = build_grid(prob.domain, n, n)
            prob.validate_on(g)
            u = Field.from_function(g, lambda r_, t_: np.cos(2 * t_) * np.sin(np.pi * (r_ - 1)))
            assert is_member(u, prob.cone).is_member
            _, rep, _ = pointwise_invariance(u, prob, DIRECT)
            viol.append(max(rep.nonneg_violation, rep.monotonicity_violation))
        return viol

    viol, dt = timed(run)
    floor = 1e-12  # violations at roundoff level count as shrunk
    ok = all(b <= a / 2 + floor for a, b in zip(viol, viol[1:]))
    return report(6, ok, dt, 120, "violations=" + ",".join(f"{v:.1e}" for v in viol))


def check_7():
    def run():
        prob = Problem(parse_domain("annulus(2,3)", "2,2"), 4.5, cone="K+")
        beta = hardy_constant(prob.domain, nr=64, ntheta=8).value
        rad = solve_radial(prob, GroundStateConfig(nr=128))
        pair = angular_eigs("omega", k=1, n=2)[1]
        sv = second_variation_radial(rad.u, pair.vector, prob, beta, pair.value)
        gs = find_ground_state(prob, GroundStateConfig(nr=64, ntheta=32))
        return prob, beta, sv, gs

    (prob, beta, sv, gs), dt = timed(run)
    thr = breaking_threshold(prob.domain.N, beta)
    hi = prob.exponent_window()
    idx = nonradiality_index(gs.u)
    ok = (thr < prob.p < hi and sv.value < 0 and sv.value <= sv.bound and gs.converged
          and gs.membership.is_member and idx > 0.05)
    return report(7, ok, dt, 300, f"beta={beta:.3f} threshold={thr:.4f} p={prob.p} "
                                  f"M={sv.value:.3f} bound={sv.bound:.3f} index={idx:.3f}")


def check_8():
    failures = []

    @settings(max_examples=100, deadline=None, derandomize=True)
    @given(st.floats(2.01, 40), st.floats(0.01, 40))
    def prop(p, gap):
        seq = moser_sequence(p, p + gap, 1.0, 10 ** 6)
        if not (seq.diverged and all(b > a for a, b in zip(seq.values, seq.values[1:]))):
            failures.append((p, gap))

    def run():
        vals = moser_sequence(4, 6, 1, 4).values
        prop()
        return vals

    vals, dt = timed(run)
    ok = vals == [1, 2, 5, 14, 41] and not failures
    return report(8, ok, dt, 1.0, f"sequence={vals} random_failures={len(failures)}")


def check_9():
    def run():
        g = build_grid(parse_domain("ball", "2,2"), 64, 32)
        rows = []
        for alpha in (3.0, 6.0, 12.0):
            rows.append((alpha, singular_hardy_constant(alpha, g).value,
                         singular_hardy_bound(alpha)[0]))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            prob = Problem(parse_domain("ball", "2,2"), 3.0,
                           potential=Potential.inverse_power(4.0), cone="K+")
        gs = find_ground_state(prob, GroundStateConfig(nr=64, ntheta=16))
        return rows, gs, decay_check(gs.u, 2.0)

    (rows, gs, dec), dt = timed(run)
    betas = [b for _, b, _ in rows]
    bounds = [c for _, _, c in rows]
    ok = (all(b >= c - 1e-8 for b, c in zip(betas, bounds))
          and betas[0] < betas[1] < betas[2] and bounds[0] < bounds[1] < bounds[2]
          and gs.converged and dec.passes and dec.slope >= 2)
    return report(9, ok, dt, 180,
                  "beta=" + ",".join(f"{b:.3f}" for b in betas)
                  + " C=" + ",".join(f"{c:.4f}" for c in bounds) + f" slope={dec.slope:.2f}")


def check_10():
    hand = {4: 2 + 1, 5: 2 + 2, 6: 3 + 2 + 2, 9: 4 + 4 + 3 + 3, 12: 6 + 5 + 5 + 4 + 4}
    got, dt = timed(lambda: {N: multiplicity_count(N) for N in hand})
    return report(10, got == hand, dt, 1.0, f"counts={got}")


def check_11():
    def run():
        outs = []
        for _ in range(2):
            buf = io.StringIO()
            with redirect_stdout(buf):
                code = cli_main(["solve", "--nr", "32", "--ntheta", "16", "--seed", "7"])
            outs.append((code, json.loads(buf.getvalue())["result"]))
        return outs

    outs, dt = timed(run)
    ok = outs[0][0] == 0 and outs[0] == outs[1]
    return report(11, ok, dt, 60, f"energy={outs[0][1]['energy']!r} identical={outs[0] == outs[1]}")


CHECKS = [check_1, check_2, check_3, check_4, check_5, check_6, check_7, check_8, check_9,
          check_10, check_11]


@pytest.mark.parametrize("check", CHECKS, ids=[f"criterion_{i}" for i in range(1, 12)])
def test_criterion(check, capsys):
    ok, line = check()
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


if __name__ == "__main__":
    results = []
    for check in CHECKS:
        ok, line = check()
        print(line, flush=True)
        results.append(ok)
    print(f"{sum(results)}/{len(results)} criteria passed")
    sys.exit(0 if all(results) else 1)
