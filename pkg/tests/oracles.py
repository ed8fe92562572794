"""Symbolic right-hand sides for manufactured solutions (sympy oracles)."""

import sympy as sp

r, t, f = sp.symbols("r theta phi", positive=True)


def double_operator(u, m, n, lam=0):
    """-Lap u + lam u in (r, theta) for a domain of double revolution."""
    N = m + n
    rho = sp.cos(t) ** (m - 1) * sp.sin(t) ** (n - 1)
    expr = (-sp.diff(u, r, 2) - (N - 1) / r * sp.diff(u, r)
            - sp.diff(rho * sp.diff(u, t), t) / (rho * r ** 2) + lam * u)
    return sp.lambdify((r, t), sp.simplify(expr), "numpy")


def triple_operator(u, m, n, l, lam=0):
    """-Lap u + lam u in (r, theta, phi) for a domain of triple revolution."""
    N = m + n + l
    rt = sp.sin(t) ** (m + n - 1) * sp.cos(t) ** (l - 1)
    rp = sp.cos(f) ** (m - 1) * sp.sin(f) ** (n - 1)
    expr = (-sp.diff(u, r, 2) - (N - 1) / r * sp.diff(u, r)
            - sp.diff(rt * sp.diff(u, t), t) / (rt * r ** 2)
            - sp.diff(rp * sp.diff(u, f), f) / (rp * r ** 2 * sp.sin(t) ** 2) + lam * u)
    return sp.lambdify((r, t, f), sp.simplify(expr), "numpy")


def as_function(u, *syms):
    return sp.lambdify(syms or (r, t), u, "numpy")
