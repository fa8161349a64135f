"""Closed-form reference solutions.

The quasineutral-limit (isothermal Euler, unit sound speed) Riemann
problem with states (1, 0) | (n_r, 0), 0 < n_r <= 1, admits a
self-similar solution made of a left constant state, a rarefaction fan,
a constant middle state (exp(-u_m), u_m) and a right shock of speed u_s.
The maximum velocity u_m is the smallest positive root of

    G(u) = (1 - n_r e^u)(u^2 - 2u - 2 ln n_r) - 2 u^2,

and u_s = u_m / (1 - n_r e^{u_m}).  The Child-Langmuir law provides the
space-charge-limited sheath thickness used by the sheath benchmarks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_RESIDUAL_TOL = 1e-12


def _g(u: float, n_r: float):
    return (1.0 - n_r * np.exp(u)) * (u * u - 2.0 * u - 2.0 * np.log(n_r)) \
        - 2.0 * u * u


def _g_prime(u: float, n_r: float):
    bracket = u * u - 2.0 * u - 2.0 * np.log(n_r)
    return (-n_r * np.exp(u) * bracket
            + (1.0 - n_r * np.exp(u)) * (2.0 * u - 2.0) - 4.0 * u)


def solve_um(n_r: float) -> float:
    """Smallest positive root of G (the physical branch, continuous with
    u_m -> 0 as n_r -> 1); residual at the root <= 1e-12."""
    if not 0.0 < n_r <= 1.0:
        raise ValueError("right density must lie in (0, 1]")
    if n_r == 1.0:
        return 0.0
    # G(0) = -2 (1 - n_r) ln(n_r) > 0; scan for the first sign change.
    step = min(0.05, -np.log(n_r) / 4.0)
    lo, g_lo = 0.0, _g(0.0, n_r)
    hi = step
    for _ in range(10000):
        g_hi = _g(hi, n_r)
        if g_hi <= 0.0:
            break
        lo, g_lo = hi, g_hi
        hi += step
    else:
        raise ValueError(f"no bracket found for n_r = {n_r}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        g_mid = _g(mid, n_r)
        if g_mid > 0.0:
            lo, g_lo = mid, g_mid
        else:
            hi = mid
        if hi - lo < 1e-14:
            break
    root = 0.5 * (lo + hi)
    for _ in range(50):
        g = _g(root, n_r)
        if abs(g) <= _RESIDUAL_TOL:
            break
        root -= g / _g_prime(root, n_r)
    if abs(_g(root, n_r)) > _RESIDUAL_TOL:
        raise ValueError(f"root polish failed for n_r = {n_r}")
    return float(root)


def shock_speed(u_m: float, n_r: float) -> float:
    denom = 1.0 - n_r * np.exp(u_m)
    if denom == 0.0:
        raise ValueError("shock speed undefined (equal states)")
    return float(u_m / denom)


@dataclass(frozen=True)
class RiemannIceSolution:
    """Parameters of the self-similar solution for one right density."""

    n_r: float
    u_m: float
    u_s: float

    @staticmethod
    def solve(n_r: float) -> "RiemannIceSolution":
        u_m = solve_um(n_r)
        return RiemannIceSolution(n_r=n_r, u_m=u_m,
                                  u_s=shock_speed(u_m, n_r))


def ice_riemann_exact(n_r: float, t: float, x) -> tuple[np.ndarray,
                                                        np.ndarray]:
    """Exact density and velocity of the limit-system Riemann problem at
    time t > 0 on the given positions (jump initially at x = 0)."""
    if t <= 0.0:
        raise ValueError("the self-similar solution needs t > 0")
    sol = RiemannIceSolution.solve(n_r)
    x = np.asarray(x, dtype=float)
    xi = x / t
    conds = [
        xi <= -1.0,
        xi <= sol.u_m - 1.0,
        xi <= sol.u_s if sol.n_r < 1.0 else np.zeros_like(xi, dtype=bool),
    ]
    rho = np.select(conds, [1.0, np.exp(-xi - 1.0), np.exp(-sol.u_m)],
                    default=sol.n_r)
    u = np.select(conds, [0.0, xi + 1.0, sol.u_m], default=0.0)
    return rho, u


def child_langmuir(V: float, u: float, eps: float) -> float:
    """Space-charge-limited sheath thickness
    s = (2^(5/4)/3) V^(3/4) eps / (2 sqrt(u))."""
    if V < 0.0:
        raise ValueError("voltage drop must be non-negative")
    if u <= 0.0 or eps <= 0.0:
        raise ValueError("injection speed and eps must be positive")
    return float(0.5 * (2.0 ** 1.25 / 3.0) * V ** 0.75 * eps / np.sqrt(u))
