"""Per-agent price subproblem with a single log-barrier term."""

from __future__ import annotations

import numpy as np


class SubproblemError(RuntimeError):
    pass


def solve_scalar_log_subproblem(q: float, base: float, coeffs, anchor, multiplier, rho: float,
                                grad_tol: float = 1e-8) -> np.ndarray:
    """Minimize ``-q*ln(base - a@c) + rho/2*||c - anchor||^2 + multiplier@(c - anchor)``.

    The optimum lies on the ray ``c0 - gamma * a`` where ``c0 = anchor - multiplier/rho``;
    ``gamma`` solves a quadratic, which gives a closed form.  A couple of
    Newton steps on the full gradient then polish the root.
    """
    if q < 0 or rho <= 0:
        raise SubproblemError("q must be non-negative and rho positive")
    a = np.atleast_1d(np.asarray(coeffs, dtype=float))
    anchor = np.broadcast_to(np.asarray(anchor, dtype=float), a.shape)
    theta = np.broadcast_to(np.asarray(multiplier, dtype=float), a.shape)
    c0 = anchor - theta / rho
    aa = float(a @ a)
    if q == 0.0 or aa == 0.0:
        c = c0.copy()
        if q > 0 and base - a @ c <= 0:
            raise SubproblemError("log argument is non-positive")
        return c

    m = base - float(a @ c0)
    # gamma * s = q / rho with s = m + gamma*aa  =>  s^2 - m s - q aa / rho = 0
    disc = np.sqrt(m * m + 4.0 * q * aa / rho)
    if m >= 0:
        s = 0.5 * (m + disc)
    else:
        # rationalized root: the direct form cancels and can leave the log domain
        s = (q * aa / rho) / (0.5 * (disc - m))
    c = c0 - (q / (rho * s)) * a

    def grad(c):
        arg = base - a @ c
        # scale of the two gradient terms, for a relative stopping test
        scale = 1.0 + rho * (np.linalg.norm(c) + np.linalg.norm(c0)) + q * np.sqrt(aa) / arg
        return rho * (c - c0) + q * a / arg, arg, scale

    for _ in range(20):
        g, arg, scale = grad(c)
        if np.linalg.norm(g) <= grad_tol * scale:
            return c
        # Hessian: rho*I + q/arg^2 * a a^T  (Sherman-Morrison)
        k = q / arg ** 2
        step = g / rho - (k * (a @ g) / (rho * (rho + k * aa))) * a
        t = 1.0
        while base - a @ (c - t * step) <= 0:
            t *= 0.5
            if t < 1e-16:
                raise SubproblemError("backtracking exhausted the log domain")
        c = c - t * step
    g, _, scale = grad(c)
    if np.linalg.norm(g) > grad_tol * scale:
        raise SubproblemError(f"gradient norm {np.linalg.norm(g):.3e} above tolerance")
    return c
