"""Compiled cyclic coordinate descent on the Gram form of the lasso."""

import numpy as np
from numba import njit


@njit(cache=True)
def cd_gram(G, c, lam, beta, tol, max_sweeps):
    """Minimise 1/2 b'Gb - c'b + lam*|b|_1 in place, starting from ``beta``.

    Stops when the largest coordinate move, measured in units of
    sqrt(G_jj), drops below ``tol``.  Returns (sweeps, last_move).
    """
    p = c.shape[0]
    g = G @ beta
    move = np.inf
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        move = 0.0
        for j in range(p):
            gjj = G[j, j]
            if gjj <= 0.0:
                continue
            old = beta[j]
            rho = c[j] - g[j] + gjj * old
            if rho > lam:
                new = (rho - lam) / gjj
            elif rho < -lam:
                new = (rho + lam) / gjj
            else:
                new = 0.0
            if new != old:
                d = new - old
                for k in range(p):
                    g[k] += G[k, j] * d
                beta[j] = new
                step = abs(d) * np.sqrt(gjj)
                if step > move:
                    move = step
        if move < tol:
            break
    return sweeps, move
