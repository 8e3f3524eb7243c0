"""Compiled kernels for Hoeffding's D with mid-rank tie handling."""

import numpy as np
from numba import njit


@njit(cache=True)
def _bivariate_ranks(group_start, y_rank, m):
    """Tie-aware bivariate ranks Q_i for points listed in x order.

    ``group_start`` holds the offsets of runs of equal x (with a final
    sentinel), ``y_rank`` dense integer ranks 1..m of y in the same order.
    """
    n = y_rank.shape[0]
    tree = np.zeros(m + 1, np.int64)
    q = np.empty(n)
    for g in range(group_start.shape[0] - 1):
        a = group_start[g]
        b = group_start[g + 1]
        for i in range(a, b):
            r = y_rank[i]
            below = 0
            k = r - 1
            while k > 0:
                below += tree[k]
                k -= k & (-k)
            upto = 0
            k = r
            while k > 0:
                upto += tree[k]
                k -= k & (-k)
            same_x_below = 0
            same_both = 0
            for j in range(a, b):
                if j != i:
                    if y_rank[j] < r:
                        same_x_below += 1
                    elif y_rank[j] == r:
                        same_both += 1
            q[i] = 1.0 + below + 0.5 * ((upto - below) + same_x_below) + 0.25 * same_both
        for i in range(a, b):
            k = y_rank[i]
            while k <= m:
                tree[k] += 1
                k += k & (-k)
    return q


@njit(cache=True)
def _bivariate_ranks_untied(y_rank):
    n = y_rank.shape[0]
    tree = np.zeros(n + 1, np.int64)
    q = np.empty(n)
    for i in range(n):
        below = 0
        k = y_rank[i] - 1
        while k > 0:
            below += tree[k]
            k -= k & (-k)
        q[i] = 1.0 + below
        k = y_rank[i]
        while k <= n:
            tree[k] += 1
            k += k & (-k)
    return q


@njit(cache=True)
def _statistic(q, r, s):
    n = q.shape[0]
    d1 = 0.0
    d2 = 0.0
    d3 = 0.0
    for i in range(n):
        d1 += (q[i] - 1.0) * (q[i] - 2.0)
        d2 += (r[i] - 1.0) * (r[i] - 2.0) * (s[i] - 1.0) * (s[i] - 2.0)
        d3 += (r[i] - 2.0) * (s[i] - 2.0) * (q[i] - 1.0)
    nf = float(n)
    num = (nf - 2.0) * (nf - 3.0) * d1 + d2 - 2.0 * (nf - 2.0) * d3
    return 30.0 * num / (nf * (nf - 1.0) * (nf - 2.0) * (nf - 3.0) * (nf - 4.0))


@njit(cache=True)
def hoeffding_d_sorted(group_start, y_rank, m, r, s):
    """D for points already in x order; r, s are mid-ranks in the same order."""
    if m == y_rank.shape[0] and group_start.shape[0] == m + 1:
        q = _bivariate_ranks_untied(y_rank)
    else:
        q = _bivariate_ranks(group_start, y_rank, m)
    return _statistic(q, r, s)
