"""Numba-compiled walk and cut kernels.

Every kernel seeds numba's internal Mersenne Twister, which produces the same
double stream as ``numpy.random.RandomState(seed).random_sample``.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def walk_path(nbr, deg, weight, start, total_time, seed, max_hops):
    np.random.seed(seed)
    path = np.empty(max_hops + 1, np.int64)
    clocks = np.empty(max_hops, np.float64)
    path[0] = start
    cur = nbr[start, int(np.random.random() * deg[start])]
    path[1] = cur
    n_path = 2
    n_clock = 0
    t = total_time
    while True:
        if n_clock >= max_hops:
            return path, clocks, n_path, n_clock, False
        u = 1.0 - np.random.random()
        clocks[n_clock] = u
        n_clock += 1
        t -= -np.log(u) * weight[cur] / deg[cur]
        if t <= 0.0:
            break
        if n_path > max_hops:
            return path, clocks, n_path, n_clock, False
        cur = nbr[cur, int(np.random.random() * deg[cur])]
        path[n_path] = cur
        n_path += 1
    return path, clocks, n_path, n_clock, True


@njit(cache=True)
def walk_endpoints(nbr, deg, weight, stop, starts, total_time, seed):
    np.random.seed(seed)
    k = starts.shape[0]
    ends = np.empty(k, np.int64)
    hops = np.empty(k, np.int64)
    for w in range(k):
        cur = starts[w]
        cur = nbr[cur, int(np.random.random() * deg[cur])]
        moves = 1
        t = total_time
        if not stop[cur]:
            while True:
                u = 1.0 - np.random.random()
                t -= -np.log(u) * weight[cur] / deg[cur]
                if t <= 0.0:
                    break
                cur = nbr[cur, int(np.random.random() * deg[cur])]
                moves += 1
                if stop[cur]:
                    break
        ends[w] = cur
        hops[w] = moves
    return ends, hops


@njit(cache=True)
def cut_table(n, eu, ev, em):
    size = 1 << n
    cut = np.zeros(size, np.int64)
    inner = np.zeros(size, np.int64)
    m = eu.shape[0]
    for mask in range(1, size):
        c = 0
        s = 0
        for e in range(m):
            bu = (mask >> eu[e]) & 1
            bv = (mask >> ev[e]) & 1
            if bu != bv:
                c += em[e]
            elif bu == 1:
                s += em[e]
        cut[mask] = c
        inner[mask] = s
    return cut, inner
