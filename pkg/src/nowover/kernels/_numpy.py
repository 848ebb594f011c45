"""Pure-numpy fallbacks for the walk and cut kernels.

``walk_path`` consumes the random stream in exactly the same order as the
compiled kernel, so single walks are bit-identical across backends.
``walk_endpoints`` advances all walks in lock-step instead; it is equal in
distribution to the compiled kernel but not draw-for-draw.
"""

import numpy as np

_CHUNK_BITS = 16


def walk_path(nbr, deg, weight, start, total_time, seed, max_hops):
    rs = np.random.RandomState(seed)
    draw = rs.random_sample
    path = [start]
    clocks = []
    cur = int(nbr[start, int(draw() * deg[start])])
    path.append(cur)
    t = total_time
    while True:
        if len(clocks) >= max_hops:
            return _pack(path, clocks, max_hops, False)
        u = 1.0 - draw()
        clocks.append(u)
        t -= -np.log(u) * weight[cur] / deg[cur]
        if t <= 0.0:
            break
        if len(path) > max_hops:
            return _pack(path, clocks, max_hops, False)
        cur = int(nbr[cur, int(draw() * deg[cur])])
        path.append(cur)
    return _pack(path, clocks, max_hops, True)


def _pack(path, clocks, max_hops, ok):
    p = np.zeros(max_hops + 1, np.int64)
    c = np.zeros(max_hops, np.float64)
    p[: len(path)] = path
    c[: len(clocks)] = clocks
    return p, c, len(path), len(clocks), ok


def walk_endpoints(nbr, deg, weight, stop, starts, total_time, seed):
    rs = np.random.RandomState(seed)
    k = starts.shape[0]
    cur = starts.astype(np.int64).copy()
    t = np.full(k, float(total_time))
    hops = np.ones(k, np.int64)
    r = rs.random_sample(k)
    cur = nbr[cur, (r * deg[cur]).astype(np.int64)]
    active = ~stop[cur]
    while True:
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        c = cur[idx]
        u = 1.0 - rs.random_sample(idx.size)
        t[idx] -= -np.log(u) * weight[c] / deg[c]
        cont = t[idx] > 0.0
        active[idx[~cont]] = False
        mv = idx[cont]
        if mv.size:
            src = cur[mv]
            r = rs.random_sample(mv.size)
            cur[mv] = nbr[src, (r * deg[src]).astype(np.int64)]
            hops[mv] += 1
            active[mv[stop[cur[mv]]]] = False
    return cur, hops


def cut_table(n, eu, ev, em):
    size = 1 << n
    cut = np.zeros(size, np.int64)
    inner = np.zeros(size, np.int64)
    chunk = 1 << min(n, _CHUNK_BITS)
    shifts = np.arange(n, dtype=np.int64)
    for lo in range(0, size, chunk):
        masks = np.arange(lo, lo + chunk, dtype=np.int64)
        bits = (masks[:, None] >> shifts) & 1
        c = np.zeros(chunk, np.int64)
        s = np.zeros(chunk, np.int64)
        for u, v, m in zip(eu, ev, em):
            bu, bv = bits[:, u], bits[:, v]
            c += m * (bu ^ bv)
            s += m * (bu & bv)
        cut[lo : lo + chunk] = c
        inner[lo : lo + chunk] = s
    cut[0] = 0
    inner[0] = 0
    return cut, inner
