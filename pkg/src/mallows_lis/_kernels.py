"""Compiled hot loops.  Everything here works on plain int64 arrays.

Kernels that consume an unbounded number of geometric draws follow one
protocol: they receive a finite window ``z`` of the stream plus the index of
the first unfinished item, process whole items only, and return
``(items_done, draws_used)``.  The Python driver advances the stream by
``draws_used`` and calls again with a fresh window.
"""
import numpy as np
from numba import njit

_JIT = dict(cache=True, nogil=True)


# --------------------------------------------------------------------------
# order-statistic structure: Fenwick tree over free slots

@njit(**_JIT)
def _fenwick_all_free(cap):
    tree = np.empty(cap + 1, dtype=np.int64)
    tree[0] = 0
    for i in range(1, cap + 1):
        tree[i] = i & (-i)
    return tree


@njit(**_JIT)
def _fenwick_take(tree, cap, top, k):
    """Remove and return the k-th free slot (1-based).  ``top`` is the largest
    power of two <= cap."""
    pos = 0
    rem = k
    step = top
    while step > 0:
        nxt = pos + step
        if nxt <= cap and tree[nxt] < rem:
            pos = nxt
            rem -= tree[nxt]
        step >>= 1
    slot = pos + 1
    i = slot
    while i <= cap:
        tree[i] -= 1
        i += i & (-i)
    return slot


@njit(**_JIT)
def _high_bit(cap):
    top = 1
    while top * 2 <= cap:
        top *= 2
    return top


@njit(**_JIT)
def assign_positions_kernel(z, out):
    """Element i goes to the z[i]-th free slot.  Window n + max(z) suffices:
    element i always lands at or below i + max(z)."""
    n = z.shape[0]
    zmax = 1
    for i in range(n):
        if z[i] > zmax:
            zmax = z[i]
    cap = n + zmax
    tree = _fenwick_all_free(cap)
    top = _high_bit(cap)
    for i in range(n):
        out[i] = _fenwick_take(tree, cap, top, z[i])


@njit(**_JIT)
def sample_batch_kernel(z, n, out):
    """``out[r]`` is the induced permutation built from z[r*n:(r+1)*n]."""
    count = out.shape[0]
    pos = np.empty(n, dtype=np.int64)
    for r in range(count):
        assign_positions_kernel(z[r * n:(r + 1) * n], pos)
        induce_kernel(pos, out[r])


@njit(**_JIT)
def induce_kernel(pos, out):
    """Rank of each position among all positions; linear time via a mark table."""
    n = pos.shape[0]
    hi = 0
    for i in range(n):
        if pos[i] > hi:
            hi = pos[i]
    rank = np.zeros(hi + 1, dtype=np.int64)
    for i in range(n):
        rank[pos[i]] = 1
    acc = 0
    for v in range(1, hi + 1):
        if rank[v]:
            acc += 1
            rank[v] = acc
    for i in range(n):
        out[i] = rank[pos[i]]


# --------------------------------------------------------------------------
# permutation statistics

@njit(**_JIT)
def _lower_bound(tops, size, v):
    lo = 0
    hi = size
    while lo < hi:
        mid = (lo + hi) >> 1
        if tops[mid] < v:
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(**_JIT)
def lis_kernel(a, sign):
    """Patience sorting on ``sign * a`` (sign=-1 gives the LDS).  Values distinct."""
    n = a.shape[0]
    tops = np.empty(n, dtype=np.int64)
    size = 0
    for i in range(n):
        v = sign * a[i]
        j = _lower_bound(tops, size, v)
        tops[j] = v
        if j == size:
            size += 1
    return size


@njit(**_JIT)
def inversions_kernel(a):
    """Count inversions with a Fenwick tree over values, scanning right to left."""
    n = a.shape[0]
    tree = np.zeros(n + 1, dtype=np.int64)
    total = 0
    for i in range(n - 1, -1, -1):
        v = a[i] - 1
        while v > 0:
            total += tree[v]
            v -= v & (-v)
        v = a[i]
        while v <= n:
            tree[v] += 1
            v += v & (-v)
    return total


# --------------------------------------------------------------------------
# auxiliary chain

@njit(**_JIT)
def trajectory_kernel(z, m0, out):
    m = m0
    for i in range(z.shape[0]):
        if z[i] > m:
            m = z[i]
        m -= 1
        out[i] = m


@njit(**_JIT)
def first_zero_at_or_after(z, n):
    """Smallest t >= n with M_t = 0 (chain from 0), or -1 if beyond the window."""
    m = 0
    for i in range(z.shape[0]):
        if z[i] > m:
            m = z[i]
        m -= 1
        if m == 0 and i + 1 >= n:
            return i + 1
    return -1


@njit(**_JIT)
def passage_kernel(z, starts, level, plus, out, first):
    """Steps until the chain started at ``starts[i]`` is at or below ``level``.

    With ``plus`` the count is over k >= 1 (a return time); otherwise a start
    already at or below ``level`` gives 0 without consuming draws.
    """
    nz = z.shape[0]
    j = 0
    for i in range(first, out.shape[0]):
        m = starts[i]
        if not plus and m <= level:
            out[i] = 0
            continue
        k = 0
        jj = j
        while True:
            if jj >= nz:
                return i, j
            zz = z[jj]
            jj += 1
            k += 1
            if zz > m:
                m = zz
            m -= 1
            if m <= level:
                break
        out[i] = k
        j = jj
    return out.shape[0], j


# --------------------------------------------------------------------------
# regeneration blocks as excursions of the chain

@njit(**_JIT)
def _bisect_insert_tops(tops, size, v):
    j = _lower_bound(tops, size, v)
    tops[j] = v
    if j == size:
        size += 1
    return size


@njit(**_JIT)
def blocks_kernel(z, x, y, y_down, first):
    """Sample whole blocks starting at a regeneration point.

    Free slots left of the rightmost filled slot ("holes") are kept sorted;
    their number is exactly the chain state M_t.  Block LIS/LDS are grown by
    patience sorting as positions are assigned.
    """
    nz = z.shape[0]
    nblocks = x.shape[0]
    holes = np.empty(64, dtype=np.int64)
    tops_up = np.empty(64, dtype=np.int64)
    tops_dn = np.empty(64, dtype=np.int64)
    j = 0
    for b in range(first, nblocks):
        m = 0
        right = 0
        length = 0
        up = 0
        dn = 0
        jj = j
        while True:
            if jj >= nz:
                return b, j
            zz = z[jj]
            jj += 1
            length += 1
            if zz > m:
                pos = right + zz - m
                need = zz - 1
                if need > holes.shape[0]:
                    bigger = np.empty(2 * need, dtype=np.int64)
                    bigger[:m] = holes[:m]
                    holes = bigger
                for h in range(right + 1, pos):
                    holes[m] = h
                    m += 1
                right = pos
            else:
                pos = holes[zz - 1]
                for h in range(zz - 1, m - 1):
                    holes[h] = holes[h + 1]
                m -= 1
            if length > tops_up.shape[0]:
                bigger = np.empty(2 * length, dtype=np.int64)
                bigger[:up] = tops_up[:up]
                tops_up = bigger
                bigger = np.empty(2 * length, dtype=np.int64)
                bigger[:dn] = tops_dn[:dn]
                tops_dn = bigger
            up = _bisect_insert_tops(tops_up, up, pos)
            dn = _bisect_insert_tops(tops_dn, dn, -pos)
            if m == 0:
                break
        x[b] = length
        y[b] = up
        y_down[b] = dn
        j = jj
    return nblocks, j


@njit(**_JIT)
def segment_stats_kernel(pos, cuts, y, y_down):
    """LIS/LDS of each segment pos[cuts[k]:cuts[k+1]]."""
    for k in range(cuts.shape[0] - 1):
        seg = pos[cuts[k]:cuts[k + 1]]
        y[k] = lis_kernel(seg, 1)
        y_down[k] = lis_kernel(seg, -1)


@njit(**_JIT)
def decompose_stats_kernel(z, n):
    """Pathwise quantities of one decomposition of the prefix of length n.

    ``z`` must cover the first regeneration time >= n, which is returned as
    ``t_end``.  Returns (t_end, s_n, q_n, y_last, max_y, max_ydown_all,
    max_ydown_before_last, lis_n, lds_n).
    """
    t_end = first_zero_at_or_after(z, n)
    zz = z[:t_end]
    pos = np.empty(t_end, dtype=np.int64)
    assign_positions_kernel(zz, pos)
    # regeneration times: prefix maxima equal to the prefix length
    s_n = 0
    q_n = 0
    y_last = 0
    max_y = 0
    max_dn_all = 0
    max_dn_before = 0
    start = 0
    hi = 0
    for t in range(t_end):
        if pos[t] > hi:
            hi = pos[t]
        if hi == t + 1:
            seg = pos[start:t + 1]
            yb = lis_kernel(seg, 1)
            db = lis_kernel(seg, -1)
            s_n += 1
            q_n += yb
            y_last = yb
            if yb > max_y:
                max_y = yb
            max_dn_before = max_dn_all
            if db > max_dn_all:
                max_dn_all = db
            start = t + 1
    head = pos[:n]
    return (t_end, s_n, q_n, y_last, max_y, max_dn_all, max_dn_before,
            lis_kernel(head, 1), lis_kernel(head, -1))


@njit(**_JIT)
def decompose_many_kernel(z, n, out, first):
    """Run consecutive decompositions (each restarting at a regeneration point)."""
    nz = z.shape[0]
    j = 0
    for r in range(first, out.shape[0]):
        if j >= nz:
            return r, j
        t_end = first_zero_at_or_after(z[j:], n)
        if t_end < 0:
            return r, j
        res = decompose_stats_kernel(z[j:j + t_end], n)
        for c in range(9):
            out[r, c] = res[c]
        j += t_end
    return out.shape[0], j
