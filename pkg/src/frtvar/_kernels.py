"""Compiled hot loops: counter-based RNG, assignment sampling, KS sweeps.

All kernels are serial over a block of draws and release the GIL, so the
caller parallelises by splitting draw ranges across threads.  Every output
row depends only on its absolute draw index, never on the block layout.
"""

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_INV53 = 1.0 / 9007199254740992.0

# relative tolerance (in ulps of the largest magnitude) for merging tied points
_TIE_ULPS = 16.0 * 2.220446049250313e-16


@njit(cache=True, nogil=True)
def mix64(x):
    x = (x ^ (x >> _S30)) * _M1
    x = (x ^ (x >> _S27)) * _M2
    return x ^ (x >> _S31)


@njit(cache=True, nogil=True)
def stream_key(seed, index):
    return mix64(mix64(seed) + _GOLDEN * (index + _ONE))


@njit(cache=True, nogil=True)
def uniform_at(key, counter):
    """Uniform on the open interval (0, 1) at position ``counter`` of stream ``key``."""
    bits = mix64(key + _GOLDEN * (counter + _ONE)) >> _S11
    return (float(bits) + 0.5) * _INV53


@njit(cache=True, nogil=True)
def uniforms(key, offset, count):
    out = np.empty(count)
    for j in range(count):
        out[j] = uniform_at(key, np.uint64(offset + j))
    return out


@njit(cache=True, nogil=True)
def draw_block(seed, start, count, units, block_starts, block_n1, n):
    """Assignments for draws ``start .. start+count-1``.

    ``units`` lists unit indices grouped by stratum; stratum ``k`` occupies
    ``units[block_starts[k]:block_starts[k+1]]`` and receives ``block_n1[k]``
    treated units chosen by a partial Fisher-Yates shuffle.
    """
    out = np.zeros((count, n), dtype=np.int8)
    work = np.empty(units.shape[0], dtype=np.int64)
    nblocks = block_n1.shape[0]
    for r in range(count):
        key = stream_key(seed, np.uint64(start + r))
        for i in range(units.shape[0]):
            work[i] = units[i]
        c = 0
        for k in range(nblocks):
            lo = block_starts[k]
            size = block_starts[k + 1] - lo
            for j in range(block_n1[k]):
                u = uniform_at(key, np.uint64(c))
                c += 1
                pick = j + int(u * (size - j))
                if pick >= size:
                    pick = size - 1
                tmp = work[lo + j]
                work[lo + j] = work[lo + pick]
                work[lo + pick] = tmp
                out[r, work[lo + j]] = 1
    return out


@njit(cache=True, nogil=True)
def _ks_merge(a, na, b, nb, shift):
    """Integer numerator of sup |F_a(y + shift) - F_b(y)| for sorted a, b.

    ``a`` and ``b`` need one spare slot past ``na``/``nb`` for a sentinel.
    The statistic equals ``result / (na * nb)``.  Consecutive merged points
    within a few ulps of the largest magnitude count as tied, and the sweep
    only records the CDF gap at the end of each tie group.  Written without
    data-dependent branches; the masks it consumes are random.
    """
    scale = max(abs(a[0] - shift), abs(a[na - 1] - shift), abs(b[0]), abs(b[nb - 1]))
    tol = _TIE_ULPS * scale
    a[na] = np.inf
    b[nb] = np.inf
    i = 0
    j = 0
    best = 0
    for _ in range(na + nb):
        x = a[i] - shift
        y = b[j]
        ta = 1 if x <= y else 0
        v = min(x, y)
        i += ta
        j += 1 - ta
        nxt = min(a[i] - shift, b[j])
        d = abs(i * nb - j * na)
        if nxt > v + tol and d > best:
            best = d
    return best


@njit(cache=True, nogil=True)
def ks_sorted_count(a, na, b, nb, shift):
    """As :func:`_ks_merge` for exactly-sized inputs; -1 if either is empty."""
    if na == 0 or nb == 0:
        return -1
    pa = np.empty(na + 1)
    pa[:na] = a[:na]
    pb = np.empty(nb + 1)
    pb[:nb] = b[:nb]
    return _ks_merge(pa, na, pb, nb, shift)


@njit(cache=True, nogil=True)
def sks_table_block(y1s, m1, y0s, m0, fixed_shift, use_fixed):
    """SKS (or fixed-shift KS) for a block of assignments.

    ``y1s``/``y0s`` are the science-table columns sorted ascending; ``m1``
    and ``m0`` hold each draw's assignment permuted into those two orders,
    so the revealed treated and control samples are already sorted.
    """
    R, N = m1.shape
    out = np.empty(R)
    a = np.empty(N + 1)
    b = np.empty(N + 1)
    for r in range(R):
        na = 0
        sa = 0.0
        for i in range(N):
            t = m1[r, i]
            a[na] = y1s[i]
            sa += y1s[i] * t
            na += t
        nb = 0
        sb = 0.0
        for i in range(N):
            c = 1 - m0[r, i]
            b[nb] = y0s[i]
            sb += y0s[i] * c
            nb += c
        if na == 0 or nb == 0:
            out[r] = np.nan
            continue
        shift = fixed_shift if use_fixed else sa / na - sb / nb
        out[r] = _ks_merge(a, na, b, nb, shift) / (na * nb)
    return out


@njit(cache=True, nogil=True)
def wsks_table_block(y1s, m1, y0s, m0, bounds):
    """Stratum-size-weighted SKS; columns sorted within contiguous strata."""
    R, N = m1.shape
    K = bounds.shape[0] - 1
    out = np.empty(R)
    a = np.empty(N + 1)
    b = np.empty(N + 1)
    for r in range(R):
        total = 0.0
        bad = False
        for k in range(K):
            lo = bounds[k]
            hi = bounds[k + 1]
            na = 0
            sa = 0.0
            nb = 0
            sb = 0.0
            for i in range(lo, hi):
                t = m1[r, i]
                a[na] = y1s[i]
                sa += y1s[i] * t
                na += t
                c = 1 - m0[r, i]
                b[nb] = y0s[i]
                sb += y0s[i] * c
                nb += c
            if na == 0 or nb == 0:
                bad = True
                break
            shift = sa / na - sb / nb
            total += (hi - lo) / N * (_ks_merge(a, na, b, nb, shift) / (na * nb))
        out[r] = np.nan if bad else total
    return out


@njit(cache=True, nogil=True)
def ks_groups_block(values, z):
    """Unshifted two-sample KS between z==1 and z==0 entries of each row."""
    R, N = values.shape
    out = np.empty(R)
    a = np.empty(N)
    b = np.empty(N)
    for r in range(R):
        na = 0
        nb = 0
        for i in range(N):
            if z[r, i] == 1:
                a[na] = values[r, i]
                na += 1
            else:
                b[nb] = values[r, i]
                nb += 1
        if na == 0 or nb == 0:
            out[r] = np.nan
            continue
        sa = np.sort(a[:na])
        sb = np.sort(b[:nb])
        out[r] = ks_sorted_count(sa, na, sb, nb, 0.0) / (na * nb)
    return out


@njit(cache=True, nogil=True)
def weighted_sweep_block(values, signed_weights):
    """sup_y |sum of signed weights over points <= y| per row, tie-grouped."""
    R, N = values.shape
    out = np.empty(R)
    for r in range(R):
        order = np.argsort(values[r])
        v = values[r][order]
        w = signed_weights[r][order]
        tol = _TIE_ULPS * max(abs(v[0]), abs(v[N - 1]))
        acc = 0.0
        best = 0.0
        i = 0
        while i < N:
            lim = v[i] + tol
            while i < N and v[i] <= lim:
                acc += w[i]
                i += 1
            if abs(acc) > best:
                best = abs(acc)
        out[r] = best
    return out


@njit(cache=True, nogil=True)
def resample_sks_block(pool, seed, start, count, n1, size):
    """Bootstrap SKS: draw ``size`` values with replacement from ``pool``."""
    out = np.empty(count)
    npool = pool.shape[0]
    n0 = size - n1
    for r in range(count):
        key = stream_key(seed, np.uint64(start + r))
        a = np.empty(n1)
        b = np.empty(n0)
        sa = 0.0
        sb = 0.0
        for j in range(size):
            idx = int(uniform_at(key, np.uint64(j)) * npool)
            if idx >= npool:
                idx = npool - 1
            if j < n1:
                a[j] = pool[idx]
                sa += pool[idx]
            else:
                b[j - n1] = pool[idx]
                sb += pool[idx]
        a.sort()
        b.sort()
        out[r] = ks_sorted_count(a, n1, b, n0, sa / n1 - sb / n0) / (n1 * n0)
    return out


@njit(cache=True, nogil=True)
def _subsample(y, work, k, key, c):
    """Partial Fisher-Yates: ``k`` distinct values of ``y``; returns them sorted and the counter."""
    n = y.shape[0]
    for i in range(n):
        work[i] = i
    out = np.empty(k)
    for j in range(k):
        pick = j + int(uniform_at(key, np.uint64(c)) * (n - j))
        c += 1
        if pick >= n:
            pick = n - 1
        tmp = work[j]
        work[j] = work[pick]
        work[pick] = tmp
        out[j] = y[work[j]]
    out.sort()
    return out, c


@njit(cache=True, nogil=True)
def subsample_ks_block(y1, y0, b1, b0, shift, seed, start, count):
    """KS at a fixed shift on subsamples drawn without replacement per arm."""
    out = np.empty(count)
    w1 = np.empty(y1.shape[0], dtype=np.int64)
    w0 = np.empty(y0.shape[0], dtype=np.int64)
    for r in range(count):
        key = stream_key(seed, np.uint64(start + r))
        a, c = _subsample(y1, w1, b1, key, 0)
        b, c = _subsample(y0, w0, b0, key, c)
        out[r] = ks_sorted_count(a, b1, b, b0, shift) / (b1 * b0)
    return out


@njit(cache=True, nogil=True)
def left_quantiles(sorted_y, q):
    """``inf{y : F(y) >= q}`` for each level, on an ascending sample."""
    n = sorted_y.shape[0]
    out = np.empty(q.shape[0])
    for j in range(q.shape[0]):
        k = int(np.ceil(q[j] * n - 1e-9)) - 1
        if k < 0:
            k = 0
        if k > n - 1:
            k = n - 1
        out[j] = sorted_y[k]
    return out


@njit(cache=True, nogil=True)
def subsample_qp_block(y1, y0, b1, b0, q, full, seed, start, count):
    """``sup_q |v_b(q) - v(q)|`` with ``v(q) = tau(q) - tau`` on per-arm subsamples."""
    out = np.empty(count)
    w1 = np.empty(y1.shape[0], dtype=np.int64)
    w0 = np.empty(y0.shape[0], dtype=np.int64)
    for r in range(count):
        key = stream_key(seed, np.uint64(start + r))
        a, c = _subsample(y1, w1, b1, key, 0)
        b, c = _subsample(y0, w0, b0, key, c)
        qa = left_quantiles(a, q)
        qb = left_quantiles(b, q)
        tau = a.mean() - b.mean()
        m = 0.0
        for j in range(q.shape[0]):
            d = abs(qa[j] - qb[j] - tau - full[j])
            if d > m:
                m = d
        out[r] = m
    return out
