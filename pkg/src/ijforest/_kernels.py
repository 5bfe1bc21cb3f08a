"""Compiled inner loops: split scans, tree growth, routing, IJ accumulation.

Trees are stored as flat arrays in preorder. ``feature[i] == -1`` marks a
leaf; ``left``/``right`` hold child node ids local to the tree.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

CART = 0
CI = 1
LEAF = -1

# Relative margin a candidate must clear to displace the incumbent. Keeps the
# "smallest variable, then smallest cut" tie rule stable against rounding that
# differs between summation orders.
TIE_RTOL = 1e-12

_SQRT2 = math.sqrt(2.0)


@njit(cache=True, nogil=True)
def _improves(score, best):
    return score > best + TIE_RTOL * abs(best)


@njit(cache=True, nogil=True)
def safe_midpoint(lo, hi):
    cut = 0.5 * (lo + hi)
    if cut >= hi or cut < lo:
        cut = lo
    return cut


@njit(cache=True, nogil=True)
def sse_scan(xs, yc, ws):
    """Best SSE cut over sorted ``xs``; ``yc`` is centred at the weighted mean.

    Returns ``(i, score)`` where the cut sits between ``xs[i]`` and
    ``xs[i+1]`` and ``score = S_L**2/W_L + S_R**2/W_R`` (larger is better).
    ``i == -1`` when no two distinct values exist.
    """
    m = xs.shape[0]
    W = 0.0
    S = 0.0
    for i in range(m):
        W += ws[i]
        S += ws[i] * yc[i]
    wl = 0.0
    sl = 0.0
    best_i = -1
    best = -1.0
    for i in range(m - 1):
        wl += ws[i]
        sl += ws[i] * yc[i]
        if xs[i] < xs[i + 1]:
            wr = W - wl
            sr = S - sl
            score = sl * sl / wl + sr * sr / wr
            if best_i < 0 or _improves(score, best):
                best = score
                best_i = i
    return best_i, best


@njit(cache=True, nogil=True)
def ci_scan(xs, hc, ws, W, vh):
    """Cut maximising the standardized two-sample statistic over sorted ``xs``.

    ``hc`` is centred at the weighted mean and ``vh`` is its weighted
    (denominator ``W``) variance. Returns ``(i, c)`` as in :func:`sse_scan`.
    """
    m = xs.shape[0]
    wl = 0.0
    sl = 0.0
    best_i = -1
    best = -1.0
    for i in range(m - 1):
        wl += ws[i]
        sl += ws[i] * hc[i]
        if xs[i] < xs[i + 1]:
            sig2 = vh * wl * (W - wl) / (W - 1.0)
            c = abs(sl) / math.sqrt(sig2) if sig2 > 0.0 else 0.0
            if best_i < 0 or _improves(c, best):
                best = c
                best_i = i
    return best_i, best


@njit(cache=True, nogil=True)
def association(g, hc, ws, W, vh):
    """Standardized linear statistic for a numeric regressor ``g`` against centred ``hc``."""
    m = g.shape[0]
    gmin = g[0]
    gmax = g[0]
    sg = 0.0
    for i in range(m):
        sg += ws[i] * g[i]
        if g[i] < gmin:
            gmin = g[i]
        if g[i] > gmax:
            gmax = g[i]
    if gmin == gmax or vh <= 0.0:
        return 0.0
    eg = sg / W
    num = 0.0
    sgg = 0.0
    for i in range(m):
        d = g[i] - eg
        num += ws[i] * d * hc[i]
        sgg += ws[i] * d * d
    sig2 = vh * W / (W - 1.0) * sgg
    if sig2 <= 0.0:
        return 0.0
    return abs(num) / math.sqrt(sig2)


@njit(cache=True, nogil=True)
def normal_two_sided(c):
    return math.erfc(c / _SQRT2)


@njit(cache=True, nogil=True)
def _choose_candidates(ubuf, row, p, mtry, out):
    if mtry >= p:
        for j in range(p):
            out[j] = j
        return p
    u = ubuf[row * p:(row + 1) * p]
    order = np.argsort(u, kind="mergesort")
    sel = np.sort(order[:mtry])
    for j in range(mtry):
        out[j] = sel[j]
    return mtry


@njit(cache=True, nogil=True)
def grow_tree(cols, y, w, ubuf, mtry, min_node, learner, alpha,
              feature, threshold, left, right, value):
    """Grow one tree into the preallocated node arrays; return its node count.

    ``w`` holds integer case weights (resample counts). Rows with zero
    weight are never touched. ``ubuf`` supplies ``p`` uniforms per node that
    reaches variable sampling, consumed in preorder; it may be empty when
    ``mtry >= p``.
    """
    p = cols.shape[0]
    n = cols.shape[1]
    m_act = 0
    for i in range(n):
        if w[i] > 0:
            m_act += 1
    samples = np.empty(m_act, np.int64)
    k = 0
    for i in range(n):
        if w[i] > 0:
            samples[k] = i
            k += 1

    cap = 2 * m_act
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_parent = np.empty(cap, np.int64)
    st_side = np.empty(cap, np.int64)
    xs = np.empty(m_act, np.float64)
    xs_s = np.empty(m_act, np.float64)
    hc_s = np.empty(m_act, np.float64)
    ws_s = np.empty(m_act, np.float64)
    cands = np.empty(p, np.int64)

    sp = 0
    st_start[0] = 0
    st_end[0] = m_act
    st_parent[0] = -1
    st_side[0] = 0
    sp = 1
    n_nodes = 0
    row = 0
    thresh_w = 2.0 * min_node

    while sp > 0:
        sp -= 1
        start = st_start[sp]
        end = st_end[sp]
        parent = st_parent[sp]
        side = st_side[sp]
        nid = n_nodes
        n_nodes += 1
        if parent >= 0:
            if side == 0:
                left[parent] = nid
            else:
                right[parent] = nid
        feature[nid] = LEAF
        threshold[nid] = 0.0
        left[nid] = -1
        right[nid] = -1

        W = 0.0
        S = 0.0
        ymin = y[samples[start]]
        ymax = ymin
        for t in range(start, end):
            i = samples[t]
            W += w[i]
            S += w[i] * y[i]
            if y[i] < ymin:
                ymin = y[i]
            if y[i] > ymax:
                ymax = y[i]
        mean = S / W
        value[nid] = mean
        if W < thresh_w or ymin == ymax:
            continue

        m = end - start
        total = 0.0
        for t in range(start, end):
            i = samples[t]
            d = y[i] - mean
            total += w[i] * d * d
        n_c = _choose_candidates(ubuf, row, p, mtry, cands)
        if mtry < p:
            row += 1

        best_var = -1
        best_cut = 0.0
        if learner == CART:
            best = -1.0
            for ci in range(n_c):
                j = cands[ci]
                for t in range(m):
                    xs[t] = cols[j, samples[start + t]]
                order = np.argsort(xs[:m], kind="mergesort")
                for t in range(m):
                    i = samples[start + order[t]]
                    xs_s[t] = xs[order[t]]
                    hc_s[t] = y[i] - mean
                    ws_s[t] = w[i]
                if xs_s[0] == xs_s[m - 1]:
                    continue
                bi, score = sse_scan(xs_s[:m], hc_s[:m], ws_s[:m])
                if bi >= 0 and (best_var < 0 or _improves(score, best)):
                    best = score
                    best_var = j
                    best_cut = safe_midpoint(xs_s[bi], xs_s[bi + 1])
            if best_var < 0:
                continue
            # Centred parent sum is ~0 but not exactly; remove it from the gain.
            sc = 0.0
            for t in range(start, end):
                i = samples[t]
                sc += w[i] * (y[i] - mean)
            gain = best - sc * sc / W
            if not gain > 1e-12 * total:
                continue
        else:
            vh = total / W
            for t in range(m):
                i = samples[start + t]
                hc_s[t] = y[i] - mean
                ws_s[t] = w[i]
            best_c = -1.0
            for ci in range(n_c):
                j = cands[ci]
                for t in range(m):
                    xs[t] = cols[j, samples[start + t]]
                c = association(xs[:m], hc_s[:m], ws_s[:m], W, vh)
                if best_var < 0 or _improves(c, best_c):
                    best_c = c
                    best_var = j
            if best_c <= 0.0:
                continue
            adj = normal_two_sided(best_c) * n_c
            if adj > 1.0:
                adj = 1.0
            if adj > alpha:
                continue
            j = best_var
            for t in range(m):
                xs[t] = cols[j, samples[start + t]]
            order = np.argsort(xs[:m], kind="mergesort")
            for t in range(m):
                i = samples[start + order[t]]
                xs_s[t] = xs[order[t]]
                hc_s[t] = y[i] - mean
                ws_s[t] = w[i]
            bi, c = ci_scan(xs_s[:m], hc_s[:m], ws_s[:m], W, vh)
            if bi < 0:
                continue
            best_cut = safe_midpoint(xs_s[bi], xs_s[bi + 1])

        feature[nid] = best_var
        threshold[nid] = best_cut
        # in-place partition of samples[start:end]
        lo = start
        hi = end - 1
        while lo <= hi:
            if cols[best_var, samples[lo]] <= best_cut:
                lo += 1
            else:
                tmp = samples[lo]
                samples[lo] = samples[hi]
                samples[hi] = tmp
                hi -= 1
        st_start[sp] = lo
        st_end[sp] = end
        st_parent[sp] = nid
        st_side[sp] = 1
        sp += 1
        st_start[sp] = start
        st_end[sp] = lo
        st_parent[sp] = nid
        st_side[sp] = 0
        sp += 1
    return n_nodes


@njit(cache=True, nogil=True)
def grow_many(cols, y, counts, ubuf, ubuf_off, mtry, min_node, learner, alpha,
              feature, threshold, left, right, value, sizes):
    """Grow ``counts.shape[0]`` trees; row ``b`` of each node array holds tree ``b``."""
    for b in range(counts.shape[0]):
        u = ubuf[ubuf_off[b]:ubuf_off[b + 1]]
        sizes[b] = grow_tree(cols, y, counts[b], u, mtry, min_node, learner, alpha,
                             feature[b], threshold[b], left[b], right[b], value[b])


@njit(cache=True, nogil=True)
def route(feature, threshold, left, right, value, base, x):
    node = 0
    while feature[base + node] >= 0:
        k = base + node
        if x[feature[k]] <= threshold[k]:
            node = left[k]
        else:
            node = right[k]
    return value[base + node]


@njit(cache=True, nogil=True)
def predict_matrix(feature, threshold, left, right, value, offsets, X):
    """Per-tree predictions, shape ``(rows of X, n_trees)``."""
    B = offsets.shape[0] - 1
    k = X.shape[0]
    out = np.empty((k, B), np.float64)
    for r in range(k):
        x = X[r]
        for b in range(B):
            out[r, b] = route(feature, threshold, left, right, value, offsets[b], x)
    return out


@njit(cache=True, nogil=True)
def _neumaier_mean(v):
    s = 0.0
    comp = 0.0
    for i in range(v.shape[0]):
        x = v[i]
        t = s + x
        if abs(s) >= abs(x):
            comp += (s - t) + x
        else:
            comp += (x - t) + s
        s = t
    return (s + comp) / v.shape[0]


@njit(cache=True, nogil=True)
def ij_accumulate(T, counts_t, e):
    """Raw IJ sum of squared covariances and tree-prediction variance, per row of ``T``.

    ``T`` is ``(k, B)`` per-tree predictions and ``counts_t`` is the
    ``(n, B)`` transposed count matrix. Sums use Neumaier compensation.
    """
    k, B = T.shape
    n = counts_t.shape[0]
    raw = np.empty(k, np.float64)
    vhat = np.empty(k, np.float64)
    mean = np.empty(k, np.float64)
    dev = np.empty(B, np.float64)
    for r in range(k):
        mu = _neumaier_mean(T[r])
        mean[r] = mu
        s = 0.0
        comp = 0.0
        for b in range(B):
            d = T[r, b] - mu
            dev[b] = d
            x = d * d
            t = s + x
            if abs(s) >= abs(x):
                comp += (s - t) + x
            else:
                comp += (x - t) + s
            s = t
        vhat[r] = (s + comp) / B
        rs = 0.0
        rcomp = 0.0
        for i in range(n):
            cs = 0.0
            ccomp = 0.0
            row = counts_t[i]
            for b in range(B):
                x = (row[b] - e) * dev[b]
                t = cs + x
                if abs(cs) >= abs(x):
                    ccomp += (cs - t) + x
                else:
                    ccomp += (x - t) + cs
                cs = t
            ci = (cs + ccomp) / B
            x = ci * ci
            t = rs + x
            if abs(rs) >= abs(x):
                rcomp += (rs - t) + x
            else:
                rcomp += (x - t) + rs
            rs = t
        raw[r] = rs + rcomp
    return raw, vhat, mean


@njit(cache=True, nogil=True)
def row_means(T):
    out = np.empty(T.shape[0], np.float64)
    for r in range(T.shape[0]):
        out[r] = _neumaier_mean(T[r])
    return out
