"""Compiled inner loops.

Everything that touches a martingale value lives here so that the streaming
session and the batch path runner execute literally the same machine code;
the determinism tests compare their outputs bit for bit.
"""

import math

import numpy as np
from numba import njit

_JIT = dict(cache=True, nogil=True)


# --------------------------------------------------------------------------
# binning


@njit(**_JIT)
def cell_of_fraction(num, den, d):
    """Cell index of ``num/den`` on ``d`` bins (left-open, right-closed)."""
    if num <= 0:
        return 0
    k = (num * d + den - 1) // den - 1
    if k > d - 1:
        k = d - 1
    return k


@njit(**_JIT)
def _product_error(a, b, p):
    # Dekker: a * b == p + error exactly
    c = 134217729.0 * a
    ah = c - (c - a)
    al = a - ah
    c = 134217729.0 * b
    bh = c - (c - b)
    bl = b - bh
    return ((ah * bh - p) + ah * bl + al * bh) + al * bl


@njit(**_JIT)
def cell_of_real(r, d):
    p = r * d
    k = int(math.ceil(p)) - 1
    # a product rounded onto an edge may really lie just above it
    if p == math.floor(p) and _product_error(r, float(d), p) > 0.0:
        k += 1
    if k < 0:
        k = 0
    elif k > d - 1:
        k = d - 1
    return k


@njit(**_JIT)
def interval_probs(c, n, d, out):
    # [(c-1)/n, c/n] against [k/d, (k+1)/d]; overlap in units of 1/(n d)
    lo = (c - 1) * d
    hi = c * d
    for k in range(d):
        a = k * n
        b = (k + 1) * n
        num = min(hi, b) - max(lo, a)
        out[k] = num / d if num > 0 else 0.0


@njit(**_JIT)
def randomized_rank(le, lt, n, u):
    return (lt + u * (le - lt)) / n


# --------------------------------------------------------------------------
# ranks


@njit(**_JIT)
def sequential_counts(x):
    """Return (#{i<=t: x_i <= x_t}, #{i<=t: x_i < x_t}) for every t."""
    n = x.shape[0]
    le = np.empty(n, np.int64)
    lt = np.empty(n, np.int64)
    if n == 0:
        return le, lt
    order = np.argsort(x, kind="mergesort")
    dense = np.empty(n, np.int64)
    r = 0
    for i in range(n):
        if i > 0 and x[order[i]] != x[order[i - 1]]:
            r += 1
        dense[order[i]] = r
    m = r + 1
    tree = np.zeros(m + 1, np.int64)
    for t in range(n):
        q = dense[t] + 1
        i = q
        while i <= m:
            tree[i] += 1
            i += i & (-i)
        s = 0
        i = q
        while i > 0:
            s += tree[i]
            i -= i & (-i)
        le[t] = s
        s = 0
        i = q - 1
        while i > 0:
            s += tree[i]
            i -= i & (-i)
        lt[t] = s
    return le, lt


@njit(**_JIT)
def backfill_counts(H, xs, ys):
    """Add one count per buffered pair at its non-sequential (batch) rank."""
    m = xs.shape[0]
    d = H.shape[0]
    for i in range(m):
        cx = 0
        cy = 0
        for j in range(m):
            if xs[j] <= xs[i]:
                cx += 1
            if ys[j] <= ys[i]:
                cy += 1
        H[cell_of_fraction(cx, m, d), cell_of_fraction(cy, m, d)] += 1.0


# --------------------------------------------------------------------------
# Sinkhorn


@njit(**_JIT)
def margins_within(M, lo, hi):
    d = M.shape[0]
    for k in range(d):
        s = 0.0
        for l in range(d):
            s += M[k, l]
        if not (lo < s < hi):
            return False
    for l in range(d):
        s = 0.0
        for k in range(d):
            s += M[k, l]
        if not (lo < s < hi):
            return False
    return True


@njit(**_JIT)
def sinkhorn_scaled(C, rs, cs, out, max_iter, tol):
    """Project ``C`` to uniform margins, starting from diag(rs) C diag(cs).

    ``rs``/``cs`` are updated in place and carry the warm start to the next
    call. Returns the number of full row+column sweeps performed.
    """
    d = C.shape[0]
    target = 1.0 / d
    lo = target / tol
    hi = target * tol
    for k in range(d):
        for l in range(d):
            out[k, l] = rs[k] * C[k, l] * cs[l]
    it = 0
    while it < max_iter and not margins_within(out, lo, hi):
        for k in range(d):
            s = 0.0
            for l in range(d):
                s += out[k, l]
            f = target / s
            rs[k] *= f
            for l in range(d):
                out[k, l] *= f
        for l in range(d):
            s = 0.0
            for k in range(d):
                s += out[k, l]
            f = target / s
            cs[l] *= f
            for k in range(d):
                out[k, l] *= f
        it += 1
    total = 0.0
    for k in range(d):
        for l in range(d):
            total += out[k, l]
    for k in range(d):
        rs[k] /= total
        for l in range(d):
            out[k, l] /= total
    return it


# --------------------------------------------------------------------------
# per-depth histogram martingale


@njit(**_JIT)
def cell_densities(H, n_seen, c0, sinkhorn, rs, cs, work, max_iter, tol):
    """Fill ``work[1]`` with the predictive density on every cell."""
    d = H.shape[0]
    dd = d * d
    denom = n_seen + c0 * dd
    D = work[1]
    if sinkhorn:
        C = work[0]
        for k in range(d):
            for l in range(d):
                C[k, l] = (H[k, l] + c0) / denom
        sinkhorn_scaled(C, rs, cs, D, max_iter, tol)
        for k in range(d):
            for l in range(d):
                D[k, l] *= dd
    else:
        for k in range(d):
            for l in range(d):
                D[k, l] = dd * (H[k, l] + c0) / denom


@njit(**_JIT)
def step_probs(H, n_seen, c0, sinkhorn, rs, cs, work, max_iter, tol, P):
    cell_densities(H, n_seen, c0, sinkhorn, rs, cs, work, max_iter, tol)
    D = work[1]
    d = H.shape[0]
    inc = 0.0
    for k in range(d):
        for l in range(d):
            p = P[k, l]
            if p > 0.0:
                inc += p * D[k, l]
                H[k, l] += p
    return math.log(inc)


@njit(**_JIT)
def step_rect(H, n_seen, c0, sinkhorn, rs, cs, work, max_iter, tol, cx, cy, n, px, py):
    d = H.shape[0]
    interval_probs(cx, n, d, px)
    interval_probs(cy, n, d, py)
    cell_densities(H, n_seen, c0, sinkhorn, rs, cs, work, max_iter, tol)
    D = work[1]
    inc = 0.0
    for k in range(d):
        if px[k] > 0.0:
            for l in range(d):
                if py[l] > 0.0:
                    p = px[k] * py[l]
                    inc += p * D[k, l]
                    H[k, l] += p
    return math.log(inc)


@njit(**_JIT)
def step_point(H, n_seen, c0, sinkhorn, rs, cs, work, max_iter, tol, k, l):
    cell_densities(H, n_seen, c0, sinkhorn, rs, cs, work, max_iter, tol)
    inc = work[1][k, l]
    H[k, l] += 1.0
    return math.log(inc)


# --------------------------------------------------------------------------
# two-bin interaction martingales (sequential BET)


@njit(**_JIT)
def bet_step(h1, n_seen, c0, log_m, masks, P):
    """Update every interaction with cell probabilities ``P``.

    ``masks[m]`` is 1.0 on cells of the first half of interaction ``m``.
    """
    M = masks.shape[0]
    d = P.shape[0]
    denom = n_seen + 2.0 * c0
    for m in range(M):
        p1 = 0.0
        for k in range(d):
            for l in range(d):
                if masks[m, k, l] > 0.0:
                    p1 += P[k, l]
        f1 = 2.0 * (h1[m] + c0) / denom
        f2 = 2.0 * (n_seen - h1[m] + c0) / denom
        log_m[m] += math.log(p1 * f1 + (1.0 - p1) * f2)
        h1[m] += p1


@njit(**_JIT)
def log_mean_exp(v):
    mx = v[0]
    for i in range(1, v.shape[0]):
        if v[i] > mx:
            mx = v[i]
    s = 0.0
    for i in range(v.shape[0]):
        s += math.exp(v[i] - mx)
    return mx + math.log(s / v.shape[0])


# --------------------------------------------------------------------------
# aggregation over depths


@njit(**_JIT)
def aggregate_log_increment(log_f, log_m_prev, w, w0, eta):
    K = w.shape[0]
    if eta == 0.0:
        s = 0.0
        for i in range(K):
            s += w[i] * math.exp(log_f[i])
    else:
        mx = -math.inf
        lw = np.empty(K)
        for i in range(K):
            lw[i] = math.log(w[i]) + eta * log_m_prev[i]
            if lw[i] > mx:
                mx = lw[i]
        num = 0.0
        den = 0.0
        for i in range(K):
            a = math.exp(lw[i] - mx)
            den += a
            num += a * math.exp(log_f[i])
        s = num / den
    return math.log(w0 + (1.0 - w0) * s)


# --------------------------------------------------------------------------
# whole-path runners


@njit(**_JIT)
def grid_layout(depths):
    K = depths.shape[0]
    offs = np.zeros(K + 1, np.int64)
    voffs = np.zeros(K + 1, np.int64)
    for i in range(K):
        offs[i + 1] = offs[i] + depths[i] * depths[i]
        voffs[i + 1] = voffs[i] + depths[i]
    return offs, voffs


@njit(**_JIT)
def grid_step(derand, depths, offs, voffs, n_act, w, w0, eta, c0, sinkhorn, max_iter,
              tol, Hf, Wf, rsf, csf, px, py, n_seen, log_m, log_f,
              n, cx, cy, r, s, warm_x, warm_y):
    """One observation for every depth plus the aggregate; returns its log increment.

    ``cx``, ``cy`` are the counts ``#{x_i <= x_n}`` (derandomized mode) and
    ``r``, ``s`` the randomized ranks. ``warm_x``/``warm_y`` hold the raw
    values (derandomized) or randomized ranks of the warm-up observations.
    """
    K = depths.shape[0]
    for i in range(K):
        d = depths[i]
        if n <= n_act[i]:
            log_f[i] = 0.0
            continue
        H = Hf[offs[i]:offs[i + 1]].reshape((d, d))
        work = Wf[2 * offs[i]:2 * offs[i + 1]].reshape((2, d, d))
        rs = rsf[voffs[i]:voffs[i + 1]]
        cs = csf[voffs[i]:voffs[i + 1]]
        if derand:
            log_f[i] = step_rect(H, n_seen[i], c0, sinkhorn, rs, cs, work,
                                 max_iter, tol, cx, cy, n, px[:d], py[:d])
        else:
            log_f[i] = step_point(H, n_seen[i], c0, sinkhorn, rs, cs, work,
                                  max_iter, tol, cell_of_real(r, d), cell_of_real(s, d))
        n_seen[i] += 1
    inc = aggregate_log_increment(log_f, log_m, w, w0, eta)
    for i in range(K):
        log_m[i] += log_f[i]
        if n == n_act[i]:
            d = depths[i]
            H = Hf[offs[i]:offs[i + 1]].reshape((d, d))
            backfill_counts(H, warm_x[:n], warm_y[:n])
            n_seen[i] = n
    return inc


@njit(**_JIT)
def run_grid_path(x, y, uv, derand, depths, n_act, w, w0, eta, c0, sinkhorn,
                  max_iter, tol, stop_log, out_log):
    """Run the aggregated grid test over a whole stream.

    Writes the natural-log aggregate after every step to ``out_log`` and
    returns the first step at which it reaches ``stop_log`` (0 if never,
    -1 if ties were met in derandomized mode).
    """
    N = x.shape[0]
    le_x, lt_x = sequential_counts(x)
    le_y, lt_y = sequential_counts(y)
    if derand:
        for t in range(N):
            if le_x[t] - lt_x[t] != 1 or le_y[t] - lt_y[t] != 1:
                return -1
    K = depths.shape[0]
    offs, voffs = grid_layout(depths)
    dmax = 1
    amax = 0
    for i in range(K):
        dmax = max(dmax, depths[i])
        amax = max(amax, n_act[i])
    Hf = np.zeros(offs[K])
    Wf = np.zeros(2 * offs[K])
    rsf = np.ones(voffs[K])
    csf = np.ones(voffs[K])
    px = np.empty(dmax)
    py = np.empty(dmax)
    if derand:
        warm_x = x
        warm_y = y
    else:
        warm_x = np.empty(max(amax, 1))
        warm_y = np.empty(max(amax, 1))
    n_seen = np.zeros(K, np.int64)
    log_m = np.zeros(K)
    log_f = np.zeros(K)
    agg = 0.0
    hit = 0
    for t in range(N):
        n = t + 1
        r = 0.0
        s = 0.0
        if not derand:
            r = randomized_rank(le_x[t], lt_x[t], n, uv[t, 0])
            s = randomized_rank(le_y[t], lt_y[t], n, uv[t, 1])
            if t < amax:
                warm_x[t] = r
                warm_y[t] = s
        agg += grid_step(derand, depths, offs, voffs, n_act, w, w0, eta, c0, sinkhorn,
                         max_iter, tol, Hf, Wf, rsf, csf, px, py, n_seen, log_m, log_f,
                         n, le_x[t], le_y[t], r, s, warm_x, warm_y)
        out_log[t] = agg
        if agg >= stop_log:
            hit = n
            break
    return hit


@njit(**_JIT)
def run_bet_path(x, y, uv, derand, d, n_act, c0, masks, stop_log, out_log):
    N = x.shape[0]
    le_x, lt_x = sequential_counts(x)
    le_y, lt_y = sequential_counts(y)
    if derand:
        for t in range(N):
            if le_x[t] - lt_x[t] != 1 or le_y[t] - lt_y[t] != 1:
                return -1
    M = masks.shape[0]
    h1 = np.zeros(M)
    log_m = np.zeros(M)
    P = np.zeros((d, d))
    px = np.empty(d)
    py = np.empty(d)
    buf_r = np.empty(max(n_act, 1))
    buf_s = np.empty(max(n_act, 1))
    n_seen = 0
    hit = 0
    for t in range(N):
        n = t + 1
        if not derand and t < n_act:
            buf_r[t] = randomized_rank(le_x[t], lt_x[t], n, uv[t, 0])
            buf_s[t] = randomized_rank(le_y[t], lt_y[t], n, uv[t, 1])
        if n > n_act:
            P[:, :] = 0.0
            if derand:
                interval_probs(le_x[t], n, d, px)
                interval_probs(le_y[t], n, d, py)
                for k in range(d):
                    for l in range(d):
                        P[k, l] = px[k] * py[l]
            else:
                r = randomized_rank(le_x[t], lt_x[t], n, uv[t, 0])
                s = randomized_rank(le_y[t], lt_y[t], n, uv[t, 1])
                P[cell_of_real(r, d), cell_of_real(s, d)] = 1.0
            bet_step(h1, n_seen, c0, log_m, masks, P)
            n_seen += 1
        elif n == n_act:
            B = np.zeros((d, d))
            if derand:
                backfill_counts(B, x[:n], y[:n])
            else:
                backfill_counts(B, buf_r[:n], buf_s[:n])
            for k in range(d):
                for l in range(d):
                    if B[k, l] > 0.0:
                        for m in range(M):
                            if masks[m, k, l] > 0.0:
                                h1[m] += B[k, l]
            n_seen = n
        agg = log_mean_exp(log_m)
        out_log[t] = agg
        if agg >= stop_log:
            hit = n
            break
    return hit
