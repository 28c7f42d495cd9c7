"""Hot numeric kernels: numba-compiled kd-tree queries and O(N^2) reductions.

Every kernel has a pure-numpy fallback. Set PCAL_DISABLE_NUMBA=1 to force the
numpy path (the numba path is the default when numba imports cleanly). Both
paths return identical results; see benchmarks/bench_kernels.py for the speed
comparison.
"""

import math
import os

import numpy as np

_DISABLE = os.environ.get("PCAL_DISABLE_NUMBA", "").lower() in ("1", "true", "yes")

if not _DISABLE:
    try:
        from numba import njit
        HAVE_NUMBA = True
    except ImportError:
        HAVE_NUMBA = False
else:
    HAVE_NUMBA = False

if not HAVE_NUMBA:
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(f):
            return f
        return wrap


# ---------------------------------------------------------------------------
# kd-tree queries (numba path walks the tree; numpy fallback is a brute scan,
# which is exact by construction)
# ---------------------------------------------------------------------------

_STACK = 128


@njit(cache=True)
def _knn_kernel(pts, perm, split_dim, split_val, left, right, start, end,
                queries, excludes, k, out_ids, out_counts):
    nq = queries.shape[0]
    best_d2 = np.empty(k, np.float64)
    best_id = np.empty(k, np.int64)
    stack = np.empty(_STACK, np.int64)
    for qi in range(nq):
        q = queries[qi]
        excl = excludes[qi]
        count = 0
        top = 0
        stack[top] = 0
        top += 1
        while top > 0:
            top -= 1
            node = stack[top]
            if split_dim[node] < 0:
                for t in range(start[node], end[node]):
                    i = perm[t]
                    if i == excl:
                        continue
                    dx = pts[i, 0] - q[0]
                    dy = pts[i, 1] - q[1]
                    dz = pts[i, 2] - q[2]
                    d2 = dx * dx + dy * dy + dz * dz
                    if count < k:
                        pos = count
                        while pos > 0 and (best_d2[pos - 1] > d2 or
                                           (best_d2[pos - 1] == d2 and best_id[pos - 1] > i)):
                            best_d2[pos] = best_d2[pos - 1]
                            best_id[pos] = best_id[pos - 1]
                            pos -= 1
                        best_d2[pos] = d2
                        best_id[pos] = i
                        count += 1
                    elif d2 < best_d2[k - 1] or (d2 == best_d2[k - 1] and i < best_id[k - 1]):
                        pos = k - 1
                        while pos > 0 and (best_d2[pos - 1] > d2 or
                                           (best_d2[pos - 1] == d2 and best_id[pos - 1] > i)):
                            best_d2[pos] = best_d2[pos - 1]
                            best_id[pos] = best_id[pos - 1]
                            pos -= 1
                        best_d2[pos] = d2
                        best_id[pos] = i
            else:
                d = q[split_dim[node]] - split_val[node]
                if d <= 0.0:
                    near = left[node]
                    far = right[node]
                else:
                    near = right[node]
                    far = left[node]
                if count < k or d * d <= best_d2[k - 1]:
                    stack[top] = far
                    top += 1
                stack[top] = near
                top += 1
        for t in range(count):
            out_ids[qi, t] = best_id[t]
        out_counts[qi] = count


@njit(cache=True)
def _fdn_kernel(pts, perm, split_dim, split_val, left, right, start, end,
                q, excl, radius, tmp_ids, tmp_d2):
    r2 = radius * radius
    m = 0
    stack = np.empty(_STACK, np.int64)
    top = 0
    stack[top] = 0
    top += 1
    while top > 0:
        top -= 1
        node = stack[top]
        if split_dim[node] < 0:
            for t in range(start[node], end[node]):
                i = perm[t]
                if i == excl:
                    continue
                dx = pts[i, 0] - q[0]
                dy = pts[i, 1] - q[1]
                dz = pts[i, 2] - q[2]
                d2 = dx * dx + dy * dy + dz * dz
                if d2 <= r2:
                    tmp_ids[m] = i
                    tmp_d2[m] = d2
                    m += 1
        else:
            d = q[split_dim[node]] - split_val[node]
            if d <= radius:
                stack[top] = left[node]
                top += 1
            if -d <= radius:
                stack[top] = right[node]
                top += 1
    # sort by (d2, id): stable sort on d2 after an id pre-sort
    o1 = np.argsort(tmp_ids[:m], kind='mergesort')
    d2s = tmp_d2[:m][o1]
    o2 = np.argsort(d2s, kind='mergesort')
    return tmp_ids[:m][o1][o2]


def knn_numpy(pts, query, k, exclude=-1):
    """Brute-force exact KNN; ties broken by ascending point index."""
    d2 = np.sum((pts - query) ** 2, axis=1)
    if exclude >= 0:
        d2 = d2.copy()
        d2[exclude] = np.inf
    order = np.argsort(d2, kind='stable')
    k = min(k, (d2 < np.inf).sum())
    return order[:k].astype(np.int64)


def fdn_numpy(pts, query, radius, exclude=-1):
    """Brute-force exact fixed-distance neighbors, ascending (distance, id)."""
    d2 = np.sum((pts - query) ** 2, axis=1)
    if exclude >= 0:
        d2 = d2.copy()
        d2[exclude] = np.inf
    ids = np.nonzero(d2 <= radius * radius)[0]
    order = np.argsort(d2[ids], kind='stable')
    return ids[order].astype(np.int64)


# ---------------------------------------------------------------------------
# pairwise-distance variance (density scale for the smoothness loss)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _pairwise_variance_kernel(pts):
    n = pts.shape[0]
    cnt = n * (n - 1) // 2
    s = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            dx = pts[i, 0] - pts[j, 0]
            dy = pts[i, 1] - pts[j, 1]
            dz = pts[i, 2] - pts[j, 2]
            s += math.sqrt(dx * dx + dy * dy + dz * dz)
    mean = s / cnt
    acc = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            dx = pts[i, 0] - pts[j, 0]
            dy = pts[i, 1] - pts[j, 1]
            dz = pts[i, 2] - pts[j, 2]
            d = math.sqrt(dx * dx + dy * dy + dz * dz) - mean
            acc += d * d
    return acc / cnt


def _pairwise_variance_numpy(pts, chunk=512):
    n = pts.shape[0]
    dists = []
    for lo in range(0, n, chunk):
        block = pts[lo:lo + chunk]
        d = np.sqrt(((block[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
        for r in range(block.shape[0]):
            dists.append(d[r, lo + r + 1:])
    all_d = np.concatenate(dists)
    return float(np.var(all_d))


def pairwise_distance_variance(pts):
    """Population variance of all N(N-1)/2 pairwise Euclidean distances."""
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    if HAVE_NUMBA:
        return float(_pairwise_variance_kernel(pts))
    return _pairwise_variance_numpy(pts)


# ---------------------------------------------------------------------------
# exact all-pairs smoothness reduction (test oracle for the sampled estimator)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _smoothness_exact_kernel(p, logp, pts, sigma):
    n = p.shape[0]
    c = p.shape[1]
    acc = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            kl = 0.0
            for a in range(c):
                kl += p[i, a] * (logp[i, a] - logp[j, a])
            dx = pts[i, 0] - pts[j, 0]
            dy = pts[i, 1] - pts[j, 1]
            dz = pts[i, 2] - pts[j, 2]
            d = math.sqrt(dx * dx + dy * dy + dz * dz)
            acc += kl * math.exp(-d / sigma)
    return acc / (n * (n + 1) / 2.0)


def _smoothness_exact_numpy(p, logp, pts, sigma):
    n = p.shape[0]
    ent = (p * logp).sum(axis=1)
    kl = ent[:, None] - p @ logp.T
    d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    w = np.exp(-d / sigma)
    iu = np.triu_indices(n, k=1)
    return float((kl[iu] * w[iu]).sum() / (n * (n + 1) / 2.0))


def smoothness_exact_mean(p, logp, pts, sigma):
    """Mean of KL(p_i || p_j) * exp(-dist/sigma) over all ordered pairs j >= i.

    Self pairs contribute exactly zero but are counted in the denominator.
    """
    p = np.ascontiguousarray(p, dtype=np.float64)
    logp = np.ascontiguousarray(logp, dtype=np.float64)
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    if HAVE_NUMBA:
        return float(_smoothness_exact_kernel(p, logp, pts, sigma))
    return _smoothness_exact_numpy(p, logp, pts, sigma)
