"""Inner-loop kernels, each in a numba flavour and a pure-numpy flavour.

The module-level names (``jacobi_eigh``, ``gini_best_split``, ...) are bound to
the numba versions when :data:`semcad._accel.USE_NUMBA` is true and to the numpy
versions otherwise.  Both flavours are always importable through
:data:`NUMBA` and :data:`NUMPY` so they can be compared against each other.

Conventions shared by both flavours:

* split finders scan integer codes in ``[0, n_bins)``; a split ``t`` sends
  ``code <= t`` left.  The first best (feature order, then lowest threshold)
  wins, and a split must improve the criterion by more than ``1e-12``.
* ``jacobi_eigh`` returns unsorted eigenvalues, the eigenvector matrix (columns)
  and the number of sweeps used, or ``-1`` sweeps if it did not converge.
"""

from __future__ import annotations

from types import SimpleNamespace

import numpy as np

from semcad._accel import USE_NUMBA, jit

MIN_GAIN = 1e-12


# ---------------------------------------------------------------------------
# numba flavour (plain loops)
# ---------------------------------------------------------------------------


def _jacobi_loops(a_in, tol, max_sweeps):
    a = a_in.copy()
    n = a.shape[0]
    v = np.eye(n)
    fro = 0.0
    for i in range(n):
        for j in range(n):
            fro += a[i, j] * a[i, j]
    fro = np.sqrt(fro)
    for sweep in range(max_sweeps + 1):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off += 2.0 * a[p, q] * a[p, q]
        if np.sqrt(off) <= tol * fro:
            return np.diag(a).copy(), v, sweep
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    return np.diag(a).copy(), v, -1


def _histogram_loops(X, idx, f, wa, wb, n_bins):
    ha = np.zeros(n_bins)
    hb = np.zeros(n_bins)
    hc = np.zeros(n_bins, dtype=np.int64)
    for r in range(idx.shape[0]):
        i = idx[r]
        code = X[i, f]
        ha[code] += wa[i]
        hb[code] += wb[i]
        hc[code] += 1
    return ha, hb, hc


def _gini_split_loops(X, idx, feats, wpos, wneg, n_bins, min_leaf):
    best_f = -1
    best_t = -1
    best_gain = MIN_GAIN
    n = idx.shape[0]
    for j in range(feats.shape[0]):
        f = feats[j]
        hp, hn, hc = _histogram_loops(X, idx, f, wpos, wneg, n_bins)
        tp = 0.0
        tn = 0.0
        for b in range(n_bins):
            tp += hp[b]
            tn += hn[b]
        tw = tp + tn
        if tw <= 0.0:
            continue
        parent = 2.0 * tp * tn / tw
        lp = 0.0
        ln = 0.0
        lc = 0
        for t in range(n_bins - 1):
            lp += hp[t]
            ln += hn[t]
            lc += hc[t]
            if lc < min_leaf:
                continue
            if n - lc < min_leaf:
                break
            lw = lp + ln
            rp = tp - lp
            rn = tn - ln
            rw = rp + rn
            if lw <= 0.0 or rw <= 0.0:
                continue
            gain = parent - 2.0 * lp * ln / lw - 2.0 * rp * rn / rw
            if gain > best_gain:
                best_gain = gain
                best_f = f
                best_t = t
    return best_f, best_t, best_gain


def _newton_split_loops(X, idx, feats, grad, hess, lam, n_bins, min_leaf):
    best_f = -1
    best_t = -1
    best_gain = MIN_GAIN
    n = idx.shape[0]
    for j in range(feats.shape[0]):
        f = feats[j]
        hg, hh, hc = _histogram_loops(X, idx, f, grad, hess, n_bins)
        tg = 0.0
        th = 0.0
        for b in range(n_bins):
            tg += hg[b]
            th += hh[b]
        parent = tg * tg / (th + lam)
        lg = 0.0
        lh = 0.0
        lc = 0
        for t in range(n_bins - 1):
            lg += hg[t]
            lh += hh[t]
            lc += hc[t]
            if lc < min_leaf:
                continue
            if n - lc < min_leaf:
                break
            rg = tg - lg
            rh = th - lh
            gain = lg * lg / (lh + lam) + rg * rg / (rh + lam) - parent
            if gain > best_gain:
                best_gain = gain
                best_f = f
                best_t = t
    return best_f, best_t, best_gain


def _scatter_add_loops(out, codes, rows):
    for i in range(codes.shape[0]):
        c = codes[i]
        for k in range(rows.shape[1]):
            out[c, k] += rows[i, k]
    return out


def _nearest_loops(points, centroids):
    m = points.shape[0]
    k = centroids.shape[0]
    d = points.shape[1]
    labels = np.empty(m, dtype=np.int64)
    dist = np.empty(m)
    for i in range(m):
        best = np.inf
        arg = 0
        for c in range(k):
            s = 0.0
            for j in range(d):
                diff = points[i, j] - centroids[c, j]
                s += diff * diff
            if s < best:
                best = s
                arg = c
        labels[i] = arg
        dist[i] = best
    return labels, dist


def _tree_apply_loops(feature, threshold, left, right, X):
    out = np.empty(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


# ---------------------------------------------------------------------------
# numpy flavour (vectorised)
# ---------------------------------------------------------------------------


def _round_robin(m):
    """Pairings of a round-robin tournament on ``m`` (even) players."""
    players = np.arange(m)
    rounds = []
    for _ in range(m - 1):
        top = players[: m // 2]
        bottom = players[m // 2 :][::-1]
        rounds.append((np.minimum(top, bottom), np.maximum(top, bottom)))
        players = np.concatenate(([players[0]], [players[-1]], players[1:-1]))
    return rounds


def _jacobi_numpy(a_in, tol, max_sweeps):
    # Brent-Luk ordering: each round applies n/2 disjoint rotations at once.
    a = np.array(a_in, dtype=np.float64, copy=True)
    n = a.shape[0]
    v = np.eye(n)
    fro = np.sqrt(np.sum(a * a))
    m = n + (n % 2)
    rounds = []
    for p, q in _round_robin(m):
        keep = q < n
        rounds.append((p[keep], q[keep]))
    iu = np.triu_indices(n, 1)
    for sweep in range(max_sweeps + 1):
        off = np.sqrt(2.0 * np.sum(a[iu] ** 2))
        if off <= tol * fro:
            return np.diag(a).copy(), v, sweep
        if sweep == max_sweeps:
            break
        for p, q in rounds:
            apq = a[p, q]
            live = apq != 0.0
            if not live.any():
                continue
            p = p[live]
            q = q[live]
            apq = apq[live]
            with np.errstate(over="ignore"):
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                root = np.sqrt(1.0 + tau * tau)
            t = np.where(tau >= 0.0, 1.0, -1.0) / (np.abs(tau) + root)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            ap = a[:, p].copy()
            aq = a[:, q].copy()
            a[:, p] = c * ap - s * aq
            a[:, q] = s * ap + c * aq
            ap = a[p, :].copy()
            aq = a[q, :].copy()
            a[p, :] = c[:, None] * ap - s[:, None] * aq
            a[q, :] = s[:, None] * ap + c[:, None] * aq
            a[p, q] = 0.0
            a[q, p] = 0.0
            vp = v[:, p].copy()
            vq = v[:, q].copy()
            v[:, p] = c * vp - s * vq
            v[:, q] = s * vp + c * vq
    return np.diag(a).copy(), v, -1


def _histograms_numpy(X, idx, f, wa, wb, n_bins):
    codes = X[idx, f]
    ha = np.bincount(codes, weights=wa[idx], minlength=n_bins)
    hb = np.bincount(codes, weights=wb[idx], minlength=n_bins)
    hc = np.bincount(codes, minlength=n_bins)
    return ha, hb, hc


def _valid_thresholds(hc, n, min_leaf):
    lc = np.cumsum(hc)[:-1]
    return (lc >= min_leaf) & (n - lc >= min_leaf)


def _gini_split_numpy(X, idx, feats, wpos, wneg, n_bins, min_leaf):
    best_f, best_t, best_gain = -1, -1, MIN_GAIN
    n = idx.shape[0]
    for f in feats:
        hp, hn, hc = _histograms_numpy(X, idx, f, wpos, wneg, n_bins)
        tp = np.cumsum(hp)[-1]
        tn = np.cumsum(hn)[-1]
        tw = tp + tn
        if tw <= 0.0:
            continue
        parent = 2.0 * tp * tn / tw
        lp = np.cumsum(hp)[:-1]
        ln = np.cumsum(hn)[:-1]
        lw = lp + ln
        rp = tp - lp
        rn = tn - ln
        rw = rp + rn
        ok = _valid_thresholds(hc, n, min_leaf) & (lw > 0.0) & (rw > 0.0)
        if not ok.any():
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = parent - 2.0 * lp * ln / lw - 2.0 * rp * rn / rw
        gain = np.where(ok, gain, -np.inf)
        t = int(np.argmax(gain))
        if gain[t] > best_gain:
            best_f, best_t, best_gain = int(f), t, float(gain[t])
    return best_f, best_t, best_gain


def _newton_split_numpy(X, idx, feats, grad, hess, lam, n_bins, min_leaf):
    best_f, best_t, best_gain = -1, -1, MIN_GAIN
    n = idx.shape[0]
    for f in feats:
        hg, hh, hc = _histograms_numpy(X, idx, f, grad, hess, n_bins)
        tg = np.cumsum(hg)[-1]
        th = np.cumsum(hh)[-1]
        parent = tg * tg / (th + lam)
        lg = np.cumsum(hg)[:-1]
        lh = np.cumsum(hh)[:-1]
        rg = tg - lg
        rh = th - lh
        ok = _valid_thresholds(hc, n, min_leaf)
        if not ok.any():
            continue
        gain = lg * lg / (lh + lam) + rg * rg / (rh + lam) - parent
        gain = np.where(ok, gain, -np.inf)
        t = int(np.argmax(gain))
        if gain[t] > best_gain:
            best_f, best_t, best_gain = int(f), t, float(gain[t])
    return best_f, best_t, best_gain


def _scatter_add_numpy(out, codes, rows):
    np.add.at(out, codes, rows)
    return out


def _nearest_numpy(points, centroids):
    diff = points[:, None, :] - centroids[None, :, :]
    d2 = np.sum(diff * diff, axis=2)
    labels = np.argmin(d2, axis=1)
    return labels.astype(np.int64), d2[np.arange(points.shape[0]), labels]


def _tree_apply_numpy(feature, threshold, left, right, X):
    node = np.zeros(X.shape[0], dtype=np.int64)
    rows = np.arange(X.shape[0])
    active = feature[node] >= 0
    while active.any():
        r = rows[active]
        nd = node[r]
        go_left = X[r, feature[nd]] <= threshold[nd]
        node[r] = np.where(go_left, left[nd], right[nd])
        active = feature[node] >= 0
    return node


NUMPY = SimpleNamespace(
    jacobi_eigh=_jacobi_numpy,
    gini_best_split=_gini_split_numpy,
    newton_best_split=_newton_split_numpy,
    scatter_add_rows=_scatter_add_numpy,
    nearest_centroid=_nearest_numpy,
    tree_apply=_tree_apply_numpy,
)

_histogram_loops = jit(_histogram_loops)

NUMBA = SimpleNamespace(
    jacobi_eigh=jit(_jacobi_loops),
    gini_best_split=jit(_gini_split_loops),
    newton_best_split=jit(_newton_split_loops),
    scatter_add_rows=jit(_scatter_add_loops),
    nearest_centroid=jit(_nearest_loops),
    tree_apply=jit(_tree_apply_loops),
)

ACTIVE = NUMBA if USE_NUMBA else NUMPY
BACKEND = "numba" if USE_NUMBA else "numpy"

jacobi_eigh = ACTIVE.jacobi_eigh
gini_best_split = ACTIVE.gini_best_split
newton_best_split = ACTIVE.newton_best_split
scatter_add_rows = ACTIVE.scatter_add_rows
nearest_centroid = ACTIVE.nearest_centroid
tree_apply = ACTIVE.tree_apply
