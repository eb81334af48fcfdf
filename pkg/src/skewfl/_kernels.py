"""Hot numeric kernels: local SGD loops and all-pairs distances.

Each kernel has a ``*_numpy`` build (vectorized fallback) and, when numba is
available, a ``*_numba`` build compiled with ``@njit``.  The unsuffixed public
names are aliases bound according to :mod:`skewfl._backend`.  The two builds
perform the same arithmetic; summation order may differ in the last ulps.

SGD stepping contract (shared by every build):

* per mini-batch, the raw loss gradient plus ``weight_decay * w`` feeds the
  momentum buffer;
* the buffer is then rescaled so its norm never exceeds ``clip_norm`` and is
  stored rescaled, so the applied step is bounded every step;
* ``w -= lr * buffer``.

Parameter layout is a single flat float64 vector; see :mod:`skewfl.models`.
"""

import math

import numpy as np

from ._backend import HAVE_NUMBA, USE_NUMBA

if HAVE_NUMBA:
    from numba import njit


# ---------------------------------------------------------------------------
# pairwise squared distances


def pairwise_sq_dists_numpy(rows: np.ndarray) -> np.ndarray:
    """All-pairs squared Euclidean distances, (n, n) symmetric with zero diagonal."""
    diff = rows[:, None, :] - rows[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _pairwise_sq_dists_loops(rows):
    n, d = rows.shape
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            acc = 0.0
            for k in range(d):
                delta = rows[i, k] - rows[j, k]
                acc += delta * delta
            out[i, j] = acc
            out[j, i] = acc
    return out


# ---------------------------------------------------------------------------
# softmax-linear SGD
#
# layout: W (c, d) row-major at w[:c*d], bias at w[c*d:c*d+c]


def softmax_sgd_numpy(w, vel, X, y, order, epochs, batch_size, n_classes, lr,
                      momentum, weight_decay, clip_norm):
    ns, d = X.shape
    if ns == 0:
        return
    c = n_classes
    for e in range(epochs):
        base = e * ns
        start = 0
        while start < ns:
            stop = min(start + batch_size, ns)
            idx = order[base + start:base + stop]
            xb = X[idx]
            yb = y[idx]
            nb = stop - start
            W = w[:c * d].reshape(c, d)
            b = w[c * d:]
            scores = xb @ W.T + b
            scores -= scores.max(axis=1, keepdims=True)
            p = np.exp(scores)
            p /= p.sum(axis=1, keepdims=True)
            p[np.arange(nb), yb] -= 1.0
            p /= nb
            grad = np.concatenate(((p.T @ xb).ravel(), p.sum(axis=0)))
            vel *= momentum
            vel += grad
            vel += weight_decay * w
            nrm = math.sqrt(float(vel @ vel))
            if nrm > clip_norm:
                vel *= clip_norm / nrm
            w -= lr * vel
            start = stop


def _softmax_sgd_loops(w, vel, X, y, order, epochs, batch_size, n_classes, lr,
                       momentum, weight_decay, clip_norm):
    ns, d = X.shape
    if ns == 0:
        return
    c = n_classes
    nw = w.shape[0]
    grad = np.empty(nw)
    s = np.empty(c)
    for e in range(epochs):
        base = e * ns
        start = 0
        while start < ns:
            stop = min(start + batch_size, ns)
            nb = stop - start
            for t in range(nw):
                grad[t] = 0.0
            for pos in range(start, stop):
                i = order[base + pos]
                smax = -1e300
                for k in range(c):
                    acc = w[c * d + k]
                    for j in range(d):
                        acc += w[k * d + j] * X[i, j]
                    s[k] = acc
                    if acc > smax:
                        smax = acc
                ssum = 0.0
                for k in range(c):
                    s[k] = math.exp(s[k] - smax)
                    ssum += s[k]
                for k in range(c):
                    gk = s[k] / ssum
                    if k == y[i]:
                        gk -= 1.0
                    gk /= nb
                    for j in range(d):
                        grad[k * d + j] += gk * X[i, j]
                    grad[c * d + k] += gk
            nrm2 = 0.0
            for t in range(nw):
                vt = momentum * vel[t] + grad[t] + weight_decay * w[t]
                vel[t] = vt
                nrm2 += vt * vt
            nrm = math.sqrt(nrm2)
            if nrm > clip_norm:
                scale = clip_norm / nrm
                for t in range(nw):
                    vel[t] *= scale
            for t in range(nw):
                w[t] -= lr * vel[t]
            start = stop


# ---------------------------------------------------------------------------
# one-hidden-layer relu MLP SGD
#
# layout: W1 (h, d), b1 (h), W2 (c, h), b2 (c), concatenated flat


def mlp_sgd_numpy(w, vel, X, y, order, epochs, batch_size, n_classes, hidden,
                  lr, momentum, weight_decay, clip_norm):
    ns, d = X.shape
    if ns == 0:
        return
    c, h = n_classes, hidden
    o1 = h * d
    o2 = o1 + h
    o3 = o2 + c * h
    for e in range(epochs):
        base = e * ns
        start = 0
        while start < ns:
            stop = min(start + batch_size, ns)
            idx = order[base + start:base + stop]
            xb = X[idx]
            yb = y[idx]
            nb = stop - start
            W1 = w[:o1].reshape(h, d)
            b1 = w[o1:o2]
            W2 = w[o2:o3].reshape(c, h)
            b2 = w[o3:]
            z = xb @ W1.T + b1
            a = np.maximum(z, 0.0)
            scores = a @ W2.T + b2
            scores -= scores.max(axis=1, keepdims=True)
            p = np.exp(scores)
            p /= p.sum(axis=1, keepdims=True)
            p[np.arange(nb), yb] -= 1.0
            p /= nb
            dz = (p @ W2) * (z > 0.0)
            grad = np.concatenate((
                (dz.T @ xb).ravel(),
                dz.sum(axis=0),
                (p.T @ a).ravel(),
                p.sum(axis=0),
            ))
            vel *= momentum
            vel += grad
            vel += weight_decay * w
            nrm = math.sqrt(float(vel @ vel))
            if nrm > clip_norm:
                vel *= clip_norm / nrm
            w -= lr * vel
            start = stop


def _mlp_sgd_loops(w, vel, X, y, order, epochs, batch_size, n_classes, hidden,
                   lr, momentum, weight_decay, clip_norm):
    ns, d = X.shape
    if ns == 0:
        return
    c, h = n_classes, hidden
    o1 = h * d
    o2 = o1 + h
    o3 = o2 + c * h
    nw = w.shape[0]
    grad = np.empty(nw)
    z = np.empty(h)
    a = np.empty(h)
    s = np.empty(c)
    g = np.empty(c)
    for e in range(epochs):
        base = e * ns
        start = 0
        while start < ns:
            stop = min(start + batch_size, ns)
            nb = stop - start
            for t in range(nw):
                grad[t] = 0.0
            for pos in range(start, stop):
                i = order[base + pos]
                for k in range(h):
                    acc = w[o1 + k]
                    for j in range(d):
                        acc += w[k * d + j] * X[i, j]
                    z[k] = acc
                    a[k] = acc if acc > 0.0 else 0.0
                smax = -1e300
                for k in range(c):
                    acc = w[o3 + k]
                    for j in range(h):
                        acc += w[o2 + k * h + j] * a[j]
                    s[k] = acc
                    if acc > smax:
                        smax = acc
                ssum = 0.0
                for k in range(c):
                    s[k] = math.exp(s[k] - smax)
                    ssum += s[k]
                for k in range(c):
                    gk = s[k] / ssum
                    if k == y[i]:
                        gk -= 1.0
                    g[k] = gk / nb
                for k in range(c):
                    gk = g[k]
                    for j in range(h):
                        grad[o2 + k * h + j] += gk * a[j]
                    grad[o3 + k] += gk
                for j in range(h):
                    if z[j] > 0.0:
                        dzj = 0.0
                        for k in range(c):
                            dzj += g[k] * w[o2 + k * h + j]
                        for t in range(d):
                            grad[j * d + t] += dzj * X[i, t]
                        grad[o1 + j] += dzj
            nrm2 = 0.0
            for t in range(nw):
                vt = momentum * vel[t] + grad[t] + weight_decay * w[t]
                vel[t] = vt
                nrm2 += vt * vt
            nrm = math.sqrt(nrm2)
            if nrm > clip_norm:
                scale = clip_norm / nrm
                for t in range(nw):
                    vel[t] *= scale
            for t in range(nw):
                w[t] -= lr * vel[t]
            start = stop


# ---------------------------------------------------------------------------
# backend binding

if HAVE_NUMBA:
    pairwise_sq_dists_numba = njit(cache=True)(_pairwise_sq_dists_loops)
    softmax_sgd_numba = njit(cache=True)(_softmax_sgd_loops)
    mlp_sgd_numba = njit(cache=True)(_mlp_sgd_loops)
else:  # pragma: no cover
    pairwise_sq_dists_numba = None
    softmax_sgd_numba = None
    mlp_sgd_numba = None

if USE_NUMBA:
    pairwise_sq_dists = pairwise_sq_dists_numba
    softmax_sgd = softmax_sgd_numba
    mlp_sgd = mlp_sgd_numba
else:
    pairwise_sq_dists = pairwise_sq_dists_numpy
    softmax_sgd = softmax_sgd_numpy
    mlp_sgd = mlp_sgd_numpy
