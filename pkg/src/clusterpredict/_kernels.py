"""Compiled inner loops shared by the clustering and pipeline code."""

import numpy as np
from numba import njit

_JIT = dict(cache=True, nogil=True)


@njit(**_JIT)
def sqdist_matrix(X, C):
    n, d = X.shape
    k = C.shape[0]
    out = np.empty((n, k))
    for i in range(n):
        for j in range(k):
            s = 0.0
            for t in range(d):
                diff = X[i, t] - C[j, t]
                s += diff * diff
            out[i, j] = s
    return out


@njit(**_JIT)
def nearest_centroid(X, C):
    """Index of the closest row of C for each row of X; lowest index wins ties."""
    n, d = X.shape
    k = C.shape[0]
    labels = np.empty(n, dtype=np.int64)
    best = np.empty(n)
    for i in range(n):
        bj = 0
        bd = np.inf
        for j in range(k):
            s = 0.0
            for t in range(d):
                diff = X[i, t] - C[j, t]
                s += diff * diff
            if s < bd:
                bd = s
                bj = j
        labels[i] = bj
        best[i] = bd
    return labels, best


@njit(**_JIT)
def cluster_sums(X, labels, k):
    n, d = X.shape
    sums = np.zeros((k, d))
    counts = np.zeros(k, dtype=np.int64)
    for i in range(n):
        c = labels[i]
        counts[c] += 1
        for t in range(d):
            sums[c, t] += X[i, t]
    return sums, counts


@njit(**_JIT)
def silhouette_samples(X, labels, k):
    n, d = X.shape
    counts = np.zeros(k, dtype=np.int64)
    for i in range(n):
        counts[labels[i]] += 1
    s = np.zeros(n)
    sums = np.empty(k)
    for i in range(n):
        own = labels[i]
        if counts[own] < 2:
            continue
        sums[:] = 0.0
        for j in range(n):
            acc = 0.0
            for t in range(d):
                diff = X[i, t] - X[j, t]
                acc += diff * diff
            sums[labels[j]] += np.sqrt(acc)
        a = sums[own] / (counts[own] - 1)
        b = np.inf
        for c in range(k):
            if c != own and counts[c] > 0:
                v = sums[c] / counts[c]
                if v < b:
                    b = v
        m = max(a, b)
        if m > 0.0:
            s[i] = (b - a) / m
    return s


@njit(**_JIT)
def plan_row_argmax(C, g):
    """argmax_j of the plan row, i.e. of g_j - C_ij; lowest index wins ties."""
    m, k = C.shape
    out = np.empty(m, dtype=np.int64)
    for i in range(m):
        bj = 0
        bv = -np.inf
        for j in range(k):
            v = g[j] - C[i, j]
            if v > bv:
                bv = v
                bj = j
        out[i] = bj
    return out
