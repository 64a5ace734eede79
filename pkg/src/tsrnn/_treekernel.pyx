# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled CART tree builder; mirrors ``tsrnn._treekernel_py`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t, int32_t
from libcpp.vector cimport vector
from libcpp.pair cimport pair
from libcpp.algorithm cimport sort

cnp.import_array()

ctypedef pair[double, int32_t] ValLab


cdef inline uint64_t splitmix_next(uint64_t* state) noexcept nogil:
    state[0] += <uint64_t>0x9E3779B97F4A7C15
    cdef uint64_t z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EB
    return z ^ (z >> 31)


cdef struct Frame:
    int64_t start
    int64_t end
    int32_t depth
    int64_t parent
    int32_t is_left


def build_tree(const double[:, ::1] X, const int32_t[::1] y, sample_idx,
               int n_classes, int max_depth, int min_samples_split,
               int max_features, uint64_t seed):
    """Grow one tree on ``X[sample_idx]``; returns ``(feature, threshold, left, right, counts)``."""
    cdef int64_t[::1] idx = np.array(sample_idx, dtype=np.int64)
    cdef int64_t n = idx.shape[0]
    cdef int d = X.shape[1]
    cdef int K = n_classes

    cdef vector[int32_t] feature
    cdef vector[double] threshold
    cdef vector[int64_t] left
    cdef vector[int64_t] right
    cdef vector[int32_t] counts
    cdef vector[Frame] stack
    cdef vector[ValLab] buf
    cdef vector[int64_t] cnt_l
    cdef vector[int64_t] cnt_r
    cdef vector[int64_t] cnt
    cdef vector[int32_t] feats
    cdef vector[int64_t] scratch

    cdef uint64_t state = seed
    cdef Frame fr, child
    cdef int64_t node, i, j, m, k, nl, nr, best_pos, n_left
    cdef int64_t sumsq_l, sumsq_r, ci, nonzero
    cdef int32_t f, visited, best_f, lab
    cdef double score, best_score, best_thr, v, vn
    cdef bint is_leaf

    cnt.resize(K)
    cnt_l.resize(K)
    cnt_r.resize(K)
    feats.resize(d)
    buf.resize(n)
    scratch.resize(n)

    fr.start = 0
    fr.end = n
    fr.depth = 0
    fr.parent = -1
    fr.is_left = 0
    stack.push_back(fr)

    with nogil:
        while stack.size() > 0:
            fr = stack.back()
            stack.pop_back()
            node = feature.size()
            feature.push_back(-1)
            threshold.push_back(0.0)
            left.push_back(-1)
            right.push_back(-1)
            if fr.parent >= 0:
                if fr.is_left:
                    left[fr.parent] = node
                else:
                    right[fr.parent] = node

            m = fr.end - fr.start
            for k in range(K):
                cnt[k] = 0
            for i in range(fr.start, fr.end):
                cnt[y[idx[i]]] += 1
            nonzero = 0
            sumsq_r = 0
            for k in range(K):
                counts.push_back(<int32_t>cnt[k])
                if cnt[k] > 0:
                    nonzero += 1
                sumsq_r += cnt[k] * cnt[k]

            is_leaf = nonzero <= 1 or fr.depth >= max_depth or m < min_samples_split
            best_f = -1
            best_score = -1.0
            best_thr = 0.0
            if not is_leaf:
                for j in range(d):
                    feats[j] = j
                visited = 0
                for j in range(d):
                    if visited >= max_features:
                        break
                    k = j + <int64_t>(splitmix_next(&state) % <uint64_t>(d - j))
                    f = feats[k]
                    feats[k] = feats[j]
                    feats[j] = f
                    for i in range(m):
                        buf[i].first = X[idx[fr.start + i], f]
                        buf[i].second = y[idx[fr.start + i]]
                    sort(buf.begin(), buf.begin() + m)
                    if buf[0].first == buf[m - 1].first:
                        continue
                    visited += 1
                    for k in range(K):
                        cnt_l[k] = 0
                        cnt_r[k] = cnt[k]
                    sumsq_l = 0
                    sumsq_r = 0
                    for k in range(K):
                        sumsq_r += cnt[k] * cnt[k]
                    for i in range(m - 1):
                        lab = buf[i].second
                        sumsq_l += 2 * cnt_l[lab] + 1
                        cnt_l[lab] += 1
                        sumsq_r -= 2 * cnt_r[lab] - 1
                        cnt_r[lab] -= 1
                        v = buf[i].first
                        vn = buf[i + 1].first
                        if v == vn:
                            continue
                        nl = i + 1
                        nr = m - nl
                        score = <double>sumsq_l / <double>nl + <double>sumsq_r / <double>nr
                        if score > best_score:
                            best_score = score
                            best_f = f
                            best_thr = v + (vn - v) / 2.0
                            if best_thr >= vn:
                                best_thr = v
                if best_f < 0:
                    is_leaf = True

            if is_leaf:
                continue

            feature[node] = best_f
            threshold[node] = best_thr
            # stable partition: left block keeps order, right block keeps order
            n_left = 0
            nr = 0
            for i in range(fr.start, fr.end):
                if X[idx[i], best_f] <= best_thr:
                    idx[fr.start + n_left] = idx[i]
                    n_left += 1
                else:
                    scratch[nr] = idx[i]
                    nr += 1
            for i in range(nr):
                idx[fr.start + n_left + i] = scratch[i]

            child.depth = fr.depth + 1
            child.parent = node
            child.start = fr.start + n_left
            child.end = fr.end
            child.is_left = 0
            stack.push_back(child)
            child.start = fr.start
            child.end = fr.start + n_left
            child.is_left = 1
            stack.push_back(child)

    cdef int64_t nn = feature.size()
    feat_a = np.empty(nn, dtype=np.int32)
    thr_a = np.empty(nn, dtype=np.float64)
    left_a = np.empty(nn, dtype=np.int64)
    right_a = np.empty(nn, dtype=np.int64)
    counts_a = np.empty((nn, K), dtype=np.int32)
    cdef int32_t[::1] fv = feat_a
    cdef double[::1] tv = thr_a
    cdef int64_t[::1] lv = left_a
    cdef int64_t[::1] rv = right_a
    cdef int32_t[:, ::1] cv = counts_a
    for i in range(nn):
        fv[i] = feature[i]
        tv[i] = threshold[i]
        lv[i] = left[i]
        rv[i] = right[i]
        for k in range(K):
            cv[i, k] = counts[i * K + k]
    return feat_a, thr_a, left_a, right_a, counts_a


def apply_tree(const double[:, ::1] X, const int32_t[::1] feature, const double[::1] threshold,
               const int64_t[::1] left, const int64_t[::1] right):
    """Leaf node index reached by each row of ``X``."""
    cdef int64_t n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] ov = out
    cdef int64_t i, node
    with nogil:
        for i in range(n):
            node = 0
            while left[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            ov[i] = node
    return out
