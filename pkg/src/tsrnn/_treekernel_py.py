"""Pure-Python CART tree builder, used when the compiled kernel is unavailable.

Produces the same trees as ``_treekernel.pyx`` for the same inputs and seed:
identical feature-visiting order (splitmix64 Fisher-Yates), identical integer
Gini bookkeeping, and identical tie-breaking.
"""

import numpy as np

_MASK = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)


def _best_split_on(values, labels, cnt):
    """Best threshold on one feature; ``None`` if the feature is constant here."""
    order = np.argsort(values, kind="stable")
    sv = values[order]
    if sv[0] == sv[-1]:
        return None
    m, K = len(sv), len(cnt)
    onehot = np.zeros((m, K), dtype=np.int64)
    onehot[np.arange(m), labels[order]] = 1
    cl = np.cumsum(onehot, axis=0)[:-1]
    cr = cnt[None, :] - cl
    nl = np.arange(1, m, dtype=np.int64)
    score = (cl * cl).sum(axis=1) / nl + (cr * cr).sum(axis=1) / (m - nl)
    score[sv[:-1] == sv[1:]] = -np.inf
    pos = int(np.argmax(score))
    v, vn = sv[pos], sv[pos + 1]
    thr = v + (vn - v) / 2.0
    if thr >= vn:
        thr = v
    return float(score[pos]), float(thr)


def build_tree(X, y, sample_idx, n_classes, max_depth, min_samples_split, max_features, seed):
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int32)
    idx = np.array(sample_idx, dtype=np.int64)
    d = X.shape[1]
    rng = SplitMix64(int(seed))
    feature, threshold, left, right, counts = [], [], [], [], []
    stack = [(0, len(idx), 0, -1, False)]
    while stack:
        start, end, depth, parent, is_left = stack.pop()
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        if parent >= 0:
            (left if is_left else right)[parent] = node
        block = idx[start:end]
        cnt = np.bincount(y[block], minlength=n_classes).astype(np.int64)
        counts.append(cnt.astype(np.int32))
        if (cnt > 0).sum() <= 1 or depth >= max_depth or len(block) < min_samples_split:
            continue

        feats = list(range(d))
        best = (-1.0, -1, 0.0)
        visited = 0
        for j in range(d):
            if visited >= max_features:
                break
            k = j + rng.next() % (d - j)
            feats[j], feats[k] = feats[k], feats[j]
            f = feats[j]
            found = _best_split_on(X[block, f], y[block], cnt)
            if found is None:
                continue
            visited += 1
            if found[0] > best[0]:
                best = (found[0], f, found[1])
        if best[1] < 0:
            continue

        _, f, thr = best
        feature[node] = f
        threshold[node] = thr
        go_left = X[block, f] <= thr
        n_left = int(go_left.sum())
        idx[start:end] = np.concatenate([block[go_left], block[~go_left]])
        stack.append((start + n_left, end, depth + 1, node, False))
        stack.append((start, start + n_left, depth + 1, node, True))

    return (np.array(feature, dtype=np.int32), np.array(threshold, dtype=np.float64),
            np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
            np.array(counts, dtype=np.int32).reshape(len(feature), n_classes))


def apply_tree(X, feature, threshold, left, right):
    X = np.asarray(X, dtype=np.float64)
    node = np.zeros(X.shape[0], dtype=np.int64)
    rows = np.arange(X.shape[0])
    active = left[node] >= 0
    while active.any():
        a = rows[active]
        nd = node[a]
        go_left = X[a, feature[nd]] <= threshold[nd]
        node[a] = np.where(go_left, left[nd], right[nd])
        active = left[node] >= 0
    return node
