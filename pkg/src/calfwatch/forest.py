"""Random forest classifier grown from scratch with Gini-impurity CART.

Each tree draws a bootstrap sample (multiplicities kept as weights), then
grows depth-first: at every node ``mtry`` candidate features are drawn
without replacement, every boundary between distinct sorted values is scored
by weighted Gini decrease, and the best split partitions the node.  Growth
stops on pure nodes, ``max_depth``, or when no split leaves
``min_samples_leaf`` bootstrap weight on both sides.

For speed each feature's sort order is computed once per fit; node
partitions maintain per-feature sorted index slices (stable partition), so a
tree costs O(depth * k * m) instead of re-sorting at every node.  Trees only
ever see rows with positive bootstrap weight: out-of-bootstrap rows are
excluded from the index slices before growth starts.

All randomness comes from splitmix64 streams: tree ``t`` of a forest seeded
``s`` starts from ``mix64(s * GOLDEN + t + 1)`` and draws, in order, the n
bootstrap row indices and then the mtry feature picks per node in DFS
(left-first) order.  Same seed, same forest, bit for bit.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from .errors import BadConfig, DegenerateLabels, ShapeMismatch

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 300
    max_depth: int | None = None
    min_samples_leaf: int = 1
    mtry: int | None = None      # default floor(sqrt(n_features)) at fit time

    def __post_init__(self):
        if self.n_trees < 1:
            raise BadConfig(f"n_trees {self.n_trees} < 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise BadConfig(f"max_depth {self.max_depth} < 1")
        if self.min_samples_leaf < 1:
            raise BadConfig(f"min_samples_leaf {self.min_samples_leaf} < 1")
        if self.mtry is not None and self.mtry < 1:
            raise BadConfig(f"mtry {self.mtry} < 1")


@dataclass(eq=False)
class ForestModel:
    """Trained forest: flat node arrays with per-tree offsets.

    ``node_feature`` is -1 at leaves; child indices are tree-local.
    ``node_leaf`` maps leaves into ``leaf_counts`` (bootstrap-weighted class
    counts, all positive); ``node_vote`` caches each leaf's majority class.
    """

    classes: tuple[str, ...]
    params: ForestParams
    seed: int
    n_features: int
    tree_offsets: np.ndarray      # int64 (n_trees + 1,)
    node_feature: np.ndarray      # int32
    node_threshold: np.ndarray    # float64
    node_left: np.ndarray         # int32, tree-local
    node_right: np.ndarray        # int32, tree-local
    node_leaf: np.ndarray         # int32 into leaf_counts, -1 for internal
    node_vote: np.ndarray         # int16 class index, -1 for internal
    leaf_counts: np.ndarray       # int64 (n_leaves_total, n_classes)
    tree_importances: np.ndarray  # float64 (n_trees, n_features)
    feature_subset: tuple[str, ...] | None = None

    @property
    def n_trees(self) -> int:
        return len(self.tree_offsets) - 1

    @property
    def feature_importances(self) -> np.ndarray:
        """Mean impurity decrease per feature across trees."""
        return self.tree_importances.mean(axis=0)

    def truncated(self, n_trees: int) -> "ForestModel":
        """The forest of the first ``n_trees`` trees (identical to fitting
        with the same seed and a smaller ``n_trees``)."""
        if not 1 <= n_trees <= self.n_trees:
            raise BadConfig(f"cannot truncate {self.n_trees} trees to {n_trees}")
        end = int(self.tree_offsets[n_trees])
        leaf_end = int(self.node_leaf[:end].max()) + 1
        return replace(
            self,
            params=replace(self.params, n_trees=n_trees),
            tree_offsets=self.tree_offsets[:n_trees + 1],
            node_feature=self.node_feature[:end],
            node_threshold=self.node_threshold[:end],
            node_left=self.node_left[:end],
            node_right=self.node_right[:end],
            node_leaf=self.node_leaf[:end],
            node_vote=self.node_vote[:end],
            leaf_counts=self.leaf_counts[:leaf_end],
            tree_importances=self.tree_importances[:n_trees],
        )


@njit(cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def _next_u64(state):
    state += _GOLDEN
    return _mix64(state), state


def _tree_state(seed: int, tree_index: int) -> np.uint64:
    s = (int(seed) * 0x9E3779B97F4A7C15 + int(tree_index) + 1) & 0xFFFFFFFFFFFFFFFF
    return np.uint64(s)


@njit(cache=True)
def _bootstrap_fill(state, counts):
    n = counts.shape[0]
    for _ in range(n):
        r, state = _next_u64(state)
        counts[r % np.uint64(n)] += 1
    return state


def tree_bootstrap_counts(seed: int, tree_index: int, n: int) -> np.ndarray:
    """Bootstrap multiplicities tree ``tree_index`` uses, for instrumentation."""
    counts = np.zeros(n, dtype=np.int64)
    _bootstrap_fill(_tree_state(seed, tree_index), counts)
    return counts


@njit(cache=True, nogil=True)
def _grow_tree(X, y, n_classes, global_order, state0, mtry, max_depth, min_leaf):
    n, k = X.shape
    counts_boot = np.zeros(n, dtype=np.int64)
    state = _bootstrap_fill(state0, counts_boot)

    m = 0
    for i in range(n):
        if counts_boot[i] > 0:
            m += 1
    sidx = np.empty((k, m), dtype=np.int32)
    for f in range(k):
        pos = 0
        for i in range(n):
            r = global_order[f, i]
            if counts_boot[r] > 0:
                sidx[f, pos] = r
                pos += 1

    max_nodes = 2 * m + 1
    node_feature = np.full(max_nodes, -1, dtype=np.int32)
    node_threshold = np.zeros(max_nodes, dtype=np.float64)
    node_left = np.full(max_nodes, -1, dtype=np.int32)
    node_right = np.full(max_nodes, -1, dtype=np.int32)
    node_leaf = np.full(max_nodes, -1, dtype=np.int32)
    leaf_counts = np.zeros((m + 1, n_classes), dtype=np.int64)
    importances = np.zeros(k, dtype=np.float64)

    # DFS stack: start, end, depth, parent slot, is-left flag
    stack = np.empty((2 * m + 2, 5), dtype=np.int64)
    top = 0
    stack[top, 0] = 0
    stack[top, 1] = m
    stack[top, 2] = 0
    stack[top, 3] = -1
    stack[top, 4] = 0
    top += 1

    perm = np.arange(k, dtype=np.int64)
    cls = np.zeros(n_classes, dtype=np.int64)
    lc = np.zeros(n_classes, dtype=np.int64)
    mark = np.zeros(n, dtype=np.uint8)
    buf = np.empty(m, dtype=np.int32)

    n_nodes = 0
    n_leaves = 0

    while top > 0:
        top -= 1
        s = stack[top, 0]
        e = stack[top, 1]
        depth = stack[top, 2]
        parent = stack[top, 3]
        is_left = stack[top, 4]

        slot = n_nodes
        n_nodes += 1
        if parent >= 0:
            if is_left == 1:
                node_left[parent] = slot
            else:
                node_right[parent] = slot

        total_w = np.int64(0)
        for c in range(n_classes):
            cls[c] = 0
        for i in range(s, e):
            r = sidx[0, i]
            cls[y[r]] += counts_boot[r]
            total_w += counts_boot[r]

        biggest = np.int64(0)
        for c in range(n_classes):
            if cls[c] > biggest:
                biggest = cls[c]
        stop = biggest == total_w or e - s < 2 or total_w < 2 * min_leaf
        if max_depth > 0 and depth >= max_depth:
            stop = True

        best_f = -1
        best_thr = 0.0
        best_score = -1.0
        if not stop:
            parent_score = 0.0
            for c in range(n_classes):
                parent_score += cls[c] * cls[c]
            parent_score /= total_w

            for t in range(mtry):
                r64, state = _next_u64(state)
                j = t + np.int64(r64 % np.uint64(k - t))
                tmp = perm[t]
                perm[t] = perm[j]
                perm[j] = tmp
                f = perm[t]

                for c in range(n_classes):
                    lc[c] = 0
                wl = np.int64(0)
                for i in range(s, e - 1):
                    r = sidx[f, i]
                    wl += counts_boot[r]
                    lc[y[r]] += counts_boot[r]
                    rn = sidx[f, i + 1]
                    v0 = X[r, f]
                    v1 = X[rn, f]
                    if v1 > v0:
                        wr = total_w - wl
                        if wl >= min_leaf and wr >= min_leaf:
                            sl = 0.0
                            sr = 0.0
                            for c in range(n_classes):
                                sl += lc[c] * lc[c]
                                sr += (cls[c] - lc[c]) * (cls[c] - lc[c])
                            score = sl / wl + sr / wr
                            if score > best_score:
                                best_score = score
                                best_f = f
                                thr = 0.5 * (v0 + v1)
                                if not (v0 <= thr < v1):
                                    thr = v0
                                best_thr = thr

            if best_f >= 0:
                importances[best_f] += best_score - parent_score

        if best_f < 0:
            node_leaf[slot] = n_leaves
            for c in range(n_classes):
                leaf_counts[n_leaves, c] = cls[c]
            n_leaves += 1
            continue

        node_feature[slot] = best_f
        node_threshold[slot] = best_thr
        left_rows = np.int64(0)
        for i in range(s, e):
            r = sidx[0, i]
            if X[r, best_f] <= best_thr:
                mark[r] = 1
                left_rows += 1
            else:
                mark[r] = 0
        for f in range(k):
            li = s
            ri = s + left_rows
            for i in range(s, e):
                r = sidx[f, i]
                if mark[r] == 1:
                    buf[li] = r
                    li += 1
                else:
                    buf[ri] = r
                    ri += 1
            for i in range(s, e):
                sidx[f, i] = buf[i]

        # push right then left so the left child pops first
        stack[top, 0] = s + left_rows
        stack[top, 1] = e
        stack[top, 2] = depth + 1
        stack[top, 3] = slot
        stack[top, 4] = 0
        top += 1
        stack[top, 0] = s
        stack[top, 1] = s + left_rows
        stack[top, 2] = depth + 1
        stack[top, 3] = slot
        stack[top, 4] = 1
        top += 1

    return (node_feature[:n_nodes].copy(), node_threshold[:n_nodes].copy(),
            node_left[:n_nodes].copy(), node_right[:n_nodes].copy(),
            node_leaf[:n_nodes].copy(), leaf_counts[:n_leaves].copy(),
            importances)


@njit(cache=True, nogil=True)
def _forest_votes(X, tree_offsets, node_feature, node_threshold, node_left,
                  node_right, node_vote, n_classes, votes):
    n = X.shape[0]
    n_trees = tree_offsets.shape[0] - 1
    for i in range(n):
        for t in range(n_trees):
            base = tree_offsets[t]
            node = np.int64(0)
            while node_feature[base + node] >= 0:
                f = node_feature[base + node]
                if X[i, f] <= node_threshold[base + node]:
                    node = node_left[base + node]
                else:
                    node = node_right[base + node]
            votes[i, node_vote[base + node]] += 1
    return votes


def _resolve_classes(y, classes):
    y = np.asarray(y, dtype=object)
    if len(y) == 0:
        raise DegenerateLabels("empty label vector")
    if classes is None:
        classes = tuple(sorted(set(y.tolist())))
    else:
        classes = tuple(classes)
        unknown = set(y.tolist()) - set(classes)
        if unknown:
            raise DegenerateLabels(f"labels outside classes: {sorted(unknown)}")
    lookup = {c: i for i, c in enumerate(classes)}
    return classes, np.array([lookup[v] for v in y.tolist()], dtype=np.int64)


def fit_rf(X, y, params: ForestParams = ForestParams(), seed: int = 0,
           classes=None, n_jobs: int | None = None) -> ForestModel:
    """Grow a forest; deterministic for a given seed regardless of threading."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeMismatch(f"X must be 2-D, got shape {X.shape}")
    classes, y_idx = _resolve_classes(y, classes)
    if len(y_idx) != len(X):
        raise ShapeMismatch(f"{len(X)} rows vs {len(y_idx)} labels")
    n, k = X.shape
    mtry = params.mtry if params.mtry is not None else max(1, int(np.sqrt(k)))
    mtry = min(mtry, k)
    params = replace(params, mtry=mtry)
    max_depth = params.max_depth if params.max_depth is not None else 0

    order = np.empty((k, n), dtype=np.int32)
    for f in range(k):
        order[f] = np.argsort(X[:, f], kind="stable")

    def build(t):
        return _grow_tree(X, y_idx, len(classes), order,
                          _tree_state(seed, t), mtry, max_depth,
                          params.min_samples_leaf)

    workers = n_jobs or min(params.n_trees, os.cpu_count() or 1)
    if workers > 1 and params.n_trees > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(build, range(params.n_trees)))
    else:
        results = [build(t) for t in range(params.n_trees)]

    tree_offsets = np.zeros(params.n_trees + 1, dtype=np.int64)
    tree_importances = np.zeros((params.n_trees, k), dtype=np.float64)
    feats, thrs, lefts, rights, leaves, counts = [], [], [], [], [], []
    leaf_base = 0
    for t, (nf, nt, nl, nr, nleaf, lcounts, imp) in enumerate(results):
        tree_offsets[t + 1] = tree_offsets[t] + len(nf)
        nleaf = nleaf.copy()
        nleaf[nleaf >= 0] += leaf_base
        leaf_base += len(lcounts)
        feats.append(nf)
        thrs.append(nt)
        lefts.append(nl)
        rights.append(nr)
        leaves.append(nleaf)
        counts.append(lcounts)
        tree_importances[t] = imp / n  # bootstrap weight at the root is n

    leaf_counts = np.vstack(counts)
    node_leaf = np.concatenate(leaves)
    node_vote = np.full(len(node_leaf), -1, dtype=np.int16)
    is_leaf = node_leaf >= 0
    node_vote[is_leaf] = leaf_counts[node_leaf[is_leaf]].argmax(axis=1).astype(np.int16)

    return ForestModel(
        classes=classes, params=params, seed=int(seed), n_features=k,
        tree_offsets=tree_offsets,
        node_feature=np.concatenate(feats),
        node_threshold=np.concatenate(thrs),
        node_left=np.concatenate(lefts),
        node_right=np.concatenate(rights),
        node_leaf=node_leaf,
        node_vote=node_vote,
        leaf_counts=leaf_counts,
        tree_importances=tree_importances,
    )


def predict_rf(m: ForestModel, X):
    """Majority vote and per-class vote fractions; ties to the earlier class."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != m.n_features:
        raise ShapeMismatch(
            f"X has {X.shape[1] if X.ndim == 2 else '?'} columns, "
            f"model expects {m.n_features}")
    votes = np.zeros((len(X), len(m.classes)), dtype=np.int64)
    if len(X):
        _forest_votes(X, m.tree_offsets, m.node_feature, m.node_threshold,
                      m.node_left, m.node_right, m.node_vote,
                      len(m.classes), votes)
    fractions = votes / m.n_trees
    labels = np.array(m.classes, dtype=object)[fractions.argmax(axis=1)]
    return labels, fractions
