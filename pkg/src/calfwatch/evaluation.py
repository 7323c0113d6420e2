"""Calf-grouped evaluation: 20:80 split, repeated holdout, grid search, metrics.

The split draws 20% of calves (rounded to nearest, at least one) as a frozen
test set, then ten independent validation draws of 20% of the remaining
training calves.  With 30 calves that is 6 test calves and folds of 5
validation / 19 training calves.  No calf ever appears on both sides of any
train/evaluate boundary; the grid search scores each candidate by the mean
validation balanced accuracy over the ten folds and breaks ties toward the
earlier grid entry.
"""

from dataclasses import dataclass, field

import numpy as np

from . import ridge as ridge_mod
from .errors import EmptyClassRow, TooFewGroups, UnknownLabel
from .forest import ForestParams, fit_rf, predict_rf
from .jsonutil import dumps as json_dumps


@dataclass(frozen=True)
class SplitPlan:
    test_calves: tuple[str, ...]
    train_calves: tuple[str, ...]
    folds: tuple[tuple[tuple[str, ...], tuple[str, ...]], ...]  # (train, validation)
    seed: int


@dataclass(eq=False)
class GroupedDataset:
    """Feature rows tagged with the calf each row came from."""

    X: np.ndarray
    y: np.ndarray
    groups: np.ndarray
    classes: tuple[str, ...]

    def subset(self, calves) -> "GroupedDataset":
        mask = np.isin(self.groups, list(calves))
        return GroupedDataset(X=self.X[mask], y=self.y[mask],
                              groups=self.groups[mask], classes=self.classes)


def _nearest_fifth(n: int) -> int:
    return max(1, (2 * n + 5) // 10)


def make_split(calf_ids, seed: int, n_folds: int = 10) -> SplitPlan:
    """Sample the grouped test split and the repeated validation folds."""
    ids = sorted(set(calf_ids))
    if len(ids) < 10:
        raise TooFewGroups(f"{len(ids)} calves, need at least 10")
    rng = np.random.default_rng(seed)
    ids_arr = np.array(ids, dtype=object)
    test = sorted(rng.choice(ids_arr, size=_nearest_fifth(len(ids)), replace=False).tolist())
    train = [c for c in ids if c not in set(test)]
    n_val = _nearest_fifth(len(train))
    train_arr = np.array(train, dtype=object)
    folds = []
    for _ in range(n_folds):
        val = sorted(rng.choice(train_arr, size=n_val, replace=False).tolist())
        fold_train = tuple(c for c in train if c not in set(val))
        folds.append((fold_train, tuple(val)))
    return SplitPlan(test_calves=tuple(test), train_calves=tuple(train),
                     folds=tuple(folds), seed=int(seed))


def confusion(y_true, y_pred, classes) -> np.ndarray:
    """Counts with rows = true class, columns = predicted, in ``classes`` order."""
    classes = tuple(classes)
    lookup = {c: i for i, c in enumerate(classes)}
    y_true = np.asarray(y_true, dtype=object)
    y_pred = np.asarray(y_pred, dtype=object)
    if len(y_true) != len(y_pred):
        raise UnknownLabel(f"{len(y_true)} true vs {len(y_pred)} predicted labels")
    cm = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(y_true.tolist(), y_pred.tolist()):
        if t not in lookup or p not in lookup:
            raise UnknownLabel(f"label {t if t not in lookup else p!r} not in {classes}")
        cm[lookup[t], lookup[p]] += 1
    return cm


def metrics(cm: np.ndarray) -> dict:
    """Per-class sensitivity/specificity/precision and balanced accuracy.

    Precision over an empty predicted column is reported as 0.0 with a flag.
    """
    cm = np.asarray(cm, dtype=np.int64)
    row_sums = cm.sum(axis=1)
    if (row_sums == 0).any():
        raise EmptyClassRow(f"classes with zero support at rows "
                            f"{np.nonzero(row_sums == 0)[0].tolist()}")
    col_sums = cm.sum(axis=0)
    total = cm.sum()
    tp = np.diag(cm).astype(np.float64)
    fn = row_sums - tp
    fp = col_sums - tp
    tn = total - tp - fn - fp
    sensitivity = tp / (tp + fn)
    specificity = tn / (tn + fp)
    empty_cols = col_sums == 0
    precision = np.where(empty_cols, 0.0, tp / np.where(empty_cols, 1, col_sums))
    return {
        "sensitivity": sensitivity,
        "specificity": specificity,
        "precision": precision,
        "precision_flags": empty_cols,
        "balanced_accuracy": float(sensitivity.mean()),
    }


def balanced_accuracy(y_true, y_pred, classes) -> float:
    """Mean recall over the classes present in ``y_true`` (fold scoring)."""
    cm = confusion(y_true, y_pred, classes)
    support = cm.sum(axis=1)
    present = support > 0
    recalls = np.diag(cm)[present] / support[present]
    return float(recalls.mean())


@dataclass(eq=False)
class EvalReport:
    classes: tuple[str, ...]
    confusion: np.ndarray
    balanced_accuracy: float
    sensitivity: np.ndarray
    specificity: np.ndarray
    precision: np.ndarray
    precision_flags: np.ndarray
    chosen_params: dict
    fold_scores: list[float]
    grid_trace: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        per_class = {
            cls: {
                "sensitivity": float(self.sensitivity[i]),
                "specificity": float(self.specificity[i]),
                "precision": float(self.precision[i]),
                "precision_undefined": bool(self.precision_flags[i]),
            }
            for i, cls in enumerate(self.classes)
        }
        return {
            "classes": list(self.classes),
            "confusion": self.confusion.tolist(),
            "balanced_accuracy": float(self.balanced_accuracy),
            "per_class": per_class,
            "chosen_params": self.chosen_params,
            "fold_scores": [float(s) for s in self.fold_scores],
            "grid_trace": self.grid_trace,
        }

    def to_json(self) -> str:
        return json_dumps(self.to_dict(), indent=2) + "\n"


def report_from_predictions(y_true, y_pred, classes, chosen_params,
                            fold_scores, grid_trace=()) -> EvalReport:
    cm = confusion(y_true, y_pred, classes)
    scores = metrics(cm)
    return EvalReport(
        classes=tuple(classes), confusion=cm,
        balanced_accuracy=scores["balanced_accuracy"],
        sensitivity=scores["sensitivity"], specificity=scores["specificity"],
        precision=scores["precision"], precision_flags=scores["precision_flags"],
        chosen_params=dict(chosen_params), fold_scores=list(fold_scores),
        grid_trace=list(grid_trace),
    )


def _forest_fold_scores(grid, data, plan):
    """Score the forest grid: one max-size fit per (depth, leaf) combo per
    fold, smaller tree counts scored as prefixes of the same forest."""
    scores = np.zeros((len(grid), len(plan.folds)))
    combos: dict[tuple, list[int]] = {}
    for gi, g in enumerate(grid):
        combos.setdefault((g.get("max_depth"), g.get("min_samples_leaf", 1)), []).append(gi)
    for fi, (fold_train, fold_val) in enumerate(plan.folds):
        dtrain = data.subset(fold_train)
        dval = data.subset(fold_val)
        for (max_depth, min_leaf), gis in combos.items():
            biggest = max(grid[gi]["n_trees"] for gi in gis)
            full = fit_rf(dtrain.X, dtrain.y,
                          ForestParams(n_trees=biggest, max_depth=max_depth,
                                       min_samples_leaf=min_leaf),
                          seed=plan.seed, classes=data.classes)
            for gi in gis:
                sub = full if grid[gi]["n_trees"] == biggest \
                    else full.truncated(grid[gi]["n_trees"])
                pred, _ = predict_rf(sub, dval.X)
                scores[gi, fi] = balanced_accuracy(dval.y, pred, data.classes)
    return scores


def _ridge_fold_scores(grid, data, plan):
    """Score the alpha grid: one Gram factorization per fold serves every
    alpha."""
    alphas = [g["alpha"] for g in grid]
    scores = np.zeros((len(grid), len(plan.folds)))
    for fi, (fold_train, fold_val) in enumerate(plan.folds):
        dtrain = data.subset(fold_train)
        dval = data.subset(fold_val)
        models = ridge_mod.fit_ridge_grid(dtrain.X, dtrain.y, alphas,
                                          classes=data.classes)
        for gi, model in enumerate(models):
            pred, _ = ridge_mod.predict_ridge(model, dval.X)
            scores[gi, fi] = balanced_accuracy(dval.y, pred, data.classes)
    return scores


def grid_search(model_kind: str, grid, data: GroupedDataset, plan: SplitPlan):
    """Pick the grid point with the best mean validation balanced accuracy.

    Returns (best_params, trace); on ties the earlier grid entry wins.  A
    failure in any fold propagates: folds are never silently skipped.
    """
    grid = [dict(g) for g in grid]
    if not grid:
        raise ValueError("empty grid")
    if model_kind == "forest":
        scores = _forest_fold_scores(grid, data, plan)
    elif model_kind == "ridge":
        scores = _ridge_fold_scores(grid, data, plan)
    else:
        raise ValueError(f"unknown model kind {model_kind!r}")
    means = scores.mean(axis=1)
    best = int(np.argmax(means))
    trace = [
        {"params": grid[gi], "mean_score": float(means[gi]),
         "fold_scores": [float(s) for s in scores[gi]]}
        for gi in range(len(grid))
    ]
    return grid[best], trace
