"""End-to-end orchestration: raw recordings to trained models to timelines.

Ties the stages together the way the tool runs them: derive channels, cut
windows, extract both feature families, train each model under the grouped
evaluation protocol, and run inference over a recording to produce a
prediction timeline.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from .behaviour import PredictionTimeline
from .cwa import Recording, regularize
from .errors import ModelMissing, ShapeMismatch
from .evaluation import (
    GroupedDataset,
    SplitPlan,
    grid_search,
    report_from_predictions,
)
from .features import (
    FEATURE_NAMES,
    FeatureSubset,
    handcrafted_many,
    select_features,
)
from .forest import ForestModel, ForestParams, fit_rf, predict_rf
from .ridge import DEFAULT_ALPHAS, RidgeModel, fit_ridge, predict_ridge
from .rocket import KernelSet, transform
from .signals import (
    ACTIVITY,
    BEHAVIOURS,
    Ethogram,
    align_labels,
    derive_channels,
    segment,
    stack_windows,
)

DEFAULT_RF_GRID = tuple(
    {"n_trees": t, "max_depth": d, "min_samples_leaf": m}
    for t, d, m in itertools.product((100, 300, 500), (None, 10, 20), (1, 5, 10))
)


@dataclass(eq=False)
class WindowTable:
    """Per-window features and labels pooled over calves."""

    handcrafted: np.ndarray          # (n, 88)
    rocket: np.ndarray               # (n, 2K)
    behaviour: np.ndarray            # object
    activity: np.ndarray             # object
    groups: np.ndarray               # calf ids
    start_t: np.ndarray              # int64 ms

    def __len__(self) -> int:
        return len(self.groups)


def build_window_table(calves, kernelset: KernelSet | None,
                       purpose: str = "training") -> WindowTable:
    """Extract labeled windows and both feature families per calf.

    ``calves`` yields (calf_id, Recording, Ethogram) triples.  Recordings
    are regularized first (a no-op when already uniform).  With
    ``kernelset=None`` the convolution stage is skipped and the rocket block
    is empty (model-1-only workflows).
    """
    hand, rock, beh, act, groups, starts = [], [], [], [], [], []
    for calf_id, rec, eth in calves:
        ds = derive_channels(regularize(rec))
        ds.calf_id = calf_id
        labeled = align_labels(segment(ds, purpose), eth)
        if not labeled:
            continue
        windows = [lw.window for lw in labeled]
        hand.append(handcrafted_many(windows))
        if kernelset is not None:
            rock.append(transform(stack_windows(windows), kernelset))
        else:
            rock.append(np.empty((len(windows), 0)))
        beh += [lw.behaviour for lw in labeled]
        act += [lw.activity for lw in labeled]
        groups += [calf_id] * len(labeled)
        starts += [lw.window.start_t for lw in labeled]
    if not groups:
        k2 = 2 * len(kernelset) if kernelset is not None else 0
        return WindowTable(np.empty((0, len(FEATURE_NAMES))), np.empty((0, k2)),
                           np.empty(0, object), np.empty(0, object),
                           np.empty(0, object), np.empty(0, np.int64))
    return WindowTable(
        handcrafted=np.vstack(hand), rocket=np.vstack(rock),
        behaviour=np.array(beh, dtype=object), activity=np.array(act, dtype=object),
        groups=np.array(groups, dtype=object),
        start_t=np.array(starts, dtype=np.int64),
    )


def _chosen_fold_scores(best, trace):
    for entry in trace:
        if entry["params"] == best:
            return entry["fold_scores"]
    return []


def train_model1(table: WindowTable, plan: SplitPlan, seed: int,
                 rf_grid=DEFAULT_RF_GRID, k_features: int = 11):
    """Activity classifier: select 11 features, grid-search the forest,
    refit on all training calves, evaluate once on the held-out calves."""
    train_mask = np.isin(table.groups, plan.train_calves)
    subset = select_features(table.handcrafted[train_mask],
                             table.activity[train_mask],
                             k=k_features, seed=seed)
    X = table.handcrafted[:, subset.indices]
    data = GroupedDataset(X=X[train_mask], y=table.activity[train_mask],
                          groups=table.groups[train_mask], classes=ACTIVITY)
    best, trace = grid_search("forest", rf_grid, data, plan)
    model = fit_rf(data.X, data.y, ForestParams(**best), seed=seed,
                   classes=ACTIVITY)
    model.feature_subset = subset.names

    test_mask = np.isin(table.groups, plan.test_calves)
    pred, _ = predict_rf(model, X[test_mask])
    report = report_from_predictions(
        table.activity[test_mask], pred, ACTIVITY, best,
        _chosen_fold_scores(best, trace), trace)
    return model, subset, report


def train_model2(table: WindowTable, plan: SplitPlan, kernelset: KernelSet,
                 seed: int, alphas=DEFAULT_ALPHAS):
    """Behaviour classifier: grid-search the regularizer over the holdout
    folds, refit at the winner, evaluate on the held-out calves."""
    del seed  # the ridge fit is closed-form; kept for interface symmetry
    train_mask = np.isin(table.groups, plan.train_calves)
    data = GroupedDataset(X=table.rocket[train_mask],
                          y=table.behaviour[train_mask],
                          groups=table.groups[train_mask], classes=BEHAVIOURS)
    grid = [{"alpha": float(a)} for a in alphas]
    best, trace = grid_search("ridge", grid, data, plan)
    model = fit_ridge(data.X, data.y, best["alpha"], classes=BEHAVIOURS)
    model.alphas_grid = tuple(float(a) for a in alphas)
    model.kernelset = kernelset

    test_mask = np.isin(table.groups, plan.test_calves)
    pred, _ = predict_ridge(model, table.rocket[test_mask])
    report = report_from_predictions(
        table.behaviour[test_mask], pred, BEHAVIOURS, best,
        _chosen_fold_scores(best, trace), trace)
    return model, report


def subset_columns(model: ForestModel, X88: np.ndarray) -> np.ndarray:
    """Project the full 88-column matrix onto a model's frozen subset."""
    if model.feature_subset is None:
        if X88.shape[1] != model.n_features:
            raise ShapeMismatch("model has no feature subset and widths differ")
        return X88
    subset = FeatureSubset(names=model.feature_subset,
                           provenance={})
    return X88[:, subset.indices]


def predict_recording(rec: Recording, model1: ForestModel, model2: RidgeModel,
                      calf_id: str = "") -> PredictionTimeline:
    """Tile a recording into non-overlapping windows and label each with both
    models."""
    if model2.kernelset is None:
        raise ModelMissing("behaviour model has no embedded kernel set")
    ds = derive_channels(regularize(rec))
    ds.calf_id = calf_id
    windows = segment(ds, "inference")
    versions = {"model1": f"forest_seed{model1.seed}", "model2": f"ridge_alpha{model2.alpha:g}"}
    if not windows:
        return PredictionTimeline(calf_id=calf_id,
                                  start=np.empty(0, dtype=np.int64),
                                  activity=np.empty(0, dtype=object),
                                  behaviour=np.empty(0, dtype=object),
                                  model_versions=versions)
    stacked = stack_windows(windows)
    activity, _ = predict_rf(model1, subset_columns(model1, handcrafted_many(windows)))
    behaviour, _ = predict_ridge(model2, transform(stacked, model2.kernelset))
    return PredictionTimeline(
        calf_id=calf_id,
        start=np.array([w.start_t for w in windows], dtype=np.int64),
        activity=activity, behaviour=behaviour, model_versions=versions)
