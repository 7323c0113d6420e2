"""Hand-crafted window features and the model-1 feature subset.

The catalog is 8 channels x 11 statistics = 88 features.  Per channel:
mean, median, population standard deviation, min, max, interquartile range
(linear-interpolation quantiles), skewness (m3 / m2^1.5), excess kurtosis
(m4 / m2^2 - 3), root-mean-square, zero-crossing rate of the mean-removed
signal (crossings / 74), and mean energy (sum of squares / 75).  Skewness and
kurtosis are defined as 0 when the second moment is below 1e-12, so every
value is finite on every valid window.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateLabels
from .signals import CHANNEL_NAMES, Window, stack_windows

STATISTIC_NAMES = (
    "mean", "median", "std", "min", "max", "iqr",
    "skew", "kurt", "rms", "zcr", "energy",
)

FEATURE_NAMES = tuple(
    f"{ch}_{stat}" for ch in CHANNEL_NAMES for stat in STATISTIC_NAMES
)

N_FEATURES = len(FEATURE_NAMES)  # 88

_MOMENT_GUARD = 1e-12


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray                  # (88,)
    names: tuple[str, ...] = FEATURE_NAMES

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])


@dataclass(frozen=True)
class FeatureSubset:
    """An ordered pick from the 88-name catalog, with its selection scores."""

    names: tuple[str, ...]
    provenance: dict[str, float]

    def __post_init__(self):
        unknown = set(self.names) - set(FEATURE_NAMES)
        if unknown:
            raise ValueError(f"names outside the catalog: {sorted(unknown)}")
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate feature names")

    @property
    def indices(self) -> np.ndarray:
        return np.array([FEATURE_NAMES.index(n) for n in self.names], dtype=np.int64)


def feature_matrix(values: np.ndarray) -> np.ndarray:
    """Compute the 88 features for a batch of windows, (n, 8, 75) -> (n, 88)."""
    v = np.asarray(values, dtype=np.float64)
    n, c, m = v.shape
    mean = v.mean(axis=2)
    centered = v - mean[:, :, None]
    m2 = (centered ** 2).mean(axis=2)
    m3 = (centered ** 3).mean(axis=2)
    m4 = (centered ** 4).mean(axis=2)
    guarded = m2 >= _MOMENT_GUARD
    skew = np.where(guarded, m3 / np.where(guarded, m2, 1.0) ** 1.5, 0.0)
    kurt = np.where(guarded, m4 / np.where(guarded, m2, 1.0) ** 2 - 3.0, 0.0)
    energy = (v ** 2).mean(axis=2)
    q25, q75 = np.percentile(v, [25, 75], axis=2)
    crossings = (centered[:, :, 1:] * centered[:, :, :-1] < 0).sum(axis=2)

    stats = np.stack([
        mean,
        np.median(v, axis=2),
        np.sqrt(m2),
        v.min(axis=2),
        v.max(axis=2),
        q75 - q25,
        skew,
        kurt,
        np.sqrt(energy),
        crossings / (m - 1),
        energy,
    ], axis=2)                       # (n, 8, 11)
    return stats.reshape(n, c * len(STATISTIC_NAMES))


def handcrafted(w: Window) -> FeatureVector:
    """The 88 hand-crafted features of one window."""
    return FeatureVector(values=feature_matrix(w.values[None, :, :])[0])


def handcrafted_many(windows) -> np.ndarray:
    """Feature matrix for a list of windows, rows in window order."""
    return feature_matrix(stack_windows(windows))


def select_features(X: np.ndarray, y, k: int = 11, seed: int = 0,
                    n_trees: int = 300) -> FeatureSubset:
    """Rank the 88 features by forest importance and keep the top ``k``.

    Trains a random forest on the full catalog and returns the ``k`` features
    with the highest mean impurity decrease; ties break by feature name.
    Deterministic for a given seed.
    """
    from .forest import ForestParams, fit_rf

    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] != N_FEATURES:
        raise ValueError(f"expected {N_FEATURES} columns, got {X.shape[1]}")
    if len(set(y)) < 2:
        raise DegenerateLabels("feature selection needs both classes")
    model = fit_rf(X, y, ForestParams(n_trees=n_trees), seed=seed)
    scores = model.feature_importances
    order = sorted(range(N_FEATURES), key=lambda i: (-scores[i], FEATURE_NAMES[i]))
    picked = order[:k]
    return FeatureSubset(
        names=tuple(FEATURE_NAMES[i] for i in picked),
        provenance={FEATURE_NAMES[i]: float(scores[i]) for i in picked},
    )
