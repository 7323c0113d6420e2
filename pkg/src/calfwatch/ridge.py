"""Ridge classification with leave-one-out selection of the regularizer.

Targets are one-vs-rest in {-1, +1}.  Columns are standardized with training
statistics (zero-variance columns dropped and recorded), the design is
centered so the intercept is unpenalized, and for every candidate alpha the
leave-one-out residuals come in closed form from one singular value
decomposition:

    e_i = (y_i - yhat_i) / (1 - h_ii),
    h_ii = sum_k u_ik^2 s_k^2 / (s_k^2 + alpha) + 1/n.

The alpha minimizing the total squared LOO error summed over class columns
wins; ties go to the earlier grid entry.  Prediction is the argmax of the
decision values, ties to the earlier class.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateLabels, ShapeMismatch, SingularInput

DEFAULT_ALPHAS = tuple(np.logspace(-3.0, 3.0, 10))

_SD_GUARD = 1e-12


@dataclass(eq=False)
class RidgeModel:
    classes: tuple[str, ...]
    n_features_in: int
    kept: np.ndarray              # indices of retained columns
    mu: np.ndarray                # per retained column
    sigma: np.ndarray
    W: np.ndarray                 # (n_classes, n_kept)
    b: np.ndarray                 # (n_classes,)
    alpha: float
    alphas_grid: tuple[float, ...]
    loo_errors: np.ndarray | None = None   # per grid alpha, when LOO-fit
    kernelset: object = None               # embedded KernelSet for pipeline models

    @property
    def dropped(self) -> np.ndarray:
        mask = np.ones(self.n_features_in, dtype=bool)
        mask[self.kept] = False
        return np.nonzero(mask)[0]


def _prepare(X, y, classes):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] < 1:
        raise ShapeMismatch(f"X must be 2-D with >= 1 column, got {X.shape}")
    if not np.isfinite(X).all():
        raise SingularInput("non-finite values in X")
    y = np.asarray(y)
    if len(y) != len(X):
        raise ShapeMismatch(f"{len(X)} rows vs {len(y)} labels")
    if classes is None:
        classes = tuple(sorted(set(y.tolist())))
    else:
        classes = tuple(classes)
        unknown = set(y.tolist()) - set(classes)
        if unknown:
            raise DegenerateLabels(f"labels outside classes: {sorted(unknown)}")
    if len(classes) < 2:
        raise DegenerateLabels(f"need >= 2 classes, got {classes}")
    if len(X) < len(classes) + 1:
        raise DegenerateLabels(f"{len(X)} rows for {len(classes)} classes")
    lookup = {c: i for i, c in enumerate(classes)}
    Y = np.full((len(y), len(classes)), -1.0)
    Y[np.arange(len(y)), [lookup[v] for v in y.tolist()]] = 1.0

    sd = X.std(axis=0)
    kept = np.nonzero(sd >= _SD_GUARD)[0]
    mu = X[:, kept].mean(axis=0)
    sigma = sd[kept]
    Z = (X[:, kept] - mu) / sigma
    return X, Y, classes, kept, mu, sigma, Z


def _assemble(classes, n_in, kept, mu, sigma, w, zbar, ybar, alpha, grid, loo=None):
    W = w.T
    b = ybar - zbar @ w
    return RidgeModel(classes=classes, n_features_in=n_in, kept=kept, mu=mu,
                      sigma=sigma, W=W, b=b, alpha=float(alpha),
                      alphas_grid=tuple(float(a) for a in grid), loo_errors=loo)


def fit_ridge_cv(X, y, alphas=DEFAULT_ALPHAS, seed: int = 0, classes=None) -> RidgeModel:
    """Fit with the alpha chosen by closed-form leave-one-out error.

    ``seed`` is accepted for interface symmetry with the other learners; the
    fit is deterministic closed form and does not consume randomness.
    """
    del seed
    alphas = [float(a) for a in alphas]
    if not alphas or any(a <= 0 for a in alphas):
        raise SingularInput(f"alpha grid must be positive, got {alphas}")
    X, Y, classes, kept, mu, sigma, Z = _prepare(X, y, classes)
    n = len(Z)
    zbar = Z.mean(axis=0)
    ybar = Y.mean(axis=0)
    Zc = Z - zbar
    Yc = Y - ybar
    U, s, Vt = np.linalg.svd(Zc, full_matrices=False)
    UtY = U.T @ Yc
    U2 = U ** 2
    s2 = s ** 2

    errors = np.empty(len(alphas))
    for ai, alpha in enumerate(alphas):
        d = s2 / (s2 + alpha)
        Yhat = U @ (d[:, None] * UtY) + ybar
        h = U2 @ d + 1.0 / n
        E = (Y - Yhat) / (1.0 - h)[:, None]
        errors[ai] = (E ** 2).sum()

    best = int(np.argmin(errors))
    alpha = alphas[best]
    w = Vt.T @ ((s / (s2 + alpha))[:, None] * UtY)
    return _assemble(classes, X.shape[1], kept, mu, sigma, w, zbar, ybar,
                     alpha, alphas, loo=errors)


def fit_ridge(X, y, alpha: float, classes=None) -> RidgeModel:
    """Fit at a fixed alpha (normal equations, Cholesky)."""
    if alpha <= 0:
        raise SingularInput(f"alpha must be positive, got {alpha}")
    X, Y, classes, kept, mu, sigma, Z = _prepare(X, y, classes)
    zbar = Z.mean(axis=0)
    ybar = Y.mean(axis=0)
    Zc = Z - zbar
    Yc = Y - ybar
    G = Zc.T @ Zc
    G[np.diag_indices_from(G)] += alpha
    w = np.linalg.solve(G, Zc.T @ Yc)
    return _assemble(classes, X.shape[1], kept, mu, sigma, w, zbar, ybar,
                     alpha, [alpha])


def fit_ridge_grid(X, y, alphas=DEFAULT_ALPHAS, classes=None) -> list[RidgeModel]:
    """One fixed-alpha model per grid entry, sharing a single Gram matrix.

    Used by holdout grid search, where each alpha is scored on held-out
    calves rather than by LOO.
    """
    alphas = [float(a) for a in alphas]
    X, Y, classes, kept, mu, sigma, Z = _prepare(X, y, classes)
    zbar = Z.mean(axis=0)
    ybar = Y.mean(axis=0)
    Zc = Z - zbar
    Yc = Y - ybar
    G0 = Zc.T @ Zc
    C = Zc.T @ Yc
    out = []
    for alpha in alphas:
        if alpha <= 0:
            raise SingularInput(f"alpha must be positive, got {alpha}")
        G = G0.copy()
        G[np.diag_indices_from(G)] += alpha
        w = np.linalg.solve(G, C)
        out.append(_assemble(classes, X.shape[1], kept, mu, sigma, w, zbar,
                             ybar, alpha, alphas))
    return out


def decision_values(m: RidgeModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != m.n_features_in:
        raise ShapeMismatch(
            f"X has {X.shape[1] if X.ndim == 2 else '?'} columns, "
            f"model expects {m.n_features_in}")
    Z = (X[:, m.kept] - m.mu) / m.sigma
    return Z @ m.W.T + m.b


def predict_ridge(m: RidgeModel, X):
    """Labels and decision values; argmax ties go to the earlier class."""
    d = decision_values(m, X)
    idx = d.argmax(axis=1)
    labels = np.array(m.classes, dtype=object)[idx]
    return labels, d
