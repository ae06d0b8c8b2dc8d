"""One-vs-rest linear SVM with a dual coordinate descent solver.

Squared-hinge loss, L2 regularization, bias handled as an appended
constant-1 dimension. Solves are cyclic (no shuffling), so training is
deterministic; the per-epoch dual objective of every binary problem is
kept for diagnostics.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DimMismatch, SingleClass

MAX_EPOCHS = 1000
GAP_REL_TOL = 1e-3


def _prepare(X, normalize):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if normalize:
        norms = np.linalg.norm(X, axis=1)
        X = X / np.where(norms < 1e-12, 1.0, norms)[:, None]
    return np.hstack([X, np.ones((X.shape[0], 1))])


@dataclass
class LinearSvmModel:
    classes: np.ndarray
    W: np.ndarray              # (n_classes, dim + 1), last column is the bias
    C: float
    normalize: bool
    dual_histories: list = field(default_factory=list, repr=False)

    @property
    def dim(self):
        return self.W.shape[1] - 1

    def decision_scores(self, X):
        Xp = _prepare(X, self.normalize)
        if Xp.shape[1] != self.W.shape[1]:
            raise DimMismatch(f"feature dim {Xp.shape[1] - 1} != model dim {self.dim}")
        return Xp @ self.W.T


def train_svm(X, y, C=1.0, normalize=True, max_epochs=MAX_EPOCHS,
              gap_rel_tol=GAP_REL_TOL):
    """Train one binary dual-CD problem per class (one-vs-rest)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y)
    classes = np.unique(y)
    if classes.size < 2:
        raise SingleClass("SVM training needs >= 2 classes")
    Xp = _prepare(X, normalize)

    W = np.empty((classes.size, Xp.shape[1]))
    histories = []
    for ci, c in enumerate(classes):
        yk = np.where(y == c, 1.0, -1.0)
        w, _, dual_hist, _ = kernels.svm_dual_cd(Xp, yk, C, max_epochs, gap_rel_tol)
        W[ci] = w
        histories.append(dual_hist)
    return LinearSvmModel(classes=classes.astype(np.int64), W=W, C=C,
                          normalize=normalize, dual_histories=histories)


def predict(model, x):
    """Class of one vector; score ties go to the lower class index."""
    scores = model.decision_scores(np.asarray(x)[None, :])[0]
    return int(model.classes[int(np.argmax(scores))])


def predict_batch(model, X):
    scores = model.decision_scores(X)
    return model.classes[np.argmax(scores, axis=1)].astype(np.int64)
