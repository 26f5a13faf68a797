"""L2-regularized logistic regression attribute classifiers and the model bank.

The solver minimizes

    0.5 * ||w||^2 + cost * sum_i log(1 + exp(-y_i * (w . x_i + b)))

with labels ``y_i`` in {-1, +1} and an unregularized bias, using Newton
steps with a backtracking line search.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy.special import expit

from .annotation import AttributeSignatureMatrix, NodeAttributeTable
from .dataset import Dataset
from .exceptions import (
    DimensionMismatch,
    EmptyPositives,
    EmptySet,
    FallbackCost,
    InputError,
    NoContrast,
    NonFiniteFeature,
    SchemaError,
)
from .supportsets import PER_CLASS, SupportSets, _check_mode
from .taxonomy import Taxonomy

logger = logging.getLogger(__name__)

ONE_VS_ALL = "one-vs-all"
CHILD_VS_PARENT = "child-vs-parent"
DEFAULT_GRID = (0.01, 0.1, 1.0, 10.0, 100.0)
FALLBACK_C = 1.0

# direct Newton solves up to this many unknowns, conjugate gradients beyond
_DIRECT_SOLVE_MAX = 512


@dataclass
class FitResult:
    weights: np.ndarray
    bias: float
    objective: float
    grad_norm: float
    n_iter: int
    converged: bool


def _stack(positives, negatives):
    P = np.atleast_2d(np.asarray(positives, dtype=np.float64))
    N = np.atleast_2d(np.asarray(negatives, dtype=np.float64))
    if P.size == 0 or N.size == 0:
        raise EmptySet("both positive and negative sets must be non-empty")
    if P.shape[1] != N.shape[1]:
        raise DimensionMismatch(f"positives have d={P.shape[1]}, negatives d={N.shape[1]}")
    X = np.vstack([P, N])
    if not np.all(np.isfinite(X)):
        raise NonFiniteFeature("training features contain NaN or infinite values")
    y = np.concatenate([np.ones(len(P)), -np.ones(len(N))])
    return X, y


def logistic_objective(w, b, X, y, cost):
    """Objective value and gradient ``(grad_w, grad_b)``."""
    margins = y * (X @ w + b)
    value = 0.5 * w @ w + cost * np.logaddexp(0.0, -margins).sum()
    coef = -cost * y * expit(-margins)
    return value, w + X.T @ coef, coef.sum()


def fit_logistic(positives, negatives, cost: float, tol: float = 1e-6,
                 max_iter: int = 10000, init=None) -> FitResult:
    """Solve the regularized logistic problem for two sample sets."""
    if not cost > 0:
        raise InputError(f"cost must be positive, got {cost}")
    X, y = _stack(positives, negatives)
    return _newton(X, y, float(cost), tol, max_iter, init)


def _newton(X, y, cost, tol, max_iter, init=None):
    n, d = X.shape
    theta = np.zeros(d + 1) if init is None else np.array(init, dtype=np.float64)
    Xb = np.hstack([X, np.ones((n, 1))])
    reg = np.ones(d + 1)
    reg[-1] = 0.0

    def evaluate(th):
        margins = y * (Xb @ th)
        f = 0.5 * th[:-1] @ th[:-1] + cost * np.logaddexp(0.0, -margins).sum()
        coef = -cost * y * expit(-margins)
        return f, reg * th + Xb.T @ coef, margins

    f, g, margins = evaluate(theta)
    gnorm = np.linalg.norm(g)
    it = 0
    while gnorm > tol and it < max_iter:
        it += 1
        p = expit(margins)
        curv = cost * p * (1.0 - p)
        if d + 1 <= _DIRECT_SOLVE_MAX:
            H = (Xb.T * curv) @ Xb
            H[np.diag_indices_from(H)] += reg
            try:
                step = -np.linalg.solve(H, g)
            except np.linalg.LinAlgError:
                step = -np.linalg.lstsq(H, g, rcond=None)[0]
        else:
            step = _cg(lambda v: reg * v + Xb.T @ (curv * (Xb @ v)), -g, tol=min(0.1, np.sqrt(gnorm)) * gnorm)
        slope = g @ step
        if slope >= 0:
            step, slope = -g, -g @ g
        # near the optimum f changes below its rounding error; fall back on |grad|
        f_slack = 64 * np.finfo(float).eps * max(1.0, abs(f))
        t = 1.0
        while True:
            f_new, g_new, m_new = evaluate(theta + t * step)
            if f_new <= f + 1e-4 * t * slope:
                break
            if f_new <= f + f_slack and np.linalg.norm(g_new) < gnorm:
                break
            t *= 0.5
            if t < 1e-12:
                break
        if t < 1e-12:
            break
        theta = theta + t * step
        f, g, margins = f_new, g_new, m_new
        gnorm = np.linalg.norm(g)
    return FitResult(theta[:-1].copy(), float(theta[-1]), float(f), float(gnorm), it, bool(gnorm <= tol))


def _cg(matvec, rhs, tol, max_iter=500):
    x = np.zeros_like(rhs)
    r = rhs.copy()
    p = r.copy()
    rr = r @ r
    for _ in range(max_iter):
        if np.sqrt(rr) <= tol:
            break
        Ap = matvec(p)
        alpha = rr / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rr_new = r @ r
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x


@dataclass
class AttributeClassifier:
    node: str
    attribute: str
    weights: np.ndarray
    bias: float
    scheme: str
    cost: float
    n_iter: int = 0
    converged: bool = True

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.cost <= 0:
            raise InputError("cost must be positive")

    @property
    def n_features(self) -> int:
        return self.weights.shape[0]

    def decision_function(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, got {X.shape[-1]}")
        return X @ self.weights + self.bias

    def score(self, X):
        return expit(self.decision_function(X))


def score(c: AttributeClassifier, x) -> float:
    """Probability-like score of attribute ``c.attribute`` for one sample."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch("score expects a single feature vector")
    return float(c.score(x))


def fit(positives, negatives, cost: float, node: str = "", attribute: str = "",
        scheme: str = ONE_VS_ALL, tol: float = 1e-6, max_iter: int = 10000) -> AttributeClassifier:
    res = fit_logistic(positives, negatives, cost, tol=tol, max_iter=max_iter)
    if not res.converged:
        logger.warning("solver stopped at |grad|=%.3g after %d iterations (%s, %s)",
                       res.grad_norm, res.n_iter, node, attribute)
    return AttributeClassifier(node, attribute, res.weights, res.bias, scheme, float(cost),
                               res.n_iter, res.converged)


# -- cross-validated cost selection ---------------------------------------

def _hash_key(seed: int, sample_id) -> bytes:
    return hashlib.blake2b(f"{seed}\x1f{sample_id}".encode(), digest_size=8).digest()


def fold_assignment(ids: Sequence, folds: int, seed: int) -> np.ndarray:
    """Balanced fold index per id, fixed by ``(seed, id)`` and not by input order."""
    order = sorted(range(len(ids)), key=lambda i: (_hash_key(seed, ids[i]), str(ids[i])))
    out = np.empty(len(ids), dtype=np.int64)
    for rank, i in enumerate(order):
        out[i] = rank % folds
    return out


def cv_accuracies(positives, negatives, grid, folds=5, seed=0, pos_ids=None, neg_ids=None,
                  tol=1e-6, max_iter=10000) -> np.ndarray:
    """Mean validation accuracy per grid value over stratified folds."""
    X, y = _stack(positives, negatives)
    n_pos = int((y > 0).sum())
    n_neg = len(y) - n_pos
    if folds < 2:
        raise InputError("folds must be at least 2")
    if n_pos < folds or n_neg < folds:
        raise FallbackCost(f"{n_pos} positives / {n_neg} negatives is too few for {folds} folds")
    pos_ids = [f"p{i}" for i in range(n_pos)] if pos_ids is None else list(pos_ids)
    neg_ids = [f"n{i}" for i in range(n_neg)] if neg_ids is None else list(neg_ids)
    fold = np.concatenate([fold_assignment(pos_ids, folds, seed), fold_assignment(neg_ids, folds, seed)])
    acc = np.zeros(len(grid))
    for k in range(folds):
        train, val = fold != k, fold == k
        Xt, yt = X[train], y[train]
        for gi, c in enumerate(grid):
            res = _newton(Xt, yt, float(c), tol, max_iter)
            pred = np.where(X[val] @ res.weights + res.bias > 0, 1.0, -1.0)
            acc[gi] += np.mean(pred == y[val])
    return acc / folds


def select_cost(positives, negatives, grid=DEFAULT_GRID, folds: int = 5, seed: int = 0,
                pos_ids=None, neg_ids=None, **kw) -> float:
    """Grid value with the best mean validation accuracy; ties go to the smaller cost."""
    grid = list(grid)
    if not grid:
        raise InputError("cost grid is empty")
    acc = cv_accuracies(positives, negatives, grid, folds, seed, pos_ids, neg_ids, **kw)
    best = None
    for c, a in sorted(zip(grid, acc)):
        if best is None or a > best[1] + 1e-12:
            best = (c, a)
    return float(best[0])


# -- model bank -----------------------------------------------------------

@dataclass
class TrainConfig:
    c_grid: tuple = DEFAULT_GRID
    folds: int = 5
    seed: int = 0
    annotation_mode: str = PER_CLASS
    n_jobs: int = 1
    tol: float = 1e-6
    max_iter: int = 10000

    def to_dict(self):
        return {
            "c_grid": [float(c) for c in self.c_grid],
            "folds": self.folds,
            "seed": self.seed,
            "annotation_mode": self.annotation_mode,
            "tol": self.tol,
            "max_iter": self.max_iter,
        }


@dataclass
class ModelBank:
    """Trained classifiers keyed by ``(node, attribute)``."""

    n_features: int
    classifiers: dict = field(default_factory=dict)
    skipped: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    attributes: tuple = ()
    table: NodeAttributeTable | None = None

    def __contains__(self, key):
        return key in self.classifiers

    def __len__(self):
        return len(self.classifiers)

    def __getitem__(self, key) -> AttributeClassifier:
        return self.classifiers[key]

    def get(self, node, attribute):
        return self.classifiers.get((node, attribute))

    def keys(self):
        return sorted(self.classifiers)

    def root_classifiers(self, root: str) -> dict:
        return {m: c for (n, m), c in self.classifiers.items() if n == root}

    def check_features(self, d: int) -> None:
        if d != self.n_features:
            raise DimensionMismatch(f"model bank expects d={self.n_features}, data has d={d}")

    def score_matrix(self, X, keys=None):
        """Scores of the listed classifiers for every row of ``X``, shape ``(n, len(keys))``."""
        keys = self.keys() if keys is None else list(keys)
        X = np.asarray(X, dtype=np.float64)
        self.check_features(X.shape[1])
        if not keys:
            return np.zeros((X.shape[0], 0))
        W = np.stack([self.classifiers[k].weights for k in keys])
        b = np.array([self.classifiers[k].bias for k in keys])
        return expit(X @ W.T + b)

    def to_dict(self) -> dict:
        meta = {"d": self.n_features, **self.config, "attributes": list(self.attributes)}
        if self.table is not None:
            meta["node_table"] = {
                "nodes": list(self.table.nodes),
                "values": self.table.values.astype(int).tolist(),
            }
        return {
            "meta": meta,
            "skipped": [{"node": n, "attr": m, "reason": r} for n, m, r in self.skipped],
            "classifiers": [
                {
                    "node": c.node,
                    "attr": c.attribute,
                    "scheme": c.scheme,
                    "cost": c.cost,
                    "bias": c.bias,
                    "weights": c.weights.tolist(),
                    "n_iter": c.n_iter,
                    "converged": c.converged,
                }
                for c in (self.classifiers[k] for k in self.keys())
            ],
        }

    @classmethod
    def from_dict(cls, doc) -> "ModelBank":
        try:
            meta = dict(doc["meta"])
            d = int(meta.pop("d"))
            attributes = tuple(meta.pop("attributes", ()))
            nt = meta.pop("node_table", None)
            table = None
            if nt is not None:
                table = NodeAttributeTable(tuple(nt["nodes"]), attributes, np.array(nt["values"], dtype=np.uint8).reshape(len(nt["nodes"]), len(attributes)))
            classifiers = {}
            for rec in doc["classifiers"]:
                c = AttributeClassifier(
                    rec["node"], rec["attr"], np.array(rec["weights"], dtype=np.float64),
                    float(rec["bias"]), rec["scheme"], float(rec["cost"]),
                    int(rec.get("n_iter", 0)), bool(rec.get("converged", True)),
                )
                if c.n_features != d:
                    raise DimensionMismatch(f"classifier ({c.node}, {c.attribute}) has d={c.n_features}, bank d={d}")
                classifiers[(c.node, c.attribute)] = c
            skipped = [(s["node"], s["attr"], s["reason"]) for s in doc.get("skipped", [])]
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DimensionMismatch):
                raise
            raise SchemaError(f"malformed model bank: {exc!r}") from exc
        return cls(d, classifiers, skipped, meta, attributes, table)


def _train_one(n, m, scheme, X, pos_rows, neg_rows, pos_ids, neg_ids, config: TrainConfig):
    P, N = X[pos_rows], X[neg_rows]
    try:
        cost = select_cost(P, N, config.c_grid, config.folds, config.seed, pos_ids, neg_ids,
                           tol=config.tol, max_iter=config.max_iter)
    except FallbackCost:
        cost = FALLBACK_C
    return fit(P, N, cost, n, m, scheme, tol=config.tol, max_iter=config.max_iter)


def plan_training(t: Taxonomy, table: NodeAttributeTable, data: Dataset, sig: AttributeSignatureMatrix,
                  mode: str = PER_CLASS):
    """Enumerate classifiers to train as ``(node, attr, scheme, pos_rows, neg_rows)`` plus skips."""
    sets = SupportSets(t, table, data, sig, mode)
    tasks, skipped = [], []
    for n in t:  # lexicographic
        for m in table.active(n):
            try:
                pos, neg = sets.training_masks(n, m)
            except (NoContrast, EmptyPositives) as exc:
                skipped.append((n, m, exc.code))
                if isinstance(exc, EmptyPositives) and mode != PER_CLASS:
                    logger.warning("skipping (%s, %s): %s", n, m, exc)
                continue
            scheme = ONE_VS_ALL if n == t.root else CHILD_VS_PARENT
            tasks.append((n, m, scheme, np.flatnonzero(pos), np.flatnonzero(neg)))
    return tasks, skipped


def train_model_bank(t: Taxonomy, table: NodeAttributeTable, data: Dataset,
                     sig: AttributeSignatureMatrix, config: TrainConfig | None = None) -> ModelBank:
    """Train one classifier per active ``(node, attribute)`` pair.

    Root attributes are learned one-vs-all, everything else child-vs-parent.
    Pairs without positives or without contrast are recorded in ``skipped``.
    """
    config = TrainConfig() if config is None else config
    _check_mode(config.annotation_mode)
    unknown = set(data.classes.tolist()) - set(t.seen_leaves)
    if unknown:
        raise InputError(f"training samples belong to classes that are not seen leaves: {sorted(unknown)[:5]}")
    tasks, skipped = plan_training(t, table, data, sig, config.annotation_mode)
    ids = data.sample_ids
    results = Parallel(n_jobs=config.n_jobs, prefer="threads")(
        delayed(_train_one)(n, m, scheme, data.X, pos, neg, ids[pos].tolist(), ids[neg].tolist(), config)
        for n, m, scheme, pos, neg in tasks
    )
    classifiers = {(c.node, c.attribute): c for c in results}
    return ModelBank(data.n_features, dict(sorted(classifiers.items())), skipped, config.to_dict(),
                     table.attributes, table)
