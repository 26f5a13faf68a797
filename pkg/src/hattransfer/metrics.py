"""Zero-shot evaluation metrics and classifier diagnostics."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

from .annotation import AttributeSignatureMatrix, NodeAttributeTable
from .classifier import ModelBank
from .dataset import Dataset
from .exceptions import DegenerateLabels, EmptyGtClass, EmptyPositives, LengthMismatch, NoContrast
from .supportsets import PER_CLASS, SupportSets
from .taxonomy import Taxonomy
from .transfer import ScoreTable


def multiclass_accuracy(preds, gt, balanced: bool = True, classes=None):
    """Class-balanced accuracy (mean of per-class accuracies) and the per-class dict.

    With ``balanced=False`` the overall value is plain accuracy instead.
    """
    preds = np.asarray(preds, dtype=object)
    gt = np.asarray(gt, dtype=object)
    if preds.shape != gt.shape:
        raise LengthMismatch(f"{len(preds)} predictions vs {len(gt)} ground-truth labels")
    classes = sorted(set(gt.tolist())) if classes is None else list(classes)
    per_class = {}
    for c in classes:
        mask = gt == c
        if not mask.any():
            raise EmptyGtClass(f"class {c!r} has no test samples")
        per_class[c] = float(np.mean(preds[mask] == c))
    if balanced:
        overall = float(np.mean(list(per_class.values())))
    else:
        overall = float(np.mean(preds == gt))
    return overall, per_class


def confusion_matrix(preds, gt, classes):
    """Rows are ground truth, columns predictions, in ``classes`` order."""
    idx = {c: i for i, c in enumerate(classes)}
    out = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for p, g in zip(preds, gt):
        out[idx[g], idx[p]] += 1
    return out


def roc_auc(scores, labels) -> float:
    """Mann-Whitney estimate of the area under the ROC curve; ties count one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape:
        raise LengthMismatch("scores and labels differ in length")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels("AUC needs at least one positive and one negative")
    ranks = rankdata(scores)  # average ranks for ties
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def mean_attribute_auc(scores: ScoreTable, gt) -> tuple[float, list]:
    """Mean AUC over attribute columns; ``gt`` is an ``(n, M)`` binary array.

    Attributes whose test labels are all equal are left out and returned.
    """
    gt = np.asarray(gt)
    aucs, excluded = [], []
    for j, m in enumerate(scores.columns):
        try:
            aucs.append(roc_auc(scores.values[:, j], gt[:, j]))
        except DegenerateLabels:
            excluded.append(m)
    if not aucs:
        raise DegenerateLabels("every attribute has degenerate test labels")
    return float(np.mean(aucs)), excluded


def mean_class_auc(scores: ScoreTable, gt_classes) -> float:
    gt = np.asarray(gt_classes, dtype=object)
    aucs = [roc_auc(scores.values[:, j], gt == z) for j, z in enumerate(scores.columns)]
    return float(np.mean(aucs))


def attribute_ground_truth(gt_classes, signatures: AttributeSignatureMatrix, attributes=None):
    """Per-sample attribute labels read off the class signatures."""
    attributes = list(signatures.attributes if attributes is None else attributes)
    cols = [signatures.attr_index(m) for m in attributes]
    return np.stack([signatures.values[signatures.row_index(c), cols] for c in gt_classes])


def top_ranked(scores: ScoreTable, k: int) -> dict:
    """For every class, the ``k`` best-scoring sample ids (score desc, then id)."""
    out = {}
    for j, z in enumerate(scores.columns):
        col = scores.values[:, j]
        order = sorted(range(len(col)), key=lambda i: (-col[i], str(scores.sample_ids[i])))
        out[z] = [scores.sample_ids[i] for i in order[:k]]
    return out


def level_diagnostics(bank: ModelBank, t: Taxonomy, table: NodeAttributeTable, data: Dataset,
                      signatures: AttributeSignatureMatrix, mode: str = PER_CLASS) -> list[dict]:
    """Mean precision and recall of each depth's classifiers at threshold 0.5.

    Every classifier is evaluated on its own task (child-vs-parent or
    one-vs-all) rebuilt from the held-out ``data``.
    """
    sets = SupportSets(t, table, data, signatures, mode)
    per_depth: dict[int, list] = {}
    for (n, m), c in sorted(bank.classifiers.items()):
        if n not in t:
            continue
        try:
            pos, neg = sets.training_masks(n, m)
        except (NoContrast, EmptyPositives):
            continue
        rows = pos | neg
        pred = c.score(data.X[rows]) > 0.5
        truth = pos[rows]
        tp = int((pred & truth).sum())
        fp = int((pred & ~truth).sum())
        fn = int((~pred & truth).sum())
        precision = tp / (tp + fp) if tp + fp else float("nan")
        recall = tp / (tp + fn)
        per_depth.setdefault(t.depth(n), []).append((precision, recall))
    out = []
    for depth in sorted(per_depth):
        vals = np.array(per_depth[depth], dtype=np.float64)
        out.append({
            "depth": depth,
            "n_classifiers": len(vals),
            "precision": float(np.nanmean(vals[:, 0])) if np.isfinite(vals[:, 0]).any() else float("nan"),
            "recall": float(vals[:, 1].mean()),
        })
    return out


@dataclass
class EvalReport:
    accuracy: float
    per_class_accuracy: dict
    classes: list
    confusion: list
    mean_class_auc: float | None = None
    mean_attribute_auc: float | None = None
    excluded_attributes: list = field(default_factory=list)
    level_diagnostics: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    def format_table(self) -> str:
        lines = [f"normalized multi-class accuracy  {self.accuracy:.4f}"]
        if self.mean_class_auc is not None:
            lines.append(f"mean class AUC                   {self.mean_class_auc:.4f}")
        if self.mean_attribute_auc is not None:
            lines.append(f"mean attribute AUC               {self.mean_attribute_auc:.4f}")
        lines.append("")
        lines.append("class                 accuracy")
        for c in self.classes:
            lines.append(f"{str(c):<20}  {self.per_class_accuracy[c]:.4f}")
        if self.level_diagnostics:
            lines.append("")
            lines.append("depth  n    precision  recall")
            for row in self.level_diagnostics:
                lines.append(f"{row['depth']:<5}  {row['n_classifiers']:<3}  {row['precision']:.4f}     {row['recall']:.4f}")
        return "\n".join(lines) + "\n"


def evaluate(scores: ScoreTable, gt_classes, preds=None, balanced=True) -> EvalReport:
    from .transfer import classify

    preds = classify(scores) if preds is None else list(preds)
    classes = list(scores.columns)
    acc, per_class = multiclass_accuracy(preds, gt_classes, balanced=balanced, classes=sorted(set(gt_classes)))
    conf = confusion_matrix(preds, gt_classes, classes)
    return EvalReport(acc, per_class, classes, conf.tolist(), mean_class_auc(scores, gt_classes))
