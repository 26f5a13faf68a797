"""End-to-end zero-shot runs: train, score with each method, evaluate.

Shared by the command line and the estimator wrappers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .annotation import AttributeSignatureMatrix, fallback_signatures, propagate
from .baselines import baseline_batch
from .classifier import ModelBank, TrainConfig, train_model_bank
from .dataset import Dataset
from .exceptions import InputError
from .metrics import evaluate, level_diagnostics
from .synth import (SynthBenchmark, SynthSpec, generate, generate_all_leaves, sample_classes,
                    sample_leaf_split)
from .taxonomy import INTERNAL, SEEN, UNSEEN, Node, Taxonomy
from .transfer import ScoreTable, normalize_class_scores, score_batch

logger = logging.getLogger(__name__)

METHODS = ("hat", "dap", "ens")


def zero_shot_scores(method: str, bank: ModelBank, t: Taxonomy, signatures: AttributeSignatureMatrix,
                     X, sample_ids=None, normalize: bool = True, fallback_parent: bool = False,
                     table=None, on_missing: str = "skip") -> ScoreTable:
    """Class scores of the unseen leaves of ``t`` for a batch of samples.

    ``signatures`` must hold a row for every unseen leaf unless
    ``fallback_parent`` is set, in which case the parents' propagated rows
    are used instead. DAP scores are never normalized. ``on_missing``
    controls DAP attributes that are active in an unseen class but have no
    global classifier (``"skip"`` or ``"raise"``).
    """
    if table is None:
        table = bank.table
    unseen = t.unseen_leaves
    if fallback_parent:
        sig = fallback_signatures(t, table, unseen)
    else:
        sig = signatures.select(unseen)
    if method == "hat":
        s = score_batch(bank, table, t, sig, X, sample_ids)
    elif method in ("dap", "ens"):
        s = baseline_batch(method, bank, t.root, sig, X, sample_ids, on_missing=on_missing)
    else:
        raise ValueError(f"unknown method {method!r}")
    if normalize and method != "dap":
        s = normalize_class_scores(s)
    return s


@dataclass
class ZeroShotRun:
    bank: ModelBank
    scores: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)

    def accuracy(self, method: str) -> float:
        return self.reports[method].accuracy


def train_and_evaluate(t: Taxonomy, signatures: AttributeSignatureMatrix, train: Dataset, test: Dataset,
                       config: TrainConfig | None = None, methods=METHODS, normalize: bool = True,
                       fallback: bool = False) -> ZeroShotRun:
    """Train on the seen leaves, then score and evaluate every method on ``test``.

    With ``fallback`` an extra ``"hat-fallback"`` entry scores HAT from
    parent-derived signatures.
    """
    seen_sig = signatures.select(t.seen_leaves)
    table = propagate(t, seen_sig)
    bank = train_model_bank(t, table, train, seen_sig, config)
    run = ZeroShotRun(bank)
    todo = [(m, m, False) for m in methods]
    if fallback:
        todo.append(("hat-fallback", "hat", True))
    for name, method, fb in todo:
        s = zero_shot_scores(method, bank, t, signatures, test.X, test.sample_ids, normalize, fb, table)
        run.scores[name] = s
        run.reports[name] = evaluate(s, test.classes.tolist())
    return run


def run_benchmark(spec: SynthSpec | None = None, config: TrainConfig | None = None,
                  bench: SynthBenchmark | None = None) -> tuple[SynthBenchmark, ZeroShotRun]:
    """Train and evaluate all methods plus parent fallback on a synthetic instance.

    Per-depth precision and recall of the trained classifiers are measured
    on fresh held-out samples of the seen classes and attached to the HAT
    report.
    """
    bench = generate(spec or SynthSpec()) if bench is None else bench
    run = train_and_evaluate(bench.taxonomy, bench.signatures, bench.train, bench.test, config, fallback=True)
    heldout = sample_classes(bench.spec, bench.seen, "heldout")
    seen_sig = bench.signatures.select(bench.seen)
    mode = (config or TrainConfig()).annotation_mode
    run.reports["hat"].level_diagnostics = level_diagnostics(run.bank, bench.taxonomy, run.bank.table,
                                                             heldout, seen_sig, mode)
    return bench, run


def benchmark_table(bench: SynthBenchmark, run: ZeroShotRun) -> list[dict]:
    chance = 1.0 / len(bench.unseen)
    rows = []
    for name, report in run.reports.items():
        rows.append({
            "method": name,
            "accuracy": report.accuracy,
            "mean_class_auc": report.mean_class_auc,
            "chance": chance,
        })
    return rows


def _dataset(parts, classes, attributes) -> Dataset:
    ids, Xs, Ls, ys = [], [], [], []
    for leaf in classes:
        i, X, shown = parts[leaf]
        ids += i
        Xs.append(X)
        Ls.append(shown)
        ys += [leaf] * len(i)
    return Dataset(np.array(ids, dtype=object), np.vstack(Xs), np.array(ys, dtype=object),
                   np.vstack(Ls), tuple(attributes))


def default_sweep_sizes(n_leaves: int, steps: int = 5) -> list[int]:
    """Evenly spaced source sizes from a quarter to three quarters of the leaves."""
    lo, hi = 0.25 * n_leaves, 0.75 * n_leaves
    sizes = sorted({int(round(v)) for v in np.linspace(lo, hi, steps)})
    return [s for s in sizes if 2 <= s <= n_leaves - 2]


def sweep_dataset(t: Taxonomy, signatures: AttributeSignatureMatrix, train_pool: Dataset, test_pool: Dataset,
                  sizes=None, repeats: int = 3, seed: int = 0, config: TrainConfig | None = None,
                  methods=METHODS) -> list[dict]:
    """Retrain with growing seen sets; one row per (size, repeat, method).

    Every leaf of ``t`` is a candidate class. For each split, training uses
    the ``train_pool`` rows of the seen leaves and evaluation the
    ``test_pool`` rows of the rest. Both pools may be the same dataset.
    """
    leaves = sorted(t.seen_leaves + t.unseen_leaves)
    sizes = default_sweep_sizes(len(leaves)) if sizes is None else sorted(sizes)
    rows = []
    for size in sizes:
        if not 1 <= size < len(leaves):
            raise InputError(f"source size {size} must lie in [1, {len(leaves) - 1}]")
        for r in range(repeats):
            seen, unseen = sample_leaf_split(leaves, size, seed, r)
            split_t = t.with_kinds({**{z: SEEN for z in seen}, **{z: UNSEEN for z in unseen}})
            train = train_pool.select_classes(seen)
            test = test_pool.select_classes(unseen)
            run = train_and_evaluate(split_t, signatures, train, test, config, methods)
            for m in methods:
                rep = run.reports[m]
                rows.append({
                    "n_seen": size,
                    "n_unseen": len(unseen),
                    "repeat": r,
                    "method": m,
                    "accuracy": rep.accuracy,
                    "mean_class_auc": rep.mean_class_auc,
                })
    return rows


def sweep(spec: SynthSpec, sizes=None, repeats: int = 3, config: TrainConfig | None = None,
          methods=METHODS) -> list[dict]:
    """Source-size sweep on freshly generated samples for every synthetic leaf."""
    internal, leaves, parent, sig, train_parts, test_parts = generate_all_leaves(spec)
    nodes = [Node(n, n, INTERNAL) for n in internal] + [Node(n, n, SEEN) for n in leaves]
    t = Taxonomy.from_edges(nodes, [(p, c) for c, p in parent.items()])
    train = _dataset(train_parts, leaves, sig.attributes)
    test = _dataset(test_parts, leaves, sig.attributes)
    return sweep_dataset(t, sig, train, test, sizes, repeats, spec.seed, config, methods)


def sweep_margins(rows, method: str = "hat", baseline: str = "dap") -> list[tuple[int, float]]:
    """Mean accuracy margin of ``method`` over ``baseline`` per source size."""
    acc: dict = {}
    for row in rows:
        acc.setdefault(row["n_seen"], {}).setdefault(row["method"], []).append(row["accuracy"])
    return [(n, float(np.mean(v[method]) - np.mean(v[baseline]))) for n, v in sorted(acc.items())]
