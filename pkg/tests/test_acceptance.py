"""Acceptance criteria, one test and one PASS/FAIL line each.

The lines are also collected into the "acceptance criteria" section of the
pytest terminal summary. Criteria that the implementation does not meet
fail here on purpose.
"""

import csv
import json
import time

import numpy as np
import pytest
from scipy.optimize import minimize

from hattransfer.annotation import propagate
from hattransfer.baselines import ens_scores
from hattransfer.classifier import TrainConfig, fit_logistic, logistic_objective, train_model_bank
from hattransfer.cli import main
from hattransfer.exceptions import EmptyPositives, NoContrast
from hattransfer.metrics import roc_auc
from hattransfer.pipeline import sweep_margins, train_and_evaluate
from hattransfer.supportsets import PER_CLASS, PER_IMAGE, SupportSets
from hattransfer.synth import SynthSpec, generate
from hattransfer.taxonomy import INTERNAL, UNSEEN, Node, Taxonomy
from hattransfer.transfer import score_batch

from helpers import (
    pairwise_auc,
    propagate_oracle,
    random_dataset,
    random_signatures,
    random_taxonomy,
    report,
)

PINNED = SynthSpec(depth=3, branching=3, feature_dim=32, n_attributes=12, samples_per_class=30,
                   subtree_shift_scale=1.0, noise_sigma=0.5, unseen_fraction=0.25, seed=7)


def corpus(n=100, seed=2024):
    """Random trees with at most 6 levels, 64 leaves and 16 attributes."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        t = random_taxonomy(rng, max_depth=6, max_leaves=64)
        sig = random_signatures(rng, t.seen_leaves, int(rng.integers(1, 17)))
        out.append((rng, t, sig))
    return out


def test_published_numbers_out_of_scope():
    report("published-number reproduction", "N/A",
           "needs the original image datasets and CNN features; replaced by the criteria below")
    pytest.skip("reproducing published accuracies needs the original datasets")


def test_propagation_oracle():
    trees = corpus()
    start = time.perf_counter()
    mismatches = 0
    for _, t, sig in trees:
        table = propagate(t, sig)
        oracle = propagate_oracle(t, sig)
        mismatches += sum(table.row(n).tolist() != oracle[n].tolist() for n in t)
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 5.0
    report("propagation oracle", ok, f"100 trees, {mismatches} mismatching rows, {elapsed:.2f} s (limit 5 s)")
    assert ok


def test_support_set_algebra():
    violations, checked = 0, 0
    for rng, t, sig in corpus():
        data = random_dataset(rng, t, sig)
        table = propagate(t, sig)
        everyone = frozenset(data.sample_ids.tolist())
        for mode in (PER_CLASS, PER_IMAGE):
            sets = SupportSets(t, table, data, sig, mode)
            for n in t:
                if t.kind(n) == UNSEEN:
                    continue
                parent = t.parent(n)
                for m in sig.attributes:
                    checked += 1
                    if parent is not None and not sets.support_set(n, m) <= sets.support_set(parent, m):
                        violations += 1
                    if not table.value(n, m):
                        continue
                    try:
                        ts = sets.training_sets(n, m) if parent is not None else sets.root_training_sets(m)
                    except (NoContrast, EmptyPositives):
                        continue
                    union = sets.support_set(parent, m) if parent is not None else everyone
                    if ts.positives & ts.negatives or ts.positives | ts.negatives != union:
                        violations += 1
    ok = violations == 0
    report("support-set algebra", ok, f"{checked} (node, attribute, mode) checks, {violations} violations")
    assert ok


def reference_objective(X, y, cost):
    d = X.shape[1]

    def f(th):
        v, gw, gb = logistic_objective(th[:d], th[d], X, y, cost)
        return v, np.r_[gw, gb]

    res = minimize(f, np.zeros(d + 1), jac=True, method="L-BFGS-B",
                   options={"gtol": 1e-10, "ftol": 0.0, "maxiter": 100000, "maxcor": 30})
    return res.fun


def test_solver_correctness():
    rng = np.random.default_rng(99)
    worst_obj, worst_grad = 0.0, 0.0
    for _ in range(50):
        d = int(rng.integers(1, 11))
        n_pos, n_neg = int(rng.integers(1, 100)), int(rng.integers(1, 100))
        P = rng.normal(0.4, 1.0, (n_pos, d))
        N = rng.normal(-0.4, 1.0, (n_neg, d))
        cost = float(10.0 ** rng.uniform(-2, 2))
        X = np.vstack([P, N])
        y = np.r_[np.ones(n_pos), -np.ones(n_neg)]
        res = fit_logistic(P, N, cost)
        worst_obj = max(worst_obj, abs(res.objective - reference_objective(X, y, cost)))
        w, b = rng.normal(size=d), float(rng.normal())
        _, gw, gb = logistic_objective(w, b, X, y, cost)
        g = np.r_[gw, gb]
        fd = np.empty(d + 1)
        h = 1e-6
        for j in range(d + 1):
            e = np.zeros(d + 1)
            e[j] = h
            plus = logistic_objective(w + e[:d], b + e[d], X, y, cost)[0]
            minus = logistic_objective(w - e[:d], b - e[d], X, y, cost)[0]
            fd[j] = (plus - minus) / (2 * h)
        worst_grad = max(worst_grad, np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1e-12))
    ok = worst_obj <= 1e-4 and worst_grad < 1e-5
    report("solver correctness", ok,
           f"50 problems, max |objective - reference| {worst_obj:.2e} (limit 1e-4), "
           f"max gradient relative error {worst_grad:.2e} (limit 1e-5)")
    assert ok


def test_auc_exactness():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 80))
        levels = int(rng.integers(1, 8))
        scores = rng.integers(0, levels, size=n) / 4.0 if rng.uniform() < 0.7 else rng.normal(size=n)
        labels = rng.integers(0, 2, size=n)
        labels[rng.permutation(n)[:2]] = [0, 1]
        worst = max(worst, abs(roc_auc(scores, labels) - pairwise_auc(scores, labels)))
    ok = worst <= 1e-12
    report("AUC exactness", ok, f"1000 vectors with ties, max deviation {worst:.1e} (limit 1e-12)")
    assert ok


def flatten(t):
    leaves = [n for n in t if t.kind(n) != INTERNAL]
    nodes = [Node("root", "root", INTERNAL)] + [t.nodes[z] for z in leaves]
    return Taxonomy.from_edges(nodes, [("root", z) for z in leaves])


def test_hierarchy_collapse():
    cases = []
    rng = np.random.default_rng(17)
    for _ in range(20):
        t = flatten(random_taxonomy(rng, max_depth=4, max_leaves=24, n_unseen_frac=0.4))
        if not t.unseen_leaves:
            continue
        seen = random_signatures(rng, t.seen_leaves, 6, p=0.5)
        data = random_dataset(rng, t, seen, d=5, max_per_class=8)
        cases.append((t, seen, random_signatures(rng, t.unseen_leaves, 6, p=0.6), data, rng.normal(size=(15, 5))))
    b = generate(PINNED)
    t = flatten(b.taxonomy)
    cases.append((t, b.signatures.select(t.seen_leaves), b.signatures.select(t.unseen_leaves), b.train, b.test.X))
    worst, compared = 0.0, 0
    for t, seen, unseen, data, X in cases:
        bank = train_model_bank(t, propagate(t, seen), data, seen, TrainConfig(c_grid=(1.0,)))
        roots = bank.root_classifiers(t.root)
        classes = sorted(z for z in unseen.classes if any(m in roots for m in unseen.active(z)))
        if not classes:
            continue
        hat = score_batch(bank, bank.table, t, unseen, X, classes=classes).values
        ens = ens_scores(roots, unseen, X, classes=classes)
        worst = max(worst, float(np.abs(hat - ens).max()))
        compared += hat.size
    ok = worst <= 1e-9
    report("hierarchy collapse", ok, f"{len(cases)} datasets, {compared} scores, max |HAT - ENS| {worst:.1e} (limit 1e-9)")
    assert ok


@pytest.fixture(scope="module")
def bench_outputs(tmp_path_factory):
    """Two pinned CLI bench runs with different worker counts; the first one is timed."""
    root = tmp_path_factory.mktemp("bench")
    start = time.perf_counter()
    assert main(["bench", "--seed", "7", "--workers", "1", "--out", str(root / "w1")]) == 0
    elapsed = time.perf_counter() - start
    assert main(["bench", "--seed", "7", "--workers", "2", "--out", str(root / "w2")]) == 0
    doc = json.loads((root / "w1" / "bench.json").read_text())
    acc = {r["method"]: r["accuracy"] for r in doc["methods"]}
    return root, elapsed, acc, doc["methods"][0]["chance"]


def test_benchmark_separation(bench_outputs):
    _, elapsed, acc, chance = bench_outputs
    margin_dap = acc["hat"] - acc["dap"]
    margin_ens = acc["hat"] - acc["ens"]
    above = all(acc[m] > chance for m in ("hat", "dap", "ens"))
    ok = margin_dap >= 0.05 and margin_ens >= 0.05 and above and elapsed < 120
    report("benchmark separation", ok,
           f"HAT {100 * acc['hat']:.1f}, DAP {100 * acc['dap']:.1f}, ENS {100 * acc['ens']:.1f}, "
           f"chance {100 * chance:.1f}; margins {100 * margin_dap:+.1f} / {100 * margin_ens:+.1f} "
           f"(need +5.0); run {elapsed:.1f} s (limit 120 s)")
    assert ok


def test_control_experiment():
    b = generate(SynthSpec(subtree_shift_scale=0.0))
    run = train_and_evaluate(b.taxonomy, b.signatures, b.train, b.test, methods=("hat", "ens"))
    hat, ens = run.accuracy("hat"), run.accuracy("ens")
    ok = abs(hat - ens) <= 0.02
    report("control experiment", ok,
           f"shift 0: HAT {100 * hat:.1f}, ENS {100 * ens:.1f}, gap {100 * (hat - ens):+.1f} (need within 2.0)")
    assert ok


def test_parent_fallback(bench_outputs):
    _, _, acc, chance = bench_outputs
    fb = acc["hat-fallback"]
    ok = chance < fb < acc["hat"]
    report("parent fallback", ok,
           f"fallback {100 * fb:.1f}, chance {100 * chance:.1f}, declared-signature HAT {100 * acc['hat']:.1f}")
    assert ok


def test_determinism_across_workers(bench_outputs):
    root = bench_outputs[0]
    names = sorted(p.name for p in (root / "w1").iterdir())
    differing = [n for n in names if (root / "w1" / n).read_bytes() != (root / "w2" / n).read_bytes()]
    same_set = names == sorted(p.name for p in (root / "w2").iterdir())
    ok = same_set and not differing
    report("determinism", ok, f"{len(names)} bench files, workers 1 vs 2, {len(differing)} differ")
    assert ok


@pytest.mark.slow
def test_sweep_protocol(tmp_path):
    assert main(["sweep", "--seed", "7", "--repeats", "10", "--out", str(tmp_path)]) == 0
    with open(tmp_path / "sweep.csv", newline="") as fh:
        rows = [{**r, "n_seen": int(r["n_seen"]), "accuracy": float(r["accuracy"])} for r in csv.DictReader(fh)]
    margins = sweep_margins(rows)
    drops = [100 * (a[1] - b[1]) for a, b in zip(margins, margins[1:])]
    ok = all(d <= 1.0 for d in drops)
    text = ", ".join(f"{n}: {100 * m:+.1f}" for n, m in margins)
    report("sweep protocol", ok,
           f"HAT - DAP margin by seen classes (10 repeats) {text}; largest drop {max(drops):.1f} (limit 1.0)")
    assert ok
