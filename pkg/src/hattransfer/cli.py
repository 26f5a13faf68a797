"""Command-line front end.

Every subcommand reads its options from flags and, optionally, from a JSON
file given with ``--config`` whose keys are the flag names without the
leading dashes (``c-grid`` or ``c_grid``). Flags win over the file.

Exit codes: 0 on success, 2 on invalid input, 3 on runtime failure. On
failure a JSON error record is written to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path


from . import io
from .annotation import binarize_occurrence, class_occurrence, propagate
from .classifier import DEFAULT_GRID, TrainConfig, train_model_bank
from .exceptions import HATError, InputError
from .metrics import evaluate
from .pipeline import METHODS, benchmark_table, run_benchmark, sweep, sweep_dataset, sweep_margins, zero_shot_scores
from .supportsets import PER_CLASS, PER_IMAGE, SupportSets, support_size_rows
from .synth import SynthSpec, generate
from .taxonomy import SEEN, UNSEEN, prune_single_child
from .transfer import classify

logger = logging.getLogger("hattransfer")

DEFAULTS = {
    "feature_format": "csv",
    "attr_mode": PER_CLASS,
    "attr_kind": "signature",
    "method": "hat",
    "no_normalize": False,
    "fallback_parent": False,
    "c_grid": ",".join(repr(c) for c in DEFAULT_GRID),
    "folds": 5,
    "seed": 0,
    "workers": 1,
    "l2": False,
    "repeats": 3,
    "out": ".",
}


def _config_value(args, name):
    value = getattr(args, name, None)
    if value is not None:
        return value
    if name in args.file_config:
        return args.file_config[name]
    return DEFAULTS.get(name)


class Options:
    """Merged view of flags, config file and defaults."""

    def __init__(self, args):
        self._args = args

    def __getattr__(self, name):
        return _config_value(self._args, name)

    def require(self, name):
        value = getattr(self, name)
        if value is None:
            raise InputError(f"--{name.replace('_', '-')} is required")
        return value

    def path(self, name, required=True):
        value = self.require(name) if required else getattr(self, name)
        if value is None:
            return None
        p = Path(value)
        if not p.exists():
            raise InputError(f"--{name.replace('_', '-')}: {p} does not exist")
        return p

    def out_dir(self) -> Path:
        p = Path(self.out)
        p.mkdir(parents=True, exist_ok=True)
        return p

    def train_config(self, seed=None) -> TrainConfig:
        """Training options; ``seed`` overrides ``--seed`` for the fold assignment."""
        grid = self.c_grid
        if isinstance(grid, str):
            try:
                grid = [float(c) for c in grid.split(",") if c.strip()]
            except ValueError:
                raise InputError(f"--c-grid: cannot parse {self.c_grid!r}") from None
        grid = tuple(float(c) for c in grid)
        if not grid or any(c <= 0 for c in grid):
            raise InputError("--c-grid must list positive costs")
        if int(self.folds) < 2:
            raise InputError("--folds must be at least 2")
        if self.attr_mode not in (PER_CLASS, PER_IMAGE):
            raise InputError(f"--attr-mode must be {PER_CLASS} or {PER_IMAGE}")
        return TrainConfig(c_grid=grid, folds=int(self.folds), seed=int(self.seed if seed is None else seed),
                           annotation_mode=self.attr_mode, n_jobs=int(self.workers))


# -- shared loading -----------------------------------------------------------

def _taxonomy(opts):
    t = io.load_taxonomy(opts.path("taxonomy"))
    split_path = opts.path("split", required=False)
    if split_path is not None:
        split = io.load_split(split_path)
        t = t.with_kinds({**{z: SEEN for z in split.seen}, **{z: UNSEEN for z in split.unseen}})
    return prune_single_child(t)


def _signatures(opts):
    """Class signatures from the class-attribute file (binarized if occurrences)."""
    kind = opts.attr_kind
    if kind not in ("signature", "occurrence"):
        raise InputError("--attr-kind must be signature or occurrence")
    m = io.read_attribute_matrix(opts.path("attributes"), kind=kind)
    return binarize_occurrence(m) if kind == "occurrence" else m


def _features(opts, with_image_attributes=False):
    labels = opts.path("labels", required=opts.feature_format == "binary")
    image_attrs = opts.path("image_attributes", required=False) if with_image_attributes else None
    return io.load_features(opts.path("features"), opts.feature_format, labels, bool(opts.l2), image_attrs)


def _training_inputs(opts):
    t = _taxonomy(opts)
    sig = _signatures(opts)
    data = _features(opts, with_image_attributes=True)
    seen = t.seen_leaves
    train = data.select_classes(seen)
    if opts.attr_mode == PER_IMAGE:
        if train.attribute_labels is None:
            raise InputError("--attr-mode per-image needs --image-attributes")
        occ = class_occurrence(train.attribute_labels, train.classes, train.attributes, classes=seen)
        seen_sig = binarize_occurrence(occ)
    else:
        seen_sig = sig.select(seen)
    return t, sig, seen_sig, train


# -- commands -----------------------------------------------------------------

def cmd_propagate(opts):
    t = _taxonomy(opts)
    sig = _signatures(opts)
    table = propagate(t, sig.select([z for z in t.seen_leaves + t.unseen_leaves if z in sig]))
    out = opts.out_dir()
    io.write_node_table(out / "node_attributes.csv", table)
    if opts.features is not None:
        data = _features(opts, with_image_attributes=True).select_classes(t.seen_leaves)
        sets = SupportSets(t, table, data, sig.select(t.seen_leaves), opts.attr_mode)
        rows = support_size_rows(sets)
        io._write_csv(out / "support_sizes.csv", ["node_id", "attribute", "size"], rows)
    return {"nodes": len(table.nodes), "attributes": len(table.attributes)}


def cmd_train(opts):
    t, _, seen_sig, train = _training_inputs(opts)
    config = opts.train_config()
    table = propagate(t, seen_sig)
    bank = train_model_bank(t, table, train, seen_sig, config)
    out = opts.out_dir()
    io.save_model_bank(bank, out / "model_bank.json")
    io._write_csv(out / "skipped.csv", ["node_id", "attribute", "reason"], bank.skipped)
    return {"classifiers": len(bank), "skipped": len(bank.skipped)}


def cmd_predict(opts):
    t = _taxonomy(opts)
    data = _features(opts)
    bank = io.load_model_bank(opts.path("model"), data.n_features)
    if bank.table is None:
        raise InputError("model bank carries no node attribute table")
    method = opts.method
    if method not in METHODS:
        raise InputError(f"--method must be one of {', '.join(METHODS)}")
    fallback = bool(opts.fallback_parent)
    sig = None if fallback else _signatures(opts)
    if opts.labels is not None:
        data = data.select_classes(t.unseen_leaves)
        if data.n_samples == 0:
            raise InputError("no labeled samples of unseen classes to score")
    scores = zero_shot_scores(method, bank, t, sig, data.X, data.sample_ids.tolist(),
                              normalize=not opts.no_normalize, fallback_parent=fallback, table=bank.table)
    preds = classify(scores)
    out = opts.out_dir()
    io.save_predictions(out / "predictions.csv", scores, preds)
    return {"samples": len(preds), "classes": len(scores.columns)}


def _write_report(out: Path, name: str, report):
    io.write_json(out / f"{name}.json", report.to_dict())
    (out / f"{name}.txt").write_text(report.format_table(), encoding="utf-8")
    rows = ([c, *map(str, row)] for c, row in zip(report.classes, report.confusion))
    io._write_csv(out / f"{name}_confusion.csv", ["class_id", *report.classes], rows)


def cmd_eval(opts):
    scores, preds = io.load_predictions(opts.path("predictions"))
    ids, classes = io.read_labels(opts.path("labels"))
    lookup = dict(zip(ids, classes))
    missing = [s for s in scores.sample_ids if s not in lookup]
    if missing:
        raise InputError(f"no ground truth for samples {missing[:5]}")
    gt = [lookup[s] for s in scores.sample_ids]
    report = evaluate(scores, gt, preds, balanced=True)
    _write_report(opts.out_dir(), "report", report)
    sys.stdout.write(report.format_table())
    return {"accuracy": report.accuracy}


def _spec(opts):
    """Synthetic spec from the config file's ``spec`` object; ``--seed`` sets its seed."""
    doc = dict(opts.file_config.get("spec", {}))
    seed = opts._args.seed if opts._args.seed is not None else opts.file_config.get("seed")
    if seed is not None:
        doc["seed"] = int(seed)
    try:
        spec = SynthSpec(**doc)
    except TypeError as exc:
        raise InputError(f"bad synthetic spec: {exc}") from exc
    spec.validate()
    return spec


def cmd_bench(opts):
    spec = _spec(opts)
    config = opts.train_config(seed=0)
    bench, run = run_benchmark(spec, config)
    out = opts.out_dir()
    rows = benchmark_table(bench, run)
    for name, s in run.scores.items():
        io.save_predictions(out / f"predictions_{name}.csv", s, classify(s))
        _write_report(out, f"report_{name}", run.reports[name])
    io.write_json(out / "bench.json", {"spec": spec.to_dict(), "config": config.to_dict(), "methods": rows})
    lines = [f"{'method':<14}{'accuracy':>10}{'class AUC':>11}"]
    lines += [f"{r['method']:<14}{100 * r['accuracy']:>10.2f}{r['mean_class_auc']:>11.4f}" for r in rows]
    lines.append(f"chance {100 * rows[0]['chance']:.2f}")
    table = "\n".join(lines) + "\n"
    (out / "bench.txt").write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return {r["method"]: r["accuracy"] for r in rows}


def _sizes(opts):
    sizes = opts.sizes
    if sizes is None:
        return None
    if isinstance(sizes, str):
        try:
            sizes = [int(s) for s in sizes.split(",") if s.strip()]
        except ValueError:
            raise InputError(f"--sizes: cannot parse {opts.sizes!r}") from None
    return [int(s) for s in sizes]


def cmd_sweep(opts):
    repeats = int(opts.repeats)
    if opts.taxonomy is None:
        spec = _spec(opts)
        rows = sweep(spec, _sizes(opts), repeats, opts.train_config(seed=0))
    else:
        t = _taxonomy(opts)
        sig = _signatures(opts)
        data = _features(opts, with_image_attributes=True)
        rows = sweep_dataset(t, sig, data, data, _sizes(opts), repeats, int(opts.seed), opts.train_config())
    out = opts.out_dir()
    header = ["n_seen", "n_unseen", "repeat", "method", "accuracy", "mean_class_auc"]
    io._write_csv(out / "sweep.csv", header,
                  ([r[h] if h not in ("accuracy", "mean_class_auc") else format(r[h], ".9g") for h in header]
                   for r in rows))
    margins = sweep_margins(rows)
    for n, m in margins:
        sys.stdout.write(f"n_seen {n:>4}  hat-dap margin {100 * m:+.2f}\n")
    return {"rows": len(rows)}


def cmd_synth(opts):
    spec = _spec(opts)
    bench = generate(spec)
    out = opts.out_dir()
    io.save_taxonomy(bench.taxonomy, out / "taxonomy.json")
    io.write_attribute_matrix(out / "class_attributes.csv", bench.signatures)
    io.save_split(io.SplitSpec(tuple(bench.seen), tuple(bench.unseen)), out / "split.json")
    binary = opts.feature_format == "binary"
    for name, data in (("train", bench.train), ("test", bench.test)):
        if binary:
            io.write_features_binary(out / f"{name}_features.bin", data.X)
        else:
            io.write_features_csv(out / f"{name}_features.csv", data.sample_ids, data.X)
        io.write_labels(out / f"{name}_labels.csv", data.sample_ids, data.classes)
        rows = ([sid, *map(str, row)] for sid, row in zip(data.sample_ids, data.attribute_labels))
        io._write_csv(out / f"{name}_image_attributes.csv", ["sample_id", *data.attributes], rows)
    io.write_json(out / "spec.json", spec.to_dict())
    return {"seen": len(bench.seen), "unseen": len(bench.unseen)}


COMMANDS = {
    "propagate": cmd_propagate,
    "train": cmd_train,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "sweep": cmd_sweep,
    "synth": cmd_synth,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hattransfer", description="Hierarchical attribute transfer for zero-shot learning.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file with option values; flags win")
        p.add_argument("--out", help="output directory (default: current directory)")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int, help="parallel training threads")

    def data(p):
        p.add_argument("--taxonomy")
        p.add_argument("--split", help="JSON {seen: [...], unseen: [...]}; overrides leaf kinds")
        p.add_argument("--features")
        p.add_argument("--feature-format", choices=("csv", "binary"))
        p.add_argument("--labels", help="CSV sample_id,class_id")
        p.add_argument("--l2", action="store_const", const=True, help="L2-normalize feature rows")
        p.add_argument("--attributes", help="class attribute CSV class_id,<attrs>")
        p.add_argument("--attr-kind", choices=("signature", "occurrence"))

    def training(p):
        p.add_argument("--attr-mode", choices=(PER_CLASS, PER_IMAGE))
        p.add_argument("--image-attributes", help="per-image attribute CSV sample_id,<attrs>")
        p.add_argument("--c-grid", help="comma-separated cost grid")
        p.add_argument("--folds", type=int)

    p = sub.add_parser("propagate", help="propagate seen-class attributes up the taxonomy")
    common(p), data(p)
    p.add_argument("--attr-mode", choices=(PER_CLASS, PER_IMAGE))
    p.add_argument("--image-attributes")

    p = sub.add_parser("train", help="train the attribute classifier bank")
    common(p), data(p), training(p)

    p = sub.add_parser("predict", help="score unseen classes")
    common(p), data(p)
    p.add_argument("--model", help="model bank JSON from train")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--no-normalize", action="store_const", const=True)
    p.add_argument("--fallback-parent", action="store_const", const=True,
                   help="describe unseen classes by their parent's attributes")

    p = sub.add_parser("eval", help="evaluate a predictions file")
    common(p)
    p.add_argument("--predictions")
    p.add_argument("--labels")

    p = sub.add_parser("bench", help="synthetic benchmark of all methods")
    common(p), training(p)
    p.add_argument("--feature-format", choices=("csv", "binary"))

    p = sub.add_parser("sweep", help="accuracy against the number of seen classes")
    common(p), data(p), training(p)
    p.add_argument("--sizes", help="comma-separated numbers of seen classes")
    p.add_argument("--repeats", type=int)

    p = sub.add_parser("synth", help="write a synthetic benchmark to disk")
    common(p)
    p.add_argument("--feature-format", choices=("csv", "binary"))
    return parser


def _load_config(path):
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"--config: cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"--config: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise InputError("--config must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in doc.items()}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        args.file_config = _load_config(args.config)
        opts = Options(args)
        opts.file_config = args.file_config
        COMMANDS[args.command](opts)
    except InputError as exc:
        sys.stderr.write(json.dumps(exc.to_record()) + "\n")
        return 2
    except HATError as exc:
        sys.stderr.write(json.dumps(exc.to_record()) + "\n")
        return 3
    except OSError as exc:
        sys.stderr.write(json.dumps({"error": "validation", "type": type(exc).__name__, "message": str(exc)}) + "\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
