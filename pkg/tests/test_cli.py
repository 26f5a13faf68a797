import csv
import json

import numpy as np
import pytest

from hattransfer.cli import main
from hattransfer.io import load_predictions, load_taxonomy, save_taxonomy
from hattransfer.taxonomy import INTERNAL, Node, Taxonomy

SMALL = {"depth": 2, "branching": 4, "feature_dim": 8, "n_attributes": 6, "samples_per_class": 12,
         "unseen_fraction": 0.25}


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def small_config(tmp_path):
    p = tmp_path / "config.json"
    p.write_text(json.dumps({"spec": SMALL, "c-grid": "0.1,1,10", "folds": 3}))
    return p


@pytest.fixture
def synth_dir(tmp_path, small_config):
    out = tmp_path / "data"
    assert run("synth", "--config", small_config, "--out", out, "--seed", 3) == 0
    return out


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_synth_writes_standard_files(synth_dir):
    for name in ("taxonomy.json", "class_attributes.csv", "split.json", "train_features.csv",
                 "train_labels.csv", "test_features.csv", "test_image_attributes.csv", "spec.json"):
        assert (synth_dir / name).exists(), name
    assert json.loads((synth_dir / "spec.json").read_text())["seed"] == 3


def train_predict(d, out, method="hat", taxonomy=None, extra=()):
    taxonomy = taxonomy or d / "taxonomy.json"
    assert run("train", "--taxonomy", taxonomy, "--features", d / "train_features.csv",
               "--labels", d / "train_labels.csv", "--attributes", d / "class_attributes.csv",
               "--c-grid", "0.1,1,10", "--folds", 3, "--out", out) == 0
    assert run("predict", "--taxonomy", taxonomy, "--features", d / "test_features.csv",
               "--labels", d / "test_labels.csv", "--attributes", d / "class_attributes.csv",
               "--model", out / "model_bank.json", "--method", method, "--out", out, *extra) == 0
    return out / "predictions.csv"


def test_train_predict_eval_roundtrip(synth_dir, tmp_path, capsys):
    out = tmp_path / "run"
    preds = train_predict(synth_dir, out)
    assert (out / "skipped.csv").exists()
    assert run("eval", "--predictions", preds, "--labels", synth_dir / "test_labels.csv", "--out", out) == 0
    report = json.loads((out / "report.json").read_text())
    assert 0.0 <= report["accuracy"] <= 1.0
    assert "normalized multi-class accuracy" in capsys.readouterr().out
    assert (out / "report_confusion.csv").exists()


def test_fallback_parent_predicts_without_signatures(synth_dir, tmp_path):
    out = tmp_path / "fb"
    preds = train_predict(synth_dir, out, extra=("--fallback-parent",))
    scores, _ = load_predictions(preds)
    assert len(scores.columns) == len(json.loads((synth_dir / "split.json").read_text())["unseen"])


def test_predict_ens_equals_hat_on_flat_taxonomy(synth_dir, tmp_path):
    t = load_taxonomy(synth_dir / "taxonomy.json")
    leaves = [n for n in t if t.kind(n) != INTERNAL]
    flat = Taxonomy.from_edges([Node("root", "root", INTERNAL)] + [t.nodes[z] for z in leaves],
                               [("root", z) for z in leaves])
    save_taxonomy(flat, tmp_path / "flat.json")
    hat, _ = load_predictions(train_predict(synth_dir, tmp_path / "hat", "hat", tmp_path / "flat.json"))
    ens, _ = load_predictions(train_predict(synth_dir, tmp_path / "ens", "ens", tmp_path / "flat.json"))
    assert hat.columns == ens.columns
    np.testing.assert_allclose(hat.values, ens.values, rtol=1e-8, atol=1e-8)


def test_propagate_writes_node_table(synth_dir, tmp_path):
    out = tmp_path / "prop"
    assert run("propagate", "--taxonomy", synth_dir / "taxonomy.json", "--attributes",
               synth_dir / "class_attributes.csv", "--features", synth_dir / "train_features.csv",
               "--labels", synth_dir / "train_labels.csv", "--out", out) == 0
    rows = read_rows(out / "node_attributes.csv")
    assert rows[0].keys() >= {"node_id"}
    assert read_rows(out / "support_sizes.csv")


def test_per_image_training(synth_dir, tmp_path):
    out = tmp_path / "img"
    assert run("train", "--taxonomy", synth_dir / "taxonomy.json", "--features", synth_dir / "train_features.csv",
               "--labels", synth_dir / "train_labels.csv", "--attributes", synth_dir / "class_attributes.csv",
               "--attr-mode", "per-image", "--image-attributes", synth_dir / "train_image_attributes.csv",
               "--out", out) == 0
    assert json.loads((out / "model_bank.json").read_text())["classifiers"]


def test_missing_required_flag_is_validation_error(tmp_path, capsys):
    assert run("train", "--out", tmp_path) == 2
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record["error"] == "validation"


def test_missing_file_is_validation_error(tmp_path, capsys):
    assert run("train", "--taxonomy", tmp_path / "nope.json", "--out", tmp_path) == 2
    assert "does not exist" in json.loads(capsys.readouterr().err)["message"]


def test_bad_config_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("[1]")
    assert run("bench", "--config", p, "--out", tmp_path) == 2


def test_dimension_mismatch_exit_code(synth_dir, tmp_path, capsys):
    out = tmp_path / "run"
    train_predict(synth_dir, out)
    # a bank trained on 8-d features applied to 3-d features
    f = tmp_path / "f.csv"
    f.write_text("sample_id,f0,f1,f2\na,1,2,3\nb,3,2,1\n")
    code = run("predict", "--taxonomy", synth_dir / "taxonomy.json", "--features", f,
               "--attributes", synth_dir / "class_attributes.csv", "--model", out / "model_bank.json",
               "--out", out)
    assert code == 2
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["type"] == "DimensionMismatch"


def test_runtime_error_exit_code(synth_dir, tmp_path, capsys):
    out = tmp_path / "run"
    train_predict(synth_dir, out)
    # without classifiers no unseen class can be scored
    doc = json.loads((out / "model_bank.json").read_text())
    doc["classifiers"] = []
    (out / "empty.json").write_text(json.dumps(doc))
    code = run("predict", "--taxonomy", synth_dir / "taxonomy.json", "--features", synth_dir / "test_features.csv",
               "--attributes", synth_dir / "class_attributes.csv", "--model", out / "empty.json", "--out", out)
    assert code == 3
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["type"] == "ClassUnscorable"


def test_flags_win_over_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"spec": SMALL, "seed": 1}))
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("synth", "--config", cfg, "--out", a) == 0
    assert run("synth", "--config", cfg, "--seed", 2, "--out", b) == 0
    assert json.loads((a / "spec.json").read_text())["seed"] == 1
    assert json.loads((b / "spec.json").read_text())["seed"] == 2


def test_bench_is_byte_identical_across_workers(small_config, tmp_path):
    a, b = tmp_path / "w1", tmp_path / "w3"
    assert run("bench", "--config", small_config, "--workers", 1, "--out", a) == 0
    assert run("bench", "--config", small_config, "--workers", 3, "--out", b) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    assert "predictions_hat.csv" in names and "bench.json" in names
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_sweep_bookkeeping(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"spec": {**SMALL, "depth": 2, "branching": 4}, "folds": 3}))
    assert run("sweep", "--config", cfg, "--sizes", "4,8", "--repeats", 1, "--out", tmp_path) == 0
    rows = read_rows(tmp_path / "sweep.csv")
    by_method = {}
    for r in rows:
        by_method.setdefault(r["method"], []).append(r)
    assert set(by_method) == {"hat", "dap", "ens"}
    for method, rs in by_method.items():
        assert len(rs) == 2
        assert [int(r["n_seen"]) for r in rs] == [4, 8]
        unseen = [int(r["n_unseen"]) for r in rs]
        assert unseen == sorted(unseen, reverse=True)
