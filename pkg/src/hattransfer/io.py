"""Reading and writing the on-disk formats.

Features come as CSV (``sample_id,f0,...``) or as a ZSF1 binary file; class
labels always live in a sidecar CSV ``sample_id,class_id``. Every CSV is
UTF-8, comma-separated and has a header row.
"""

from __future__ import annotations

import csv
import json
import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .annotation import AttributeSignatureMatrix, NodeAttributeTable, OccurrenceMatrix
from .classifier import ModelBank
from .dataset import Dataset
from .exceptions import DimensionMismatch, InputError, NonFiniteFeature, ParseError, SchemaError
from .taxonomy import Taxonomy, parse_taxonomy
from .transfer import ScoreTable

MAGIC = b"ZSF1"
_HEADER = struct.Struct("<4sII")


def _read_csv(path) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not UTF-8 ({exc})") from exc
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in rows if r]
    if not rows:
        raise ParseError(f"{path}: missing header row")
    return [h.strip() for h in rows[0]], rows[1:]


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _parse_float(cell: str, where: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise ParseError(f"{where}: {cell!r} is not a number") from None


# -- taxonomy ---------------------------------------------------------------

def load_taxonomy(path) -> Taxonomy:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    return parse_taxonomy(text)


def save_taxonomy(t: Taxonomy, path) -> None:
    Path(path).write_text(json.dumps(t.to_dict(), indent=2) + "\n", encoding="utf-8")


# -- features and labels ------------------------------------------------------

def read_features_csv(path):
    """Return ``(sample_ids, X)`` from a ``sample_id,<features>`` CSV."""
    header, rows = _read_csv(path)
    d = len(header) - 1
    if d < 1:
        raise ParseError(f"{path}: expected sample_id plus at least one feature column")
    ids, X = [], []
    for k, row in enumerate(rows, start=2):
        if len(row) != d + 1:
            raise DimensionMismatch(f"{path}:{k}: {len(row) - 1} features, header declares {d}")
        ids.append(row[0])
        X.append([_parse_float(c, f"{path}:{k}") for c in row[1:]])
    return ids, np.array(X, dtype=np.float64).reshape(len(ids), d)


def write_features_csv(path, sample_ids, X) -> None:
    X = np.asarray(X, dtype=np.float64)
    header = ["sample_id"] + [f"f{j}" for j in range(X.shape[1])]
    _write_csv(path, header, ([sid] + [repr(float(v)) for v in row] for sid, row in zip(sample_ids, X)))


def read_features_binary(path) -> np.ndarray:
    """Read a ZSF1 file into a float32 ``(n, d)`` array."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    if len(raw) < _HEADER.size:
        raise ParseError(f"{path}: truncated header")
    magic, n, d = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 4 * n * d
    if len(raw) != expected:
        raise ParseError(f"{path}: {len(raw)} bytes, expected {expected} for n={n}, d={d}")
    return np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(n, d).copy()


def write_features_binary(path, X) -> None:
    X = np.ascontiguousarray(X, dtype="<f4")
    if X.ndim != 2:
        raise DimensionMismatch("feature matrix must be 2-D")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, X.shape[0], X.shape[1]))
        fh.write(X.tobytes())


def read_labels(path) -> tuple[list[str], list[str]]:
    header, rows = _read_csv(path)
    if header[:2] != ["sample_id", "class_id"]:
        raise ParseError(f"{path}: header must start with sample_id,class_id")
    for k, row in enumerate(rows, start=2):
        if len(row) < 2:
            raise ParseError(f"{path}:{k}: expected sample_id,class_id")
    return [r[0] for r in rows], [r[1] for r in rows]


def write_labels(path, sample_ids, classes) -> None:
    _write_csv(path, ["sample_id", "class_id"], zip(sample_ids, classes))


def l2_normalize(X) -> np.ndarray:
    """Scale each row to unit Euclidean norm; all-zero rows stay zero."""
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    return np.divide(X, norms, out=np.zeros_like(X), where=norms > 0)


def load_features(path, fmt: str = "csv", labels=None, l2: bool = False, attribute_labels=None) -> Dataset:
    """Load features (and optionally class labels and image-level attributes).

    For the binary format the sample ids come from the labels file, which
    is then required. Without labels every class id is the empty string.
    """
    if fmt == "csv":
        ids, X = read_features_csv(path)
    elif fmt == "binary":
        X = read_features_binary(path).astype(np.float64)
        if labels is None:
            raise InputError("binary features need a labels sidecar for sample ids")
        ids = None
    else:
        raise InputError(f"unknown feature format {fmt!r}")
    if not np.all(np.isfinite(X)):
        bad = int(np.argwhere(~np.isfinite(X))[0][0])
        raise NonFiniteFeature(f"{path}: non-finite feature value in row {bad}")
    classes = [""] * X.shape[0]
    if labels is not None:
        lab_ids, lab_classes = read_labels(labels)
        if ids is None:
            ids = lab_ids
            classes = lab_classes
        else:
            lookup = dict(zip(lab_ids, lab_classes))
            missing = [s for s in ids if s not in lookup]
            if missing:
                raise SchemaError(f"{labels}: no label for samples {missing[:5]}")
            classes = [lookup[s] for s in ids]
        if len(ids) != X.shape[0]:
            raise DimensionMismatch(f"{len(ids)} labels for {X.shape[0]} feature rows")
    if l2:
        X = l2_normalize(X)
    data = Dataset(np.array(ids, dtype=object), X, np.array(classes, dtype=object))
    if attribute_labels is not None:
        m = read_attribute_matrix(attribute_labels, id_column="sample_id", kind="signature")
        rows = [m.row_index(s) for s in data.sample_ids]
        data = data.with_attribute_labels(m.values[rows], m.attributes)
    return data


# -- attribute tables ---------------------------------------------------------

def read_attribute_matrix(path, id_column: str = "class_id", kind: str = "signature"):
    """Read ``<id_column>,<attr_1>,...``; ``kind`` is ``signature`` or ``occurrence``."""
    header, rows = _read_csv(path)
    if not header or header[0] != id_column:
        raise ParseError(f"{path}: first column must be {id_column}")
    attrs = tuple(header[1:])
    if not attrs:
        raise ParseError(f"{path}: no attribute columns")
    ids, vals = [], []
    for k, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise ParseError(f"{path}:{k}: {len(row)} cells, header has {len(header)}")
        ids.append(row[0])
        vals.append([_parse_float(c, f"{path}:{k}") for c in row[1:]])
    values = np.array(vals, dtype=np.float64).reshape(len(ids), len(attrs))
    if kind == "occurrence":
        return OccurrenceMatrix(tuple(ids), attrs, values)
    if kind == "signature":
        return AttributeSignatureMatrix(tuple(ids), attrs, values)
    raise InputError(f"unknown attribute kind {kind!r}")


def write_attribute_matrix(path, m, id_column: str = "class_id") -> None:
    integral = m.values.dtype.kind in "iu"
    fmt = (lambda v: str(int(v))) if integral else (lambda v: repr(float(v)))
    _write_csv(path, [id_column, *m.attributes],
               ([r, *(fmt(v) for v in m.values[i])] for i, r in enumerate(m.rows)))


def write_node_table(path, table: NodeAttributeTable) -> None:
    write_attribute_matrix(path, table, id_column="node_id")


# -- splits -------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    seen: tuple
    unseen: tuple

    def __post_init__(self):
        seen, unseen = tuple(map(str, self.seen)), tuple(map(str, self.unseen))
        if not seen:
            raise SchemaError("split has no seen classes")
        if not unseen:
            raise SchemaError("split has no unseen classes")
        overlap = set(seen) & set(unseen)
        if overlap:
            raise SchemaError(f"classes both seen and unseen: {sorted(overlap)[:5]}")
        if len(set(seen)) != len(seen) or len(set(unseen)) != len(unseen):
            raise SchemaError("duplicate class ids in split")
        object.__setattr__(self, "seen", seen)
        object.__setattr__(self, "unseen", unseen)

    def to_dict(self):
        return {"seen": list(self.seen), "unseen": list(self.unseen)}

    def check_covers(self, classes) -> None:
        missing = set(classes) - set(self.seen) - set(self.unseen)
        if missing:
            raise SchemaError(f"classes not covered by the split: {sorted(missing)[:5]}")


def load_split(path) -> SplitSpec:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("seen"), list) or not isinstance(doc.get("unseen"), list):
        raise SchemaError(f"{path}: expected an object with 'seen' and 'unseen' lists")
    return SplitSpec(tuple(doc["seen"]), tuple(doc["unseen"]))


def save_split(split: SplitSpec, path) -> None:
    Path(path).write_text(json.dumps(split.to_dict(), indent=2) + "\n", encoding="utf-8")


# -- predictions --------------------------------------------------------------

def _g9(v: float) -> str:
    return format(float(v), ".9g") if math.isfinite(v) else repr(float(v))


def save_predictions(path, scores: ScoreTable, predictions) -> None:
    """Write ``sample_id,predicted_class,<one score column per class>``."""
    cols = list(scores.columns)
    _write_csv(path, ["sample_id", "predicted_class", *cols],
               ([sid, pred, *map(_g9, row)] for sid, pred, row in zip(scores.sample_ids, predictions, scores.values)))


def load_predictions(path) -> tuple[ScoreTable, list]:
    header, rows = _read_csv(path)
    if header[:2] != ["sample_id", "predicted_class"]:
        raise SchemaError(f"{path}: header must start with sample_id,predicted_class")
    cols = tuple(header[2:])
    ids, preds, vals = [], [], []
    for k, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise SchemaError(f"{path}:{k}: {len(row)} cells, header has {len(header)}")
        ids.append(row[0])
        preds.append(row[1])
        vals.append([_parse_float(c, f"{path}:{k}") for c in row[2:]])
    values = np.array(vals, dtype=np.float64).reshape(len(ids), len(cols))
    return ScoreTable(tuple(ids), cols, values), preds


# -- model banks --------------------------------------------------------------

def save_model_bank(bank: ModelBank, path) -> None:
    """JSON with weights as shortest round-trip decimals."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(bank.to_dict(), fh, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


def load_model_bank(path, d: int | None = None) -> ModelBank:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from exc
    bank = ModelBank.from_dict(doc)
    if d is not None:
        bank.check_features(d)
    return bank


def write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
