"""Deterministic synthetic benchmark with hierarchy-dependent attribute appearance.

Every attribute has a base feature direction. Each internal node adds its
own random displacement of that direction, so the same attribute looks
different in different subtrees. A sample is the sum of its class's
attribute realizations plus isotropic Gaussian noise.

All randomness comes from generators keyed by ``(seed, purpose, node,
attribute)``, so output does not depend on traversal order.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass

import numpy as np

from .annotation import AttributeSignatureMatrix, OccurrenceMatrix, binarize_occurrence
from .dataset import Dataset
from .exceptions import InvalidSpec
from .taxonomy import INTERNAL, SEEN, UNSEEN, Node, Taxonomy

# weight of subtree membership against uniform noise before re-binarization
COVER_WEIGHT = 0.6
# an attribute covers between one and this many random subtrees
MAX_SUBTREES = 2


@dataclass(frozen=True)
class SynthSpec:
    depth: int = 3
    branching: int = 3
    feature_dim: int = 32
    n_attributes: int = 12
    samples_per_class: int = 30
    subtree_shift_scale: float = 1.0
    noise_sigma: float = 0.5
    unseen_fraction: float = 0.25
    seed: int = 7

    def n_leaves(self) -> int:
        return self.branching ** self.depth

    def n_unseen(self) -> int:
        return int(round(self.unseen_fraction * self.n_leaves()))

    def validate(self) -> None:
        if self.depth < 2:
            raise InvalidSpec("depth must be at least 2")
        if self.branching < 2:
            raise InvalidSpec("branching must be at least 2")
        if self.feature_dim < 1 or self.n_attributes < 1 or self.samples_per_class < 1:
            raise InvalidSpec("feature_dim, n_attributes and samples_per_class must be positive")
        if self.subtree_shift_scale < 0 or self.noise_sigma < 0:
            raise InvalidSpec("shift scale and noise must be non-negative")
        if not 0 < self.unseen_fraction < 1:
            raise InvalidSpec("unseen_fraction must lie in (0, 1)")
        n_unseen = self.n_unseen()
        if n_unseen < 2 or self.n_leaves() - n_unseen < 2:
            raise InvalidSpec("spec must leave at least two seen and two unseen classes")
        if not 0 <= self.seed < 2 ** 64:
            raise InvalidSpec("seed must be an unsigned 64-bit integer")

    def to_dict(self):
        return asdict(self)


@dataclass
class SynthBenchmark:
    spec: SynthSpec
    taxonomy: Taxonomy
    signatures: AttributeSignatureMatrix
    train: Dataset
    test: Dataset
    placement: dict  # unseen class -> parent node

    @property
    def seen(self):
        return self.taxonomy.seen_leaves

    @property
    def unseen(self):
        return self.taxonomy.unseen_leaves


def keyed_rng(seed: int, *key) -> np.random.Generator:
    digest = hashlib.blake2b("\x1f".join(map(str, key)).encode(), digest_size=16).digest()
    words = np.frombuffer(digest, dtype=np.uint32).tolist()
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF, seed >> 32, *words]))


def _node_id(path) -> str:
    return "n" + "".join(str(i) for i in path)


def build_tree(depth: int, branching: int):
    """Complete tree; returns ``(internal ids, leaf ids, parent map)``."""
    internal, leaves, parent = [], [], {}
    frontier = [()]
    for level in range(depth + 1):
        nxt = []
        for path in frontier:
            nid = _node_id(path)
            if path:
                parent[nid] = _node_id(path[:-1])
            if level == depth:
                leaves.append(nid)
            else:
                internal.append(nid)
                nxt.extend(path + (i,) for i in range(branching))
        frontier = nxt
    return internal, leaves, parent


def _ancestors(parent, n):
    out = []
    while n in parent:
        n = parent[n]
        out.append(n)
    return out[::-1]


def make_signatures(spec: SynthSpec, internal, leaves, parent) -> AttributeSignatureMatrix:
    """Each attribute covers one or two random subtrees, then noisy re-binarization."""
    attrs = [f"att{j:02d}" for j in range(spec.n_attributes)]
    candidates = [n for n in internal if n != _node_id(())]
    occ = np.zeros((len(leaves), len(attrs)))
    for j, m in enumerate(attrs):
        rng = keyed_rng(spec.seed, "subtree", m)
        k = 1 + int(rng.integers(MAX_SUBTREES))
        picks = rng.choice(len(candidates), size=k, replace=False)
        covered = set()
        for p in picks:
            top = candidates[p]
            covered.update(leaf for leaf in leaves if top in _ancestors(parent, leaf))
        for i, leaf in enumerate(leaves):
            noise = keyed_rng(spec.seed, "flip", leaf, m).uniform(0.0, 1.0)
            occ[i, j] = COVER_WEIGHT * (leaf in covered) + (1 - COVER_WEIGHT) * noise
    sig = binarize_occurrence(OccurrenceMatrix(tuple(leaves), tuple(attrs), occ))
    values = sig.values.copy()
    for i, leaf in enumerate(leaves):
        if not values[i].any():
            values[i, int(np.argmax(occ[i]))] = 1
    return AttributeSignatureMatrix(tuple(leaves), tuple(attrs), values)


def attribute_realizations(spec: SynthSpec, internal, leaves, parent, attrs) -> dict:
    """Feature direction of every attribute at every leaf: base plus ancestor displacements."""
    d = spec.feature_dim
    base = {}
    for m in attrs:
        v = keyed_rng(spec.seed, "base", m).standard_normal(d)
        base[m] = v / np.linalg.norm(v)
    shift = {}
    for n in internal:
        for m in attrs:
            step = keyed_rng(spec.seed, "shift", n, m).standard_normal(d)
            shift[n, m] = spec.subtree_shift_scale / np.sqrt(d) * step
    out = {}
    for leaf in leaves:
        anc = _ancestors(parent, leaf)
        for m in attrs:
            out[leaf, m] = base[m] + sum((shift[n, m] for n in anc), np.zeros(d))
    return out


def _sample_class(spec, leaf, signature_row, attrs, realizations, tag):
    """Samples of one class and their per-sample attribute labels."""
    d = spec.feature_dim
    rng = keyed_rng(spec.seed, tag, leaf)
    n = spec.samples_per_class
    active = np.array([bool(v) for v in signature_row])
    shown = np.broadcast_to(active, (n, len(attrs)))
    R = np.stack([realizations[leaf, m] for m in attrs])
    X = shown @ R + spec.noise_sigma * rng.standard_normal((n, d))
    ids = [f"{tag}-{leaf}-{i:04d}" for i in range(n)]
    return ids, X, shown.astype(np.uint8)


def generate(spec: SynthSpec) -> SynthBenchmark:
    spec.validate()
    internal, leaves, parent = build_tree(spec.depth, spec.branching)
    order = keyed_rng(spec.seed, "split").permutation(len(leaves))
    unseen = sorted(leaves[i] for i in order[: spec.n_unseen()])
    nodes = [Node(n, n, INTERNAL) for n in internal]
    nodes += [Node(n, n, UNSEEN if n in unseen else SEEN) for n in leaves]
    taxonomy = Taxonomy.from_edges(nodes, [(p, c) for c, p in parent.items()])

    sig = make_signatures(spec, internal, leaves, parent)
    attrs = list(sig.attributes)
    real = attribute_realizations(spec, internal, leaves, parent, attrs)

    def build(classes, tag):
        ids, Xs, Ls, ys = [], [], [], []
        for leaf in classes:
            i, X, shown = _sample_class(spec, leaf, sig.row(leaf), attrs, real, tag)
            ids += i
            Xs.append(X)
            Ls.append(shown)
            ys += [leaf] * len(i)
        return Dataset(np.array(ids, dtype=object), np.vstack(Xs), np.array(ys, dtype=object),
                       np.vstack(Ls), tuple(attrs))

    seen = [n for n in leaves if n not in unseen]
    train = build(seen, "train")
    test = build(unseen, "test")
    placement = {z: parent[z] for z in unseen}
    return SynthBenchmark(spec, taxonomy, sig, train, test, placement)


def sample_classes(spec: SynthSpec, classes, tag: str) -> Dataset:
    """Fresh samples of the given leaves under the same generator state.

    Distinct tags give independent draws; ``"train"`` and ``"test"`` reproduce
    the samples inside :func:`generate`.
    """
    spec.validate()
    internal, leaves, parent = build_tree(spec.depth, spec.branching)
    sig = make_signatures(spec, internal, leaves, parent)
    attrs = list(sig.attributes)
    real = attribute_realizations(spec, internal, leaves, parent, attrs)
    ids, Xs, Ls, ys = [], [], [], []
    for leaf in classes:
        i, X, shown = _sample_class(spec, leaf, sig.row(leaf), attrs, real, tag)
        ids += i
        Xs.append(X)
        Ls.append(shown)
        ys += [leaf] * len(i)
    return Dataset(np.array(ids, dtype=object), np.vstack(Xs), np.array(ys, dtype=object),
                   np.vstack(Ls), tuple(attrs))


def sample_leaf_split(leaves, n_seen: int, seed: int, repeat: int = 0):
    """Deterministic random choice of ``n_seen`` seen classes; the rest are unseen."""
    leaves = sorted(leaves)
    perm = keyed_rng(seed, "sweep", repeat).permutation(len(leaves))
    seen = sorted(leaves[i] for i in perm[:n_seen])
    return seen, sorted(set(leaves) - set(seen))


def generate_all_leaves(spec: SynthSpec):
    """Taxonomy skeleton, signatures and a sample set for every leaf (used by sweeps)."""
    spec.validate()
    internal, leaves, parent = build_tree(spec.depth, spec.branching)
    sig = make_signatures(spec, internal, leaves, parent)
    attrs = list(sig.attributes)
    real = attribute_realizations(spec, internal, leaves, parent, attrs)
    train, test = {}, {}
    for leaf in leaves:
        train[leaf] = _sample_class(spec, leaf, sig.row(leaf), attrs, real, "train")
        test[leaf] = _sample_class(spec, leaf, sig.row(leaf), attrs, real, "test")
    return internal, leaves, parent, sig, train, test
