"""Random problem builders and brute-force oracles shared by the tests."""

import numpy as np

from hattransfer.annotation import AttributeSignatureMatrix
from hattransfer.dataset import Dataset
from hattransfer.taxonomy import INTERNAL, SEEN, UNSEEN, Node, Taxonomy


def random_tree(rng, max_depth=6, max_leaves=64, p_branch=0.55, max_children=4, single_child=True):
    """Random taxonomy as ``(internal ids, leaf ids, parent map)``.

    Internal nodes may have one child when ``single_child`` is set.
    """
    parent = {}
    internal, leaves = ["r"], []
    frontier = [("r", 0)]
    counter = 0
    while frontier:
        n, depth = frontier.pop(0)
        lo = 1 if single_child else 2
        k = int(rng.integers(lo, max_children + 1))
        for i in range(k):
            counter += 1
            c = f"v{counter:03d}"
            parent[c] = n
            # worst case every open node still yields max_children leaves
            worst = len(leaves) + (len(frontier) + 1) * max_children + (k - i - 1)
            if depth + 1 < max_depth and worst <= max_leaves and rng.uniform() < p_branch:
                internal.append(c)
                frontier.append((c, depth + 1))
            else:
                leaves.append(c)
    return internal, leaves, parent


def random_taxonomy(rng, n_unseen_frac=0.3, **kw):
    internal, leaves, parent = random_tree(rng, **kw)
    unseen = {z for z in leaves if rng.uniform() < n_unseen_frac}
    if len(unseen) == len(leaves):
        unseen.discard(leaves[0])
    nodes = [Node(n, n, INTERNAL) for n in internal]
    nodes += [Node(z, z, UNSEEN if z in unseen else SEEN) for z in leaves]
    return Taxonomy.from_edges(nodes, [(p, c) for c, p in parent.items()])


def random_signatures(rng, classes, n_attr, p=0.4):
    attrs = tuple(f"a{j}" for j in range(n_attr))
    values = (rng.uniform(size=(len(classes), n_attr)) < p).astype(np.uint8)
    return AttributeSignatureMatrix(tuple(classes), attrs, values)


def random_dataset(rng, t, sig, d=3, max_per_class=4, p_label=0.6):
    ids, X, ys, labels = [], [], [], []
    k = 0
    for z in t.seen_leaves:
        for _ in range(int(rng.integers(1, max_per_class + 1))):
            ids.append(f"s{k:04d}")
            k += 1
            ys.append(z)
            X.append(rng.normal(size=d))
            labels.append((rng.uniform(size=len(sig.attributes)) < p_label).astype(np.uint8))
    return Dataset(np.array(ids, dtype=object), np.array(X), np.array(ys, dtype=object),
                   np.array(labels), sig.attributes)


def parent_walk(t, n):
    out = []
    p = t.parent(n)
    while p is not None:
        out.append(p)
        p = t.parent(p)
    return out[::-1]


def bfs_descendants(t, n):
    seen, queue = set(), list(t.children(n))
    while queue:
        c = queue.pop()
        seen.add(c)
        queue.extend(t.children(c))
    return seen


def propagate_oracle(t, sig):
    """Node -> OR of the rows of all seen leaves at or below it."""
    out = {}
    M = len(sig.attributes)
    for n in t:
        if t.kind(n) == UNSEEN:
            out[n] = sig.row(n) if n in sig else np.zeros(M, np.uint8)
            continue
        row = np.zeros(M, np.uint8)
        for leaf in t.seen_leaves:
            if leaf == n or n in parent_walk(t, leaf):
                row |= sig.row(leaf)
        out[n] = row
    return out


def support_oracle(t, table, data, sig, n, m, mode="per-class"):
    """Samples of seen leaves at or below ``n`` labeled with ``m``."""
    if not table.value(n, m):
        return set()
    out = set()
    for sid, z, lab in zip(data.sample_ids, data.classes, data.attribute_labels):
        if z != n and n not in parent_walk(t, z):
            continue
        if not table.value(z, m):
            continue
        if mode == "per-class":
            ok = sig.value(z, m) == 1
        else:
            ok = lab[data.attributes.index(m)] == 1
        if ok:
            out.add(sid)
    return out


def pairwise_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


# acceptance results, printed in the terminal summary by conftest
ACCEPTANCE = []


def report(name, ok, detail):
    status = ok if isinstance(ok, str) else "PASS" if ok else "FAIL"
    line = f"{status:<4}  {name}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok
