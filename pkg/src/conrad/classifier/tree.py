"""Information-gain decision tree over categorical features plus one numeric.

Categorical features split multiway (one branch per value seen at the node,
unseen values fall back to the node's own distribution). Numeric features
split on the best binary threshold. Leaves hold Laplace-smoothed class
probabilities.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .features import FEATURES, LABELS, NUMERIC, FeatureVector, LabeledExample

MODEL_FORMAT = "conrad.tree"
MODEL_VERSION = 1


def entropy(counts) -> float:
    """Shannon entropy in bits of a vector of class counts."""
    c = np.asarray(counts, dtype=float)
    n = c.sum()
    if n <= 0:
        return 0.0
    p = c[c > 0] / n
    return float(-(p * np.log2(p)).sum())


def _row_entropy(tab: np.ndarray) -> np.ndarray:
    n = tab.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(n > 0, tab / np.maximum(n, 1), 0.0)
        logs = np.where(p > 0, np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return -(p * logs).sum(axis=1)


def information_gain(parent, children) -> float:
    """H(parent) minus the size-weighted entropy of the children partition."""
    parent = np.asarray(parent, dtype=float)
    n = parent.sum()
    if n <= 0:
        return 0.0
    rest = sum(np.sum(ch) / n * entropy(ch) for ch in children)
    return entropy(parent) - rest


@dataclass
class TreeConfig:
    max_depth: int = 12
    min_leaf: int = 5
    min_gain: float = 1e-6
    epsilon: float = 1.0  # Laplace pseudo-count

    def __post_init__(self):
        if self.max_depth < 0 or self.min_leaf < 1 or self.min_gain < 0 or self.epsilon < 0:
            raise ValueError(f"bad tree config {self}")


# --------------------------------------------------------------------------
# encoding
# --------------------------------------------------------------------------

@dataclass
class Encoded:
    """Column-major view of feature vectors: int codes for categoricals."""
    columns: dict[str, np.ndarray]
    vocab: dict[str, list[str]]
    y: np.ndarray | None
    classes: tuple[str, ...]

    def __len__(self):
        return len(next(iter(self.columns.values()))) if self.columns else 0


def encode(vectors: Sequence[FeatureVector], labels: Sequence[str] | None = None,
           classes: Sequence[str] = LABELS) -> Encoded:
    classes = tuple(classes)
    cols, vocab = {}, {}
    for f in FEATURES:
        vals = [v.value(f) for v in vectors]
        if f in NUMERIC:
            cols[f] = np.asarray(vals, dtype=float)
        else:
            uniq = sorted(set(vals))
            index = {u: i for i, u in enumerate(uniq)}
            cols[f] = np.fromiter((index[v] for v in vals), dtype=np.int64, count=len(vals))
            vocab[f] = uniq
    y = None
    if labels is not None:
        pos = {c: i for i, c in enumerate(classes)}
        try:
            y = np.fromiter((pos[l] for l in labels), dtype=np.int64, count=len(labels))
        except KeyError as exc:
            raise ValueError(f"label {exc.args[0]!r} not among classes {classes}") from None
    return Encoded(cols, vocab, y, classes)


def encode_examples(examples: Sequence[LabeledExample], classes: Sequence[str] = LABELS) -> Encoded:
    return encode([e.features for e in examples], [e.label for e in examples], classes)


# --------------------------------------------------------------------------
# model
# --------------------------------------------------------------------------

@dataclass
class Node:
    counts: np.ndarray
    feature: str | None = None
    branches: dict[str, "Node"] | None = None   # categorical split
    threshold: float | None = None               # numeric split: <= goes left
    left: "Node | None" = None
    right: "Node | None" = None
    gain: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    def to_json(self) -> dict:
        d = {"counts": [int(c) for c in self.counts]}
        if self.feature is None:
            return d
        d["feature"] = self.feature
        d["gain"] = self.gain
        if self.branches is not None:
            d["branches"] = {k: self.branches[k].to_json() for k in sorted(self.branches)}
        else:
            d["threshold"] = self.threshold
            d["le"] = self.left.to_json()
            d["gt"] = self.right.to_json()
        return d

    @classmethod
    def from_json(cls, d: dict) -> "Node":
        node = cls(np.asarray(d["counts"], dtype=np.int64))
        if "feature" in d:
            node.feature = d["feature"]
            node.gain = float(d.get("gain", 0.0))
            if "branches" in d:
                node.branches = {k: cls.from_json(v) for k, v in d["branches"].items()}
            else:
                node.threshold = float(d["threshold"])
                node.left = cls.from_json(d["le"])
                node.right = cls.from_json(d["gt"])
        return node


@dataclass
class TreeModel:
    root: Node
    classes: tuple[str, ...]
    features: tuple[str, ...]
    config: TreeConfig = field(default_factory=TreeConfig)
    priors: tuple[float, ...] = ()

    def smooth(self, counts: np.ndarray) -> np.ndarray:
        eps = self.config.epsilon
        k = len(self.classes)
        n = counts.sum()
        if n + eps * k == 0:
            return np.full(k, 1.0 / k)
        return (counts + eps) / (n + eps * k)

    def depth(self) -> int:
        def walk(n: Node) -> int:
            if n.is_leaf:
                return 0
            kids = list(n.branches.values()) if n.branches is not None else [n.left, n.right]
            return 1 + max(walk(c) for c in kids)
        return walk(self.root)

    def n_leaves(self) -> int:
        def walk(n: Node) -> int:
            if n.is_leaf:
                return 1
            kids = list(n.branches.values()) if n.branches is not None else [n.left, n.right]
            return sum(walk(c) for c in kids)
        return walk(self.root)

    def predict_proba(self, data: Encoded | Sequence[FeatureVector]) -> np.ndarray:
        enc = data if isinstance(data, Encoded) else encode(list(data))
        out = np.empty((len(enc), len(self.classes)))
        self._route(self.root, enc, np.arange(len(enc)), out)
        return out

    def _route(self, node: Node, enc: Encoded, idx: np.ndarray, out: np.ndarray) -> None:
        if len(idx) == 0:
            return
        if node.is_leaf:
            out[idx] = self.smooth(node.counts)
            return
        col = enc.columns[node.feature][idx]
        if node.branches is None:
            mask = col <= node.threshold
            self._route(node.left, enc, idx[mask], out)
            self._route(node.right, enc, idx[~mask], out)
            return
        vocab = enc.vocab[node.feature]
        for code in np.unique(col):
            sub = idx[col == code]
            child = node.branches.get(vocab[code])
            if child is None:
                out[sub] = self.smooth(node.counts)  # unseen value: fallback branch
            else:
                self._route(child, enc, sub, out)

    def predict(self, v: FeatureVector) -> dict[str, float]:
        probs = self.predict_proba([v])[0]
        return {c: float(p) for c, p in zip(self.classes, probs)}

    def to_json(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "classes": list(self.classes),
            "features": list(self.features),
            "config": asdict(self.config),
            "priors": list(self.priors),
            "root": self.root.to_json(),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, d: dict) -> "TreeModel":
        if d.get("format") != MODEL_FORMAT:
            raise ValueError("not a conrad tree model")
        if d.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')}")
        return cls(Node.from_json(d["root"]), tuple(d["classes"]), tuple(d["features"]),
                   TreeConfig(**d["config"]), tuple(d.get("priors", ())))


# --------------------------------------------------------------------------
# induction
# --------------------------------------------------------------------------

class _Grower:
    def __init__(self, enc: Encoded, features: Sequence[str], cfg: TreeConfig):
        self.enc = enc
        self.features = tuple(features)
        self.cfg = cfg
        self.k = len(enc.classes)

    def best_split(self, idx: np.ndarray, used: frozenset):
        y = self.enc.y[idx]
        k, n = self.k, len(idx)
        parent = np.bincount(y, minlength=k)
        h = entropy(parent)
        best = None
        for f in self.features:
            col = self.enc.columns[f][idx]
            if f in NUMERIC:
                cand = self._threshold(col, y, h)
                if cand and (best is None or cand[0] > best[0]):
                    best = (cand[0], f, cand[1])
                continue
            if f in used:
                continue
            v = len(self.enc.vocab[f])
            tab = np.bincount(col * k + y, minlength=v * k).reshape(v, k)
            sizes = tab.sum(axis=1)
            present = sizes > 0
            if present.sum() < 2 or (sizes >= self.cfg.min_leaf).sum() < 2:
                continue
            gain = h - float((sizes[present] / n * _row_entropy(tab[present])).sum())
            if best is None or gain > best[0]:
                best = (gain, f, None)
        return best

    def _threshold(self, col: np.ndarray, y: np.ndarray, h: float):
        order = np.argsort(col, kind="stable")
        vals, ys = col[order], y[order]
        n = len(vals)
        onehot = np.zeros((n, self.k))
        onehot[np.arange(n), ys] = 1
        left = np.cumsum(onehot, axis=0)[:-1]          # split after position i
        total = onehot.sum(axis=0)
        right = total - left
        nl = np.arange(1, n)
        ok = (vals[:-1] != vals[1:]) & (nl >= self.cfg.min_leaf) & (n - nl >= self.cfg.min_leaf)
        if not ok.any():
            return None
        pos = np.flatnonzero(ok)
        w = nl[pos] / n
        gains = h - (w * _row_entropy(left[pos]) + (1 - w) * _row_entropy(right[pos]))
        i = int(np.argmax(gains))
        p = pos[i]
        return float(gains[i]), float((vals[p] + vals[p + 1]) / 2)

    def grow(self, idx: np.ndarray, depth: int, used: frozenset) -> Node:
        counts = np.bincount(self.enc.y[idx], minlength=self.k)
        node = Node(counts)
        cfg = self.cfg
        if depth >= cfg.max_depth or np.count_nonzero(counts) <= 1 or len(idx) < 2 * cfg.min_leaf:
            return node
        best = self.best_split(idx, used)
        if best is None or best[0] < cfg.min_gain:
            return node
        gain, f, thr = best
        node.feature, node.gain = f, gain
        col = self.enc.columns[f][idx]
        if thr is not None:
            node.threshold = thr
            node.left = self.grow(idx[col <= thr], depth + 1, used)
            node.right = self.grow(idx[col > thr], depth + 1, used)
        else:
            vocab = self.enc.vocab[f]
            node.branches = {}
            for code in np.unique(col):
                node.branches[vocab[code]] = self.grow(idx[col == code], depth + 1, used | {f})
        return node


def train_tree(data: Encoded | Sequence[LabeledExample], features: Sequence[str] = FEATURES,
               config: TreeConfig | None = None, idx: np.ndarray | None = None,
               classes: Sequence[str] | None = None) -> TreeModel:
    """Greedy top-down induction. ``idx`` restricts training to a row subset."""
    cfg = config or TreeConfig()
    if isinstance(data, Encoded):
        enc = data
    else:
        data = list(data)
        if classes is None:
            present = {e.label for e in data}
            classes = tuple(c for c in LABELS if c in present)
        enc = encode_examples(data, classes)
    if enc.y is None:
        raise ValueError("training data has no labels")
    unknown = [f for f in features if f not in FEATURES]
    if unknown:
        raise ValueError(f"unknown features {unknown}")
    if idx is None:
        idx = np.arange(len(enc))
    if len(idx) == 0:
        raise ValueError("cannot train on empty input")
    root = _Grower(enc, features, cfg).grow(np.asarray(idx), 0, frozenset())
    priors = root.counts / root.counts.sum()
    return TreeModel(root, enc.classes, tuple(features), cfg, tuple(float(p) for p in priors))


def root_gains(data: Encoded, features: Sequence[str] = FEATURES,
               idx: np.ndarray | None = None) -> dict[str, float]:
    """Information gain of each feature as a root split (no leaf-size limits)."""
    idx = np.arange(len(data)) if idx is None else idx
    g = _Grower(data, features, TreeConfig(min_leaf=1, min_gain=0.0))
    y = data.y[idx]
    h = entropy(np.bincount(y, minlength=g.k))
    out = {}
    for f in features:
        col = data.columns[f][idx]
        if f in NUMERIC:
            cand = g._threshold(col, y, h)
            out[f] = cand[0] if cand else 0.0
        else:
            v = len(data.vocab[f])
            tab = np.bincount(col * g.k + y, minlength=v * g.k).reshape(v, g.k)
            sizes = tab.sum(axis=1)
            present = sizes > 0
            out[f] = h - float((sizes[present] / len(idx) * _row_entropy(tab[present])).sum())
    return out
