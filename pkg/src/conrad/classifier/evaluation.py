"""Cross-validation and the two experiment protocols (id-sharing and pre-filter)."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .features import DISPLAY, FEATURES, FEATURES_B, LABELS, SUBSETS_A, SUBSETS_B, LabeledExample
from .metrics import METRICS, MetricReport, evaluate
from .tree import Encoded, TreeConfig, encode_examples, train_tree

log = logging.getLogger(__name__)

DEFAULT_SEED = 20180423
UNBALANCED_RATIOS = {"CSync": 0.016, "IdSharingNonCSync": 0.0073, "Other": 0.9767}


def stratified_folds(y: np.ndarray, k: int, seed: int = DEFAULT_SEED) -> np.ndarray:
    """Fold id per example; each class is shuffled then dealt round-robin."""
    y = np.asarray(y)
    if len(y) < k:
        raise ValueError(f"need at least {k} examples for {k}-fold CV, got {len(y)}")
    rng = np.random.default_rng(seed)
    folds = np.empty(len(y), dtype=np.int64)
    start = 0
    for c in np.unique(y):
        members = np.flatnonzero(y == c)
        if len(members) < k:
            log.warning("class %s has %d members, fewer than %d folds", c, len(members), k)
        members = rng.permutation(members)
        folds[members] = (start + np.arange(len(members))) % k
        start += len(members)
    return folds


def balance_indices(idx: np.ndarray, y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Downsample ``idx`` so every class present has the size of the smallest."""
    idx = np.asarray(idx)
    labels = y[idx]
    present = np.unique(labels)
    m = min(int((labels == c).sum()) for c in present)
    keep = [rng.choice(idx[labels == c], size=m, replace=False) for c in present]
    return np.sort(np.concatenate(keep))


@dataclass
class CVResult:
    report: MetricReport
    probs: np.ndarray
    folds: np.ndarray


def cross_validate(data: Encoded | Sequence[LabeledExample], k: int = 10, balance: bool = False,
                   features: Sequence[str] = FEATURES, config: TreeConfig | None = None,
                   seed: int = DEFAULT_SEED, classes: Sequence[str] | None = None) -> CVResult:
    """Stratified k-fold CV with predictions pooled over all held-out folds."""
    if not isinstance(data, Encoded):
        data = list(data)
        if classes is None:
            present = {e.label for e in data}
            classes = tuple(c for c in LABELS if c in present)
        data = encode_examples(data, classes)
    y = data.y
    folds = stratified_folds(y, k, seed)
    rng = np.random.default_rng(seed + 1)
    probs = np.zeros((len(y), len(data.classes)))
    for f in range(k):
        test = np.flatnonzero(folds == f)
        train = np.flatnonzero(folds != f)
        if len(test) == 0:
            continue
        if balance:
            train = balance_indices(train, y, rng)
        model = train_tree(data, features, config, idx=train)
        sub = Encoded({c: v[test] for c, v in data.columns.items()}, data.vocab, None, data.classes)
        probs[test] = model.predict_proba(sub)
    return CVResult(evaluate(y, probs, data.classes), probs, folds)


def _subset(data: Encoded, idx: np.ndarray) -> Encoded:
    return Encoded({c: v[idx] for c, v in data.columns.items()}, data.vocab, data.y[idx], data.classes)


# --------------------------------------------------------------------------
# experiment tables
# --------------------------------------------------------------------------

@dataclass
class Row:
    name: str
    features: tuple[str, ...]
    report: MetricReport

    def to_json(self) -> dict:
        return {"subset": self.name, "F": len(self.features), "features": list(self.features),
                "weighted": self.report.to_json()["weighted"], "detail": self.report.to_json()}


@dataclass
class ScenarioReport:
    scenario: str
    rows: list[Row]
    breakdown: MetricReport | None = None
    info: dict = field(default_factory=dict)

    def row(self, name: str) -> Row:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_json(self) -> dict:
        d = {"scenario": self.scenario, "rows": [r.to_json() for r in self.rows], **self.info}
        if self.breakdown is not None:
            d["breakdown"] = self.breakdown.to_json()
        return d

    def table(self) -> str:
        lines = ["subset           F  " + "  ".join(f"{m:>6}" for m in METRICS)]
        for r in self.rows:
            vals = "  ".join(f"{r.report.weighted[m]:6.3f}" for m in METRICS)
            lines.append(f"{r.name:<16} {len(r.features):>2}  {vals}")
        if self.breakdown is not None:
            lines.append("")
            lines.append("class            " + "  ".join(f"{m:>6}" for m in METRICS))
            for c in self.breakdown.classes:
                vals = "  ".join(f"{self.breakdown.per_class[c][m]:6.3f}" for m in METRICS)
                lines.append(f"{c:<16} {vals}")
            vals = "  ".join(f"{self.breakdown.weighted[m]:6.3f}" for m in METRICS)
            lines.append(f"{'weighted':<16} {vals}")
        return "\n".join(lines)


def _rows(data: Encoded, singles: Sequence[str], subsets: dict, k: int, balance: bool,
          config: TreeConfig | None, seed: int) -> list[Row]:
    rows = []
    for f in singles:
        res = cross_validate(data, k, balance, (f,), config, seed)
        rows.append(Row(DISPLAY[f], (f,), res.report))
    for name, feats in subsets.items():
        res = cross_validate(data, k, balance, feats, config, seed)
        rows.append(Row(name, tuple(feats), res.report))
    return rows


def run_scenario_a(examples: Sequence[LabeledExample], k: int = 10, seed: int = DEFAULT_SEED,
                   config: TreeConfig | None = None, balance: bool = False) -> ScenarioReport:
    """Binary CSync vs id-sharing-but-not-CSync over already identified shares."""
    classes = ("CSync", "IdSharingNonCSync")
    kept = [e for e in examples if e.label in classes]
    data = encode_examples(kept, classes)
    singles = ("no_of_params", "where_found", "status_code", "type_of_entity", "browser",
               "param_name", "entity_name")
    rows = _rows(data, singles, SUBSETS_A, k, balance, config, seed)
    return ScenarioReport("A", rows, info={"n": len(kept), "k": k, "seed": seed, "balance": balance})


def unbalanced_split(y: np.ndarray, classes: Sequence[str], ratios: dict[str, float],
                     test_fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Hold out a test set with the given class ratios; the rest is for training.

    The test size is the largest one the held-out pools can supply at the
    requested ratios.
    """
    pools, rest = {}, []
    for c, name in enumerate(classes):
        members = rng.permutation(np.flatnonzero(y == c))
        cut = int(round(len(members) * test_fraction))
        pools[name] = members[:cut]
        rest.append(members[cut:])
    total = min(len(pools[n]) / ratios[n] for n in classes if ratios.get(n, 0) > 0)
    test = []
    for name in classes:
        want = int(round(total * ratios.get(name, 0.0)))
        want = min(want, len(pools[name]))
        test.append(pools[name][:want])
        rest.append(pools[name][want:])
    return np.sort(np.concatenate(rest)), np.sort(np.concatenate(test))


def run_scenario_b(examples: Sequence[LabeledExample], k: int = 10, seed: int = DEFAULT_SEED,
                   config: TreeConfig | None = None, unbalanced_test: bool = True,
                   ratios: dict[str, float] | None = None, test_fraction: float = 0.3,
                   features: Sequence[str] = FEATURES_B) -> ScenarioReport:
    """Three-class task over every ID-carrying request.

    Table rows are 10-fold CV on a class-balanced sample. The extra
    ``Unbalanced`` row trains on balanced data and tests on an unseen split
    holding the original class ratios; its per-class detail is the breakdown.
    """
    ratios = ratios or UNBALANCED_RATIOS
    data = encode_examples(list(examples), LABELS)
    rng = np.random.default_rng(seed)
    info = {"n": len(data), "k": k, "seed": seed}

    breakdown = None
    train_pool = np.arange(len(data))
    if unbalanced_test:
        train_pool, test = unbalanced_split(data.y, LABELS, ratios, test_fraction, rng)
    balanced = balance_indices(train_pool, data.y, rng)
    bal = _subset(data, balanced)
    rows = _rows(bal, features, SUBSETS_B, k, False, config, seed)
    if unbalanced_test:
        model = train_tree(data, SUBSETS_B["all"], config, idx=balanced)
        sub = _subset(data, test)
        breakdown = evaluate(sub.y, model.predict_proba(sub), LABELS)
        rows.append(Row("Unbalanced", tuple(SUBSETS_B["all"]), breakdown))
        info["test_support"] = breakdown.support
    info["balanced_train"] = int(len(balanced))
    return ScenarioReport("B", rows, breakdown, info)
