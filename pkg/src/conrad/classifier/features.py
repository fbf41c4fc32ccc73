"""Run-time features of ID-carrying requests and labelled examples."""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from ..detector import SharingEvent, Status
from ..entities import EMPTY_CATALOG, EntityCatalog
from ..idscan import Carrier, IdSighting, Scanner
from ..traffic import HttpRecord

LABELS = ("CSync", "IdSharingNonCSync", "Other")
BROWSERS = ("Firefox", "Chrome", "Safari", "IE", "Edge", "Opera", "Other")

# column order; no_of_params is the only numeric feature
FEATURES = ("entity_name", "type_of_entity", "param_name", "where_found",
            "status_code", "browser", "no_of_params")
NUMERIC = frozenset({"no_of_params"})

DISPLAY = {
    "entity_name": "EntityName",
    "type_of_entity": "TypeOfEntity",
    "param_name": "ParamName",
    "where_found": "WhereFound",
    "status_code": "StatusCode",
    "browser": "Browser",
    "no_of_params": "NoOfParams",
}
_BY_DISPLAY = {v.lower(): k for k, v in DISPLAY.items()}

# Subset membership read off the */+ marks of the published tables.
SUBSETS_A = {
    "id-less": ("no_of_params", "status_code", "type_of_entity", "browser", "entity_name"),
    "high-importance": ("where_found", "status_code", "type_of_entity", "browser", "param_name", "entity_name"),
    "all": FEATURES,
}
FEATURES_B = ("no_of_params", "status_code", "type_of_entity", "entity_name", "param_name")
SUBSETS_B = {
    "id-less": ("no_of_params", "status_code", "type_of_entity", "entity_name"),
    "high-importance": ("status_code", "type_of_entity", "entity_name", "param_name"),
    "all": FEATURES_B,
}


@dataclass(frozen=True)
class FeatureVector:
    entity_name: str
    type_of_entity: str
    param_name: str
    where_found: str
    status_code: str
    browser: str
    no_of_params: int

    def __post_init__(self):
        if self.where_found not in (c.value for c in Carrier):
            raise ValueError(f"where_found must be a carrier, got {self.where_found!r}")
        if self.no_of_params < 0:
            raise ValueError("no_of_params must be non-negative")

    def value(self, feature: str):
        return getattr(self, feature)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "FeatureVector":
        return cls(**{k: (int(d[k]) if k in NUMERIC else str(d[k])) for k in FEATURES})


@dataclass(frozen=True)
class LabeledExample:
    features: FeatureVector
    label: str
    user_id: str = ""
    record_ref: int = -1
    token: str = ""

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"unknown label {self.label!r}")

    def to_json(self) -> dict:
        return {"features": self.features.to_json(), "label": self.label,
                "user": self.user_id, "record_ref": self.record_ref, "token": self.token}

    @classmethod
    def from_json(cls, d: dict) -> "LabeledExample":
        return cls(FeatureVector.from_json(d["features"]), d["label"], d.get("user", ""),
                   int(d.get("record_ref", -1)), d.get("token", ""))


def dumps_examples(examples: Iterable[LabeledExample]) -> str:
    return "".join(json.dumps(e.to_json(), sort_keys=True, separators=(",", ":")) + "\n" for e in examples)


def loads_examples(text: str) -> list[LabeledExample]:
    return [LabeledExample.from_json(json.loads(l)) for l in text.splitlines() if l.strip()]


def parse_feature_subset(spec: str, scenario: str = "a") -> tuple[str, ...]:
    """'all', 'id-less', 'high-importance' or a comma list of feature names."""
    subsets = SUBSETS_B if scenario.lower() == "b" else SUBSETS_A
    key = spec.strip().lower()
    if key in subsets:
        return tuple(subsets[key])
    out = []
    for part in key.split(","):
        part = part.strip().replace("-", "_")
        name = part if part in FEATURES else _BY_DISPLAY.get(part.replace("_", ""))
        if name is None:
            raise ValueError(f"unknown feature {part!r}")
        if name not in out:
            out.append(name)
    if not out:
        raise ValueError("empty feature subset")
    return tuple(out)


# --------------------------------------------------------------------------
# browser family
# --------------------------------------------------------------------------

def load_ua_patterns(path: str | Path | None = None) -> list[tuple[str, re.Pattern]]:
    if path is None:
        text = resources.files("conrad").joinpath("data/ua_patterns.json").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    table = []
    for family, rx in json.loads(text)["patterns"]:
        if family not in BROWSERS:
            raise ValueError(f"unknown browser family {family!r}")
        table.append((family, re.compile(rx)))
    return table


@lru_cache(maxsize=1)
def _default_patterns():
    return tuple(load_ua_patterns())


def browser_family(ua: str | None, patterns=None) -> str:
    if not ua:
        return "Other"
    for family, rx in patterns or _default_patterns():
        if rx.search(ua):
            return family
    return "Other"


# --------------------------------------------------------------------------
# extraction and labelling
# --------------------------------------------------------------------------

def extract_features(sighting: IdSighting | SharingEvent, record: HttpRecord,
                     catalog: EntityCatalog = EMPTY_CATALOG, patterns=None) -> FeatureVector:
    receiver = sighting.receiver_domain if isinstance(sighting, IdSighting) else sighting.receiver
    carrier = sighting.carrier
    if carrier is Carrier.PARAM:
        param = sighting.param_name or ""
    else:
        param = carrier.value.upper()
    return FeatureVector(
        entity_name=catalog.entity_name(receiver),
        type_of_entity=catalog.categorize(receiver),
        param_name=param,
        where_found=carrier.value,
        status_code=str(record.status) if record.status is not None else "NA",
        browser=browser_family(record.user_agent, patterns),
        no_of_params=len(record.query),
    )


def label_for(status: Status | None) -> str:
    if status is Status.CSYNC:
        return "CSync"
    if status in (Status.ID_SHARING, Status.FILTERED):
        return "IdSharingNonCSync"
    return "Other"


def sightings_of(records: Sequence[HttpRecord], scanner: Scanner | None = None) -> list[IdSighting]:
    scanner = scanner or Scanner()
    return [s for i, r in enumerate(records) for s in scanner.scan(r, i)]


def label_examples(records: Sequence[HttpRecord], events: Sequence[SharingEvent],
                   catalog: EntityCatalog = EMPTY_CATALOG, scanner: Scanner | None = None,
                   patterns=None) -> list[LabeledExample]:
    """One example per sighting, labelled by the detector's verdict on it."""
    verdict = {(e.record_ref, e.token, e.carrier): e.status for e in events}
    out = []
    for s in sightings_of(records, scanner):
        rec = records[s.record_ref]
        out.append(LabeledExample(
            extract_features(s, rec, catalog, patterns),
            label_for(verdict.get((s.record_ref, s.token, s.carrier))),
            rec.user_id, s.record_ref, s.token,
        ))
    return out
