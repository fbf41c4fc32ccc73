"""Privacy-loss measurements over detected sync events."""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence
from urllib.parse import unquote

import numpy as np

from .cookies import CookieRecord, IdRepository
from .detector import SharingEvent, Status
from .entities import CATEGORIES, EMPTY_CATALOG, EntityCatalog
from .idscan import split_value
from .traffic import HttpRecord

PERCENTILES = (10, 25, 50, 75, 90)
DAY_MS = 86_400_000
PII_KINDS = ("Location", "Phone", "Gender", "Age", "BirthDate", "FullName", "Email", "Credentials")


@dataclass(frozen=True)
class SpillFinding:
    token: str
    secure_origin: str
    plaintext_receiver: str
    leaked_referrer_url: str | None
    record_ref: int


@dataclass(frozen=True)
class PiiFinding:
    kind: str
    param_name: str
    record_ref: int
    co_synced_token: str


@dataclass(frozen=True)
class UniversalId:
    token: str
    owners: tuple[str, ...]


@dataclass(frozen=True)
class IdSummary:
    cookie: CookieRecord
    foreign_tokens: tuple[str, ...]


@dataclass
class UserPrivacyReport:
    user_id: str
    requests: int
    active_days: int
    time_to_first_csync: int | None
    csync_count: int
    csync_per_request: float
    unique_ids_synced: int
    per_id_receiver_counts: dict[str, int]
    learners_before: int
    learners_after: int
    diffusion_factor: float
    tls_spills: list[SpillFinding] = field(default_factory=list)
    pii_leaks: list[PiiFinding] = field(default_factory=list)

    def to_json(self) -> dict:
        d = asdict(self)
        d["per_id_receiver_counts"] = dict(sorted(self.per_id_receiver_counts.items()))
        return d


def _learner_key(catalog: EntityCatalog, per_domain: bool):
    if per_domain:
        return lambda d: d
    return catalog.entity_name


def learner_sets(events: Iterable[SharingEvent], repo: IdRepository,
                 catalog: EntityCatalog = EMPTY_CATALOG, per_domain: bool = False) -> tuple[set[str], set[str]]:
    """Parties knowing at least one of the user's IDs without and with sync propagation."""
    key = _learner_key(catalog, per_domain)
    before = {key(owner) for held in repo.owners.values() for owner in held}
    after = set(before)
    for e in events:
        if e.status is Status.CSYNC:
            after.add(key(e.receiver))
    return before, after


def compute_user_report(events: Sequence[SharingEvent], records: Sequence[HttpRecord],
                        repo: IdRepository, catalog: EntityCatalog = EMPTY_CATALOG,
                        cookies: Sequence[CookieRecord] = (), per_domain: bool = False,
                        pii_table: "PiiTable | None" = None) -> UserPrivacyReport:
    user = records[0].user_id if records else (repo.user_id or "")
    csyncs = [e for e in events if e.status is Status.CSYNC]
    key = _learner_key(catalog, per_domain)

    receivers: dict[str, set[str]] = {}
    for e in csyncs:
        receivers.setdefault(e.token, set()).add(key(e.receiver))
    before, after = learner_sets(events, repo, catalog, per_domain)
    factor = len(after) / len(before) if before else 1.0

    ttf = None
    if csyncs and records:
        ttf = min(e.timestamp for e in csyncs) - records[0].timestamp
    days = len({r.timestamp // DAY_MS for r in records})
    return UserPrivacyReport(
        user_id=user,
        requests=len(records),
        active_days=days,
        time_to_first_csync=ttf,
        csync_count=len(csyncs),
        csync_per_request=len(csyncs) / len(records) if records else 0.0,
        unique_ids_synced=len(receivers),
        per_id_receiver_counts={t: len(r) for t, r in receivers.items()},
        learners_before=len(before),
        learners_after=len(after),
        diffusion_factor=factor,
        tls_spills=detect_tls_spills(events, cookies, records),
        pii_leaks=scan_pii(records, events, pii_table),
    )


# --------------------------------------------------------------------------
# ID bundling
# --------------------------------------------------------------------------

def detect_id_summaries(cookies: Sequence[CookieRecord], repo: IdRepository,
                        catalog: EntityCatalog = EMPTY_CATALOG, min_foreign: int = 2) -> list[IdSummary]:
    """Cookies whose value carries at least ``min_foreign`` IDs owned by other entities."""
    out = []
    for c in cookies:
        mine = catalog.entity_name(c.setter_domain)
        foreign = []
        for frag in split_value(unquote(c.raw_value)):
            owners = repo.owners.get(frag)
            if not owners or frag in foreign:
                continue
            if any(catalog.entity_name(o) != mine for o in owners):
                foreign.append(frag)
        if len(foreign) >= min_foreign:
            out.append(IdSummary(c, tuple(foreign)))
    return out


def detect_universal_ids(repo: IdRepository, cookies: Sequence[CookieRecord],
                         catalog: EntityCatalog = EMPTY_CATALOG) -> list[UniversalId]:
    """Tokens set verbatim by two or more entities, owners ordered by first set.

    Cookies recognised as ID summaries are not counted as setting the IDs
    they bundle.
    """
    summaries = {id(s.cookie) for s in detect_id_summaries(cookies, repo, catalog)}
    first: dict[str, dict[str, int]] = {}
    for c in cookies:
        if id(c) in summaries:
            continue
        ent = catalog.entity_name(c.setter_domain)
        for tok in c.id_tokens:
            held = first.setdefault(tok, {})
            if ent not in held or c.set_at < held[ent]:
                held[ent] = c.set_at
    out = []
    for tok in sorted(first):
        held = first[tok]
        if len(held) >= 2:
            owners = tuple(e for e, _ in sorted(held.items(), key=lambda kv: (kv[1], kv[0])))
            out.append(UniversalId(tok, owners))
    return out


# --------------------------------------------------------------------------
# TLS spill and PII co-leaks
# --------------------------------------------------------------------------

def detect_tls_spills(events: Sequence[SharingEvent], cookies: Sequence[CookieRecord],
                      records: Sequence[HttpRecord]) -> list[SpillFinding]:
    """IDs set over https that a sync carries over plain http.

    One finding per (token, leaked page), where the leaked page is the https
    referrer when present and otherwise the plaintext receiver.
    """
    secure: dict[str, tuple[int, str]] = {}
    for c in cookies:
        if not c.secure_context:
            continue
        for tok in c.id_tokens:
            if tok not in secure or (c.set_at, c.setter_domain) < secure[tok]:
                secure[tok] = (c.set_at, c.setter_domain)
    out = []
    seen = set()
    for e in events:
        if e.status is not Status.CSYNC or e.token not in secure:
            continue
        rec = records[e.record_ref]
        set_at, origin = secure[e.token]
        if rec.scheme != "http" or set_at > e.timestamp:
            continue
        ref = rec.referrer if rec.referrer and rec.referrer.startswith("https://") else None
        key = (e.token, ref or e.receiver)
        if key in seen:
            continue
        seen.add(key)
        out.append(SpillFinding(e.token, origin, e.receiver, ref, e.record_ref))
    return out


@dataclass
class PiiTable:
    keywords: dict[str, str]
    value_patterns: dict[str, re.Pattern]
    year_keywords: frozenset[str]
    year_range: tuple[int, int]

    @classmethod
    def from_json(cls, doc: dict) -> "PiiTable":
        kw = {_norm(k): v for k, v in doc["keywords"].items()}
        bad = set(kw.values()) - set(PII_KINDS)
        if bad:
            raise ValueError(f"unknown PII kinds {sorted(bad)}")
        return cls(
            keywords=kw,
            value_patterns={k: re.compile(p) for k, p in doc.get("value_patterns", {}).items()},
            year_keywords=frozenset(_norm(k) for k in doc.get("year_keywords", ())),
            year_range=tuple(doc.get("year_range", (1900, 2030))),
        )

    @classmethod
    def load(cls, path: str | Path | None = None) -> "PiiTable":
        if path is None:
            text = resources.files("conrad").joinpath("data/pii.json").read_text(encoding="utf-8")
        else:
            text = Path(path).read_text(encoding="utf-8")
        return cls.from_json(json.loads(text))

    def kinds(self, name: str, value: str) -> list[str]:
        found = []
        n = _norm(name)
        if n in self.keywords:
            found.append(self.keywords[n])
        for kind, rx in self.value_patterns.items():
            if rx.match(value) and kind not in found:
                found.append(kind)
        if n in self.year_keywords and value.isdigit() and len(value) == 4:
            lo, hi = self.year_range
            if lo <= int(value) <= hi and "Age" not in found:
                found.append("Age")
        return found


def _norm(name: str) -> str:
    return re.sub(r"[_\-\s]", "", name.lower())


_DEFAULT_PII: PiiTable | None = None


def scan_pii(records: Sequence[HttpRecord], events: Sequence[SharingEvent],
             table: PiiTable | None = None) -> list[PiiFinding]:
    """Personal data riding along with a shared ID in the same request."""
    global _DEFAULT_PII
    if table is None:
        if _DEFAULT_PII is None:
            _DEFAULT_PII = PiiTable.load()
        table = _DEFAULT_PII
    by_record: dict[int, list[SharingEvent]] = {}
    for e in events:
        if e.status in (Status.CSYNC, Status.ID_SHARING):
            by_record.setdefault(e.record_ref, []).append(e)
    out = []
    for ref in sorted(by_record):
        evs = by_record[ref]
        synced = sorted(evs, key=lambda e: e.status is not Status.CSYNC)[0].token
        tokens = {e.token for e in evs}
        seen = set()
        for name, raw in records[ref].query:
            value = unquote(raw.replace("+", " "))
            if value in tokens or any(t in split_value(value) for t in tokens):
                continue
            for kind in table.kinds(name, value):
                if (name, kind) not in seen:
                    seen.add((name, kind))
                    out.append(PiiFinding(kind, name, ref, synced))
    return out


# --------------------------------------------------------------------------
# categories and aggregation
# --------------------------------------------------------------------------

def category_shares(events: Iterable[SharingEvent], catalog: EntityCatalog = EMPTY_CATALOG) -> dict[str, float]:
    """Fraction of synced tokens that reached at least one party of each category."""
    reached: dict[str, set[str]] = {c: set() for c in CATEGORIES}
    tokens = set()
    for e in events:
        if e.status is not Status.CSYNC:
            continue
        tokens.add((e.user_id, e.token))
        reached[catalog.categorize(e.receiver)].add((e.user_id, e.token))
    if not tokens:
        return {c: 0.0 for c in CATEGORIES}
    return {c: len(reached[c]) / len(tokens) for c in CATEGORIES}


def entity_shares(events: Iterable[SharingEvent], catalog: EntityCatalog = EMPTY_CATALOG,
                  top: int = 20) -> list[tuple[str, float]]:
    reached: dict[str, set] = {}
    tokens = set()
    for e in events:
        if e.status is Status.CSYNC:
            tokens.add((e.user_id, e.token))
            reached.setdefault(catalog.entity_name(e.receiver), set()).add((e.user_id, e.token))
    if not tokens:
        return []
    ranked = sorted(((n, len(s) / len(tokens)) for n, s in reached.items()), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:top]


def percentile_table(values: Sequence[float]) -> dict[str, float | None]:
    if not len(values):
        return {f"p{p}": None for p in PERCENTILES}
    arr = np.asarray(values, dtype=float)
    return {f"p{p}": float(np.percentile(arr, p)) for p in PERCENTILES}


def aggregate(reports: Sequence[UserPrivacyReport], events: Sequence[SharingEvent] = (),
              regular_user_threshold: float = 10.0) -> dict:
    """Cross-user reduction: percentile tables, exposure and carrier/initiator splits."""
    regular = [r for r in reports if r.active_days and r.requests / r.active_days > regular_user_threshold]
    exposed = [r for r in regular if r.csync_count > 0]
    csyncs = [e for e in events if e.status is Status.CSYNC]
    carriers: dict[str, int] = {}
    initiators: dict[str, int] = {}
    for e in csyncs:
        carriers[e.carrier.value] = carriers.get(e.carrier.value, 0) + 1
        if e.initiator is not None:
            initiators[e.initiator.value] = initiators.get(e.initiator.value, 0) + 1
    counts = {s.value: 0 for s in Status}
    for e in events:
        counts[e.status.value] += 1
    per_id = [c for r in reports for c in r.per_id_receiver_counts.values()]
    n = len(csyncs)
    return {
        "users": len(reports),
        "regular_users": len(regular),
        "regular_user_threshold": regular_user_threshold,
        "exposure_rate": len(exposed) / len(regular) if regular else None,
        "event_counts": counts,
        "carrier_split": {k: v / n for k, v in sorted(carriers.items())} if n else {},
        "initiator_split": {k: v / n for k, v in sorted(initiators.items())} if n else {},
        "percentiles": {
            "time_to_first_csync_ms": percentile_table(
                [r.time_to_first_csync for r in reports if r.time_to_first_csync is not None]),
            "csync_per_request": percentile_table([r.csync_per_request for r in reports]),
            "unique_ids_synced": percentile_table([r.unique_ids_synced for r in reports]),
            "receivers_per_id": percentile_table(per_id),
            "learners_before": percentile_table([r.learners_before for r in reports]),
            "learners_after": percentile_table([r.learners_after for r in reports]),
            "diffusion_factor": percentile_table([r.diffusion_factor for r in reports]),
            "tls_spills": percentile_table([len(r.tls_spills) for r in reports if r.tls_spills]),
        },
        "mean_csync_per_request": float(np.mean([r.csync_per_request for r in reports])) if reports else None,
        "requests_per_csync": (sum(r.requests for r in reports) / n) if n else None,
    }
