"""Stateful ID-sharing / cookie-sync detection, redirect chains and initiator attribution."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence
from urllib.parse import urljoin, urlsplit

from .cookies import CookieRecord, IdRepository, build_repository, extract_cookies, record_cookie
from .domains import domain_or_host
from .entities import EMPTY_CATALOG, EntityCatalog
from .idscan import Carrier, Scanner
from .traffic import HttpRecord


class Status(str, Enum):
    FIRST_SEEN = "FirstSeen"
    ID_SHARING = "IdSharing"
    CSYNC = "CSync"
    FILTERED = "FilteredSameProvider"


class Initiator(str, Enum):
    PUBLISHER_OWN_ID = "PublisherOwnId"
    THIRD_PARTY_OWN_ID = "ThirdPartyOwnId"
    THIRD_PARTY_RELAY_OWN_ID = "ThirdPartyRelayOwnId"
    THIRD_PARTY_RELAY_PUBLISHER_ID = "ThirdPartyRelayPublisherId"
    UNATTRIBUTED = "Unattributed"


@dataclass(frozen=True)
class SharingEvent:
    user_id: str
    token: str
    sender: str | None
    receiver: str
    carrier: Carrier
    param_name: str | None
    record_ref: int
    status: Status
    timestamp: int
    initiator: Initiator | None = None

    def to_json(self) -> dict:
        return {
            "user": self.user_id,
            "token": self.token,
            "sender": self.sender,
            "receiver": self.receiver,
            "carrier": self.carrier.value,
            "param_name": self.param_name,
            "record_ref": self.record_ref,
            "status": self.status.value,
            "ts": self.timestamp,
            "initiator": self.initiator.value if self.initiator else None,
        }

    @classmethod
    def from_json(cls, d: dict) -> "SharingEvent":
        return cls(
            user_id=d["user"],
            token=d["token"],
            sender=d.get("sender"),
            receiver=d["receiver"],
            carrier=Carrier(d["carrier"]),
            param_name=d.get("param_name"),
            record_ref=int(d["record_ref"]),
            status=Status(d["status"]),
            timestamp=int(d["ts"]),
            initiator=Initiator(d["initiator"]) if d.get("initiator") else None,
        )


def dumps_events(events: Iterable[SharingEvent]) -> str:
    return "".join(json.dumps(e.to_json(), separators=(",", ":"), sort_keys=True) + "\n" for e in events)


def loads_events(text: str) -> list[SharingEvent]:
    return [SharingEvent.from_json(json.loads(line)) for line in text.splitlines() if line.strip()]


@dataclass
class DetectorConfig:
    mode: str = "two-pass"          # or "streaming"
    causality: bool = True          # two-pass: cookie must be set at or before the share
    cookie_owners_hold: bool = True  # cookie setters count as prior holders of their tokens
    dedupe_window_ms: int = 0
    scanner: Scanner = field(default_factory=Scanner)

    def __post_init__(self):
        if self.mode not in ("two-pass", "streaming"):
            raise ValueError(f"unknown detection mode {self.mode!r}")


def process_stream(records: Sequence[HttpRecord], repo: IdRepository | None = None,
                   catalog: EntityCatalog = EMPTY_CATALOG,
                   config: DetectorConfig | None = None) -> list[SharingEvent]:
    """Run sighting -> ID-sharing -> same-provider -> cookie-match over one user's stream.

    In two-pass mode ``repo`` should hold every cookie of the stream (it is
    built from the stream when omitted). In streaming mode the repository
    starts as given and each record's cookies are added after its request is
    scanned.
    """
    cfg = config or DetectorConfig()
    streaming = cfg.mode == "streaming"
    if repo is None:
        repo = IdRepository(records[0].user_id if records else None)
        if not streaming:
            cookies, _ = extract_cookies(records, cfg.scanner.predicate)
            build_repository_into(repo, cookies)

    url_holders: dict[str, dict[str, int]] = {}
    first_receiver: dict[str, str] = {}
    last_csync: dict[tuple[str, str], int] = {}
    events: list[SharingEvent] = []

    for idx, rec in enumerate(records):
        ts = rec.timestamp
        for s in cfg.scanner.scan(rec, idx):
            tok, recv = s.token, s.receiver_domain
            if streaming or not cfg.causality:
                owners = repo.owners_at(tok)
            else:
                owners = repo.owners_at(tok, ts)
            holders_seen = url_holders.get(tok)
            status = None
            sender = None

            if not cfg.cookie_owners_hold:
                # literal variant: only URL sightings make a token "seen"
                if holders_seen is None:
                    status = Status.FIRST_SEEN
                elif recv not in holders_seen or len(holders_seen) > 1:
                    status = Status.ID_SHARING
                candidates = {d: t for d, t in (holders_seen or {}).items() if d != recv}
                if status is Status.ID_SHARING and not candidates:
                    status = None
            else:
                origins = set(owners)
                if tok in first_receiver:
                    origins.add(first_receiver[tok])
                if holders_seen is None and (not owners or recv in owners):
                    status = Status.FIRST_SEEN
                    if not owners:
                        first_receiver[tok] = recv
                elif recv not in origins:
                    status = Status.ID_SHARING
                candidates = {**owners, **(holders_seen or {})}
                candidates.pop(recv, None)

            if status is Status.ID_SHARING:
                if s.sender_hint in candidates:
                    sender = s.sender_hint
                elif candidates:
                    sender = max(candidates.items(), key=lambda kv: (kv[1], kv[0]))[0]
                if catalog.same_provider(sender, recv):
                    status = Status.FILTERED
                elif owners:
                    status = Status.CSYNC

            url_holders.setdefault(tok, {})[recv] = ts
            if status is None:
                continue
            if status is Status.CSYNC and cfg.dedupe_window_ms > 0:
                prev = last_csync.get((tok, recv))
                last_csync[(tok, recv)] = ts
                if prev is not None and ts - prev <= cfg.dedupe_window_ms:
                    continue
            events.append(SharingEvent(rec.user_id, tok, sender, recv, s.carrier, s.param_name,
                                       idx, status, ts))
        if streaming:
            cookies, _ = extract_cookies([rec], cfg.scanner.predicate)
            for c in cookies:
                record_cookie(repo, replace(c, record_ref=idx))
    return events


def build_repository_into(repo: IdRepository, cookies: Iterable[CookieRecord]) -> IdRepository:
    for c in cookies:
        record_cookie(repo, c)
    return repo


# --------------------------------------------------------------------------
# pages and redirect chains
# --------------------------------------------------------------------------

_STATIC = re.compile(r"\.(?:js|css|png|jpe?g|gif|svg|ico|woff2?|ttf|eot|otf|mp4|webm|webp|map|json|xml|txt|swf)$", re.I)


def is_static_asset(path: str) -> bool:
    return bool(_STATIC.search(path or ""))


def detect_pages(records: Sequence[HttpRecord]) -> dict[int, str]:
    """Record index -> first-party domain for records that look like page visits.

    A page is a GET for a non-static path that is not a redirect, and either
    has no referrer or is a same-site navigation from an earlier page.
    """
    pages: dict[int, str] = {}
    page_urls: set[str] = set()
    for i, r in enumerate(records):
        if r.method != "GET" or is_static_asset(r.path):
            continue
        if r.status is not None and 300 <= r.status < 400:
            continue
        dom = domain_or_host(r.host)
        if r.referrer:
            ref_host = urlsplit(r.referrer).hostname or ""
            if r.referrer not in page_urls or domain_or_host(ref_host) != dom:
                continue
        pages[i] = dom
        page_urls.add(r.url)
    return pages


@dataclass(frozen=True)
class RedirectChain:
    refs: tuple[int, ...]

    def __len__(self):
        return len(self.refs)


def build_chains(records: Sequence[HttpRecord], window_ms: int = 5000,
                 pages: dict[int, str] | None = None) -> list[RedirectChain]:
    """Link records by Location -> request URL, else referrer -> embedding record."""
    if pages is None:
        pages = detect_pages(records)
    url_index: dict[str, list[int]] = {}
    for i, r in enumerate(records):
        url_index.setdefault(r.url, []).append(i)
    nxt: dict[int, int] = {}
    prv: dict[int, int] = {}

    for i, r in enumerate(records):
        if not r.location:
            continue
        target = urljoin(r.url, r.location)
        for j in url_index.get(target, ()):
            if j <= i or j in prv or j in pages:
                continue
            if records[j].timestamp - r.timestamp > window_ms:
                break
            nxt[i], prv[j] = j, i
            break

    for j, r in enumerate(records):
        if j in prv or j in pages or not r.referrer:
            continue
        for i in reversed(url_index.get(r.referrer, ())):
            if i >= j:
                continue
            if r.timestamp - records[i].timestamp > window_ms:
                break
            if i in pages or i in nxt:
                continue
            nxt[i], prv[j] = j, i
            break

    chains = []
    for i in range(len(records)):
        if i in prv:
            continue
        refs = [i]
        while refs[-1] in nxt:
            refs.append(nxt[refs[-1]])
        chains.append(RedirectChain(tuple(refs)))
    return chains


# --------------------------------------------------------------------------
# initiator attribution
# --------------------------------------------------------------------------

class Attributor:
    """Classifies CSync events by who triggered them and whose ID they carry."""

    def __init__(self, records: Sequence[HttpRecord], events: Sequence[SharingEvent],
                 repo: IdRepository, catalog: EntityCatalog = EMPTY_CATALOG,
                 chains: Sequence[RedirectChain] | None = None,
                 pages: dict[int, str] | None = None, window_ms: int = 5000):
        self.records = records
        self.repo = repo
        self.catalog = catalog
        self.pages = detect_pages(records) if pages is None else pages
        self.chains = list(build_chains(records, window_ms, self.pages) if chains is None else chains)
        self.position: dict[int, tuple[RedirectChain, int]] = {}
        for ch in self.chains:
            for pos, ref in enumerate(ch.refs):
                self.position[ref] = (ch, pos)
        self.shares: dict[int, list[SharingEvent]] = {}
        for e in events:
            if e.status in (Status.CSYNC, Status.ID_SHARING):
                self.shares.setdefault(e.record_ref, []).append(e)
        self.page_domain_by_url = {records[i].url: d for i, d in self.pages.items()}
        self.url_index: dict[str, list[int]] = {}
        for i, r in enumerate(records):
            self.url_index.setdefault(r.url, []).append(i)
        self._page_refs = sorted(self.pages)

    def _chain(self, ref: int) -> tuple[RedirectChain, int]:
        return self.position.get(ref, (RedirectChain((ref,)), 0))

    def publisher_of(self, ref: int) -> str | None:
        """First-party site whose page embedded the chain containing ``ref``."""
        ch, _ = self._chain(ref)
        head = ch.refs[0]
        for _ in range(8):
            referrer = self.records[head].referrer
            if not referrer:
                break
            if referrer in self.page_domain_by_url:
                return self.page_domain_by_url[referrer]
            earlier = [i for i in self.url_index.get(referrer, ()) if i < head]
            if not earlier:
                break
            head = self._chain(earlier[-1])[0].refs[0]
        prior = [i for i in self._page_refs if i <= ref]
        return self.pages[prior[-1]] if prior else None

    def attribute(self, e: SharingEvent) -> Initiator:
        if e.status is not Status.CSYNC:
            raise ValueError("only CSync events are attributed")
        sp = self.catalog.same_provider
        ch, pos = self._chain(e.record_ref)
        first = pos
        for q in range(pos + 1):
            if any(x.token == e.token for x in self.shares.get(ch.refs[q], ())):
                first = q
                break
        if first > 0:
            initiator = domain_or_host(self.records[ch.refs[first - 1]].host)
        else:
            referrer = self.records[ch.refs[0]].referrer
            host = urlsplit(referrer).hostname if referrer else None
            initiator = domain_or_host(host) if host else None

        owner = self.repo.earliest_owner(e.token, e.timestamp)
        publisher = self.publisher_of(e.record_ref)
        if owner is None or initiator is None:
            return Initiator.UNATTRIBUTED
        if publisher is not None and sp(owner, publisher):
            if sp(initiator, publisher):
                return Initiator.PUBLISHER_OWN_ID
            return Initiator.THIRD_PARTY_RELAY_PUBLISHER_ID
        if sp(initiator, owner) or (publisher is not None and sp(initiator, publisher)):
            relayed = any(
                x.status is Status.CSYNC and x.token != e.token and sp(x.receiver, owner)
                for q in range(first) for x in self.shares.get(ch.refs[q], ())
            )
            return Initiator.THIRD_PARTY_RELAY_OWN_ID if relayed else Initiator.THIRD_PARTY_OWN_ID
        return Initiator.UNATTRIBUTED

    def attribute_all(self, events: Sequence[SharingEvent]) -> list[SharingEvent]:
        return [replace(e, initiator=self.attribute(e)) if e.status is Status.CSYNC else e for e in events]


def attribute_initiator(e: SharingEvent, chains: Sequence[RedirectChain], repo: IdRepository,
                        visited_pages: dict[int, str], records: Sequence[HttpRecord],
                        events: Sequence[SharingEvent], catalog: EntityCatalog = EMPTY_CATALOG) -> Initiator:
    return Attributor(records, events, repo, catalog, chains, visited_pages).attribute(e)


@dataclass
class UserDetection:
    user_id: str
    records: list[HttpRecord]
    cookies: list[CookieRecord]
    repo: IdRepository
    events: list[SharingEvent]
    rejected: dict[str, int] = field(default_factory=dict)


def detect_user(records: Sequence[HttpRecord], catalog: EntityCatalog = EMPTY_CATALOG,
                config: DetectorConfig | None = None, attribute: bool = True,
                chain_window_ms: int = 5000) -> UserDetection:
    """Cookie extraction, detection and (optionally) attribution for one user."""
    cfg = config or DetectorConfig()
    records = list(records)
    user = records[0].user_id if records else ""
    cookies, rejected = extract_cookies(records, cfg.scanner.predicate)
    repo = build_repository(cookies, user)
    if cfg.mode == "streaming":
        events = process_stream(records, IdRepository(user), catalog, cfg)
    else:
        events = process_stream(records, repo, catalog, cfg)
    if attribute:
        events = Attributor(records, events, repo, catalog, window_ms=chain_window_ms).attribute_all(events)
    return UserDetection(user, records, cookies, repo, events, rejected)
