"""Synthetic labelled weblogs with a manifest of everything injected.

A small world of publishers and trackers is built from the seed, then each
user browses it. Sync flows follow the four initiator patterns; universal
IDs, ID summaries, TLS spills, PII parameters and provider-internal shares
are injected on request. The manifest lists every placement of a cookie ID
at a party that does not own it, which is exactly what the heuristic
detector should report as CSync when no token is obfuscated.
"""

from __future__ import annotations

import base64
import hashlib
import json
import random
import string
from dataclasses import asdict, dataclass, field, replace
from typing import Any

import numpy as np

from .classifier.features import BROWSERS, FeatureVector, LabeledExample, LABELS
from .entities import Entity, EntityCatalog
from .idscan import DEFAULT_PREDICATE, Carrier
from .traffic import HttpRecord, sort_records

DAY_MS = 86_400_000
EPOCH = 1_767_225_600_000  # 2026-01-01T00:00:00Z
COOKIE_TTL = 31_536_000
TOKEN_LEN = 22
_ALPHABET = string.ascii_letters + string.digits

INITIATORS = ("PublisherOwnId", "ThirdPartyOwnId", "ThirdPartyRelayOwnId", "ThirdPartyRelayPublisherId")

SYNC_PARAMS = ("aid", "u", "guidm", "subuid", "tuid", "uid", "bidderuid", "puid", "partner_uid",
               "buyeruid", "xuid", "dpuid", "ssp_uid", "userid", "gdpr_uid", "cm_uid", "extuid",
               "vuid", "rtbuid", "exchange_uid")

PII_PARAMS = {
    "Gender": ("gender", "f"),
    "Age": ("age", "34"),
    "BirthDate": ("dob", "1984-05-12"),
    "FullName": ("fullname", "Jane+Doe"),
    "Email": ("email", "jane.doe%40example.org"),
    "Phone": ("phone", "%2B4915112345678"),
    "Location": ("city", "Berlin"),
    "Credentials": ("pwd", "hunter2"),
}

USER_AGENTS = {
    "Chrome": "Mozilla/5.0 (Linux; Android 9; SM-G960F) AppleWebKit/537.36 (KHTML, like Gecko) "
              "Chrome/74.0.3729.157 Mobile Safari/537.36",
    "Firefox": "Mozilla/5.0 (Android 9; Mobile; rv:67.0) Gecko/67.0 Firefox/67.0",
    "Safari": "Mozilla/5.0 (iPhone; CPU iPhone OS 12_2 like Mac OS X) AppleWebKit/605.1.15 "
              "(KHTML, like Gecko) Version/12.1 Mobile/15E148 Safari/604.1",
    "Edge": "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 (KHTML, like Gecko) "
            "Chrome/74.0.3729.169 Safari/537.36 Edge/18.17763",
    "Opera": "Mozilla/5.0 (Linux; Android 9) AppleWebKit/537.36 (KHTML, like Gecko) "
             "Chrome/73.0.3683.90 Mobile Safari/537.36 OPR/52.2.2517.140547",
    "IE": "Mozilla/5.0 (Windows NT 6.1; WOW64; Trident/7.0; rv:11.0) like Gecko",
}

_SYL = ("ad", "bid", "sync", "tap", "click", "media", "pix", "trak", "rtb", "zen", "lum", "nex",
        "quan", "vox", "kai", "sol", "mar", "tor", "vel", "rix", "dex", "ora", "pul", "fin")
_TLDS = ("com", "net", "io", "co")


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    seed: int = 42
    n_users: int = 50
    n_publishers: int = 30
    n_trackers: dict = field(default_factory=lambda: {"Advertising": 24, "Analytics": 5, "Social": 3, "Other": 3})
    days: int = 4
    visits_per_day: float = 4.0
    revisit_rate: float = 0.5
    pages_per_visit: tuple = (1, 3)
    tags_per_page: tuple = (2, 4)
    sync_prob: float = 0.35
    chain_length: dict = field(default_factory=lambda: {1: 0.45, 2: 0.25, 3: 0.23, 4: 0.07})
    initiator_mix: dict = field(default_factory=lambda: {
        "PublisherOwnId": 0.02692, "ThirdPartyOwnId": 0.49668,
        "ThirdPartyRelayOwnId": 0.45697, "ThirdPartyRelayPublisherId": 0.002658})
    partner_categories: dict = field(default_factory=lambda: {"Advertising": 0.9, "Social": 0.05, "Analytics": 0.05})
    path_style_rate: float = 0.15
    partner_cookie_rate: float = 0.3
    tag_share: float = 0.5
    referrer_variant_rate: float = 0.08
    obfuscation_rate: float = 0.0
    n_providers: int = 0
    provider_share_prob: float = 0.0
    universal_ids: int = 3
    summaries: int = 3
    spills: int = 3
    pii: dict = field(default_factory=lambda: {k: 1 for k in PII_PARAMS})
    corpus_size: int = 0
    corpus_weights: dict = field(default_factory=lambda: {"CSync": 1.0, "IdSharingNonCSync": 1.0, "Other": 1.0})
    corpus_strength: dict = field(default_factory=lambda: {
        "entity_name": 0.8, "param_name": 0.8, "type_of_entity": 0.45, "status_code": 0.45,
        "browser": 0.35, "where_found": 0.45, "no_of_params": 0.0})

    def validate(self) -> "ScenarioConfig":
        probs = {"revisit_rate": self.revisit_rate, "sync_prob": self.sync_prob,
                 "path_style_rate": self.path_style_rate,
                 "partner_cookie_rate": self.partner_cookie_rate, "tag_share": self.tag_share,
                 "referrer_variant_rate": self.referrer_variant_rate,
                 "obfuscation_rate": self.obfuscation_rate, "provider_share_prob": self.provider_share_prob}
        for k, v in probs.items():
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{k} must be in [0,1], got {v}")
        for k, v in self.corpus_strength.items():
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"corpus_strength[{k}] must be in [0,1]")
        if self.n_users < 1 or self.n_publishers < 1 or self.days < 1:
            raise ConfigError("n_users, n_publishers and days must be positive")
        if set(self.initiator_mix) - set(INITIATORS):
            raise ConfigError(f"unknown initiator classes {sorted(set(self.initiator_mix) - set(INITIATORS))}")
        if any(w < 0 for w in self.initiator_mix.values()) or sum(self.initiator_mix.values()) <= 0:
            raise ConfigError("initiator_mix weights must be non-negative with a positive sum")
        lengths = {int(k): float(v) for k, v in self.chain_length.items()}
        if not lengths or min(lengths) < 1 or any(v < 0 for v in lengths.values()) or sum(lengths.values()) <= 0:
            raise ConfigError("chain_length must map lengths >= 1 to non-negative weights")
        self.chain_length = lengths
        partners = sum(self.n_trackers.get(c, 0) for c, w in self.partner_categories.items() if w > 0)
        if max(lengths) + 1 > partners + self.n_providers:
            raise ConfigError(f"chain length {max(lengths)} needs more sync-capable trackers than {partners}")
        if self.n_trackers.get("Advertising", 0) < 2:
            raise ConfigError("need at least two advertising trackers")
        if self.n_trackers.get("Analytics", 0) < 2:
            raise ConfigError("need at least two analytics trackers")
        if set(self.pii) - set(PII_PARAMS):
            raise ConfigError(f"unknown PII kinds {sorted(set(self.pii) - set(PII_PARAMS))}")
        if set(self.corpus_weights) - set(LABELS):
            raise ConfigError("corpus_weights keys must be class labels")
        return self

    def to_json(self) -> dict:
        d = asdict(self)
        d["chain_length"] = {str(k): v for k, v in self.chain_length.items()}
        d["pages_per_visit"] = list(self.pages_per_visit)
        d["tags_per_page"] = list(self.tags_per_page)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ScenarioConfig":
        known = set(cls.__dataclass_fields__)
        bad = set(d) - known
        if bad:
            raise ConfigError(f"unknown scenario keys {sorted(bad)}")
        d = dict(d)
        for k in ("pages_per_visit", "tags_per_page"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


PRESETS = {
    "paper-mix": {},
    "provider-mix": {"n_providers": 3, "provider_share_prob": 0.3},
    "initiator-matrix": {
        "n_users": 20,
        "initiator_mix": {k: 0.25 for k in INITIATORS},
        "chain_length": {2: 1.0},
        "referrer_variant_rate": 0.0,
        "universal_ids": 0, "summaries": 0, "spills": 0, "pii": {},
    },
    "balanced-3class": {"corpus_size": 30000},
    # planted-correlation corpora for the two classifier protocols
    "idsharing-corpus": {"corpus_size": 20000,
                         "corpus_weights": {"CSync": 1.0, "IdSharingNonCSync": 1.0, "Other": 0.0}},
    "prefilter-corpus": {"corpus_size": 92000,
                         "corpus_weights": {"CSync": 6000, "IdSharingNonCSync": 6000, "Other": 80000},
                         "corpus_strength": {"entity_name": 0.9, "param_name": 0.9, "status_code": 0.7,
                                             "type_of_entity": 0.45, "browser": 0.35,
                                             "where_found": 0.45, "no_of_params": 0.0}},
    "spill-heavy": {"spills": 40, "n_users": 20},
}


def preset(name: str, **overrides) -> ScenarioConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return ScenarioConfig(**{**PRESETS[name], **overrides}).validate()


# --------------------------------------------------------------------------
# world
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Party:
    name: str
    domain: str
    category: str
    code: str
    uid_param: str = "uid"
    path_style: bool = False
    cookie_name: str = "uid"
    sister: str | None = None  # second domain of a provider entity

    @property
    def tag_host(self) -> str:
        return "tag." + self.domain

    @property
    def sync_host(self) -> str:
        return "sync." + self.domain


@dataclass
class World:
    publishers: list[Party]
    trackers: dict[str, list[Party]]
    providers: list[Party]

    def all_parties(self) -> list[Party]:
        out = list(self.publishers)
        for cat in sorted(self.trackers):
            out.extend(self.trackers[cat])
        out.extend(self.providers)
        return out

    def catalog(self, version: str = "synthetic") -> EntityCatalog:
        ents = []
        for p in self.all_parties():
            doms = {p.domain} | ({p.sister} if p.sister else set())
            ents.append(Entity(p.name, frozenset(doms), p.category))
        return EntityCatalog(ents, version)

    def party_of(self, domain: str) -> Party | None:
        for p in self.all_parties():
            if domain in (p.domain, p.sister):
                return p
        return None


def _names(rng: random.Random, n: int, taken: set[str], suffix: str = "") -> list[str]:
    out = []
    while len(out) < n:
        name = rng.choice(_SYL) + rng.choice(_SYL) + suffix
        if name not in taken:
            taken.add(name)
            out.append(name)
    return out


def build_world(cfg: ScenarioConfig, rng: random.Random) -> World:
    taken: set[str] = set()
    pubs = []
    for i, nm in enumerate(_names(rng, cfg.n_publishers, taken, "news")):
        pubs.append(Party(nm.capitalize(), f"{nm}.{rng.choice(_TLDS)}", "Content", f"p{i}",
                          cookie_name="_pid"))
    trackers: dict[str, list[Party]] = {}
    k = 0
    for cat in sorted(cfg.n_trackers):
        trackers[cat] = []
        for nm in _names(rng, cfg.n_trackers[cat], taken):
            trackers[cat].append(Party(
                nm.capitalize(), f"{nm}.{rng.choice(_TLDS)}", cat, f"t{k}",
                uid_param=rng.choice(SYNC_PARAMS),
                path_style=cat != "Other" and rng.random() < cfg.path_style_rate,
                cookie_name=rng.choice(("uid", "_uid", "id", "tuid", "ssp")),
            ))
            k += 1
    providers = []
    for nm in _names(rng, cfg.n_providers, taken, "co"):
        providers.append(Party(nm.capitalize(), f"{nm}.com", "Advertising", f"t{k}",
                               uid_param=rng.choice(SYNC_PARAMS), cookie_name="uid",
                               sister=f"{nm}-data.net"))
        k += 1
    return World(pubs, trackers, providers)


def make_token(rng: random.Random, taken: set[str]) -> str:
    while True:
        tok = "".join(rng.choice(_ALPHABET) for _ in range(TOKEN_LEN))
        if tok not in taken and DEFAULT_PREDICATE(tok):
            taken.add(tok)
            return tok


def obfuscate(token: str, receiver: str, key: bytes) -> str:
    """Keyed truncated hash, different for each receiving party."""
    digest = hashlib.blake2b(f"{token}|{receiver}".encode(), key=key, digest_size=18).digest()
    out = base64.urlsafe_b64encode(digest).decode()[:TOKEN_LEN]
    return out if DEFAULT_PREDICATE(out) else out[:-1] + "7"


def _unit(key: bytes, *parts: str) -> float:
    h = hashlib.blake2b("|".join(parts).encode(), key=key, digest_size=8).digest()
    return int.from_bytes(h, "big") / 2 ** 64


# --------------------------------------------------------------------------
# manifest
# --------------------------------------------------------------------------

@dataclass
class Manifest:
    seed: int
    config: dict
    entities: dict
    users: list[str] = field(default_factory=list)
    n_records: int = 0
    cookies: list[dict] = field(default_factory=list)
    syncs: list[dict] = field(default_factory=list)
    provider_shares: list[dict] = field(default_factory=list)
    universal_ids: list[dict] = field(default_factory=list)
    summaries: list[dict] = field(default_factory=list)
    spills: list[dict] = field(default_factory=list)
    pii: list[dict] = field(default_factory=list)
    chains: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, d: dict) -> "Manifest":
        return cls(**d)


# --------------------------------------------------------------------------
# per-user browsing simulation
# --------------------------------------------------------------------------

class _User:
    def __init__(self, gen: "Generator", user: str, family: str, start: int):
        self.g = gen
        self.user = user
        self.family = family
        self.ua = USER_AGENTS[family]
        self.ts = start
        self.records: list[HttpRecord] = []
        self.cookies: dict[str, str] = {}             # party domain -> its ID for this user
        self.owners: dict[str, dict[str, int]] = {}   # token -> {domain: set_at}
        self.url_tokens: dict[str, list[tuple[str, str, str | None, str | None]]] = {}
        self.visited: list[Party] = []
        self.spilled: set[str] = set()
        self.pending_pii: list[str] = []
        self.pending_universal = 0
        self.pending_summary = 0
        self.pending_spill = 0

    # -- plumbing --------------------------------------------------------

    def tick(self, lo: int = 20, hi: int = 250) -> int:
        self.ts += self.g.rng.randint(lo, hi)
        return self.ts

    def own(self, token: str, domain: str, ts: int) -> None:
        held = self.owners.setdefault(token, {})
        held.setdefault(domain, ts)

    def owners_at(self, token: str, ts: int) -> set[str]:
        return {d for d, t in self.owners.get(token, {}).items() if t <= ts}

    def set_cookie(self, party: Party, cookies: list[str]) -> None:
        """Give ``party`` an ID cookie on first contact (added to the response)."""
        if party.domain in self.cookies:
            return
        tok = make_token(self.g.rng, self.g.tokens)
        self.cookies[party.domain] = tok
        cookies.append(f"{party.cookie_name}={tok}; Max-Age={COOKIE_TTL}; Path=/; Domain=.{party.domain}")
        self.own(tok, party.domain, self.ts)
        self.g.manifest.cookies.append({"user": self.user, "token": tok, "owner": party.domain,
                                        "set_at": self.ts})

    def emit(self, scheme: str, host: str, path: str, query: list, *, status: int = 200,
             referrer: str | None = None, set_cookies: list | None = None,
             placements: list | None = None, label: str | None = None, cookies_sent=()) -> int:
        """Append one record; ``placements`` are (token, shown, carrier, param) tuples."""
        rec = HttpRecord(self.user, self.ts, "GET", scheme, host, path, tuple(query), status,
                         referrer, None, tuple(set_cookies or ()), tuple(cookies_sent), self.ua)
        idx = len(self.records)
        self.records.append(rec)
        receiver = self.g.domain_of(host)
        placed = list(placements or ())
        for tok, shown, param, lab in self.url_tokens.get(referrer or "", ()):
            placed.append((tok, shown, Carrier.REFERRER, param, lab))
        carried = []
        seen = set()
        for p in placed:
            tok, shown, carrier, param = p[:4]
            lab = p[4] if len(p) > 4 else label
            if carrier is not Carrier.REFERRER:
                carried.append((tok, shown, param, lab))
            if (shown, carrier) in seen:
                continue
            seen.add((shown, carrier))
            owners = self.owners_at(tok, self.ts)
            if owners and receiver not in owners:
                self.g.record_sync(self, idx, rec, tok, shown, carrier, param, receiver, lab)
        if carried:
            self.url_tokens[rec.url] = carried
        return idx

    def link(self, prev: int, nxt: int) -> None:
        self.records[prev] = replace(self.records[prev], location=self.records[nxt].url)

    def sent(self, party: Party):
        tok = self.cookies.get(party.domain)
        return ((party.cookie_name, tok),) if tok else ()

    # -- browsing --------------------------------------------------------

    def visit(self, pub: Party) -> None:
        g = self.g
        n_pages = g.rng.randint(*g.cfg.pages_per_visit)
        referrer = None
        for _ in range(n_pages):
            self.tick(200, 3000)
            cookies: list[str] = []
            self.set_cookie(pub, cookies)
            cookies.append(f"sess={g.rng.randrange(10**6):06d}; Path=/")
            path = "/" + g.rng.choice(("news", "sport", "world", "tech", "culture")) + "/" + \
                g.rng.choice(("story", "article", "live", "gallery", "opinion"))
            page = self.emit("https", "www." + pub.domain, path, [], referrer=referrer,
                             set_cookies=cookies, cookies_sent=self.sent(pub))
            self.page(pub, self.records[page].url)
            referrer = self.records[page].url

    def page(self, pub: Party, page_url: str) -> None:
        g, rng = self.g, self.g.rng
        for cdn in rng.sample(g.world.trackers.get("Other", []), min(2, len(g.world.trackers.get("Other", [])))):
            self.tick()
            h = make_token(rng, g.tokens)
            self.emit("https", "cdn." + cdn.domain, f"/static/{h}/app.js", [], referrer=page_url)
        analytics = rng.sample(g.world.trackers["Analytics"], rng.randint(2, min(3, len(g.world.trackers["Analytics"]))))
        pvid = make_token(rng, g.tokens)
        for a in analytics:
            self.tick()
            cookies: list[str] = []
            self.set_cookie(a, cookies)
            self.emit("https", "collect." + a.domain, "/c", [("pvid", pvid), ("v", "2")],
                      referrer=page_url, set_cookies=cookies, cookies_sent=self.sent(a))
        pool = g.embedded + g.world.trackers.get("Social", []) + g.world.providers
        tags = rng.sample(pool, min(len(pool), rng.randint(*g.cfg.tags_per_page)))
        for t in tags:
            flow = None
            if t.category == "Advertising" and rng.random() < g.cfg.sync_prob:
                flow = g.pick_flow()
            self.tag(pub, t, page_url, flow)
        if self.pending_spill and rng.random() < 0.5:
            self.spill(pub, page_url)
        if g.world.providers and rng.random() < g.cfg.provider_share_prob:
            self.provider_share(rng.choice(g.world.providers), page_url)

    def tag(self, pub: Party, t: Party, page_url: str, flow: str | None) -> None:
        g, rng = self.g, self.g.rng
        self.tick()
        cookies: list[str] = []
        self.set_cookie(t, cookies)
        cb = make_token(rng, g.tokens)
        query = [("cb", cb), ("site", pub.code)]
        if flow is None:
            self.emit("https", t.tag_host, "/t.gif", query, referrer=page_url, set_cookies=cookies,
                      cookies_sent=self.sent(t))
            return
        if flow == "PublisherOwnId":
            self.emit("https", t.tag_host, "/t.gif", query, referrer=page_url, set_cookies=cookies,
                      cookies_sent=self.sent(t))
            self.publisher_sync(pub, t, page_url)
            return
        if flow == "ThirdPartyOwnId" and rng.random() < g.cfg.referrer_variant_rate:
            self.emit("https", t.tag_host, "/t.gif", query, referrer=page_url, set_cookies=cookies,
                      cookies_sent=self.sent(t))
            self.iframe_sync(t, page_url)
            return
        head = self.emit("https", t.tag_host, "/t.gif", query, status=302, referrer=page_url,
                         set_cookies=cookies, cookies_sent=self.sent(t))
        if flow == "ThirdPartyRelayPublisherId":
            self.relay_publisher(pub, t, head, page_url)
        else:
            self.chain(t, head, page_url, g.pick_length(flow))

    # -- sync flows ------------------------------------------------------

    def partner_url_parts(self, sender: Party, partner: Party, shown: str):
        rng = self.g.rng
        if partner.path_style:
            return f"/r/id/{shown}/mpid/", [("nid", str(rng.randint(1, 99)))]
        query = [("bidderid", sender.code), (partner.uid_param, shown)]
        if rng.random() < 0.5:
            query.append(("expiration", str(rng.randint(100000, 999999))))
        return "/match", query

    def partner_hop(self, sender: Party, partner: Party, token: str, page_url: str,
                    label: str, status: int, relay: bool = False) -> int:
        """One request handing ``token`` to ``partner`` (may inject extras)."""
        g = self.g
        self.tick(30, 150)
        shown = g.shown(token, partner.domain)
        path, query = self.partner_url_parts(sender, partner, shown)
        carrier = Carrier.PATH if partner.path_style else Carrier.PARAM
        param = None if partner.path_style else partner.uid_param
        pii_kind = None
        if self.pending_pii:
            pii_kind = self.pending_pii.pop()
            query.append((PII_PARAMS[pii_kind][0], PII_PARAMS[pii_kind][1]))
        cookies: list[str] = []
        if relay or g.rng.random() < g.cfg.partner_cookie_rate:
            self.set_cookie(partner, cookies)
        extra_owner = None
        if self.pending_universal and partner.domain not in self.owners.get(token, {}) \
                and len(self.owners.get(token, {})) == 1:
            # receiver adopts the synced ID as its own cookie on a later response
            self.pending_universal -= 1
            extra_owner = ("universal", shown)
        elif self.pending_summary:
            mine = set(self.cookies.values())
            foreign = [t for t, held in sorted(self.owners.items())
                       if t in mine and len(held) == 1 and partner.domain not in held]
            if len(foreign) >= 2:
                self.pending_summary -= 1
                picks = self.g.rng.sample(foreign, 2)
                value = ",".join(
                    f"key={g.code_of(next(iter(self.owners[t])))}:value={t}:expiresat=2027-01-01"
                    for t in picks)
                extra_owner = ("summary", picks, f"idsum={value}")
        idx = self.emit("https", partner.sync_host, path, query, status=status, referrer=page_url,
                        set_cookies=cookies, placements=[(token, shown, carrier, param)],
                        label=label, cookies_sent=self.sent(partner))
        if pii_kind is not None:
            g.manifest.pii.append({"user": self.user, "record_ref": idx, "kind": pii_kind,
                                   "param_name": PII_PARAMS[pii_kind][0]})
        if extra_owner and extra_owner[0] == "universal":
            held = self.owners[token]
            first = min(held, key=lambda d: (held[d], d))
            self.follow_up(partner, page_url, f"xid={shown}")
            # ownership is tracked on the source token so obfuscated twins stay in lockstep
            self.own(token, partner.domain, self.ts)
            g.manifest.universal_ids.append({
                "user": self.user, "token": shown,
                "owners": [g.world.party_of(first).name, partner.name]})
        elif extra_owner:
            self.follow_up(partner, page_url, extra_owner[2])
            for t in extra_owner[1]:
                self.own(t, partner.domain, self.ts)
            g.manifest.summaries.append({"user": self.user, "setter": partner.domain,
                                         "tokens": list(extra_owner[1])})
        return idx

    def follow_up(self, partner: Party, page_url: str, cookie: str) -> None:
        # set on a later response so the receiver does not own the ID at sync time
        self.tick(30, 150)
        self.emit("https", partner.sync_host, "/setuid", [], referrer=page_url,
                  set_cookies=[f"{cookie}; Max-Age={COOKIE_TTL}; Path=/; Domain=.{partner.domain}"])

    def partners(self, exclude: set[str], k: int) -> list[Party]:
        g = self.g
        out = []
        for _ in range(k):
            cat = g.pick_partner_category()
            pool = [p for p in g.world.trackers.get(cat, []) + (g.world.providers if cat == "Advertising" else [])
                    if p.domain not in exclude]
            if not pool:
                pool = [p for p in g.world.trackers["Advertising"] if p.domain not in exclude]
            p = g.rng.choice(pool)
            exclude.add(p.domain)
            out.append(p)
        return out

    def chain(self, head: Party, head_idx: int, page_url: str, length: int) -> None:
        hops = self.partners({head.domain}, length)
        cur, prev = head, head_idx
        refs = [head_idx]
        relayed = False
        for h, p in enumerate(hops):
            # a relay only counts when the current party itself received a sync
            label = "ThirdPartyRelayOwnId" if relayed else "ThirdPartyOwnId"
            status = 302 if h < len(hops) - 1 else 200
            before = len(self.g.manifest.syncs)
            idx = self.partner_hop(cur, p, self.cookies[cur.domain], page_url, label, status,
                                   relay=h < len(hops) - 1)
            relayed = len(self.g.manifest.syncs) > before
            self.link(prev, idx)
            refs.append(idx)
            cur, prev = p, idx
        self.g.manifest.chains.append({"user": self.user, "refs": refs})

    def iframe_sync(self, t: Party, page_url: str) -> None:
        """The ID leaves through the Referer of a pixel loaded inside the tracker's iframe."""
        g = self.g
        (p,) = self.partners({t.domain}, 1)
        token = self.cookies[t.domain]
        shown = g.shown(token, p.domain)
        self.tick(30, 150)
        frame = self.emit("https", t.sync_host, "/frame", [("tid", shown)], referrer=page_url,
                          placements=[(token, shown, Carrier.PARAM, "tid")], label="ThirdPartyOwnId",
                          cookies_sent=self.sent(t))
        frame_url = self.records[frame].url
        self.tick(30, 150)
        cookies: list[str] = []
        self.set_cookie(p, cookies)
        px = self.emit("https", p.sync_host, "/px", [("src", t.code)], referrer=frame_url,
                       set_cookies=cookies, label="ThirdPartyOwnId", cookies_sent=self.sent(p))
        g.manifest.chains.append({"user": self.user, "refs": [frame, px]})

    def publisher_sync(self, pub: Party, x: Party, page_url: str) -> None:
        token = self.cookies[pub.domain]
        self.partner_hop(pub, x, token, page_url, "PublisherOwnId", 200)

    def relay_publisher(self, pub: Party, x: Party, head_idx: int, page_url: str) -> None:
        (y,) = self.partners({x.domain}, 1)
        idx = self.partner_hop(x, y, self.cookies[pub.domain], page_url, "ThirdPartyRelayPublisherId", 200)
        self.link(head_idx, idx)
        self.g.manifest.chains.append({"user": self.user, "refs": [head_idx, idx]})

    def spill(self, pub: Party, page_url: str) -> None:
        """An https-set ID synced to plain-http parties, leaking the page via Referer."""
        g, rng = self.g, self.g.rng
        candidates = [t for t in g.world.trackers["Advertising"]
                      if t.domain in self.cookies and self.cookies[t.domain] not in self.spilled]
        if not candidates:
            return
        t = rng.choice(candidates)
        token = self.cookies[t.domain]
        self.spilled.add(token)
        self.pending_spill -= 1
        for r in self.partners({t.domain}, rng.randint(1, 2)):
            self.tick(30, 150)
            shown = g.shown(token, r.domain)
            self.emit("http", "tags." + r.domain, f"/site/{rng.randint(1000, 9999)}", [("id", shown)],
                      referrer=page_url, placements=[(token, shown, Carrier.PARAM, "id")],
                      label="ThirdPartyOwnId")
        g.manifest.spills.append({"user": self.user, "token": token, "origin": t.domain,
                                  "page": page_url})

    def provider_share(self, pv: Party, page_url: str) -> None:
        g = self.g
        self.tick(30, 150)
        cookies: list[str] = []
        self.set_cookie(pv, cookies)
        token = self.cookies[pv.domain]
        head = self.emit("https", pv.sync_host, "/out", [("uid", token)], status=302, referrer=page_url,
                         set_cookies=cookies, placements=[(token, token, Carrier.PARAM, "uid")])
        self.tick(30, 150)
        before = len(g.manifest.syncs)
        idx = self.emit("https", "in." + pv.sister, "/match", [("src", pv.code), ("uid", token)],
                        referrer=page_url, placements=[(token, token, Carrier.PARAM, "uid")],
                        label="provider-internal")
        self.link(head, idx)
        # internal shares are not syncs: move them to their own list
        moved = g.manifest.syncs[before:]
        del g.manifest.syncs[before:]
        g.manifest.provider_shares.extend(moved)
        g.manifest.chains.append({"user": self.user, "refs": [head, idx]})


class Generator:
    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg.validate()
        self.rng = random.Random(cfg.seed)
        self.key = hashlib.blake2b(f"conrad-synth-{cfg.seed}".encode(), digest_size=16).digest()
        self.tokens: set[str] = set()
        self.world = build_world(cfg, self.rng)
        self.catalog = self.world.catalog()
        self._domain_cache: dict[str, str] = {}
        self.manifest = Manifest(cfg.seed, cfg.to_json(), self.catalog.to_json())
        mix = cfg.initiator_mix
        self.flow_weights = {
            "PublisherOwnId": mix.get("PublisherOwnId", 0.0),
            "ThirdPartyOwnId": mix.get("ThirdPartyOwnId", 0.0) + mix.get("ThirdPartyRelayOwnId", 0.0) * 0,
            "ThirdPartyRelayPublisherId": mix.get("ThirdPartyRelayPublisherId", 0.0),
        }
        if self.flow_weights["ThirdPartyOwnId"] == 0 and mix.get("ThirdPartyRelayOwnId", 0) > 0:
            self.flow_weights["ThirdPartyOwnId"] = mix["ThirdPartyRelayOwnId"]
        self.codes = {p.domain: p.code for p in self.world.all_parties()}
        # the rest of the advertisers are only reached through syncs
        ads = self.world.trackers["Advertising"]
        self.embedded = ads[: max(2, round(len(ads) * cfg.tag_share))]

    def domain_of(self, host: str) -> str:
        d = self._domain_cache.get(host)
        if d is None:
            parts = host.split(".")
            d = ".".join(parts[-2:])
            self._domain_cache[host] = d
        return d

    def code_of(self, domain: str) -> str:
        return self.codes.get(domain, "x")

    def shown(self, token: str, receiver: str) -> str:
        if self.cfg.obfuscation_rate > 0 and _unit(self.key, "obf", token, receiver) < self.cfg.obfuscation_rate:
            return obfuscate(token, receiver, self.key)
        return token

    def pick_flow(self) -> str:
        names = list(self.flow_weights)
        return self.rng.choices(names, weights=[self.flow_weights[n] for n in names])[0]

    def pick_length(self, flow: str) -> int:
        lengths = sorted(self.cfg.chain_length)
        return self.rng.choices(lengths, weights=[self.cfg.chain_length[l] for l in lengths])[0]

    def pick_partner_category(self) -> str:
        cats = sorted(c for c, w in self.cfg.partner_categories.items() if w > 0 and self.world.trackers.get(c))
        return self.rng.choices(cats, weights=[self.cfg.partner_categories[c] for c in cats])[0]

    def record_sync(self, u: _User, idx: int, rec: HttpRecord, token: str, shown: str,
                    carrier: Carrier, param: str | None, receiver: str, label: str | None) -> None:
        held = u.owners[token]
        owner = min(held, key=lambda d: (held[d], d))
        party = self.world.party_of(receiver)
        feats = FeatureVector(
            entity_name=party.name if party else receiver,
            type_of_entity=party.category if party else "Other",
            param_name=param if carrier is Carrier.PARAM else carrier.value.upper(),
            where_found=carrier.value,
            status_code=str(rec.status) if rec.status is not None else "NA",
            browser=u.family,
            no_of_params=len(rec.query),
        )
        self.manifest.syncs.append({
            "user": u.user, "record_ref": idx, "token": token, "shown_token": shown,
            "owner": owner, "receiver": receiver, "carrier": carrier.value, "param_name": param,
            "initiator": label, "obfuscated": shown != token, "features": feats.to_json(),
        })

    def _distribute(self, total: int, users: list[_User], attr: str) -> None:
        for i in range(total):
            u = users[i % len(users)]
            setattr(u, attr, getattr(u, attr) + 1)

    def run(self) -> tuple[list[HttpRecord], Manifest]:
        cfg, rng = self.cfg, self.rng
        families = [f for f in BROWSERS if f in USER_AGENTS]
        users = []
        for i in range(cfg.n_users):
            fam = rng.choices(families, weights=[0.45, 0.2, 0.2, 0.05, 0.05, 0.05][:len(families)])[0]
            users.append(_User(self, f"u{i:04d}", fam, EPOCH + i * 997))
        kinds = [k for k in sorted(cfg.pii) for _ in range(cfg.pii[k])]
        for i, kind in enumerate(kinds):
            users[i % len(users)].pending_pii.append(kind)
        self._distribute(cfg.universal_ids, users, "pending_universal")
        self._distribute(cfg.summaries, users, "pending_summary")
        self._distribute(cfg.spills, users, "pending_spill")

        for u in users:
            for day in range(cfg.days):
                n = int(cfg.visits_per_day) + (1 if rng.random() < cfg.visits_per_day % 1 else 0)
                starts = sorted(rng.sample(range(8 * 60, 22 * 60, 10), n))
                for minute in starts:
                    u.ts = max(u.ts + 1, EPOCH + day * DAY_MS + minute * 60_000 + int(u.user[1:]) * 997)
                    if u.visited and rng.random() < cfg.revisit_rate:
                        pub = rng.choice(u.visited)
                    else:
                        pub = rng.choice(self.world.publishers)
                        if pub not in u.visited:
                            u.visited.append(pub)
                    u.visit(pub)
            left = {"pii": len(u.pending_pii), "universal_ids": u.pending_universal,
                    "summaries": u.pending_summary, "spills": u.pending_spill}
            if any(left.values()):
                raise ConfigError(f"user {u.user}: could not place injections {left}; "
                                  "raise days/visits or sync_prob")
        records = sort_records(r for u in users for r in u.records)
        self.manifest.users = [u.user for u in users]
        self.manifest.n_records = len(records)
        return records, self.manifest


def generate(cfg: ScenarioConfig) -> tuple[list[HttpRecord], Manifest]:
    return Generator(cfg).run()


def corpus_for(cfg: ScenarioConfig) -> list[LabeledExample]:
    """The planted-correlation corpus described by ``cfg`` (empty if size is 0)."""
    if cfg.corpus_size <= 0:
        return []
    return generate_corpus(cfg.corpus_size, cfg.seed, cfg.corpus_weights, cfg.corpus_strength)


# --------------------------------------------------------------------------
# planted-correlation classifier corpus
# --------------------------------------------------------------------------

_CORPUS_CATEGORIES = ("Advertising", "Analytics", "Social", "Content", "Other")
_STATUS = ("200", "204", "301", "302", "303", "307", "404", "NA")


def generate_corpus(n: int, seed: int = 42, weights: dict | None = None,
                    strength: dict | None = None, n_entities: int = 60,
                    n_params: int = 40) -> list[LabeledExample]:
    """Labelled feature vectors with class-dependent value distributions.

    Each categorical feature draws, with probability ``strength[f]``, from a
    class-specific distribution concentrated on a few values, else from a
    shared base distribution. NoOfParams is drawn the same way for every
    class so it carries no signal at strength 0.
    """
    weights = weights or {c: 1.0 for c in LABELS}
    strength = strength or ScenarioConfig().corpus_strength
    rng = np.random.default_rng(seed)
    classes = [c for c in LABELS if weights.get(c, 0) > 0]
    if not classes:
        raise ConfigError("corpus needs at least one class with positive weight")

    entities = [f"Ent{i:02d}" for i in range(n_entities)]
    ent_cat = {e: _CORPUS_CATEGORIES[int(rng.integers(len(_CORPUS_CATEGORIES)))] for e in entities}
    params = sorted(set(SYNC_PARAMS) | {f"p{i}" for i in range(max(0, n_params - len(SYNC_PARAMS)))})
    vocab = {
        "entity_name": entities,
        "param_name": params + ["PATH", "REFERRER"],
        "status_code": list(_STATUS),
        "browser": list(BROWSERS),
        "where_found": [c.value for c in Carrier],
    }

    def partitioned(size: int) -> dict[str, np.ndarray]:
        # each class owns a disjoint slice of the vocabulary
        order = rng.permutation(size)
        out = {}
        for j, c in enumerate(classes):
            own = order[j::len(classes)] if size >= len(classes) else order
            p = np.zeros(size)
            p[own] = rng.dirichlet(np.ones(len(own)) * 2)
            out[c] = p
        return out

    base = {f: rng.dirichlet(np.ones(len(v)) * 2) for f, v in vocab.items()}
    # most IDs travel in URL parameters
    base["where_found"] = np.array([0.8 if v == "Param" else 0.1 for v in vocab["where_found"]])
    parts = {f: partitioned(len(v)) for f, v in vocab.items()}
    specific = {c: {f: parts[f][c] for f in vocab} for c in classes}
    nparam_p = rng.dirichlet(np.ones(8) * 3)

    w = np.array([weights[c] for c in classes], dtype=float)
    counts = np.floor(w / w.sum() * n).astype(int)
    counts[: n - counts.sum()] += 1
    out = []
    for c, cnt in zip(classes, counts):
        draws = {}
        for f, values in vocab.items():
            s = strength.get(f, 0.0)
            use_specific = rng.random(cnt) < s
            a = rng.choice(len(values), size=cnt, p=specific[c][f])
            b = rng.choice(len(values), size=cnt, p=base[f])
            draws[f] = np.where(use_specific, a, b)
        nparams = rng.choice(8, size=cnt, p=nparam_p)
        for i in range(cnt):
            ent = entities[draws["entity_name"][i]]
            where = vocab["where_found"][draws["where_found"][i]]
            param = vocab["param_name"][draws["param_name"][i]]
            if where != "Param":
                param = where.upper()
            elif param in ("PATH", "REFERRER"):
                param = params[draws["param_name"][i] % len(params)]
            # type follows the entity most of the time, else class-driven noise
            if rng.random() < strength.get("type_of_entity", 0.0):
                kind = ent_cat[ent]
            else:
                kind = _CORPUS_CATEGORIES[int(rng.integers(len(_CORPUS_CATEGORIES)))]
            fv = FeatureVector(ent, kind, param, where, vocab["status_code"][draws["status_code"][i]],
                               vocab["browser"][draws["browser"][i]], int(nparams[i]))
            out.append(LabeledExample(fv, c, "synthetic", len(out), ""))
    order = rng.permutation(len(out))
    return [out[i] for i in order]
