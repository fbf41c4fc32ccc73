"""Set-Cookie parsing and the per-user repository of cookie IDs."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from email.utils import parsedate_to_datetime
from typing import Iterable
from urllib.parse import unquote

from .domains import UnregistrableHost, registrable_domain, domain_or_host
from .idscan import DEFAULT_DELIMITERS, DEFAULT_PREDICATE, IdPredicate, split_value
from .traffic import HttpRecord

__all__ = [
    "CookieRecord", "Rejection", "IdRepository", "parse_set_cookie", "split_value",
    "record_cookie", "build_repository",
]

_EXPIRES_FORMATS = (
    "%a, %d-%b-%Y %H:%M:%S %Z",
    "%a, %d-%b-%y %H:%M:%S %Z",
    "%A, %d-%b-%y %H:%M:%S %Z",
    "%a, %d %b %Y %H:%M:%S %Z",
)


@dataclass(frozen=True)
class CookieRecord:
    user_id: str
    setter_domain: str
    name: str
    raw_value: str
    id_tokens: tuple[str, ...]
    expires_at: int | None
    set_at: int
    secure_context: bool
    record_ref: int | None = None

    def to_json(self) -> dict:
        d = asdict(self)
        d["id_tokens"] = list(self.id_tokens)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "CookieRecord":
        d = dict(d)
        d["id_tokens"] = tuple(d.get("id_tokens") or ())
        return cls(**d)


@dataclass(frozen=True)
class Rejection:
    reason: str  # "session" | "malformed" | "already-expired"
    header: str

    def __bool__(self):
        return False


def _parse_expires(value: str) -> int | None:
    value = value.strip().strip('"')
    try:
        dt = parsedate_to_datetime(value)
    except (TypeError, ValueError, IndexError):
        dt = None
    if dt is None:
        for fmt in _EXPIRES_FORMATS:
            try:
                dt = datetime.strptime(value, fmt)
                break
            except ValueError:
                continue
    if dt is None:
        return None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp() * 1000)


def parse_set_cookie(header: str, ctx: HttpRecord, record_ref: int | None = None,
                     predicate: IdPredicate | None = None,
                     delimiters=DEFAULT_DELIMITERS) -> CookieRecord | Rejection:
    """Parse one Set-Cookie header in the context of the response carrying it.

    Only persistent cookies (Max-Age or Expires) are returned; anything else
    comes back as a falsy :class:`Rejection`.
    """
    predicate = predicate or DEFAULT_PREDICATE
    parts = header.split(";")
    first = parts[0].strip()
    if "=" not in first:
        return Rejection("malformed", header)
    name, value = first.split("=", 1)
    name = name.strip()
    value = value.strip()
    if not name:
        return Rejection("malformed", header)
    if len(value) >= 2 and value[0] == value[-1] == '"':
        value = value[1:-1]

    max_age = expires = domain = None
    for attr in parts[1:]:
        key, _, val = attr.strip().partition("=")
        key = key.strip().lower()
        if key == "max-age":
            try:
                max_age = int(val.strip())
            except ValueError:
                return Rejection("malformed", header)
        elif key == "expires":
            expires = _parse_expires(val)
            if expires is None:
                return Rejection("malformed", header)
        elif key == "domain" and val.strip():
            domain = val.strip().lstrip(".").lower()

    if max_age is not None:
        if max_age <= 0:
            return Rejection("already-expired", header)
        expires_at = ctx.timestamp + max_age * 1000
    elif expires is not None:
        if expires <= ctx.timestamp:
            return Rejection("already-expired", header)
        expires_at = expires
    else:
        return Rejection("session", header)

    try:
        setter = registrable_domain(domain) if domain else domain_or_host(ctx.host)
    except UnregistrableHost:
        return Rejection("malformed", header)

    tokens = []
    for frag in split_value(unquote(value), delimiters):
        if predicate(frag) and frag not in tokens:
            tokens.append(frag)
    return CookieRecord(
        user_id=ctx.user_id,
        setter_domain=setter,
        name=name,
        raw_value=value,
        id_tokens=tuple(tokens),
        expires_at=expires_at,
        set_at=ctx.timestamp,
        secure_context=ctx.scheme == "https",
        record_ref=record_ref,
    )


@dataclass
class IdRepository:
    """token -> {owner domain: first_seen}, plus the reverse domain index."""

    user_id: str | None = None
    owners: dict[str, dict[str, int]] = field(default_factory=dict)
    by_domain: dict[str, set[str]] = field(default_factory=dict)

    def __len__(self):
        return len(self.owners)

    def __contains__(self, token: str) -> bool:
        return token in self.owners

    def add(self, token: str, owner: str, first_seen: int) -> None:
        held = self.owners.setdefault(token, {})
        if owner not in held or first_seen < held[owner]:
            held[owner] = first_seen
        self.by_domain.setdefault(owner, set()).add(token)

    def owners_at(self, token: str, ts: int | None = None) -> dict[str, int]:
        """Owners of ``token`` whose cookie was set at or before ``ts``."""
        held = self.owners.get(token, {})
        if ts is None:
            return dict(held)
        return {d: t for d, t in held.items() if t <= ts}

    def first_seen(self, token: str) -> int | None:
        held = self.owners.get(token)
        return min(held.values()) if held else None

    def earliest_owner(self, token: str, ts: int | None = None) -> str | None:
        held = self.owners_at(token, ts)
        if not held:
            return None
        return min(held.items(), key=lambda kv: (kv[1], kv[0]))[0]

    def to_json(self) -> dict:
        return {
            "user": self.user_id,
            "tokens": {
                tok: [[d, t] for d, t in sorted(held.items(), key=lambda kv: (kv[1], kv[0]))]
                for tok, held in sorted(self.owners.items())
            },
        }

    @classmethod
    def from_json(cls, d: dict) -> "IdRepository":
        repo = cls(d.get("user"))
        for tok, pairs in d.get("tokens", {}).items():
            for owner, ts in pairs:
                repo.add(tok, owner, int(ts))
        return repo


def record_cookie(repo: IdRepository, c: CookieRecord) -> IdRepository:
    if repo.user_id is not None and c.user_id != repo.user_id:
        raise ValueError(f"cookie for user {c.user_id!r} given to repository of {repo.user_id!r}")
    for tok in c.id_tokens:
        repo.add(tok, c.setter_domain, c.set_at)
    return repo


def extract_cookies(records: Iterable[HttpRecord], predicate: IdPredicate | None = None,
                    ) -> tuple[list[CookieRecord], dict[str, int]]:
    """All persistent cookies of a stream plus rejection counts by reason."""
    cookies: list[CookieRecord] = []
    rejected: dict[str, int] = {}
    for i, rec in enumerate(records):
        for header in rec.set_cookies:
            c = parse_set_cookie(header, rec, record_ref=i, predicate=predicate)
            if isinstance(c, Rejection):
                rejected[c.reason] = rejected.get(c.reason, 0) + 1
            else:
                cookies.append(c)
    return cookies, rejected


def build_repository(cookies: Iterable[CookieRecord], user_id: str | None = None) -> IdRepository:
    repo = IdRepository(user_id)
    for c in cookies:
        record_cookie(repo, c)
    return repo


def dump_cookie_store(store: dict[str, tuple[list[CookieRecord], IdRepository]]) -> str:
    """Serialize per-user cookies and repositories for pipeline staging."""
    doc = {
        "users": {
            user: {"cookies": [c.to_json() for c in cookies], "repo": repo.to_json()}
            for user, (cookies, repo) in sorted(store.items())
        }
    }
    return json.dumps(doc, sort_keys=True, indent=1)


def load_cookie_store(text: str) -> dict[str, tuple[list[CookieRecord], IdRepository]]:
    doc = json.loads(text)
    out = {}
    for user, entry in doc.get("users", {}).items():
        cookies = [CookieRecord.from_json(c) for c in entry.get("cookies", [])]
        out[user] = (cookies, IdRepository.from_json(entry.get("repo", {"user": user})))
    return out
