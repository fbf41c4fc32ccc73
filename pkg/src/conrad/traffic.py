"""Canonical traffic records and the HAR / JSONL weblog readers."""

from __future__ import annotations

import io
import json
import logging
import re
from dataclasses import dataclass, field
from datetime import datetime
from typing import IO, Iterable, Iterator, Sequence
from urllib.parse import urlsplit

log = logging.getLogger(__name__)

SCHEMES = ("http", "https")
MALFORMED_LIMIT = 0.10

Pairs = tuple[tuple[str, str], ...]


class IngestError(Exception):
    """Input could not be ingested at all."""


class HarParseError(IngestError):
    def __init__(self, msg: str, offset: int):
        super().__init__(f"{msg} (byte offset {offset})")
        self.offset = offset


class TooManyMalformed(IngestError):
    pass


@dataclass(frozen=True)
class HttpRecord:
    user_id: str
    timestamp: int
    method: str
    scheme: str
    host: str
    path: str = "/"
    query: Pairs = ()
    status: int | None = None
    referrer: str | None = None
    location: str | None = None
    set_cookies: tuple[str, ...] = ()
    cookies_sent: Pairs = ()
    user_agent: str | None = None

    def __post_init__(self):
        if not self.host or self.host != self.host.lower():
            raise ValueError(f"host must be non-empty lowercase: {self.host!r}")
        if self.timestamp <= 0:
            raise ValueError("timestamp must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unsupported scheme {self.scheme!r}")

    @property
    def url(self) -> str:
        return build_url(self.scheme, self.host, self.path, self.query)

    def to_json(self) -> dict:
        return {
            "user": self.user_id,
            "ts": self.timestamp,
            "method": self.method,
            "scheme": self.scheme,
            "host": self.host,
            "path": self.path,
            "query": [list(p) for p in self.query],
            "status": self.status,
            "referrer": self.referrer,
            "location": self.location,
            "set_cookies": list(self.set_cookies),
            "cookies": [list(p) for p in self.cookies_sent],
            "ua": self.user_agent,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "HttpRecord":
        for key in ("user", "ts", "method", "scheme", "host"):
            if key not in obj or obj[key] is None:
                raise ValueError(f"missing field {key!r}")
        ts = obj["ts"]
        if isinstance(ts, bool) or not isinstance(ts, int):
            raise ValueError("ts must be an integer")
        status = obj.get("status")
        if status is not None and (isinstance(status, bool) or not isinstance(status, int)):
            raise ValueError("status must be an integer or null")
        return cls(
            user_id=str(obj["user"]),
            timestamp=ts,
            method=str(obj["method"]).upper(),
            scheme=str(obj["scheme"]),
            host=str(obj["host"]),
            path=str(obj.get("path") or "/"),
            query=_pairs(obj.get("query") or ()),
            status=status,
            referrer=obj.get("referrer"),
            location=obj.get("location"),
            set_cookies=tuple(str(s) for s in obj.get("set_cookies") or ()),
            cookies_sent=_pairs(obj.get("cookies") or ()),
            user_agent=obj.get("ua"),
        )


def _pairs(items) -> Pairs:
    out = []
    for item in items:
        if len(item) != 2:
            raise ValueError(f"expected [name, value] pair, got {item!r}")
        out.append((str(item[0]), str(item[1])))
    return tuple(out)


def build_url(scheme: str, host: str, path: str, query: Sequence[tuple[str, str]]) -> str:
    url = f"{scheme}://{host}{path or '/'}"
    if query:
        url += "?" + "&".join(f"{k}={v}" for k, v in query)
    return url


def split_query(qs: str) -> Pairs:
    """Split a raw query string keeping order, duplicates and encoding."""
    if not qs:
        return ()
    out = []
    for part in qs.split("&"):
        if not part:
            continue
        name, _, value = part.partition("=")
        out.append((name, value))
    return tuple(out)


def record_from_url(url: str, **kwargs) -> HttpRecord:
    parts = urlsplit(url)
    return HttpRecord(
        scheme=parts.scheme.lower(),
        host=(parts.hostname or "").lower(),
        path=parts.path or "/",
        query=split_query(parts.query),
        **kwargs,
    )


@dataclass
class IngestResult:
    records: list[HttpRecord]
    skipped: int = 0
    issues: list[str] = field(default_factory=list)
    out_of_order: int = 0
    filtered: int = 0

    @property
    def warnings(self) -> int:
        return self.skipped


def sort_records(records: Iterable[HttpRecord]) -> list[HttpRecord]:
    return sorted(records, key=lambda r: r.timestamp)


def by_user(records: Iterable[HttpRecord]) -> dict[str, list[HttpRecord]]:
    """Partition into per-user streams, each stably time-sorted."""
    users: dict[str, list[HttpRecord]] = {}
    for r in records:
        users.setdefault(r.user_id, []).append(r)
    return {u: sort_records(rs) for u, rs in sorted(users.items())}


def _ua_filter(patterns: Sequence[str] | None):
    if not patterns:
        return lambda ua: False
    rx = [re.compile(p, re.I) for p in patterns]
    return lambda ua: ua is not None and any(r.search(ua) for r in rx)


def _as_text(stream: IO | bytes | str) -> str:
    if isinstance(stream, bytes):
        return stream.decode("utf-8")
    if isinstance(stream, str):
        return stream
    data = stream.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data


# --------------------------------------------------------------------------
# JSONL weblog
# --------------------------------------------------------------------------

def iter_weblog_lines(stream: IO | bytes | str) -> Iterator[tuple[int, str]]:
    text = _as_text(stream)
    for lineno, line in enumerate(io.StringIO(text), start=1):
        line = line.strip()
        if line:
            yield lineno, line


def ingest_weblog(stream, ua_denylist: Sequence[str] | None = None) -> IngestResult:
    """Parse newline-delimited JSON records in file order.

    Malformed lines are skipped and reported; more than 10% malformed is a
    hard failure.
    """
    deny = _ua_filter(ua_denylist)
    records: list[HttpRecord] = []
    result = IngestResult(records)
    total = 0
    last_ts = None
    for lineno, line in iter_weblog_lines(stream):
        total += 1
        try:
            rec = HttpRecord.from_json(json.loads(line))
        except (ValueError, TypeError, AttributeError) as exc:
            result.skipped += 1
            result.issues.append(f"line {lineno}: {exc}")
            continue
        if deny(rec.user_agent):
            result.filtered += 1
            continue
        if last_ts is not None and rec.timestamp < last_ts:
            result.out_of_order += 1
        last_ts = rec.timestamp
        records.append(rec)
    if total and result.skipped / total > MALFORMED_LIMIT:
        raise TooManyMalformed(
            f"{result.skipped}/{total} malformed lines exceeds {MALFORMED_LIMIT:.0%}; first: {result.issues[0]}"
        )
    for issue in result.issues:
        log.warning("skipped %s", issue)
    if result.out_of_order:
        log.warning("%d out-of-order timestamps", result.out_of_order)
    return result


def write_weblog(records: Iterable[HttpRecord], fh: IO[str]) -> None:
    for r in records:
        fh.write(json.dumps(r.to_json(), separators=(",", ":")) + "\n")


def dumps_weblog(records: Iterable[HttpRecord]) -> str:
    buf = io.StringIO()
    write_weblog(records, buf)
    return buf.getvalue()


# --------------------------------------------------------------------------
# HAR 1.2
# --------------------------------------------------------------------------

def _har_time(value: str) -> int:
    dt = datetime.fromisoformat(value.replace("Z", "+00:00"))
    return int(round(dt.timestamp() * 1000))


def _headers(items, name: str) -> list[str]:
    name = name.lower()
    return [h["value"] for h in items or () if str(h.get("name", "")).lower() == name]


def _har_entry(entry: dict, user: str) -> HttpRecord:
    req = entry["request"]
    resp = entry.get("response") or {}
    url = req["url"]
    parts = urlsplit(url)
    req_headers = req.get("headers") or []
    resp_headers = resp.get("headers") or []

    cookies = tuple((c["name"], c.get("value", "")) for c in req.get("cookies") or ())
    if not cookies:
        pairs = []
        for header in _headers(req_headers, "cookie"):
            for chunk in header.split(";"):
                if "=" in chunk:
                    k, v = chunk.strip().split("=", 1)
                    pairs.append((k, v))
        cookies = tuple(pairs)

    status = resp.get("status")
    if not isinstance(status, int) or status <= 0:
        status = None
    location = (_headers(resp_headers, "location") or [resp.get("redirectURL") or None])[0]
    referrer = (_headers(req_headers, "referer") or [None])[0]
    ua = (_headers(req_headers, "user-agent") or [None])[0]
    set_cookies = []
    for value in _headers(resp_headers, "set-cookie"):
        # some exporters fold multiple Set-Cookie headers with newlines
        set_cookies.extend(v for v in value.split("\n") if v.strip())
    return HttpRecord(
        user_id=user,
        timestamp=_har_time(entry["startedDateTime"]),
        method=str(req["method"]).upper(),
        scheme=parts.scheme.lower(),
        host=(parts.hostname or "").lower(),
        path=parts.path or "/",
        query=split_query(parts.query),
        status=status,
        referrer=referrer,
        location=location or None,
        set_cookies=tuple(set_cookies),
        cookies_sent=cookies,
        user_agent=ua,
    )


def ingest_har(stream, user: str, ua_denylist: Sequence[str] | None = None) -> IngestResult:
    """One record per HAR entry, sorted by ``startedDateTime``.

    HAR carries no user identity, so ``user`` labels every record.
    """
    raw = stream if isinstance(stream, (bytes, str)) else stream.read()
    text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise HarParseError(f"malformed HAR JSON: {exc.msg}", offset) from None
    try:
        entries = doc["log"]["entries"]
    except (KeyError, TypeError):
        raise IngestError("not a HAR document: missing log.entries") from None

    deny = _ua_filter(ua_denylist)
    result = IngestResult([])
    parsed = []
    for i, entry in enumerate(entries):
        try:
            rec = _har_entry(entry, user)
        except (KeyError, TypeError, ValueError) as exc:
            result.skipped += 1
            result.issues.append(f"entry {i}: {exc!r}")
            continue
        if deny(rec.user_agent):
            result.filtered += 1
            continue
        parsed.append(rec)
    if result.skipped:
        log.warning("skipped %d HAR entries missing mandatory fields", result.skipped)
    result.records = sort_records(parsed)
    return result
