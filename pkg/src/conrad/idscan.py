"""ID-looking string predicate and per-record carrier scanning."""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence
from urllib.parse import unquote, urlsplit

from .domains import domain_or_host
from .traffic import HttpRecord, split_query

MIN_ID_LENGTH = 10  # strictly longer than this
DEFAULT_DELIMITERS = (":", "&", ";", "|", ",", "=")

_ID_CHARSET = re.compile(r"^[A-Za-z0-9_\-]+$")
_ISO_DATE = re.compile(r"^\d{4}-\d{2}-\d{2}(?:[T_\-]\d{2}.*)?$")


class Carrier(str, Enum):
    PARAM = "Param"
    PATH = "Path"
    REFERRER = "Referrer"


def split_value(raw_value: str, delimiters: Sequence[str] = DEFAULT_DELIMITERS) -> list[str]:
    """Split on any delimiter, dropping empty fragments, keeping order."""
    if not raw_value:
        return []
    pattern = "|".join(re.escape(d) for d in delimiters)
    return [frag for frag in re.split(pattern, raw_value) if frag]


def load_denylist(path: str | Path | None = None) -> frozenset[str]:
    if path is None:
        text = resources.files("conrad").joinpath("data/id_denylist.txt").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    tokens = set()
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            tokens.add(line)
    return frozenset(tokens)


@lru_cache(maxsize=1)
def _default_denylist() -> frozenset[str]:
    return load_denylist()


class IdPredicate:
    """Decides whether a string looks like a user identifier.

    ``strict`` mode checks length only; ``extended`` also requires the
    ``[A-Za-z0-9_-]`` charset, a digit or mixed case, and absence from the
    denylist.
    """

    MODES = ("extended", "strict")

    def __init__(self, mode: str = "extended", denylist: Iterable[str] | None = None):
        if mode not in self.MODES:
            raise ValueError(f"unknown id predicate mode {mode!r}")
        self.mode = mode
        self.denylist = frozenset(denylist) if denylist is not None else _default_denylist()

    def __call__(self, s: str) -> bool:
        if len(s) <= MIN_ID_LENGTH:
            return False
        if self.mode == "strict":
            return True
        if not _ID_CHARSET.match(s) or s in self.denylist or _ISO_DATE.match(s):
            return False
        has_digit = any(c.isdigit() for c in s)
        mixed_case = any(c.isupper() for c in s) and any(c.islower() for c in s)
        return has_digit or mixed_case

    def __repr__(self):
        return f"IdPredicate({self.mode!r})"


DEFAULT_PREDICATE = IdPredicate()


def is_id_looking(s: str, predicate: IdPredicate | None = None) -> bool:
    return (predicate or DEFAULT_PREDICATE)(s)


@dataclass(frozen=True)
class IdSighting:
    token: str
    carrier: Carrier
    param_name: str | None
    record_ref: int
    receiver_domain: str
    sender_hint: str | None


def _value_tokens(value: str, predicate: IdPredicate) -> list[str]:
    value = unquote(value)
    if predicate(value):
        return [value]
    return [frag for frag in split_value(value) if predicate(frag)]


def _path_tokens(path: str, predicate: IdPredicate) -> list[str]:
    out = []
    for segment in path.split("/"):
        if segment:
            out.extend(_value_tokens(segment, predicate))
    return out


class Scanner:
    """Extracts ID sightings from query values, path segments and referrer."""

    def __init__(self, predicate: IdPredicate | None = None, scan_path: bool = True,
                 scan_referrer: bool = True):
        self.predicate = predicate or DEFAULT_PREDICATE
        self.scan_path = scan_path
        self.scan_referrer = scan_referrer

    def scan(self, record: HttpRecord, record_ref: int = 0) -> list[IdSighting]:
        pred = self.predicate
        receiver = domain_or_host(record.host)
        sender_hint = None
        ref_parts = None
        if record.referrer:
            try:
                ref_parts = urlsplit(record.referrer)
                if ref_parts.hostname:
                    sender_hint = domain_or_host(ref_parts.hostname)
            except ValueError:
                ref_parts = None

        found: list[tuple[str, Carrier, str | None]] = []
        for name, value in record.query:
            for tok in _value_tokens(value, pred):
                found.append((tok, Carrier.PARAM, name))
        if self.scan_path:
            for tok in _path_tokens(record.path, pred):
                found.append((tok, Carrier.PATH, None))
        if self.scan_referrer and ref_parts is not None:
            for name, value in split_query(ref_parts.query):
                for tok in _value_tokens(value, pred):
                    found.append((tok, Carrier.REFERRER, name))
            for tok in _path_tokens(ref_parts.path, pred):
                found.append((tok, Carrier.REFERRER, None))

        seen = set()
        out = []
        for tok, carrier, name in found:
            if (tok, carrier) in seen:
                continue
            seen.add((tok, carrier))
            out.append(IdSighting(tok, carrier, name, record_ref, receiver, sender_hint))
        return out


_DEFAULT_SCANNER = Scanner()


def scan_record(record: HttpRecord, record_ref: int = 0, scanner: Scanner | None = None) -> list[IdSighting]:
    return (scanner or _DEFAULT_SCANNER).scan(record, record_ref)
