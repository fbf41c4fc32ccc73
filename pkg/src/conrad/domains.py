"""Registrable-domain (eTLD+1) resolution against a bundled public-suffix snapshot.

The snapshot lives in ``data/public_suffix_list.dat`` and only its ICANN
section is used, so private registry entries (``s3.amazonaws.com`` and the
like) do not split provider domains.
"""

from __future__ import annotations

import ipaddress
from functools import lru_cache
from importlib import resources
from typing import NewType

RegistrableDomain = NewType("RegistrableDomain", str)

PSL_SNAPSHOT = "2019-12-21"
_ICANN_END = "===END ICANN DOMAINS==="


class UnregistrableHost(ValueError):
    pass


class SuffixList:
    """Public-suffix rule set: plain rules, wildcards and exceptions."""

    def __init__(self, lines):
        self.rules: set[str] = set()
        self.wildcards: set[str] = set()
        self.exceptions: set[str] = set()
        for line in lines:
            line = line.strip()
            if _ICANN_END in line:
                break
            if not line or line.startswith("//"):
                continue
            rule = line.split()[0].lower()
            if not rule.isascii():
                # logs carry punycode hosts
                try:
                    rule = rule.encode("idna").decode("ascii")
                except UnicodeError:
                    continue
            if rule.startswith("!"):
                self.exceptions.add(rule[1:])
            elif rule.startswith("*."):
                self.wildcards.add(rule[2:])
            else:
                self.rules.add(rule)

    @classmethod
    def bundled(cls) -> "SuffixList":
        text = resources.files("conrad").joinpath("data/public_suffix_list.dat").read_text(encoding="utf-8")
        return cls(text.splitlines())

    def public_suffix_len(self, labels: list[str]) -> int:
        """Number of trailing labels forming the public suffix of ``labels``."""
        best = 1  # implicit "*" rule
        n = len(labels)
        for i in range(n):
            cand = ".".join(labels[i:])
            if cand in self.exceptions:
                return n - i - 1
            size = n - i
            if cand in self.rules and size > best:
                best = size
            parent = ".".join(labels[i + 1:])
            if i + 1 < n and parent in self.wildcards and size > best:
                best = size
        return best


@lru_cache(maxsize=1)
def default_suffix_list() -> SuffixList:
    return SuffixList.bundled()


def _is_ip(host: str) -> bool:
    try:
        ipaddress.ip_address(host.strip("[]"))
        return True
    except ValueError:
        return False


@lru_cache(maxsize=65536)
def registrable_domain(host: str) -> RegistrableDomain:
    """Return the eTLD+1 of ``host``; IP literals come back unchanged.

    >>> registrable_domain("d.turn.com")
    'turn.com'
    >>> registrable_domain("a.b.co.uk")
    'b.co.uk'
    """
    if not host:
        raise UnregistrableHost("empty host")
    host = host.strip().lower().rstrip(".")
    if ":" in host and not host.startswith("["):
        # host:port, but leave bare IPv6 literals alone
        if host.count(":") == 1:
            host = host.split(":", 1)[0]
    if _is_ip(host):
        return RegistrableDomain(host)
    labels = [label for label in host.split(".") if label]
    if not labels:
        raise UnregistrableHost(f"unregistrable host: {host!r}")
    k = default_suffix_list().public_suffix_len(labels)
    if k >= len(labels):
        raise UnregistrableHost(f"unregistrable host: {host!r}")
    return RegistrableDomain(".".join(labels[-(k + 1):]))


def domain_or_host(host: str) -> str:
    """Lenient variant used on traffic: falls back to the host itself."""
    try:
        return registrable_domain(host)
    except UnregistrableHost:
        return host.lower()
