"""Hand-built traces shared by the test modules.

Every value asserted against these fixtures was worked out by hand from the
fixture definition, never by running the code under test.
"""

from __future__ import annotations

from conrad.entities import EntityCatalog
from conrad.traffic import HttpRecord, record_from_url

T0 = 1_426_598_000_000
YEAR = "Max-Age=31536000"

# token from the three-request sync example (atemda -> turn -> bidtheater)
SYNC_TOKEN = "L2zaWQvMS9lkLzMxOUwOTUw"
ATEMDA_URL = f"http://a.atemda.com/id/csync?s={SYNC_TOKEN}"
TURN_URL = f"http://d.turn.com/r/id/{SYNC_TOKEN}/mpid/"
BIDTHEATER_URL = (f"http://bidtheater.com/UserMatch.ashx?bidderid=23&bidderuid={SYNC_TOKEN}"
                  "&expiration=1426598931")

TAPAD_ID = "D0821FA0-8A80-4D9E-BC85-C40EAC4E4FF5"
VALUECLICK_ID = "708b532c-5128-4b00-a4f2-2b1fac03de81"
MEDIAMATH_ID = "52a5e8f1-40b0-4d2c-9d7b-3c0f2a8f6e11"
TURN_ID = "2870155416409316471"
ROCKETFUEL_ID = "8fb3c1d2e7a94c0f9d1e"


def rec(url: str, ts: int, user: str = "u1", **kw) -> HttpRecord:
    kw.setdefault("method", "GET")
    return record_from_url(url, user_id=user, timestamp=ts, **kw)


def sync_chain_records() -> list[HttpRecord]:
    """atemda sets the ID, then redirects it to turn (path) and bidtheater (param)."""
    return [
        rec(ATEMDA_URL, T0, status=302, location=TURN_URL,
            set_cookies=(f"uid={SYNC_TOKEN}; {YEAR}",)),
        rec(TURN_URL, T0 + 80, status=302, location=BIDTHEATER_URL),
        rec(BIDTHEATER_URL, T0 + 150, status=200),
    ]


def tls_spill_records() -> list[HttpRecord]:
    page = "https://www.financialexpress.com/markets/"
    return [
        rec(page, T0, status=200),
        rec("https://tapad.com/pixel", T0 + 100, status=200, referrer=page,
            set_cookies=(f"uid={TAPAD_ID}; Max-Age=86400",)),
        rec(f"http://tags.bluekai.com/site/3096?id={TAPAD_ID}", T0 + 300, status=200, referrer=page),
    ]


SUMMARY_VALUE = (f"key=valueclickinc:value={VALUECLICK_ID}&key=mediamath:value={MEDIAMATH_ID}"
                 f"&key=turn:value={TURN_ID}&key=rocketfuel:value={ROCKETFUEL_ID}")


def id_summary_records() -> list[HttpRecord]:
    setters = [("valueclick.com", VALUECLICK_ID), ("mathtag.com", MEDIAMATH_ID),
               ("turn.com", TURN_ID), ("rfihub.com", ROCKETFUEL_ID)]
    out = [rec(f"https://{d}/px", T0 + i * 1000, status=200, set_cookies=(f"uid={t}; {YEAR}",))
           for i, (d, t) in enumerate(setters)]
    out.append(rec("https://ads.adap.tv/sync", T0 + 10_000, status=200,
                   set_cookies=(f"rtbData0=\"{SUMMARY_VALUE}\"; {YEAR}",)))
    return out


# --------------------------------------------------------------------------
# mini-traces for the learner closure
# --------------------------------------------------------------------------

MINI_CATALOG = EntityCatalog.from_json({"version": "mini", "entities": [
    {"name": "Alpha", "category": "Advertising", "domains": ["alpha.com", "alpha-cdn.com"]},
    {"name": "Beta", "category": "Advertising", "domains": ["beta.com"]},
    {"name": "Gamma", "category": "Analytics", "domains": ["gamma.com"]},
    {"name": "Delta", "category": "Advertising", "domains": ["delta.com", "delta.net"]},
    {"name": "Eps", "category": "Social", "domains": ["eps.com"]},
    {"name": "Zeta", "category": "Other", "domains": ["zeta.com"]},
]})

T1 = "Tok1aaaa00000001"
T2 = "Tok2bbbb00000002"
U1 = "Url9zzzz00000009"


def mini_trace(ops) -> list[HttpRecord]:
    """Ops: ("set", domain, token) | ("sync", sender, receiver, token) |
    ("path", sender, receiver, token) | ("ref", page_domain, receiver, token) |
    ("url", domain, token)."""
    out = []
    ts = T0
    for op in ops:
        ts += 1000
        kind = op[0]
        if kind == "set":
            _, d, tok = op
            out.append(rec(f"https://{d}/px", ts, status=200, set_cookies=(f"id={tok}; {YEAR}",)))
        elif kind == "sync":
            _, snd, rcv, tok = op
            out.append(rec(f"https://{rcv}/sync?uid={tok}", ts, status=200, referrer=f"https://{snd}/"))
        elif kind == "path":
            _, snd, rcv, tok = op
            out.append(rec(f"https://{rcv}/r/id/{tok}/x", ts, status=200, referrer=f"https://{snd}/"))
        elif kind == "ref":
            _, page, rcv, tok = op
            out.append(rec(f"https://{rcv}/pix", ts, status=200, referrer=f"https://{page}/page?uid={tok}"))
        elif kind == "url":
            _, d, tok = op
            out.append(rec(f"https://{d}/p?x={tok}", ts, status=200))
        else:
            raise ValueError(kind)
    return out


# (name, ops, learners_before, learners_after, diffusion_factor), all counted by hand
MINI_TRACES = [
    ("no-sync", [("set", "alpha.com", T1), ("set", "beta.com", T2)], 2, 2, 1.0),
    ("one-token-three-receivers",
     [("set", "alpha.com", T1), ("set", "beta.com", T2), ("sync", "alpha.com", "gamma.com", T1),
      ("sync", "alpha.com", "delta.com", T1), ("sync", "alpha.com", "eps.com", T1)], 2, 5, 2.5),
    ("same-provider-only", [("set", "alpha.com", T1), ("sync", "alpha.com", "alpha-cdn.com", T1)], 1, 1, 1.0),
    ("relay", [("set", "alpha.com", T1), ("sync", "alpha.com", "beta.com", T1),
               ("sync", "beta.com", "gamma.com", T1)], 1, 3, 3.0),
    ("receiver-already-learner",
     [("set", "alpha.com", T1), ("set", "beta.com", T2), ("sync", "alpha.com", "beta.com", T1)], 2, 2, 1.0),
    ("two-domains-one-entity", [("set", "alpha.com", T1), ("sync", "alpha.com", "delta.com", T1),
                                ("sync", "alpha.com", "delta.net", T1)], 1, 2, 2.0),
    ("non-cookie-share-ignored",
     [("set", "alpha.com", T1), ("url", "gamma.com", U1), ("sync", "gamma.com", "beta.com", U1),
      ("sync", "alpha.com", "eps.com", T1)], 1, 2, 2.0),
    ("share-before-cookie",
     [("sync", "alpha.com", "beta.com", T1), ("set", "alpha.com", T1),
      ("sync", "alpha.com", "gamma.com", T1)], 1, 2, 2.0),
    ("six-entities",
     [("set", "alpha.com", T1), ("set", "beta.com", T2), ("sync", "alpha.com", "gamma.com", T1),
      ("sync", "beta.com", "delta.com", T2), ("sync", "beta.com", "eps.com", T2),
      ("sync", "alpha.com", "zeta.com", T1)], 2, 6, 3.0),
    ("path-and-referrer-carriers",
     [("set", "alpha.com", T1), ("path", "alpha.com", "beta.com", T1), ("ref", "alpha.com", "gamma.com", T1)],
     1, 3, 3.0),
]
