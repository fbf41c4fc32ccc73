import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conrad.cookies import (CookieRecord, IdRepository, Rejection, build_repository, dump_cookie_store,
                            extract_cookies, load_cookie_store, parse_set_cookie, record_cookie)
from conrad.entities import EntityCatalog
from conrad.idscan import DEFAULT_DELIMITERS, is_id_looking, split_value
from conrad.synth import generate, make_token, preset
from conrad.traffic import by_user

from helpers import TAPAD_ID, T0, rec

CTX = rec("https://tapad.com/pixel", T0)


def test_session_cookie_rejected():
    r = parse_set_cookie("sid=abc; Path=/", CTX)
    assert isinstance(r, Rejection) and r.reason == "session" and not r


def test_persistent_https_cookie():
    c = parse_set_cookie(f"uid={TAPAD_ID}; Max-Age=86400", CTX)
    assert c.setter_domain == "tapad.com"
    assert c.secure_context is True
    assert c.id_tokens == (TAPAD_ID,)
    assert c.expires_at == T0 + 86_400_000 and c.set_at == T0


def test_short_fragments_give_no_tokens():
    c = parse_set_cookie("k=a:b&c; Max-Age=100", CTX)
    assert isinstance(c, CookieRecord) and c.id_tokens == ()


@pytest.mark.parametrize("header,reason", [
    ("=novalue; Max-Age=10", "malformed"),
    ("noequals", "malformed"),
    ("a=1; Max-Age=ten", "malformed"),
    ("a=1; Max-Age=0", "already-expired"),
    ("a=1; Expires=Thu, 01 Jan 1970 00:00:00 GMT", "already-expired"),
])
def test_rejections(header, reason):
    assert parse_set_cookie(header, CTX).reason == reason


def test_domain_attribute_and_expires():
    h = "id=Abc123456789xyz; Domain=.cdn.rubiconproject.com; Expires=Wed, 01 Jan 2031 00:00:00 GMT"
    c = parse_set_cookie(h, rec("http://pixel.other.com/", T0))
    assert c.setter_domain == "rubiconproject.com" and not c.secure_context
    assert c.expires_at == 1924992000000


def test_split_value_examples():
    frags = split_value("key=valueclickinc:value=708b532c-5128-4b00-a4f2-2b1fac03de81")
    assert frags == ["key", "valueclickinc", "value", "708b532c-5128-4b00-a4f2-2b1fac03de81"]
    assert split_value("") == []
    assert split_value("::a||b,") == ["a", "b"]


@given(st.text(alphabet="ab1-_:&;|,= ", max_size=40), st.sampled_from(DEFAULT_DELIMITERS))
def test_split_value_preserves_non_delimiter_characters(s, delim):
    joined = delim.join(split_value(s))
    kept = sorted(ch for ch in s if ch not in DEFAULT_DELIMITERS)
    assert sorted(ch for ch in joined if ch not in DEFAULT_DELIMITERS) == kept
    assert all(f for f in split_value(s))


def test_record_cookie_sizes():
    repo = IdRepository("u1")
    a = parse_set_cookie(f"uid={TAPAD_ID}; Max-Age=10", CTX)
    record_cookie(repo, a)
    assert len(repo) == 1
    b = parse_set_cookie(f"x={TAPAD_ID}; Max-Age=10", rec("https://bluekai.com/", T0 + 5))
    record_cookie(repo, b)
    assert repo.owners[TAPAD_ID] == {"tapad.com": T0, "bluekai.com": T0 + 5}
    assert repo.by_domain["bluekai.com"] == {TAPAD_ID}
    assert repo.earliest_owner(TAPAD_ID) == "tapad.com"
    assert repo.owners_at(TAPAD_ID, T0) == {"tapad.com": T0}


def test_record_cookie_rejects_foreign_user():
    c = parse_set_cookie(f"uid={TAPAD_ID}; Max-Age=10", rec("https://tapad.com/", T0, user="u2"))
    with pytest.raises(ValueError):
        record_cookie(IdRepository("u1"), c)


def test_ten_thousand_cookies_against_injected_tokens():
    rng = random.Random(5)
    taken: set[str] = set()
    pool = [make_token(rng, taken) for _ in range(3000)]
    domains = [f"t{i}.com" for i in range(50)]
    injected, records = set(), []
    for i in range(10_000):
        tok, dom = rng.choice(pool), rng.choice(domains)
        injected.add((tok, dom))
        records.append(rec(f"https://{dom}/s", T0 + i, set_cookies=(f"c{i % 7}={tok}; Max-Age=999",)))
    cookies, rejected = extract_cookies(records)
    repo = build_repository(cookies, "u1")
    assert len(cookies) == 10_000 and not rejected
    assert len(repo) == len({t for t, _ in injected})
    assert {(t, d) for t, held in repo.owners.items() for d in held} == injected


def test_generator_cookie_tokens_match_manifest():
    records, man = generate(preset("paper-mix", n_users=15))
    expected = {(c["user"], c["token"], c["owner"]) for c in man.cookies}
    # summary cookies also register the bundled IDs under the summary setter
    expected |= {(s["user"], t, s["setter"]) for s in man.summaries for t in s["tokens"]}
    seen = set()
    for u, rs in by_user(records).items():
        cookies, _ = extract_cookies(rs)
        repo = build_repository(cookies, u)
        seen |= {(u, t, d) for t, held in repo.owners.items() for d in held}
    # universal IDs add later verbatim owners, listed by entity name
    cat = EntityCatalog.from_json(man.entities)
    uni = {(x["user"], x["token"]): set(x["owners"]) for x in man.universal_ids}
    extra = seen - expected
    assert expected <= seen and extra
    assert all(cat.entity_name(d) in uni[(u, t)] for u, t, d in extra)


@given(st.permutations(list(range(8))))
def test_record_cookie_commutative(order):
    hdrs = [(f"https://d{i % 3}.com/", f"id=Tok{i % 4}xxxxxxxxx9; Max-Age=50") for i in range(8)]
    cookies = [parse_set_cookie(h, rec(u, T0 + i)) for i, (u, h) in enumerate(hdrs)]
    ref = build_repository(cookies, "u1")
    repo = build_repository([cookies[i] for i in order], "u1")
    assert {t: set(h) for t, h in repo.owners.items()} == {t: set(h) for t, h in ref.owners.items()}
    assert repo.owners == ref.owners  # earliest first_seen wins either way


def test_no_session_cookie_contributes():
    rs = [rec("https://a.com/", T0, set_cookies=("sid=Abcdefghijk12345", "pid=Zyxwvutsrq98765; Max-Age=9"))]
    cookies, rejected = extract_cookies(rs)
    repo = build_repository(cookies)
    assert list(repo.owners) == ["Zyxwvutsrq98765"] and rejected == {"session": 1}
    assert all(len(t) > 10 and is_id_looking(t) for t in repo.owners)


def test_cookie_store_round_trip():
    rs = [rec("https://a.com/", T0, set_cookies=("pid=Zyxwvutsrq98765; Max-Age=9",))]
    cookies, _ = extract_cookies(rs)
    store = {"u1": (cookies, build_repository(cookies, "u1"))}
    back = load_cookie_store(dump_cookie_store(store))
    assert back["u1"][0] == cookies
    assert back["u1"][1].owners == store["u1"][1].owners
