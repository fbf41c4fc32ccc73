import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conrad.cookies import build_repository, extract_cookies
from conrad.detector import SharingEvent, Status, detect_user
from conrad.entities import CATEGORIES, EMPTY_CATALOG, EntityCatalog
from conrad.idscan import Carrier
from conrad.privacy import (PII_KINDS, PiiTable, aggregate, category_shares, compute_user_report,
                            detect_id_summaries, detect_tls_spills, detect_universal_ids, entity_shares,
                            learner_sets, percentile_table, scan_pii)
from conrad.synth import generate, preset
from conrad.traffic import HttpRecord, by_user

from helpers import (MINI_CATALOG, MINI_TRACES, T0, TAPAD_ID, YEAR, id_summary_records, mini_trace, rec,
                     tls_spill_records)

CAT = EntityCatalog.bundled()


def report_for(records, catalog=CAT):
    d = detect_user(records, catalog)
    return d, compute_user_report(d.events, records, d.repo, catalog, d.cookies)


@pytest.fixture(scope="module")
def paper_mix():
    records, man = generate(preset("paper-mix"))
    cat = EntityCatalog.from_json(man.entities)
    out = []
    for u, rs in by_user(records).items():
        d = detect_user(rs, cat)
        out.append((u, d, compute_user_report(d.events, rs, d.repo, cat, d.cookies)))
    return man, cat, out


# --- learners -------------------------------------------------------------------

@pytest.mark.parametrize("name,ops,before,after,factor", MINI_TRACES, ids=[t[0] for t in MINI_TRACES])
def test_learner_closure_mini_traces(name, ops, before, after, factor):
    _, r = report_for(mini_trace(ops), MINI_CATALOG)
    assert (r.learners_before, r.learners_after, r.diffusion_factor) == (before, after, factor)


def test_zero_csync_user():
    _, r = report_for([rec("https://a.com/", T0), rec("https://b.com/", T0 + 1)])
    assert r.diffusion_factor == 1 and r.time_to_first_csync is None and r.csync_per_request == 0


def test_one_sync_in_sixty_eight_requests():
    tok = "Abc0123456789xyzXY"
    rs = [rec("https://a.com/px", T0, set_cookies=(f"id={tok}; {YEAR}",))]
    rs += [rec(f"https://site{i}.com/", T0 + 10 * i) for i in range(1, 67)]
    rs.append(rec(f"https://b.com/s?u={tok}", T0 + 5000, referrer="https://a.com/"))
    _, r = report_for(rs)
    assert r.requests == 68 and r.csync_count == 1
    assert r.csync_per_request == 1 / 68
    assert r.time_to_first_csync == 5000
    assert r.per_id_receiver_counts == {tok: 1} and r.unique_ids_synced == 1


def test_per_domain_mode_counts_domains():
    ops = MINI_TRACES[5][1]  # one token sent to two domains of one entity
    d = detect_user(mini_trace(ops), MINI_CATALOG)
    assert [len(s) for s in learner_sets(d.events, d.repo, MINI_CATALOG)] == [1, 2]
    assert [len(s) for s in learner_sets(d.events, d.repo, MINI_CATALOG, per_domain=True)] == [1, 3]


evs = st.lists(st.tuples(st.sampled_from(["Tok0000000001", "Tok0000000002"]),
                         st.sampled_from(["b.com", "c.com", "d.com", "alpha-cdn.com"])), max_size=8)


@given(evs, st.tuples(st.sampled_from(["Tok0000000001"]), st.sampled_from(["e.com", "b.com"])))
def test_learner_closure_monotone(base, extra):
    rs = [rec("https://alpha.com/px", T0, set_cookies=(f"id=Tok0000000001; {YEAR}",))]
    repo = build_repository(extract_cookies(rs)[0], "u1")

    def ev(tok, dom):
        return SharingEvent("u1", tok, "alpha.com", dom, Carrier.PARAM, "u", 0, Status.CSYNC, T0)

    events = [ev(*x) for x in base]
    _, a1 = learner_sets(events, repo, MINI_CATALOG)
    b2, a2 = learner_sets(events + [ev(*extra)], repo, MINI_CATALOG)
    assert a1 <= a2 and b2 <= a2


# --- universal IDs and summaries --------------------------------------------------

def test_universal_id_six_owners():
    tok = "idA0123456789abcdef"
    owners = ["baidu.com", "b-one.com", "c-two.com", "d-three.com", "e-four.com", "f-five.com"]
    rs = [rec(f"https://www.{d}/", T0 + 100 * i, set_cookies=(f"BAIDUID={tok}; {YEAR}",))
          for i, d in enumerate(owners)]
    cookies, _ = extract_cookies(rs)
    (u,) = detect_universal_ids(build_repository(cookies), cookies, CAT)
    assert u.token == tok and u.owners == ("Baidu", "b-one.com", "c-two.com", "d-three.com",
                                           "e-four.com", "f-five.com")


def test_single_owner_tokens_not_universal():
    rs = [rec(f"https://{d}.com/", T0, set_cookies=(f"i=Tok{d}0123456789; {YEAR}",)) for d in "abc"]
    cookies, _ = extract_cookies(rs)
    assert detect_universal_ids(build_repository(cookies), cookies) == []


def test_same_entity_two_domains_not_universal():
    rs = [rec("https://amazon.com/", T0, set_cookies=(f"i=Amz0123456789abc; {YEAR}",)),
          rec("https://amazonaws.com/", T0 + 1, set_cookies=(f"i=Amz0123456789abc; {YEAR}",))]
    cookies, _ = extract_cookies(rs)
    assert detect_universal_ids(build_repository(cookies), cookies, CAT) == []


def test_id_summary_with_four_foreign_tokens():
    d = detect_user(id_summary_records(), CAT)
    (s,) = detect_id_summaries(d.cookies, d.repo, CAT)
    assert s.cookie.setter_domain == "adap.tv" and len(s.foreign_tokens) == 4
    assert detect_universal_ids(d.repo, d.cookies, CAT) == []


def test_cookie_with_own_tokens_is_not_summary():
    a, b = "Own0123456789abcdef", "Own9876543210fedcba"
    rs = [rec("https://adap.tv/", T0, set_cookies=(f"x={a}; {YEAR}", f"y={b}; {YEAR}")),
          rec("https://adap.tv/s", T0 + 1, set_cookies=(f"z=k:{a}&v:{b}; {YEAR}",))]
    cookies, _ = extract_cookies(rs)
    assert detect_id_summaries(cookies, build_repository(cookies), CAT) == []


# --- spills and PII ------------------------------------------------------------------

def test_tls_spill_example():
    d, r = report_for(tls_spill_records())
    (f,) = r.tls_spills
    assert (f.token, f.secure_origin, f.plaintext_receiver) == (TAPAD_ID, "tapad.com", "bluekai.com")
    assert f.leaked_referrer_url == "https://www.financialexpress.com/markets/"
    assert d.records[f.record_ref].scheme == "http"


def test_all_http_trace_has_no_spill():
    rs = [r.__class__(**{**r.__dict__, "scheme": "http"}) for r in tls_spill_records()]
    d = detect_user(rs, CAT)
    assert detect_tls_spills(d.events, d.cookies, rs) == []


def _pii_request(query):
    tok = "Pii0123456789abcdef"
    return [rec("https://a.com/px", T0, set_cookies=(f"id={tok}; {YEAR}",)),
            HttpRecord("u1", T0 + 10, "GET", "https", "b.com", "/s", (("uid", tok),) + query,
                       referrer="https://a.com/")]


def test_pii_email():
    d = detect_user(_pii_request((("email", "a@b.com"),)))
    (f,) = scan_pii(d.records, d.events)
    assert (f.kind, f.param_name, f.record_ref) == ("Email", "email", 1)


def test_pii_nothing():
    d = detect_user(_pii_request((("cb", "12"),)))
    assert scan_pii(d.records, d.events) == []


def test_pii_every_kind_by_keyword_or_pattern():
    q = (("lat", "48.85"), ("c", "%2B447700900123"), ("gender", "f"), ("yob", "1984"), ("dob", "1984-02-29"),
         ("fname", "Ada"), ("m", "ada@example.org"), ("pwd", "hunter2"))
    d = detect_user(_pii_request(q))
    kinds = sorted(f.kind for f in scan_pii(d.records, d.events))
    assert kinds == sorted(PII_KINDS)


def test_pii_only_on_sharing_requests():
    rs = [rec("https://a.com/?email=a@b.com", T0)]
    assert scan_pii(rs, detect_user(rs).events) == []


def test_pii_table_rejects_unknown_kind():
    with pytest.raises(ValueError):
        PiiTable.from_json({"keywords": {"x": "Shoe size"}})


# --- generator oracles -------------------------------------------------------------------

def test_generator_findings_match_manifest(paper_mix):
    man, cat, out = paper_mix
    spills = {(u, f.token, f.leaked_referrer_url) for u, _, r in out for f in r.tls_spills}
    pii = {(u, f.record_ref, f.kind) for u, _, r in out for f in r.pii_leaks}
    uni = {(u, x.token, tuple(sorted(x.owners))) for u, d, _ in out
           for x in detect_universal_ids(d.repo, d.cookies, cat)}
    summ = {(u, s.cookie.setter_domain, tuple(sorted(s.foreign_tokens))) for u, d, _ in out
            for s in detect_id_summaries(d.cookies, d.repo, cat)}
    assert spills == {(s["user"], s["token"], s["page"]) for s in man.spills}
    assert pii == {(p["user"], p["record_ref"], p["kind"]) for p in man.pii}
    assert sorted(k for _, _, k in pii) == sorted(PII_KINDS)
    assert uni == {(x["user"], x["token"], tuple(sorted(x["owners"]))) for x in man.universal_ids}
    assert summ == {(x["user"], x["setter"], tuple(sorted(x["tokens"]))) for x in man.summaries}
    assert (len(uni), len(summ), len(spills)) == (3, 3, 3)


def test_spill_findings_rejoin(paper_mix):
    _, _, out = paper_mix
    for _, d, r in out:
        for f in r.tls_spills:
            assert any(c.secure_context and f.token in c.id_tokens for c in d.cookies)
            assert d.records[f.record_ref].scheme == "http"


def test_report_invariants(paper_mix):
    _, _, out = paper_mix
    for _, _, r in out:
        assert r.learners_after >= r.learners_before >= 0
        assert 0 <= r.csync_per_request <= 1
        if r.learners_before:
            assert r.diffusion_factor >= 1


# --- categories and aggregate --------------------------------------------------------------

def _ev(tok, receiver, user="u1", status=Status.CSYNC):
    return SharingEvent(user, tok, "x.com", receiver, Carrier.PARAM, "u", 0, status, T0)


def test_category_shares_all_advertising():
    shares = category_shares([_ev("t1", "rubiconproject.com"), _ev("t2", "criteo.com")], CAT)
    assert shares == {c: (1.0 if c == "Advertising" else 0.0) for c in CATEGORIES}


def test_category_shares_hand_count():
    events = [_ev(f"t{i}", "criteo.com") for i in range(10)]
    events += [_ev("t0", "facebook.com"), _ev("t1", "facebook.com"), _ev("t2", "scorecardresearch.com"),
               _ev("t3", "unknown.io"), _ev("t9", "unknown.io", status=Status.ID_SHARING)]
    shares = category_shares(events, CAT)
    assert shares == {"Advertising": 1.0, "Social": 0.2, "Analytics": 0.1, "Other": 0.1, "Content": 0.0}


def test_category_shares_bounds_and_cover(paper_mix):
    man, cat, out = paper_mix
    events = [e for _, d, _ in out for e in d.events]
    shares = category_shares(events, cat)
    assert all(0 <= v <= 1 for v in shares.values())
    assert shares["Advertising"] >= 0.9
    synced = {(e.user_id, e.token) for e in events if e.status is Status.CSYNC}
    covered = {(e.user_id, e.token) for e in events if e.status is Status.CSYNC}
    assert synced == covered and sum(shares.values()) >= 1


def test_entity_shares_ranked():
    events = [_ev("t1", "criteo.com"), _ev("t2", "criteo.net"), _ev("t2", "tapad.com")]
    assert entity_shares(events, CAT) == [("Criteo", 1.0), ("Tapad", 0.5)]
    assert entity_shares([], CAT) == []


def test_percentiles_and_aggregate(paper_mix):
    assert percentile_table([]) == {"p10": None, "p25": None, "p50": None, "p75": None, "p90": None}
    assert percentile_table([1, 2, 3, 4, 5])["p50"] == 3.0
    _, _, out = paper_mix
    reports = [r for _, _, r in out]
    events = [e for _, d, _ in out for e in d.events]
    agg = aggregate(reports, events)
    n = sum(r.csync_count for r in reports)
    assert agg["users"] == 50 and agg["event_counts"]["CSync"] == n
    assert math.isclose(sum(agg["carrier_split"].values()), 1.0)
    assert agg["requests_per_csync"] == sum(r.requests for r in reports) / n
    assert agg["percentiles"]["diffusion_factor"]["p50"] >= 1
    empty = aggregate([], [])
    assert empty["exposure_rate"] is None and empty["requests_per_csync"] is None
    assert EMPTY_CATALOG.categorize("x") == "Other"
