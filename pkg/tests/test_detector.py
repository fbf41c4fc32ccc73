import pytest

from conrad.detector import (DetectorConfig, Initiator, SharingEvent, Status, build_chains, detect_user,
                             dumps_events, loads_events, process_stream)
from conrad.entities import EMPTY_CATALOG, EntityCatalog
from conrad.idscan import Carrier, Scanner
from conrad.synth import generate, preset
from conrad.traffic import by_user

from helpers import SYNC_TOKEN, T0, YEAR, rec, sync_chain_records

CAT = EntityCatalog.bundled()
PUB = "https://www.pub.com/news/story"


def csyncs(events):
    return [e for e in events if e.status is Status.CSYNC]


def test_three_request_chain_gives_two_csyncs():
    ev = detect_user(sync_chain_records(), CAT).events
    assert [e.status for e in ev] == [Status.FIRST_SEEN, Status.CSYNC, Status.CSYNC]
    a, b = ev[1], ev[2]
    assert (a.carrier, a.sender, a.receiver) == (Carrier.PATH, "atemda.com", "turn.com")
    assert (b.carrier, b.param_name, b.receiver) == (Carrier.PARAM, "bidderuid", "bidtheater.com")
    assert all(e.token == SYNC_TOKEN for e in ev)


def test_without_cookie_the_shares_are_not_csync():
    rs = [r.__class__(**{**r.__dict__, "set_cookies": ()}) for r in sync_chain_records()]
    assert [e.status for e in process_stream(rs, catalog=CAT)] == [
        Status.FIRST_SEEN, Status.ID_SHARING, Status.ID_SHARING]


def test_same_provider_share_filtered():
    tok = "Amz0123456789abcdef"
    rs = [rec("https://www.amazon.com/", T0, set_cookies=(f"ubid={tok}; {YEAR}",)),
          rec(f"https://s3.amazonaws.com/x?u={tok}", T0 + 50, referrer="https://www.amazon.com/")]
    ev = process_stream(rs, catalog=CAT)
    assert [e.status for e in ev] == [Status.FILTERED]
    assert csyncs(process_stream(rs, catalog=EMPTY_CATALOG))  # no catalog, no filtering


def test_chain_from_redirect():
    rs = [rec("https://tracker.com/s", T0, status=302, location="https://advertiser.com/m?x=1", referrer=PUB),
          rec("https://advertiser.com/m?x=1", T0 + 80, referrer=PUB)]
    assert [c.refs for c in build_chains(rs)] == [(0, 1)]
    late = [rs[0], rec("https://advertiser.com/m?x=1", T0 + 6000, referrer=PUB)]
    assert [c.refs for c in build_chains(late)] == [(0,), (1,)]


def test_no_redirects_singletons():
    rs = [rec(f"https://a{i}.com/", T0 + i) for i in range(4)]
    assert [c.refs for c in build_chains(rs)] == [(i,) for i in range(4)]


def test_generator_chains_recovered_intact():
    records, man = generate(preset("paper-mix", n_users=10))
    streams = by_user(records)
    found = {(u, c.refs) for u, rs in streams.items() for c in build_chains(rs)}
    expected = {(c["user"], tuple(c["refs"])) for c in man.chains}
    assert any(len(r) >= 4 for _, r in expected)
    assert expected <= found


def _publisher_own():
    tok = "Pub0123456789abcdef"
    return [rec(PUB, T0, status=200, set_cookies=(f"puid={tok}; {YEAR}",)),
            rec(f"https://sync.tracker.com/match?puid={tok}", T0 + 100, referrer=PUB)]


def _third_party_own():
    tok = "Trk0123456789abcdef"
    return [rec(PUB, T0, status=200),
            rec("https://cdn.t-one.com/tag.js", T0 + 40, referrer=PUB, set_cookies=(f"tid={tok}; {YEAR}",)),
            rec(f"https://x.partner.com/sync?uid={tok}", T0 + 100, referrer=PUB)]


def _relay_own():
    # partner receives the tag's ID, then forwards its own ID down the chain
    tok, own = "Rly0123456789abcdef", "Own0123456789abcdef"
    hop2 = f"https://c.other.com/s?aid={own}"
    return [rec(PUB, T0, status=200),
            rec("https://t-one.com/tag.js", T0 + 40, referrer=PUB, set_cookies=(f"tid={tok}; {YEAR}",)),
            rec("https://a.partner.com/px.gif", T0 + 60, referrer=PUB, set_cookies=(f"aid={own}; {YEAR}",)),
            rec(f"https://a.partner.com/s?uid={tok}", T0 + 80, referrer=PUB, status=302, location=hop2),
            rec(hop2, T0 + 120, referrer=PUB)]


def _relay_publisher():
    # a third-party hop forwards the publisher's ID
    tok = "Rpb0123456789abcdef"
    hop2 = f"https://b.partner.com/s?pid={tok}"
    return [rec(PUB, T0, status=200, set_cookies=(f"puid={tok}; {YEAR}",)),
            rec("https://t-one.com/s?v=2", T0 + 80, referrer=PUB, status=302, location=hop2),
            rec(hop2, T0 + 120, referrer=PUB)]


@pytest.mark.parametrize("build,expected", [
    (_publisher_own, [Initiator.PUBLISHER_OWN_ID]),
    (_third_party_own, [Initiator.THIRD_PARTY_OWN_ID]),
    (_relay_own, [Initiator.THIRD_PARTY_OWN_ID, Initiator.THIRD_PARTY_RELAY_OWN_ID]),
    (_relay_publisher, [Initiator.THIRD_PARTY_RELAY_PUBLISHER_ID]),
])
def test_initiator_cases(build, expected):
    ev = csyncs(detect_user(build(), EMPTY_CATALOG).events)
    assert [e.initiator for e in ev] == expected


def test_lattice_and_filter_toggle():
    records, man = generate(preset("provider-mix", n_users=12))
    full = EntityCatalog.from_json(man.entities)
    for u, rs in by_user(records).items():
        sightings = sum(len(Scanner().scan(r, i)) for i, r in enumerate(rs))
        with_cat = process_stream(rs, catalog=full)
        without = process_stream(rs, catalog=EMPTY_CATALOG)
        shared = [e for e in with_cat if e.status is not Status.FIRST_SEEN]
        assert sightings >= len(shared) >= len(csyncs(with_cat))
        # removing the catalog turns exactly the filtered shares back into live events
        filtered = {(e.record_ref, e.token, e.carrier) for e in with_cat if e.status is Status.FILTERED}
        for e in with_cat:
            assert (e.status is Status.FILTERED) == (e.status is not Status.FIRST_SEEN
                                                    and full.same_provider(e.sender, e.receiver))
        unfiltered = {(e.record_ref, e.token, e.carrier): e.status for e in without}
        assert all(unfiltered[k] in (Status.CSYNC, Status.ID_SHARING) for k in filtered)


def test_causality_two_pass_and_streaming():
    tok = "Late0123456789abcde"
    rs = [rec(f"https://b.com/s?u={tok}", T0, referrer="https://a.com/"),
          rec("https://a.com/px", T0 + 10, set_cookies=(f"id={tok}; {YEAR}",)),
          rec(f"https://c.com/s?u={tok}", T0 + 20, referrer="https://a.com/")]
    for mode in ("two-pass", "streaming"):
        ev = process_stream(rs, config=DetectorConfig(mode=mode))
        assert [(e.record_ref, e.status) for e in ev] == [(0, Status.FIRST_SEEN), (2, Status.CSYNC)]
    loose = process_stream(rs, config=DetectorConfig(causality=False))
    assert [(e.record_ref, e.status) for e in loose] == [(0, Status.CSYNC), (2, Status.CSYNC)]


def test_dedupe_window():
    tok = "Dup0123456789abcdef"
    rs = [rec("https://a.com/px", T0, set_cookies=(f"id={tok}; {YEAR}",))]
    rs += [rec(f"https://b.com/s?u={tok}", T0 + 100 * k, referrer="https://a.com/") for k in range(1, 4)]
    assert len(csyncs(process_stream(rs))) == 3
    assert len(csyncs(process_stream(rs, config=DetectorConfig(dedupe_window_ms=150)))) == 1


def test_no_csync_before_cookie_set_on_synthetic_trace():
    records, _ = generate(preset("paper-mix", n_users=8))
    for rs in by_user(records).values():
        d = detect_user(rs)
        for e in csyncs(d.events):
            assert d.repo.first_seen(e.token) <= e.timestamp


def test_detection_is_deterministic_and_serializable():
    records, _ = generate(preset("paper-mix", n_users=5))
    runs = [dumps_events(e for rs in by_user(records).values() for e in detect_user(rs, CAT).events)
            for _ in range(2)]
    assert runs[0] == runs[1]
    assert dumps_events(loads_events(runs[0])) == runs[0]


def test_bad_mode():
    with pytest.raises(ValueError):
        DetectorConfig(mode="live")


def test_event_json_shape():
    e = SharingEvent("u", "Tok0123456789ab", "a.com", "b.com", Carrier.PATH, None, 3, Status.CSYNC, T0,
                     Initiator.UNATTRIBUTED)
    assert SharingEvent.from_json(e.to_json()) == e
    assert e.to_json()["status"] == "CSync"
