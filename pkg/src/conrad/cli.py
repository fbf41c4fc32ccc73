"""Command-line pipeline: ingest, detect, attribute, report, train, classify, synth, all.

Every stage reads and writes plain JSON/JSONL files so stages can be run
one at a time or chained with ``conrad all``. Log lines go to stderr as
JSON objects. Exit status is 0 on success, 1 on configuration or usage
errors and 2 when the input data itself is unusable.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import tempfile
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .classifier.evaluation import DEFAULT_SEED, balance_indices, cross_validate
from .classifier.features import (LABELS, dumps_examples, extract_features, label_examples,
                                  load_ua_patterns, loads_examples, parse_feature_subset)
from .classifier.tree import TreeConfig, TreeModel, encode_examples, train_tree
from .cookies import (build_repository, dump_cookie_store,
                      extract_cookies, load_cookie_store)
from .detector import (Attributor, DetectorConfig, SharingEvent, Status, detect_user,
                       dumps_events, loads_events)
from .domains import PSL_SNAPSHOT
from .entities import CatalogError, EntityCatalog
from .idscan import IdPredicate, Scanner, load_denylist
from .privacy import (PiiTable, aggregate, category_shares, compute_user_report, detect_id_summaries,
                      detect_universal_ids, entity_shares)
from .synth import PRESETS, ConfigError, ScenarioConfig, corpus_for, generate, preset
from .traffic import (HttpRecord, IngestError, by_user, dumps_weblog, ingest_har, ingest_weblog,
                      sort_records)

log = logging.getLogger("conrad")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    """Bad flags, config or missing files (exit 1)."""


class DataError(Exception):
    """Input data unusable beyond tolerated thresholds (exit 2)."""


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

@dataclass
class PipelineConfig:
    entities: str | None = None
    denylist: str | None = None
    pii_table: str | None = None
    ua_patterns: str | None = None
    ua_denylist: list = field(default_factory=list)
    mode: str = "two-pass"
    id_predicate: str = "extended"
    dedupe_window_ms: int = 0
    chain_window_ms: int = 5000
    regular_user_threshold: float = 10.0
    per_domain_learners: bool = False
    max_depth: int = 12
    min_leaf: int = 5
    min_gain: float = 1e-6
    seed: int = DEFAULT_SEED

    FILE_KEYS = ("entities", "denylist", "pii_table", "ua_patterns")

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise UsageError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path}: {exc}") from None
        if not isinstance(doc, dict):
            raise UsageError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        bad = sorted(set(doc) - known)
        if bad:
            raise UsageError(f"unknown config keys {bad}")
        base = Path(path).parent
        for k in cls.FILE_KEYS:
            if doc.get(k) and doc[k] != "none" and not Path(doc[k]).is_absolute():
                doc[k] = str(base / doc[k])
        return cls(**doc)

    def validate(self) -> "PipelineConfig":
        for k in self.FILE_KEYS:
            p = getattr(self, k)
            if p is not None and p != "none" and not Path(p).is_file():
                raise UsageError(f"{k} file {p} does not exist")
        if self.mode not in ("two-pass", "streaming"):
            raise UsageError(f"unknown mode {self.mode!r}")
        if self.id_predicate not in IdPredicate.MODES:
            raise UsageError(f"unknown id predicate {self.id_predicate!r}")
        if self.dedupe_window_ms < 0 or self.chain_window_ms < 0:
            raise UsageError("windows must be non-negative")
        return self


class Runtime:
    """Loaded tables shared by the stages."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg.validate()
        try:
            if cfg.entities == "none":
                self.catalog = EntityCatalog(version="empty")
            elif cfg.entities:
                self.catalog = EntityCatalog.load(cfg.entities)
            else:
                self.catalog = EntityCatalog.bundled()
            deny = load_denylist(cfg.denylist) if cfg.denylist else None
            self.predicate = IdPredicate(cfg.id_predicate, deny)
            self.pii = PiiTable.load(cfg.pii_table)
            self.patterns = load_ua_patterns(cfg.ua_patterns)
        except (CatalogError, ValueError, KeyError) as exc:
            raise UsageError(str(exc)) from None
        self.scanner = Scanner(self.predicate)
        self.detector = DetectorConfig(mode=cfg.mode, dedupe_window_ms=cfg.dedupe_window_ms,
                                       scanner=self.scanner)
        self.tree = TreeConfig(max_depth=cfg.max_depth, min_leaf=cfg.min_leaf, min_gain=cfg.min_gain)


def resolve_config(args) -> PipelineConfig:
    path = getattr(args, "config", None) or os.environ.get("CONRAD_CONFIG")
    cfg = PipelineConfig.load(path) if path else PipelineConfig()
    overrides = {
        "entities": getattr(args, "entities", None),
        "denylist": getattr(args, "denylist", None),
        "mode": getattr(args, "mode", None),
        "id_predicate": getattr(args, "id_predicate", None),
        "dedupe_window_ms": getattr(args, "dedupe_window", None),
        "chain_window_ms": getattr(args, "chain_window", None),
        "max_depth": getattr(args, "max_depth", None),
        "min_leaf": getattr(args, "min_leaf", None),
        "min_gain": getattr(args, "min_gain", None),
        "seed": getattr(args, "seed", None),
    }
    for k, v in overrides.items():
        if v is not None:
            setattr(cfg, k, v)
    if getattr(args, "ua_deny", None):
        cfg.ua_denylist = list(args.ua_deny)
    return cfg


# --------------------------------------------------------------------------
# logging
# --------------------------------------------------------------------------

class JsonFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        d = {"level": record.levelname.lower(), "logger": record.name, "msg": record.getMessage()}
        d.update(getattr(record, "fields", {}))
        return json.dumps(d, sort_keys=True, default=str)


def setup_logging(verbosity: int) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonFormatter())
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(logging.WARNING if verbosity < 0 else logging.DEBUG if verbosity > 0 else logging.INFO)


def stage_log(stage: str, **counters) -> None:
    log.info("stage complete", extra={"fields": {"stage": stage, **counters}})


# --------------------------------------------------------------------------
# file helpers
# --------------------------------------------------------------------------

def _read(path: str | Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise UsageError(f"input file {path} not found") from None


def _write(path: str | Path, text: str) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text, encoding="utf-8")


def load_trace(path: str | Path, ua_denylist: Sequence[str] = ()) -> list[HttpRecord]:
    try:
        res = ingest_weblog(_read(path), ua_denylist or None)
    except IngestError as exc:
        raise DataError(f"{path}: {exc}") from None
    return res.records


def user_streams(records: Sequence[HttpRecord]) -> dict[str, list[HttpRecord]]:
    """Per-user time-ordered streams; record_ref values index into these."""
    return {u: rs for u, rs in sorted(by_user(sort_records(records)).items())}


def _events_by_user(events: Sequence[SharingEvent]) -> dict[str, list[SharingEvent]]:
    out: dict[str, list[SharingEvent]] = {}
    for e in events:
        out.setdefault(e.user_id, []).append(e)
    return out


def _load_events(path) -> list[SharingEvent]:
    try:
        return loads_events(_read(path))
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{path}: malformed events ({exc})") from None


# --------------------------------------------------------------------------
# stages
# --------------------------------------------------------------------------

def run_ingest(paths: Sequence[str], fmt: str, out: str | None, rt: Runtime, user: str | None = None,
               cookie_repo: str | None = None) -> list[HttpRecord]:
    records: list[HttpRecord] = []
    skipped = filtered = 0
    for p in paths:
        try:
            if fmt == "har":
                res = ingest_har(_read(p), user or Path(p).stem, rt.cfg.ua_denylist or None)
            else:
                res = ingest_weblog(_read(p), rt.cfg.ua_denylist or None)
        except IngestError as exc:
            raise DataError(f"ingest {p}: {exc}") from None
        records.extend(res.records)
        skipped += res.skipped
        filtered += res.filtered
    records = sort_records(records)
    if out:
        _write(out, dumps_weblog(records))
    if cookie_repo:
        store = {}
        for u, rs in user_streams(records).items():
            cookies, _ = extract_cookies(rs, rt.predicate)
            store[u] = (cookies, build_repository(cookies, u))
        _write(cookie_repo, dump_cookie_store(store))
    stage_log("ingest", records=len(records), users=len(by_user(records)), skipped=skipped,
              filtered=filtered)
    return records


def run_detect(records: Sequence[HttpRecord], rt: Runtime, out: str | None = None,
               attribute: bool = False, labels_out: str | None = None) -> list[SharingEvent]:
    events: list[SharingEvent] = []
    examples = []
    sightings = rejected = 0
    for u, rs in user_streams(records).items():
        d = detect_user(rs, rt.catalog, rt.detector, attribute=attribute,
                        chain_window_ms=rt.cfg.chain_window_ms)
        events.extend(d.events)
        rejected += sum(d.rejected.values())
        ex = label_examples(rs, d.events, rt.catalog, rt.scanner, rt.patterns)
        sightings += len(ex)
        if labels_out:
            examples.extend(ex)
    if out:
        _write(out, dumps_events(events))
    if labels_out:
        _write(labels_out, dumps_examples(examples))
    counts = {s.value: 0 for s in Status}
    for e in events:
        counts[e.status.value] += 1
    csync = counts[Status.CSYNC.value]
    shared = counts[Status.ID_SHARING.value] + counts[Status.FILTERED.value] + csync
    stage_log("detect", sightings=sightings, id_sharing=shared, csync=csync,
              filtered=counts[Status.FILTERED.value], first_seen=counts[Status.FIRST_SEEN.value],
              cookies_rejected=rejected, lattice_ok=sightings >= shared >= csync)
    return events


def run_attribute(records: Sequence[HttpRecord], events: Sequence[SharingEvent], rt: Runtime,
                  out: str | None = None) -> list[SharingEvent]:
    by_u = _events_by_user(events)
    result: list[SharingEvent] = []
    split: dict[str, int] = {}
    for u, rs in user_streams(records).items():
        evs = by_u.pop(u, [])
        if not evs:
            continue
        cookies, _ = extract_cookies(rs, rt.predicate)
        repo = build_repository(cookies, u)
        done = Attributor(rs, evs, repo, rt.catalog, window_ms=rt.cfg.chain_window_ms).attribute_all(evs)
        result.extend(done)
        for e in done:
            if e.initiator is not None:
                split[e.initiator.value] = split.get(e.initiator.value, 0) + 1
    if by_u:
        raise DataError(f"events reference users missing from the trace: {sorted(by_u)[:5]}")
    if out:
        _write(out, dumps_events(result))
    stage_log("attribute", csync=sum(split.values()), **split)
    return result


_CSV_FIELDS = ("user_id", "requests", "active_days", "time_to_first_csync", "csync_count",
               "csync_per_request", "unique_ids_synced", "learners_before", "learners_after",
               "diffusion_factor", "tls_spills", "pii_leaks", "universal_ids", "id_summaries")


def build_report(records: Sequence[HttpRecord], events: Sequence[SharingEvent], rt: Runtime,
                 cookie_store: dict | None = None) -> tuple[dict, list]:
    by_u = _events_by_user(events)
    users, reports = [], []
    for u, rs in user_streams(records).items():
        if cookie_store and u in cookie_store:
            cookies, repo = cookie_store[u]
        else:
            cookies, _ = extract_cookies(rs, rt.predicate)
            repo = build_repository(cookies, u)
        evs = by_u.get(u, [])
        r = compute_user_report(evs, rs, repo, rt.catalog, cookies, rt.cfg.per_domain_learners, rt.pii)
        reports.append(r)
        d = r.to_json()
        d["universal_ids"] = [{"token": x.token, "owners": list(x.owners)}
                              for x in detect_universal_ids(repo, cookies, rt.catalog)]
        d["id_summaries"] = [{"setter": s.cookie.setter_domain, "cookie": s.cookie.name,
                              "foreign_tokens": list(s.foreign_tokens)}
                             for s in detect_id_summaries(cookies, repo, rt.catalog)]
        users.append(d)
    summary = aggregate(reports, events, rt.cfg.regular_user_threshold)
    cats = category_shares(events, rt.catalog)
    doc = {
        "tool": {"name": "conrad", "version": __version__},
        "catalog_version": rt.catalog.version,
        "users": users,
        "aggregate": summary,
        "category_shares": cats,
        "entity_shares": [{"entity": n, "share": s} for n, s in entity_shares(events, rt.catalog)],
    }
    return doc, reports


def write_report(doc: dict, out: str, fmt: str | None = None) -> list[str]:
    fmt = fmt or ("csv" if out.endswith(".csv") else "json")
    if fmt == "json":
        _write(out, json.dumps(doc, sort_keys=True, indent=1) + "\n")
        return [out]
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(_CSV_FIELDS)
        for u in doc["users"]:
            w.writerow([len(u[k]) if isinstance(u[k], list) else ("" if u[k] is None else u[k])
                        for k in _CSV_FIELDS])
    side = str(Path(out).with_suffix(".aggregate.json"))
    rest = {k: v for k, v in doc.items() if k != "users"}
    _write(side, json.dumps(rest, sort_keys=True, indent=1) + "\n")
    return [out, side]


def run_report(records, events, rt: Runtime, out: str, cookie_store=None, figures_dir=None,
               fmt: str | None = None) -> dict:
    doc, reports = build_report(records, events, rt, cookie_store)
    written = write_report(doc, out, fmt)
    if figures_dir:
        from .plotting import render_report
        written += [str(p) for p in render_report(reports, doc["aggregate"], doc["category_shares"],
                                                  figures_dir)]
    agg = doc["aggregate"]
    stage_log("report", users=agg["users"], regular_users=agg["regular_users"],
              csync=agg["event_counts"][Status.CSYNC.value], files=len(written))
    return doc


def run_train(examples, features: Sequence[str], rt: Runtime, folds: int, balance: bool,
              out: str, metrics_out: str | None = None) -> TreeModel:
    present = {e.label for e in examples}
    classes = tuple(c for c in LABELS if c in present)
    if len(classes) < 2:
        raise DataError(f"training needs at least two classes, found {sorted(present)}")
    data = encode_examples(examples, classes)
    seed = rt.cfg.seed
    if folds > 1:
        res = cross_validate(data, folds, balance, features, rt.tree, seed)
        w = res.report.weighted
        stage_log("cv", folds=folds, n=len(data), **{k: round(v, 4) for k, v in w.items() if v == v})
        if metrics_out:
            _write(metrics_out, json.dumps(res.report.to_json(), sort_keys=True, indent=1) + "\n")
    idx = np.arange(len(data))
    if balance:
        idx = balance_indices(idx, data.y, np.random.default_rng(seed))
    model = train_tree(data, features, rt.tree, idx=idx)
    _write(out, model.dumps() + "\n")
    stage_log("train", n=int(len(idx)), depth=model.depth(), leaves=model.n_leaves(),
              features=",".join(features))
    return model


def run_classify(model: TreeModel, text: str, rt: Runtime, out: str) -> int:
    rows = []
    first = next((l for l in text.splitlines() if l.strip()), None)
    if first is not None and "features" in json.loads(first):
        examples = loads_examples(text)
        probs = model.predict_proba([e.features for e in examples])
        for e, p in zip(examples, probs):
            rows.append({"user": e.user_id, "record_ref": e.record_ref, "token": e.token,
                         "true_label": e.label, **_verdict(model, p)})
    else:
        try:
            records = ingest_weblog(text, rt.cfg.ua_denylist or None).records
        except IngestError as exc:
            raise DataError(str(exc)) from None
        for u, rs in user_streams(records).items():
            sights = [s for i, r in enumerate(rs) for s in rt.scanner.scan(r, i)]
            if not sights:
                continue
            vecs = [extract_features(s, rs[s.record_ref], rt.catalog, rt.patterns) for s in sights]
            for s, p in zip(sights, model.predict_proba(vecs)):
                rows.append({"user": u, "record_ref": s.record_ref, "token": s.token,
                             "carrier": s.carrier.value, "param_name": s.param_name,
                             "receiver": s.receiver_domain, **_verdict(model, p)})
    _write(out, "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows))
    counts = {}
    for r in rows:
        counts[r["label"]] = counts.get(r["label"], 0) + 1
    stage_log("classify", rows=len(rows), **counts)
    return len(rows)


def _verdict(model: TreeModel, p) -> dict:
    return {"probs": {c: float(x) for c, x in zip(model.classes, p)},
            "label": model.classes[int(np.argmax(p))]}


def scenario_from_args(args) -> ScenarioConfig:
    base = dict(PRESETS[args.preset]) if args.preset else {}
    if args.config:
        try:
            doc = json.loads(_read(args.config))
        except json.JSONDecodeError as exc:
            raise UsageError(f"{args.config}: {exc}") from None
        base.update(doc)
    if args.seed is not None:
        base["seed"] = args.seed
    try:
        return ScenarioConfig.from_json(base).validate()
    except (ConfigError, TypeError) as exc:
        raise UsageError(f"scenario config: {exc}") from None


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="pipeline config JSON (falls back to $CONRAD_CONFIG)")
    p.add_argument("--entities", help="entity catalog JSON; 'none' for an empty catalog")
    p.add_argument("--denylist", help="ID denylist file, one token per line")
    p.add_argument("--id-predicate", choices=IdPredicate.MODES)
    p.add_argument("--ua-deny", action="append", metavar="REGEX", help="drop records whose UA matches")


def _detect_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=("two-pass", "streaming"))
    p.add_argument("--dedupe-window", type=int, metavar="MS")
    p.add_argument("--chain-window", type=int, metavar="MS")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="conrad", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="store_true", help="print tool and catalog versions")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("-q", "--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("ingest", help="normalise HAR or JSONL weblogs")
    _common(p)
    p.add_argument("files", nargs="+")
    p.add_argument("--format", choices=("jsonl", "har"), default="jsonl")
    p.add_argument("--user", help="user label for HAR input (default: file stem)")
    p.add_argument("--out", help="normalised weblog JSONL")
    p.add_argument("--emit-cookie-repo", metavar="FILE", help="write per-user cookies and ID repository")

    p = sub.add_parser("detect", help="find ID sharing and CSync events")
    _common(p)
    _detect_opts(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--attribute", action="store_true", help="also attribute initiators")
    p.add_argument("--emit-labels", metavar="FILE", help="labelled feature vectors for training")

    p = sub.add_parser("attribute", help="attribute CSync events to initiator classes")
    _common(p)
    _detect_opts(p)
    p.add_argument("--in", dest="input", required=True, help="weblog JSONL")
    p.add_argument("--events", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", help="privacy metrics per user and in aggregate")
    _common(p)
    p.add_argument("--in", dest="input", required=True, help="weblog JSONL")
    p.add_argument("--events", required=True)
    p.add_argument("--cookies", help="cookie store written by ingest --emit-cookie-repo")
    p.add_argument("--out", required=True, help="report .json or .csv")
    p.add_argument("--format", choices=("json", "csv"))
    p.add_argument("--figures-dir", help="write PNG figures here")

    p = sub.add_parser("train", help="train a decision tree on labelled vectors")
    _common(p)
    p.add_argument("--labels", required=True)
    p.add_argument("--features", default="all")
    p.add_argument("--scenario", choices=("a", "b"), default="a", help="subset naming for --features")
    p.add_argument("--folds", type=int, default=10, help="0 or 1 skips cross-validation")
    p.add_argument("--balance", action="store_true")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-depth", type=int)
    p.add_argument("--min-leaf", type=int)
    p.add_argument("--min-gain", type=float)
    p.add_argument("--metrics", help="write the CV metric report here")
    p.add_argument("--out", required=True)

    p = sub.add_parser("classify", help="class probabilities for sightings or labelled vectors")
    _common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("synth", help="generate a synthetic trace with a ground-truth manifest")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--config", help="scenario JSON (overrides the preset)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-trace")
    p.add_argument("--out-manifest")
    p.add_argument("--out-entities")
    p.add_argument("--out-corpus", help="planted-correlation labelled corpus (JSONL)")

    p = sub.add_parser("all", help="ingest, detect, attribute and report in one go")
    _common(p)
    _detect_opts(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--format", choices=("jsonl", "har"), default="jsonl")
    p.add_argument("--user")
    p.add_argument("--out", required=True)
    p.add_argument("--work-dir", help="keep intermediate files here")
    p.add_argument("--figures-dir")
    return parser


def _cmd_ingest(args, rt):
    run_ingest(args.files, args.format, args.out, rt, args.user, args.emit_cookie_repo)


def _cmd_detect(args, rt):
    records = load_trace(args.input, rt.cfg.ua_denylist)
    run_detect(records, rt, args.out, args.attribute, args.emit_labels)


def _cmd_attribute(args, rt):
    records = load_trace(args.input, rt.cfg.ua_denylist)
    run_attribute(records, _load_events(args.events), rt, args.out)


def _cmd_report(args, rt):
    records = load_trace(args.input, rt.cfg.ua_denylist)
    store = load_cookie_store(_read(args.cookies)) if args.cookies else None
    run_report(records, _load_events(args.events), rt, args.out, store, args.figures_dir, args.format)


def _cmd_train(args, rt):
    try:
        features = parse_feature_subset(args.features, args.scenario)
        examples = loads_examples(_read(args.labels))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not examples:
        raise DataError("no labelled examples")
    run_train(examples, features, rt, args.folds, args.balance, args.out, args.metrics)


def _cmd_classify(args, rt):
    try:
        model = TreeModel.from_json(json.loads(_read(args.model)))
    except (ValueError, KeyError) as exc:
        raise UsageError(f"{args.model}: {exc}") from None
    run_classify(model, _read(args.input), rt, args.out)


def _cmd_synth(args):
    cfg = scenario_from_args(args)
    outputs = 0
    if args.out_trace or args.out_manifest or args.out_entities:
        try:
            records, manifest = generate(cfg)
        except ConfigError as exc:
            raise UsageError(str(exc)) from None
        if args.out_trace:
            _write(args.out_trace, dumps_weblog(records))
        if args.out_manifest:
            _write(args.out_manifest, manifest.dumps() + "\n")
        if args.out_entities:
            _write(args.out_entities, json.dumps(manifest.entities, sort_keys=True, indent=1) + "\n")
        outputs += 1
        stage_log("synth", records=len(records), users=len(manifest.users), syncs=len(manifest.syncs),
                  provider_shares=len(manifest.provider_shares), seed=cfg.seed)
    if args.out_corpus:
        corpus = corpus_for(cfg)
        if not corpus:
            raise UsageError("scenario has corpus_size 0; pick a corpus preset or set corpus_size")
        _write(args.out_corpus, dumps_examples(corpus))
        outputs += 1
        stage_log("synth-corpus", examples=len(corpus), seed=cfg.seed)
    if not outputs:
        raise UsageError("nothing to write: give --out-trace, --out-manifest, --out-entities or --out-corpus")


def _cmd_all(args, rt):
    with tempfile.TemporaryDirectory() as tmp:
        work = Path(args.work_dir or tmp)
        trace = work / "trace.jsonl"
        records = run_ingest([args.input], args.format, str(trace), rt, args.user,
                             str(work / "cookies.json"))
        events = run_detect(records, rt, str(work / "events.jsonl"))
        events = run_attribute(records, events, rt, str(work / "attributed.jsonl"))
        store = load_cookie_store(_read(work / "cookies.json"))
        run_report(records, events, rt, args.out, store, args.figures_dir)


COMMANDS = {"ingest": _cmd_ingest, "detect": _cmd_detect, "attribute": _cmd_attribute,
            "report": _cmd_report, "train": _cmd_train, "classify": _cmd_classify, "all": _cmd_all}


def version_string() -> str:
    try:
        catalog = EntityCatalog.bundled().version
    except Exception:  # pragma: no cover - damaged install
        catalog = "unavailable"
    return f"conrad {__version__} (entity catalog {catalog}, public suffix list {PSL_SNAPSHOT})"


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for bad flags; that code is reserved for data errors here
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    setup_logging(-1 if args.quiet else args.verbose)
    if args.version:
        print(version_string())
        return EXIT_OK
    if not args.command:
        parser.print_help()
        return EXIT_USAGE
    try:
        if args.command == "synth":
            _cmd_synth(args)
        else:
            rt = Runtime(resolve_config(args))
            COMMANDS[args.command](args, rt)
    except UsageError as exc:
        log.error(str(exc), extra={"fields": {"stage": args.command, "exit": EXIT_USAGE}})
        return EXIT_USAGE
    except DataError as exc:
        log.error(str(exc), extra={"fields": {"stage": args.command, "exit": EXIT_DATA}})
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
