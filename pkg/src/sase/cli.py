"""``sase`` command-line harness.

Exit codes: 0 success, 1 validation or I/O error, 2 the engine answered but
could not meet the utility threshold.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from collections import Counter
from pathlib import Path

from .errors import SaseError
from .model import AdaptationRequest, KnowledgeBase, Source, Status, validate_state
from .quality import utility
from .runtime import Scenario, load_scenario, run_loop

EXIT_OK, EXIT_ERROR, EXIT_UNMET = 0, 1, 2

METRICS_HEADER = ["tick", "utility", "expected_utility", "classification", "triggered",
                  "provenance", "case_id", "threshold_met", "eval_count", "elapsed_us", "kb_size"]


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which would collide with EXIT_UNMET.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _bool(flag):
    return "true" if flag else "false"


def metrics_csv(records, timing: bool = False) -> str:
    """Render tick records as the metrics CSV (LF line endings).

    Without ``timing`` the elapsed column of triggered ticks is 0, which keeps
    the file byte-identical across runs.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_HEADER)
    for r in records:
        row = [r.tick, repr(r.utility), repr(r.expected_utility), r.classification.value,
               _bool(r.triggered)]
        if r.triggered:
            elapsed = round(r.elapsed * 1e6) if timing else 0
            row += [r.provenance, r.case_id, _bool(r.threshold_met), r.eval_count, elapsed]
        else:
            row += ["", "", "", "", ""]
        row.append(r.kb_size)
        writer.writerow(row)
    return buf.getvalue()


def _fail(message) -> int:
    print(f"sase: error: {message}", file=sys.stderr)
    return EXIT_ERROR


def _load(path, seed=None) -> Scenario:
    if not Path(path).is_file():
        raise FileNotFoundError(f"scenario file not found: {path}")
    return load_scenario(path, seed=seed)


def _load_kb(path, scenario: Scenario) -> KnowledgeBase:
    if path is None or not Path(path).exists():
        return KnowledgeBase.empty(scenario.schema)
    return KnowledgeBase.deserialize(Path(path).read_bytes(), scenario.schema)


def _write(path, data: bytes | str):
    if isinstance(data, str):
        data = data.encode("utf-8")
    Path(path).write_bytes(data)


def cmd_run(args) -> int:
    try:
        scenario = _load(args.scenario, args.seed)
        kb = _load_kb(args.kb, scenario)
        records, kb = run_loop(scenario, kb, args.ticks)
        _write(args.metrics, metrics_csv(records, timing=args.timing == "wall"))
        kb_out = args.kb_out or args.kb
        if kb_out:
            _write(kb_out, kb.serialize())
    except (OSError, SaseError) as exc:
        return _fail(exc)
    unmet = [r.tick for r in records if r.triggered and not r.threshold_met]
    if unmet:
        print(f"sase: threshold not met at ticks {unmet}", file=sys.stderr)
        return EXIT_UNMET
    return EXIT_OK


def _read_request(path, scenario: Scenario) -> AdaptationRequest:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SaseError(f"{path}: not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or "state" not in doc:
        raise SaseError(f"{path}: request must be an object with a 'state'")
    extra = set(doc) - {"state", "trigger_utility", "tick"}
    if extra:
        raise SaseError(f"{path}: unknown request keys {sorted(extra)}")
    violations = validate_state(scenario.schema, doc["state"])
    if violations:
        raise SaseError(f"{path}: invalid state: " + "; ".join(violations))
    state = {a.name: a.coerce(doc["state"][a.name]) for a in scenario.schema}
    trigger = doc.get("trigger_utility")
    if trigger is None:
        trigger = utility(scenario.utility_spec, scenario.compute_metrics(state))
    return AdaptationRequest(state, float(trigger), int(doc.get("tick", 0)))


def cmd_adapt(args) -> int:
    try:
        scenario = _load(args.scenario)
        kb = _load_kb(args.kb, scenario)
        request = _read_request(args.request, scenario)
        response = scenario.engine().adapt(kb, request)
        _write(args.out, json.dumps(response.to_dict(), sort_keys=True, indent=2) + "\n")
        _write(args.kb, kb.serialize())
    except (OSError, SaseError) as exc:
        return _fail(exc)
    return EXIT_OK if response.threshold_met else EXIT_UNMET


def cmd_kb(args) -> int:
    try:
        kb = KnowledgeBase.deserialize(Path(args.kb).read_bytes())
    except (OSError, SaseError) as exc:
        return _fail(exc)
    sources = Counter(Source(c.source).value for c in kb)
    statuses = Counter(Status(c.outcome.status).value for c in kb)
    mean_use = sum(c.use_count for c in kb) / len(kb) if len(kb) else 0.0
    print(f"size: {len(kb)}")
    print(f"next_id: {kb.next_id}")
    print(f"schema_fingerprint: {kb.schema_fingerprint}")
    for s in Source:
        print(f"source.{s.value}: {sources[s.value]}")
    for s in Status:
        print(f"status.{s.value}: {statuses[s.value]}")
    print(f"mean_use_count: {mean_use!r}")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        scenario = _load(args.scenario)
    except SaseError as exc:
        for v in getattr(exc, "violations", [str(exc)]):
            print(f"sase: {args.scenario}: {v}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        return _fail(exc)
    print(f"ok: {scenario.name} ({len(scenario.schema)} attributes, "
          f"{len(scenario.derived)} derived metrics)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sase", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run a scenario through the adaptation loop")
    p.add_argument("--scenario", required=True)
    p.add_argument("--ticks", type=int, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--kb", help="knowledge base to start from (updated unless --kb-out)")
    p.add_argument("--kb-out")
    p.add_argument("--metrics", required=True)
    p.add_argument("--timing", choices=("off", "wall"), default="off",
                   help="'wall' records real adaptation time in elapsed_us")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("adapt", help="answer one adaptation request")
    p.add_argument("--scenario", required=True)
    p.add_argument("--kb", required=True)
    p.add_argument("--request", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("kb", help="summarize a knowledge base file")
    p.add_argument("--kb", required=True)
    p.set_defaults(func=cmd_kb)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("--scenario", required=True)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
