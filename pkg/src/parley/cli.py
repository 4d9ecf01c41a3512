"""Operator command line: serve, validate, run-scenario, transcript, replay."""

from __future__ import annotations

import argparse
import json
import os
import sys
import urllib.error
import urllib.parse
import urllib.request
from pathlib import Path
from typing import Optional

from .convener import ConvenerPolicy
from .envelope import parse_envelope, serialize_envelope, validate_envelope
from .errors import InvalidScript, ParleyError
from .floor import Role, create_floor, transcript_entry_from_obj, transcript_entry_to_obj
from .routing import route

DEFAULT_BIND = "127.0.0.1:8700"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="parley",
        description="Host and inspect multi-agent conversations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the conversation service")
    serve.add_argument("--bind", default=os.environ.get("PARLEY_BIND", DEFAULT_BIND),
                       help="host:port to listen on")
    serve.add_argument("--data-dir", default=os.environ.get("PARLEY_DATA_DIR"),
                       help="directory for transcript persistence")
    serve.add_argument("--policy", default=os.environ.get("PARLEY_POLICY"),
                       help="default convener policy file")
    serve.add_argument("--seed-scenario", default=None,
                       help="scenario file to pre-run into a hosted conversation")
    serve.add_argument("--human", default=None,
                       help="designated human conversant URI for the seeded conversation")

    validate = sub.add_parser("validate", help="check an envelope document")
    validate.add_argument("file")
    validate.add_argument("--format", choices=("text", "json"), default="text")

    run = sub.add_parser("run-scenario", help="execute a scripted scenario in-process")
    run.add_argument("file")
    run.add_argument("--out", default=None,
                     help="transcript output path (default: <scenario>.transcript.jsonl)")
    run.add_argument("--max-ticks", type=int, default=10000)
    run.add_argument("--live", action="store_true",
                     help="also drive the scenario through the service pipeline")
    run.add_argument("--format", choices=("text", "json"), default="text")

    transcript = sub.add_parser("transcript", help="fetch a transcript from a running service")
    transcript.add_argument("id")
    transcript.add_argument("--for", dest="for_uri", default=None)
    transcript.add_argument("--since", type=int, default=None)
    transcript.add_argument("--bind", default=os.environ.get("PARLEY_BIND", DEFAULT_BIND))
    transcript.add_argument("--format", choices=("text", "json"), default="text")

    replay = sub.add_parser("replay", help="rebuild floor state from a transcript file")
    replay.add_argument("file")
    replay.add_argument("--convener", default=None,
                        help="convener URI (read from the sibling meta file when omitted)")
    replay.add_argument("--human", default=None)
    replay.add_argument("--format", choices=("text", "json"), default="text")

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    handler = {
        "serve": _cmd_serve,
        "validate": _cmd_validate,
        "run-scenario": _cmd_run_scenario,
        "transcript": _cmd_transcript,
        "replay": _cmd_replay,
    }[args.command]
    try:
        return handler(args)
    except ParleyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _load_policy(path: Optional[str]) -> Optional[ConvenerPolicy]:
    if not path:
        return None
    return ConvenerPolicy.from_file(path)


def _cmd_serve(args) -> int:
    from .service import serve

    serve(
        bind=args.bind,
        data_dir=Path(args.data_dir) if args.data_dir else None,
        policy=_load_policy(args.policy),
        seed_scenario=Path(args.seed_scenario) if args.seed_scenario else None,
        human=args.human,
    )
    return 0


def _cmd_validate(args) -> int:
    try:
        text = Path(args.file).read_text()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        envelope = parse_envelope(text)
    except ParleyError as exc:
        if args.format == "json":
            print(json.dumps({"ok": False, "error": type(exc).__name__,
                              "detail": str(exc)}))
        else:
            print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    violations = validate_envelope(envelope)
    if args.format == "json":
        print(json.dumps({
            "ok": not violations,
            "violations": [
                {"rule": v.rule, "path": v.path, "message": v.message,
                 "severity": v.severity}
                for v in violations
            ],
        }, indent=2))
    else:
        for v in violations:
            print(f"{v.severity}: {v.rule} at {v.path}: {v.message}")
        if not violations:
            print(f"{args.file}: ok")
    return 0 if not violations else 1


def _cmd_run_scenario(args) -> int:
    from .agents import run_scenario, scenario_from_file

    try:
        scenario = scenario_from_file(args.file)
    except InvalidScript as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    result = run_scenario(scenario, max_ticks=args.max_ticks)

    out_path = Path(args.out) if args.out else Path(
        Path(args.file).stem + ".transcript.jsonl")
    with out_path.open("w") as fh:
        for entry in result.transcript:
            fh.write(json.dumps(transcript_entry_to_obj(entry),
                                separators=(",", ":")) + "\n")

    live_matches = None
    if args.live:
        live_matches = _run_live(scenario, result)

    holder = result.floor.holder.holder_uri if result.floor.holder else None
    summary = {
        "scenario": str(args.file),
        "conversation_id": scenario.conversation_id,
        "entries": len(result.transcript),
        "ticks": result.ticks,
        "quiescent": result.quiescent,
        "holder": holder,
        "participants": sorted(result.floor.participant_uris()),
        "out": str(out_path),
    }
    if live_matches is not None:
        summary["live_matches"] = live_matches
    if args.format == "json":
        print(json.dumps(summary, indent=2))
    else:
        print(f"{summary['entries']} entries -> {out_path}"
              f" (quiescent={summary['quiescent']}, holder={holder})")
        if live_matches is not None:
            print(f"live service run matches simulation: {live_matches}")
    if not result.quiescent or live_matches is False:
        return 1
    return 0


def _run_live(scenario, sim_result) -> bool:
    """Re-drive the simulated envelope stream through the service pipeline.

    Policy-decision envelopes are withheld so the host's own convener has to
    re-issue them; the run matches when the resulting transcript is identical.
    """
    import asyncio

    from .service import ConversationService

    decision_wires = {
        serialize_envelope(env)
        for decision in sim_result.decisions
        for env in decision.emitted_envelopes
    }
    to_submit = [
        entry.envelope for entry in sim_result.transcript
        if serialize_envelope(entry.envelope) not in decision_wires
    ]
    service = ConversationService()
    human = next((m["uri"] for m in scenario.members
                  if m.get("role") == "human_conversant"), None)
    members = tuple(
        (m["uri"], m.get("role", "conversant")) for m in scenario.members
        if m.get("present", True) and m["uri"] != human
    )
    host = service.create(
        scenario.policy,
        human_uri=human,
        topic=scenario.topic,
        conversation_id=scenario.conversation_id,
        convener_uri=scenario.convener_uri,
        members=members,
    )

    async def drive():
        for envelope in to_submit:
            await host.submit(envelope)

    asyncio.run(drive())
    got = [serialize_envelope(e.envelope) for e in host.floor.transcript]
    want = [serialize_envelope(e.envelope) for e in sim_result.transcript]
    return got == want


def _cmd_transcript(args) -> int:
    query = {}
    if args.for_uri:
        query["for"] = args.for_uri
    if args.since is not None:
        query["since"] = str(args.since)
    url = (f"http://{args.bind}/conversations/{urllib.parse.quote(args.id)}/transcript")
    if query:
        url += "?" + urllib.parse.urlencode(query)
    try:
        with urllib.request.urlopen(url, timeout=10) as resp:
            payload = json.loads(resp.read().decode("utf-8"))
    except (urllib.error.URLError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.format == "json":
        print(json.dumps(payload, indent=2))
    else:
        for entry in payload.get("entries", ()):
            envelope = entry.get("envelope") or entry.get("view") or {}
            sender = envelope.get("ovon", {}).get("sender", {}).get("from", "?")
            kinds = ",".join(e.get("eventType", "?")
                             for e in envelope.get("ovon", {}).get("events", ()))
            print(f"{entry['seq']:4d} {sender} {kinds}")
    return 0


def _cmd_replay(args) -> int:
    path = Path(args.file)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    convener_uri = args.convener
    human_uri = args.human
    suffix = ".transcript.jsonl"
    conversation_id = path.name[: -len(suffix)] if path.name.endswith(suffix) else path.stem
    meta_path = path.with_name(f"{conversation_id}.meta.json")
    policy = ConvenerPolicy()
    if meta_path.exists():
        meta = json.loads(meta_path.read_text())
        convener_uri = convener_uri or meta.get("convener_uri")
        human_uri = human_uri or meta.get("human_uri")
        conversation_id = meta.get("conversation_id", conversation_id)
        policy = ConvenerPolicy.from_obj(meta.get("policy", {}))
    if not convener_uri:
        print("error: convener URI unknown; pass --convener or keep the meta file",
              file=sys.stderr)
        return 1

    floor = create_floor(conversation_id, convener_uri)
    if human_uri:
        floor = floor.join(human_uri, Role.HUMAN_CONVERSANT)
    if meta_path.exists():
        for uri, role in meta.get("members", []):
            if not floor.is_participant(uri):
                floor = floor.join(uri, Role(role))

    config = policy.routing_config()
    replayed = 0
    for line in lines:
        if not line.strip():
            continue
        obj = json.loads(line)
        if "annotation" in obj:
            continue
        entry = transcript_entry_from_obj(obj)
        _, floor = route(floor, entry.envelope, entry.tick, config)
        replayed += 1

    holder = floor.holder.holder_uri if floor.holder else None
    summary = {
        "conversation_id": conversation_id,
        "entries": replayed,
        "participants": sorted(floor.participant_uris()),
        "holder": holder,
        "queue": [r.requester_uri for r in floor.request_queue],
        "clock": floor.clock,
    }
    if args.format == "json":
        print(json.dumps(summary, indent=2))
    else:
        print(f"{replayed} entries; participants={len(summary['participants'])}"
              f" holder={holder} queue={len(summary['queue'])} clock={floor.clock}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
