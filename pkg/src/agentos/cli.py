"""Operator command line.

Subcommands: run a scenario headlessly, replay a trace, manage the
knowledge store, start the service, and export a markdown report. Errors
exit non-zero with machine-readable JSON on stderr; `run` exits 0 only
when the round's verdict is success.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import knowledge as knowledge_mod
from . import trace as trace_mod
from .config import build_config
from .errors import AgentOSError
from .knowledge import HelpDoc, KnowledgeStore
from .session import Scenario, build_session
from .simenv import Catalog


def _fail(error: str, message: str, exit_code: int = 1) -> None:
    click.echo(json.dumps({"error": error, "message": message}), err=True)
    sys.exit(exit_code)


@click.group()
def main() -> None:
    """Deterministic desktop-automation agent runtime."""


@main.command()
@click.option("--catalog", "catalog_dir", required=True, type=click.Path(exists=True))
@click.option("--scenario", "scenario_path", required=True, type=click.Path(exists=True))
@click.option("--planner", "planner_backend", type=click.Choice(["scripted", "http"]), default=None)
@click.option("--planner-fixture", type=click.Path(exists=True), default=None)
@click.option("--mode", type=click.Choice(["single", "speculative"]), default=None)
@click.option("--max-steps", type=int, default=None)
@click.option("--max-batch", type=int, default=None)
@click.option("--auto-approve", is_flag=True, default=False,
              help="Resolve safeguard confirmations automatically (recorded in the trace).")
@click.option("--apis", "api_manifest", type=click.Path(exists=True), default=None)
@click.option("--rules", "risk_rules", type=click.Path(exists=True), default=None)
@click.option("--knowledge-dir", type=click.Path(), default=None)
@click.option("--trace-out", type=click.Path(), default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def run(
    catalog_dir,
    scenario_path,
    planner_backend,
    planner_fixture,
    mode,
    max_steps,
    max_batch,
    auto_approve,
    api_manifest,
    risk_rules,
    knowledge_dir,
    trace_out,
    config_path,
) -> None:
    """Execute one scenario as a single-round session and print the verdict
    plus trace-derived counts."""
    try:
        config = build_config(
            config_path,
            catalog_dir=catalog_dir,
            planner_backend=planner_backend,
            planner_fixture=planner_fixture,
            mode=mode,
            max_steps=max_steps,
            max_batch=max_batch,
            auto_approve=auto_approve or None,
            api_manifest=api_manifest,
            risk_rules=risk_rules,
            knowledge_dir=knowledge_dir,
        )
        scenario = Scenario.load(scenario_path)
        session = build_session(config, scenario=scenario)
        round_ = session.run_round(scenario.request)
        session.close()
        if trace_out:
            session.events.dump_jsonl(trace_out)

        events = session.events.all_events()
        counts = trace_mod.trace_counts(events, round_.index)
        outcome = round_.outcome or {}
        click.echo(f"verdict={outcome.get('verdict')}")
        click.echo(f"status={outcome.get('status')}")
        if outcome.get("fail_reason"):
            click.echo(f"fail_reason={outcome['fail_reason']}")
        for key, value in counts.items():
            click.echo(f"{key}={value}")
        click.echo(f"final_state_hash={outcome.get('final_state_hash')}")
        if trace_out:
            click.echo(f"trace={trace_out}")
        if outcome.get("verdict") != "success":
            _fail("TaskFailed", f"verdict={outcome.get('verdict')}", exit_code=1)
    except AgentOSError as exc:
        _fail(exc.code, str(exc))
    except (ValueError, OSError) as exc:
        _fail(type(exc).__name__, str(exc))


@main.command()
@click.option("--trace", "trace_path", required=True, type=click.Path(exists=True))
@click.option("--catalog", "catalog_dir", required=True, type=click.Path(exists=True))
def replay(trace_path, catalog_dir) -> None:
    """Re-apply a recorded trace against a fresh desktop and compare hashes."""
    try:
        events = trace_mod.load_jsonl(trace_path)
        catalog = Catalog.load(catalog_dir)
        result = trace_mod.replay(events, catalog)
        click.echo("MATCH" if result["match"] else "MISMATCH")
        click.echo(f"replayed={result['final_state_hash']}")
        click.echo(f"recorded={result['recorded_state_hash']}")
        if not result["match"]:
            _fail("ReplayMismatch", json.dumps(result))
    except AgentOSError as exc:
        _fail(exc.code, str(exc))


@main.command()
@click.option("--trace", "trace_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def report(trace_path, out_path) -> None:
    """Export a trace as a markdown execution log."""
    events = trace_mod.load_jsonl(trace_path)
    markdown = trace_mod.export_markdown(events)
    Path(out_path).write_text(markdown)
    click.echo(f"wrote {out_path}")


@main.group()
def knowledge() -> None:
    """Manage the help-document / experience store."""


@knowledge.command()
@click.option("--docs", "docs_dir", required=True, type=click.Path(exists=True))
@click.option("--store", "store_dir", required=True, type=click.Path())
def ingest(docs_dir, store_dir) -> None:
    """Ingest help-document JSON files (one doc or a list per file)."""
    try:
        docs: list[HelpDoc] = []
        for path in sorted(Path(docs_dir).glob("*.json")):
            data = json.loads(path.read_text())
            items = data if isinstance(data, list) else [data]
            docs.extend(HelpDoc.from_json(item) for item in items)
        store = KnowledgeStore(root=store_dir)
        stats = store.ingest_docs(docs)
        click.echo(json.dumps(stats))
    except AgentOSError as exc:
        _fail(exc.code, str(exc))


@knowledge.command()
@click.option("--trace", "trace_path", required=True, type=click.Path(exists=True))
@click.option("--store", "store_dir", required=True, type=click.Path())
def distill(trace_path, store_dir) -> None:
    """Distill evaluator-validated successes from a trace into experience."""
    events = trace_mod.load_jsonl(trace_path)
    records = knowledge_mod.distill(events)
    store = KnowledgeStore(root=store_dir)
    stats = store.add_experience(records)
    click.echo(json.dumps(stats))


@main.command()
@click.option("--port", type=int, default=8000)
@click.option("--host", default="127.0.0.1")
@click.option("--catalog", "catalog_dir", required=True, type=click.Path(exists=True))
@click.option("--planner", "planner_backend", type=click.Choice(["scripted", "http"]), default=None)
@click.option("--planner-fixture", type=click.Path(exists=True), default=None)
@click.option("--scenarios", "scenarios_dir", type=click.Path(exists=True), default=None)
@click.option("--apis", "api_manifest", type=click.Path(exists=True), default=None)
@click.option("--rules", "risk_rules", type=click.Path(exists=True), default=None)
@click.option("--mode", type=click.Choice(["single", "speculative"]), default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def serve(port, host, catalog_dir, planner_backend, planner_fixture, scenarios_dir,
          api_manifest, risk_rules, mode, config_path) -> None:
    """Start the session service."""
    import uvicorn

    from .service import create_app

    try:
        config = build_config(
            config_path,
            catalog_dir=catalog_dir,
            planner_backend=planner_backend,
            planner_fixture=planner_fixture,
            api_manifest=api_manifest,
            risk_rules=risk_rules,
            mode=mode,
        )
        app = create_app(config, scenarios_dir=scenarios_dir)
    except (AgentOSError, ValueError) as exc:
        _fail(getattr(exc, "code", type(exc).__name__), str(exc))
        return
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
