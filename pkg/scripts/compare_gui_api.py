#!/usr/bin/env python3
"""Compare the GUI-only and API routes for the spreadsheet save-as task.

Runs both bundled scenarios against the simulated desktop with the scripted
planner and prints executor-action and planner-call counts side by side.
"""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from agentos import fixtures
from agentos.config import RunConfig
from agentos.session import Scenario, build_session


def run(name: str, mode: str) -> dict:
    scenario = Scenario.load(fixtures.SCENARIOS_DIR / f"{name}.json")
    config = RunConfig(
        catalog_dir=str(fixtures.CATALOG_DIR),
        api_manifest=str(fixtures.API_MANIFEST),
        auto_approve=True,
        mode=mode,
    )
    session = build_session(config, scenario=scenario)
    round_ = session.run_round(scenario.request)
    counts = round_.outcome["counts"]
    return {
        "route": name,
        "mode": mode,
        "verdict": round_.outcome["verdict"],
        "executor_actions": counts["executor_actions"],
        "planner_calls": counts["planner_calls_app"],
    }


def main() -> None:
    rows = [
        run("save_as_gui", "single"),
        run("save_as_gui", "speculative"),
        run("save_as_api", "speculative"),
    ]
    header = f"{'route':<14} {'mode':<12} {'verdict':<8} {'executor actions':>16} {'planner calls':>14}"
    print(header)
    print("-" * len(header))
    for row in rows:
        print(
            f"{row['route']:<14} {row['mode']:<12} {row['verdict']:<8} "
            f"{row['executor_actions']:>16} {row['planner_calls']:>14}"
        )
    gui = rows[1]["executor_actions"]
    api = rows[2]["executor_actions"]
    print(f"\nexecutor-action reduction via the api route: {gui} -> {api} "
          f"({100 * (gui - api) / gui:.0f}% fewer)")


if __name__ == "__main__":
    main()
