#!/usr/bin/env python3
"""Measure planner-call savings of speculative batching on randomized tasks.

Generates scripted multi-step tasks (some with a mid-plan layout change
that invalidates a later target), runs each in single-action and
speculative mode, and reports the call reduction.
"""
import random
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

from agentos.planner import Planner, ScriptedBackend
from agentos.session import build_session
from conftest import make_config
from test_acceptance import _make_reduction_task, app_planner_calls


def main(n_tasks: int = 50, seed: int = 0xA11CE) -> None:
    rng = random.Random(seed)
    total = {"single": 0, "speculative": 0}
    disrupted_count = 0
    for task_id in range(n_tasks):
        catalog, fixture, request, length, disrupted = _make_reduction_task(rng, task_id)
        disrupted_count += disrupted
        for mode in ("single", "speculative"):
            config = make_config(mode=mode, catalog_dir=None)
            session = build_session(
                config, catalog=catalog, planner=Planner(ScriptedBackend(fixture))
            )
            round_ = session.run_round(request)
            assert round_.status == "finished"
            total[mode] += app_planner_calls(session)

    reduction = 100 * (total["single"] - total["speculative"]) / total["single"]
    print(f"tasks: {n_tasks} ({disrupted_count} with a mid-plan layout change)")
    print(f"planner calls, single-action mode: {total['single']}")
    print(f"planner calls, speculative mode:   {total['speculative']}")
    print(f"call reduction: {reduction:.1f}%")


if __name__ == "__main__":
    main()
