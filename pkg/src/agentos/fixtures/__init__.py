"""Bundled fixture data: app catalog, API manifest, risk rules, scripted
planner scripts, and scenario files."""
from pathlib import Path

FIXTURES_ROOT = Path(__file__).parent
CATALOG_DIR = FIXTURES_ROOT / "catalog"
SCENARIOS_DIR = FIXTURES_ROOT / "scenarios"
PLANNER_DIR = FIXTURES_ROOT / "planner"
API_MANIFEST = FIXTURES_ROOT / "apis.json"
RISK_RULES = FIXTURES_ROOT / "rules.json"
