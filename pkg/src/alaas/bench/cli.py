"""``alaas-bench --scenario scenario.json --out results/ [--baseline old.json]``"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from alaas.bench.harness import BenchResult, BenchScenario, compare_report, run_scenario, summary_table
from alaas.errors import ALaaSError


def main(argv: list[str] | None = None) -> int:
    p = argparse.ArgumentParser(prog="alaas-bench", description="Run a pipeline benchmark scenario.")
    p.add_argument("--scenario", type=Path, required=True, help="scenario JSON (BenchScenario fields)")
    p.add_argument("--out", type=Path, required=True, help="output directory for JSON and CSV")
    p.add_argument("--baseline", type=Path, help="earlier result JSON to compare against")
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.WARNING)
    try:
        scenario = BenchScenario.from_dict(json.loads(args.scenario.read_text()))
        baseline = BenchResult.from_dict(json.loads(args.baseline.read_text())) if args.baseline else None
    except (OSError, ValueError, TypeError, ALaaSError) as exc:
        print(f"alaas-bench: bad input: {exc}", file=sys.stderr)
        return 1
    result = run_scenario(scenario)
    json_path, csv_path = result.write(args.out)
    try:
        table = compare_report(result, baseline) if baseline else summary_table(result)
    except ALaaSError as exc:
        print(f"alaas-bench: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(table)
    print(f"wrote {json_path} and {csv_path}", file=sys.stderr)
    return 0 if all(c.ok for c in result.cells.values()) else 2


if __name__ == "__main__":
    sys.exit(main())
