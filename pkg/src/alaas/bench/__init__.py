from alaas.bench.harness import (
    BenchResult,
    BenchScenario,
    CellResult,
    compare_report,
    direct_selection,
    run_scenario,
    summary_table,
)

__all__ = [
    "BenchResult",
    "BenchScenario",
    "CellResult",
    "compare_report",
    "direct_selection",
    "run_scenario",
    "summary_table",
]
