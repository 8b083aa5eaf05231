import csv
import json

import pytest

from alaas.bench import BenchResult, BenchScenario, CellResult, compare_report, run_scenario
from alaas.bench.cli import main as bench_main
from alaas.bench.harness import cell_order
from alaas.errors import ScenarioMismatch


def known_result(**scenario):
    s = BenchScenario(name="golden", pool_size=100, modes=("pipelined", "sequential_whole"), batch_sizes=(16,),
                      **scenario)
    return BenchResult(s, {
        ("pipelined", 16): CellResult("pipelined", 16, [1.0, 2.0, 3.0]),
        ("sequential_whole", 16): CellResult("sequential_whole", 16, [4.0, 4.0, 4.0]),
    })


GOLDEN = """\
| Mode | BS | Latency (s) | Throughput (items/s) | Baseline throughput (items/s) | Ratio |
|---|---:|---:|---:|---:|---:|
| pipelined | 16 | 2.000 ± 1.000 | 61.11 | 61.11 | 1.00 |
| sequential_whole | 16 | 4.000 ± 0.000 | 25.00 | 25.00 | 1.00 |
"""


class TestReport:
    def test_identical_results_ratio_one(self):
        assert compare_report(known_result(), known_result()) == GOLDEN

    def test_ratio_against_slower_baseline(self):
        base = known_result()
        base.cells[("pipelined", 16)] = CellResult("pipelined", 16, [2.0, 4.0, 6.0])
        table = compare_report(known_result(), base)
        row = next(line for line in table.splitlines() if line.startswith("| pipelined"))
        assert row.endswith("| 61.11 | 30.56 | 2.00 |")

    def test_mismatch(self):
        other = BenchResult(BenchScenario(pool_size=200, modes=("pipelined",)), {})
        with pytest.raises(ScenarioMismatch):
            compare_report(known_result(), other)

    def test_throughput_is_mean_of_per_run_ratios(self):
        cell = known_result().cell("pipelined", 16)
        assert cell.throughput_mean(100) == pytest.approx((100 + 50 + 100 / 3) / 3)
        assert cell.latency_std_s == pytest.approx(1.0)
        assert CellResult("x", 1, [1.0, 2.0]).latency_std_s is None

    def test_json_roundtrip_and_csv(self, tmp_path):
        r = known_result()
        json_path, csv_path = r.write(tmp_path)
        again = BenchResult.from_dict(json.loads(json_path.read_text()))
        assert compare_report(again, r) == GOLDEN
        rows = list(csv.DictReader(open(csv_path)))
        assert [row["mode"] for row in rows] == ["pipelined", "sequential_whole"]
        assert float(rows[1]["throughput_mean"]) == 25.0


class TestScenario:
    def test_validation(self):
        with pytest.raises(ValueError):
            BenchScenario(modes=("warp",))
        with pytest.raises(ValueError):
            BenchScenario(pool_size=5, budget=6)
        assert BenchScenario(strategy="EntropySampling").strategy == "ES"

    def test_cell_order_is_shuffled_and_complete(self):
        s = BenchScenario(modes=("pipelined", "sequential_whole"), batch_sizes=(1, 4, 16), repeats=3)
        order = cell_order(s)
        assert sorted(order) == sorted([(m, b) for m in s.modes for b in s.batch_sizes] * 3)
        assert order != sorted(order)

    def test_small_run_is_stable(self):
        s = BenchScenario(pool_size=100, budget=5, modes=("pipelined",), repeats=3)
        cell = run_scenario(s).cell("pipelined", 16)
        assert cell.ok and len(cell.latencies_s) == 3
        assert max(cell.latencies_s) <= 1.5 * min(cell.latencies_s) + 0.05

    def test_failing_cell_does_not_abort_sweep(self, monkeypatch):
        from alaas.bench import harness

        real = harness.run_round

        def flaky(manifest, query, spec, *a, **kw):
            if spec.mode == "sequential_rounds":
                raise RuntimeError("injected")
            return real(manifest, query, spec, *a, **kw)

        monkeypatch.setattr(harness, "run_round", flaky)
        r = run_scenario(BenchScenario(pool_size=40, budget=3, modes=("pipelined", "sequential_rounds"),
                                       repeats=1))
        assert r.cell("pipelined", 16).ok
        assert "injected" in r.cell("sequential_rounds", 16).error

    def test_wrong_selection_fails_the_cell(self, monkeypatch):
        from alaas.bench import harness

        real = harness.direct_selection

        def skewed(*a, **kw):
            sel = real(*a, **kw)
            return type(sel)(tuple(reversed(sel.ids)), tuple(reversed(sel.scores)))

        monkeypatch.setattr(harness, "direct_selection", skewed)
        r = run_scenario(BenchScenario(pool_size=30, budget=3, modes=("pipelined",), repeats=1))
        assert "AssertionError" in r.cell("pipelined", 16).error


def test_cli(tmp_path, capsys):
    scenario = tmp_path / "s.json"
    scenario.write_text(json.dumps({"name": "tiny", "pool_size": 30, "budget": 3, "repeats": 3,
                                    "modes": ["pipelined", "sequential_whole"], "batch_sizes": [4]}))
    assert bench_main(["--scenario", str(scenario), "--out", str(tmp_path / "out")]) == 0
    out = capsys.readouterr().out
    assert "| pipelined | 4 |" in out
    assert (tmp_path / "out" / "tiny.csv").exists()
    assert bench_main(["--scenario", str(scenario), "--out", str(tmp_path / "out2"),
                       "--baseline", str(tmp_path / "out" / "tiny.json")]) == 0
    assert "Ratio" in capsys.readouterr().out
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"pool_sz": 3}))
    assert bench_main(["--scenario", str(bad), "--out", str(tmp_path)]) == 1
