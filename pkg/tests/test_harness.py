import csv
import io

import pytest

from antgp import cli, harness
from antgp.engine import GenerationRecord, RunTrace
from antgp.harness import ConfigError

MINI = """\
[experiment]
runs = 2
base_seed = 5

[defaults]
pop_size = 30
max_generations = 4
max_depth = 6

[run:baseline]
mechanism =

[run:avsmr]
mechanism = avsmr
avsmr_streak = 1
"""


def trace(run, maxima, events=None, p=0.1):
    events = events or ["none"] * len(maxima)
    records = [GenerationRecord(g, m / 2, m, p, e) for g, (m, e) in enumerate(zip(maxima, events))]
    return RunTrace(run=run, seed=run, records=records)


class TestParseConfig:
    def test_defaults_and_sections(self):
        spec = harness.parse_config(MINI)
        assert spec.labels == ["baseline", "avsmr"]
        base = dict(spec.experiments)["baseline"]
        assert base.mechanism == "none"
        assert base.params.pop_size == 30 and base.runs == 2 and base.base_seed == 5
        assert base.trail.food_count == 89
        assert dict(spec.experiments)["avsmr"].settings.avsmr_streak == 1

    def test_empty_mechanism_is_baseline(self):
        spec = harness.parse_config("[run:x]\nmechanism =\n")
        assert spec.experiments[0][1].mechanism == "none"

    def test_zero_population_rejected_with_location(self):
        text = MINI.replace("pop_size = 30", "pop_size = 0")
        with pytest.raises(ConfigError) as err:
            harness.parse_config(text)
        assert "pop_size" in str(err.value) and "line 6" in str(err.value)

    def test_unknown_key(self):
        with pytest.raises(ConfigError) as err:
            harness.parse_config(MINI + "colour = blue\n")
        assert err.value.key_path == "run:avsmr.colour"
        assert err.value.line == MINI.count("\n") + 1

    def test_unknown_section(self):
        with pytest.raises(ConfigError):
            harness.parse_config("[runs]\nmechanism = avsmr\n")

    def test_unknown_mechanism(self):
        with pytest.raises(ConfigError) as err:
            harness.parse_config("[run:x]\nmechanism = magic\n")
        assert "magic" in str(err.value)

    def test_type_error(self):
        with pytest.raises(ConfigError) as err:
            harness.parse_config("[run:x]\nmax_depth = deep\n")
        assert err.value.line == 2

    def test_no_runs(self):
        with pytest.raises(ConfigError):
            harness.parse_config("[experiment]\nruns = 3\n")

    def test_trail_path_relative_to_config(self, tmp_path):
        (tmp_path / "line.trail").write_text("4 1 0 0 E\n.##.\n")
        cfg = tmp_path / "c.ini"
        cfg.write_text("[experiment]\ntrail = line.trail\n\n[run:a]\nmechanism = none\n")
        spec = harness.load_config(cfg)
        assert spec.experiments[0][1].trail.food_count == 2

    def test_reference_config(self):
        spec = harness.parse_config(harness.reference_config_text())
        assert set(spec.labels) >= {"baseline", "avsmr", "flood_simple", "fmlps", "new_blood"}
        for _, c in spec.experiments:
            assert (c.params.pop_size, c.params.max_generations, c.params.max_depth) == (500, 150, 10)
            assert c.trail.food_count == 89
        assert dict(spec.experiments)["fmlps"].settings.fmlps_exponent == 0.3
        assert dict(spec.experiments)["avsmr"].settings.feedback_alpha == 0.4


class TestTraceCsv:
    def test_layout(self):
        t = trace(0, [3, 5, 5], ["none", "flood", "none"])
        buf = io.StringIO()
        harness.emit_trace_csv(t, buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "run,generation,avg_fitness,max_fitness,p_mutation,event"
        assert lines[2] == "0,1,2.500000,5.000000,0.100000,flood"
        assert len(lines) == 4

    def test_row_count(self):
        buf = io.StringIO()
        harness.emit_trace_csv(trace(0, list(range(150))), buf)
        assert len(buf.getvalue().splitlines()) == 151

    def test_byte_identical(self):
        t = trace(1, [1, 2, 3])
        assert harness.traces_to_csv([t]) == harness.traces_to_csv([t])


class TestSummarize:
    def test_fig4_style(self):
        traces = [trace(i, [b]) for i, b in enumerate([55, 89, 60, 76, 58])]
        rows, report = harness.summarize({"x": traces})
        s = report.by_label("x")
        assert s.successes == 1 and s.median == 60
        assert s.best_sorted == [89, 76, 60, 58, 55]
        assert [r.success for r in rows] == [False, True, False, False, False]

    def test_single_run(self):
        _, report = harness.summarize({"x": [trace(0, [42])]})
        assert report.by_label("x").median == 42

    def test_empty_label_rejected(self):
        with pytest.raises(ValueError):
            harness.summarize({"x": []})

    def test_pairwise_ordering(self):
        hi = [trace(i, [b]) for i, b in enumerate([80, 82, 85, 89, 88])]
        lo = [trace(i, [b]) for i, b in enumerate([50, 52, 55, 51, 49])]
        _, report = harness.summarize({"lo": lo, "hi": hi})
        cmp = report.compare("hi", "lo")
        assert cmp.median_holds and cmp.p_value < 0.05
        assert "INVERSION" not in report.render()
        assert report.compare("lo", "hi").p_value > 0.9

    def test_event_counts(self):
        t = trace(0, [1, 2, 3, 4], ["flood", "none", "avsmr_high", "avsmr_reset"])
        rows, _ = harness.summarize({"x": [t]})
        assert (rows[0].flood_events, rows[0].avsmr_events) == (1, 1)


class TestCli:
    def test_list_mechanisms(self, capsys):
        assert cli.main(["--list-mechanisms"]) == 0
        out = capsys.readouterr().out
        for name in ("none", "avsmr", "aga", "flood_simple", "fmlps", "new_blood"):
            assert name in out

    def test_run_writes_outputs(self, tmp_path):
        cfg = tmp_path / "mini.ini"
        cfg.write_text(MINI)
        out = tmp_path / "out"
        assert cli.main(["run", str(cfg), "--out", str(out)]) == 0
        with open(out / "traces" / "avsmr.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert {r["run"] for r in rows} == {"0", "1"}
        long_rows = (out / "best_fitness_long.csv").read_text().splitlines()
        assert long_rows[0] == "label,run,best_fitness" and len(long_rows) == 5
        assert (out / "summary.csv").read_text().startswith("label,run,best_fitness,success")
        assert "median ordering" in (out / "ordering.txt").read_text()

    def test_rerun_is_idempotent(self, tmp_path):
        cfg = tmp_path / "mini.ini"
        cfg.write_text(MINI)
        cli.main(["run", str(cfg), "--out", str(tmp_path / "a")])
        cli.main(["run", str(cfg), "--out", str(tmp_path / "b")])
        for name in ("summary.csv", "best_fitness_long.csv", "traces/baseline.csv", "traces/avsmr.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_overrides(self, tmp_path):
        cfg = tmp_path / "mini.ini"
        cfg.write_text(MINI)
        out = tmp_path / "o"
        assert cli.main(["run", str(cfg), "--out", str(out), "--runs", "1", "--seed", "9",
                         "--mechanism", "fmlps"]) == 0
        rows = (out / "summary.csv").read_text().splitlines()
        assert len(rows) == 2 and rows[1].startswith("fmlps,0,")

    def test_trail_override(self, tmp_path):
        cfg = tmp_path / "mini.ini"
        cfg.write_text(MINI)
        trail = tmp_path / "t.trail"
        trail.write_text("5 1 0 0 E\n.##..\n")
        out = tmp_path / "o"
        assert cli.main(["run", str(cfg), "--out", str(out), "--trail", str(trail), "--runs", "1"]) == 0
        assert "2,1," in (out / "summary.csv").read_text()

    def test_bad_config_exit_code(self, tmp_path, capsys):
        cfg = tmp_path / "bad.ini"
        cfg.write_text("[run:x]\npop_size = 0\n")
        assert cli.main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 2
        assert "pop_size" in capsys.readouterr().err
        assert not (tmp_path / "o").exists()

    def test_missing_config(self, tmp_path):
        assert cli.main(["run", str(tmp_path / "nope.ini")]) == 2

    def test_parallel_matches_serial(self, tmp_path):
        spec = harness.parse_config(MINI)
        serial = cli.execute(spec, jobs=1)
        parallel = cli.execute(spec, jobs=2)
        assert harness.traces_to_csv(serial["avsmr"]) == harness.traces_to_csv(parallel["avsmr"])
