from click.testing import CliRunner

from ffsipp import cli
from ffsipp.experiment import METRICS_HEADER


def run_cli(*args):
    return CliRunner().invoke(cli.main, list(args))


class TestRunCommand:
    def test_smoke_run_writes_reports(self, tmp_path):
        out = tmp_path / "out"
        result = run_cli(
            "run", "--scenario", "smoke", "--approach", "ffsipp",
            "--seeds", "1", "--out", str(out),
        )
        assert result.exit_code == 0, result.output
        metrics = (out / "metrics.csv").read_text()
        assert metrics.splitlines()[0] == METRICS_HEADER
        assert (out / "aggregate.csv").exists()
        assert (out / "usage_ffsipp_seed1.csv").read_text().startswith(
            "minute,leased_cores,parallel_requests"
        )
        assert (out / "actions_ffsipp_seed1.log").read_text()

    def test_unknown_scenario_fails_cleanly(self, tmp_path):
        result = run_cli(
            "run", "--scenario", "no_such_thing", "--seeds", "1",
            "--out", str(tmp_path / "out"),
        )
        assert result.exit_code != 0
        assert "preset" in result.output

    def test_dump_lp_writes_models(self, tmp_path):
        out = tmp_path / "out"
        lp = tmp_path / "lp"
        result = run_cli(
            "run", "--scenario", "smoke", "--approach", "ffsipp",
            "--seeds", "1", "--out", str(out), "--dump-lp", str(lp),
        )
        assert result.exit_code == 0, result.output
        dumps = list(lp.rglob("*.lp"))
        assert dumps
        assert "Minimize" in dumps[0].read_text()


class TestReportCommand:
    def test_report_on_existing_run(self, tmp_path):
        out = tmp_path / "out"
        assert run_cli(
            "run", "--scenario", "smoke", "--approach", "ffsipp",
            "--seeds", "1", "--out", str(out),
        ).exit_code == 0
        result = run_cli("report", "--in", str(out))
        assert result.exit_code == 0
        assert result.output.startswith("approach,runs,")

    def test_report_without_metrics_fails(self, tmp_path):
        result = run_cli("report", "--in", str(tmp_path))
        assert result.exit_code != 0
