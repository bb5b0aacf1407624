import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from plot import PlotError, PlotSpec, emit, main, read_csv


@pytest.fixture(scope="session")
def scenario_a_outputs(tmp_path_factory):
    """A short Scenario-A run produced through the solver's public CLI."""
    out = tmp_path_factory.mktemp("runA")
    result = subprocess.run(
        [
            sys.executable, "-m", "asyndual", "run",
            "--scenario", "simA",
            "--max-iters", "4000",
            "--log-stride", "1",
            "--state-out",
            "--out", str(out),
        ],
        capture_output=True,
        text=True,
    )
    assert result.returncode == 0, result.stderr
    return out


class TestEmit:
    def test_renders_eps_h_znorm(self, scenario_a_outputs, tmp_path):
        summary = scenario_a_outputs / "summary.csv"
        for series, log_y in [("eps", True), ("H", False), ("Znorm", True)]:
            target = tmp_path / f"{series}.png"
            out = emit(PlotSpec(str(summary), str(target), series=[series], log_y=log_y))
            assert out.exists() and out.stat().st_size > 2000

    def test_eps_envelope_is_decreasing(self, scenario_a_outputs):
        _, columns = read_csv(scenario_a_outputs / "summary.csv")
        eps = columns["eps"][np.isfinite(columns["eps"])]
        envelope = np.minimum.accumulate(eps)
        assert envelope[-1] < envelope[0] * (1 - 1e-6)

    def test_state_theta_group_plot(self, scenario_a_outputs, tmp_path):
        target = tmp_path / "theta.png"
        out = emit(
            PlotSpec(
                str(scenario_a_outputs / "state.csv"),
                str(target),
                series=["theta"],
            )
        )
        assert out.exists() and out.stat().st_size > 2000

    def test_deterministic_output(self, scenario_a_outputs, tmp_path):
        spec = lambda p: PlotSpec(
            str(scenario_a_outputs / "summary.csv"), str(p), series=["eps"], log_y=True
        )
        first = emit(spec(tmp_path / "a.png")).read_bytes()
        second = emit(spec(tmp_path / "b.png")).read_bytes()
        assert first == second

    def test_input_never_mutated(self, scenario_a_outputs, tmp_path):
        summary = scenario_a_outputs / "summary.csv"
        before = summary.read_bytes()
        emit(PlotSpec(str(summary), str(tmp_path / "x.png"), series=["H"]))
        assert summary.read_bytes() == before


class TestErrors:
    def test_empty_csv(self, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text("")
        with pytest.raises(PlotError, match="empty"):
            read_csv(empty)

    def test_malformed_row_reports_line(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("t,H\n0,1.0\n1\n")
        with pytest.raises(PlotError, match="line 3"):
            read_csv(bad)

    def test_non_numeric_reports_line(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("t,H\n0,a-number-this-is-not\n")
        with pytest.raises(PlotError, match="line 2"):
            read_csv(bad)

    def test_missing_column_fails(self, tmp_path):
        csv_path = tmp_path / "ok.csv"
        csv_path.write_text("t,H\n0,1.0\n1,0.5\n")
        with pytest.raises(PlotError, match="no column"):
            emit(PlotSpec(str(csv_path), str(tmp_path / "x.png"), series=["eps"]))


class TestCli:
    def test_cli_roundtrip(self, scenario_a_outputs, tmp_path):
        target = tmp_path / "eps.png"
        code = main(
            [
                "--in", str(scenario_a_outputs / "summary.csv"),
                "--series", "eps",
                "--log-y",
                "--out", str(target),
            ]
        )
        assert code == 0
        assert target.exists()

    def test_cli_missing_column_exits_nonzero(self, tmp_path):
        csv_path = tmp_path / "ok.csv"
        csv_path.write_text("t,H\n0,1.0\n")
        code = main(["--in", str(csv_path), "--series", "eps", "--out", str(tmp_path / "x.png")])
        assert code == 1

    def test_cli_empty_csv_exits_nonzero(self, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text("")
        code = main(["--in", str(empty), "--series", "H", "--out", str(tmp_path / "x.png")])
        assert code == 1
