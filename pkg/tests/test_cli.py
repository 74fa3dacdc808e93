import json

import numpy as np
import pytest

from corrbreak.cli import dumps_report, emit_report, ingest_csv, loads_report, main
from corrbreak.detect import SupportIndexSet, spad_detect
from corrbreak.errors import ConfigError, EmptyFile, NonNumericCell, RaggedRows
from corrbreak.estimate import EstimationReport, space_estimate
from corrbreak.signflip import SignflipConfig
from corrbreak.simlab import MetricsSummary, SimScenario, generate, scenario_rng


@pytest.fixture
def grid_file(tmp_path):
    path = tmp_path / "grid.csv"
    path.write_text("1,2,3\n4,5,7\n")
    return path


@pytest.fixture
def data_file(tmp_path):
    y = generate(SimScenario(case=6, p=12, T=60), scenario_rng(1))
    path = tmp_path / "data.csv"
    np.savetxt(path, y.T, delimiter=",", header="orientation: rows-are-times", comments="# ")
    return path


class TestIngest:
    def test_rows_are_variables(self, grid_file):
        assert ingest_csv(grid_file, "rows-are-variables").shape == (2, 3)

    def test_rows_are_times(self, grid_file):
        y = ingest_csv(grid_file, "rows-are-times")
        assert y.shape == (3, 2)
        assert y[2, 1] == 7

    def test_header_and_labels(self, tmp_path):
        path = tmp_path / "h.csv"
        path.write_text("gene,t1,t2,t3\nA,1,2,3\nB,4,5,6\n")
        np.testing.assert_array_equal(ingest_csv(path, "rows-are-variables"), [[1, 2, 3], [4, 5, 6]])

    def test_directive(self, data_file):
        assert ingest_csv(data_file).shape == (12, 60)
        with pytest.raises(ConfigError):
            ingest_csv(data_file, "rows-are-variables")

    def test_missing_orientation(self, grid_file):
        with pytest.raises(ConfigError):
            ingest_csv(grid_file)

    def test_na_cell_location(self, tmp_path):
        path = tmp_path / "na.csv"
        path.write_text("1,2,3\n4,NA,6\n")
        with pytest.raises(NonNumericCell) as err:
            ingest_csv(path, "rows-are-variables")
        assert (err.value.row, err.value.col) == (2, 2)

    def test_ragged(self, tmp_path):
        path = tmp_path / "r.csv"
        path.write_text("1,2,3\n4,5\n")
        with pytest.raises(RaggedRows) as err:
            ingest_csv(path, "rows-are-variables")
        assert err.value.line == 2

    def test_empty(self, tmp_path):
        path = tmp_path / "e.csv"
        path.write_text("\n\n")
        with pytest.raises(EmptyFile):
            ingest_csv(path, "rows-are-times")


class TestReports:
    def test_empty_support_serialized(self):
        rep = EstimationReport(0.5, 50, np.zeros(97), SupportIndexSet(np.empty(0, np.int64), 4),
                               None, T=100, method="kcp")
        doc = json.loads(dumps_report(rep))
        assert doc["support"] == []
        assert doc["beta_hat"] == 0.5 and doc["t_hat"] == 50

    def test_estimation_round_trip(self):
        y = generate(SimScenario(case=6, p=10, T=50), scenario_rng(2))
        rep = space_estimate(y, SignflipConfig(q=3, seed=1))
        again = loads_report(dumps_report(rep))
        assert again == rep
        assert dumps_report(again) == dumps_report(rep)

    def test_detection_round_trip(self):
        y = generate(SimScenario(case=1, p=10, T=50), scenario_rng(3))
        rep = spad_detect(y, SignflipConfig(q=3, seed=1))
        doc = json.loads(dumps_report(rep))
        assert doc["verdict"] == rep.rejected
        assert sum(doc["w_histogram"]["counts"]) == 45
        assert loads_report(dumps_report(rep)) == rep

    def test_floats_round_trip_exactly(self):
        rep = EstimationReport(1 / 3, 33, np.array([0.1 + 0.2, 1e-300, 2 / 7]),
                               SupportIndexSet.from_pairs([(1, 3)], 3), None, T=99)
        back = loads_report(dumps_report(rep))
        np.testing.assert_array_equal(back.cusum, rep.cusum)
        assert back.beta_hat == 1 / 3

    def test_metrics_round_trip(self):
        m = MetricsSummary(method="space", replications=2, mean=0.5, sd=0.1, mse=0.01,
                           true_beta=0.5, failure_kinds={"EmptySupport": 1})
        assert loads_report(dumps_report(m)) == m

    def test_csv_files(self, tmp_path):
        rep = EstimationReport(0.5, 50, np.arange(3.0), SupportIndexSet.from_pairs([(1, 2)], 3),
                               None, T=100, notes={"bandwidth": 1.5})
        written = emit_report(rep, "csv", str(tmp_path / "out.csv"))
        names = sorted(p.rsplit("/", 1)[-1] for p in written)
        assert names == ["out.csv", "out_cusum_curve.csv", "out_support.csv"]
        text = (tmp_path / "out.csv").read_text()
        assert "beta_hat,0.5\n" in text and "notes.bandwidth,1.5\n" in text
        assert (tmp_path / "out_cusum_curve.csv").read_text().splitlines()[1] == "2,0.0"

    def test_csv_needs_path(self):
        rep = EstimationReport(0.5, 50, np.zeros(1), SupportIndexSet(np.empty(0, np.int64), 2), None)
        with pytest.raises(ConfigError):
            emit_report(rep, "csv", None)


class TestMain:
    def test_detect_json(self, data_file, tmp_path):
        out = tmp_path / "d.json"
        assert main(["detect", "--input", str(data_file), "--trials", "4", "--output", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["kind"] == "detection" and doc["q"] == 4

    @pytest.mark.parametrize("cmd", [["estimate"], ["estimate", "--method", "dette"],
                                     ["estimate", "--method", "kcp"], ["smote-estimate"]])
    def test_estimate_variants(self, data_file, tmp_path, cmd):
        out = tmp_path / "e.json"
        argv = cmd + ["--input", str(data_file), "--trials", "3", "--output", str(out)]
        assert main(argv) == 0
        assert json.loads(out.read_text())["kind"] == "estimation"

    def test_simulate(self, tmp_path):
        cfg = tmp_path / "s.txt"
        cfg.write_text("case=6\np=8\nT=40\n")
        out = tmp_path / "m.json"
        argv = ["simulate", "--config", str(cfg), "--replications", "3", "--trials", "3",
                "--method", "space", "--output", str(out)]
        assert main(argv) == 0
        doc = json.loads(out.read_text())
        assert doc["replications"] == 3 and doc["true_beta"] == 0.5

    def test_usage_errors(self, data_file, capsys):
        with pytest.raises(SystemExit) as err:
            main(["nonsense"])
        assert err.value.code == 1
        with pytest.raises(SystemExit) as err:
            main(["detect"])
        assert err.value.code == 1
        assert main(["detect", "--input", str(data_file), "--trials", "0"]) == 1
        assert main(["simulate", "--case", "12"]) == 1

    def test_data_error(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("1,2,x\n3,4,5\n")
        assert main(["detect", "--input", str(bad), "--orientation", "rows-are-variables"]) == 2
        assert main(["detect", "--input", str(tmp_path / "missing.csv"),
                     "--orientation", "rows-are-variables"]) == 2

    def test_method_error(self, tmp_path):
        flat = tmp_path / "flat.csv"
        np.savetxt(flat, np.ones((3, 20)), delimiter=",")
        assert main(["estimate", "--method", "kcp", "--input", str(flat),
                     "--orientation", "rows-are-variables"]) == 3

    def test_byte_identical(self, data_file, tmp_path):
        outs = []
        for k, w in enumerate((1, 2, 3)):
            out = tmp_path / f"o{k}.json"
            main(["estimate", "--input", str(data_file), "--trials", "5", "--seed", "9",
                  "--workers", str(w), "--output", str(out)])
            outs.append(out.read_bytes())
        assert outs[0] == outs[1] == outs[2]
