import csv

import numpy as np
import pytest

from ifem_ident.benchmarks import read_csv_table
from ifem_ident.cli import build_parser, main, resolve_model


class TestParser:
    def test_subcommands(self):
        ap = build_parser()
        for argv in (["forward", "bar"], ["synth", "bar"], ["invert-det", "bar", "--data", "x"],
                     ["invert-interval", "bar", "--data", "x"], ["mc", "bar", "--data", "x"], ["bench", "bar"]):
            assert ap.parse_args(argv).command == argv[0]

    def test_unknown_benchmark_rejected(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["bench", "plate"])

    def test_tolerance_flags_are_distinct(self):
        a = build_parser().parse_args(["bench", "bar", "--tol", "1e-8", "--device-tol", "1e-6"])
        assert a.tol == 1e-8 and a.device_tol == 1e-6

    def test_resolve_model(self):
        assert resolve_model("beam-moments").n_params == resolve_model("beam").n_params
        with pytest.raises(FileNotFoundError):
            resolve_model("no_such_model")


class TestCommands:
    def test_forward(self, tmp_path, models):
        out = tmp_path / "u.csv"
        assert main(["forward", "bar", "--out", str(out)]) == 0
        vals = np.array([float(v) for v in read_csv_table(out)["value"]])
        assert vals.shape == (models["bar"].n_meas,)
        assert np.all(np.diff(vals) > 0)

    def test_forward_uniform_modulus(self, tmp_path):
        out = tmp_path / "u.csv"
        assert main(["forward", "bar", "--modulus", "100", "--out", str(out)]) == 0
        vals = np.array([float(v) for v in read_csv_table(out)["value"]])
        # u_i = N x_i / (E A)
        expect = 100e3 * 0.5 * np.arange(1, 11) / (100e9 * 0.005)
        np.testing.assert_allclose(vals, expect, rtol=1e-12)

    def test_synth_then_invert_interval(self, tmp_path, models):
        data = tmp_path / "data.csv"
        rep = tmp_path / "alpha.csv"
        assert main(["synth", "bar", "--seed", "3", "--out", str(data)]) == 0
        assert main(["invert-interval", "bar", "--data", str(data), "--report", str(rep)]) == 0
        with open(rep) as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
        assert len(rows) == models["bar"].n_params + 1

    def test_invert_det_and_mc(self, tmp_path, capsys):
        data = tmp_path / "data.csv"
        assert main(["synth", "truss", "--out", str(data)]) == 0
        assert main(["invert-det", "truss", "--data", str(data), "--trace", str(tmp_path / "t.csv")]) == 0
        assert (tmp_path / "t.csv").exists()
        assert main(["mc", "truss", "--data", str(data), "--runs", "5"]) == 0
        assert "runs=5" in capsys.readouterr().out

    def test_bench_passes(self, tmp_path, capsys):
        assert main(["bench", "bar", "--use-paper-data", "--runs", "20", "--report", str(tmp_path)]) == 0
        assert "overall: PASS" in capsys.readouterr().out
        assert (tmp_path / "bar_report.txt").exists() and (tmp_path / "bar_moduli.csv").exists()


class TestErrors:
    def test_missing_data_file(self, capsys):
        assert main(["invert-interval", "bar", "--data", "/nonexistent.csv"]) == 2
        assert capsys.readouterr().err.startswith("error:")

    def test_wrong_row_count(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("label,lo,hi\nu1,0,1\n")
        assert main(["invert-interval", "bar", "--data", str(bad)]) == 2
        assert "rows" in capsys.readouterr().err

    def test_missing_model(self):
        assert main(["forward", "no_such_model"]) == 2
