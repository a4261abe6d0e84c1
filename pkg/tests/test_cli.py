import csv
import json

import numpy as np
import pytest

from seblocks import cli
from seblocks.partition import Sample

Y_TOY = [
    [1.28, 0.87], [-0.79, -0.96], [0.70, 0.65],
    [-1.23, 1.58], [-0.24, -0.68], [-0.40, 1.36],
]
X_ALT = [
    [-0.25, -1.79], [-2.21, -0.26], [0.11, -1.66], [-1.45, -1.42],
    [0.64, -1.66], [0.81, -1.88], [-3.18, -2.01], [-2.18, -0.61],
]


def write_csv(path, rows, header=None):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow(header)
        writer.writerows(rows)
    return str(path)


@pytest.fixture
def toy_files(tmp_path):
    y = write_csv(tmp_path / "y.csv", Y_TOY)
    x = write_csv(tmp_path / "x.csv", X_ALT)
    return x, y


class TestTestCommand:
    def test_worked_example_from_raw_tables(self, toy_files, capsys):
        x, y = toy_files
        code = cli.main(["test", "--x", x, "--y", y, "--test", "wilcoxon", "--plan", "spiral"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["statistic"] == 40
        assert payload["p_two_sided"] == pytest.approx(0.008, abs=5e-4)

    def test_decide_exit_code(self, toy_files, capsys):
        x, y = toy_files
        code = cli.main([
            "test", "--x", x, "--y", y, "--test", "wilcoxon", "--plan", "spiral",
            "--decide", "--alpha", "0.05",
        ])
        assert code == 2
        payload = json.loads(capsys.readouterr().out)
        assert payload["reject"] is True

    def test_identical_files_tie_error(self, tmp_path, capsys):
        path = write_csv(tmp_path / "same.csv", Y_TOY)
        code = cli.main(["test", "--x", path, "--y", path, "--test", "wilcoxon"])
        assert code == 1
        assert "tie-error" in capsys.readouterr().err

    def test_runs_univariate(self, tmp_path, capsys):
        x = write_csv(tmp_path / "x.csv", [[-4.62], [-1.56], [-0.21], [0.13], [0.27]])
        y = write_csv(tmp_path / "y.csv", [[-0.36], [0.00], [0.75], [3.32]])
        code = cli.main(["test", "--x", x, "--y", y, "--test", "runs"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["statistic"] == 6

    def test_dimension_mismatch(self, tmp_path, capsys):
        x = write_csv(tmp_path / "x.csv", [[1.0, 2.0]])
        y = write_csv(tmp_path / "y.csv", [[1.0], [2.0]])
        assert cli.main(["test", "--x", x, "--y", y]) == 1
        assert "mismatch" in capsys.readouterr().err

    def test_malformed_csv_names_row(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("1.0,2.0\n3.0,oops\n")
        y = write_csv(tmp_path / "y.csv", Y_TOY)
        assert cli.main(["test", "--x", str(path), "--y", y]) == 1
        assert "row 2" in capsys.readouterr().err

    def test_header_autodetected(self, tmp_path, capsys):
        x = write_csv(tmp_path / "x.csv", X_ALT, header=["u", "v"])
        y = write_csv(tmp_path / "y.csv", Y_TOY)
        code = cli.main(["test", "--x", x, "--y", y, "--test", "empty_block", "--plan", "spiral"])
        assert code == 0
        assert json.loads(capsys.readouterr().out)["statistic"] == 5

    def test_table_and_csv_output(self, toy_files, capsys):
        x, y = toy_files
        assert cli.main(["test", "--x", x, "--y", y, "--output", "table"]) == 0
        out = capsys.readouterr().out
        assert "statistic" in out and "40" in out
        assert cli.main(["test", "--x", x, "--y", y, "--output", "csv"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 2 and "statistic" in lines[0]

    def test_partition_sample_swap_warns_and_perturbs(self, toy_files, capsys):
        # the alternative sample repeats one coordinate value, so swapping
        # the roles needs the deterministic tie perturbation
        x, y = toy_files
        code = cli.main([
            "test", "--x", x, "--y", y, "--partition-sample", "x",
            "--test", "empty_block", "--plan", "spiral", "--on-ties", "perturb",
        ])
        assert code == 0
        captured = capsys.readouterr()
        assert "smaller than the partitioning sample" in captured.err
        payload = json.loads(captured.out)
        assert payload["m"] == 6 and payload["n"] == 8

    def test_csv_round_trip(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        sample = Sample(rng.standard_normal((9, 3)))
        path = tmp_path / "s.csv"
        cli.write_sample_csv(str(path), sample)
        back = cli.read_sample_csv(str(path))
        assert np.array_equal(back.points, sample.points)


class TestDistCommand:
    def test_empty_block_table(self, capsys):
        code = cli.main(["dist", "--statistic", "empty_block", "--m", "8", "--n", "6"])
        assert code == 0
        rows = list(csv.reader(capsys.readouterr().out.strip().splitlines()))
        assert rows[0] == ["value", "numerator", "denominator", "probability"]
        values = [int(r[0]) for r in rows[1:]]
        assert values == list(range(0, 7))
        from fractions import Fraction

        assert sum(Fraction(int(r[1]), int(r[2])) for r in rows[1:]) == 1

    def test_runs_support(self, capsys):
        cli.main(["dist", "--statistic", "runs", "--m", "5", "--n", "4"])
        rows = list(csv.reader(capsys.readouterr().out.strip().splitlines()))
        assert [int(r[0]) for r in rows[1:]] == list(range(2, 10))

    def test_oracle_cross_check(self, capsys):
        code = cli.main([
            "dist", "--statistic", "precedence", "--m", "5", "--n", "5",
            "--j", "2", "--oracle",
        ])
        assert code == 0
        assert "oracle cross-check passed" in capsys.readouterr().err

    def test_oracle_all_statistics(self, capsys):
        for stat in ("empty_block", "maximal_block", "runs", "interior_exterior", "dixon_c2", "linear_rank"):
            code = cli.main(["dist", "--statistic", stat, "--m", "4", "--n", "3", "--oracle"])
            assert code == 0, stat

    def test_capacity_suggests_monte_carlo(self, capsys):
        code = cli.main([
            "dist", "--statistic", "dixon_c2", "--m", "60", "--n", "60",
            "--method", "exact",
        ])
        assert code == 1
        assert "monte_carlo" in capsys.readouterr().err

    def test_out_file(self, tmp_path):
        out = tmp_path / "pmf.csv"
        code = cli.main([
            "dist", "--statistic", "maximal_block", "--m", "4", "--n", "4",
            "--out", str(out),
        ])
        assert code == 0 and out.exists()

    def test_unknown_statistic(self, capsys):
        assert cli.main(["dist", "--statistic", "entropy", "--m", "3", "--n", "3"]) == 1


class TestPowerCommand:
    def make_config(self, tmp_path, **overrides):
        cfg = {
            "m": 15, "n": 15, "p": 2, "alpha": 0.05, "replicates": 40,
            "seed": 11, "null_draws": 1500,
            "runs": [
                {"scenario": 3, "c": 2.0, "tests": [
                    {"test": "wilcoxon", "plan": "spiral"},
                    {"test": "empty_block", "plan": "stairstep"},
                ]},
            ],
        }
        cfg.update(overrides)
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        return str(path)

    def test_csv_output(self, tmp_path, capsys):
        code = cli.main(["power", "--config", self.make_config(tmp_path)])
        assert code == 0
        rows = list(csv.reader(capsys.readouterr().out.strip().splitlines()))
        assert rows[0][0] == "scenario"
        assert len(rows) == 3

    def test_same_seed_same_output(self, tmp_path):
        cfg = self.make_config(tmp_path)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert cli.main(["power", "--config", cfg, "--out", str(out1)]) == 0
        assert cli.main(["power", "--config", cfg, "--out", str(out2)]) == 0
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_zero_replicates_rejected(self, tmp_path, capsys):
        code = cli.main(["power", "--config", self.make_config(tmp_path, replicates=0)])
        assert code == 1

    def test_parse_error_reports_line(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text('{\n "m": 10,\n broken\n}')
        assert cli.main(["power", "--config", str(path)]) == 1
        assert "line 3" in capsys.readouterr().err

    def test_missing_keys(self, tmp_path, capsys):
        path = tmp_path / "short.json"
        path.write_text(json.dumps({"m": 5}))
        assert cli.main(["power", "--config", str(path)]) == 1
        assert "replicates" in capsys.readouterr().err

    def test_shipped_configs_resolve(self):
        for name in ("tables_6_8_spotcheck", "tables_6_8_full"):
            cfg = cli._load_power_config(name)
            assert cfg["m"] == 200 and cfg["runs"]

    def test_unknown_config(self, capsys):
        assert cli.main(["power", "--config", "no_such_config"]) == 1
