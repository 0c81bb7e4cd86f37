import csv
import json
import xml.etree.ElementTree as ET

import pytest

import hlisa.evaluation as ev
from hlisa.cli import BENCH_COLUMNS, SIMULATE_COLUMNS, main, parse_snr
from hlisa.numerics import NumericalError


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_parse_snr():
    assert parse_snr("-10:5:40") == tuple(float(x) for x in range(-10, 41, 5))
    assert parse_snr("0,10") == (0.0, 10.0)
    assert parse_snr(3) == (3.0,)
    assert parse_snr([0, 2.5]) == (0.0, 2.5)
    for bad in ("0:1", "5:1:0", "a,b", True):
        with pytest.raises(ValueError):
            parse_snr(bad)


def test_simulate_preset(tmp_path):
    args = ["simulate", "--preset", "fig3a", "--seed", "42", "--runs", "2", "--snr=0,10",
            "--out", str(tmp_path), "--plot"]
    assert main(args) == 0
    rows = read_csv(tmp_path / "fig3a.csv")
    assert tuple(rows[0]) == SIMULATE_COLUMNS
    algs = {"2SMUHPA", "2SMUHPA-WF", "LISA", "LC-LISA", "H-LISA", "LC-H-LISA", "capacity"}
    assert {r[1] for r in rows[1:]} == algs and len(rows) == 1 + 2 * len(algs)
    assert all(float(r[0]) in (0.0, 10.0) and r[4] == "2" and r[5] == "0" for r in rows[1:])
    manifest = json.loads((tmp_path / "fig3a.manifest.json").read_text())
    assert manifest["seed"] == 42 and manifest["config"]["runs"] == 2
    assert manifest["config"]["snr_db"] == [0.0, 10.0] and manifest["version"]
    assert str(tmp_path / "fig3a.csv") in manifest["outputs"]
    ET.parse(tmp_path / "fig3a.svg")


def test_simulate_is_byte_identical(tmp_path):
    args = ["simulate", "--preset", "fig3b", "--runs", "2", "--snr", "0", "--algorithms", "LISA,capacity"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "fig3b.csv").read_bytes() == (tmp_path / "b" / "fig3b.csv").read_bytes()


def test_full_precision_floats(tmp_path):
    main(["simulate", "--preset", "fig3a", "--runs", "3", "--snr", "0", "--algorithms", "LISA",
          "--out", str(tmp_path)])
    value = read_csv(tmp_path / "fig3a.csv")[1][2]
    cfg = ev.ScenarioConfig(L=1, runs=3, snr_db=(0.0,), algorithms=("LISA",))
    assert float(value) == ev.run_monte_carlo(cfg)[0].means["LISA"]


def test_simulate_fig6_includes_bd(tmp_path):
    assert main(["simulate", "--preset", "fig6", "--runs", "1", "--snr", "0",
                 "--algorithms", "LISA,BD", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "fig6.csv")
    assert [r[1] for r in rows[1:]] == ["LISA", "BD"]


def test_histogram(tmp_path):
    args = ["histogram", "--preset", "fig4", "--runs", "3", "--plot"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "fig4_hist.csv").read_bytes()
    assert a == (tmp_path / "b" / "fig4_hist.csv").read_bytes()
    rows = read_csv(tmp_path / "a" / "fig4_hist.csv")
    assert rows[0] == ["bin_lo", "bin_hi", "LISA", "H-LISA"]
    assert float(rows[1][0]) == 0 and float(rows[1][1]) == 0.5
    assert sum(int(r[2]) for r in rows[1:]) > 0
    manifest = json.loads((tmp_path / "a" / "fig4_hist.manifest.json").read_text())
    assert manifest["snr_db"] == 0.0
    ET.parse(tmp_path / "a" / "fig4_hist.svg")


@pytest.mark.parametrize("extra", [["--algorithms", ""], ["--algorithms", "capacity"],
                                   ["--snr", "0,10"], ["--bin-width", "0"]])
def test_histogram_config_errors(tmp_path, extra, capsys):
    assert main(["histogram", "--preset", "fig4", "--runs", "1", "--out", str(tmp_path)] + extra) == 2
    assert "config error" in capsys.readouterr().err


def test_bench(tmp_path):
    assert main(["bench", "--preset", "fig7", "--algorithms", "LC-H-LISA", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "fig7_bench.csv")
    assert tuple(rows[0]) == BENCH_COLUMNS
    assert len(rows) == 2 and rows[1][:5] == ["LC-H-LISA", "64", "16", "8", "3"]
    assert float(rows[1][5]) > 0
    assert json.loads((tmp_path / "fig7_bench.manifest.json").read_text())["bench_runs"] == 20
    assert main(["bench", "--preset", "fig7", "--runs", "5", "--out", str(tmp_path)]) == 2


def test_bench_low_complexity_is_faster(tmp_path):
    assert main(["bench", "--preset", "fig7", "--algorithms", "H-LISA,LC-H-LISA", "--out", str(tmp_path)]) == 0
    rows = {r[0]: float(r[5]) for r in read_csv(tmp_path / "fig7_bench.csv")[1:]}
    assert rows["LC-H-LISA"] < rows["H-LISA"]


def write(tmp_path, text):
    path = tmp_path / "exp.yaml"
    path.write_text(text)
    return str(path)


def test_config_file_and_overrides(tmp_path):
    cfg = write(tmp_path, "preset: fig3b\nruns: 2\nsnr_db: '0:10:20'\nalgorithms: [LISA, H-LISA]\n"
                          "ms_array: [2, 1]\nseed: 9\n")
    assert main(["simulate", "--config", cfg, "--seed", "11", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "exp.csv")
    assert [(r[0], r[1]) for r in rows[1:]] == [(s, a) for s in ("0.0", "10.0", "20.0") for a in ("LISA", "H-LISA")]
    manifest = json.loads((tmp_path / "exp.manifest.json").read_text())
    assert manifest["seed"] == 11 and manifest["config"]["L"] == 3 and manifest["config"]["ms_array"] == [2, 1]


@pytest.mark.parametrize("text,needle", [
    ("K: 8\nL: 3\nbogus: 1\n", ":3: bogus: unknown key"),
    ("K: 8\nn_rf: 99\n", ":2: n_rf: n_rf must lie"),
    ("runs: 2\nK: eight\n", ":2: K: expected an integer"),
    ("K: 8\nL: [1\n", ":3: invalid YAML"),
    ("- 1\n- 2\n", ":1: top level"),
    ("preset: fig9\n", ":1: preset: unknown preset"),
    ("K: 4\nalgorithms: [2SMUHPA]\n", ":2: algorithms: 2SMUHPA requires"),
])
def test_config_errors_reference_lines(tmp_path, capsys, text, needle):
    assert main(["simulate", "--config", write(tmp_path, text), "--out", str(tmp_path)]) == 2
    assert needle in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    assert main(["simulate", "--config", str(tmp_path / "none.yaml")]) == 2
    assert "cannot read config" in capsys.readouterr().err


def test_empty_config_file_uses_defaults(tmp_path):
    cfg = write(tmp_path, "")
    assert main(["simulate", "--config", cfg, "--runs", "1", "--snr", "0", "--out", str(tmp_path)]) == 0


def test_total_numerical_failure_exits_3(tmp_path, monkeypatch, capsys):
    def broken(*args, **kw):
        raise NumericalError("boom")

    monkeypatch.setattr(ev, "run_lisa", broken)
    assert main(["simulate", "--preset", "fig3a", "--runs", "2", "--snr", "0", "--algorithms", "LISA,H-LISA",
                 "--out", str(tmp_path)]) == 3
    assert "no successful run" in capsys.readouterr().err
    rows = read_csv(tmp_path / "fig3a.csv")
    assert rows[1][1] == "LISA" and rows[1][4:] == ["0", "2"]
