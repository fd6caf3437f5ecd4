import csv
import datetime
import json

import numpy as np
import pytest

from funcbreak.cli import DataFormatError, ingest, main, read_coeffs


def write_daily_csv(path, year_values, missing=()):
    """year_values: {year: constant or callable day->value}; missing: (year, day) pairs."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "value"])
        for year, rule in year_values.items():
            start = datetime.date(year, 1, 1)
            days = (datetime.date(year, 12, 31) - start).days + 1
            for k in range(days):
                day = start + datetime.timedelta(days=k)
                if (year, k + 1) in missing:
                    writer.writerow([day.isoformat(), ""])
                else:
                    value = rule(k + 1) if callable(rule) else rule
                    writer.writerow([day.isoformat(), f"{value:.6f}"])
    return path


def seasonal_rule(amplitude, shift=0.0):
    def rule(day):
        return shift + amplitude * np.sin(2 * np.pi * day / 365.0)
    return rule


@pytest.fixture
def step_file(tmp_path):
    # eight years of seasonal data with a mean shift in the last four
    years = {}
    for year in range(2000, 2008):
        shift = 0.0 if year < 2004 else 3.0
        years[year] = seasonal_rule(5.0, shift)
    return write_daily_csv(tmp_path / "step.csv", years)


def test_ingest_constant_years_yield_constant_coefficients(tmp_path):
    path = write_daily_csv(tmp_path / "flat.csv", {2001: 5.0, 2002: 5.0})
    series, labels, dropped = ingest(path, basis_size=5)
    assert labels == ["2001", "2002"]
    assert dropped == []
    np.testing.assert_allclose(series.data[:, 0], 5.0, atol=1e-8)
    np.testing.assert_allclose(series.data[:, 1:], 0.0, atol=1e-8)


def test_ingest_handles_leap_years(tmp_path):
    path = write_daily_csv(tmp_path / "leap.csv", {2004: 1.0, 2005: 1.0})
    series, labels, _ = ingest(path, basis_size=3)
    assert labels == ["2004", "2005"]
    # leap year day 366 maps strictly inside the unit interval
    assert (366 - 0.5) / 366 < 1.0


def test_ingest_drops_years_with_excess_missing(tmp_path):
    missing = {(2002, day) for day in range(1, 60)}  # 59 of 365 days > 10%
    path = write_daily_csv(tmp_path / "gappy.csv",
                           {2001: 1.0, 2002: 1.0, 2003: 1.0}, missing=missing)
    with pytest.warns(UserWarning, match="2002"):
        series, labels, dropped = ingest(path)
    assert labels == ["2001", "2003"]
    assert dropped == [2002]


def test_ingest_reports_unparseable_lines(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("date,value\n2001-01-01,1.0\nnot-a-date,2.0\n2001-01-03,x\n")
    with pytest.raises(DataFormatError) as err:
        ingest(path)
    assert "lines 3, 4" in str(err.value)


def test_ingest_rejects_missing_header(tmp_path):
    path = tmp_path / "hdr.csv"
    path.write_text("day,temp\n2001-01-01,1.0\n")
    with pytest.raises(DataFormatError, match="header"):
        ingest(path)


def test_detect_command_emits_full_report(step_file, tmp_path, capsys):
    out = tmp_path / "report.json"
    code = main(["detect", str(step_file), "--seed", "7", "--reps", "200",
                 "--grid", "200", "--out", str(out)])
    assert code == 0
    report = json.loads(out.read_text())
    assert report["p_value"] <= 0.05  # the inserted shift is enormous
    assert report["k_hat_label"] == "2003"
    assert set(report["critical_values"]) == {"0.01", "0.05", "0.1"}
    cfg = report["config"]
    assert cfg["weight"] == "bartlett" and cfg["bandwidth"] == "n14"
    assert cfg["seed"] == 7 and cfg["reps"] == 200 and cfg["grid"] == 200
    assert cfg["alpha"] == 0.05 and cfg["basis_size"] == 21


def test_detect_command_is_byte_deterministic(step_file, capsys):
    args = ["detect", str(step_file), "--seed", "11", "--reps", "100",
            "--grid", "150"]
    assert main(args) == 0
    first = capsys.readouterr().out
    assert main(args) == 0
    second = capsys.readouterr().out
    assert first == second


def test_single_rep_pvalues_hit_the_convention(step_file, capsys):
    assert main(["detect", str(step_file), "--seed", "1", "--reps", "1",
                 "--grid", "100"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["p_value"] in (0.5, 1.0)


def test_coefficient_roundtrip_reproduces_analysis(step_file, tmp_path, capsys):
    dump = tmp_path / "coeffs.csv"
    args = ["detect", str(step_file), "--seed", "3", "--reps", "100",
            "--grid", "150", "--dump-coeffs", str(dump)]
    assert main(args) == 0
    direct = json.loads(capsys.readouterr().out)

    series, labels = read_coeffs(dump)
    assert series.n == 8 and labels[0] == "2000"
    assert main(["detect", str(dump), "--coeffs", "--seed", "3", "--reps",
                 "100", "--grid", "150"]) == 0
    roundtrip = json.loads(capsys.readouterr().out)
    assert roundtrip["stat"] == direct["stat"]
    assert roundtrip["p_value"] == direct["p_value"]


def test_date_command_reports_interval_with_labels(step_file, capsys):
    assert main(["date", str(step_file), "--seed", "5", "--reps", "150",
                 "--grid", "150", "--xi-reps", "400"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["k_hat_label"] == "2003"
    ci = report["ci"]
    assert ci["lo"] <= report["k_hat"] <= ci["hi"]
    assert ci["lo_label"] <= ci["hi_label"]
    assert report["sigma2_hat"] <= report["lambda1_hat"] + 1e-10
    assert report["config"]["xi_reps"] == 400


def test_date_command_fpca_sidecar(step_file, capsys):
    assert main(["date", str(step_file), "--seed", "5", "--reps", "100",
                 "--grid", "150", "--xi-reps", "200", "--fpca", "--tve",
                 "0.9"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["fpca"]["tve"] == 0.9
    assert 1 <= report["fpca"]["d"] <= 21
    assert report["fpca"]["k_tilde_label"] == report["fpca"]["k_tilde_label"]


def test_date_command_on_noiseless_break_collapses_interval(tmp_path, capsys):
    years = {y: (0.0 if y < 2004 else 2.0) for y in range(2000, 2008)}
    path = write_daily_csv(tmp_path / "exact.csv", years)
    assert main(["date", str(path), "--seed", "2", "--reps", "50",
                 "--grid", "100", "--xi-reps", "100"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["k_hat_label"] == "2003"
    assert report["ci"]["lo"] == report["ci"]["hi"] == report["k_hat"]
    assert report["ci"]["lo_label"] == "2003"


def test_missing_file_exits_with_data_code(capsys):
    assert main(["detect", "/nonexistent/file.csv"]) == 2


def test_bad_rows_exit_with_data_code(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("date,value\ngarbage,1\n")
    assert main(["detect", str(path)]) == 2


def test_degenerate_numeric_input_exits_with_numeric_code(tmp_path, capsys):
    # two identical constant years: zero break function, sigma^2 undefined
    path = write_daily_csv(tmp_path / "flat.csv", {2001: 1.0, 2002: 1.0})
    assert main(["date", str(path), "--seed", "1", "--reps", "50",
                 "--grid", "100", "--xi-reps", "100"]) == 3


def test_simulate_grid_validation_exits_before_work(capsys):
    code = main(["simulate", "dating", "--m", "40", "--detectors", "FF",
                 "Aligned", "--sim-reps", "5", "--n", "20"])
    assert code == 2
    err = capsys.readouterr().err
    assert "m=40" in err and "Aligned" in err


def test_simulate_size_emits_schema_and_is_seed_stable(tmp_path):
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["simulate", "size", "--setting", "2", "--n", "20", "--sim-reps",
            "6", "--reps", "60", "--grid", "100", "--detectors", "FF",
            "fPCA@0.90", "--seed", "21", "--workers", "1"]
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    rows = list(csv.DictReader(out1.open()))
    assert {r["detector"] for r in rows} == {"FF", "fPCA@0.90"}
    assert all(r["metric"] == "rejection_rate" for r in rows)


def test_simulate_table_has_full_grid_shape(tmp_path):
    out = tmp_path / "table.csv"
    args = ["simulate", "size", "--setting", "1", "2", "3", "--dependence",
            "iid", "far1", "--n", "20", "30", "--sim-reps", "2", "--reps",
            "40", "--grid", "100", "--seed", "1", "--workers", "2",
            "--out", str(out)]
    assert main(args) == 0
    rows = list(csv.DictReader(out.open()))
    rate_rows = [r for r in rows if r["metric"] == "rejection_rate"]
    assert len(rate_rows) == 3 * 2 * 2 * 5  # settings x dgps x n x detectors
