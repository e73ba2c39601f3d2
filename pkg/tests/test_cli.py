"""Command-line surface: config parsing, dataset files, command contracts."""

from pathlib import Path

import numpy as np
import pytest

from mchjm import cli
from mchjm import calibration as cal

SEP = "0.35,0.15,0.62,0.10,0.88,0.07,0.45,-0.30"


def run(*argv) -> int:
    return cli.main(list(argv))


def make_dataset(tmp_path: Path, days=8, seed=3, noise="0.0") -> Path:
    target = tmp_path / "data.csv"
    code = run("synth", "--days", str(days), "--seed", str(seed),
               "--set", f"noise_sd={noise}", "--set", f"theta_true={SEP}",
               "--dataset", str(target), "--out", str(tmp_path))
    assert code == 0
    return target


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def test_config_file_parsing(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("days = 5\n# comment line\nnoise_sd = 0.001  # inline\n\n")
    parsed = cli._parse_config_file(cfg)
    assert parsed == {"days": "5", "noise_sd": "0.001"}
    cfg.write_text("days 5\n")
    with pytest.raises(cli.ConfigError):
        cli._parse_config_file(cfg)


def test_flags_override_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"days = 4\ntheta_true = {SEP}\n")
    out = tmp_path / "o"
    code = run("synth", "--config", str(cfg), "--days", "6",
               "--dataset", str(tmp_path / "d.csv"), "--out", str(out))
    assert code == 0
    snaps = cli.read_dataset(tmp_path / "d.csv")
    assert len(snaps) == 6


def test_tolerance_overrides_must_be_positive():
    config = cli.RunConfig(command="check", options={"tolerance": "-1.0"})
    with pytest.raises(cli.ConfigError):
        config.get_float("tolerance", 1e-4)


def test_exit_code_constants():
    assert cli.ConfigError.exit_code == 2
    assert cli.DataError.exit_code == 3
    assert cli.InsufficientDataError.exit_code == 4
    assert cli.NumericalFailureError.exit_code == 5


# ---------------------------------------------------------------------------
# dataset serialization
# ---------------------------------------------------------------------------


def test_dataset_round_trip_is_byte_identical(tmp_path):
    src = make_dataset(tmp_path, days=5, noise="0.0005")
    snaps = cli.read_dataset(src)
    again = tmp_path / "again.csv"
    cli.write_dataset(again, snaps)
    assert again.read_bytes() == src.read_bytes()


def test_read_dataset_line_numbered_errors(tmp_path):
    src = make_dataset(tmp_path, days=3)
    lines = src.read_text().splitlines()

    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(lines[:4]) + "\n")
    with pytest.raises(cli.DataError, match="line 5: missing spreads"):
        cli.read_dataset(bad)

    corrupt = lines.copy()
    corrupt[2] = corrupt[2].replace(",0,", ",9,", 1)
    bad.write_text("\n".join(corrupt) + "\n")
    with pytest.raises(cli.DataError, match="line 3: curve_id"):
        cli.read_dataset(bad)

    corrupt = lines.copy()
    corrupt[1] = corrupt[1].rsplit(",", 1)[0] + ",not_a_number"
    bad.write_text("\n".join(corrupt) + "\n")
    with pytest.raises(cli.DataError, match="line 2: bond_price"):
        cli.read_dataset(bad)


def test_read_dataset_requires_contiguous_dates(tmp_path):
    src = make_dataset(tmp_path, days=3)
    text = src.read_text().replace("\n2,", "\n5,")
    bad = tmp_path / "gap.csv"
    bad.write_text(text)
    with pytest.raises(cli.DataError, match="contiguous"):
        cli.read_dataset(bad)


def test_read_dataset_checks_maturity_completeness(tmp_path):
    src = make_dataset(tmp_path, days=2)
    lines = src.read_text().splitlines()
    del lines[1]  # drop one bond row -> curve 0 of date 0 loses a maturity
    bad = tmp_path / "short.csv"
    bad.write_text("\n".join(lines) + "\n")
    with pytest.raises(cli.DataError, match="maturity set"):
        cli.read_dataset(bad)


# ---------------------------------------------------------------------------
# commands end to end
# ---------------------------------------------------------------------------


def test_calibrate_writes_all_tables(tmp_path, capsys):
    data = make_dataset(tmp_path, days=8)
    out = tmp_path / "fit"
    code = run("calibrate", "--dataset", str(data), "--out", str(out),
               "--set", f"theta0={SEP}")
    assert code == 0
    for name in ("theta_table.csv", "per_day_states.csv", "error_table.csv",
                 "yields_fit.csv", "spreads_fit.csv"):
        assert (out / name).exists()
    theta_lines = (out / "theta_table.csv").read_text().splitlines()
    assert theta_lines[0] == "parameter,initial,calibrated"
    assert theta_lines[1].startswith("a0,0.35,")
    errors = dict(
        line.split(",") for line in
        (out / "error_table.csv").read_text().splitlines()[1:]
    )
    assert float(errors["err_yield_0"]) < 1e-6
    assert "calibrated 8 days" in capsys.readouterr().out


def test_calibrate_is_byte_reproducible(tmp_path):
    data = make_dataset(tmp_path, days=6, noise="0.0002")
    outs = []
    for tag in ("r1", "r2"):
        out = tmp_path / tag
        assert run("calibrate", "--dataset", str(data), "--out", str(out),
                   "--set", f"theta0={SEP}") == 0
        outs.append(out)
    for name in ("theta_table.csv", "per_day_states.csv", "error_table.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_calibrate_requires_dataset_and_enough_days(tmp_path):
    assert run("calibrate", "--out", str(tmp_path)) == 2
    data = make_dataset(tmp_path, days=1)
    assert run("calibrate", "--dataset", str(data),
               "--out", str(tmp_path)) == 4


def test_calibrate_rejects_invalid_theta0(tmp_path):
    data = make_dataset(tmp_path, days=4)
    code = run("calibrate", "--dataset", str(data), "--out", str(tmp_path),
               "--set", "theta0=2.0,0.15,0.62,0.10,0.88,0.07,0.45,-0.30")
    assert code == 2


def test_check_families_and_unknown(tmp_path, capsys):
    out = tmp_path / "chk"
    assert run("check", "--family", "ns-strategy2", "--out", str(out)) == 0
    report = (out / "check_report.csv").read_text().splitlines()
    assert report[0] == "kind,name,value,verdict"
    verdicts = {row.split(",")[1]: row.split(",")[3] for row in report[1:]}
    assert verdicts["strategy2"] == "consistent"
    assert verdicts["strategy2_control"] == "inconsistent"
    assert run("check", "--family", "no-such-family", "--out", str(out)) == 2
    capsys.readouterr()


def test_check_span_report(tmp_path, capsys):
    out = tmp_path / "span"
    assert run("check", "--family", "hw3-constant-vol", "--out", str(out),
               "--set", "sigma=0.00285941,0.09546952,0.09083773",
               "--set", "a=0.53041117,0.66253001,0.65812121",
               "--set", "beta=0.41734616,0.82477578") == 0
    rows = (out / "check_report.csv").read_text().splitlines()[1:]
    span = [r for r in rows if r.startswith("span_dimension")]
    assert len(span) == 1 and float(span[0].split(",")[2]) == 5.0
    assert "span dimension" in capsys.readouterr().out


def test_stability_single_roll_zero_std(tmp_path):
    data = make_dataset(tmp_path, days=cal.TRADING_DAYS_PER_MONTH + 1)
    out = tmp_path / "st"
    code = run("stability", "--dataset", str(data), "--out", str(out),
               "--rolls", "1", "--window-months", "1",
               "--set", f"theta0={SEP}")
    assert code == 0
    rows = (out / "stability_table.csv").read_text().splitlines()[1:]
    assert len(rows) == 8
    assert all(row.rsplit(",", 1)[1] == "0.0" for row in rows)


def test_stability_insufficient_data(tmp_path):
    data = make_dataset(tmp_path, days=6)
    assert run("stability", "--dataset", str(data), "--out", str(tmp_path),
               "--rolls", "50") == 4


def test_sweep_row_per_length(tmp_path):
    data = make_dataset(tmp_path, days=cal.TRADING_DAYS_PER_MONTH + 2)
    out = tmp_path / "sw"
    code = run("sweep", "--dataset", str(data), "--out", str(out),
               "--lengths", "1,2,3,4,5,6", "--set", f"theta0={SEP}")
    assert code == 0
    rows = (out / "sweep_table.csv").read_text().splitlines()[1:]
    assert len(rows) == 6
    skipped = [r.split(",")[4] for r in rows]
    assert skipped == ["False"] + ["True"] * 5
    assert run("sweep", "--dataset", str(data), "--out", str(out),
               "--end-date", "99") == 4


def test_simulate_zero_volatility_z_scores(tmp_path):
    out = tmp_path / "sim"
    code = run("simulate", "--paths", "120", "--dt", "0.01",
               "--out", str(out), "--seed", "5",
               "--set", "sigma=0,0,0", "--set", "beta=0,0")
    assert code == 0
    rows = (out / "martingale_report.csv").read_text().splitlines()[1:]
    assert len(rows) == 3
    assert all(row.rsplit(",", 1)[1] == "0.0" for row in rows)
    assert (out / "rates_paths.csv").exists()
    assert (out / "curve_final.csv").exists()


def test_simulate_is_byte_reproducible(tmp_path):
    outs = []
    for tag in ("s1", "s2"):
        out = tmp_path / tag
        assert run("simulate", "--paths", "150", "--dt", "0.01",
                   "--out", str(out), "--seed", "11") == 0
        outs.append(out)
    for name in ("rates_paths.csv", "martingale_report.csv", "curve_final.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
