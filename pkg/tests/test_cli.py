import io
import math
import time
from pathlib import Path

import pytest
from scipy import stats

from sparse_oracle.cli import CSV_HEADER, ConfigError, main, read_config

DATA = Path(__file__).parent / "data"


def run(argv):
    buf = io.StringIO()
    code = main(argv, out=buf)
    return code, buf.getvalue()


def values(text, label):
    line = next(x for x in text.splitlines() if x.startswith(label + ":"))
    return dict(kv.split("=") for kv in line.split()[1:])


def test_bonferroni_threshold():
    code, out = run(["threshold", "--rule", "bonferroni", "--alpha", "0.05", "--m", "1000"])
    assert code == 0
    z = float(values(out, "exact")["z"])
    assert z == pytest.approx(stats.norm.ppf(1 - 0.000025), rel=1e-9)


def test_oracle_threshold_symmetric():
    code, out = run(["threshold", "--rule", "oracle", "--p", "0.05", "--n", "256"])
    assert code == 0
    ex = values(out, "exact")
    assert float(ex["a"]) == pytest.approx(-float(ex["b"]), rel=1e-9)
    u = 256 * 0.9
    ref = (u + 1) / u * (math.log(u + 1) + 2 * math.log(19))
    assert float(ex["z_b"]) ** 2 == pytest.approx(ref, rel=1e-8)
    assert "asymptotic:" in out


def test_bfdr_and_gw_thresholds():
    code, out = run(["threshold", "--rule", "bfdr", "--p", "0.01", "--n", "1000", "--alpha", "0.05"])
    assert code == 0 and "asymptotic:" in out
    code, out = run(["threshold", "--rule", "gw", "--p", "0.01", "--n", "1000", "--alpha", "0.05"])
    assert code == 0 and float(values(out, "exact")["z"]) > 0


def test_bfdr_no_solution(capsys):
    code, _ = run(["threshold", "--rule", "bfdr", "--p", "0.1", "--alpha", "0.95"])
    assert code == 4
    assert "no-solution" in capsys.readouterr().err


def test_threshold_bad_model(capsys):
    code, _ = run(["threshold", "--rule", "oracle", "--p", "1.5"])
    assert code == 3
    assert "p" in capsys.readouterr().err


def test_bonferroni_requires_m(capsys):
    assert run(["threshold", "--rule", "bonferroni"])[0] == 3
    assert "--m" in capsys.readouterr().err


def test_usage_errors():
    with pytest.raises(SystemExit) as info:
        main(["threshold", "--rule", "lasso"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        main(["verify", "bogus"])
    assert info.value.code == 2


def test_read_config():
    cfg = read_config("# comment\nm=64\np=0.1\nmethods=oracle, BH\nbinomial_over_all_columns=yes\n")
    assert cfg == {"m": 64, "p": 0.1, "methods": ("oracle", "BH"), "binomial_over_all_columns": True}
    with pytest.raises(ConfigError, match="duplicate"):
        read_config("m=64\nm=128\n")
    with pytest.raises(ConfigError, match="bad value"):
        read_config("replicates=ten\n")


def test_unknown_config_key(tmp_path, capsys):
    path = tmp_path / "run.cfg"
    path.write_text("m=64\nnoise_level=2\n")
    assert run(["simulate", "--config", str(path)])[0] == 3
    assert "noise_level" in capsys.readouterr().err


def test_power_of_two_required(capsys):
    assert run(["simulate", "--m", "100", "--replicates", "2"])[0] == 3
    assert "power of two" in capsys.readouterr().err


def test_flags_override_config(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("m=32\nreplicates=50\nseed=3\nmethods=oracle\n")
    code, out = run(["simulate", "--config", str(path), "--replicates", "4"])
    assert code == 0
    row = out.splitlines()[-1].split(",")
    assert row[2] == "32" and row[8] == "4" and row[9] == "3"


def test_golden_csv(tmp_path):
    out = tmp_path / "out.csv"
    code, _ = run(["simulate", "--m", "16", "--p", "0.2", "--replicates", "20", "--seed", "7",
                   "--out", str(out)])
    assert code == 0
    assert out.read_bytes() == (DATA / "golden_m16_seed7.csv").read_bytes()


def test_csv_layout():
    code, out = run(["simulate", "--m", "16", "--replicates", "3", "--seed", "1", "--p", "0.0"])
    lines = out.splitlines()
    assert all(x.startswith("#") for x in lines[:3])
    assert lines[3] == CSV_HEADER
    rows = [x.split(",") for x in lines[4:]]
    assert len(rows) == 7
    assert all(len(r) == len(CSV_HEADER.split(",")) for r in rows)
    # no signals anywhere: power is undefined, beta_exponent is empty outside part 2
    assert all(r[12] == "NA" and r[5] == "" for r in rows)


def test_byte_identical_reruns():
    argv = ["simulate", "--m", "32", "--replicates", "10", "--seed", "11", "--sigma-mode", "unknown"]
    assert run(argv)[1] == run(argv)[1]
    other = run(["simulate", "--m", "32", "--replicates", "10", "--seed", "12",
                 "--sigma-mode", "unknown"])[1]
    assert other != run(argv)[1]


def test_part1_row_count():
    code, out = run(["simulate", "--sweep", "part1", "--replicates", "1", "--methods", "oracle,BH"])
    assert code == 0
    rows = [x for x in out.splitlines() if x and not x.startswith("#")][1:]
    assert len(rows) == 7 * 2 * 2 * 2


def test_verify_exit_codes():
    code, out = run(["verify", "nesting", "--instances", "50"])
    assert code == 0 and "PASS" in out
    code, out = run(["verify", "oracle-equivalence", "--instances", "50"])
    assert code == 0


def test_verify_instances_rejected_for_asymptotics():
    assert run(["verify", "asymptotics", "--instances", "3"])[0] == 3


def test_quick_run_timing():
    start = time.perf_counter()
    code, _ = run(["simulate", "--m", "256", "--replicates", "100", "--seed", "1"])
    assert code == 0
    assert time.perf_counter() - start < 60
