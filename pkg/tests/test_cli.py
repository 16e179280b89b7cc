import json
import subprocess
import sys

import numpy as np
import pytest

from mlerisk.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_risk_worked_example(capsys):
    code, out, _ = run_cli(
        capsys,
        "risk", "--error", "normal", "--xpreset", "normal", "--p", "10",
        "--alpha", "-1", "--n", "120",
    )
    assert code == 0
    payload = json.loads(out)
    assert payload["q_exact"] == ["137/8", "145/12", "-185/8"]
    assert payload["ed"] == pytest.approx(6 / 120 - 217 / (12 * 120**2), rel=1e-14)
    assert payload["moments"] == {"p": 10, "M2a": 0.0, "M2b": 0.0, "M1": 120.0}


def test_risk_roundtrip_via_aggregated_moments(capsys):
    code, out, _ = run_cli(capsys, "risk", "--error", "t:3", "--xpreset", "pareto", "--p", "10")
    first = json.loads(out)
    m = first["moments"]
    code, out, _ = run_cli(
        capsys,
        "risk", "--error", "t:3", "--p", "10",
        "--aggregated", f"M2a={m['M2a']},M2b={m['M2b']},M1={m['M1']}",
    )
    second = json.loads(out)
    assert second["q"] == pytest.approx(first["q"], rel=1e-12)
    assert second["validity_n_min"] == first["validity_n_min"]


def test_exactly_one_moment_source_enforced(capsys):
    code, _, err = run_cli(
        capsys,
        "risk", "--error", "normal", "--p", "10",
        "--xpreset", "normal", "--homogeneous", "m4=3,m22=1",
    )
    assert code == 2
    assert "exactly one moment source" in json.loads(err)["error"]
    code, _, err = run_cli(capsys, "risk", "--error", "normal", "--p", "10")
    assert code == 2


def test_bad_error_model_is_config_error(capsys):
    code, _, err = run_cli(capsys, "risk", "--error", "laplace", "--xpreset", "normal", "--p", "3")
    assert code == 2
    assert json.loads(err)["kind"] == "config"


def test_numeric_failure_exit_code(capsys):
    # Pareto benchmark cannot be matched with the benchmark cap this low
    code, _, err = run_cli(
        capsys,
        "rss", "--error", "normal", "--xpreset", "pareto", "--p", "10", "--k-max", "30",
    )
    assert code == 3
    assert json.loads(err)["kind"] == "numeric"


def test_ide_star_rendering(capsys):
    code, out, _ = run_cli(capsys, "ide", "--error", "normal", "--xpreset", "normal", "--p", "10")
    payload = json.loads(out)
    assert payload["ide"] == "*"


def test_rss_output(capsys):
    code, out, _ = run_cli(capsys, "rss", "--error", "normal", "--xpreset", "normal", "--p", "10")
    payload = json.loads(out)
    assert payload["rss"]["n"] == 111 and payload["rss"]["k"] == 10


def test_coin_equiv(capsys):
    code, out, _ = run_cli(
        capsys,
        "coin-equiv", "--error", "normal", "--p", "11",
        "--aggregated", "M2a=0.000326899,M2b=0.000230836,M1=0.116967",
        "--n-actual", "4898",
    )
    payload = json.loads(out)
    assert payload["coin_equiv"] in (376, 377)


def test_eta_dump(capsys):
    code, out, _ = run_cli(capsys, "eta", "dump", "--error", "t:3")
    payload = json.loads(out)
    assert payload["0,0,2,0"]["value"] == pytest.approx(2 / 3)
    assert payload["0,0,2,0"]["exact"] == "2/3"
    assert payload["0,0,2,0"]["method"] == "closed_form"


def test_moments_subcommand(tmp_path, capsys):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((50, 2))
    lines = ["a,b"] + [f"{u},{v}" for u, v in x]
    path = tmp_path / "toy.csv"
    path.write_text("\n".join(lines) + "\n")
    code, out, _ = run_cli(capsys, "moments", str(path))
    payload = json.loads(out)
    assert payload["n"] == 50 and payload["p"] == 2
    from mlerisk.data_moments import aggregates_brute_force, load_csv, standardize

    std = standardize(load_csv(path))
    slow = aggregates_brute_force(std.scores)
    for key in ("M2a", "M2b", "M1"):
        assert payload[key] == pytest.approx(slow[key], rel=1e-10)


def test_series_csv_contract(capsys):
    code, out, _ = run_cli(
        capsys,
        "series", "--error", "normal", "--xpreset", "normal", "--p", "10",
        "--k-min", "5", "--k-max", "30",
    )
    lines = out.strip().splitlines()
    assert lines[0] == "k,ed_regression,ed_binomial"
    rows = [tuple(map(float, line.split(","))) for line in lines[1:]]
    assert rows[0][0] == 5 and rows[-1][0] == 30
    # regression column decreasing beyond the validity region (here everywhere >= k=5?)
    ks = [r[0] for r in rows]
    eds = {k: e for k, e, _ in rows}
    from mlerisk.expansion import risk_expansion
    from mlerisk.eta import build_eta_table
    from mlerisk.error_models import normal_error
    from mlerisk.moments import x_preset

    exp = risk_expansion(build_eta_table(normal_error()), x_preset("normal", 10))
    valid_ks = [k for k in ks if 12 * k >= exp.validity_n_min]
    series = [eds[k] for k in valid_ks]
    assert all(a > b for a, b in zip(series, series[1:]))
    # spot value: k=10 -> n=120
    assert eds[10] == pytest.approx(6 / 120 - 217 / (12 * 120**2), rel=1e-12)


def test_table1(capsys):
    code, out, _ = run_cli(capsys, "table", "--preset", "table1")
    payload = json.loads(out)
    got = [(r["ide"], r["rss"], r["benchmark_k"]) for r in payload["rows"]]
    assert got[0] == ("*", 111, 10)
    assert got[2][1] in (112, 113) and got[2][2] == 10
    assert got[3] == ("*", 741, 110)


def test_validate_smoke(capsys):
    code, out, _ = run_cli(
        capsys,
        "validate", "--error", "normal", "--xdist", "normal", "--p", "1",
        "--n", "60", "--alpha", "-1", "--reps", "60", "--seed", "7",
    )
    assert code == 0
    payload = json.loads(out)
    assert payload["replications_used"] == 60
    assert payload["mc_mean"] > 0
    assert payload["expansion"] > 0
    assert abs(payload["z"]) < 6


def test_entry_point_runs_as_module():
    proc = subprocess.run(
        [sys.executable, "-m", "mlerisk.cli", "risk", "--error", "normal",
         "--xpreset", "controlled", "--p", "2", "--compact"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["p"] == 2
