import csv
import json

import pytest

from lrswap.cli import main


def run(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_verify_operators_default_passes(capsys):
    code, out, _ = run(["verify-operators"], capsys)
    assert code == 0
    report = json.loads(out)
    assert report["passed"] and report["config"]["mu"] == ["1/3", "2/5"]


def test_verify_operators_bad_mu_length(capsys):
    code, _, err = run(["verify-operators", "--N", "3", "--mu", "1/2"], capsys)
    assert code == 2 and "expected 3" in err


def test_verify_operators_tampered(capsys):
    code, out, _ = run(["verify-operators", "--tamper"], capsys)
    assert code == 1 and not json.loads(out)["passed"]


def test_unknown_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["verify-operators", "--bogus"])
    assert exc.value.code == 2


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"N": 3, "mu": ["1/3", "1/2", "4/5"], "points": 4, "seed": 9}))
    code, out, _ = run(["verify-ybe", "--config", str(cfg), "--points", "6"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["sample_size"] == 6 and rep["seed"] == 9


def test_config_file_unknown_field(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"colour": "red"}))
    code, _, err = run(["verify-ybe", "--config", str(cfg)], capsys)
    assert code == 2 and "unknown" in err


def test_verify_ybe_forced_pole_logged(capsys):
    code, out, _ = run(["verify-ybe", "--N", "3", "--mu", "0,1,1/2", "--points", "3", "--force-pole"], capsys)
    rep = json.loads(out)
    assert code == 0 and "pole" in rep["rejections"][0]["reason"]


def test_verify_ybe_single_species(capsys):
    code, _, _ = run(["verify-ybe", "--N", "1", "--mu", "1/2", "--points", "3"], capsys)
    assert code == 0


def test_scan_invertibility_binary(tmp_path, capsys):
    out = tmp_path / "scan.csv"
    code, _, _ = run(["scan-invertibility", "--N", "2", "--mu", "0,1", "--n", "4", "--out", str(out)], capsys)
    rows = list(csv.DictReader(open(out)))
    assert code == 0 and rows and all(r["invertible"] == "true" for r in rows)


def test_scan_invertibility_limits_exact_size(capsys):
    code, _, _ = run(["scan-invertibility", "--N", "5", "--mu", "1/2,1/2,1/2,1/2,1/2", "--n", "5"], capsys)
    assert code == 2


def test_rates_rows(capsys):
    code, out, _ = run(["rates", "--N", "1", "--mu", "1/2", "--trials", "20000", "--n-values", "2,3"], capsys)
    rows = list(csv.DictReader(out.splitlines()))
    assert code == 0
    assert [(r["formula_rate"], r["oracle_rate"]) for r in rows] == [("1/2", "1/2"), ("1/3", "1/3")]


def test_rates_drop_push_zero_width(capsys):
    code, out, _ = run(["rates", "--N", "1", "--mu", "1", "--trials", "10000", "--n-values", "4"], capsys)
    row = list(csv.DictReader(out.splitlines()))[0]
    assert code == 0 and row["ci_low"] == row["ci_high"] == "1.0"


def test_simulate_writes_trajectory(tmp_path, capsys):
    out = tmp_path / "t.csv"
    code, summary, _ = run(["simulate", "--n", "3", "--t-max", "3", "--seed", "5", "--out", str(out)], capsys)
    assert code == 0
    assert json.loads(summary)["events"] == len(open(out).read().splitlines()) - 2


def test_master_compare_pair(capsys):
    code, out, _ = run(
        ["master-compare", "--n", "2", "--N", "2", "--mu", "0.3,0.7", "--p", "0.7", "--trials", "200000", "--tolerance", "0.01"],
        capsys,
    )
    rep = json.loads(out)
    assert code == 0
    assert rep["rules_vs_elimination"]["equal"] and rep["pair_boundary_identity"]["equal"]


def test_master_compare_three_both_orders(capsys):
    code, out, _ = run(["master-compare", "--n", "3", "--mu", "1/2,1/3", "--trials", "100000", "--tolerance", "0.02"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["elimination_orders"]["equal"]


def test_master_compare_fails_on_tight_tolerance(capsys):
    code, _, _ = run(["master-compare", "--n", "2", "--trials", "1000", "--tolerance", "1e-6"], capsys)
    assert code == 1


@pytest.mark.parametrize(
    "args",
    [
        ["verify-ybe", "--N", "2", "--points", "5", "--seed", "3"],
        ["scan-invertibility", "--N", "3", "--mu", "1/2,1/3,1/5", "--n", "3"],
        ["rates", "--N", "1", "--mu", "1/2", "--trials", "10000", "--n-values", "3"],
        ["simulate", "--n", "2", "--seed", "2"],
    ],
)
def test_outputs_are_byte_identical_on_rerun(args, tmp_path, capsys):
    outs = []
    path = tmp_path / "o"
    for _ in range(2):
        main(args + ["--out", str(path)])
        outs.append((open(path, "rb").read(), capsys.readouterr().out))
        path.unlink()
    assert outs[0] == outs[1]
