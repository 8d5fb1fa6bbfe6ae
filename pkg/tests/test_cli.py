import json

import pytest

from defectgas import cli


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_simulate_paths_case_iii(tmp_path, capsys):
    argv = ["simulate-paths", "--radius", "1e-3", "--samples", "10000", "--seed", "4", "--out", str(tmp_path / "a")]
    assert run(argv, capsys)[0] == 0
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "T,survival,band_low,band_high,n,censored_count"
    assert lines[1].split(",")[:2] == ["0.0", "1.0"]
    meta = json.loads((tmp_path / "a.json").read_text())
    assert meta["config"]["radius"] == 1e-3 and meta["case"] == "iii"


def test_rerun_is_byte_identical(tmp_path, capsys):
    base = ["simulate-paths", "--keep-prob", "0.7", "--displacement", "ball", "0.3", "--radius", "0.01",
            "--samples", "3000", "--seed", "7"]
    run(base + ["--out", str(tmp_path / "a"), "--workers", "1"], capsys)
    run(base + ["--out", str(tmp_path / "b"), "--workers", "3"], capsys)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_sample_limit_grid_zero(capsys):
    code, out, _ = run(["sample-limit", "--grid", "0", "--samples", "1000"], capsys)
    assert code == 0
    assert out.splitlines()[1].split(",")[:2] == ["0.0", "1.0"]


def test_verify_passes(capsys):
    code, out, _ = run(["verify", "siegel", "mixing", "--samples", "100000", "--field", "mdep", "2"], capsys)
    report = json.loads(out)
    assert code == 0 and report["passed"]


def test_verify_tail_reports_ratio(capsys):
    _, out, _ = run(["verify", "tail", "--samples", "200000", "--tmax", "100"], capsys)
    tail = json.loads(out)["checks"][0]
    assert tail["check"] == "tail" and "ratio" in tail and tail["paper_bound"] == pytest.approx(0.1013211836)


def test_verify_exit_code_follows_checks(capsys, monkeypatch):
    monkeypatch.setattr(cli, "_run_check", lambda name, args, root: {"check": name, "passed": name != "tail"})
    assert run(["verify", "siegel", "mixing"], capsys)[0] == 0
    assert run(["verify", "siegel", "tail"], capsys)[0] == 1


def test_verify_unknown_check(capsys):
    code, _, err = run(["verify", "nonsense"], capsys)
    assert code == 2 and "unknown check" in err


def test_estimate_mixing(capsys):
    code, out, _ = run(["estimate-mixing", "--field", "mdep", "2", "--keep-prob", "0.5", "--separation", "1", "10",
                        "--samples", "20000"], capsys)
    rows = json.loads(out)["estimates"]
    assert code == 0
    assert rows[0]["theta"] > 0.02
    assert rows[1]["theta"] <= 3 * rows[1]["theta_std_error"]


def test_config_file_precedence(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"samples": 500, "grid": "0,1", "seed": 3}))
    _, out, _ = run(["sample-limit", "--config", str(cfg), "--samples", "700"], capsys)
    lines = out.splitlines()
    assert len(lines) == 3 and lines[1].endswith(",700,0")


def test_config_errors_have_line_numbers(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"samples": 10,\n  "grid": }\n')
    code, _, err = run(["sample-limit", "--config", str(bad)], capsys)
    assert code == 2 and "bad.json:2:" in err
    unknown = tmp_path / "unknown.json"
    unknown.write_text('{\n  "samples": 10,\n  "colour": "red"\n}\n')
    code, _, err = run(["sample-limit", "--config", str(unknown)], capsys)
    assert code == 2 and "unknown.json:3:" in err


@pytest.mark.parametrize("argv", [
    ["sample-limit", "--offset", "rational", "4", "2", "2"],
    ["sample-limit", "--offset", "irrational", "0.3"],
    ["sample-limit", "--displacement", "spiral"],
    ["simulate-paths", "--field", "mdep"],
])
def test_bad_flags(argv, capsys):
    assert run(argv, capsys)[0] == 2


def test_offsets_parse():
    oc, xi = cli.parse_offset(["rational", "3", "1", "0"], 2)
    assert oc.s == 3 and xi.tolist() == [1 / 3, 0.0]
    oc, xi = cli.parse_offset(["irrational", "0.7", "0.5"], 2)
    assert oc.kind == "irrational" and xi.tolist() == [0.7, 0.5]
