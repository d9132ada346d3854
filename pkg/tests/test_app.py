# tests/test_app.py
import json

import pandas as pd
import pytest

from app import SUBCOMMANDS, build_parser, main

SQUARE = """
    [domain]
    x1 = 0:1
    x2 = 0:1

    [resolution]
    nodes = 5x5

    [family]
    p1 = 2
    p2 = 2

    [data]
    f = 1
"""

THREE_HALVES = """
    [domain]
    x1 = 0:1
    x2 = 0:1

    [resolution]
    nodes = 5x5

    [family]
    p1 = 1.5
    p2 = 1.5

    [experiment]
    trials = 2
    point = 0.5, 0.5
"""


def run(config, out, *extra):
    return main([extra[0], "--config", str(config), "--out", str(out), *extra[1:]])


def report_of(out):
    with open(out / "report.json", encoding="utf-8") as f:
        return json.load(f)


def test_parser_knows_every_subcommand():
    parser = build_parser()
    for name in SUBCOMMANDS:
        assert parser.parse_args([name, "--config", "p.cfg"]).subcommand == name
    with pytest.raises(SystemExit):
        parser.parse_args(["plot", "--config", "p.cfg"])


def test_conjugate_writes_the_table(write_config, tmp_path):
    out = tmp_path / "out"
    assert run(write_config(SQUARE), out, "conjugate", "--s-grid", "1:4:2") == 0
    table = pd.read_csv(out / "conjugate.csv")
    assert list(table.columns) == ["s", "conjugate", "argmax"]
    assert table["conjugate"].tolist() == pytest.approx([0.25, 4.0])
    assert table["argmax"].tolist() == pytest.approx([0.5, 2.0])
    report = report_of(out)
    assert report["exit_code"] == 0
    assert report["component"] == 1


def test_conjugate_rejects_a_bad_component(write_config, tmp_path):
    out = tmp_path / "out"
    assert run(write_config(SQUARE), out, "conjugate", "--component", "3") == 1
    assert report_of(out)["diagnostics"]["errors"][0]["kind"] == "ConfigError"


def test_norm_of_the_unit_field(write_config, tmp_path):
    out = tmp_path / "out"
    assert run(write_config(SQUARE + "\n    [field]\n    u = 1\n"), out, "norm") == 0
    report = report_of(out)
    assert report["norms"]["phi1"]["value"] == pytest.approx(1.0)
    assert report["norms"]["phi_max"]["value"] == pytest.approx(1.0)
    assert report["anisotropic_norm"] == pytest.approx(1.0, abs=1e-9)
    assert report["sup_norm"] == 1.0


def test_sobolev_matches_the_closed_form(write_config, tmp_path):
    out = tmp_path / "out"
    assert run(write_config(THREE_HALVES), out, "sobolev", "--s-grid", "1:6:2") == 0
    table = pd.read_csv(out / "sobolev.csv")
    assert table["forward"].tolist() == pytest.approx(table["closed_form"].tolist(), rel=1e-4)
    assert table["forward"].iloc[-1] == pytest.approx(1.0, rel=1e-4)
    assert table["inverse_of_forward"].tolist() == pytest.approx(table["t"].tolist(), rel=1e-6)
    assert report_of(out)["derivative_growth"]["status"] == "holds"


def test_sobolev_fails_integrability_at_the_dimension(write_config, tmp_path):
    out = tmp_path / "out"
    assert run(write_config(SQUARE), out, "sobolev") == 1
    verify = pd.read_csv(out / "verify.csv")
    assert verify["status"].tolist() == ["fails"]


@pytest.mark.parametrize("subcommand", ["embed", "trace"])
def test_experiments_write_ratios(write_config, tmp_path, subcommand):
    out = tmp_path / "out"
    assert run(write_config(THREE_HALVES), out, subcommand, "--seed", "3") == 0
    ratios = pd.read_csv(out / "ratios.csv")
    statistics = report_of(out)["statistics"]
    assert statistics["trials"] + statistics["skipped"] == 2
    assert len(ratios) == statistics["trials"]
    assert (ratios["ratio"] > 0).all()


def test_solve_writes_field_and_history(write_config, tmp_path):
    out = tmp_path / "out"
    assert run(write_config(SQUARE), out, "solve", "--grid", "7x7") == 0
    report = report_of(out)
    assert report["solve"]["termination"] == "gradient_tol"
    assert report["solve"]["minimizer"]["resolution"] == [7, 7]
    assert report["validation"]["(b)"]["status"] == "holds"
    assert any("(a2-right)" in warning for warning in report["diagnostics"]["warnings"])
    with open(out / "field.csv", encoding="utf-8") as f:
        assert f.readline().strip() == "7,7"
    history = pd.read_csv(out / "history.csv")
    assert list(history.columns) == ["iteration", "energy", "gradient_norm"]
    assert (out / "verify.csv").exists()


def test_restarted_solve_writes_the_restart_history(write_config, tmp_path):
    # an outward boundary pull drives the minimizer below zero although f >= 0
    out = tmp_path / "out"
    body = SQUARE.replace("f = 1", "f = 0.1\n    g = -1")
    assert run(write_config(body), out, "solve") == 0
    restart = report_of(out)["solve"]["restart"]
    history = pd.read_csv(out / "history.csv")
    assert history["energy"].tolist() == pytest.approx(restart["energy_history"])
    assert history["gradient_norm"].tolist() == pytest.approx(restart["gradient_norm_history"])
    with open(out / "field.csv", encoding="utf-8") as f:
        values = [float(line) for line in f.read().splitlines()[1:]]
    assert min(values) == pytest.approx(-restart["nonnegativity_violation"])


def test_solve_stops_on_a_hard_failure(write_config, tmp_path):
    out = tmp_path / "out"
    assert run(write_config(SQUARE.replace("f = 1", "b = 0")), out, "solve") == 1
    report = report_of(out)
    assert report["exit_code"] == 1
    assert report["diagnostics"]["errors"][0]["kind"] == "ValidationFailure"
    assert not (out / "field.csv").exists()


def test_numerical_breakdown_exits_with_two(write_config, tmp_path):
    out = tmp_path / "out"
    assert run(write_config(SQUARE.replace("f = 1", "f = log(s)")), out, "solve") == 2
    assert report_of(out)["diagnostics"]["errors"][0]["exit_code"] == 2


def test_syntax_error_is_reported_with_position(write_config, tmp_path):
    out = tmp_path / "out"
    path = write_config(SQUARE.replace("p1 = 2", "p1 = 1.5 + * x1"))
    assert run(path, out, "norm") == 1
    message = report_of(out)["diagnostics"]["errors"][0]["message"]
    assert "column 12" in message


def test_verify_single_component(write_config, tmp_path, capsys):
    out = tmp_path / "out"
    body = THREE_HALVES.replace("p2 = 1.5", "p2 = 1.8")
    path = write_config(body.replace("[experiment]", "[data]\n    f = 1\n\n    [experiment]"))
    assert run(path, out, "verify", "--component", "2") == 0
    verify = pd.read_csv(out / "verify.csv")
    assert "(Young)[phi2]" in verify["condition"].tolist()
    assert "fails" not in verify["status"].tolist()
    assert "(prop3)[phi2]" in capsys.readouterr().out


def test_broken_monotonicity_in_uniq_exits_with_one(write_config, tmp_path):
    out = tmp_path / "out"
    wells = SQUARE.replace("f = 1", "f = 6 * s - 4 * s^3\n    F = 3 * s^2 - s^4")
    body = wells + "\n    [experiment]\n    starts = 2\n"
    assert run(write_config(body), out, "uniq") == 1
    report = report_of(out)
    assert report["uniqueness"]["status"] == "inconclusive"
    assert "(uneq1)" in report["uniqueness"]["unmet"]
    assert report["uniqueness"]["distance"] == pytest.approx(2.0, abs=0.1)
    assert "(uneq1)" in report["diagnostics"]["errors"][0]["message"]


def test_bad_grid_override_is_rejected(write_config, tmp_path):
    assert run(write_config(SQUARE), tmp_path / "out", "solve", "--grid", "7xseven") == 1
