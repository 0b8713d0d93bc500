import json

import numpy as np
import pytest

from betasel import cli
from betasel.errors import ParseError, ValidationError

FOOD_ARGS = ["--derive", "ixp=income*persons"]


def run(tmp_path, *args):
    out = tmp_path / "out.txt"
    code = cli.main([*args, "--out", str(out)])
    return code, (out.read_text() if out.exists() else None)


def test_ingest_bundled():
    data = cli.ingest_csv(cli.bundled_path(), "food/income")
    assert data.n == 38
    assert data.names == ("income", "persons")


def test_bad_response_row(tmp_path):
    rows = ["y,x"] + [f"0.{i + 1},{i}" for i in range(10)]
    rows[7] = "1.0,6"
    p = tmp_path / "bad.csv"
    p.write_text("\n".join(rows) + "\n")
    with pytest.raises(ValidationError, match="row 7"):
        cli.ingest_csv(p, "y")


def test_header_only(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("y,x\n")
    with pytest.raises(ValidationError, match="no observations"):
        cli.ingest_csv(p, "y")


def test_ragged_row_line_number(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("y,x\n0.5,1\n0.4\n")
    with pytest.raises(ParseError, match="line 3"):
        cli.ingest_csv(p, "y")


def test_derive_rules():
    data = cli.ingest_csv(cli.bundled_path(), "food/income", ["ixp=income*persons", "p2=persons^2"])
    inc, per = data.columns[:, 0], data.columns[:, 1]
    assert np.allclose(data.columns[:, data.index("ixp")], inc * per)
    assert np.allclose(data.columns[:, data.index("p2")], per ** 2)
    with pytest.raises(ValidationError):
        cli.ingest_csv(cli.bundled_path(), "food/income", ["bogus"])


def test_json_floats_round_trip():
    x = 0.1 + 0.2
    text = cli.to_json({"a": x, "b": [1.0, 2], "c": None, "d": float("nan")})
    back = json.loads(text)
    assert back["a"] == x and "0.30000000000000004" in text
    assert back["d"] is None and back["b"] == [1.0, 2]


def test_fit_report(tmp_path):
    code, text = run(tmp_path, "fit", "--mean", "persons,ixp", "--disp", "persons", *FOOD_ARGS)
    assert code == 0
    rep = json.loads(text)
    est = [c["estimate"] for c in rep["coefficients"]]
    assert est[:3] == pytest.approx([-1.3037, 0.2889, -0.00315], abs=1e-3)
    assert rep["converged"] is True


def test_fit_diagnostics_csv(tmp_path):
    code, text = run(tmp_path, "fit", "--mean", "persons,ixp", "--disp", "persons", *FOOD_ARGS,
                     "--diagnostics", "--e", "20", "--format", "csv")
    assert code == 0
    lines = text.splitlines()
    assert lines[0] == "rank,normal_quantile,observed,lower,median,upper"
    assert len(lines) == 39


def test_envelope_command(tmp_path):
    code, text = run(tmp_path, "envelope", "--mean", "persons", "--disp", "persons", "--e", "19")
    assert code == 0 and text.startswith("rank,")


def test_simulate_single_rep(tmp_path):
    code, text = run(tmp_path, "simulate", "--reps", "1", "--criteria", "aic", "--n", "30",
                     "--mode", "joint", "--w", "5")
    assert code == 0
    assert sum(json.loads(text)["per_criterion"]["AIC"].values()) == 1


def test_select_threads_byte_identical(tmp_path, monkeypatch):
    args = ["select", "--scheme", "joint", "--mean-pool", "persons,income", "--disp-pool",
            "persons", "--criterion", "bqcv,aic", "--w", "20", "--seed", "4"]
    c1, t1 = run(tmp_path, *args, "--threads", "1")
    monkeypatch.setenv("BETASEL_THREADS", "4")
    c2, t2 = run(tmp_path, *args)
    assert c1 == c2 == 0 and t1 == t2
    assert len(json.loads(t1)["results"]) == 2


def test_error_categories_and_codes(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("y,x\n0.5,1\n0.5\n")
    assert cli.main(["fit", "--data", str(bad), "--y", "y"]) == cli.EXIT_CODES["parse"]
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["category"] == "parse"
    assert cli.main(["fit", "--data", str(tmp_path / "missing.csv"), "--y", "y"]) == cli.EXIT_CODES["io"]
    assert cli.main(["fit", "--mean", "nosuch"]) == cli.EXIT_CODES["validation"]
    codes = set(cli.EXIT_CODES.values())
    assert len(codes) == 5 and 0 not in codes


def test_non_convergence_exit_code(tmp_path, monkeypatch):
    from betasel.model import fit as real_fit

    def capped(data, spec, **kw):
        return real_fit(data, spec, maxit=1)

    monkeypatch.setattr(cli, "fit", capped)
    code, _ = run(tmp_path, "fit", "--mean", "persons,ixp", "--disp", "persons", *FOOD_ARGS)
    assert code == cli.EXIT_CODES["convergence"] != cli.EXIT_CODES["io"]
