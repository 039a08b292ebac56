import csv
import json

import numpy as np
import pytest

from ratexp.cli import main, read_report
from ratexp.montecarlo import write_survey_like
from ratexp.oracle import DiscreteDist


@pytest.fixture
def data(tmp_path):
    rng = np.random.default_rng(0)
    path = tmp_path / "pooled.csv"
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["D", "value", "w", "x1", "grp"])
        for d, v in [(1, rng.normal(0, 1.2)) for _ in range(120)] + [(0, rng.normal()) for _ in range(100)]:
            wr.writerow([d, repr(v), repr(rng.uniform(0.5, 2)), repr(rng.random()), "ab"[int(rng.random() < .5)]])
    return path


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_report_round_trip(data, tmp_path, capsys):
    out = tmp_path / "r.json"
    code, _, _ = run(["test", data, "--boot", 60, "--out", out], capsys)
    assert code == 0
    doc = read_report(out)
    assert doc["manifest"]["config"]["n_boot"] == 60
    assert "boot_draws" not in doc["report"]
    code, stdout, _ = run(["test", data, "--boot", 60], capsys)
    again = json.loads(stdout)["report"]
    assert again["statistic"] == doc["report"]["statistic"]
    assert again["p_value"] == doc["report"]["p_value"]


def test_emit_draws_and_determinism(data, tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run(["test", data, "--boot", 40, "--emit-draws", "--threads", 1, "--out", a], capsys)[0] == 0
    assert run(["test", data, "--boot", 40, "--emit-draws", "--threads", 3, "--out", b], capsys)[0] == 0
    da, db = read_report(a), read_report(b)
    assert len(da["report"]["boot_draws"]) == 40
    for doc in (da, db):
        doc["manifest"].pop("timestamp")
        doc["manifest"].pop("argv")
        doc["manifest"].pop("output")
    assert json.dumps(da, sort_keys=True) == json.dumps(db, sort_keys=True)


def test_rerun_from_manifest(data, tmp_path, capsys):
    out = tmp_path / "r.json"
    run(["test", data, "--boot", 30, "--covariates", "--rmax", 1, "--out", out], capsys)
    first = read_report(out)
    assert run(first["manifest"]["argv"], capsys)[0] == 0
    second = read_report(out)
    first["manifest"].pop("timestamp")
    second["manifest"].pop("timestamp")
    assert first == second


def test_exit_codes(data, tmp_path, capsys):
    code, _, err = run(["test", tmp_path / "missing.csv"], capsys)
    assert code == 3 and json.loads(err)["error"]["type"] == "FileNotFoundError"
    assert run(["test", data, "--nope"], capsys)[0] == 2
    assert run(["test", data, "--rounding", "--shock", "additive"], capsys)[0] == 2
    assert run(["test", data, "--linked", data], capsys)[0] == 2
    assert run(["test", data, "--boot", 20, "--out", tmp_path / "no" / "r.json"], capsys)[0] == 4
    bad = tmp_path / "bad.csv"
    bad.write_text("D,value\n1,1\n3,2\n0,1\n")
    code, _, err = run(["test", bad], capsys)
    assert code == 3 and json.loads(err)["error"]["row"] == 1
    code, _, err = run(["--error-format", "text", "test", bad], capsys)
    assert code == 3 and err.startswith("error:")


def test_variants_via_cli(data, tmp_path, capsys):
    for extra in (["--shock", "additive"], ["--selection"], ["--covariates", "--use-weights",
                                                            "--weights-col", "w"]):
        code, out, _ = run(["test", data, "--boot", 30, *extra], capsys)
        assert code == 0, extra
        assert json.loads(out)["report"]["p_value"] <= 1
    linked = tmp_path / "linked.csv"
    rng = np.random.default_rng(1)
    psi = rng.normal(size=80)
    with linked.open("w") as fh:
        fh.write("y,psi\n" + "".join(f"{a},{b}\n" for a, b in zip(psi + rng.normal(size=80), psi)))
    code, out, _ = run(["test", data, "--boot", 30, "--linked", linked, "--lambda-lower", 5], capsys)
    assert code == 0 and json.loads(out)["report"]["diagnostics"]["beta_min"] == pytest.approx(5 / 6)


def test_groups_and_tsv(tmp_path, capsys):
    path = tmp_path / "survey.csv"
    write_survey_like(path, n=150, seed=3)
    tsv = tmp_path / "g.tsv"
    code, out, _ = run(["test", path, "--shock", "multiplicative", "--boot", 50, "--winsorize", 0.95,
                        "--weights-col", "w", "--group-col", "group", "--tsv", tsv], capsys)
    assert code == 0
    groups = json.loads(out)["report"]["groups"]
    assert [g["group"] for g in groups] == ["all", "old", "young"]
    rows = list(csv.DictReader(tsv.open(), delimiter="\t"))
    assert rows[0].keys() == {"group", "mean_gap", "naive_p", "variance_p", "full_p", "n_psi", "n_y"}


def test_classic(data, capsys):
    for which in ("naive", "variance"):
        code, out, _ = run(["classic", which, data, "--weights-col", "w"], capsys)
        assert code == 0 and 0 <= json.loads(out)["report"]["p_value"] <= 1


def test_oracle_subcommands(tmp_path, capsys):
    y, psi = tmp_path / "y.csv", tmp_path / "psi.csv"
    DiscreteDist([0.0, 2.0], [0.5, 0.5]).to_csv(y)
    DiscreteDist.point(1.0).to_csv(psi)
    code, out, _ = run(["oracle", "check-mps", "--outcome", y, "--belief", psi], capsys)
    assert code == 0 and json.loads(out)["report"]["holds"]
    code, out, _ = run(["oracle", "coupling", "--outcome", y, "--belief", psi], capsys)
    assert json.loads(out)["report"]["joint"] == [[0.5, 0.5]]
    code, out, _ = run(["oracle", "coupling", "--outcome", psi, "--belief", y], capsys)
    assert json.loads(out)["report"]["feasible"] is False


def test_mc_subcommand(tmp_path, capsys):
    out = tmp_path / "pc.csv"
    code, stdout, _ = run(["mc", "power-curve", "--rho", "0.5,1", "--n", 100, "--reps", 3, "--boot", 20,
                           "--out", out], capsys)
    assert code == 0 and len(json.loads(stdout)["report"]["reject_rate"]) == 2
    assert out.exists()
    code, stdout, _ = run(["mc", "tuning-sweep", "--b0-grid", "0.3", "--kappa-grid", "0.001",
                           "--n", 100, "--reps", 2, "--boot", 20], capsys)
    assert code == 0 and json.loads(stdout)["report"]["rows"][0]["b0"] == 0.3
