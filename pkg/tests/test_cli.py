import json
import os
import subprocess
import sys

import pytest

from rescomp import cli


def write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


def test_list_names_bundled_configs(capsys):
    assert cli.main(["list"]) == 0
    names = capsys.readouterr().out.split()
    assert "cor515_sweep" in names and "identity_suite" in names


@pytest.mark.parametrize("name", cli.bundled_configs())
def test_bundled_configs_run(name, tmp_path, capsys):
    assert cli.main(["run", name, "--out", str(tmp_path)]) == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert len(man["config_hash"]) == 16
    assert man["experiments"][0]["status"] == "ok"
    for f in man["outputs"]:
        assert (tmp_path / f).stat().st_size > 0


def test_cor515_rows_decrease(tmp_path, capsys):
    assert cli.main(["run", "cor515_sweep", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "cor515.csv").read_text().splitlines()
    assert lines[0] == "gamma,delta,rho,d,haus_lower,haus_upper,beta_hat,bound"
    d = [float(r.split(",")[3]) for r in lines[1:]]
    assert len(d) == 4 and all(b < a for a, b in zip(d, d[1:]))


def test_same_config_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", "prop74_sweep", "--out", str(a)]) == 0
    assert cli.main(["run", "prop74_sweep", "--out", str(b), "--threads", "2"]) == 0
    for f in os.listdir(a):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_seed_override_changes_output(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    cli.main(["run", "cor515_sweep", "--out", str(a)])
    cli.main(["run", "cor515_sweep", "--out", str(b), "--seed", "99"])
    assert (a / "cor515.csv").read_bytes() != (b / "cor515.csv").read_bytes()


def test_missing_seed_names_field(tmp_path, capsys):
    cfg = dict(cli.resolve_config("cor515_sweep"))
    del cfg["seed"]
    assert cli.main(["run", write(tmp_path, cfg), "--out", str(tmp_path)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["field"] == "seed"


@pytest.mark.parametrize("patch,field", [
    ({"kind": "nope"}, "kind"),
    ({"gammas": [1.0, 0.1, 0.5]}, "gammas"),
    ({"gammas": [1.0, -0.1]}, "gammas"),
    ({"samples": 1}, "samples"),
    ({"seed": -1}, "seed"),
    ({"a": {"type": "bogus"}}, "a"),
])
def test_invalid_config_exit_2(patch, field, tmp_path, capsys):
    cfg = dict(cli.resolve_config("cor515_sweep"))
    cfg.update(patch)
    assert cli.main(["run", write(tmp_path, cfg), "--out", str(tmp_path)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["field"] == field and err["message"]


def test_unreadable_config_exit_2(tmp_path, capsys):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    assert cli.main(["run", str(p)]) == 2
    assert cli.main(["run", str(tmp_path / "missing.json")]) == 2


def test_numerical_failure_exit_3(tmp_path, capsys):
    cfg = {"kind": "modulus", "seed": 1, "gamma": 1.0, "samples": 10,
           "expr": {"type": "leaf", "atom": {"type": "normal_cone",
                                             "set": {"type": "singleton", "point": [0.0]}}}}
    assert cli.main(["run", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 3
    err = json.loads(capsys.readouterr().err)
    assert "AllPairsDegenerate" in err["message"]
    assert not (tmp_path / "o").exists()


def test_describe(tmp_path, capsys):
    expr = {"type": "cocompose", "gamma": 1.0,
            "L": {"rows": 1, "cols": 2, "data": [0.6, 0.8]},
            "b": {"type": "leaf", "atom": {"type": "subdiff_l1", "lam": 1.0, "dim": 1}}}
    assert cli.main(["describe", write(tmp_path, expr)]) == 0
    out = capsys.readouterr().out
    assert "Cocompose" in out and "native_gamma=1" in out and "coisometry" in out
    assert "SubdiffL1" in out


def test_describe_bad_expression(tmp_path, capsys):
    assert cli.main(["describe", write(tmp_path, {"type": "bogus"})]) == 2


def test_repro_subset(tmp_path, capsys):
    assert cli.main(["repro", "4,5", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("[PASS] criterion 4") and out[1].startswith("[PASS] criterion 5")
    assert (tmp_path / "criterion_04.csv").exists()


def test_repro_bad_id(capsys):
    assert cli.main(["repro", "11"]) == 2


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "rescomp", "run", "identity_suite", "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert json.loads(r.stdout)["experiments"][0]["kind"] == "identity-suite"
