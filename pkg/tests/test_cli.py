import json

import numpy as np
import pytest

from ruelle_taylor import io
from ruelle_taylor.cli import main


def run(tmp_path, command, cfg, *extra, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps({"command": command, **cfg}))
    out = tmp_path / (name + ".out")
    rc = main([command, "--config", str(path), "--out", str(out), *extra])
    return rc, out


def hash_lines(out):
    hashes = set()
    for f in out.iterdir():
        text = f.read_text()
        if f.suffix == ".csv":
            assert text.startswith(io.HASH_PREFIX)
            hashes.add(text.splitlines()[0][len(io.HASH_PREFIX):])
        else:
            hashes.add(json.loads(text)["config_sha256"])
    return hashes


def test_check_passes(tmp_path, capsys):
    rc, _ = run(tmp_path, "check", {"seed": 1, "n_tuples": 30})
    assert rc == 0
    report = json.loads(capsys.readouterr().out)
    assert report["ok"] and report["identities"] == 30


def test_check_injected_noncommuting(tmp_path, capsys):
    rc, _ = run(tmp_path, "check", {"seed": 1, "inject_noncommuting": True})
    assert rc == 1
    report = json.loads(capsys.readouterr().out)
    assert "do not commute" in report["failures"][0]["diagnostic"]


def test_check_verdict_is_seed_independent(tmp_path, capsys):
    verdicts = []
    for seed in (2, 3):
        rc, _ = run(tmp_path, "check", {"n_tuples": 20}, "--seed", str(seed), name=f"c{seed}.json")
        verdicts.append(rc)
    assert verdicts == [0, 0]


def test_missing_seed_is_config_error(tmp_path, capsys):
    rc, _ = run(tmp_path, "check", {})
    assert rc == 2
    assert "seed" in capsys.readouterr().err


def test_config_command_mismatch(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"command": "check", "seed": 1}))
    assert main(["resonances", "--config", str(path), "--out", str(tmp_path)]) == 2


def test_resonances_lattice_and_provenance(tmp_path):
    cfg = {"model": "arnold", "K": 16, "N": 2, "omega": 7}
    rc, out = run(tmp_path, "resonances", cfg)
    assert rc == 0
    header, rows, digest = io.read_csv(out / "resonances.csv")
    assert header[:2] == ["re_lambda_1", "im_lambda_1"] and header[-2:] == ["h0", "h1"]
    ims = sorted(r[1] for r in rows)
    assert np.allclose(ims, [-2 * np.pi, 0, 2 * np.pi], atol=1e-6)
    assert all(r[header.index("status")] == "confirmed" for r in rows)
    prov = json.loads((out / "provenance.json").read_text())
    assert prov["K"] == 16 and prov["window"]["boundary"] < 0
    assert hash_lines(out) == {digest}


def test_resonances_empty_window(tmp_path):
    rc, out = run(tmp_path, "resonances", {"model": "arnold", "K": 16, "N": 2, "re_max": -5.0})
    assert rc == 0
    header, rows, _ = io.read_csv(out / "resonances.csv")
    assert header and rows == []


def test_K_above_ceiling(tmp_path, capsys):
    rc, _ = run(tmp_path, "resonances", {"model": "arnold-product", "K": 64})
    assert rc == 2
    assert "ceiling" in capsys.readouterr().err


def test_bit_identical_reruns(tmp_path):
    cfg = {"model": "arnold", "K": 12, "N": 1, "omega": 7}
    _, a = run(tmp_path, "resonances", cfg, name="a.json")
    _, b = run(tmp_path, "resonances", cfg, name="b.json")
    for f in ("resonances.csv", "provenance.json"):
        assert (a / f).read_bytes() == (b / f).read_bytes()
    cfg = {"model": "arnold-product", "n_pairs": 1, "n_samples": 4000, "seed": 5}
    _, a = run(tmp_path, "measures", cfg, name="m1.json")
    _, b = run(tmp_path, "measures", cfg, name="m2.json")
    assert (a / "measures.csv").read_bytes() == (b / "measures.csv").read_bytes()


def test_jointspec_from_matrices(tmp_path):
    J = io.matrix_to_json([[0.0, 1.0], [0.0, 0.0]])
    Z = io.matrix_to_json(np.zeros((2, 2)))
    rc, out = run(tmp_path, "jointspec", {"seed": 0, "tuple": [J, Z]})
    assert rc == 0
    data = json.loads((out / "jointspec.json").read_text())
    (e,) = data["eigenvalues"]
    assert (e["algMult"], e["geomMult"], e["jordanOrder"]) == (2, 1, 2)
    assert e["cohomology"] == [1, 2, 1]
    assert e["parametrixDefect"] < 1e-8


def test_jointspec_noncommuting_input(tmp_path, capsys):
    A = io.matrix_to_json([[0.0, 1.0], [0.0, 0.0]])
    B = io.matrix_to_json([[0.0, 0.0], [1.0, 0.0]])
    rc, _ = run(tmp_path, "jointspec", {"seed": 0, "tuple": [A, B]})
    assert rc == 2
    assert "do not commute" in capsys.readouterr().err


def test_measures_small_run(tmp_path):
    rc, out = run(tmp_path, "measures", {"model": "arnold-product", "n_pairs": 2, "n_samples": 20000, "seed": 11})
    header, rows, _ = io.read_csv(out / "measures.csv")
    assert len(rows) == 2 and header[-1] == "agree"
    assert rc == (0 if all(r[-1] == "true" for r in rows) else 1)


def test_mixing_constant_roof(tmp_path, capsys):
    cfg = {"model": "arnold", "K": 16, "N": 2, "seed": 3, "n_samples": 10000, "times": [0, 4, 8, 12], "omega": 7}
    rc, out = run(tmp_path, "mixing", cfg)
    assert rc == 0
    verdict = json.loads((out / "mixing.json").read_text())
    assert verdict["verdict"] == "non-mixing"
    assert len(verdict["witnesses"]) == 2
    header, rows, _ = io.read_csv(out / "correlations.csv")
    assert header == ["series", "t", "re_C", "im_C", "stderr"] and len(rows) == 12


def test_threads_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("RT_THREADS", "2")
    rc, out = run(tmp_path, "resonances", {"model": "arnold", "K": 12, "N": 1})
    assert rc == 0


# ------------------------------------------------------------ plot data


def test_plotdata_lattice(tmp_path):
    rc, out = run(tmp_path, "resonances", {"model": "arnold-product", "K": 16, "N": 2, "omega": 7})
    assert rc == 0
    rc, plot = run(tmp_path, "plotdata", {"A0": [1.0, 1.0]}, "--input", str(out / "resonances.csv"), name="p.json")
    assert rc == 0
    header, rows, _ = io.read_csv(plot / "plot.csv")
    assert header == ["re_lambda_A0", "im_lambda_1", "im_lambda_2"]
    assert len(rows) == 9
    assert all(abs(r[0]) < 1e-6 for r in rows)


def test_plotdata_empty_input(tmp_path):
    src = tmp_path / "empty.csv"
    src.write_text("")
    rc, plot = run(tmp_path, "plotdata", {"model": "arnold"}, "--input", str(src))
    assert rc == 0
    header, rows, _ = io.read_csv(plot / "plot.csv")
    assert header == ["re_lambda_A0", "im_lambda_1"] and rows == []


def test_plotdata_malformed(tmp_path, capsys):
    src = tmp_path / "bad.csv"
    src.write_text("re_lambda_1,im_lambda_1\n0,1\nx,2\n")
    rc, _ = run(tmp_path, "plotdata", {}, "--input", str(src))
    assert rc == 2
    assert "bad.csv:3" in capsys.readouterr().err


def test_plotdata_needs_input(tmp_path):
    rc, _ = run(tmp_path, "plotdata", {})
    assert rc == 2


def test_bit_identical_on_the_sparse_eigensolver_path(tmp_path):
    # K = 16 puts the factor matrix above the dense-eig threshold
    cfg = {"model": "arnold-product", "K": 16, "N": 2, "omega": 7}
    outs = [run(tmp_path, "resonances", cfg, name=f"s{i}.json")[1] for i in range(2)]
    assert (outs[0] / "resonances.csv").read_bytes() == (outs[1] / "resonances.csv").read_bytes()
