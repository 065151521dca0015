import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from entlength.cli import main
from entlength.matrix_io import read_density_matrix


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main([str(a) for a in argv], stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def test_verify_is_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    args = ["verify", "--suite", "correspondence", "--trials", 100, "--seed", 7]
    assert run(*args, "--out", a)[0] == 0
    assert run(*args, "--out", b)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    assert json.loads(a.read_text())["ok"] is True


def test_out_of_range_probability_names_flag():
    code, _, err = run("percolate", "--p", "1.2")
    assert code == 1 and "--p" in err


@pytest.mark.parametrize("argv", [["percolate", "--bogus", "1"],
                                  ["percolate", "--samples", "ten"],
                                  ["evolve", "--model", "erase"],
                                  ["evolve", "--circuit", "random",
                                   "--sides", "13", "--steps", "1"],
                                  ["eof"],
                                  ["frobnicate"]])
def test_invalid_input_exits_one(argv):
    code, _, err = run(*argv)
    assert code == 1 and err.startswith("error:")


def test_malformed_config_exits_one(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("this is not ini\n")
    assert run("dump-graph", "--config", bad)[0] == 1
    unknown = tmp_path / "unknown.ini"
    unknown.write_text("[dump-graph]\ncolour = red\n")
    code, _, err = run("dump-graph", "--config", unknown)
    assert code == 1 and "colour" in err


def test_flags_override_config_file(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[common]\nseed = 3\n\n[percolate]\nsides = 6\nsteps = 4\n"
                   "p = 0.9\nsamples = 50\n")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run("percolate", "--config", ini, "--out", a)[0] == 0
    assert run("percolate", "--config", ini, "--p", "0.0", "--out", b)[0] == 0
    manifest = json.loads((tmp_path / "a.csv.manifest.json").read_text())
    assert manifest["config"]["p"] == 0.9 and manifest["seed"] == 3
    hits_b = [int(r["hits"]) for r in csv.DictReader(b.open())]
    assert sum(hits_b) == 0
    hits_a = [int(r["hits"]) for r in csv.DictReader(a.open())]
    assert sum(hits_a) > 0


def test_percolate_csv_and_fit(tmp_path):
    out, fit = tmp_path / "tau.csv", tmp_path / "fit.json"
    code, text, _ = run("percolate", "--sides", 24, "--steps", 24, "--p", 0.35,
                        "--samples", 1500, "--pairs", "top:4-14", "--pool",
                        "--fit", "--out", out, "--fit-out", fit)
    assert code == 0 and "xi" in text
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["pair_id", "distance", "samples", "hits", "tau", "stderr"]
    assert all(4 <= int(r[1]) <= 14 for r in rows[1:])
    assert json.loads(fit.read_text())["slope"] > 0
    assert (tmp_path / "tau.csv.manifest.json").exists()


def test_explicit_pairs(tmp_path):
    out = tmp_path / "p.csv"
    assert run("percolate", "--sides", 6, "--steps", 4, "--p", 1.0,
               "--pairs", "0@4-5@4;1@0-1@4", "--samples", 10, "--out", out)[0] == 0
    rows = list(csv.DictReader(out.open()))
    assert [r["tau"] for r in rows] == ["1.0", "1.0"]
    assert run("percolate", "--sides", 6, "--steps", 4,
               "--pairs", "0@9-1@1")[0] == 1


def test_dump_graph_columns():
    code, text, _ = run("dump-graph", "--sides", 4, "--steps", 2)
    rows = list(csv.reader(io.StringIO(text)))
    assert code == 0 and rows[0] == ["kind", "x1", "t1", "x2", "t2"]
    assert len(rows) == 1 + 11
    assert {r[0] for r in rows[1:]} == {"vertical", "interaction"}


def test_evolve_clusters_csv(tmp_path):
    out = tmp_path / "clusters.csv"
    assert run("evolve", "--sides", 5, "--steps", 3, "--eta", 0.2,
               "--emit", out)[0] == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["t", "particle", "cluster_id"]
    assert len(rows) == 1 + 4 * 5


def test_evolve_emits_binary_and_csv(tmp_path):
    binf, csvf = tmp_path / "rho.bin", tmp_path / "rho.csv"
    code, text, _ = run("evolve", "--circuit", "ghz", "--m", 1, "--mid", 1,
                        "--q", 1, "--eta", 0, "--emit", binf,
                        "--emit-csv", csvf)
    assert code == 0 and "qubits 3" in text
    rho = read_density_matrix(binf)
    psi = np.zeros(8)
    psi[0] = psi[0b101] = 2 ** -0.5
    assert np.allclose(rho.data, np.outer(psi, psi))
    rows = list(csv.reader(csvf.open()))
    assert rows[0] == ["row", "col", "re", "im"] and len(rows) == 1 + 64


def test_eof_on_emitted_state(tmp_path):
    binf, rep = tmp_path / "rho.bin", tmp_path / "eof.json"
    run("evolve", "--circuit", "ghz", "--m", 1, "--mid", 1, "--q", 1,
        "--eta", 0, "--emit", binf)
    code, text, _ = run("eof", "--in", binf, "--partition", "0|2", "--out", rep)
    assert code == 0 and text.split()[1] == "closed-form"
    # the end qubits form a Bell pair; the middle qubit is left in |0>
    assert float(text.split()[0]) == pytest.approx(1.0, abs=1e-9)
    code, text, _ = run("eof", "--in", binf, "--partition", "0|1")
    assert code == 0 and float(text.split()[0]) == pytest.approx(0.0, abs=1e-12)
    assert json.loads(rep.read_text())["method"] == "closed-form"


def test_verify_failure_exit_code(monkeypatch):
    import entlength.cli as cli

    monkeypatch.setattr(cli, "dephasing_collapse_gap", lambda *a, **k: 1.0)
    code, text, _ = run("verify", "--suite", "dephasing")
    assert code == 2 and "FAIL" in text


def test_replay_matches(tmp_path):
    out = tmp_path / "graph.csv"
    assert run("dump-graph", "--sides", 3, "--steps", 3, "--out", out)[0] == 0
    manifest = tmp_path / "graph.csv.manifest.json"
    doc = json.loads(manifest.read_text())
    assert {"subcommand", "config", "seed", "version", "started", "finished",
            "outputs"} <= set(doc)
    code, text, _ = run("replay", manifest, "--out-dir", tmp_path / "again")
    assert code == 0 and text.startswith("OK")
    assert (tmp_path / "again" / "graph.csv").read_bytes() == out.read_bytes()


def test_replay_detects_tampering(tmp_path):
    out = tmp_path / "g.csv"
    run("dump-graph", "--sides", 3, "--steps", 2, "--out", out)
    manifest = tmp_path / "g.csv.manifest.json"
    doc = json.loads(manifest.read_text())
    doc["outputs"]["out"]["sha256"] = "0" * 64
    manifest.write_text(json.dumps(doc))
    code, text, _ = run("replay", manifest, "--out-dir", tmp_path / "r")
    assert code == 2 and "DIFF" in text


def test_console_script_module_entry():
    proc = subprocess.run([sys.executable, "-m", "entlength.cli", "dump-graph",
                           "--sides", "2", "--steps", "1"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("kind,")
