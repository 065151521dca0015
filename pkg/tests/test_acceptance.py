"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``[criterion N] PASS|FAIL ...`` line to the
terminal (outside pytest capture) and then asserts the same condition.
"""
import io
import json
import math
import time

import numpy as np
import pytest

from entlength.cli import main
from entlength.cluster_dynamics import correspondence_sweep
from entlength.entanglement import Bipartition, eof, eof_minimize, eof_two_qubit
from entlength.experiments import (ExperimentConfig,
                                   estimate_entanglement_length, ghz_contrast,
                                   theorem1_check)
from entlength.lattice import LatticeSpec, build_lattice
from entlength.percolation import (circuit_patch, estimate_pc,
                                   fit_correlation_length, pool_by_distance,
                                   tau_estimate, top_layer_pairs)
from entlength.quantum import (DensityMatrix, NoiseChannelSpec,
                               dephasing_collapse_gap, evolve_circuit,
                               ghz_circuit, ghz_target_state,
                               random_density_matrix, reduced_density_matrix)


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, detail
    return emit


def _cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main([str(a) for a in argv], stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def test_criterion_01_correspondence(report):
    t0 = time.perf_counter()
    res = correspondence_sweep(10_000, seed=2024)
    dt = time.perf_counter() - t0
    report(1, res.ok and res.trials == 10_000 and dt < 60,
           f"trials={res.trials} mismatches={len(res.mismatches)} time={dt:.1f}s")


def test_criterion_02_square_lattice_pc(report, tmp_path):
    out = tmp_path / "pc.json"
    code, _, err = _cli("pc-scan", "--dim", 1, "--sizes", "32,64,128",
                        "--samples", 2000, "--out", out)
    pc = json.loads(out.read_text())["pc"] if code == 0 else math.nan
    report(2, code == 0 and abs(pc - 0.5) <= 0.02,
           f"p_c={pc:.4f} target 0.50 +/- 0.02 {err.strip()}")


def test_criterion_03_bracket_in_two_plus_one(report):
    patches = {s: circuit_patch(2, s) for s in (6, 10, 14)}
    est = estimate_pc(patches, np.round(np.arange(0.30, 0.561, 0.02), 12),
                      2000, seed=3)
    lo, hi = 1 / 3 - 0.02, 2 ** -0.5 + 0.02
    report(3, lo <= est.pc <= hi,
           f"p_c={est.pc:.4f} +/- {est.uncertainty:.4f} bracket [{lo:.4f}, {hi:.4f}]")


def test_criterion_04_subcritical_decay(report):
    lat = build_lattice(LatticeSpec.chain(40, 40))
    pairs = [(a, b) for a, b, _ in top_layer_pairs(lat, 4, 16)]
    slopes, r2 = [], []
    for p in (0.30, 0.35, 0.40):
        fit = fit_correlation_length(
            pool_by_distance(tau_estimate(lat, p, pairs, 20000, seed=4)))
        slopes.append(fit.slope)
        r2.append(fit.r_squared)
    ok = (all(s > 0 for s in slopes) and min(r2) >= 0.95
          and slopes[0] > slopes[1] > slopes[2])
    report(4, ok, "slopes=" + ",".join(f"{s:.4f}" for s in slopes)
           + " R2=" + ",".join(f"{r:.4f}" for r in r2))


def test_criterion_05_ghz_construction(report):
    circ = ghz_circuit(2, 2, 2)
    rho = evolve_circuit(circ.spec, circ, NoiseChannelSpec(),
                         DensityMatrix.basis([0] * 6))[-1]
    psi = ghz_target_state(2, 2, 2)
    fid = float(np.vdot(psi, rho.data @ psi).real)
    sub = reduced_density_matrix(rho, [0, 1, 4, 5])
    ef = eof(sub, Bipartition((0, 1), (2, 3))).value
    report(5, fid >= 1 - 1e-10 and abs(ef - 1.0) <= 1e-9,
           f"fidelity={fid:.15f} E_f={ef:.12f}")


def test_criterion_06_two_qubit_oracle(report):
    rng = np.random.default_rng(6)
    ab = Bipartition((0,), (1,))
    t0 = time.perf_counter()
    diffs = []
    for _ in range(50):
        rho = DensityMatrix(random_density_matrix(2, rng), 2)
        got = eof_minimize(rho, ab, k=4, restarts=32).value
        diffs.append(got - eof_two_qubit(rho).value)
    dt = time.perf_counter() - t0
    report(6, -1e-6 <= min(diffs) and max(diffs) <= 1e-2 and dt < 60,
           f"diff range [{min(diffs):.2e}, {max(diffs):.2e}] time={dt:.1f}s")


def test_criterion_07_dephasing_equals_collapse(report):
    gap = dephasing_collapse_gap(100, seed=7)
    report(7, gap < 1e-12, f"max trace distance={gap:.2e}")


def test_criterion_08_finite_noise_bound(report):
    cfg = ExperimentConfig(dim=1, sides=(10,), steps=8, eta=0.7)
    table = theorem1_check(cfg, inits=("product", "giant"))
    by_init = {i: sum(r.init == i for r in table.rows) for i in ("product", "giant")}
    report(8, table.all_pass and min(by_init.values()) == 9 * 45,
           f"rows={by_init} failures={len(table.failures())} "
           f"xi_upper={table.xi.xi_upper:.4f} max_ef={max(r.ef for r in table.rows):.3e}")


def test_criterion_09_mu_not_above_xi(report):
    rep = estimate_entanglement_length(
        ExperimentConfig(dim=1, sides=(10,), steps=8, eta=0.7))
    xi_up = rep.xi.xi_upper if rep.xi else math.nan
    report(9, rep.xi is not None and rep.mu_upper <= xi_up,
           f"mu_upper={rep.mu_upper:.4f} (resolved={rep.resolved}) "
           f"xi(0.3)_upper={xi_up:.4f}")


def test_criterion_10_noiseless_contrast(report):
    res = ghz_contrast(mids=range(1, 7), steps=1000, eta=0.0)
    report(10, res.min_average >= 0.99 and res.slope_consistent_with_zero,
           f"min_avg={res.min_average:.5f} slope={res.fit.slope:.2e} "
           f"sigma={res.slope_sigma:.2e}")


def test_criterion_11_manifest_replay(report, tmp_path):
    rho = tmp_path / "rho.bin"
    runs = {
        "percolate": ["--sides", 12, "--steps", 12, "--p", 0.4, "--samples", 500,
                      "--pool", "--fit", "--out", tmp_path / "tau.csv",
                      "--fit-out", tmp_path / "fit.json"],
        "pc-scan": ["--sizes", "8,16", "--samples", 300, "--p-min", 0.3,
                    "--p-max", 0.7, "--p-step", 0.05,
                    "--out", tmp_path / "pc.json", "--csv", tmp_path / "pc.csv"],
        "evolve": ["--circuit", "random", "--sides", 4, "--steps", 4,
                   "--emit", rho, "--emit-csv", tmp_path / "rho.csv"],
        "eof": ["--in", rho, "--partition", "0|2,3", "--restarts", 4,
                "--out", tmp_path / "eof.json"],
        "entlen": ["--sides", 6, "--steps", 4, "--tau-samples", 500,
                   "--out", tmp_path / "entlen.json", "--csv", tmp_path / "entlen.csv"],
        "verify": ["--suite", "correspondence", "--trials", 50,
                   "--out", tmp_path / "verify.json"],
        "dump-graph": ["--sides", 5, "--steps", 3, "--out", tmp_path / "graph.csv"],
    }
    results = {}
    for command, args in runs.items():
        code, _, err = _cli(command, "--seed", 11, *args)
        out_index = next(i for i, a in enumerate(args)
                         if str(a) in ("--out", "--emit")) + 1
        manifest = f"{args[out_index]}.manifest.json"
        replay_code, text, _ = _cli("replay", manifest, "--out-dir",
                                    tmp_path / f"replay-{command}")
        results[command] = (code, replay_code, text.count("OK"))
    ok = all(c == 0 and r == 0 and n >= 1 for c, r, n in results.values())
    report(11, ok, " ".join(f"{k}:{c}/{r}/{n}" for k, (c, r, n) in results.items()))
