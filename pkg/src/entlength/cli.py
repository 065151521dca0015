"""Command-line front end.

Every option can also come from an INI file (``--config``): a ``[common]``
section and one section per subcommand, with keys named like the long flags.
Flags override the file.  Each run that writes files also writes a manifest
``<first output>.manifest.json`` from which ``replay`` re-creates the run.
"""
from __future__ import annotations

import argparse
import configparser
import csv
from dataclasses import dataclass
from datetime import datetime, timezone
import hashlib
import io
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .cluster_dynamics import (correspondence_sweep, evolve_clusters,
                               giant_initial_augmentation)
from .entanglement import Bipartition, eof
from .errors import BracketError, EntLengthError, ValidationError
from .experiments import (ExperimentConfig, dumps, estimate_entanglement_length,
                          ghz_contrast, theorem1_check)
from .lattice import (LatticeSpec, build_lattice, build_spacetime_graph,
                      graph_edge_rows)
from .matrix_io import read_density_matrix, to_bytes, to_csv
from .percolation import (circuit_patch, estimate_pc, fit_correlation_length,
                          pool_by_distance, sample_realization, tau_estimate,
                          top_layer_pairs)
from .quantum import (DensityMatrix, NoiseChannelSpec, dephasing_collapse_gap,
                      evolve_circuit, ghz_circuit, ghz_target_state,
                      random_circuit, random_pure_state, reduced_density_matrix)

EXIT_OK, EXIT_INVALID, EXIT_VERIFY = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _ints(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(x) for x in text]
    return [int(x) for x in str(text).replace("x", ",").split(",") if x.strip()]


def _flag(text) -> bool:
    if isinstance(text, bool):
        return text
    return str(text).strip().lower() in ("1", "true", "yes", "on")


@dataclass(frozen=True)
class Opt:
    name: str
    type: object
    default: object
    help: str = ""
    kind: str = "value"  # value | flag | out | in
    choices: tuple | None = None
    check: object = None  # callable(value) -> error text or None


def _unit(v):
    return None if 0.0 <= v <= 1.0 else "must lie in [0, 1]"


def _positive(v):
    return None if v >= 1 else "must be >= 1"


def _nonneg(v):
    return None if v >= 0 else "must be >= 0"


COMMON = [
    Opt("seed", int, 0, "master seed", check=_nonneg),
    Opt("threads", int, 1, "worker threads (0 = all cores)", check=_nonneg),
]

LATTICE = [
    Opt("dim", int, 1, "spatial dimension", check=_positive),
    Opt("sides", _ints, [16], "particle counts per axis, comma separated"),
    Opt("steps", int, 16, "time steps", check=_nonneg),
]

OPTIONS = {
    "percolate": LATTICE + [
        Opt("p", float, 0.5, "edge-open probability", check=_unit),
        Opt("samples", int, 1000, "Monte-Carlo samples", check=_positive),
        Opt("pairs", str, "top", "top | top:DMIN-DMAX | x@t-y@t;..."),
        Opt("pool", _flag, False, "pool pairs by distance", kind="flag"),
        Opt("fit", _flag, False, "fit the correlation length", kind="flag"),
        Opt("out", str, None, "CSV output", kind="out"),
        Opt("fit-out", str, None, "JSON fit output", kind="out"),
    ],
    "pc-scan": [
        Opt("dim", int, 1, "spatial dimension", check=_positive),
        Opt("sizes", _ints, None, "patch sizes (default by dimension)"),
        Opt("p-min", float, None, "grid start", check=_unit),
        Opt("p-max", float, None, "grid end", check=_unit),
        Opt("p-step", float, None, "grid step"),
        Opt("samples", int, 2000, "samples per grid point", check=_positive),
        Opt("out", str, None, "JSON report", kind="out"),
        Opt("csv", str, None, "CSV of spanning curves", kind="out"),
    ],
    "evolve": LATTICE + [
        Opt("eta", float, 0.3, "noise rate", check=_unit),
        Opt("init", str, "singletons", "initial state",
            choices=("singletons", "giant")),
        Opt("circuit", str, None, "quantum circuit (omit for clusters)",
            choices=("ghz", "random")),
        Opt("model", str, "collapse", "noise model",
            choices=("collapse", "depolarize")),
        Opt("m", int, 1, "GHZ left register", check=_positive),
        Opt("mid", int, 1, "GHZ middle register", check=_nonneg),
        Opt("q", int, 1, "GHZ right register", check=_positive),
        Opt("emit", str, None, "clusters CSV or binary density matrix",
            kind="out"),
        Opt("emit-csv", str, None, "density matrix as CSV", kind="out"),
    ],
    "eof": [
        Opt("in", str, None, "binary density matrix", kind="in"),
        Opt("partition", str, None, "A|B qubit lists, e.g. 0,1|2,3"),
        Opt("method", str, "auto", "evaluation method",
            choices=("auto", "closed", "minimize")),
        Opt("restarts", int, 32, "minimization restarts", check=_positive),
        Opt("k", int, None, "ensemble size (default: rank)"),
        Opt("out", str, None, "JSON report", kind="out"),
    ],
    "entlen": [
        Opt("dim", int, 1, "spatial dimension", check=_positive),
        Opt("sides", _ints, [10], "particle counts per axis"),
        Opt("steps", int, 8, "time steps", check=_nonneg),
        Opt("eta", float, 0.7, "noise rate", check=_unit),
        Opt("noise", str, "collapse", "noise model",
            choices=("collapse", "depolarize")),
        Opt("circuit", str, "random", "circuit family", choices=("random", "ghz")),
        Opt("init", str, "product", "initial state", choices=("product", "giant")),
        Opt("ghz-m", int, 1, "GHZ left register", check=_positive),
        Opt("ghz-mid", int, 1, "GHZ middle register", check=_nonneg),
        Opt("ghz-q", int, 1, "GHZ right register", check=_positive),
        Opt("pairs", str, "all", "all or A|B;A|B;..."),
        Opt("instances", int, 1, "random circuit instances", check=_positive),
        Opt("tau-samples", int, 20000, "samples for xi", check=_positive),
        Opt("confidence", float, 0.95, "confidence level"),
        Opt("batches", int, 10, "batches for time-series errors",
            check=_positive),
        Opt("out", str, None, "JSON report", kind="out"),
        Opt("csv", str, None, "CSV companion", kind="out"),
    ],
    "verify": [
        Opt("suite", str, "correspondence", "check to run",
            choices=("correspondence", "giant", "dephasing", "ghz", "bound",
                     "contrast")),
        Opt("trials", int, 100, "random trials", check=_positive),
        Opt("out", str, None, "JSON result", kind="out"),
    ],
    "dump-graph": LATTICE + [
        Opt("out", str, None, "CSV edge list (default stdout)", kind="out"),
    ],
}

PC_DEFAULTS = {
    1: {"sizes": [32, 64, 128], "p_min": 0.40, "p_max": 0.60, "p_step": 0.02},
    2: {"sizes": [6, 10, 14], "p_min": 0.30, "p_max": 0.56, "p_step": 0.02},
}


def _key(name: str) -> str:
    return name.replace("-", "_")


def build_parser() -> _Parser:
    parser = _Parser(prog="entlength",
                     description="Percolation and exact-circuit tools for "
                                 "entanglement length in noisy circuits.")
    parser.add_argument("--version", action="version",
                        version=f"entlength {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, opts in OPTIONS.items():
        p = sub.add_parser(command)
        p.add_argument("--config", help="INI file with option defaults")
        p.add_argument("--manifest", help="manifest path (default beside output)")
        for opt in COMMON + opts:
            flag = f"--{opt.name}"
            if opt.kind == "flag":
                p.add_argument(flag, dest=_key(opt.name), action="store_const",
                               const=True, default=None, help=opt.help)
            else:
                p.add_argument(flag, dest=_key(opt.name), default=None,
                               help=opt.help)
    rp = sub.add_parser("replay")
    rp.add_argument("manifest_path", metavar="MANIFEST")
    rp.add_argument("--out-dir", help="directory for re-created outputs")
    return parser


def _convert(command, opt, raw):
    try:
        value = opt.type(raw)
    except (TypeError, ValueError):
        raise ValidationError(
            f"{command}: --{opt.name}: invalid value {raw!r}") from None
    if opt.choices and value not in opt.choices:
        raise ValidationError(
            f"{command}: --{opt.name}: {value!r} not in {list(opt.choices)}")
    if opt.check is not None:
        msg = opt.check(value)
        if msg:
            raise ValidationError(f"{command}: --{opt.name} {msg}, got {value}")
    return value


def resolve(command: str, ns=None, file_values: dict | None = None) -> dict:
    """Merge flags over config-file values over defaults, with validation."""
    file_values = dict(file_values or {})
    cfg = {}
    for opt in COMMON + OPTIONS[command]:
        key = _key(opt.name)
        raw = getattr(ns, key, None) if ns is not None else None
        if raw is None:
            raw = file_values.pop(key, None)
        else:
            file_values.pop(key, None)
        cfg[key] = opt.default if raw is None else _convert(command, opt, raw)
    if file_values:
        raise ValidationError(
            f"{command}: unknown config keys {sorted(file_values)}")
    return cfg


def read_config_file(path: str, command: str) -> dict:
    cp = configparser.ConfigParser()
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from None
    out = {}
    for section in ("common", command):
        if cp.has_section(section):
            for k, v in cp.items(section):
                out[_key(k)] = v
    return out


# ---------------------------------------------------------------- runners


class Run:
    """Collects outputs of one subcommand invocation."""

    def __init__(self, command: str, cfg: dict, stdout):
        self.command = command
        self.cfg = cfg
        self.stdout = stdout
        self.outputs: dict[str, str] = {}

    def say(self, text: str):
        print(text, file=self.stdout)

    def write(self, key: str, data, binary: bool = False):
        path = self.cfg.get(key)
        if path is None:
            if not binary:
                self.stdout.write(data)
            return
        mode = "wb" if binary else "w"
        kw = {} if binary else {"newline": "", "encoding": "utf-8"}
        with open(path, mode, **kw) as fh:
            fh.write(data)
        self.outputs[key] = path


def _lattice_spec(cfg) -> LatticeSpec:
    return LatticeSpec(cfg["dim"], tuple(cfg["sides"]), cfg["steps"])


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x) -> str:
    return repr(float(x))


def _parse_pairs(text: str, lattice):
    if text.startswith("top"):
        lo, hi = 1, None
        if ":" in text:
            window = text.split(":", 1)[1]
            a, _, b = window.partition("-")
            lo, hi = int(a), (int(b) if b else None)
        return [(a, b) for a, b, _ in top_layer_pairs(lattice, lo, hi)]
    pairs = []
    for item in text.split(";"):
        if not item.strip():
            continue
        try:
            left, right = item.split("-")
            (x1, t1), (x2, t2) = (map(int, s.split("@")) for s in (left, right))
        except ValueError:
            raise ValidationError(f"--pairs: malformed pair {item!r}") from None
        spec = lattice.spec
        for x, t in ((x1, t1), (x2, t2)):
            if not (0 <= x < spec.n and 0 <= t <= spec.steps):
                raise ValidationError(f"--pairs: point {x}@{t} outside lattice")
        pairs.append((lattice.image(x1, t1), lattice.image(x2, t2)))
    if not pairs:
        raise ValidationError("--pairs selects no pairs")
    return pairs


def run_percolate(run: Run) -> int:
    cfg = run.cfg
    lattice = build_lattice(_lattice_spec(cfg))
    pairs = _parse_pairs(cfg["pairs"], lattice)
    est = tau_estimate(lattice, cfg["p"], pairs, cfg["samples"], cfg["seed"],
                       cfg["threads"])
    if cfg["pool"]:
        est = pool_by_distance(est)
        ids = [f"d{int(e.distance)}" for e in est]
    else:
        ids = [f"{e.pair[0]}-{e.pair[1]}" for e in est]
    rows = [[i, int(e.distance), e.samples, e.hits, _fmt(e.tau), _fmt(e.stderr)]
            for i, e in zip(ids, est)]
    run.write("out", _csv_text(
        ["pair_id", "distance", "samples", "hits", "tau", "stderr"], rows))
    if cfg["fit"]:
        fit = fit_correlation_length(pool_by_distance(est) if not cfg["pool"]
                                     else est)
        run.say(f"slope {fit.slope:.6g} xi {fit.length:.6g} "
                f"xi_upper {fit.length_upper:.6g} r2 {fit.r_squared:.4f}")
        if cfg["fit_out"]:
            run.write("fit_out", dumps(fit.to_dict()))
    return EXIT_OK


def run_pc_scan(run: Run) -> int:
    cfg = run.cfg
    base = PC_DEFAULTS.get(cfg["dim"], PC_DEFAULTS[2])
    for key in ("sizes", "p_min", "p_max", "p_step"):
        if cfg[key] is None:
            cfg[key] = base[key]
    if not cfg["p_step"] > 0 or cfg["p_max"] <= cfg["p_min"]:
        raise ValidationError("pc-scan: need --p-step > 0 and --p-max > --p-min")
    n_steps = int(round((cfg["p_max"] - cfg["p_min"]) / cfg["p_step"]))
    grid = np.round(cfg["p_min"] + cfg["p_step"] * np.arange(n_steps + 1), 12)
    patches = {s: circuit_patch(cfg["dim"], s) for s in cfg["sizes"]}
    try:
        est = estimate_pc(patches, grid, cfg["samples"], cfg["seed"],
                          cfg["threads"])
    except BracketError as exc:
        run.say(dumps({"error": str(exc), "diagnostic": exc.diagnostic}).rstrip())
        raise
    report = {"dim": cfg["dim"], **est.to_dict()}
    run.write("out", dumps(report))
    rows = [[s, _fmt(p), _fmt(v)] for s in sorted(est.curves)
            for p, v in zip(est.p_values, est.curves[s])]
    if cfg["csv"]:
        run.write("csv", _csv_text(["size", "p", "spanning"], rows))
    run.say(f"p_c = {est.pc:.4f} +/- {est.uncertainty:.4f}")
    return EXIT_OK


def run_evolve(run: Run) -> int:
    cfg = run.cfg
    if cfg["circuit"] is None:
        spec = _lattice_spec(cfg)
        lattice = build_lattice(spec)
        if cfg["init"] == "giant":
            lattice = giant_initial_augmentation(lattice)
        r = sample_realization(lattice, 1.0 - cfg["eta"], cfg["seed"], 0)
        traj = evolve_clusters(spec, r, cfg["init"])
        run.write("emit", _csv_text(["t", "particle", "cluster_id"],
                                    traj.rows()))
        run.say(f"clusters at t={spec.steps}: {len(traj.cluster_sizes(spec.steps))}")
        return EXIT_OK
    noise = NoiseChannelSpec(cfg["model"], eta=cfg["eta"])
    if cfg["circuit"] == "ghz":
        circ = ghz_circuit(cfg["m"], cfg["mid"], cfg["q"])
        steps = max(cfg["steps"], len(circ.layers))
        circ = circ.padded(steps)
        spec = circ.spec
    else:
        spec = _lattice_spec(cfg)
        circ = random_circuit(spec, np.random.SeedSequence(cfg["seed"],
                                                           spawn_key=(0, 0)))
    if cfg["init"] == "giant":
        rho0 = DensityMatrix.from_state(random_pure_state(
            spec.n, np.random.SeedSequence(cfg["seed"], spawn_key=(0, 1))))
    else:
        rho0 = DensityMatrix.basis([0] * spec.n)
    cfg["steps"] = spec.steps
    rho = evolve_circuit(spec, circ, noise, rho0)[-1]
    run.write("emit", to_bytes(rho), binary=True)
    if cfg["emit_csv"]:
        run.write("emit_csv", to_csv(rho))
    run.say(f"qubits {spec.n} steps {spec.steps} trace {rho.trace().real:.12f}")
    return EXIT_OK


def run_eof(run: Run) -> int:
    cfg = run.cfg
    if not cfg["in"] or not cfg["partition"]:
        raise ValidationError("eof: --in and --partition are required")
    rho = read_density_matrix(cfg["in"])
    bip = Bipartition.parse(cfg["partition"])
    kwargs = {}
    if cfg["method"] == "minimize" or (cfg["method"] == "auto" and not (
            len(bip.a) == 1 and len(bip.b) == 1)):
        kwargs = {"restarts": cfg["restarts"], "k": cfg["k"], "seed": cfg["seed"]}
    res = eof(rho, bip, cfg["method"], **kwargs)
    run.say(f"{res.value:.12f} {res.method}")
    if cfg["out"]:
        run.write("out", dumps(res.to_dict()))
    return EXIT_OK


ENTLEN_KEYS = ("dim", "sides", "steps", "eta", "noise", "circuit", "init",
               "ghz_m", "ghz_mid", "ghz_q", "pairs", "instances", "tau_samples",
               "confidence", "batches", "seed", "threads")


def run_entlen(run: Run) -> int:
    cfg = run.cfg
    exp = ExperimentConfig.from_mapping({k: cfg[k] for k in ENTLEN_KEYS})
    rep = estimate_entanglement_length(exp)
    run.write("out", rep.to_json())
    if cfg["csv"]:
        run.write("csv", rep.to_csv())
    xi_up = rep.xi.xi_upper if rep.xi else math.nan
    state = "resolved" if rep.resolved else "below resolution"
    run.say(f"mu {rep.mu:.6g} mu_upper {rep.mu_upper:.6g} ({state}) "
            f"xi_upper {xi_up:.6g} mu<=xi {rep.mu_within_xi}")
    return EXIT_OK


def _verify_result(cfg) -> dict:
    suite, trials, seed = cfg["suite"], cfg["trials"], cfg["seed"]
    if suite in ("correspondence", "giant"):
        if suite == "giant":
            res = correspondence_sweep(trials, seed, "giant", max_n=8,
                                       max_steps=8)
        else:
            res = correspondence_sweep(trials, seed)
        return res.to_dict()
    if suite == "dephasing":
        gap = dephasing_collapse_gap(trials, seed)
        return {"trials": trials, "max_trace_distance": gap, "ok": gap < 1e-12}
    if suite == "ghz":
        circ = ghz_circuit(2, 2, 2)
        rho = evolve_circuit(circ.spec, circ, NoiseChannelSpec(),
                             DensityMatrix.basis([0] * 6))[-1]
        psi = ghz_target_state(2, 2, 2)
        fid = float(np.vdot(psi, rho.data @ psi).real)
        sub = reduced_density_matrix(rho, [0, 1, 4, 5])
        ef = eof(sub, Bipartition((0, 1), (2, 3))).value
        return {"fidelity": fid, "ef": ef,
                "ok": fid >= 1 - 1e-10 and abs(ef - 1.0) <= 1e-9}
    if suite == "bound":
        table = theorem1_check(ExperimentConfig(seed=seed, threads=cfg["threads"]))
        return {"ok": table.all_pass, "rows": len(table.rows),
                "failures": len(table.failures()), "xi": table.xi.to_dict()}
    res = ghz_contrast()
    return {**res.to_dict(),
            "ok": res.min_average >= 0.99 and res.slope_consistent_with_zero}


def run_verify(run: Run) -> int:
    result = {"suite": run.cfg["suite"], **_verify_result(run.cfg)}
    if run.cfg["out"]:
        run.write("out", dumps(result))
    run.say(f"{run.cfg['suite']}: {'PASS' if result['ok'] else 'FAIL'}")
    if not result["ok"] and result.get("mismatches"):
        run.say(json.dumps(result["mismatches"][0], sort_keys=True))
    return EXIT_OK if result["ok"] else EXIT_VERIFY


def run_dump_graph(run: Run) -> int:
    g = build_spacetime_graph(_lattice_spec(run.cfg))
    run.write("out", _csv_text(["kind", "x1", "t1", "x2", "t2"],
                               graph_edge_rows(g)))
    return EXIT_OK


RUNNERS = {
    "percolate": run_percolate,
    "pc-scan": run_pc_scan,
    "evolve": run_evolve,
    "eof": run_eof,
    "entlen": run_entlen,
    "verify": run_verify,
    "dump-graph": run_dump_graph,
}


# --------------------------------------------------------------- manifests


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def execute(command: str, cfg: dict, stdout=None, manifest: str | None = None):
    """Run a resolved configuration; returns ``(exit_code, manifest_dict)``."""
    stdout = sys.stdout if stdout is None else stdout
    started = _now()
    run = Run(command, dict(cfg), stdout)
    code = RUNNERS[command](run)
    doc = {
        "subcommand": command,
        "config": run.cfg,
        "seed": run.cfg["seed"],
        "version": __version__,
        "started": started,
        "finished": _now(),
        "exit_code": code,
        "outputs": {k: {"path": p, "sha256": sha256_file(p)}
                    for k, p in sorted(run.outputs.items())},
    }
    if run.outputs or manifest:
        order = [_key(o.name) for o in OPTIONS[command] if o.kind == "out"]
        first = next(k for k in order if k in run.outputs) if run.outputs else None
        path = manifest or run.outputs[first] + ".manifest.json"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(dumps(doc))
    return code, doc


def replay(manifest_path: str, out_dir: str | None, stdout) -> int:
    """Re-run a manifest with outputs in ``out_dir`` and compare digests."""
    try:
        with open(manifest_path, encoding="utf-8") as fh:
            doc = json.load(fh)
        command, cfg = doc["subcommand"], dict(doc["config"])
    except (OSError, ValueError, KeyError) as exc:
        raise ValidationError(f"unreadable manifest {manifest_path}: {exc}") from None
    if command not in RUNNERS:
        raise ValidationError(f"manifest names unknown subcommand {command!r}")
    out_dir = out_dir or tempfile.mkdtemp(prefix="entlength-replay-")
    os.makedirs(out_dir, exist_ok=True)
    expected = doc.get("outputs", {})
    for opt in OPTIONS[command]:
        key = _key(opt.name)
        if opt.kind == "out" and cfg.get(key):
            cfg[key] = os.path.join(out_dir, os.path.basename(cfg[key]))
    code, new = execute(command, cfg, stdout=io.StringIO())
    ok = code == doc.get("exit_code", code)
    for key, info in sorted(expected.items()):
        got = new["outputs"].get(key, {}).get("sha256")
        same = got == info["sha256"]
        ok &= same
        print(f"{'OK  ' if same else 'DIFF'} {key} {info['path']}", file=stdout)
    return EXIT_OK if ok else EXIT_VERIFY


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    try:
        ns = build_parser().parse_args(argv)
        if ns.command == "replay":
            return replay(ns.manifest_path, ns.out_dir, stdout)
        file_values = read_config_file(ns.config, ns.command) if ns.config else {}
        cfg = resolve(ns.command, ns, file_values)
        code, _ = execute(ns.command, cfg, stdout, ns.manifest)
        return code
    except UsageError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_INVALID
    except (EntLengthError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
