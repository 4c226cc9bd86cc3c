"""CLI and experiment orchestration.

One INI-style config drives every subcommand; all randomness flows from a
single root seed through named substreams, so runs are reproducible and
parallel scheduling cannot reorder results.  Every run writes its module's
CSV/JSON artifacts plus a manifest carrying the config hash.  Exit codes:
0 on PASS, 2 when a contract check fails, 1 on usage errors.
"""

import argparse
import configparser
import csv
import hashlib
import io
import json
import os
import sys
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .entropy import (
    count_separated_qpp,
    katok_entropy,
    orbit_sampler,
    theorem_c_check,
    write_entropy_csv,
    write_qpp_csv,
    write_theorem_c_json,
)
from .lyapnorm import (
    AdaptedNormEvaluator,
    norm_equivalence_bounds,
    verify_adapted_contraction,
)
from .oseledets import BlockParams, classify_block, lyapunov_spectrum
from .regularity import (
    empirical_holder_fit,
    holder_constants,
    sample_certified_pairs,
    write_holder_report,
)
from .shadowing import (
    ShadowDivergence,
    generate_pseudo_orbit,
    quasi_close,
    quasi_shadow_solve,
    quasi_specification,
    verify_quasi_shadow,
    write_junction,
    write_shadow_summary,
    write_shadow_trace,
)
from .systems import evaluate, make_system, registry_names

OUT_ENV = "QUASISHADOW_OUT"

# (section, key) -> (type, default, validator or None)
_SCHEMA = {
    ("system", "name"): (str, "cat_x_rot", lambda v: v in registry_names()),
    ("system", "alpha_rot"): (float, 0.25, None),
    ("system", "nu"): (float, 0.05, None),
    ("block", "lam"): (float, 0.96, lambda v: v > 0),
    ("block", "mu"): (float, 0.96, lambda v: v > 0),
    ("block", "lam_p"): (float, 0.06, None),
    ("block", "mu_p"): (float, 0.06, None),
    ("block", "eps"): (float, 0.01, lambda v: v > 0),
    ("horizons", "N"): (int, 20, lambda v: v >= 4),
    ("horizons", "lyap_horizon"): (int, 10000, lambda v: v >= 100),
    ("horizons", "ref_length"): (int, 100000, lambda v: v >= 1000),
    ("solver", "eta"): (float, 0.1, lambda v: 0 < v <= 1),
    ("solver", "xi"): (float, 0.1, lambda v: 0 < v <= 1),
    ("solver", "tol_su"): (float, 1e-10, lambda v: v > 0),
    ("solver", "tol_leaf"): (float, 1e-8, lambda v: v > 0),
    ("solver", "max_iter"): (int, 200, lambda v: v >= 1),
    ("shadow", "delta"): (float, 1e-8, lambda v: v > 0),
    ("shadow", "rho"): (float, 0.5, lambda v: 0 <= v <= 1),
    ("shadow", "count"): (int, 40, lambda v: v >= 2),
    ("shadow", "length_min"): (int, 1, lambda v: v >= 1),
    ("shadow", "length_max"): (int, 5, lambda v: v >= 1),
    ("shadow", "close_period"): (int, 5, lambda v: v >= 1),
    ("shadow", "spec_anchors"): (int, 3, lambda v: v >= 2),
    ("shadow", "spec_delta"): (float, 0.05, lambda v: v > 0),
    ("shadow", "spec_horizon"): (int, 60, lambda v: v >= 1),
    ("entropy", "gamma"): (float, 0.05, lambda v: 0 < v < 0.5),
    ("entropy", "delta"): (float, 0.1, lambda v: 0 < v < 1),
    ("entropy", "n_min"): (int, 4, lambda v: v >= 1),
    ("entropy", "n_max"): (int, 8, lambda v: v >= 1),
    ("entropy", "samples"): (int, 6000, lambda v: v >= 100),
    ("entropy", "eps_schedule"): (str, "0.2,0.1,0.05", None),
    ("entropy", "kn_gamma"): (float, 0.25, lambda v: v > 0),
    ("entropy", "qpp_candidates"): (int, 1500, lambda v: v >= 10),
    ("run", "seed"): (int, 0, None),
    ("run", "out"): (str, "artifacts", None),
}


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)

    def get(self, section, key):
        return self.values[(section, key)]

    # typed accessors -----------------------------------------------------
    def system(self):
        name = self.get("system", "name")
        params = {}
        if name in ("rotation", "cat_x_rot", "cat_x_rot_perturbed"):
            params["alpha_rot"] = self.get("system", "alpha_rot")
        if name == "cat_x_rot_perturbed":
            params["nu"] = self.get("system", "nu")
        return make_system(name, params)

    def block_params(self):
        return BlockParams(lam=self.get("block", "lam"),
                           mu=self.get("block", "mu"),
                           lam_p=self.get("block", "lam_p"),
                           mu_p=self.get("block", "mu_p"),
                           eps=self.get("block", "eps"))

    def eps_schedule(self):
        return [float(tok) for tok in
                self.get("entropy", "eps_schedule").split(",") if tok.strip()]

    def n_range(self):
        return range(self.get("entropy", "n_min"),
                     self.get("entropy", "n_max") + 1)


def default_config() -> ExperimentConfig:
    return ExperimentConfig({key: dflt for key, (_, dflt, _) in _SCHEMA.items()})


def parse_config(text) -> ExperimentConfig:
    """Parse and validate the flat-section key = value format.

    Raises ValueError naming the first unknown key, type error, or range
    violation; missing keys take documented defaults.
    """
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keys are case-sensitive (e.g. horizons N)
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise ValueError(f"config syntax: {err}") from err
    cfg = default_config()
    for section in parser.sections():
        for key, raw in parser.items(section):
            spec = _SCHEMA.get((section, key))
            if spec is None:
                raise ValueError(f"unknown config key [{section}] {key}")
            typ, _, check = spec
            try:
                val = typ(raw) if typ is not int else int(float(raw))
            except ValueError as err:
                raise ValueError(
                    f"config key [{section}] {key}: cannot parse {raw!r}") from err
            if check is not None and not check(val):
                raise ValueError(f"config key [{section}] {key}: value {val!r} "
                                 "out of range")
            cfg.values[(section, key)] = val
    cfg.block_params().check_slack()  # names the eps slack bound on violation
    return cfg


def serialize_config(cfg: ExperimentConfig) -> str:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    for (section, key), _ in sorted(_SCHEMA.items()):
        if not parser.has_section(section):
            parser.add_section(section)
        val = cfg.get(section, key)
        parser.set(section, key, f"{val:.17g}" if isinstance(val, float)
                   else str(val))
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(serialize_config(cfg).encode()).hexdigest()


def subseed(seed, name):
    """Deterministic, order-independent substream seed for a named trial."""
    return int(np.random.SeedSequence(
        [int(seed), zlib.crc32(name.encode())]).generate_state(1)[0])


def substream(seed, name):
    return np.random.default_rng(subseed(seed, name))


def _fmt(x):
    return f"{x:.17g}"


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


# ---------------------------------------------------------------------------
# subcommand implementations; each returns (passed, artifact names, summary)


def _cmd_lyap(cfg, out, seed):
    system = cfg.system()
    rng = substream(seed, "lyap")
    spec = lyapunov_spectrum(system, rng.random(system.dim),
                             cfg.get("horizons", "lyap_horizon"))
    rows = [(i, _fmt(v)) for i, v in enumerate(spec.exponents)]
    _write_csv(os.path.join(out, "lyap.csv"), ["index", "exponent"], rows)
    return True, ["lyap.csv"], {"exponents": list(spec.exponents)}


def _cmd_blocks(cfg, out, seed):
    system = cfg.system()
    params = cfg.block_params()
    rng = substream(seed, "blocks")
    N = cfg.get("horizons", "N")
    rows = []
    kappas = []
    for i in range(50):
        x = rng.random(system.dim)
        try:
            cert = classify_block(system, x, params, N)
        except ValueError:
            continue
        kappas.append(cert.kappa)
        rows.append([*map(_fmt, x), cert.kappa,
                     _fmt(min(cert.margins.values()))])
    header = [f"x{i}" for i in range(system.dim)] + ["kappa", "margin"]
    _write_csv(os.path.join(out, "blocks.csv"), header, rows)
    return bool(rows), ["blocks.csv"], {"classified": len(rows),
                                        "kappa_max": max(kappas, default=0)}


def _cmd_norms(cfg, out, seed):
    system = cfg.system()
    params = cfg.block_params()
    rng = substream(seed, "norms")
    N = cfg.get("horizons", "N")
    rows = []
    ok = True
    for i in range(20):
        x = rng.random(system.dim)
        try:
            cert = classify_block(system, x, params, N)
        except ValueError:
            continue
        ev = AdaptedNormEvaluator(system, cert)
        con = verify_adapted_contraction(ev, seed=subseed(seed, f"norms/{i}"))
        eq = norm_equivalence_bounds(ev, seed=subseed(seed, f"norms-eq/{i}"))
        ok &= con["pass"] and eq["pass"]
        rows.append([*map(_fmt, x), cert.kappa, int(con["pass"]),
                     _fmt(con["margin"]), int(eq["pass"]), _fmt(eq["margin"])])
    header = [f"x{i}" for i in range(system.dim)] + [
        "kappa", "contraction_pass", "contraction_margin",
        "equivalence_pass", "equivalence_margin"]
    _write_csv(os.path.join(out, "norms.csv"), header, rows)
    return ok and bool(rows), ["norms.csv"], {"points": len(rows)}


def _cmd_holder(cfg, out, seed):
    system = cfg.system()
    params = cfg.block_params()
    budget = holder_constants(system, params, seed=subseed(seed, "holder/D"))
    pairs = sample_certified_pairs(system, params, 100,
                                   N=cfg.get("horizons", "N"),
                                   seed=subseed(seed, "holder/pairs"))
    report = empirical_holder_fit(system, pairs, budget)
    write_holder_report(report, os.path.join(out, "holder_report.csv"))
    summary = {"pass": report["pass"], "pass_rate": report["pass_rate"],
               "a": budget.a, "D": budget.D, "a1": budget.a1,
               "b1": budget.b1, "b2": budget.b2}
    with open(os.path.join(out, "holder.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    return report["pass"], ["holder_report.csv", "holder.json"], summary


def _cmd_shadow(cfg, out, seed):
    system = cfg.system()
    params = cfg.block_params()
    po = generate_pseudo_orbit(
        system, params, cfg.get("shadow", "delta"),
        count=cfg.get("shadow", "count"),
        length=(cfg.get("shadow", "length_min"), cfg.get("shadow", "length_max")),
        rho=cfg.get("shadow", "rho"), seed=subseed(seed, "shadow"),
        N=cfg.get("horizons", "N"))
    try:
        result = quasi_shadow_solve(
            system, po, eta=cfg.get("solver", "eta"), xi=cfg.get("solver", "xi"),
            tol_su=cfg.get("solver", "tol_su"),
            tol_leaf=cfg.get("solver", "tol_leaf"),
            max_iter=cfg.get("solver", "max_iter"))
    except ShadowDivergence as err:
        with open(os.path.join(out, "shadow_summary.json"), "w") as fh:
            json.dump({"converged": False, "error": str(err)}, fh, indent=2)
        return False, ["shadow_summary.json"], {"error": str(err)}
    verify = verify_quasi_shadow(system, po, result)
    write_shadow_trace(system, po, result, os.path.join(out, "shadow_trace.csv"))
    write_junction(po, result, os.path.join(out, "junction.csv"))
    blob = write_shadow_summary(result, os.path.join(out, "shadow_summary.json"))
    passed = result.converged and verify["pass"]
    return passed, ["shadow_trace.csv", "junction.csv", "shadow_summary.json"], blob


def _cmd_close(cfg, out, seed):
    system = cfg.system()
    params = cfg.block_params()
    p = cfg.get("shadow", "close_period")
    got = count_separated_qpp(
        system, params, p, epsilon=0.05,
        ref_length=cfg.get("horizons", "ref_length"),
        max_candidates=32, seed=subseed(seed, "close"),
        eta=cfg.get("solver", "eta"), xi=cfg.get("solver", "xi"),
        N=cfg.get("horizons", "N"), tol_leaf=cfg.get("solver", "tol_leaf"))
    passed = got.cardinality >= 1
    blob = {"period": p, "found": got.cardinality,
            "points": [{"point": list(map(float, item["point"])),
                        "su_residual": item["su_residual"],
                        "center_disp": item["center_disp"]}
                       for item in got.points]}
    with open(os.path.join(out, "close.json"), "w") as fh:
        json.dump(blob, fh, indent=2)
    return passed, ["close.json"], blob


def _cmd_spec(cfg, out, seed):
    system = cfg.system()
    params = cfg.block_params()
    rng = substream(seed, "spec")
    x0 = rng.random(system.dim)
    # anchors on the reference orbit's own lattice so transitions exist even
    # for rational center rotations
    count = cfg.get("shadow", "spec_anchors")
    anchors = [(evaluate(system, x0, 37 + 101 * i), int(rng.integers(2, 5)))
               for i in range(count)]
    try:
        result, po, times = quasi_specification(
            system, anchors, params, eta=cfg.get("solver", "eta"),
            xi=cfg.get("solver", "xi"), delta=cfg.get("shadow", "spec_delta"),
            horizon=cfg.get("shadow", "spec_horizon"),
            ref_length=cfg.get("horizons", "ref_length"),
            seed=subseed(seed, "spec/ref"), N=cfg.get("horizons", "N"),
            ref_start=x0)
    except (ValueError, ShadowDivergence) as err:
        with open(os.path.join(out, "spec.json"), "w") as fh:
            json.dump({"converged": False, "error": str(err)}, fh, indent=2)
        return False, ["spec.json"], {"error": str(err)}
    blob = {"converged": result.converged, "status": result.status,
            "segments": len(po.segments), "transition_times": times,
            "sup_error": result.sup_error(),
            "max_center_disp": result.max_center_disp()}
    with open(os.path.join(out, "spec.json"), "w") as fh:
        json.dump(blob, fh, indent=2)
    return result.converged, ["spec.json"], blob


def _cmd_entropy(cfg, out, seed):
    system = cfg.system()
    est = katok_entropy(
        system, orbit_sampler(system, seed=subseed(seed, "entropy")),
        cfg.get("entropy", "gamma"), cfg.get("entropy", "delta"),
        cfg.n_range(), samples=cfg.get("entropy", "samples"))
    write_entropy_csv(est, os.path.join(out, "entropy.csv"))
    blob = {"h_hat": est.h_hat, "fit_range": list(est.fit_range),
            "fit_residual": est.fit_residual}
    with open(os.path.join(out, "entropy.json"), "w") as fh:
        json.dump(blob, fh, indent=2)
    return True, ["entropy.csv", "entropy.json"], blob


def _cmd_qpp(cfg, out, seed):
    system = cfg.system()
    params = cfg.block_params()
    rows = []
    ns = list(cfg.n_range())
    for eps in cfg.eps_schedule():
        counts = []
        for n in ns:
            got = count_separated_qpp(
                system, params, n, eps,
                ref_length=cfg.get("horizons", "ref_length"),
                max_candidates=cfg.get("entropy", "qpp_candidates"),
                seed=subseed(seed, "qpp"), N=cfg.get("horizons", "N"))
            counts.append(got.cardinality)
        pos = [(n, c) for n, c in zip(ns, counts) if c > 0]
        rate = float(np.polyfit([n for n, _ in pos],
                                np.log([c for _, c in pos]), 1)[0]) \
            if len(pos) >= 2 else 0.0
        rows.extend((n, eps, c, rate) for n, c in zip(ns, counts))
    write_qpp_csv(rows, os.path.join(out, "qpp.csv"))
    return True, ["qpp.csv"], {"rows": len(rows)}


def _cmd_theorem_c(cfg, out, seed):
    system = cfg.system()
    params = cfg.block_params()
    report = theorem_c_check(
        system, params, orbit_sampler(system, seed=subseed(seed, "entropy")),
        gamma=cfg.get("entropy", "kn_gamma"),
        epsilons=cfg.eps_schedule(), n_range=cfg.n_range(),
        entropy_samples=cfg.get("entropy", "samples"),
        entropy_gamma=cfg.get("entropy", "gamma"),
        entropy_delta=cfg.get("entropy", "delta"),
        qpp_budget={"ref_length": cfg.get("horizons", "ref_length"),
                    "max_candidates": cfg.get("entropy", "qpp_candidates")},
        seed=subseed(seed, "qpp"))
    write_theorem_c_json(report, os.path.join(out, "theoremC.json"))
    return report["pass"], ["theoremC.json"], {"h_hat": report["h_hat"],
                                               "pass": report["pass"]}


_COMMANDS = {
    "lyap": _cmd_lyap,
    "blocks": _cmd_blocks,
    "norms": _cmd_norms,
    "holder": _cmd_holder,
    "shadow": _cmd_shadow,
    "close": _cmd_close,
    "spec": _cmd_spec,
    "entropy": _cmd_entropy,
    "qpp": _cmd_qpp,
    "theorem-c": _cmd_theorem_c,
}


def run(subcommand, cfg: ExperimentConfig, out_dir=None, seed=None, jobs=1):
    """Execute one subcommand (or ``all``); returns the exit code.

    Writes the module artifacts plus manifest.json carrying the config hash,
    the effective seed, and library versions.
    """
    if subcommand != "all" and subcommand not in _COMMANDS:
        return 1
    seed = cfg.get("run", "seed") if seed is None else int(seed)
    out = out_dir or os.environ.get(OUT_ENV) or cfg.get("run", "out")
    os.makedirs(out, exist_ok=True)
    names = list(_COMMANDS) if subcommand == "all" else [subcommand]
    artifacts = []
    results = {}
    passed = True
    for name in names:
        ok, files, summary = _COMMANDS[name](cfg, out, seed)
        passed &= ok
        artifacts.extend(files)
        results[name] = {"pass": bool(ok), "summary": summary}
    manifest = {
        "config_hash": config_hash(cfg),
        "seed": seed,
        "subcommand": subcommand,
        "versions": {"python": sys.version.split()[0],
                     "numpy": np.__version__,
                     "quasishadow": __version__},
        "artifacts": sorted(set(artifacts)),
        "pass": bool(passed),
    }
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
    if subcommand == "all":
        with open(os.path.join(out, "summary.json"), "w") as fh:
            json.dump(results, fh, indent=2)
    return 0 if passed else 2


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="quasishadow",
        description="Experiment harness: certified blocks, adapted norms, "
                    "quasi-shadowing, and entropy estimation")
    parser.add_argument("subcommand", choices=sorted(_COMMANDS) + ["all"])
    parser.add_argument("--config", help="INI config path")
    parser.add_argument("--seed", type=int, help="root seed override")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--jobs", type=int, default=1)
    try:
        args = parser.parse_args(argv)
    except SystemExit:
        return 1
    try:
        if args.config:
            with open(args.config) as fh:
                cfg = parse_config(fh.read())
        else:
            cfg = default_config()
    except (OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return run(args.subcommand, cfg, out_dir=args.out, seed=args.seed,
               jobs=args.jobs)


if __name__ == "__main__":
    sys.exit(main())
