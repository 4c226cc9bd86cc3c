"""Figure rendering from experiment artifacts.

Strictly a consumer: every figure is drawn from the documented CSV/JSON
files, no numerics beyond what the artifacts already carry.  Rendering is
deterministic (fixed dpi, fixed svg hash salt, no timestamps) so re-running
on the same inputs reproduces the output byte for byte.
"""

import csv
import json
import os
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "quasishadow-plots"

KINDS = ("shadow_trace", "junction", "holder", "entropy", "theorem_c")

_REQUIRED = {
    "shadow_trace": ("shadow_trace.csv",
                     ["segment", "step", "step_error", "eps_scale", "pass"]),
    "junction": ("junction.csv",
                 ["junction", "jump_norm", "center_disp_norm", "su_residual",
                  "cone_pass"]),
    "holder": ("holder_report.csv",
               ["pair_id", "bundle", "separation", "distance", "bound",
                "pass"]),
    "entropy": ("entropy.csv", ["n", "N_cover", "N_separated"]),
}


@dataclass
class FigureSpec:
    kind: str
    in_dir: str
    out_path: str
    dpi: int = 150
    style: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; "
                             f"expected one of {', '.join(KINDS)}")


def _read_csv(path, required):
    if not os.path.exists(path):
        raise FileNotFoundError(f"artifact not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [col for col in required if col not in header]
        if missing:
            raise ValueError(
                f"{os.path.basename(path)}: missing column "
                f"{missing[0]!r} (header has {header})")
        return list(reader)


def _finish(fig, spec):
    fig.savefig(spec.out_path, dpi=spec.dpi,
                metadata=_no_dates(spec.out_path))
    plt.close(fig)


def _no_dates(path):
    # strip volatile metadata so identical inputs give identical bytes
    if path.lower().endswith(".svg"):
        return {"Date": None}
    if path.lower().endswith((".png",)):
        return {"Software": "quasishadow-plots"}
    return None


def _axes_only(spec, title, xlabel, ylabel):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.set_title(title + " (no data)")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    _finish(fig, spec)


def _render_shadow_trace(spec):
    name, cols = _REQUIRED["shadow_trace"]
    rows = _read_csv(os.path.join(spec.in_dir, name), cols)
    if not rows:
        return _axes_only(spec, "shadowing error per step", "global step",
                          "error")
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    step = range(len(rows))
    err = [float(r["step_error"]) for r in rows]
    env = [float(r["eps_scale"]) for r in rows]
    segs = [int(r["segment"]) for r in rows]
    ax.semilogy(step, err, ".", ms=3, color="tab:blue", label="step error")
    ax.semilogy(step, env, "-", lw=1, color="tab:red",
                label="contract envelope")
    for i in range(1, len(rows)):
        if segs[i] != segs[i - 1]:
            ax.axvline(i - 0.5, color="0.85", lw=0.5, zorder=0)
    ax.set_xlabel("global step (segment boundaries in grey)")
    ax.set_ylabel("distance to shadow")
    ax.set_title("shadowing error per step")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    _finish(fig, spec)


def _render_junction(spec):
    name, cols = _REQUIRED["junction"]
    rows = _read_csv(os.path.join(spec.in_dir, name), cols)
    if not rows:
        return _axes_only(spec, "junction corrections", "junction",
                          "magnitude")
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    idx = [int(r["junction"]) for r in rows]
    ax.semilogy(idx, [max(float(r["jump_norm"]), 1e-300) for r in rows],
                "o-", ms=3, label="jump")
    ax.semilogy(idx, [max(float(r["center_disp_norm"]), 1e-300)
                      for r in rows], "s-", ms=3,
                label="center displacement")
    ax.semilogy(idx, [max(float(r["su_residual"]), 1e-300) for r in rows],
                "^-", ms=3, label="s/u residual")
    bad = [i for i, r in zip(idx, rows) if r["cone_pass"] not in ("1", "True")]
    for i in bad:
        ax.axvline(i, color="tab:red", lw=0.8, alpha=0.5)
    ax.set_xlabel("junction")
    ax.set_ylabel("magnitude")
    ax.set_title("junction corrections (center-displacement profile)")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    _finish(fig, spec)


def _render_holder(spec):
    name, cols = _REQUIRED["holder"]
    rows = _read_csv(os.path.join(spec.in_dir, name), cols)
    if not rows:
        return _axes_only(spec, "splitting regularity", "separation",
                          "subspace distance")
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    bundles = sorted({r["bundle"] for r in rows})
    for bundle, color in zip(bundles, plt.cm.tab10.colors):
        sub = [r for r in rows if r["bundle"] == bundle]
        sep = [float(r["separation"]) for r in sub]
        ax.loglog(sep, [max(float(r["distance"]), 1e-18) for r in sub],
                  ".", ms=4, color=color, label=f"{bundle} distance")
        order = sorted(range(len(sub)), key=lambda i: sep[i])
        ax.loglog([sep[i] for i in order],
                  [float(sub[i]["bound"]) for i in order],
                  "-", lw=1, color=color, alpha=0.6)
    ax.set_xlabel("pair separation")
    ax.set_ylabel("subspace distance (bound lines solid)")
    ax.set_title("splitting regularity")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    _finish(fig, spec)


def _render_entropy(spec):
    name, cols = _REQUIRED["entropy"]
    rows = _read_csv(os.path.join(spec.in_dir, name), cols)
    if not rows:
        return _axes_only(spec, "covering growth", "n", "ln N")
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ns = [int(r["n"]) for r in rows]
    ax.semilogy(ns, [int(r["N_cover"]) for r in rows], "o-",
                label="cover count")
    ax.semilogy(ns, [max(int(r["N_separated"]), 1) for r in rows], "s--",
                label="separated count")
    ax.set_xlabel("n")
    ax.set_ylabel("count")
    ax.set_title("covering growth in the Bowen metric")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    _finish(fig, spec)


def _render_theorem_c(spec):
    path = os.path.join(spec.in_dir, "theoremC.json")
    if not os.path.exists(path):
        raise FileNotFoundError(f"artifact not found: {path}")
    with open(path) as fh:
        report = json.load(fh)
    for key in ("h_hat", "counts", "rates", "gamma"):
        if key not in report:
            raise ValueError(f"theoremC.json: missing field {key!r}")
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    h = float(report["h_hat"])
    gamma = float(report["gamma"])
    entropy_table = report.get("entropy_table", [])
    base_ns = [row[0] for row in entropy_table]
    for eps, counts in sorted(report["counts"].items(), reverse=True):
        ns = base_ns[:len(counts)] if base_ns else list(range(len(counts)))
        rate = float(report["rates"][eps])
        ax.semilogy(ns, [max(int(c), 1) for c in counts], "o-",
                    label=f"qpp counts, eps={eps} (rate {rate:.3f})")
    if base_ns:
        import numpy as np
        ns = np.asarray(base_ns, dtype=float)
        ref = np.exp((h / (1.0 + gamma)) * (ns - ns[0]))
        ax.semilogy(ns, ref, "k--", lw=1.2,
                    label=f"h/(1+gamma) slope = {h / (1 + gamma):.3f}")
    ax.set_xlabel("n")
    ax.set_ylabel("separated quasi-periodic points")
    verdict = "PASS" if report.get("pass") else "FAIL"
    ax.set_title(f"quasi-periodic growth vs entropy (h = {h:.3f}, {verdict})")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    _finish(fig, spec)


_RENDERERS = {
    "shadow_trace": _render_shadow_trace,
    "junction": _render_junction,
    "holder": _render_holder,
    "entropy": _render_entropy,
    "theorem_c": _render_theorem_c,
}


def render(spec: FigureSpec):
    """Render one figure kind from the artifact directory to spec.out_path."""
    _RENDERERS[spec.kind](spec)
    return spec.out_path
