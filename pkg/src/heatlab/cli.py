"""Declarative experiment runner and the ``heatlab`` command."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import click
import numpy as np

from . import harnack, ineq, kernel, net, space

DEFAULT_BUDGET = 5e8


class ConfigError(ValueError):
    pass


class BudgetExceeded(RuntimeError):
    pass


# ---------------------------------------------------------------- config


@dataclass
class ExperimentConfig:
    run: dict = field(default_factory=dict)
    space: dict = field(default_factory=dict)
    kernel: dict = field(default_factory=dict)
    experiments: list = field(default_factory=list)  # (line, dict)


SECTIONS = ("run", "space", "kernel", "experiment")


def parse_config(text: str) -> ExperimentConfig:
    """Parse ``[section]`` blocks of ``key = value`` lines; ``#`` starts a comment."""
    cfg = ExperimentConfig()
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"line {lineno}: unterminated section header")
            name = line[1:-1].strip()
            if name not in SECTIONS:
                raise ConfigError(f"line {lineno}: unknown section [{name}]")
            if name == "experiment":
                current = {"__line__": lineno}
                cfg.experiments.append(current)
            else:
                current = getattr(cfg, name)
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if current is None:
            raise ConfigError(f"line {lineno}: key outside any section")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        current[key] = value
    for exp in cfg.experiments:
        if "op" not in exp:
            raise ConfigError(f"line {exp['__line__']}: experiment without 'op'")
        if exp["op"] not in OPERATIONS:
            raise ConfigError(f"line {exp['__line__']}: unknown operation {exp['op']!r}")
    return cfg


def _num(v, default=None):
    if v is None:
        return default
    if isinstance(v, (int, float)):
        return v
    s = str(v).strip()
    if s.lower() in ("inf", "+inf"):
        return math.inf
    try:
        return int(s)
    except ValueError:
        return float(s)


def _floats(v) -> list[float]:
    return [float(t) for t in str(v).replace(",", " ").split()]


# ---------------------------------------------------------------- context


@dataclass
class Context:
    space: space.Space | None
    kernel: kernel.Kernel | None
    seed: int
    budget: float
    dump_witness: bool = False


@dataclass
class Outcome:
    verdict: str  # PASS | FAIL | INFO
    constants: dict
    header: list
    rows: list
    structural_ok: bool = True
    truncated: bool = False
    plot: dict | None = None
    witness: list | None = None


def _point(ctx: Context, p: dict, key: str = "x") -> int:
    sp_ = ctx.space
    if key in p:
        return int(_num(p[key]))
    if "point" in p:
        return sp_.nearest(np.array(_floats(p["point"])))
    return int(np.argmax(sp_.margin))


def _charge(ctx: Context, steps: float, nnz: float | None = None):
    nnz = ctx.kernel.nnz if nnz is None and ctx.kernel is not None else (nnz or 0)
    cost = float(nnz) * float(steps)
    if cost > ctx.budget:
        raise BudgetExceeded(f"estimated {cost:.3g} kernel-entry applications exceed budget {ctx.budget:.3g}")


def _need_kernel(ctx: Context):
    if ctx.kernel is None:
        raise ConfigError("operation needs a [kernel] section")


def _verdict(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


# ------------------------------------------------------------- operations


def op_volume_profile(ctx, p):
    x = _point(ctx, p)
    radii = _floats(p.get("radii", "1 2 4 8"))
    prof = space.volume_profile(ctx.space, x, radii)
    rows = [(r, v) for r, v in zip(prof.radii, prof.volumes)]
    return Outcome("INFO", {"x": x}, ["r", "V"], rows,
                   plot={"series": [("V", list(prof.radii), list(prof.volumes))], "log": True})


def op_doubling(ctx, p):
    centers = [_point(ctx, p)]
    radii = _floats(p.get("radii", "1 2 4 8"))
    d = space.doubling_profile(ctx.space, centers, radii)
    rows = [(float(r), float(c)) for r, c in zip(d.radii, d.ratios)]
    return Outcome(d.verdict, {"delta_hat": d.delta_hat, "growth": d.growth}, ["r", "C_D"], rows)


def op_reverse_doubling(ctx, p):
    centers = [_point(ctx, p)]
    radii = _floats(p.get("radii", "2 4 8"))
    rd = space.reverse_doubling(ctx.space, centers, radii, float(_num(p.get("b"), 1.0)))
    return Outcome("INFO", {"gamma_hat": rd.gamma_hat, "c_hat": rd.c_hat}, ["gamma_hat", "c_hat"],
                   [(rd.gamma_hat, rd.c_hat)])


def op_net(ctx, p):
    eps = float(_num(p["eps"]))
    nt = net.build_net(ctx.space, eps)
    audit = net.audit_net(nt, seed=ctx.seed)
    rows = [(int(v), float(m)) for v, m in zip(nt.vertices, nt.m)]
    consts = {"vertices": nt.size, "max_degree": audit.max_degree, "overlap": audit.overlap,
              "lower_constant": audit.lower_constant, "A_hat": audit.A_hat}
    return Outcome(_verdict(audit.structural_ok), consts, ["vertex", "weight"], rows,
                   structural_ok=audit.structural_ok)


def op_audit_compat(ctx, p):
    _need_kernel(ctx)
    k = ctx.kernel
    a = kernel.audit_compat(k, float(_num(p.get("h"), k.h)), float(_num(p.get("hp"), k.hp)))
    consts = {"c1_hat": a.c1_hat, "C1_hat": a.C1_hat, "alpha_hat": a.alpha_hat}
    return Outcome(_verdict(a.passed), consts, ["c1_hat", "C1_hat", "alpha_hat", "support_ok"],
                   [(a.c1_hat, a.C1_hat, a.alpha_hat, int(a.support_ok))])


def op_lemma_suite(ctx, p):
    _need_kernel(ctx)
    n = int(_num(p.get("checks"), 1000))
    _charge(ctx, n * 8)
    rep = kernel.lemma_suite(ctx.kernel, n, seed=ctx.seed)
    rows = [(name, cnt, rep.violations.get(name, 0)) for name, cnt in sorted(rep.checks.items())]
    ok = rep.total_violations == 0
    return Outcome(_verdict(ok), {"checks": rep.total_checks, "violations": rep.total_violations},
                   ["lemma", "checks", "violations"], rows, structural_ok=ok)


def op_forms(ctx, p):
    _need_kernel(ctx)
    f = np.array(_floats(p["f"]))
    E, Es = kernel.dirichlet_forms(ctx.kernel, f, check_support=False)
    ok = Es <= 2 * E + 1e-12 * max(1.0, E)
    return Outcome(_verdict(E <= Es + 1e-12 * max(1.0, E)), {"E": E, "E_star": Es}, ["E", "E_star"],
                   [(E, Es)], structural_ok=ok)


def op_poincare(ctx, p):
    x = _point(ctx, p)
    h = float(_num(p["h"]))
    r = float(_num(p["r"]))
    res = ineq.poincare_constant(ctx.space, h, x, r, float(_num(p.get("kappa"), 1.0)))
    wit = [(int(i), float(res.witness[i])) for i in np.flatnonzero(res.witness)]
    return Outcome(_verdict(np.isfinite(res.value)), {"C_P": res.value, "components": res.components},
                   ["h", "r", "C_P", "degenerate"], [(h, r, res.value, int(res.degenerate))],
                   witness=wit)


def _probe_outcome(pr: ineq.ConstantProbe, key: str):
    rows = [(lab, float(v)) for lab, v in zip(pr.labels, pr.ratios)]
    return Outcome("INFO", {key: pr.observed}, ["trial", "ratio"], rows)


def op_pseudo_poincare(ctx, p):
    _need_kernel(ctx)
    s = float(_num(p["s"]))
    pr = ineq.pseudo_poincare_check(ctx.kernel, s, _point(ctx, p), _num(p.get("r")), seed=ctx.seed)
    return _probe_outcome(pr, "C_PP")


def op_nash(ctx, p):
    _need_kernel(ctx)
    pr = ineq.nash_probe(ctx.kernel, _point(ctx, p), float(_num(p["r"])), float(_num(p["delta"])),
                         seed=ctx.seed)
    return _probe_outcome(pr, "C_N")


def op_sobolev(ctx, p):
    _need_kernel(ctx)
    dk = kernel.restrict(ctx.kernel, _point(ctx, p), float(_num(p["r"])))
    return _probe_outcome(ineq.sobolev_probe(dk, float(_num(p["delta"])), seed=ctx.seed), "C_S")


def op_ultracontractivity(ctx, p):
    _need_kernel(ctx)
    dk = kernel.restrict(ctx.kernel, _point(ctx, p), float(_num(p["r"])))
    kmax = int(_num(p.get("kmax"), 50))
    _charge(ctx, kmax * dk.size, dk.K.nnz)
    u = ineq.ultracontractivity_profile(dk, kmax, float(_num(p.get("delta"), 2.0)))
    rows = list(zip(u.steps.tolist(), u.sup.tolist(), u.envelope.tolist()))
    return Outcome("INFO", {"C_u": u.C_u, "decay_exponent": u.decay_exponent},
                   ["k", "sup", "envelope"], rows,
                   plot={"series": [("sup p_k", u.steps.tolist(), u.sup.tolist())], "log": True})


def op_spectral_gap(ctx, p):
    _need_kernel(ctx)
    dk = kernel.restrict(ctx.kernel, _point(ctx, p), float(_num(p["r"])))
    g = ineq.spectral_gap(dk)
    return Outcome("INFO", {"norm": g.norm, "gap": g.gap, "a_hat": g.a_hat},
                   ["norm", "lam_max", "lam_min", "gap", "a_hat"],
                   [(g.norm, g.lam_max, g.lam_min, g.gap, g.a_hat)])


def op_caccioppoli(ctx, p):
    _need_kernel(ctx)
    k = ctx.kernel
    x = _point(ctx, p)
    r = float(_num(p["r"]))
    steps = int(_num(p.get("steps"), 20))
    trials = int(_num(p.get("trials"), 20))
    lazy_walk = space._truthy(p.get("lazy", True))
    _charge(ctx, steps * trials)
    d = k.space.distances_from(x)
    psi = np.maximum(0.0, 1.0 - d / r)
    rng = np.random.default_rng(ctx.seed)
    rows, worst = [], math.inf
    ok = True
    for t in range(trials):
        v0 = np.where(d <= 2 * r, rng.standard_normal(k.n), 0.0)
        res = ineq.caccioppoli_check(k, v0, psi, steps, lazy_walk=lazy_walk, center=x, r=r)
        worst = min(worst, float(res.residual.min()))
        ok = ok and res.passed
        rows.append((t, float(res.residual.min()), int(res.passed)))
    return Outcome(_verdict(ok), {"min_residual": worst}, ["trial", "min_residual", "passed"], rows)


def op_imp(ctx, p):
    _need_kernel(ctx)
    k = ctx.kernel
    x = _point(ctx, p)
    R = float(_num(p["R"]))
    n = int(_num(p.get("steps"), 30))
    _charge(ctx, n * 8)
    sigma = ineq.sigma_radial(k, x, R)
    u0 = np.zeros(k.n)
    u0[x] = 1.0
    res = ineq.find_min_D(k, u0, sigma, n)
    rows = [(i, float(j)) for i, j in enumerate(res.J)]
    return Outcome(_verdict(res.label == "PASS"), {"D": res.D}, ["k", "J"], rows)


def op_poly_identities(ctx, p):
    nmax = int(_num(p.get("nmax"), 20))
    trials = int(_num(p.get("trials"), 500))
    checks = ineq.poly_identity_sweep(nmax, trials, seed=ctx.seed)
    worst = max(c.residual for c in checks)
    ok = worst <= 1e-8 and all(c.s_ok for c in checks)
    by_n = {}
    for c in checks:
        by_n[c.n] = max(by_n.get(c.n, 0.0), c.residual)
    return Outcome(_verdict(ok), {"max_residual": worst}, ["n", "max_residual"],
                   sorted(by_n.items()), structural_ok=ok)


def op_elliptic_harnack(ctx, p):
    _need_kernel(ctx)
    rep = harnack.elliptic_harnack(ctx.kernel, _point(ctx, p), float(_num(p["r"])),
                                   float(_num(p.get("c"), 0.25)), int(_num(p.get("trials"), 50)),
                                   seed=ctx.seed)
    return Outcome(_verdict(not rep.failed), {"C_E": rep.C_hat, "witness_trial": rep.witness_trial},
                   ["trial", "sup", "inf", "ratio"], rep.rows)


def op_parabolic_harnack(ctx, p):
    _need_kernel(ctx)
    r = float(_num(p["r"]))
    eta = float(_num(p.get("eta"), 0.25))
    trials = int(_num(p.get("trials"), 50))
    _charge(ctx, trials * math.floor(4 * eta * eta * r * r))
    rep = harnack.parabolic_harnack(ctx.kernel, _point(ctx, p), r, eta, trials, seed=ctx.seed)
    wit = [tuple(rep.witness.values())] if rep.witness else None
    return Outcome(_verdict(not rep.failed), {"C_H": rep.C_hat, "witness_trial": rep.witness_trial},
                   ["trial", "sup_Qminus", "inf_Qplus", "ratio"], rep.rows, witness=wit)


def op_balayage(ctx, p):
    _need_kernel(ctx)
    k = ctx.kernel
    x = _point(ctx, p)
    r, r1 = float(_num(p["r"])), float(_num(p["r1"]))
    b = int(_num(p.get("b"), 40))
    _charge(ctx, 2 * (b + 2))
    u0 = np.zeros(k.n)
    u0[x] = 1.0
    u = harnack.evolve_caloric(k, u0, b + 1)
    bal = harnack.balayage(k, x, r, r1, u, 0, b)
    ok = bal.residual <= 1e-10 and bal.min_v >= -1e-14
    return Outcome(_verdict(ok), {"residual": bal.residual, "min_v": bal.min_v},
                   ["residual", "min_v"], [(bal.residual, bal.min_v)], structural_ok=ok)


def op_gaussian_fit(ctx, p):
    _need_kernel(ctx)
    horizon = tuple(int(v) for v in _floats(p.get("horizon", "64 256")))
    _charge(ctx, horizon[1])
    g = harnack.gaussian_fit(ctx.kernel, horizon, [_point(ctx, p)], A=float(_num(p.get("A"), 6.0)),
                             seed=ctx.seed)
    ok = g.verdict == "PASS" and g.spread <= float(_num(p.get("max_spread"), 2.0))
    rows = [tuple(float(v) if i in (3, 4, 5, 6) else int(v) for i, v in enumerate(s)) for s in g.samples]
    consts = {"C1": g.C1, "C2": g.C2, "c1": g.c1, "c2": g.c2, "c3": g.c3, "spread": g.spread,
              "rho_min": g.rho_range[0], "rho_max": g.rho_range[1]}
    plot = {"series": [("rho_n", g.rho[:, 0].tolist(), g.rho[:, 2].tolist())], "log": False}
    return Outcome(_verdict(ok), consts,
                   ["n", "x_id", "y_id", "d", "p_n", "V_sqrt_n", "log_ratio"], rows, plot=plot)


def op_on_diagonal(ctx, p):
    _need_kernel(ctx)
    steps = [int(v) for v in _floats(p.get("steps", "4 16 64"))]
    x = _point(ctx, p)
    _charge(ctx, max(steps))
    prof = harnack.on_diagonal_profile(ctx.kernel, [x], steps)[0]
    drop = float(prof.max() / prof.min()) if prof.min() > 0 else math.inf
    return Outcome("INFO", {"drop": drop}, ["n", "rho"], list(zip(steps, prof.tolist())),
                   plot={"series": [("rho_n", steps, prof.tolist())], "log": True})


def op_ed_profile(ctx, p):
    _need_kernel(ctx)
    kmax = int(_num(p.get("kmax"), 40))
    _charge(ctx, kmax)
    e = harnack.ed_profile(ctx.kernel, _point(ctx, p), float(_num(p["D"])), kmax,
                           A=float(_num(p.get("A"), 6.0)))
    return Outcome(_verdict(e.passed), {"ratio": e.ratio}, ["k", "E_D", "scaled"],
                   list(zip(e.steps.tolist(), e.E.tolist(), e.scaled.tolist())))


def op_classify_recurrence(ctx, p):
    _need_kernel(ctx)
    rep = harnack.classify_recurrence(ctx.kernel, _point(ctx, p), int(_num(p.get("N_max"), 1000)))
    rows = list(zip(rep.radii.tolist(), rep.volumes.tolist(), rep.partial_sums.tolist()))
    return Outcome(rep.verdict, {"verdict": rep.verdict, "beta_hat": rep.beta_hat,
                            "S_N": float(rep.partial_sums[-1])},
                   ["n", "V_m", "S_N"], rows, truncated=rep.truncated,
                   plot={"series": [("V_m", rep.radii.tolist(), rep.volumes.tolist())], "log": True})


OPERATIONS = {
    "volume_profile": op_volume_profile,
    "doubling": op_doubling,
    "reverse_doubling": op_reverse_doubling,
    "net": op_net,
    "audit_compat": op_audit_compat,
    "lemma_suite": op_lemma_suite,
    "forms": op_forms,
    "poincare": op_poincare,
    "pseudo_poincare": op_pseudo_poincare,
    "nash": op_nash,
    "sobolev": op_sobolev,
    "ultracontractivity": op_ultracontractivity,
    "spectral_gap": op_spectral_gap,
    "caccioppoli": op_caccioppoli,
    "imp": op_imp,
    "poly_identities": op_poly_identities,
    "elliptic_harnack": op_elliptic_harnack,
    "parabolic_harnack": op_parabolic_harnack,
    "balayage": op_balayage,
    "gaussian_fit": op_gaussian_fit,
    "on_diagonal": op_on_diagonal,
    "ed_profile": op_ed_profile,
    "classify_recurrence": op_classify_recurrence,
}


# ---------------------------------------------------------------- output


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header: list, rows: list):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())


def svg_plot(series, title: str = "", log: bool = False, width: int = 800,
             height: int = 600) -> str:
    """Self-contained line plot; ``series`` is a list of ``(label, xs, ys)``."""
    pts = []
    for label, xs, ys in series:
        xs = np.asarray(xs, float)
        ys = np.asarray(ys, float)
        keep = np.isfinite(xs) & np.isfinite(ys)
        if log:
            keep &= (xs > 0) & (ys > 0)
            xs, ys = np.log10(xs[keep]), np.log10(ys[keep])
        else:
            xs, ys = xs[keep], ys[keep]
        pts.append((label, xs, ys))
    allx = np.concatenate([p[1] for p in pts]) if pts else np.zeros(1)
    ally = np.concatenate([p[2] for p in pts]) if pts else np.zeros(1)
    if allx.size == 0:
        allx = ally = np.zeros(1)
    x0, x1 = float(allx.min()), float(allx.max())
    y0, y1 = float(ally.min()), float(ally.max())
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1
    L, R, T, B = 80, 20, 40, 60
    sx = lambda v: L + (v - x0) / (x1 - x0) * (width - L - R)  # noqa: E731
    sy = lambda v: height - B - (v - y0) / (y1 - y0) * (height - T - B)  # noqa: E731
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<line x1="{L}" y1="{height - B}" x2="{width - R}" y2="{height - B}" stroke="black"/>',
           f'<line x1="{L}" y1="{T}" x2="{L}" y2="{height - B}" stroke="black"/>',
           f'<text x="{width / 2}" y="24" text-anchor="middle" font-size="16">{title}</text>']
    for i in range(5):
        fx = x0 + (x1 - x0) * i / 4
        fy = y0 + (y1 - y0) * i / 4
        lx = f"{10 ** fx:.3g}" if log else f"{fx:.3g}"
        ly = f"{10 ** fy:.3g}" if log else f"{fy:.3g}"
        out.append(f'<text x="{sx(fx):.1f}" y="{height - B + 20}" text-anchor="middle" '
                   f'font-size="12">{lx}</text>')
        out.append(f'<text x="{L - 8}" y="{sy(fy) + 4:.1f}" text-anchor="end" font-size="12">{ly}</text>')
    for j, (label, xs, ys) in enumerate(pts):
        col = colors[j % len(colors)]
        coords = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(xs, ys))
        out.append(f'<polyline fill="none" stroke="{col}" stroke-width="2" points="{coords}"/>')
        out.append(f'<text x="{width - R - 10}" y="{T + 18 * (j + 1)}" text-anchor="end" '
                   f'font-size="12" fill="{col}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---------------------------------------------------------------- runner


@dataclass
class Report:
    results: list
    files: list
    wall_clock: float
    exit_code: int


def build_kernel(sp_: space.Space | None, params: dict) -> kernel.Kernel | None:
    if not params:
        return None
    if params.get("kind") == "tree_level_walk":
        return kernel.tree_level_walk(int(_num(params.get("degree"), 3)), int(_num(params["depth"])))
    if sp_ is None:
        raise ConfigError("[kernel] needs a [space]")
    kind = params.get("kind", "ball_walk")
    if kind == "ball_walk":
        k = kernel.ball_walk(sp_, float(_num(params["h"])))
    elif kind == "srw":
        k = kernel.srw(sp_)
    elif kind == "annulus_walk":
        k = kernel.annulus_walk(sp_, float(_num(params["h"])), float(_num(params["h1"])),
                                float(_num(params["h2"])))
    else:
        raise ConfigError(f"unknown kernel kind {kind!r}")
    if space._truthy(params.get("lazy", False)):
        k = kernel.lazy(k)
    return k


def budget_from_env() -> float:
    raw = os.environ.get("HEATLAB_BUDGET")
    return float(raw) if raw else DEFAULT_BUDGET


def run(cfg: ExperimentConfig, out: Path, seed: int | None = None,
        dump_witness: bool = False) -> Report:
    """Execute the experiments in order and write CSVs, summary and manifest."""
    t0 = time.perf_counter()
    out.mkdir(parents=True, exist_ok=True)
    seed = int(_num(cfg.run.get("seed"), 0)) if seed is None else seed
    sp_ = space.build_space(cfg.space) if cfg.space else None
    k = build_kernel(sp_, cfg.kernel)
    if k is not None and sp_ is None:
        sp_ = k.space
    ctx = Context(sp_, k, seed, budget_from_env(), dump_witness)
    results, files = [], []
    summary_rows = []
    exit_code = 0
    for i, exp in enumerate(cfg.experiments):
        params = {key: v for key, v in exp.items() if key != "__line__"}
        op = params.pop("op")
        must = space._truthy(params.pop("assert", False))
        plot = space._truthy(params.pop("plot", False))
        expect = params.pop("expect", None)
        ctx.seed = int(_num(params.pop("seed", None), seed))
        oc = OPERATIONS[op](ctx, params)
        stem = f"{i:02d}_{op}"
        path = out / f"{stem}.csv"
        write_csv(path, oc.header, oc.rows)
        files.append(path)
        if plot and oc.plot:
            svg = out / f"{stem}.svg"
            svg.write_text(svg_plot(oc.plot["series"], op, oc.plot.get("log", False)))
            files.append(svg)
        if dump_witness and oc.witness:
            wp = out / f"{stem}_witness.csv"
            write_csv(wp, ["item"] * len(oc.witness[0]), oc.witness)
            files.append(wp)
        for key, val in oc.constants.items():
            summary_rows.append((i, op, key, val))
        if not oc.structural_ok or (must and oc.verdict != "PASS"):
            exit_code = 1
        if expect is not None and expect != oc.verdict:
            exit_code = 1
        results.append({"index": i, "op": op, "verdict": oc.verdict, "assert": must, "expect": expect,
                        "structural_ok": oc.structural_ok, "truncated": oc.truncated,
                        "constants": {kk: _fmt(v) for kk, v in oc.constants.items()}})
    spath = out / "summary.csv"
    run_rows = [("-", "run", "seed", seed), ("-", "run", "experiments", len(results))]
    write_csv(spath, ["experiment", "op", "key", "value"], run_rows + summary_rows)
    files.append(spath)
    lines = [f"seed {seed}", f"experiments {len(results)}"]
    for r in results:
        consts = " ".join(f"{kk}={v}" for kk, v in r["constants"].items())
        lines.append(f"[{r['index']:02d}] {r['op']} {r['verdict']} {consts}".rstrip())
    txt = out / "summary.txt"
    txt.write_text("\n".join(lines) + "\n")
    files.append(txt)
    wall = time.perf_counter() - t0
    manifest = {"seed": seed, "exit_code": exit_code, "wall_clock": wall, "experiments": results,
                "files": [{"name": f.name, "sha256": _sha256(f), "bytes": f.stat().st_size}
                          for f in files]}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return Report(results, files, wall, exit_code)


# ----------------------------------------------------------------- suites


SUITES = {
    "identities": [
        ("[space]\nkind = bipartite\n[kernel]\nkind = srw\n"
         "[experiment]\nop = lemma_suite\nchecks = 2000\n"),
        ("[space]\nkind = lattice\ndim = 1\nside = 21\n[kernel]\nkind = ball_walk\nh = 2\n"
         "[experiment]\nop = lemma_suite\nchecks = 2000\n"
         "[experiment]\nop = audit_compat\n"),
        "[experiment]\nop = poly_identities\nnmax = 20\ntrials = 100\n",
    ],
    "paper-examples": [
        ("[space]\nkind = broken_line\nW = 5.25\nrho = 0.05\n"
         + "".join(f"[experiment]\nop = poincare\nh = {h}\nr = 5\npoint = 0\nexpect = {v}\n"
                   for h, v in ((0.3, "FAIL"), (0.4, "FAIL"), (0.5, "FAIL"), (0.6, "PASS"),
                                (0.75, "PASS"), (1.0, "PASS")))),
        ("[space]\nkind = bipartite\n[kernel]\nkind = srw\n"
         "[experiment]\nop = forms\nf = 1 -1\nexpect = FAIL\n"),
        *[(f"[space]\nkind = euclidean_radial\ndim = 1\nalpha = {a}\nW = 3\nrho = 0.3\n"
           "[kernel]\nkind = ball_walk\nh = 1\n"
           f"[experiment]\nop = classify_recurrence\npoint = 0\nN_max = 1000\nexpect = {v}\n")
          for a, v in ((-0.8, "recurrent"), (0.0, "recurrent"), (0.8, "transient"))],
        ("[space]\nkind = lattice\ndim = 1\nside = 41\n[kernel]\nkind = annulus_walk\nh = 2\nh1 = 1\nh2 = 3\n"
         "[experiment]\nop = audit_compat\nh = 1\nhp = 3\nexpect = FAIL\n"),
    ],
}
SUITES["full"] = SUITES["identities"] + SUITES["paper-examples"] + [
    ("[space]\nkind = lattice\ndim = 2\nside = 101\nmetric = euclidean\n"
     "[kernel]\nkind = ball_walk\nh = 1\nlazy = true\n"
     "[experiment]\nop = gaussian_fit\nhorizon = 64 256\nA = 4\n"
     "[experiment]\nop = elliptic_harnack\nr = 16\n"
     "[experiment]\nop = elliptic_harnack\nr = 32\n"
     "[experiment]\nop = parabolic_harnack\nr = 16\n"
     "[experiment]\nop = parabolic_harnack\nr = 32\ntrials = 30\n"),
    ("[space]\nkind = tree\ndegree = 3\ndepth = 10\n[kernel]\nkind = srw\n"
     "[experiment]\nop = doubling\nx = 0\nradii = 1 2 3 4 5\nexpect = FAIL\n"),
    ("[kernel]\nkind = tree_level_walk\ndegree = 3\ndepth = 300\n"
     "[experiment]\nop = on_diagonal\nx = 0\nsteps = 4 16 36 64 100\n"),
]


def run_suite(name: str, out: Path, seed: int = 0) -> Report:
    if name not in SUITES:
        raise ConfigError(f"unknown suite {name!r}")
    t0 = time.perf_counter()
    results, files, code = [], [], 0
    for i, text in enumerate(SUITES[name]):
        rep = run(parse_config(text), out / f"part{i:02d}", seed=seed)
        results += rep.results
        files += rep.files
        code = max(code, rep.exit_code)
    return Report(results, files, time.perf_counter() - t0, code)


# -------------------------------------------------------------------- CLI


def _threads(n: int | None):
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n) if n else threadpool_limits(limits=None)


@click.group()
def main():
    """Heat-kernel experiments on weighted spaces."""


@main.command("run")
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out", type=click.Path(file_okay=False), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--threads", type=int, default=None)
@click.option("--dump-witness", is_flag=True)
def run_cmd(config, out, seed, threads, dump_witness):
    """Run the experiments listed in CONFIG."""
    try:
        cfg = parse_config(Path(config).read_text())
    except ConfigError as exc:
        raise click.ClickException(f"{config}: {exc}") from None
    out = Path(out or cfg.run.get("out", "heatlab-out"))
    with _threads(threads):
        try:
            rep = run(cfg, out, seed, dump_witness)
        except (BudgetExceeded, ConfigError) as exc:
            raise click.ClickException(str(exc)) from None
    click.echo((out / "summary.txt").read_text(), nl=False)
    sys.exit(rep.exit_code)


@main.command("suite")
@click.argument("name")
@click.option("--out", "out", type=click.Path(file_okay=False), default="heatlab-suite")
@click.option("--seed", type=int, default=0)
@click.option("--threads", type=int, default=None)
def suite_cmd(name, out, seed, threads):
    """Run a bundled suite: identities, paper-examples or full."""
    with _threads(threads):
        try:
            rep = run_suite(name, Path(out), seed)
        except (BudgetExceeded, ConfigError) as exc:
            raise click.ClickException(str(exc)) from None
    for r in rep.results:
        consts = " ".join(f"{k}={v}" for k, v in r["constants"].items())
        tag = "" if r["expect"] is None else ("as expected" if r["expect"] == r["verdict"] else "UNEXPECTED")
        click.echo(f"{r['op']:<22} {r['verdict']:<5} {tag:<12} {consts}")
    click.echo(f"wall-clock {rep.wall_clock:.1f}s")
    sys.exit(rep.exit_code)


@main.command("net-build")
@click.argument("space_config", type=click.Path(exists=True, dir_okay=False))
@click.option("--eps", type=float, required=True)
@click.option("-o", "output", type=click.Path(dir_okay=False), required=True)
def net_build_cmd(space_config, eps, output):
    """Build an eps-net of the space in SPACE_CONFIG and write it as a graph file."""
    try:
        cfg = parse_config(Path(space_config).read_text())
        nt = net.build_net(space.build_space(cfg.space), eps)
    except (ConfigError, ValueError) as exc:
        raise click.ClickException(str(exc)) from None
    audit = net.audit_net(nt)
    Path(output).write_text(nt.export())
    click.echo(f"vertices {nt.size} edges {len(nt.edges)} structural {_verdict(audit.structural_ok)}")
    sys.exit(0 if audit.structural_ok else 1)


@main.command("audit-kernel")
@click.argument("kernel_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--h", "h", type=float, required=True)
@click.option("--hp", "hp", type=float, required=True)
def audit_kernel_cmd(kernel_file, h, hp):
    """Check a dumped kernel for (h, h')-compatibility on its support-graph metric."""
    try:
        k = kernel.load_kernel(Path(kernel_file).read_text(), h=h, hp=hp)
    except (space.GraphParseError, ValueError) as exc:
        raise click.ClickException(str(exc)) from None
    a = kernel.audit_compat(k, h, hp)
    click.echo(f"c1_hat {a.c1_hat!r} C1_hat {a.C1_hat!r} alpha_hat {a.alpha_hat!r} "
               f"support {'ok' if a.support_ok else 'violated'} verdict {_verdict(a.passed)}")
    sys.exit(0 if a.passed else 1)
