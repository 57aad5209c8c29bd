"""Scenario runner.

Each subcommand builds the algebra/mesh/fields from the merged config,
executes one named experiment, and writes its artifacts into the output
directory: a plain-text summary, JSON-lines telemetry or check records,
delimited series data, and rendered figures.  Runs are reproducible
bit-for-bit from (config, seed); the exit status reflects the scenario's
tolerance checks.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import algebra as al
from . import dynamics as dy
from . import fields as fl
from . import pca
from . import reduction as red
from . import report
from .config import SCENARIOS, ConfigError, build_run_config, config_fingerprint, read_config_file
from .dynamics import RESIDUAL_NAMES
from .mesh import CollarMesh, d_a, pairing

_FMT = "%.16e"


def _fmt(x):
    return _FMT % float(x)


# ---------------------------------------------------------------------------
# artifact writers
# ---------------------------------------------------------------------------

def emit_plotdata(records, path):
    """Columnar CSV of an evolution run, 17 significant digits."""
    if not records:
        raise ValueError("no records to emit")
    header = "t,H," + ",".join(RESIDUAL_NAMES)
    lines = [header]
    for rec in records:
        row = [_fmt(rec.t), _fmt(rec.hamiltonian)]
        row += [_fmt(rec.constraint_residuals[name]) for name in RESIDUAL_NAMES]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def parse_plotdata(path):
    """Read back a CSV written by emit_plotdata -> (header, array)."""
    lines = Path(path).read_text().strip().splitlines()
    header = lines[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    return header, data


def write_telemetry(records, path):
    with open(path, "w") as fh:
        for rec in records:
            obj = {
                "t": float(rec.t),
                "H": float(rec.hamiltonian),
                "residuals": {k: float(v)
                              for k, v in sorted(rec.constraint_residuals.items())},
                "norms": {
                    "a": float(np.linalg.norm(rec.state.a)),
                    "p": float(np.linalg.norm(rec.state.p)),
                },
            }
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def write_checks(checks, path):
    with open(path, "w") as fh:
        for name, value, tol, passed in checks:
            fh.write(json.dumps({"name": name, "value": float(value),
                                 "tol": float(tol), "pass": bool(passed)},
                                sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def _build_algebra(cfg):
    if cfg.algebra_kind == "abelian":
        return al.build_algebra("abelian", n=cfg.algebra_n)
    if cfg.algebra_kind == "su2":
        return al.build_algebra("su2")
    if cfg.algebra_kind in ("so", "so1d"):
        return al.build_algebra("so", d=cfg.algebra_d)
    raise ConfigError(f"algebra.kind: unsupported kind {cfg.algebra_kind!r}")


def _build_mesh(cfg):
    return CollarMesh(d=cfg.mesh_d, sites_per_dim=cfg.sites, h=cfg.h,
                      n_t=cfg.n_t, dt=cfg.dt)


def _flat_vacuum(mesh, spec):
    state = fl.BoundaryState.zero(mesh, spec)
    pm_p, pm_beta = dy.palatini_boundary_blocks(state)
    state.p = pm_p.copy()
    state.beta = fl.skew_project(pm_beta, 1, 2)
    return state


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------

def _scenario_ym_evolve(cfg, outdir):
    spec = _build_algebra(cfg)
    mesh = _build_mesh(cfg)
    amplitude = cfg.amplitude if cfg.amplitude > 0 else 0.3
    state = fl.random_boundary_state(cfg.seed, mesh, spec, amplitude)
    lam = cfg.lambdas[0]
    records = dy.evolve(mesh, spec, state, cfg.steps, cfg.dt, lam=lam)
    emit_plotdata(records, outdir / "series.csv")
    write_telemetry(records, outdir / "telemetry.jsonl")
    times = [r.t for r in records]
    hams = [r.hamiltonian for r in records]
    series = {n: [r.constraint_residuals[n] for r in records] for n in RESIDUAL_NAMES}
    report.evolution_figure(times, hams, series, outdir / "evolution.png")
    drift = abs(hams[-1] - hams[0]) / max(1.0, abs(hams[0]))
    ok = drift < cfg.tol
    lines = [f"lambda flow with lambda = {lam}",
             f"steps = {cfg.steps}, dt = {cfg.dt}",
             f"relative Hamiltonian drift = {drift:.6e} (tol {cfg.tol:.1e})",
             f"check {'PASS' if ok else 'FAIL'}"]
    return (0 if ok else 1), lines


def _scenario_palatini_evolve(cfg, outdir):
    spec = _build_algebra(cfg)
    mesh = _build_mesh(cfg)
    state = _flat_vacuum(mesh, spec)
    if cfg.amplitude > 0:
        rng = np.random.default_rng(cfg.seed)
        for name in ("a", "p", "e", "e0", "Lambda0"):
            arr = getattr(state, name)
            setattr(state, name, arr + cfg.amplitude * rng.standard_normal(arr.shape))
        state = pca.project_constraints(mesh, spec, state, tol=cfg.tol / 10)
    records = dy.evolve(mesh, spec, state, cfg.steps, cfg.dt, lam=None,
                        projection=cfg.projection, project_tol=cfg.tol / 10)
    emit_plotdata(records, outdir / "series.csv")
    write_telemetry(records, outdir / "telemetry.jsonl")
    times = [r.t for r in records]
    hams = [r.hamiltonian for r in records]
    series = {n: [r.constraint_residuals[n] for r in records] for n in RESIDUAL_NAMES}
    report.evolution_figure(times, hams, series, outdir / "evolution.png")
    worst = max(max(s) for s in series.values())
    ok = worst < cfg.tol
    lines = [f"multiplier-system evolution over {cfg.steps} steps, dt = {cfg.dt}",
             f"projection = {'on' if cfg.projection else 'off'}",
             f"worst residual norm over the run = {worst:.6e} (tol {cfg.tol:.1e})",
             f"check {'PASS' if ok else 'FAIL'}"]
    return (0 if ok else 1), lines


def _toy_systems():
    om2 = np.array([[0.0, 1.0], [-1.0, 0.0]])
    om3 = np.zeros((3, 3))
    om3[0, 1], om3[1, 0] = 1.0, -1.0
    free = pca.PresymplecticSystem(
        2, lambda x: om2, lambda x: 0.5 * x[1] ** 2,
        lambda x: np.array([0.0, x[1]]))
    regular = pca.PresymplecticSystem(
        3, lambda x: om3,
        lambda x: 0.5 * x[1] ** 2 + 0.5 * x[2] ** 2 + x[2] * x[0],
        lambda x: np.array([x[2], x[1], x[2] + x[0]]))
    twolevel = pca.PresymplecticSystem(
        3, lambda x: om3,
        lambda x: x[2] * x[1] + 0.5 * x[0] ** 2,
        lambda x: np.array([x[0], x[2], x[1]]))
    return [("free-particle", free, np.array([0.3, 0.7]), 0),
            ("regular-H", regular, np.array([0.4, -0.3, 0.25]), 1),
            ("two-level", twolevel, np.array([0.5, 0.4, -0.6]), 2)]


def _scenario_pca_analyze(cfg, outdir):
    lines = []
    names, dim_series = [], []
    ok = True
    for name, system, seed_pt, expected in _toy_systems():
        result = pca.pca_run(system, seed_pt)
        count = len(result.levels)
        ok = ok and (count == expected) and result.stabilized
        lines.append(f"system {name}: levels {count} (expected {expected}), "
                     f"stabilized {result.stabilized}, "
                     f"final kernel dim {result.final_kernel_dim}")
        for i, (dim, ncon, _) in enumerate(result.levels, start=1):
            lines.append(f"  level {i}: dimension {dim}, constraints {ncon}")
        names.append(name)
        dim_series.append([system.n] + [lv[0] for lv in result.levels])

    spec = al.build_algebra("so", d=cfg.mesh_d)
    mesh = _build_mesh(cfg)
    system = pca.palatini_boundary_system(mesh, spec)
    sample = fl.random_boundary_state(cfg.seed, mesh, spec, 0.02)
    z = fl.pack_state(sample)
    candidates = pca.pca_step(system, z, [])
    cand_max = max(abs(c(z)) for c in candidates)
    res_norm = np.linalg.norm(pca.constraint_residual_vector(mesh, spec, sample))
    projected = pca.project_constraints(mesh, spec, sample, tol=1e-10)
    zp = fl.pack_state(projected)
    cand_on = max(abs(c(zp)) for c in candidates)
    membership = cand_on < 1e-8 and cand_max > 1e-4
    ok = ok and membership
    # which degenerate directions survive on the constraint surface, and
    # whether the chain produces secondary constraints there
    rows, kept = [], []
    for cand in candidates:
        row = pca.fd_gradient(cand, zp)
        if pca._rank_of(rows + [row]) > pca._rank_of(rows):
            kept.append(cand)
            rows.append(row)
    level2 = pca.pca_step(system, zp, kept, check_tol=1e-6)
    level2_max = max(abs(c(zp)) for c in level2) if level2 else 0.0
    stabilized = level2_max < 1e-8
    ok = ok and stabilized
    lines += [
        f"boundary system: state dim {system.n}, level-1 kernel size {len(candidates)}",
        f"  off-shell sample: max consistency value {cand_max:.6e}, "
        f"residual norm {res_norm:.6e}",
        f"  projected sample: max consistency value {cand_on:.6e}",
        f"  level-1 membership matches the constraint zero set: {membership}",
        f"  independent level-1 constraints: {len(kept)}",
        f"  kernel dimension on the constraint surface: {len(level2)} "
        f"(temporal multiplier block alone: {mesh.n_sites * spec.dim})",
        f"  max level-2 consistency value on shell: {level2_max:.6e} "
        f"(stabilizes: {stabilized})",
        f"check {'PASS' if ok else 'FAIL'}",
    ]
    report.pca_figure(names, dim_series, outdir / "pca_levels.png")
    with open(outdir / "levels.csv", "w") as fh:
        fh.write("system,level,dimension\n")
        for name, dims in zip(names, dim_series):
            for lvl, dim in enumerate(dims):
                fh.write(f"{name},{lvl},{dim}\n")
    return (0 if ok else 1), lines


def _scenario_lambda_sweep(cfg, outdir):
    spec = _build_algebra(cfg)
    mesh = _build_mesh(cfg)
    out = dy.lambda_sweep(mesh, spec, cfg.seed, cfg.lambdas)
    with open(outdir / "sweep.csv", "w") as fh:
        fh.write("lambda,curvature_norm,gauss_norm\n")
        for lam, fn, gn in zip(out["lambdas"], out["curvature_norms"],
                               out["gauss_norms"]):
            fh.write(",".join([_fmt(lam), _fmt(fn), _fmt(gn)]) + "\n")
    report.sweep_figure(out["lambdas"], out["curvature_norms"], out["gauss_norms"],
                        (out["curvature_slope"], out["gauss_slope"]),
                        outdir / "sweep.png")
    ok = (abs(out["curvature_slope"] - 1.0) <= 0.2
          and abs(out["gauss_slope"] - 1.0) <= 0.2)
    lines = ["lambda sweep over " + ", ".join(str(l) for l in cfg.lambdas),
             f"curvature residual slope = {out['curvature_slope']:.4f}",
             f"covariant divergence slope = {out['gauss_slope']:.4f}",
             "residuals decrease monotonically: "
             f"{bool(np.all(np.diff(out['curvature_norms']) < 0))}",
             f"check {'PASS' if ok else 'FAIL'} (slopes within 1.0 +/- 0.2)"]
    return (0 if ok else 1), lines


def _scenario_check_invariants(cfg, outdir):
    rng = np.random.default_rng(cfg.seed)
    checks = []

    su2 = al.build_algebra("su2")
    so13 = al.build_algebra("so", d=3)
    checks.append(("jacobi_su2", al.jacobi_residual(su2), 1e-12))
    checks.append(("jacobi_so13", al.jacobi_residual(so13), 1e-12))
    checks.append(("ad_invariance_so13", al.ad_invariance_residual(so13), 1e-12))

    mesh = CollarMesh(d=1, sites_per_dim=8, h=0.5, n_t=8, dt=0.1)
    a = rng.standard_normal((mesh.n_sites, 1, 3))
    p = rng.standard_normal((mesh.n_sites, 1, 3))
    xi = rng.standard_normal((mesh.n_sites, 3))
    lhs = pairing(mesh, su2, p, d_a(mesh, su2, a, xi))
    J = red.moment_map(mesh, su2, a, p)
    rhs = mesh.integrate(np.einsum("ab,xa,xb->x", su2.pairing, J, xi))
    checks.append(("adjointness_identity", abs(lhs - rhs), 1e-12))

    bulk = fl.random_bulk_field(cfg.seed, mesh, su2, 0.4)
    UA = rng.standard_normal(bulk.A.shape)
    UP = fl.skew_project(rng.standard_normal(bulk.P.shape), 2, 3)
    lhs, _, gap = dy.fundamental_check(mesh, su2, bulk, (UA, UP), 1.0)
    checks.append(("fundamental_formula_rel", gap / abs(lhs), 1e-6))

    so_spec = al.build_algebra("so", d=1)
    state = fl.random_boundary_state(cfg.seed, mesh, so_spec, 0.05)
    grad = dy.boundary_hamiltonian_gradient(mesh, so_spec, state)
    adot, pdot = dy.evolution_rhs(mesh, so_spec, state)
    kinv, w = so_spec.pairing_inverse, mesh.weight
    gap_a = np.max(np.abs(grad.p @ kinv / w - adot))
    gap_p = np.max(np.abs(-grad.a @ kinv / w - pdot))
    scale = max(np.max(np.abs(adot)), np.max(np.abs(pdot)), 1e-12)
    checks.append(("variational_consistency_rel", max(gap_a, gap_p) / scale, 1e-10))

    vac = _flat_vacuum(mesh, so_spec)
    norms = pca.residual_norms(mesh, so_spec, vac)
    checks.append(("flat_vacuum_residual", max(norms.values()), 1e-12))

    vf = fl.random_vierbein(cfg.seed, 16, 3, 0.1)
    pm = fl.palatini_map(vf)
    checks.append(("palatini_skewness", fl.max_skew_violation(pm, 1, 2), 1e-12))

    rows = [(name, val, tol, val < tol) for name, val, tol in checks]
    write_checks(rows, outdir / "checks.jsonl")
    report.checks_figure([r[0] for r in rows], [r[1] for r in rows],
                         [r[2] for r in rows], outdir / "checks.png")
    ok = all(r[3] for r in rows)
    lines = [f"{name}: value {val:.6e} tol {tol:.1e} "
             f"{'PASS' if passed else 'FAIL'}"
             for name, val, tol, passed in rows]
    lines.append(f"check {'PASS' if ok else 'FAIL'}")
    return (0 if ok else 1), lines


def _scenario_reduction_report(cfg, outdir):
    rng = np.random.default_rng(cfg.seed)
    su2 = al.build_algebra("su2")
    mesh = CollarMesh(d=2, sites_per_dim=(4, 4), h=0.5, n_t=4, dt=0.1)
    checks = []

    worst = 0.0
    for _ in range(100):
        a = rng.standard_normal((mesh.n_sites, 2, 3))
        p = rng.standard_normal((mesh.n_sites, 2, 3))
        xi = rng.standard_normal((mesh.n_sites, 3))
        lhs = pairing(mesh, su2, p, d_a(mesh, su2, a, xi))
        J = red.moment_map(mesh, su2, a, p)
        rhs = mesh.integrate(np.einsum("ab,xa,xb->x", su2.pairing, J, xi))
        worst = max(worst, abs(lhs - rhs))
    checks.append(("moment_map_identity", worst, 1e-12))

    a = rng.standard_normal((mesh.n_sites, 2, 3))
    p = rng.standard_normal((mesh.n_sites, 2, 3))
    xi = rng.standard_normal((mesh.n_sites, 3))
    checks.append(("hamiltonian_action_gap",
                   red.hamiltonian_action_check(mesh, su2, a, p, xi), 1e-6))

    ab = al.build_algebra("abelian", n=1)
    mesh1 = CollarMesh(d=1, sites_per_dim=8, h=0.5, n_t=4, dt=0.1)
    n = mesh1.n_sites
    a1 = rng.standard_normal((n, 1, 1))
    p1 = rng.standard_normal((n, 1, 1))
    cols = []
    for i in range(n):
        u = np.zeros((n, 1, 1))
        u[i, 0, 0] = 1.0
        cols.append(red.moment_map(mesh1, ab, a1, u).reshape(-1))
    L = np.stack(cols, axis=1)
    corr, *_ = np.linalg.lstsq(L, L @ p1.reshape(-1), rcond=None)
    p1 = (p1.reshape(-1) - corr).reshape(n, 1, 1)

    def gauss_c(z):
        aa = z[: n].reshape(n, 1, 1)
        pp = z[n:].reshape(n, 1, 1)
        return red.moment_map(mesh1, ab, aa, pp).reshape(-1)

    om_b = np.zeros((2 * n, 2 * n))
    om_b[:n, n:] = mesh1.weight * np.eye(n)
    om_b[n:, :n] = -mesh1.weight * np.eye(n)
    z0 = np.concatenate([a1.reshape(-1), p1.reshape(-1)])
    ok_coiso, rep = red.coisotropy_check(gauss_c, om_b, z0)
    checks.append(("coisotropy_gauss_level", 0.0 if ok_coiso else 1.0, 0.5))

    om4 = np.zeros((4, 4))
    om4[0, 2] = om4[1, 3] = 1.0
    om4[2, 0] = om4[3, 1] = -1.0
    ok_ctrl, _ = red.coisotropy_check(lambda x: np.array([x[0], x[2]]),
                                      om4, np.zeros(4))
    checks.append(("coisotropy_symplectic_control", 1.0 if ok_ctrl else 0.0, 0.5))

    mesh2 = CollarMesh(d=2, sites_per_dim=8, h=2 * np.pi / 8, n_t=8, dt=0.1)
    nn, dd = mesh2.n_sites, 2

    def make_inputs(seed):
        r = np.random.default_rng(seed)
        a0 = 0.3 * r.standard_normal((mesh2.n_t, nn, 1))
        chi = r.standard_normal((nn, 1))
        a_init = mesh2.gradient(chi) + 0.2 * r.standard_normal((1, dd, 1)) \
            * np.ones((nn, dd, 1))
        beta = fl.skew_project(0.3 * r.standard_normal((mesh2.n_t, nn, dd, dd, 1)), 2, 3)
        return a0, a_init, np.zeros((nn, dd, 1)), beta

    base = red.solve_collar_abelian(mesh2, ab, *make_inputs(cfg.seed))
    phi_b, p_b, _ = fl.restrict_to_boundary(base)
    variations = []
    for s in range(10):
        sol = red.solve_collar_abelian(mesh2, ab, *make_inputs(cfg.seed + 1 + s))
        phi_v, p_v, _ = fl.restrict_to_boundary(sol)
        variations.append((phi_v[:, 1:, :] - phi_b[:, 1:, :], p_v - p_b))
    worst_omega, iso_rep = red.isotropy_check(mesh2, ab, phi_b[:, 1:, :], variations)
    checks.append(("isotropy_max_omega", worst_omega, 1e-8))

    rows = [(name, val, tol, val < tol) for name, val, tol in checks]
    write_checks(rows, outdir / "checks.jsonl")
    report.checks_figure([r[0] for r in rows], [r[1] for r in rows],
                         [r[2] for r in rows], outdir / "reduction.png")
    ok = all(r[3] for r in rows)
    lines = [f"{name}: value {val:.6e} tol {tol:.1e} {'PASS' if passed else 'FAIL'}"
             for name, val, tol, passed in rows]
    lines += [
        "gauss-level tangent dims: "
        f"T {rep['dim_tangent']}, T^omega {rep['dim_symplectic_orthogonal']}, "
        f"max principal angle sin {rep['max_principal_angle_sin']:.3e}",
        f"isotropy pairs checked: {iso_rep['pairs']}",
        f"check {'PASS' if ok else 'FAIL'}",
    ]
    return (0 if ok else 1), lines


_SCENARIO_FN = {
    "ym-evolve": _scenario_ym_evolve,
    "palatini-evolve": _scenario_palatini_evolve,
    "pca-analyze": _scenario_pca_analyze,
    "check-invariants": _scenario_check_invariants,
    "lambda-sweep": _scenario_lambda_sweep,
    "reduction-report": _scenario_reduction_report,
}

_SCENARIO_DEFAULTS = {
    "ym-evolve": dict(algebra_kind="su2", steps=50, dt=0.05, tol=1e-4),
    "palatini-evolve": dict(algebra_kind="so", algebra_d=1, steps=100,
                            dt=0.05, tol=1e-10),
    "pca-analyze": dict(algebra_kind="so", algebra_d=1, tol=1e-8),
    "check-invariants": dict(tol=1e-6),
    "lambda-sweep": dict(algebra_kind="su2", tol=0.2),
    "reduction-report": dict(tol=1e-6),
}


def run(cfg):
    """Execute a validated RunConfig; returns the process exit status."""
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    status, lines = _SCENARIO_FN[cfg.scenario](cfg, outdir)
    summary = [f"scenario: {cfg.scenario}", "", "configuration:",
               config_fingerprint(cfg), "", "results:"] + lines
    text = "\n".join(summary) + "\n"
    (outdir / "summary.txt").write_text(text)
    sys.stdout.write(text)
    return status


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="collardyn",
        description="boundary-collar gauge dynamics scenario runner")
    sub = parser.add_subparsers(dest="scenario", required=True)
    for name in SCENARIOS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="config file (strict keys)")
        sp.add_argument("--seed", type=int, help="RNG seed (required here or in config)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--tol", type=float, help="scenario tolerance")
        sp.add_argument("--steps", type=int, help="evolution steps")
        sp.add_argument("--amplitude", type=float, help="perturbation amplitude")
        sp.add_argument("--lambdas", help="comma-separated lambda list")
        sp.add_argument("--projection", choices=["on", "off"],
                        help="post-step constraint projection")
    args = parser.parse_args(argv)
    # precedence: scenario defaults < config file < command-line flags
    attr_to_file_key = {
        "algebra_kind": "algebra.kind", "algebra_d": "algebra.d",
        "dt": "mesh.dt", "steps": "run.steps", "tol": "run.tol",
        "amplitude": "run.amplitude", "lambdas": "run.lambdas",
        "projection": "run.projection", "out": "output.path",
    }
    try:
        file_values = read_config_file(args.config) if args.config else {}
        overrides = {
            attr: val
            for attr, val in _SCENARIO_DEFAULTS.get(args.scenario, {}).items()
            if attr_to_file_key.get(attr) not in file_values
        }
        for key in ("seed", "out", "tol", "steps", "amplitude"):
            val = getattr(args, key)
            if val is not None:
                overrides[key] = val
        if args.lambdas is not None:
            overrides["lambdas"] = tuple(
                float(v) for v in args.lambdas.replace(",", " ").split())
        if args.projection is not None:
            overrides["projection"] = args.projection == "on"
        cfg = build_run_config(args.scenario, file_values, **overrides)
    except (ConfigError, OSError) as err:
        parser.exit(2, f"collardyn: configuration error: {err}\n")
    try:
        return run(cfg)
    except RuntimeError as err:
        sys.stderr.write(f"collardyn: numerical failure: {err}\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
