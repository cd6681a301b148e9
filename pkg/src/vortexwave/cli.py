"""Command-line harness: simulate | twin | fixed | check-kernels | convergence.

Every command reads one TOML config, writes series.csv, a resolved
manifest and a 'key: value' report (plus a figure) into --out, and exits
0 when all enabled checks pass, 1 on a check failure, 2 on a config
error, 3 on a runtime failure (collision, blow-up).  Reports never
contain wall-clock values, so a rerun reproduces every delimited output
byte for byte.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from vortexwave import __version__
from vortexwave import diagnostics as diag
from vortexwave import plots
from vortexwave.config import (
    ConfigError,
    ScenarioConfig,
    constancy_targets,
    emit_config,
    load_config,
    refined,
    with_inner_radius,
    without_vortex_intensity,
)
from vortexwave.dynamics import (
    CollisionError,
    SimulationError,
    Trajectory,
    diff_grid,
    norm_grid,
    run,
    twin_states,
)
from vortexwave.field import harmonic_mean_value_defect, induced_velocity
from vortexwave.kernels import (
    al_modulus,
    biot_savart,
    blob_kernel,
    cutoff,
    regularized_kernel,
)
from vortexwave.output import (
    MANIFEST_NAME,
    REPORT_NAME,
    SERIES_NAME,
    atomic_write,
    write_report,
    write_timeseries,
)

EXIT_PASS = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_RUNTIME_ERROR = 3

EPS = np.finfo(np.float64).eps


def _series_rows(traj: Trajectory) -> list[dict]:
    rows = []
    for rec in traj.records:
        row = {
            "time": rec.time,
            "support_radius": rec.support_radius,
            "lp1": rec.lp1,
            "lp2": rec.lp2,
            "lp_inf": rec.lp_inf,
        }
        if rec.constancy is not None:
            for i, rho in enumerate(rec.constancy):
                row[f"constancy_{i}"] = rho
        if rec.min_vortex_marker_dist is not None:
            row["min_vortex_marker_dist"] = rec.min_vortex_marker_dist
        if rec.min_vortex_pair_dist is not None:
            row["min_vortex_pair_dist"] = rec.min_vortex_pair_dist
        if rec.hole_radius is not None:
            row["hole_radius"] = rec.hole_radius
        row["guard_events"] = rec.guard_events
        rows.append(row)
    return rows


def _check_margins(traj: Trajectory, entries: list, checks: list, label: str = "") -> None:
    times, margins, fit = diag.collision_margin(traj)
    tag = f"_{label}" if label else ""
    entries.append((f"min_margin{tag}", float(margins.min())))
    entries.append((f"guard_events{tag}", traj.guard_total))
    checks.append((f"margin_above_guard{tag}", fit.passed))


def _check_constancy(
    traj: Trajectory, entries: list, checks: list
) -> list[np.ndarray]:
    """Per-vortex constancy: exact value recheck inside the measured disk at
    every snapshot, then the radius-law fit.  Returns the rho series."""
    cfg = traj.config
    targets = constancy_targets(cfg)
    times = traj.times
    all_rho = []
    for i, (alpha, _cap) in enumerate(targets):
        rho = np.array([rec.constancy[i] for rec in traj.records])
        all_rho.append(rho)
        exact = True
        for snap, r in zip(traj.snapshots, rho):
            cloud = snap.state.cloud
            z = snap.state.vortex_pos[i]
            dist = np.hypot(cloud.pos[:, 0] - z[0], cloud.pos[:, 1] - z[1])
            inside = dist < r
            if inside.any() and np.max(np.abs(cloud.omega[inside] - alpha)) > cfg.diagnostics.constancy_tol:
                exact = False
                break
        checks.append((f"constancy_values_exact_{i}", exact))
        fit = diag.fit_constancy_constant(times, rho)
        entries.append((f"constancy_c_{i}", fit.constant))
        entries.append((f"constancy_residual_max_{i}", fit.residual_max))
        entries.append((f"constancy_rho_{i}_initial", float(rho[0])))
        entries.append((f"constancy_rho_{i}_final", float(rho[-1])))
        checks.append((f"constancy_affine_band_{i}", fit.passed))
    return all_rho


def cmd_simulate(cfg: ScenarioConfig, outdir: Path) -> tuple[list, list, list]:
    d = cfg.diagnostics
    traj = run(cfg)
    entries: list = [("command", "simulate"), ("mode", cfg.mode)]
    checks: list = []
    entries.append(("markers", traj.snapshots[0].state.cloud.n))
    entries.append(("steps", cfg.n_steps))
    times = traj.times

    if d.lp_check:
        d1 = diag.lp_drift(traj, 1)
        d2 = diag.lp_drift(traj, 2)
        entries += [("lp1_drift", d1), ("lp2_drift", d2)]
        checks.append(("lp_drift_within_tol", d1 <= d.lp_tol and d2 <= d.lp_tol))
    if d.support_check:
        radii = np.array([rec.support_radius for rec in traj.records])
        fit = diag.support_growth_fit(times, radii, cfg.h)
        entries += [
            ("support_slope", fit.slope),
            ("support_residual_max", fit.residual_max),
        ]
        checks.append(("support_affine_within_2h", fit.passed))
    if d.profile_check:
        patch = cfg.patches[0]
        a, wbar = patch.radius, patch.value
        cloud0 = traj.snapshots[0].state.cloud
        rel = []
        for frac in (0.2, 0.4, 0.6):
            r = frac * a
            theta = np.linspace(0.0, 2.0 * np.pi, 12, endpoint=False)
            pts = np.array(patch.center) + r * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
            speed = np.hypot(*induced_velocity(cloud0, pts).T)
            rel.append(np.max(np.abs(speed - wbar * r / 2.0) / (wbar * r / 2.0)))
        entries.append(("profile_speed_max_rel_err", float(max(rel))))
        checks.append(("interior_speed_profile", max(rel) <= d.profile_tol))
    if d.constancy:
        _check_constancy(traj, entries, checks)
        if d.refine_check:
            fine = run(refined(cfg))
            coarse_fit = diag.fit_constancy_constant(
                times, [rec.constancy[0] for rec in traj.records]
            )
            fine_fit = diag.fit_constancy_constant(
                fine.times, [rec.constancy[0] for rec in fine.records]
            )
            entries.append(("constancy_c_fine", fine_fit.constant))
            stable = abs(fine_fit.constant - coarse_fit.constant) <= d.refine_tol * abs(
                coarse_fit.constant
            )
            checks.append(("constancy_c_stable", stable and fine_fit.passed))
            _check_margins(fine, entries, checks, label="fine")
    if d.margin_check:
        _check_margins(traj, entries, checks)
    if d.pair_return:
        z0 = traj.snapshots[0].state.vortex_pos
        zt = traj.snapshots[-1].state.vortex_pos
        rho = float(np.hypot(*(z0[0] - z0[1]))) / 2.0
        err = float(np.max(np.hypot(*(zt - z0).T)))
        entries += [("pair_return_error", err), ("pair_half_separation", rho)]
        checks.append(("pair_return_within_tol", err <= d.pair_return_tol * rho))
    if d.pair_distance_check:
        dists = np.array([rec.min_vortex_pair_dist for rec in traj.records])
        entries += [
            ("pair_dist_initial", float(dists[0])),
            ("pair_dist_min", float(dists.min())),
        ]
        checks.append(
            ("pair_distance_above_half_initial", dists.min() >= d.pair_distance_factor * dists[0])
        )
    if d.margin_family:
        m0s, mts = [], []
        for inner in d.margin_family:
            fam_cfg = with_inner_radius(cfg, inner)
            fam = run(fam_cfg)
            m = np.array([rec.min_vortex_marker_dist for rec in fam.records])
            m0s.append(float(m[0]))
            mts.append(float(m[-1]))
            entries.append((f"family_margin_{inner:g}_initial", float(m[0])))
            entries.append((f"family_margin_{inner:g}_final", float(m[-1])))
        fit = diag.collision_exponent(m0s, mts)
        entries.append(("margin_exponent", fit.constant))
        checks.append(
            ("margin_exponent_above_min", fit.passed and fit.constant >= d.exponent_min)
        )

    rows = _series_rows(traj)
    write_timeseries(rows, outdir / SERIES_NAME)
    from vortexwave.output import read_timeseries

    plots.plot_simulation(read_timeseries(outdir / SERIES_NAME), outdir / "diagnostics.png")
    return entries, checks, rows


def cmd_twin(cfg: ScenarioConfig, outdir: Path, eta_override: float | None) -> tuple[list, list, list]:
    d = cfg.diagnostics
    if eta_override is not None:
        etas = [eta_override]
    elif d.eta_ladder:
        etas = list(d.eta_ladder)
    elif cfg.output.eta > 0.0:
        etas = [cfg.output.eta]
    else:
        raise ConfigError("twin command needs --eta, [diagnostics] eta_ladder or [output] eta")
    if not cfg.vortices:
        raise ConfigError("twin command needs at least one vortex to perturb")

    entries: list = [("command", "twin"), ("etas", " ".join(f"{e:g}" for e in etas))]
    checks: list = []
    base = run(cfg)
    grid = diff_grid(cfg)
    twins = []
    series = []
    for eta in etas:
        _, t0 = twin_states(cfg, eta)
        twin_traj = run(cfg, initial=t0)
        twins.append(twin_traj)
        series.append(diag.twin_divergence(base, twin_traj, grid))

    r_final = [float(s.r[-1]) for s in series]
    for eta, s, rt in zip(etas, series, r_final):
        entries.append((f"r_initial_eta_{eta:g}", float(s.r[0])))
        entries.append((f"r_final_eta_{eta:g}", rt))
        checks.append((f"r_initial_matches_eta_sq_{eta:g}", abs(s.r[0] - eta * eta) <= 1e-12))
    if len(etas) > 1:
        decreasing = all(r_final[i + 1] < r_final[i] for i in range(len(etas) - 1))
        checks.append(("r_final_strictly_decreasing", decreasing))
        ratios = [r_final[i] / r_final[i + 1] for i in range(len(etas) - 1)]
        for eta, ratio in zip(etas[:-1], ratios):
            entries.append((f"r_ratio_after_eta_{eta:g}", ratio))
        checks.append(("r_ratio_above_min", min(ratios) >= d.twin_ratio_min))

    if d.margin_check:
        _check_margins(base, entries, checks, label="base")
        for eta, tw in zip(etas, twins):
            _check_margins(tw, entries, checks, label=f"eta_{eta:g}")
    if d.constancy:
        _check_constancy(base, entries, checks)

    if d.harmonic_check:
        if not d.constancy:
            raise ConfigError("harmonic_check needs the constancy measurement enabled")
        alpha = constancy_targets(cfg)[0][0]
        worst = -np.inf
        worst_defect = 0.0
        ok = True
        matched = True
        for tw, s in zip(twins, series):
            for k in range(len(s.times)):
                sa = base.snapshots[k].state
                sb = tw.snapshots[k].state
                za, zb = sa.vortex_pos[0], sb.vortex_pos[0]
                mid = 0.5 * (za + zb)
                sep = float(np.hypot(*(za - zb)))
                rho_joint = min(base.records[k].constancy[0], tw.records[k].constancy[0]) - sep
                if rho_joint <= 0.0:
                    ok = False
                    break
                # the difference field is harmonic on the joint disk because
                # no vorticity difference lives there; discretely, markers
                # inside the disk are index-matched pairs carrying the same
                # constant value (asserted below), so only the exterior
                # pairs induce a field worth measuring
                ca, cb, inside = diag.exterior_pair_clouds(
                    sa.cloud, sb.cloud, mid, rho_joint
                )
                tol = d.constancy_tol
                if inside.any() and (
                    np.max(np.abs(sa.cloud.omega[inside] - alpha)) > tol
                    or np.max(np.abs(sb.cloud.omega[inside] - alpha)) > tol
                ):
                    matched = False
                defect = harmonic_mean_value_defect(
                    lambda pts: induced_velocity(ca, pts) - induced_velocity(cb, pts),
                    mid,
                    rho_joint / 4.0,
                    d.harmonic_samples,
                )
                bound = d.harmonic_rel * float(np.sqrt(s.vel_sq[k])) + d.harmonic_floor
                worst = max(worst, defect - bound)
                worst_defect = max(worst_defect, defect)
                if defect > bound:
                    ok = False
        entries.append(("harmonic_defect_worst", worst_defect))
        entries.append(("harmonic_excess_worst", worst))
        checks.append(("harmonic_mean_value", ok and matched))

    rows = []
    base_rows = _series_rows(base)
    for k, row in enumerate(base_rows):
        merged = dict(row)
        for i, s in enumerate(series):
            merged[f"r_{i}"] = float(s.r[k])
            merged[f"vel_sq_{i}"] = float(s.vel_sq[k])
            merged[f"vortex_sq_{i}"] = float(s.vortex_sq[k])
        rows.append(merged)
    write_timeseries(rows, outdir / SERIES_NAME)
    from vortexwave.output import read_timeseries

    plots.plot_twin(read_timeseries(outdir / SERIES_NAME), etas, outdir / "twin.png")
    return entries, checks, rows


def cmd_fixed(cfg: ScenarioConfig, outdir: Path) -> tuple[list, list, list]:
    d = cfg.diagnostics
    traj = run(cfg)
    entries: list = [("command", "fixed"), ("gamma", cfg.vortices[0].intensity)]
    checks: list = []
    if d.hole_check:
        times, radii, fit = diag.hole_radius(traj)
        entries += [
            ("hole_initial", float(radii[0])),
            ("hole_final", float(radii[-1])),
            ("hole_decay_rate", fit.constant),
        ]
        checks.append(("hole_above_affine_bound", fit.passed))
    if d.margin_check:
        _check_margins(traj, entries, checks)
    if d.control_check:
        control = run(without_vortex_intensity(cfg))
        _, cr, _ = diag.hole_radius(control)
        drift = float(np.max(np.abs(cr - cr[0])))
        entries.append(("control_hole_drift", drift))
        checks.append(("control_hole_constant", drift <= d.control_tol))

    rows = _series_rows(traj)
    write_timeseries(rows, outdir / SERIES_NAME)
    from vortexwave.output import read_timeseries

    plots.plot_simulation(read_timeseries(outdir / SERIES_NAME), outdir / "hole.png")
    return entries, checks, rows


def cmd_check_kernels(outdir: Path) -> tuple[list, list, list]:
    entries: list = [("command", "check-kernels")]
    checks: list = []
    rng = np.random.default_rng(1789)

    x = rng.uniform(-3.0, 3.0, (10**6, 2))
    x = x[np.hypot(x[:, 0], x[:, 1]) > 1e-9]
    k = biot_savart(x)
    dot = np.abs(x[:, 0] * k[:, 0] + x[:, 1] * k[:, 1])
    scale = np.hypot(x[:, 0], x[:, 1]) * np.hypot(k[:, 0], k[:, 1])
    entries.append(("orthogonality_samples", len(x)))
    entries.append(("orthogonality_max_ratio", float(np.max(dot / (4.0 * EPS * scale)))))
    checks.append(("orthogonality_within_4eps", bool(np.all(dot <= 4.0 * EPS * scale))))

    def fd_div(kernel, pts, step=1e-5):
        e1 = np.array([step, 0.0])
        e2 = np.array([0.0, step])
        div = (kernel(pts + e1)[:, 0] - kernel(pts - e1)[:, 0]) / (2 * step) + (
            kernel(pts + e2)[:, 1] - kernel(pts - e2)[:, 1]
        ) / (2 * step)
        return float(np.max(np.abs(div)))

    r = rng.uniform(0.3, 2.5, 400)
    th = rng.uniform(0.0, 2.0 * np.pi, 400)
    pts = np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)
    eps_reg, delta = 0.5, 0.13
    inner_r = rng.uniform(0.1, 0.4, 200)
    inner = np.stack([inner_r * np.cos(th[:200]), inner_r * np.sin(th[:200])], axis=-1)
    divs = {
        "biot_savart": fd_div(biot_savart, pts),
        "regularized_outside": fd_div(lambda p: regularized_kernel(p, eps_reg), pts),
        "regularized_inside": fd_div(lambda p: regularized_kernel(p, eps_reg), inner),
        "blob": fd_div(lambda p: blob_kernel(p, delta), pts),
    }
    for name, val in divs.items():
        entries.append((f"fd_divergence_{name}", val))
    checks.append(("fd_divergence_below_1e6", max(divs.values()) < 1e-6))

    rm = rng.uniform(eps_reg, 4.0, 10**4)
    thm = rng.uniform(0.0, 2.0 * np.pi, 10**4)
    xm = np.stack([rm * np.cos(thm), rm * np.sin(thm)], axis=-1)
    checks.append(
        ("match_region_bitwise", bool(np.array_equal(regularized_kernel(xm, eps_reg), biot_savart(xm))))
    )

    t = np.geomspace(1e-12, 1.0, 400)
    worst = -np.inf
    for p in (1.5, 2.0, 3.0, 4.0, 8.0, 16.0, 64.0):
        worst = max(worst, float(np.max(al_modulus(t) - p * t ** (1.0 - 1.0 / p))))
    entries.append(("est_inequality_max_violation", worst))
    checks.append(("est_inequality_holds", worst <= 1e-12))

    xc = rng.uniform(-1.0, 1.0, (2000, 2))
    xc = xc[np.hypot(xc[:, 0], xc[:, 1]) > 1e-3]
    _, grad = cutoff(xc, 0.8)
    kc = biot_savart(xc)
    cross = np.abs(kc[:, 0] * grad[:, 0] + kc[:, 1] * grad[:, 1])
    cscale = np.hypot(kc[:, 0], kc[:, 1]) * np.hypot(grad[:, 0], grad[:, 1])
    ok = bool(np.all(cross <= 4.0 * EPS * np.maximum(cscale, 1e-300)))
    checks.append(("cutoff_gradient_orthogonal_to_kernel", ok))

    two_over_e = float(al_modulus(np.exp(-1.0)))
    entries.append(("modulus_at_inv_e", two_over_e))
    checks.append(("modulus_value_2_over_e", abs(two_over_e - 2.0 / np.e) <= 4.0 * EPS))

    rows = [
        {"sample": "orthogonality_max_ratio", "value": float(np.max(dot / (4.0 * EPS * scale)))},
        {"sample": "fd_divergence_max", "value": max(divs.values())},
        {"sample": "est_violation_max", "value": worst},
    ]
    write_timeseries(rows, outdir / SERIES_NAME)
    plots.plot_kernels(outdir / "kernels.png")
    return entries, checks, rows


def _battery(cfg: ScenarioConfig) -> list[diag.TestFunction]:
    t_end = cfg.t_end
    r = cfg.initial_support_radius
    tc, ts = 0.5 * t_end, 0.4 * t_end
    cx, cy = cfg.support_center
    spots = [
        (0.0, 0.0, 1.2),
        (0.35, 0.0, 0.8),
        (-0.25, 0.2, 0.7),
        (0.0, -0.4, 0.9),
        (0.3, 0.3, 0.6),
    ]
    return [
        diag.TestFunction((cx + a * r, cy + b * r), s * r, tc, ts) for a, b, s in spots
    ]


def halved(cfg: ScenarioConfig) -> ScenarioConfig:
    """One refinement level: h and dt halved together, stride unchanged so
    the snapshot interval halves too.  r_guard stays fixed: it defines the
    regularized system being solved, and refining the discretization of a
    moving target would leave nothing to converge to (the rotation rate
    under the guard scales like 1/r_guard^2)."""
    return dataclasses.replace(
        cfg,
        h=cfg.h / 2.0,
        dt=cfg.dt / 2.0,
        blob_delta=cfg.blob_delta / 2.0,
        output=dataclasses.replace(cfg.output, norm_spacing=cfg.output.norm_spacing / 2.0),
    )


def cmd_convergence(cfg: ScenarioConfig, outdir: Path, levels: int) -> tuple[list, list, list]:
    if levels < 2:
        raise ConfigError("convergence needs at least 2 levels")
    psis = _battery(cfg)
    entries: list = [("command", "convergence"), ("levels", levels)]
    checks: list = []
    rows = []
    residuals = []
    level_cfg = cfg
    for level in range(levels):
        traj = run(level_cfg)
        res = diag.weak_residual_battery(traj, psis, norm_grid(level_cfg))
        residuals.append(res)
        row = {"level": level, "h": level_cfg.h, "dt": level_cfg.dt}
        for m, v in enumerate(res):
            row[f"psi_{m}"] = float(v)
        rows.append(row)
        level_cfg = halved(level_cfg)
    residuals = np.array(residuals)
    for m in range(residuals.shape[1]):
        col = np.abs(residuals[:, m])
        ratios = col[:-1] / col[1:]
        entries.append((f"psi_{m}_min_ratio", float(ratios.min())))
        checks.append((f"psi_{m}_decreasing_by_1p5", bool(np.all(ratios >= 1.5))))

    write_timeseries(rows, outdir / SERIES_NAME)
    h_levels = [cfg.h / 2**lv for lv in range(levels)]
    plots.plot_convergence(h_levels, residuals, outdir / "residuals.png")
    return entries, checks, rows


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vortexwave",
        description="vortex-wave simulator: marker-cloud Euler flow coupled to point vortices",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind, need_config in [
        ("simulate", True),
        ("twin", True),
        ("fixed", True),
        ("convergence", True),
        ("check-kernels", False),
    ]:
        p = sub.add_parser(kind)
        if need_config:
            p.add_argument("--config", required=True, help="TOML scenario file")
        p.add_argument("--out", required=True, help="output directory")
        if kind == "twin":
            p.add_argument("--eta", type=float, default=None, help="override perturbation size")
        if kind == "convergence":
            p.add_argument("--levels", type=int, default=3, help="refinement levels")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors
        return int(exc.code or 0)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    cfg = None
    meta = {"version": __version__, "command": args.kind}
    try:
        if args.kind != "check-kernels":
            cfg = load_config(args.config)
        if args.kind == "twin" and args.eta is not None:
            meta["eta"] = args.eta
        if args.kind == "convergence":
            meta["levels"] = args.levels
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    if cfg is not None:
        atomic_write(outdir / MANIFEST_NAME, emit_config(cfg, meta))
    else:
        atomic_write(outdir / MANIFEST_NAME, f'[meta]\nversion = "{__version__}"\ncommand = "{args.kind}"\n')

    try:
        if args.kind == "simulate":
            entries, checks, _ = cmd_simulate(cfg, outdir)
        elif args.kind == "twin":
            entries, checks, _ = cmd_twin(cfg, outdir, args.eta)
        elif args.kind == "fixed":
            entries, checks, _ = cmd_fixed(cfg, outdir)
        elif args.kind == "convergence":
            entries, checks, _ = cmd_convergence(cfg, outdir, args.levels)
        else:
            entries, checks, _ = cmd_check_kernels(outdir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except (CollisionError, SimulationError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        write_report([("command", args.kind), ("error", str(exc))], outdir / REPORT_NAME)
        return EXIT_RUNTIME_ERROR

    ok = all(v for _, v in checks)
    report = entries + checks + [("overall", ok)]
    write_report(report, outdir / REPORT_NAME)
    return EXIT_PASS if ok else EXIT_CHECK_FAILED


if __name__ == "__main__":  # pragma: no cover - exercised via the console script
    raise SystemExit(main())
