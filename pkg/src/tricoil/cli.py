"""Command-line entry point: ``tricoil <subcommand> ...``.

Exit codes: 0 success, 1 error raised by a module, 2 usage error.
Degrees and millitesla are accepted here; everything internal is SI.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from tricoil import __version__
from tricoil.actuation import FieldLibrary, build_library
from tricoil.config import ConfigError, ToolConfig, default_config, load_config
from tricoil.libfile import LibraryFileError, atomic_write_bytes, read_library, write_library
from tricoil.loading import RotatingFieldSpec, gradient_depth_map, lift_depth_profile
from tricoil.mechanism import sweep
from tricoil.schedule import (TrajectorySpec, compare_modes, default_trajectory, merge_metrics,
                              metrics_summary, mode_label, parse_mode, simulate)
from tricoil.workspace import FeasibilitySpec, feasible_workspace

SCHEMA_VERSION = 1


def write_csv(path, header: list[str], rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    atomic_write_bytes(path, buf.getvalue().encode())


def write_json(path, obj: dict) -> None:
    obj = {"schema_version": SCHEMA_VERSION, **obj}
    atomic_write_bytes(path, (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode())


def _config(args) -> ToolConfig:
    return load_config(args.config) if getattr(args, "config", None) else default_config()


def _library(args, cfg: ToolConfig) -> FieldLibrary:
    path = getattr(args, "lib", None) or cfg.paths.get("library")
    if path and Path(path).exists():
        return read_library(path)
    if path:
        raise FileNotFoundError(f"library file not found: {path}")
    print("no --lib given; building library in memory", file=sys.stderr)
    return build_library(cfg.library_config())


def _out(args) -> Path:
    p = Path(args.out_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def cmd_build_library(args) -> int:
    cfg = _config(args)
    lib = build_library(cfg.library_config())
    digest = write_library(lib, args.out)
    print(f"wrote {args.out} (payload sha256 {digest})")
    return 0


def cmd_mechanism(args) -> int:
    cfg = _config(args)
    rows = sweep(cfg.linkage, cfg.clearance, args.n)
    out = [(s, math.degrees(t), ex, ez, zl) for s, t, ex, ez, zl in rows]
    write_csv(args.out, ["s_m", "theta_deg", "E_x_m", "E_z_m", "z_limit_m"], out)
    print(f"wrote {args.out} ({len(out)} rows)")
    return 0


def run_workspace(lib, theta_deg: float, spec: FeasibilitySpec, out: Path) -> dict:
    rep = feasible_workspace(lib, math.radians(theta_deg), spec)
    tag = f"{theta_deg:g}"
    write_csv(out / f"workspace_theta{tag}.csv", ["x_m", "y_m", "z_m", "B_min_T", "feasible"],
              ((*n, b, int(f)) for n, b, f in zip(rep.nodes, rep.b_min, rep.feasible)))
    write_csv(out / f"energy_profile_theta{tag}.csv", ["z_m", "log10_u_J_per_m3"], rep.energy_depth_profile)
    summary = {"theta_deg": theta_deg, "hull_volume_m3": rep.hull_volume,
               "feasible_count": rep.feasible_count, "node_count": int(rep.nodes.shape[0]),
               "B_req_T": spec.B_req, "I_max_A": spec.I_max, "sphere_samples": spec.sphere_samples}
    write_json(out / f"workspace_theta{tag}.json", summary)
    return {**summary, "energy_profile": rep.energy_depth_profile}


def cmd_workspace(args) -> int:
    cfg = _config(args)
    lib = _library(args, cfg)
    spec = FeasibilitySpec(args.imax, args.breq * 1e-3, args.samples)
    s = run_workspace(lib, args.theta, spec, _out(args))
    print(f"theta={args.theta:g} deg: hull volume {s['hull_volume_m3']:.4e} m^3, "
          f"{s['feasible_count']}/{s['node_count']} feasible nodes")
    return 0


def _axis_z(lib, theta_deg, step=1):
    return lib.slice_for(math.radians(theta_deg)).z[::step]


def cmd_gradient_map(args) -> int:
    cfg = _config(args)
    lib = _library(args, cfg)
    eps = np.radians(args.elevations)
    rows = gradient_depth_map(math.radians(args.theta), eps, _axis_z(lib, args.theta), lib,
                              args.b0 * 1e-3, args.imax, args.n_alpha)
    out = [(z, math.degrees(e), m) for z, e, m in rows]
    write_csv(args.out, ["z_m", "elevation_deg", "M_T_per_m"], out)
    print(f"wrote {args.out} ({len(out)} rows)")
    return 0


def cmd_lift_map(args) -> int:
    cfg = _config(args)
    lib = _library(args, cfg)
    spec = RotatingFieldSpec(B0=args.b0 * 1e-3, dipole_moment=cfg.robot.dipole_moment)
    rows = lift_depth_profile(math.radians(args.theta), spec, _axis_z(lib, args.theta), lib, args.imax)
    write_csv(args.out, ["z_m", "F_z_N"], rows)
    print(f"wrote {args.out} ({len(rows)} rows)")
    return 0


def _trajectory(args, cfg) -> TrajectorySpec:
    if getattr(args, "traj", None):
        data = json.loads(Path(args.traj).read_text())
        return TrajectorySpec.from_json(data)
    return default_trajectory()


def cmd_schedule_sim(args) -> int:
    cfg = _config(args)
    lib = _library(args, cfg)
    mode = parse_mode(args.mode, cfg.theta_schedule())
    traj = _trajectory(args, cfg).with_mode(mode)
    log = simulate(traj, cfg.robot, lib, cfg.simulation, cfg.clearance)
    out = _out(args)
    tag = mode_label(mode).replace(":", "")
    cols = log.columns()
    write_csv(out / f"simlog_{tag}.csv", list(cols), zip(*cols.values()))
    summary = metrics_summary(log, cfg.simulation, cfg.theta_schedule())
    write_json(out / f"metrics_{tag}.json", summary)
    print(f"{summary['mode']}: median E/B^2 {summary['median_E_over_B2_A2_per_T2']:.4e} A^2/T^2, "
          f"P(I_peak>=7A) {summary['P_Ipeak_ge_threshold']:.3f}")
    return 0


def comparison_rows(summaries: list[dict]) -> list[list]:
    rows = []
    for s in summaries:
        row = [s["mode"], s["median_E_over_B2_A2_per_T2"], s["P_Ipeak_ge_threshold"]]
        for name in ("deep", "mid", "shallow"):
            r = s["regimes"].get(name, {})
            row += [r.get("median_E_over_B2_A2_per_T2"), r.get("P_Ipeak_ge_threshold")]
        rows.append(row)
    return rows


COMPARE_HEADER = ["mode", "median_E_over_B2_A2_per_T2", "P_Ipeak_ge_7A",
                  "deep_median_E_over_B2", "deep_P", "mid_median_E_over_B2", "mid_P",
                  "shallow_median_E_over_B2", "shallow_P"]


def cmd_compare(args) -> int:
    summaries = merge_metrics([json.loads(Path(p).read_text()) for p in args.metrics])
    rows = comparison_rows(summaries)
    write_csv(args.out, COMPARE_HEADER, rows)
    for r in rows:
        print(f"{r[0]:>10s}  E/B^2={r[1]:.4e}  P={r[2]:.3f}")
    return 0


def cmd_report(args) -> int:
    from tricoil import plotting

    cfg = _config(args)
    lib = _library(args, cfg)
    out = _out(args)
    thetas = [math.degrees(t) for t in lib.theta_values]
    ws, profiles, gmaps, lifts = {}, {}, {}, {}
    for t in thetas:
        label = f"{t:g} deg"
        ws[label] = run_workspace(lib, t, cfg.feasibility, out)
        profiles[label] = ws[label].pop("energy_profile")
        z = _axis_z(lib, t, 2)
        gmaps[label] = gradient_depth_map(math.radians(t), np.radians([0, 30, 60, 90]), z, lib,
                                          1e-3, cfg.feasibility.I_max, 12)
        lifts[label] = lift_depth_profile(math.radians(t), RotatingFieldSpec(dipole_moment=cfg.robot.dipole_moment),
                                          z, lib, cfg.feasibility.I_max)
        write_csv(out / f"gradient_map_theta{t:g}.csv", ["z_m", "elevation_deg", "M_T_per_m"],
                  [(a, math.degrees(b), c) for a, b, c in gmaps[label]])
        write_csv(out / f"lift_map_theta{t:g}.csv", ["z_m", "F_z_N"], lifts[label])
    traj = _trajectory(args, cfg)
    modes = [math.radians(t) for t in cfg.schedule.thetas_deg] + [cfg.theta_schedule()]
    table = compare_modes(traj, cfg.robot, lib, modes, cfg.simulation, cfg.clearance)
    write_csv(out / "mode_comparison.csv", COMPARE_HEADER, comparison_rows(table))
    write_json(out / "report.json", {"workspace": list(ws.values()), "modes": table,
                                     "library": {"config_hash": lib.metadata.get("config_hash")}})
    figures = {
        "energy_profile.png": plotting.energy_profiles(profiles),
        "hull_volume.png": plotting.hull_volumes({k: v["hull_volume_m3"] for k, v in ws.items()}),
        "gradient_map.png": plotting.gradient_maps(gmaps),
        "lift_profile.png": plotting.lift_profiles(lifts),
        "mode_comparison.png": plotting.mode_comparison(table),
    }
    for name, data in figures.items():
        atomic_write_bytes(out / name, data)
    lines = ["# Coil-group analysis report", "", "## Feasible workspace", "",
             "| theta [deg] | hull volume [cm^3] | feasible nodes |", "|---|---|---|"]
    for v in ws.values():
        lines.append(f"| {v['theta_deg']:g} | {v['hull_volume_m3'] * 1e6:.3f} | {v['feasible_count']} |")
    lines += ["", "![](hull_volume.png)", "", "![](energy_profile.png)", "", "![](gradient_map.png)", "",
              "![](lift_profile.png)", "", "## Mode comparison", "",
              "| mode | median E/B^2 [A^2/T^2] | P(I_peak >= 7 A) | deep P | mid P | shallow P |",
              "|---|---|---|---|---|---|"]
    for r in comparison_rows(table):
        fmt = lambda v: "n/a" if v is None else f"{v:.3f}"  # noqa: E731
        lines.append(f"| {r[0]} | {r[1]:.4e} | {r[2]:.3f} | {fmt(r[4])} | {fmt(r[6])} | {fmt(r[8])} |")
    lines += ["", "![](mode_comparison.png)", ""]
    atomic_write_bytes(out / "report.md", "\n".join(lines).encode())
    print(f"report written to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tricoil", description="Reconfigurable three-coil analysis toolkit")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command")

    def common(sp, lib=True):
        sp.add_argument("--config", help="TOML configuration file")
        if lib:
            sp.add_argument("--lib", help="library file (built in memory when omitted)")

    sp = sub.add_parser("build-library", help="tabulate A and G over every workspace grid")
    common(sp, lib=False)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_build_library)

    sp = sub.add_parser("mechanism", help="linkage utilities")
    msub = sp.add_subparsers(dest="mech_command")
    sw = msub.add_parser("sweep", help="tabulate theta(s), tip position and z_limit")
    common(sw, lib=False)
    sw.add_argument("--n", type=int, default=101)
    sw.add_argument("--out", default="mechanism_sweep.csv")
    sw.set_defaults(func=cmd_mechanism)

    sp = sub.add_parser("workspace", help="B_min map, feasible set and hull volume")
    common(sp)
    sp.add_argument("--theta", type=float, required=True, help="deg")
    sp.add_argument("--breq", type=float, default=1.0, help="required field, mT")
    sp.add_argument("--imax", type=float, default=5.0, help="per-coil limit, A")
    sp.add_argument("--samples", type=int, default=512)
    sp.add_argument("--out-dir", default=".")
    sp.set_defaults(func=cmd_workspace)

    sp = sub.add_parser("gradient-map", help="azimuth-averaged gradient disturbance on the axis")
    common(sp)
    sp.add_argument("--theta", type=float, required=True, help="deg")
    sp.add_argument("--b0", type=float, default=1.0, help="mT")
    sp.add_argument("--imax", type=float, default=5.0)
    sp.add_argument("--elevations", type=float, nargs="+", default=[0, 15, 30, 45, 60, 75, 90], help="deg")
    sp.add_argument("--n-alpha", type=int, default=36)
    sp.add_argument("--out", default="gradient_map.csv")
    sp.set_defaults(func=cmd_gradient_map)

    sp = sub.add_parser("lift-map", help="cycle-averaged lift on the axis")
    common(sp)
    sp.add_argument("--theta", type=float, required=True, help="deg")
    sp.add_argument("--b0", type=float, default=1.0, help="mT")
    sp.add_argument("--imax", type=float, default=5.0)
    sp.add_argument("--out", default="lift_map.csv")
    sp.set_defaults(func=cmd_lift_map)

    sp = sub.add_parser("schedule-sim", help="simulate one mode on a trajectory")
    common(sp)
    sp.add_argument("--mode", required=True, help="fixed:<deg> or auto")
    sp.add_argument("--traj", help="trajectory JSON (default: built-in composite)")
    sp.add_argument("--out-dir", default=".")
    sp.set_defaults(func=cmd_schedule_sim)

    sp = sub.add_parser("compare", help="merge metrics JSON files into one table")
    sp.add_argument("metrics", nargs="+")
    sp.add_argument("--out", default="mode_comparison.csv")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("report", help="run the full pipeline and write tables and figures")
    common(sp)
    sp.add_argument("--traj")
    sp.add_argument("--out-dir", default="report")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ConfigError, LibraryFileError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
