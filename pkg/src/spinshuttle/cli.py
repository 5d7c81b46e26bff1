"""Command-line front end: generation, sweeps, optimization, statistics.

Subcommands
-----------
generate   draw valley landscapes and summarize their statistics
simulate   constant-speed sweeps over (v, T1v, kappa_z) for landscape files
optimize   trajectory optimization campaigns over landscape files
stats      percentile tables (and optional plots) from result files
diagnose   closed-form dephasing and hotspot diagnostics

Every command writes its outputs plus a ``manifest.json`` with the config
snapshot, per-task seeds, wall times and sha256 digests of all files, so a
run can be reproduced and checked bit for bit.  Exit codes: 0 success,
1 any task failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import HotspotParams, dephasing_channel_fidelity, ensemble_percentiles, hotspot_infidelity, motional_narrowing_Tphi
from .dynamics import SimulationResult, load_result, save_result, simulate
from .landscape import generate_landscape, landscape_stats, load_landscape, save_landscape
from .optimize import OptimizationProblem, cost, optimize
from .params import Config, PhysicalParams, load_config, params_digest
from .trajectory import ShuttleTrajectory

RESULT_SCHEMA = "spinshuttle-result v1"


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _config_snapshot(config: Config) -> dict:
    return {
        section: dataclasses.asdict(getattr(config, section))
        for section in ("physical", "well", "simulation", "optimizer")
    }


class Manifest:
    def __init__(self, command: str, config: Config, args_echo: dict):
        self.data = {
            "tool": "spinshuttle",
            "version": __version__,
            "command": command,
            "config": _config_snapshot(config),
            "args": args_echo,
            "inputs": {},
            "tasks": [],
        }

    def add_input(self, path) -> None:
        self.data["inputs"][str(path)] = _sha256(path)

    def add_task(self, label, wall_time_s, outputs, seed=None, error=None) -> None:
        self.data["tasks"].append(
            {
                "label": label,
                "seed": seed,
                "wall_time_s": round(wall_time_s, 6),
                "outputs": {str(p): _sha256(p) for p in outputs},
                "error": error,
            }
        )

    def write(self, out_dir: Path) -> None:
        _atomic_write(out_dir / "manifest.json", json.dumps(self.data, indent=2, sort_keys=True))


def _physical_with(config: Config, T1v=None, kappa_z=None) -> PhysicalParams:
    p = config.physical
    kwargs = {}
    if T1v is not None:
        kwargs["T1v"] = T1v
    if kappa_z is not None:
        kwargs["kappa_z"] = kappa_z
    return dataclasses.replace(p, **kwargs) if kwargs else p


# -- generate -----------------------------------------------------------------

def _generate_one(args):
    well_dict, seed, out_dir = args
    from .params import WellParams

    well = WellParams(**well_dict)
    t0 = time.perf_counter()
    lsc = generate_landscape(well, seed)
    path = Path(out_dir) / f"landscape_{seed:06d}.csv"
    tmp = path.with_name(path.name + ".tmp")
    save_landscape(lsc, tmp)
    os.replace(tmp, path)
    st = landscape_stats(lsc)
    return {
        "seed": seed,
        "path": str(path),
        "wall_time_s": time.perf_counter() - t0,
        "ev_mean_ueV": st.ev_mean_ueV,
        "ev_std_ueV": st.ev_std_ueV,
        "minima_count": st.minima_count,
        "mean_minima_spacing_nm": st.mean_minima_spacing_nm,
    }


def cmd_generate(config: Config, n: int, seed_base: int, out_dir: Path, jobs: int) -> int:
    if n < 1:
        print("error: nothing to generate (need at least one landscape)", file=sys.stderr)
        return 2
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest("generate", config, {"n": n, "seed_base": seed_base})
    well_dict = dataclasses.asdict(config.well)
    tasks = [(well_dict, seed_base + i, str(out_dir)) for i in range(n)]
    rows = _run_tasks(_generate_one, tasks, jobs)
    failures = [r for r in rows if isinstance(r, Exception)]
    rows = [r for r in rows if not isinstance(r, Exception)]
    rows.sort(key=lambda r: r["seed"])
    lines = ["seed,ev_mean_ueV,ev_std_ueV,minima_count,mean_minima_spacing_nm"]
    for r in rows:
        lines.append(
            f"{r['seed']},{r['ev_mean_ueV']:.6f},{r['ev_std_ueV']:.6f},"
            f"{r['minima_count']},{r['mean_minima_spacing_nm']:.6f}"
        )
    if rows:
        means = np.array([r["ev_mean_ueV"] for r in rows])
        stds = np.array([r["ev_std_ueV"] for r in rows])
        counts = np.array([r["minima_count"] for r in rows])
        lines.append(
            f"# ensemble: ev_mean {means.mean():.3f} ueV, ev_std {stds.mean():.3f} ueV, "
            f"minima {counts.mean():.1f}"
        )
    summary = out_dir / "generation_stats.csv"
    _atomic_write(summary, "\n".join(lines) + "\n")
    for r in rows:
        manifest.add_task(f"landscape {r['seed']}", r["wall_time_s"], [r["path"]], seed=r["seed"])
    manifest.add_task("summary", 0.0, [summary])
    manifest.write(out_dir)
    for err in failures:
        print(f"error: {err}", file=sys.stderr)
    print(f"generated {len(rows)}/{n} landscapes in {out_dir}")
    return 1 if failures else 0


# -- simulate -------------------------------------------------------------------

def _simulate_one(args):
    (landscape_path, v, t1v, kappa_z, physical_dict, record_points, out_dir) = args
    lsc = load_landscape(landscape_path)
    physical = PhysicalParams(**physical_dict)
    physical = dataclasses.replace(physical, T1v=t1v, kappa_z=kappa_z)
    traj = ShuttleTrajectory(v=v, L=lsc.well.device_length)
    t0 = time.perf_counter()
    res = simulate(lsc, traj, physical, record_points=record_points)
    name = f"sim_s{lsc.seed:06d}_v{v:g}_T{t1v:g}_k{kappa_z:g}.csv"
    path = Path(out_dir) / name
    tmp = path.with_name(path.name + ".tmp")
    save_result(res, tmp)
    os.replace(tmp, path)
    return {
        "seed": lsc.seed,
        "v": v,
        "T1v": t1v,
        "kappa_z": kappa_z,
        "path": str(path),
        "input": str(landscape_path),
        "wall_time_s": time.perf_counter() - t0,
        "final_infidelity": res.final_infidelity,
        "final_p_excited": float(res.p_excited[-1]),
        "final_purity_total": float(res.purity_total[-1]),
        "final_purity_spin": float(res.purity_spin[-1]),
    }


def cmd_simulate(config: Config, landscape_files, v_list, t1v_list, kz_list,
                 out_dir: Path, jobs: int) -> int:
    if not landscape_files:
        print("error: no landscape files given", file=sys.stderr)
        return 2
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(
        "simulate", config,
        {"landscapes": [str(p) for p in landscape_files],
         "v": v_list, "T1v": t1v_list, "kappa_z": kz_list},
    )
    well_digest = params_digest(config.well)
    for path in landscape_files:
        manifest.add_input(path)
        header_digest = load_landscape(path).params_digest
        if header_digest != well_digest:
            print(
                f"warning: {path} was generated with different well parameters "
                f"(digest {header_digest} != config {well_digest})",
                file=sys.stderr,
            )
    physical_dict = dataclasses.asdict(config.physical)
    tasks = [
        (str(path), v, t1v, kz, physical_dict, config.simulation.record_points, str(out_dir))
        for path in landscape_files for v in v_list for t1v in t1v_list for kz in kz_list
    ]
    rows = _run_tasks(_simulate_one, tasks, jobs)
    failures = [r for r in rows if isinstance(r, Exception)]
    rows = [r for r in rows if not isinstance(r, Exception)]
    rows.sort(key=lambda r: (r["seed"], r["v"], r["T1v"], r["kappa_z"]))
    lines = ["seed,v_m_per_s,T1v_ns,kappa_z_meV,final_infidelity,final_p_excited,"
             "final_purity_total,final_purity_spin,result_file"]
    for r in rows:
        lines.append(
            f"{r['seed']},{r['v']:.17g},{r['T1v']:.17g},{r['kappa_z']:.17g},"
            f"{r['final_infidelity']:.17g},{r['final_p_excited']:.17g},"
            f"{r['final_purity_total']:.17g},{r['final_purity_spin']:.17g},"
            f"{Path(r['path']).name}"
        )
    summary = out_dir / "simulate_summary.csv"
    _atomic_write(summary, "\n".join(lines) + "\n")
    for r in rows:
        manifest.add_task(
            f"simulate seed={r['seed']} v={r['v']} T1v={r['T1v']} kz={r['kappa_z']}",
            r["wall_time_s"], [r["path"]], seed=r["seed"],
        )
    manifest.add_task("summary", 0.0, [summary])
    manifest.write(out_dir)
    for err in failures:
        print(f"error: {err}", file=sys.stderr)
    print(f"simulated {len(rows)}/{len(tasks)} runs in {out_dir}")
    return 1 if failures else 0


# -- optimize ---------------------------------------------------------------------

def _optimize_one(args):
    (landscape_path, v, M, t1v, kappa_z, physical_dict, opt_dict, record_points, out_dir) = args
    lsc = load_landscape(landscape_path)
    physical = PhysicalParams(**physical_dict)
    physical = dataclasses.replace(physical, T1v=t1v, kappa_z=kappa_z)
    problem = OptimizationProblem(
        landscape=lsc, params=physical, v=v, L=lsc.well.device_length, M=M,
        gradient_mode=opt_dict["gradient_mode"], grad_tol=opt_dict["grad_tol"],
        cost_tol=opt_dict["cost_tol"], max_iter=opt_dict["max_iter"],
        memory=opt_dict["memory"],
    )
    t0 = time.perf_counter()
    baseline = cost(np.zeros(M), problem)
    opt = optimize(problem)
    traj = problem.trajectory(opt.u_star)
    res = simulate(lsc, traj, problem.effective_params(), record_points=record_points)
    stem = f"opt_s{lsc.seed:06d}_v{v:g}_M{M}_T{t1v:g}_k{kappa_z:g}"
    log_path = Path(out_dir) / f"{stem}.log.csv"
    log_lines = ["iter,cost,grad_norm"]
    for i, (c, g) in enumerate(zip(opt.cost_history, opt.grad_norm_history or
                                   [float("nan")] * len(opt.cost_history))):
        log_lines.append(f"{i},{c:.17g},{g:.17g}")
    _atomic_write(log_path, "\n".join(log_lines) + "\n")
    res_path = Path(out_dir) / f"{stem}.result.csv"
    tmp = res_path.with_name(res_path.name + ".tmp")
    save_result(res, tmp)
    os.replace(tmp, res_path)
    return {
        "seed": lsc.seed, "v": v, "M": M, "T1v": t1v, "kappa_z": kappa_z,
        "input": str(landscape_path),
        "paths": [str(log_path), str(res_path)],
        "wall_time_s": time.perf_counter() - t0,
        "baseline_infidelity": baseline,
        "optimized_infidelity": opt.cost,
        "final_spin_purity": float(res.purity_spin[-1]),
        "n_cost_evals": opt.n_cost_evals,
        "termination": opt.termination,
        "u_star": list(map(float, opt.u_star)),
    }


def cmd_optimize(config: Config, landscape_files, v_list, m_list, t1v_list, kz_list,
                 out_dir: Path, jobs: int) -> int:
    if not landscape_files:
        print("error: no landscape files given", file=sys.stderr)
        return 2
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(
        "optimize", config,
        {"landscapes": [str(p) for p in landscape_files],
         "v": v_list, "M": m_list, "T1v": t1v_list, "kappa_z": kz_list},
    )
    for path in landscape_files:
        manifest.add_input(path)
    physical_dict = dataclasses.asdict(config.physical)
    opt_dict = dataclasses.asdict(config.optimizer)
    tasks = [
        (str(path), v, M, t1v, kz, physical_dict, opt_dict,
         config.simulation.record_points, str(out_dir))
        for path in landscape_files for v in v_list for M in m_list
        for t1v in t1v_list for kz in kz_list
    ]
    rows = _run_tasks(_optimize_one, tasks, jobs)
    failures = [r for r in rows if isinstance(r, Exception)]
    rows = [r for r in rows if not isinstance(r, Exception)]
    rows.sort(key=lambda r: (r["seed"], r["v"], r["M"], r["T1v"], r["kappa_z"]))
    lines = ["seed,v_m_per_s,M,T1v_ns,kappa_z_meV,baseline_infidelity,"
             "optimized_infidelity,final_spin_purity,n_cost_evals,termination,u_star_nm"]
    for r in rows:
        u_text = ";".join(f"{c:.17g}" for c in r["u_star"])
        lines.append(
            f"{r['seed']},{r['v']:.17g},{r['M']},{r['T1v']:.17g},{r['kappa_z']:.17g},"
            f"{r['baseline_infidelity']:.17g},{r['optimized_infidelity']:.17g},"
            f"{r['final_spin_purity']:.17g},{r['n_cost_evals']},{r['termination']},"
            f"\"{u_text}\""
        )
    summary = out_dir / "optimize_summary.csv"
    _atomic_write(summary, "\n".join(lines) + "\n")
    # percentile table of optimized infidelity versus M for each (v, T1v, kz)
    ptab = ["v_m_per_s,M,T1v_ns,kappa_z_meV,quantile,optimized_infidelity"]
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["v"], r["M"], r["T1v"], r["kappa_z"]), []).append(
            r["optimized_infidelity"]
        )
    for (v, M, t1v, kz), values in sorted(groups.items()):
        stats = ensemble_percentiles(np.asarray(values))
        for q in stats.quantiles:
            ptab.append(f"{v:.17g},{M},{t1v:.17g},{kz:.17g},{q:g},{float(stats.quantile(q)):.17g}")
    ptable = out_dir / "optimize_percentiles.csv"
    _atomic_write(ptable, "\n".join(ptab) + "\n")
    for r in rows:
        manifest.add_task(
            f"optimize seed={r['seed']} v={r['v']} M={r['M']}",
            r["wall_time_s"], r["paths"], seed=r["seed"],
        )
    manifest.add_task("summary", 0.0, [summary, ptable])
    manifest.write(out_dir)
    for err in failures:
        print(f"error: {err}", file=sys.stderr)
    print(f"optimized {len(rows)}/{len(tasks)} runs in {out_dir}")
    return 1 if failures else 0


# -- stats ------------------------------------------------------------------------

def _check_schema(path) -> None:
    with open(path) as fh:
        first = fh.readline().strip().lstrip("# ")
    if first != RESULT_SCHEMA:
        raise ValueError(f"{path}: schema {first!r}, expected {RESULT_SCHEMA!r}")


def cmd_stats(result_files, quantiles, out_dir: Path, make_plots: bool) -> int:
    if not result_files:
        print("error: no result files given", file=sys.stderr)
        return 2
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        for path in result_files:
            _check_schema(path)
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    results = [load_result(p) for p in result_files]
    groups: dict = {}
    for res in results:
        key = (res.metadata.get("v"), res.metadata.get("T1v"), res.metadata.get("kappa_z"))
        groups.setdefault(key, []).append(res)
    lines = ["v_m_per_s,T1v_ns,kappa_z_meV,x_nm,quantile,infidelity,p_excited,"
             "purity_total,purity_spin"]
    plotted = []
    for (v, t1v, kz), members in sorted(groups.items(), key=lambda kv: str(kv[0])):
        n_pts = min(m.x_nm.size for m in members)
        x = members[0].x_nm[:n_pts]
        stack = {
            "infidelity": np.stack([m.infidelity[:n_pts] for m in members]),
            "p_excited": np.stack([m.p_excited[:n_pts] for m in members]),
            "purity_total": np.stack([m.purity_total[:n_pts] for m in members]),
            "purity_spin": np.stack([m.purity_spin[:n_pts] for m in members]),
        }
        tables = {name: ensemble_percentiles(arr, quantiles) for name, arr in stack.items()}
        for qi, q in enumerate(quantiles):
            for i in range(n_pts):
                lines.append(
                    f"{v},{t1v},{kz},{x[i]:.17g},{q:g},"
                    f"{tables['infidelity'].values[qi, i]:.17g},"
                    f"{tables['p_excited'].values[qi, i]:.17g},"
                    f"{tables['purity_total'].values[qi, i]:.17g},"
                    f"{tables['purity_spin'].values[qi, i]:.17g}"
                )
        if make_plots:
            plotted.append(_plot_group(out_dir, v, t1v, kz, x, tables, quantiles))
    table = out_dir / "percentiles.csv"
    _atomic_write(table, "\n".join(lines) + "\n")
    print(f"stats for {len(results)} results ({len(groups)} parameter groups) in {out_dir}")
    return 0


def _plot_group(out_dir, v, t1v, kz, x, tables, quantiles):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    q_lo, q_mid, q_hi = quantiles[0], quantiles[len(quantiles) // 2], quantiles[-1]
    for ax, name in zip(axes, ("infidelity", "p_excited")):
        stats = tables[name]
        ax.plot(x, stats.quantile(q_mid), label=f"median {name}")
        ax.fill_between(x, stats.quantile(q_lo), stats.quantile(q_hi), alpha=0.3)
        ax.set_ylabel(name)
        ax.legend(loc="best")
    axes[0].set_yscale("log")
    axes[1].set_xlabel("position (nm)")
    axes[0].set_title(f"v={v} m/s, T1v={t1v} ns, kappa_z={kz} meV")
    path = out_dir / f"trace_v{v}_T{t1v}_k{kz}.svg"
    fig.savefig(path)
    plt.close(fig)
    return path


# -- diagnose -----------------------------------------------------------------------

def cmd_diagnose(config: Config, landscape_files, v_list, out_dir: Path) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    hp = HotspotParams()
    lines = ["landscape,v_m_per_s,T_ns,T_phi_ns,dephasing_fidelity,hotspot_infidelity"]
    for path in landscape_files:
        lsc = load_landscape(path)
        for v in v_list:
            T = lsc.well.device_length / v
            t_phi = motional_narrowing_Tphi(v, config.physical.T2_star, config.physical.l_c)
            f_deph = dephasing_channel_fidelity(T, t_phi)
            infid = hotspot_infidelity(lsc, v, hp)
            lines.append(
                f"{Path(path).name},{v:.17g},{T:.17g},{t_phi:.17g},"
                f"{f_deph:.17g},{infid:.17g}"
            )
    table = out_dir / "diagnostics.csv"
    _atomic_write(table, "\n".join(lines) + "\n")
    print(f"diagnostics for {len(landscape_files)} landscapes in {out_dir}")
    return 0


# -- plumbing -------------------------------------------------------------------------

def _run_tasks(fn, tasks, jobs):
    """Run tasks, returning results or exceptions, preserving completion info."""
    out = []
    if jobs <= 1 or len(tasks) <= 1:
        for task in tasks:
            try:
                out.append(fn(task))
            except Exception as err:  # campaign continues past failures
                out.append(err)
        return out
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(fn, task) for task in tasks]
        for fut in futures:
            try:
                out.append(fut.result())
            except Exception as err:
                out.append(err)
    return out


def _parse_float_list(text):
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _parse_int_list(text):
    return [int(tok) for tok in text.split(",") if tok.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spinshuttle",
        description="Spin shuttling through disordered valley landscapes",
    )
    parser.add_argument("--config", type=Path, default=None, help="INI configuration file")
    parser.add_argument("--seed", type=int, default=1000, help="base seed")
    parser.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    parser.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="draw valley landscapes")
    g.add_argument("-n", "--count", type=int, default=1, help="number of landscapes")

    s = sub.add_parser("simulate", help="constant-speed sweeps")
    s.add_argument("landscapes", nargs="+", type=Path)
    s.add_argument("--v", type=_parse_float_list, default=None, help="speeds m/s")
    s.add_argument("--T1v", type=_parse_float_list, default=None, help="valley lifetimes ns")
    s.add_argument("--kappa-z", type=_parse_float_list, default=None, help="couplings meV")

    o = sub.add_parser("optimize", help="trajectory optimization campaign")
    o.add_argument("landscapes", nargs="+", type=Path)
    o.add_argument("--v", type=_parse_float_list, default=None)
    o.add_argument("--M", type=_parse_int_list, default=None, help="component counts")
    o.add_argument("--T1v", type=_parse_float_list, default=None)
    o.add_argument("--kappa-z", type=_parse_float_list, default=None)

    st = sub.add_parser("stats", help="percentile tables from result files")
    st.add_argument("results", nargs="+", type=Path)
    st.add_argument("--quantiles", type=_parse_float_list, default=[25.0, 50.0, 75.0])
    st.add_argument("--plot", action="store_true", help="emit SVG line plots")

    d = sub.add_parser("diagnose", help="closed-form diagnostics")
    d.add_argument("landscapes", nargs="+", type=Path)
    d.add_argument("--v", type=_parse_float_list, default=[1.0, 5.0])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
    except (ValueError, FileNotFoundError) as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    try:
        if args.command == "generate":
            return cmd_generate(config, args.count, args.seed, args.out, args.jobs)
        if args.command == "simulate":
            return cmd_simulate(
                config, args.landscapes,
                args.v or list(config.simulation.v),
                args.T1v or list(config.simulation.T1v),
                args.kappa_z or list(config.simulation.kappa_z),
                args.out, args.jobs,
            )
        if args.command == "optimize":
            return cmd_optimize(
                config, args.landscapes,
                args.v or list(config.optimizer.v),
                args.M or [config.optimizer.M],
                args.T1v or list(config.simulation.T1v),
                args.kappa_z or list(config.simulation.kappa_z),
                args.out, args.jobs,
            )
        if args.command == "stats":
            return cmd_stats(args.results, tuple(args.quantiles), args.out, args.plot)
        if args.command == "diagnose":
            return cmd_diagnose(config, args.landscapes, args.v, args.out)
    except Exception as err:  # surface task failures with exit code 1
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
