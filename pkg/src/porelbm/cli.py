"""Command-line driver: ``run``, ``sweep``, ``fit`` and ``verify``.

Every run writes into its own directory:

- ``config.yaml``      the fully merged configuration
- ``observables.csv``  the sampled time series
- ``summary.csv``      one row of converged quantities
- ``fields_*.vtk``     legacy VTK dumps (final and/or at a cadence)
- ``checkpoint.bin``   both population buffers at the end of the run
"""
import argparse
import copy
import csv
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import analysis, config as cfgmod, vtk
from .analysis import AnalysisError, FitError
from .collision import ConfigurationError
from .engine import Simulation, save_checkpoint
from .geometry import GeometryError, SpherePack
from .lattice import CS2, RHO0

log = logging.getLogger("porelbm")

UNITS_LINE = "units: lattice (dx = dt = 1, rho0 = 1); force, gradP, U in lattice units"

SUMMARY_FIELDS = [
    "name", "status", "converged", "steps", "collision", "magic", "wall", "nu", "drho",
    "L", "radius", "chi", "offset", "U", "U_intrinsic", "gradP", "Fx", "K", "CD", "CD_stokes",
    "CD_ref", "CD_error", "K_ref", "K_over_Kref", "Re_p", "Re_K", "F_K", "config_hash",
]


# -- single runs -------------------------------------------------------------

def reference_cd(cfg, geometry):
    """Reference drag for the error columns, or None."""
    ref = (cfg.get("reference") or {}).get("cd")
    if ref is not None:
        return float(ref)
    if cfg["geometry"].get("kind", "sphere") != "sphere":
        return None
    chi = float(cfg["geometry"]["chi"])
    lo, hi = analysis.reference_table().range
    if lo <= chi <= hi:
        return analysis.reference_drag(chi)
    return None


def summarize(name, sim, result, cfg, status=None):
    """Reduce a finished run to one summary row."""
    scfg = sim.config
    s = result.series
    row = {k: "" for k in SUMMARY_FIELDS}
    g = scfg.geometry
    radius = sim.radius()
    nu = scfg.collision.nu
    mu = RHO0 * nu
    row.update(
        name=name,
        status=status or ("failed" if result.failed else ("converged" if result.converged else "max_steps")),
        converged=int(result.converged),
        steps=result.steps,
        collision=scfg.collision.kind,
        magic=scfg.collision.magic,
        wall=scfg.wall,
        nu=nu,
        drho=scfg.drho,
        L=sim.shape[scfg.axis],
        radius=radius,
        chi=cfg["geometry"].get("chi", "") if isinstance(g, SpherePack) else "",
        offset=cfg["geometry"].get("offset", "") if isinstance(g, SpherePack) else "",
        config_hash=scfg.digest(),
    )
    if not len(s):
        return row
    window = scfg.window_steps
    U = float(s.tail_mean("u", window))
    Ui = float(s.tail_mean("u_intrinsic", window))
    gp = float(s.tail_mean("grad_p", window))
    fx = float(s.tail_mean("force", window)[scfg.axis])
    row.update(U=U, U_intrinsic=Ui, gradP=gp, Fx=fx)
    if U == 0.0 or gp == 0.0:
        return row
    K = mu * abs(U) / abs(gp)
    row["K"] = K
    row["CD"] = float(s.tail_mean("cd", window))
    if math.isfinite(radius):
        cds = float(s.tail_mean("cd_stokes", window))
        row["CD_stokes"] = cds
        row["Re_p"] = abs(U) * 2.0 * radius / nu
        ref = reference_cd(cfg, g)
        if ref is not None:
            row["CD_ref"] = ref
            row["CD_error"] = cds / ref - 1.0
            # K_ref follows from F = 6 pi mu U r C_D and grad P = F / V
            k_ref = sim.volume / (6.0 * math.pi * radius * ref)
            row["K_ref"] = k_ref
            row["K_over_Kref"] = K / k_ref
    re_k, f_k = analysis.friction_factor(U, gp, K, mu, RHO0)
    row["Re_K"] = float(re_k)
    row["F_K"] = float(f_k)
    return row


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_summary(path, rows, digest=None, extra_fields=()):
    fields = list(extra_fields) + SUMMARY_FIELDS
    with open(path, "w", newline="") as fh:
        fh.write(f"# {UNITS_LINE}\n")
        if digest:
            fh.write(f"# config: {digest}\n")
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k, "")) for k in fields})


def read_summary(path):
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def execute(cfg, outdir, name="run"):
    """Run one fully merged configuration; returns ``(row, result)``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "config.yaml").write_text(yaml.safe_dump(cfg, sort_keys=True))
    scfg = cfgmod.build_simulation_config(cfg)
    sim = Simulation(scfg)
    digest = scfg.digest()
    (outdir / "links.txt").write_text(sim.links.report())
    out = cfg.get("output", {})
    every = int(out.get("field_every") or 0)

    def progress(sim_, sample, mon):
        if out.get("fields") == "cadence" and every and sim_.step_count % every == 0:
            vtk.write_simulation(outdir / f"fields_{sim_.step_count:08d}.vtk", sim_)

    result = sim.run(progress)
    header = [UNITS_LINE, f"config: {digest}", f"status: {result.message}"]
    with open(outdir / "observables.csv", "w", newline="") as fh:
        result.series.to_csv(fh, header)
    if out.get("fields", "final") in ("final", "cadence") and not result.failed:
        vtk.write_simulation(outdir / "fields_final.vtk", sim)
    if out.get("checkpoint", "final") == "final":
        save_checkpoint(sim, outdir / "checkpoint.bin")
    row = summarize(name, sim, result, cfg)
    write_summary(outdir / "summary.csv", [row], digest)
    return row, result


def cmd_run(args):
    cfg = _load(args)
    row, result = execute(cfg, args.out, name=cfg.get("profile") or "run")
    print(f"{row['status']}: steps={row['steps']} U={row['U']} K={row['K']} CD={row['CD']}")
    if result.failed:
        print(f"error: {result.message}", file=sys.stderr)
        return 2
    return 0


# -- sweeps ------------------------------------------------------------------

SWEEP_KEYS = {
    "radius": ("geometry", "radius"),
    "displacement": ("geometry", "offset"),
    "viscosity": ("collision", "nu"),
    "reynolds": None,
}


def drho_for_reynolds(re_p, k_d, nu, diameter, length, c_f=0.0, rho=RHO0):
    """Density drop expected to give pore Reynolds number ``re_p``.

    Uses the Forchheimer law with the Darcy permeability ``k_d`` of the same
    geometry and a guessed inertial constant ``c_f``.
    """
    u = re_p * nu / diameter
    mu = rho * nu
    grad_p = mu * u / k_d + c_f * rho * u * u / math.sqrt(k_d)
    return grad_p * length / CS2


def _point(args):
    cfg, outdir, name, value = args
    try:
        row, _ = execute(cfg, outdir, name)
    except (ConfigurationError, GeometryError, AnalysisError, ValueError) as exc:
        row = {k: "" for k in SUMMARY_FIELDS}
        row.update(name=name, status=f"error: {exc}")
    row["value"] = value
    return row


def sweep_points(cfg):
    """Per-point configs ``(name, value, cfg)`` of a non-reynolds sweep."""
    sw = cfg.get("sweep") or {}
    kind = sw.get("kind")
    if kind not in SWEEP_KEYS:
        raise ConfigurationError(f"unknown sweep kind {kind!r}; known: {', '.join(SWEEP_KEYS)}")
    values = list(sw.get("values") or [])
    if len(values) < 2:
        raise ConfigurationError("a sweep needs at least two points")
    points = []
    for i, v in enumerate(values):
        c = copy.deepcopy(cfg)
        if kind == "reynolds":
            c.setdefault("target", {})["re_p"] = v
        else:
            sec, key = SWEEP_KEYS[kind]
            c[sec][key] = v
            if key == "radius":
                c[sec]["diameter"] = None
        points.append((f"{kind}_{i:02d}", v, c))
    return kind, points


def run_sweep(cfg, outdir, threads=1):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    kind, points = sweep_points(cfg)
    rows = []
    if kind == "reynolds":
        # a Stokes pilot fixes the permeability used to pick each drive
        pilot = copy.deepcopy(cfg)
        nu = float(cfg["collision"]["nu"])
        scfg = cfgmod.build_simulation_config(pilot)
        L = scfg.geometry.shape[scfg.axis]
        D = 2.0 * scfg.geometry.spheres[0].radius
        pilot["drho"] = float(cfg["sweep"].get("pilot_drho", 1e-6))
        pilot["run"]["monitor"] = "u"
        prow = _point((pilot, outdir / "pilot", "pilot", 0.0))
        rows.append(prow)
        if prow["status"] != "converged" or prow.get("K", "") == "":
            raise AnalysisError("Stokes pilot run did not converge; cannot calibrate drives")
        k_d = float(prow["K"])
        c_f = float(cfg["sweep"].get("c_f_guess", 0.0))
        for name, v, c in points:
            c["drho"] = drho_for_reynolds(float(v), k_d, nu, D, L, c_f)
    jobs = [(c, outdir / name, name, v) for name, v, c in points]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            rows.extend(ex.map(_point, jobs))
    else:
        rows.extend(_point(j) for j in jobs)
    write_summary(outdir / "sweep.csv", rows, extra_fields=("value",))
    return rows


def cmd_sweep(args):
    cfg = _load(args)
    rows = run_sweep(cfg, args.out, args.threads)
    for r in rows:
        print(f"{r['name']}: {r['status']} value={r.get('value', '')} CD={r.get('CD_stokes', '')} K={r.get('K', '')}")
    return 0 if all(r["status"] in ("converged", "max_steps") for r in rows) else 1


# -- fits --------------------------------------------------------------------

def fit_rows(rows, window=None):
    """Forchheimer, Barree-Conway and friction-factor fits of summary rows."""
    pts = [r for r in rows if r.get("U") not in ("", None) and r.get("gradP") not in ("", None)]
    pts = [r for r in pts if float(r["U"]) != 0.0 and r.get("name") != "pilot"]
    if window is not None:
        lo, hi = window
        pts = [r for r in pts if lo <= float(r["Re_p"]) <= hi]
    if len(pts) < 2:
        raise AnalysisError("need at least two driven runs to fit")
    nus = {float(r["nu"]) for r in pts}
    if len(nus) != 1:
        raise AnalysisError("all fitted runs must share one viscosity")
    nu = nus.pop()
    mu = RHO0 * nu
    u = np.array([abs(float(r["U"])) for r in pts])
    gp = np.array([abs(float(r["gradP"])) for r in pts])
    k_app = mu * u / gp
    report = []
    forch = analysis.forchheimer_fit(u, gp, mu, RHO0)
    report.append(analysis.fit_report("forchheimer", {
        "K_D": forch.k_d, "beta": forch.beta, "beta_stderr": forch.beta_stderr, "C_F": forch.c_f,
        "residual": forch.residual, "points": len(pts),
    }))
    # the friction factor is scaled with the Darcy permeability: the Stokes
    # pilot of a reynolds sweep when present, else the fitted intercept
    pilots = [r for r in rows if r.get("name") == "pilot" and r.get("K") not in ("", None)]
    k_darcy = float(pilots[0]["K"]) if pilots else forch.k_d
    report.append(analysis.fit_report("friction_factor", {"K_D": k_darcy, "source": "pilot" if pilots else "fit"}))
    re_k, f_k = analysis.friction_factor(u, gp, k_darcy, mu, RHO0)
    bc = None
    if len(pts) >= 5:
        try:
            bc = analysis.barree_conway_fit(u, k_app, mu, RHO0)
            report.append(analysis.fit_report("barree_conway", {
                "K_min": bc.k_min, "K_D": bc.k_d, "l_T": bc.l_t, "E": bc.e, "F": bc.f, "residual": bc.residual,
            }))
        except FitError as exc:
            report.append(f"[barree_conway]\nerror = {exc}\nbest = {exc.best!r}\n")
    else:
        report.append("[barree_conway]\nskipped = fewer than five points\n")
    points = []
    for i, r in enumerate(pts):
        p = {
            "name": r["name"], "Re_p": float(r["Re_p"]) if r.get("Re_p") else float("nan"),
            "U": float(u[i]), "gradP": float(gp[i]), "K_app": float(k_app[i]),
            "K_star": float(k_app[i] / k_darcy), "Re_K": float(re_k[i]), "F_K": float(f_k[i]),
            "F_K_Re_K": float(re_k[i] * f_k[i]),
        }
        if bc is not None:
            p["K_star_model"] = float(bc.k_star(u[i], mu, RHO0))
        points.append(p)
    return forch, bc, report, points


def cmd_fit(args):
    rows = []
    for path in args.inputs:
        rows.extend(read_summary(path))
    window = tuple(args.re_window) if args.re_window else None
    try:
        forch, bc, report, points = fit_rows(rows, window)
    except FitError as exc:
        print(f"fit failed: {exc} (best so far: {exc.best})", file=sys.stderr)
        return 1
    except AnalysisError as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return 1
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    text = "\n".join(report)
    (out / "fit_report.txt").write_text(text)
    keys = list(points[0])
    with open(out / "fit_points.csv", "w", newline="") as fh:
        fh.write(f"# {UNITS_LINE}\n")
        w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for p in points:
            w.writerow({k: _fmt(p.get(k, "")) for k in keys})
    print(text)
    return 0


# -- verification ------------------------------------------------------------

def cmd_verify(args):
    from .verify import run_checks

    results = run_checks()
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return 0 if all(ok for _, ok, _ in results) else 1


# -- entry point -------------------------------------------------------------

def _load(args):
    overrides = list(args.set or [])
    if args.max_steps is not None:
        overrides.append(f"run.max_steps={args.max_steps}")
    return cfgmod.load_config(args.config, args.profile, overrides)


def build_parser():
    p = argparse.ArgumentParser(prog="porelbm", description="Pore-scale lattice Boltzmann flow in sphere packs")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="YAML config file (relative paths also searched under $PORELBM_CONFIG_ROOT)")
        sp.add_argument("--profile", help="named preset merged under the config file")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--threads", type=int, default=1, help="worker processes for sweep points")
        sp.add_argument("--max-steps", type=int, default=None)
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override, e.g. collision.nu=0.05")

    common(sub.add_parser("run", help="single simulation"))
    common(sub.add_parser("sweep", help="radius, displacement, viscosity or reynolds sweep"))
    f = sub.add_parser("fit", help="Forchheimer / Barree-Conway / friction-factor fits of summary CSVs")
    f.add_argument("inputs", nargs="+")
    f.add_argument("--out", default="fit")
    f.add_argument("--re-window", type=float, nargs=2, metavar=("MIN", "MAX"), help="restrict fitted points by Re_p")
    sub.add_parser("verify", help="built-in correctness checks")
    sub.add_parser("profiles", help="list named presets")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        if args.command == "fit":
            return cmd_fit(args)
        if args.command == "verify":
            return cmd_verify(args)
        if args.command == "profiles":
            _, profiles = cfgmod.available_profiles()
            for name in sorted(profiles):
                print(name)
            return 0
    except (ConfigurationError, GeometryError, AnalysisError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
