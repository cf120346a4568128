"""Acceptance criteria 1 to 11.

Each test prints one ``criterion N: PASS/FAIL`` line (also collected in the
terminal summary).  The simulation-backed criteria are marked slow; the whole
file takes of the order of twenty minutes on one core.
"""
import math

import numpy as np
import pytest

from porelbm import cli
from porelbm import config as cfgmod
from porelbm.analysis import (
    barree_conway,
    barree_conway_fit,
    convergence_order,
    forchheimer_fit,
    reference_table,
    richardson_extrapolate,
)
from porelbm.collision import CollisionConfig
from porelbm.engine import SimulationConfig, run
from porelbm.geometry import single_sphere_rev
from porelbm.lattice import RHO0
from porelbm.verify import (
    check_degeneracy,
    check_lattice,
    check_mass_budget,
    check_mass_periodic,
    check_moments,
    poiseuille_error,
)

CHI = 0.6
GRID_R = (4.5, 6.0, 7.5, 9.0, 12.0)
RICHARDSON_R = (12.0, 16.5, 24.0)
GRID_SCHEMES = {
    "SRT+CLI": ("SRT", "CLI", 0.25),
    "SRT+LIBB": ("SRT", "LIBB", 0.25),
    "TRT+MR": ("TRT", "MR", 0.25),
}
SLOPE_BANDS = {"SRT+CLI": (1.7, 2.5), "SRT+LIBB": (1.7, 2.5), "TRT+MR": (2.5, 3.5)}


def stokes_run(kind, wall, r, nu=0.1, magic=0.25, offset=0.0, tol=1e-9, window=200):
    """Converged Stokes run of the single-sphere REV; returns ``(C_D, K, sim)``."""
    g = single_sphere_rev(r, CHI, offset=offset)
    cfg = SimulationConfig(
        geometry=g, collision=CollisionConfig(kind, nu=nu, magic=magic), wall=wall, drho=1e-5,
        max_steps=400000, tol=tol, window_steps=window, monitor="cd_stokes",
    )
    res, sim = run(cfg)
    assert res.converged, res.message
    s = res.series
    cd = float(s.tail_mean("cd_stokes", window))
    k = RHO0 * nu * float(s.tail_mean("u", window)) / abs(float(s.tail_mean("grad_p", window)))
    return cd, k, sim


# -- 1 to 3: exactness and conservation ---------------------------------------

def test_criterion_1_poiseuille(criterion):
    err, res = poiseuille_error(3.0 / 16.0)
    ok = res.converged and err <= 1e-8
    criterion(1, ok, f"Poiseuille relative max error {err:.2e} (limit 1e-8) at magic 3/16")
    assert ok


def test_criterion_2_moments_and_mass(criterion):
    checks = [check_lattice(), check_moments(), check_mass_periodic(), check_mass_budget()]
    ok = all(c[1] for c in checks)
    criterion(2, ok, "; ".join(f"{n}: {d}" for n, _, d in checks))
    assert ok


def test_criterion_3_half_way_degeneracy(criterion):
    name, ok, detail = check_degeneracy(n=1000)
    criterion(3, ok, detail)
    assert ok


# -- 4 and 5: grid convergence ------------------------------------------------

@pytest.fixture(scope="module")
def grid():
    """C_D per scheme at the grid radii and the Richardson radii (actual radii as keys)."""
    out = {}
    for label, (kind, wall, magic) in GRID_SCHEMES.items():
        vals = {}
        for r in sorted(set(GRID_R) | set(RICHARDSON_R)):
            cd, _, sim = stokes_run(kind, wall, r, magic=magic)
            vals[r] = (sim.radius(), cd)
        out[label] = vals
    return out


def scheme_reference(vals):
    h = [1.0 / vals[r][0] for r in RICHARDSON_R]
    cd = [vals[r][1] for r in RICHARDSON_R]
    return richardson_extrapolate(h, cd)


def common_reference(grid):
    """Mean of the per-scheme extrapolated limits."""
    return float(np.mean([scheme_reference(v)[0] for v in grid.values()]))


@pytest.mark.slow
def test_criterion_4_grid_convergence(grid, criterion):
    lo_chi, hi_chi = reference_table().range
    assert not lo_chi <= CHI <= hi_chi  # the bundled table stops short of chi = 0.6
    parts = []
    ok = True
    for label, vals in grid.items():
        ref, p = scheme_reference(vals)
        r = np.array([vals[x][0] for x in GRID_R])
        err = np.array([vals[x][1] / ref - 1.0 for x in GRID_R])
        slope = convergence_order(r, err)
        lo, hi = SLOPE_BANDS[label]
        good = lo <= slope <= hi
        ok &= good
        parts.append(f"{label} slope {slope:.2f} in [{lo}, {hi}] {'ok' if good else 'NO'} (ref {ref:.3f}, p {p:.2f})")
    criterion(4, ok, "; ".join(parts))
    assert ok


@pytest.mark.slow
def test_criterion_5_grid_independence(grid, criterion):
    ref = common_reference(grid)
    cd_srt, _, s1 = stokes_run("SRT", "CLI", 8.7)
    cd_trt, _, s2 = stokes_run("TRT", "CLI", 5.7, magic=0.25)
    e_srt = cd_srt / ref - 1.0
    e_trt = cd_trt / ref - 1.0
    ok = abs(e_srt) < 0.015 and abs(e_trt) < 0.015
    criterion(5, ok, f"reference C_D {ref:.3f}; SRT+CLI r={s1.radius():.2f} error {e_srt:+.2%}; "
                     f"TRT+CLI r={s2.radius():.2f} error {e_trt:+.2%} (limit 1.5%)")
    assert ok


# -- 6 and 7: viscosity and displacement --------------------------------------

@pytest.mark.slow
def test_criterion_6_viscosity_independence(criterion):
    nus = (0.029, 0.1, 0.2, 0.45)
    spread = {}
    for label, kind, wall in (("TRT+CLI", "TRT", "CLI"), ("TRT+MR", "TRT", "MR"), ("SRT+SBB", "SRT", "SBB")):
        ks = np.array([stokes_run(kind, wall, 16.5, nu=nu, tol=1e-8)[1] for nu in nus])
        spread[label] = (ks.max() - ks.min()) / ks.mean()
    ok = spread["TRT+CLI"] < 0.02 and spread["TRT+MR"] < 0.02 and spread["SRT+SBB"] > 0.05
    criterion(6, ok, "permeability spread " + ", ".join(f"{k} {v:.2%}" for k, v in spread.items())
              + " (TRT < 2%, SRT+SBB > 5%)")
    assert ok


@pytest.mark.slow
def test_criterion_7_displacement(criterion):
    offsets = np.round(np.arange(0.0, 0.51, 0.1), 10)
    band = {}
    for wall in ("CLI", "SBB"):
        cds = np.array([stokes_run("TRT", wall, 4.5, offset=o)[0] for o in offsets])
        band[wall] = (cds.max() - cds.min()) / cds.mean()
    ok = band["CLI"] < band["SBB"]
    criterion(7, ok, f"C_D band over shifts: TRT+CLI {band['CLI']:.2%}, TRT+SBB {band['SBB']:.2%}")
    assert ok


# -- 8 to 10: regimes -----------------------------------------------------------

@pytest.fixture(scope="module")
def darcy_points():
    """Runs of the darcy preset at pore Reynolds numbers 1e-4 .. 1e-3."""
    tol = 1e-10
    base = cfgmod.load_config(profile="darcy", overrides=[f"run.tol={tol}", "run.window_steps=200", "run.monitor=u"])

    def go(drho):
        c = dict(base, drho=drho)
        res, sim = run(cfgmod.build_simulation_config(c))
        assert res.converged
        s = res.series
        return float(s.tail_mean("u", 200)), abs(float(s.tail_mean("grad_p", 200))), sim

    u0, _, sim = go(1e-6)
    nu = float(base["collision"]["nu"])
    re0 = u0 * 2 * sim.radius() / nu
    targets = np.logspace(-4, -3, 4)
    pts = []
    for re in targets:
        drho = 1e-6 * re / re0
        u, gp, sim = go(drho)
        pts.append(dict(re_target=re, drho=drho, u=u, gp=gp, re_p=u * 2 * sim.radius() / nu))
    return dict(points=pts, nu=nu, tol=tol)


@pytest.mark.slow
def test_criterion_8_darcy_linearity(darcy_points, criterion):
    pts = darcy_points["points"]
    nu = darcy_points["nu"]
    a, b = pts[0], pts[-1]
    lin = (b["u"] / a["u"]) / (b["drho"] / a["drho"]) - 1.0
    u = np.array([p["u"] for p in pts])
    gp = np.array([p["gp"] for p in pts])
    fit = forchheimer_fit(u, gp, RHO0 * nu, rel_noise=darcy_points["tol"])
    ok = abs(lin) < 1e-3 and fit.beta_is_zero()
    criterion(8, ok, f"Re_p {pts[0]['re_p']:.1e}..{pts[-1]['re_p']:.1e}: U/drho deviation {lin:+.1e} (limit 1e-3); "
                     f"beta {fit.beta:.2e} +- {fit.beta_stderr:.1e} (zero within 2 sigma: {fit.beta_is_zero()})")
    assert ok


@pytest.fixture(scope="module")
def reynolds_sweep(tmp_path_factory):
    cfg = cfgmod.load_config(profile="reynolds-study")
    rows = cli.run_sweep(cfg, tmp_path_factory.mktemp("reynolds"))
    return cfg, rows


@pytest.mark.slow
def test_criterion_9_laminar_forchheimer(reynolds_sweep, criterion):
    cfg, rows = reynolds_sweep
    assert cfg["geometry"]["diameter"] == 37.8 and cfg["collision"]["magic"] == 0.1875
    driven = [r for r in rows if r["name"] != "pilot"]
    assert all(r["status"] == "converged" for r in rows)
    forch, _, _, points = cli.fit_rows(rows)
    re = ", ".join(f"{float(r['Re_p']):.1f}" for r in driven)
    ok = 0.006 <= forch.c_f <= 0.010
    criterion(9, ok, f"Re_p {re}: fitted C_F {forch.c_f:.4f} (target [0.006, 0.010]), K_D {forch.k_d:.4f}")
    assert ok


@pytest.mark.slow
def test_criterion_10_friction_stokes_branch(darcy_points, reynolds_sweep, criterion):
    nu = darcy_points["nu"]
    pts = darcy_points["points"]
    k_d = RHO0 * nu * pts[0]["u"] / pts[0]["gp"]
    vals = []
    for p in pts:
        re_k = p["u"] * math.sqrt(k_d) / nu
        f_k = p["gp"] * math.sqrt(k_d) / p["u"] ** 2
        vals.append(("darcy", p["re_p"], re_k, re_k * f_k))
    _, rows = reynolds_sweep
    _, _, _, points = cli.fit_rows(rows)
    for p in points:
        vals.append(("laminar", p["Re_p"], p["Re_K"], p["F_K_Re_K"]))
    stokes = [v for v in vals if v[2] < 1.0]
    worst = max(stokes, key=lambda v: abs(v[3] - 1.0))
    ok = all(abs(v[3] - 1.0) <= 0.02 for v in stokes)
    criterion(10, ok, f"{len(stokes)} points with Re_K < 1; worst F_K Re_K = {worst[3]:.4f} "
                      f"at Re_p {worst[1]:.3g} (Re_K {worst[2]:.3f}); limit 1 +- 2%")
    assert ok


# -- 11: substitute property ----------------------------------------------------

def test_criterion_11_barree_conway_substitute(criterion):
    # excluded (not desk scale): turbulent C_F, friction plateau, K* deviation
    # above Re_p = 1000 and the D >= 59.4 regime rows
    truth = dict(k_min=0.35, k_d=1.97, l_t=40.0, e=1.0, f=1.0)
    mu = 0.01
    u = np.logspace(-5, -1, 16)
    k = barree_conway(u, mu=mu, **truth)
    fit = barree_conway_fit(u, k, mu)
    got = dict(k_min=fit.k_min, k_d=fit.k_d, l_t=fit.l_t, e=fit.e, f=fit.f)
    rel = max(abs(got[n] / truth[n] - 1.0) for n in truth)
    lo = abs(fit.k_star(1e-16, mu) - 1.0)
    hi = abs(fit.k_star(1e16, mu) - fit.k_min / fit.k_d)
    ok = rel <= 1e-6 and lo < 1e-9 and hi < 1e-9
    criterion(11, ok, f"synthetic parameter recovery {rel:.1e} (limit 1e-6); K*(0) - 1 = {lo:.1e}; "
                      f"K*(inf) - K_min/K_D = {hi:.1e}; turbulent-regime items excluded")
    assert ok
