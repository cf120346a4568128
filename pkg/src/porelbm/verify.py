"""Built-in correctness checks behind ``porelbm verify``.

Each check returns ``(name, passed, detail)``.  They are cheap enough to
run on every build (a few seconds in total).
"""
import numpy as np

from .boundary import cli, iebb, libb, qibb, sbb
from .collision import CollisionConfig
from .engine import Simulation, SimulationConfig
from .geometry import Channel, SpherePack, Sphere
from .lattice import D3Q19, E, equilibrium, moments


def check_lattice(descriptor=D3Q19):
    res = descriptor.check()
    bad = [k for k, ok in res.items() if not ok]
    return "lattice identities", not bad, "all hold" if not bad else "violated: " + ", ".join(bad)


def check_moments(n=1000, seed=0):
    rng = np.random.default_rng(seed)
    rho = 1.0 + 0.01 * rng.standard_normal(n)
    u = 0.05 * rng.standard_normal((n, 3))
    r, v = moments(equilibrium(rho, u))
    err = max(np.max(np.abs(r - rho)), np.max(np.abs(v - u)))
    return "equilibrium moments", bool(err <= 1e-14), f"max error {err:.2e}"


def check_degeneracy(n=1000, seed=0):
    """Interpolated schemes reduce to simple bounce-back at q = 1/2."""
    rng = np.random.default_rng(seed)
    worst = []
    for _ in range(n):
        f = rng.random(19)
        g = rng.random(19)
        h = rng.random(19)
        k = int(rng.integers(1, 19))
        kb = k + 1 if k % 2 else k - 1
        ref = sbb(f[k])
        rho1 = f.sum()
        u1 = f @ E
        u2 = g @ E
        vals = [
            libb(0.5, f[k], f[kb], g[k]),
            qibb(0.5, f[k], f[kb], g[k], g[kb], h[k]),
            cli(0.5, f[k], f[kb], g[k]),
            iebb(0.5, k, 1.2, f[k], rho1, u1, u2),
        ]
        worst.extend(v != ref for v in vals)
    n_bad = int(sum(worst))
    return "q = 1/2 degeneracy", n_bad == 0, f"{n_bad} of {len(worst)} values differ from SBB"


def _random_field(shape, seed):
    rng = np.random.default_rng(seed)
    rho = 1.0 + 1e-3 * rng.standard_normal(shape)
    u = 1e-3 * rng.standard_normal(shape + (3,))
    return equilibrium(rho, u)


def check_mass_periodic(steps=5, seed=0):
    worst = 0.0
    for kind in ("SRT", "TRT", "MRT"):
        g = SpherePack(shape=(6, 5, 4), spheres=[])
        sim = Simulation(SimulationConfig(geometry=g, collision=CollisionConfig(kind, nu=0.07)))
        sim.f = _random_field(sim.shape, seed)
        m0 = sim.total_mass()
        for _ in range(steps):
            sim.step()
            worst = max(worst, abs(sim.total_mass() - m0) / m0)
    return "mass conservation (periodic box)", worst <= 1e-13, f"max relative drift {worst:.2e}"


def check_mass_budget(steps=5, seed=0):
    """With a pressure drop the mass change equals the face injection.

    Simple bounce-back conserves mass at the walls, so the budget closes
    to round-off; interpolated schemes do not conserve mass locally.
    """
    g = SpherePack(shape=(8, 8, 8), spheres=[Sphere((3.7, 4.2, 4.1), 2.6)])
    sim = Simulation(SimulationConfig(geometry=g, collision=CollisionConfig("TRT", nu=0.1), wall="SBB", drho=1e-3))
    worst = 0.0
    for _ in range(steps):
        m0 = sim.total_mass()
        expect = sim.mass_injection()
        sim.step()
        worst = max(worst, abs(sim.total_mass() - m0 - expect))
    return "mass budget with pressure drop", worst <= 1e-13, f"max budget residual {worst:.2e}"


def poiseuille_error(magic, ny=12, nu=0.1, drho=1e-4):
    """Relative max error of the SBB channel profile against the exact parabola."""
    g = Channel(shape=(4, ny, 1), lower=1.0, upper=ny - 1.0, normal=1)
    cfg = SimulationConfig(
        geometry=g,
        collision=CollisionConfig("TRT", nu=nu, magic=magic),
        wall="SBB",
        drho=drho,
        max_steps=50000,
        tol=1e-13,
        window_steps=200,
        monitor="u",
    )
    sim = Simulation(cfg)
    res = sim.run()
    _, u = sim.macroscopic()
    y = np.arange(ny) + 0.5
    grad = drho / 3.0 / g.shape[0]
    exact = grad / (2.0 * nu) * (y - 1.0) * (ny - 1.0 - y)
    fl = (y > 1.0) & (y < ny - 1.0)
    err = np.max(np.abs(u[0, fl, 0, 0] - exact[fl])) / exact.max()
    return float(err), res


def check_poiseuille():
    err, res = poiseuille_error(3.0 / 16.0)
    return "Poiseuille exact at magic 3/16", bool(res.converged and err <= 1e-8), f"relative error {err:.2e}"


def check_poiseuille_wall_shift():
    err, res = poiseuille_error(0.25)
    # the bounce-back wall moves off the half-way point for other magic values
    return "Poiseuille wall shift at magic 1/4", bool(res.converged and err > 1e-6), f"relative error {err:.2e}"


def run_checks(descriptor=D3Q19):
    return [
        check_lattice(descriptor),
        check_moments(),
        check_degeneracy(),
        check_mass_periodic(),
        check_mass_budget(),
        check_poiseuille(),
        check_poiseuille_wall_shift(),
    ]
