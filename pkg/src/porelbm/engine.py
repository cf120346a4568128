"""Time stepping, observables, convergence monitoring and checkpoints.

One step reads the post-collision field of time ``n`` and produces the
post-collision field of time ``n + 1``:

1. pull streaming, with the pressure jump added to populations crossing
   the periodic faces of the flow axis;
2. wall links overwrite the populations that would have come out of the
   solid, using the stored post-collision values;
3. collision on every fluid cell.
"""
import hashlib
import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .analysis import ObservableSeries, drag_coefficient, inertial_drag_coefficient
from .boundary import PeriodicPressure, WallBoundary, WallLinkSet, crossing_links
from .collision import CollisionConfig, build_moment_basis
from .geometry import SpherePack, voxelize
from .lattice import CS2, RHO0, W, StabilityError, equilibrium, moments

log = logging.getLogger(__name__)


class InstabilityError(StabilityError):
    def __init__(self, step, message):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass
class SimulationConfig:
    """Everything needed to set up and drive one run.

    Convergence is tested on the windowed mean of ``monitor`` (a series
    column).  Windows are ``window_steps`` long, or ``window_flow_through``
    flow-through times when that is set.
    """

    geometry: object
    collision: CollisionConfig = field(default_factory=CollisionConfig)
    wall: str = "CLI"
    wall_fallback: str = "cascade"
    drho: float = 0.0
    axis: int = 0
    max_steps: int = 10000
    cadence: int = 10
    window_steps: int = 500
    window_flow_through: float = None
    warmup_steps: int = 0
    tol: float = 1e-6
    monitor: str = "cd"
    init: str = "linear"
    cd_area: str = "domain"
    velocity_average: str = "superficial"
    check_interval: int = 100

    def to_dict(self):
        d = asdict(self)
        g = self.geometry
        d["geometry"] = {"type": type(g).__name__, **{k: v for k, v in vars(g).items()}}
        if isinstance(g, SpherePack):
            d["geometry"]["spheres"] = [[list(s.center), s.radius] for s in g.spheres]
        return d

    def digest(self):
        text = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


class ConvergenceMonitor:
    """Relative change of the windowed mean between consecutive windows."""

    def __init__(self, window_steps, tol, warmup_steps=0):
        self.window_steps = window_steps
        self.tol = tol
        self.warmup_steps = warmup_steps
        self.steps = []
        self.values = []
        self.change = math.inf

    def update(self, step, value, window_steps=None):
        if window_steps is not None:
            self.window_steps = window_steps
        if step < self.warmup_steps:
            return False
        self.steps.append(step)
        self.values.append(value)
        w = self.window_steps
        steps = np.asarray(self.steps)
        if steps[-1] - steps[0] < 2 * w:
            return False
        vals = np.asarray(self.values)
        last = vals[steps > steps[-1] - w].mean()
        prev = vals[(steps > steps[-1] - 2 * w) & (steps <= steps[-1] - w)].mean()
        if last == 0.0:
            self.change = 0.0 if prev == 0.0 else math.inf
        else:
            self.change = abs(last - prev) / abs(last)
        return bool(self.change < self.tol)

    @property
    def mean(self):
        steps = np.asarray(self.steps)
        return float(np.asarray(self.values)[steps > steps[-1] - self.window_steps].mean())


def flow_through_time(length, u_mean):
    """Steps for the mean flow to cross ``length`` cells."""
    if not u_mean or u_mean <= 0:
        raise ValueError("flow-through time undefined: flow not developed")
    return length / u_mean


@dataclass
class RunResult:
    series: ObservableSeries
    converged: bool
    failed: bool
    message: str
    steps: int


class Simulation:
    """Fields, links and operators of one run."""

    def __init__(self, config: SimulationConfig):
        self.config = config
        geom = config.geometry
        self.shape = tuple(geom.shape)
        self.solid = voxelize(geom)
        self.fluid = ~self.solid
        self.links = WallLinkSet.build(self.solid, geom, axis=config.axis)
        col = config.collision
        self.boundary = WallBoundary(self.links, config.wall, omega=col.omega, fallback=config.wall_fallback)
        self.pressure = PeriodicPressure(config.axis, config.drho)
        self._basis = None
        if col.kind == "MRT":
            self._basis = build_moment_basis()
            self._rates = col.rates()
        self._cells, self._table = kernels.neighbour_table(self.fluid)
        self._jumps = kernels.face_jumps(self._cells, self.shape, config.axis)
        self.step_count = 0
        self.f = self._initial_field()
        self._buf = np.empty_like(self.f)
        self.last_force_mem = np.zeros(3)
        w_in, w_out = crossing_links(self.solid, config.axis)
        self._w_cross = (w_in, w_out)
        self.volume = float(np.prod(self.shape))
        self.cross_area = self.volume / self.shape[config.axis]

    def _initial_field(self):
        cfg = self.config
        rho = np.ones(self.shape)
        if cfg.init == "linear" and cfg.drho:
            n = self.shape[cfg.axis]
            x = (np.arange(n) + 0.5) / n
            prof = RHO0 + cfg.drho * (0.5 - x)
            sh = [1, 1, 1]
            sh[cfg.axis] = n
            rho = rho * prof.reshape(sh)
        elif cfg.init not in ("linear", "rest"):
            raise ValueError(f"unknown init {cfg.init!r}")
        f = equilibrium(rho, np.zeros(self.shape + (3,)))
        f[self.solid] = W * RHO0
        return np.ascontiguousarray(f)

    # -- stepping ----------------------------------------------------------

    def collide(self, f):
        col = self.config.collision
        if col.kind == "MRT":
            kernels.collide_mrt(f, self.fluid, self._basis.M, self._basis.Minv, self._rates)
        else:
            kernels.collide_trt(f, self.fluid, col.omega, col.omega_minus)

    def step(self, measure=False):
        """Advance one time step; with ``measure`` keep the momentum exchange."""
        drho = self.pressure.drho
        src = self.f.reshape(-1, 19)
        dst = self._buf.reshape(-1, 19)
        kernels.stream_table(src, dst, self._cells, self._table, *self._jumps, drho)
        self.boundary.apply(self.f, self._buf, drho)
        if measure:
            self.last_force_mem = self.boundary.momentum_exchange(self.f, self._buf)
        self.collide(self._buf)
        self.f, self._buf = self._buf, self.f
        self.step_count += 1
        if self.step_count % self.config.check_interval == 0:
            self.check()

    def check(self):
        f = self.f[self.fluid]
        if not np.all(np.isfinite(f)):
            raise InstabilityError(self.step_count, "non-finite population")
        _, u = moments(f)
        umax = float(np.sqrt(np.max(np.sum(u * u, axis=-1)))) if u.size else 0.0
        if umax >= math.sqrt(CS2):
            raise InstabilityError(self.step_count, f"|u| = {umax:.3g} reached the sound speed")

    # -- observables -------------------------------------------------------

    def macroscopic(self):
        rho, u = moments(self.f)
        rho[self.solid] = RHO0
        u[self.solid] = 0.0
        return rho, u

    def total_mass(self):
        return float(self.f[self.fluid].sum())

    def mass_injection(self):
        """Net mass added per step by the pressure jump (zero for matched faces)."""
        w_in, w_out = self._w_cross
        return self.pressure.drho * (w_in - w_out)

    def pressure_momentum(self):
        """Streamwise momentum injected per step across fluid face links."""
        w_in, w_out = self._w_cross
        return self.pressure.drho * (w_in + w_out)

    def drag_force(self, force_mem=None):
        """Total drag on the solid in the REV.

        The momentum exchange only sees links between fluid cells; the pressure
        jump across solid parts of the periodic faces is added so that the
        steady drag balances ``dp * A`` for the whole cross-section.
        """
        F = np.array(self.last_force_mem if force_mem is None else force_mem, dtype=float)
        F[self.pressure.axis] += CS2 * self.pressure.drho * self.cross_area - self.pressure_momentum()
        return F

    def mean_velocity(self):
        """Superficial and intrinsic streamwise mean velocities."""
        _, u = moments(self.f[self.fluid])
        s = float(u[:, self.pressure.axis].sum())
        return s / self.volume, s / max(1, u.shape[0])

    def radius(self):
        g = self.config.geometry
        if isinstance(g, SpherePack) and g.spheres:
            return g.spheres[0].radius
        return float("nan")

    def sample(self):
        cfg = self.config
        u_sup, u_int = self.mean_velocity()
        U = u_sup if cfg.velocity_average == "superficial" else u_int
        F = self.drag_force()
        fx = F[cfg.axis]
        mu = RHO0 * cfg.collision.nu
        area = self.cross_area if cfg.cd_area == "domain" else math.pi * self.radius() ** 2
        if U != 0.0:
            cd = inertial_drag_coefficient(fx, RHO0, area, U)
            cds = drag_coefficient(fx, mu, U, self.radius())
        else:
            cd = cds = 0.0
        return dict(
            step=self.step_count,
            force=F.tolist(),
            force_mem=np.asarray(self.last_force_mem).tolist(),
            u=U,
            u_intrinsic=u_int if cfg.velocity_average == "superficial" else u_sup,
            drho=self.pressure.drho,
            grad_p=-fx / self.volume,
            cd=cd,
            cd_stokes=cds,
        )

    # -- driver ------------------------------------------------------------

    def run(self, progress=None):
        """Advance until converged or ``max_steps``; never raises on instability."""
        cfg = self.config
        series = ObservableSeries()
        mon = ConvergenceMonitor(cfg.window_steps, cfg.tol, cfg.warmup_steps)
        converged = False
        length = self.shape[cfg.axis]
        try:
            while self.step_count < cfg.max_steps:
                measure = (self.step_count + 1) % cfg.cadence == 0
                self.step(measure=measure)
                if not measure:
                    continue
                s = self.sample()
                series.append(**s)
                window = None
                if cfg.window_flow_through and s["u"] > 0:
                    window = int(cfg.window_flow_through * flow_through_time(length, s["u"]))
                if mon.update(s["step"], s[cfg.monitor], window):
                    converged = True
                    break
                if progress is not None:
                    progress(self, s, mon)
        except StabilityError as exc:
            log.warning("run aborted: %s", exc)
            return RunResult(series, False, True, str(exc), self.step_count)
        msg = "converged" if converged else "max steps reached"
        return RunResult(series, converged, False, msg, self.step_count)


def run(config, progress=None):
    """Set up and run a simulation; returns ``(RunResult, Simulation)``."""
    sim = Simulation(config)
    return sim.run(progress), sim


# -- checkpoints -------------------------------------------------------------

CHECKPOINT_MAGIC = b"PORELBM\0"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<8sIIIIIQ")


def save_checkpoint(sim, path):
    """Binary checkpoint: header, flags, both population buffers."""
    nx, ny, nz = sim.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, nx, ny, nz, 19, sim.step_count))
        fh.write(sim.solid.astype(np.uint8).tobytes())
        fh.write(np.ascontiguousarray(sim.f, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(sim._buf, dtype="<f8").tobytes())


def load_checkpoint(sim, path):
    """Restore fields into a simulation built from the same configuration."""
    with open(path, "rb") as fh:
        magic, version, nx, ny, nz, q, step = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        if (nx, ny, nz) != sim.shape or q != 19:
            raise ValueError(f"{path}: shape {(nx, ny, nz)} does not match {sim.shape}")
        n = nx * ny * nz
        solid = np.frombuffer(fh.read(n), dtype=np.uint8).reshape(sim.shape).astype(bool)
        if not np.array_equal(solid, sim.solid):
            raise ValueError(f"{path}: flag field differs from the configured geometry")
        f = np.frombuffer(fh.read(8 * n * 19), dtype="<f8").reshape(sim.f.shape)
        buf = np.frombuffer(fh.read(8 * n * 19), dtype="<f8").reshape(sim.f.shape)
    sim.f = f.astype(np.float64).copy()
    sim._buf = buf.astype(np.float64).copy()
    sim.step_count = int(step)
    return sim
