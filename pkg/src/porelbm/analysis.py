"""Drag, permeability and regime-model fits from simulated observables.

Symbols follow the usual porous-media conventions: ``U`` is the streamwise
volume-averaged velocity, ``grad_p`` the magnitude of the mean pressure
gradient, ``mu = rho0 * nu`` the dynamic viscosity, all in lattice units.
"""
import csv
import io
import math
from dataclasses import dataclass, field, fields
from importlib import resources

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import least_squares


class AnalysisError(ValueError):
    pass


class FitError(AnalysisError):
    """Optimiser failure; ``best`` holds the best parameters found."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


@dataclass
class ObservableSeries:
    """Time series sampled by a run.

    ``force`` is the total drag on the solid in the REV (3-vector per
    sample), ``u`` the streamwise averaged velocity, ``grad_p`` the signed
    streamwise pressure gradient ``-force . i / V``.
    """

    step: list = field(default_factory=list)
    force: list = field(default_factory=list)
    force_mem: list = field(default_factory=list)
    u: list = field(default_factory=list)
    u_intrinsic: list = field(default_factory=list)
    drho: list = field(default_factory=list)
    grad_p: list = field(default_factory=list)
    cd: list = field(default_factory=list)
    cd_stokes: list = field(default_factory=list)

    def append(self, **sample):
        if self.step and sample["step"] <= self.step[-1]:
            raise AnalysisError("samples must be monotone in step")
        for f in fields(self):
            getattr(self, f.name).append(sample[f.name])

    def __len__(self):
        return len(self.step)

    def array(self, name):
        return np.asarray(getattr(self, name), dtype=float)

    def tail_mean(self, name, n_steps):
        """Time average of ``name`` over samples within the last ``n_steps``."""
        steps = self.array("step")
        if not len(steps):
            raise AnalysisError("empty series")
        sel = steps > steps[-1] - n_steps
        return self.array(name)[sel].mean(axis=0)

    def to_csv(self, fh, header_lines=()):
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "Fx", "Fy", "Fz", "Fx_mem", "U", "U_intrinsic", "drho", "gradP", "CD", "CD_stokes"])
        for i in range(len(self)):
            F = self.force[i]
            w.writerow(
                [self.step[i], *(repr(float(v)) for v in F), repr(float(self.force_mem[i][0]))]
                + [repr(float(getattr(self, n)[i])) for n in ("u", "u_intrinsic", "drho", "grad_p", "cd", "cd_stokes")]
            )


@dataclass
class RegimePoint:
    """One converged run reduced to its regime quantities."""

    re_p: float
    re_k: float
    u: float
    grad_p: float
    k_app: float
    cd: float
    f_k: float


def drag_coefficient(force, mu, u, r):
    """Stokes-normalised drag ``F / (6 pi mu U r)``."""
    if u == 0:
        raise AnalysisError("drag coefficient undefined at zero velocity")
    return force / (6.0 * math.pi * mu * u * r)


def inertial_drag_coefficient(force, rho, area, u):
    """Drag normalised by dynamic pressure, ``F / (rho A U^2)``."""
    if u == 0:
        raise AnalysisError("drag coefficient undefined at zero velocity")
    return force / (rho * area * u * u)


# -- reference drag --------------------------------------------------------

@dataclass(frozen=True)
class ReferenceTable:
    chi: np.ndarray
    cd: np.ndarray
    provenance: str

    def __post_init__(self):
        if np.any(np.diff(self.chi) <= 0):
            raise AnalysisError("reference table chi must be strictly increasing")
        if np.any(np.diff(self.cd) <= 0):
            raise AnalysisError("reference drag must be strictly increasing in chi")

    @property
    def range(self):
        return float(self.chi[0]), float(self.chi[-1])

    def __call__(self, chi):
        lo, hi = self.range
        chi = np.asarray(chi, dtype=float)
        if np.any(chi < lo) or np.any(chi > hi):
            raise AnalysisError(f"solid fraction outside reference table range [{lo}, {hi}]")
        return PchipInterpolator(self.chi, self.cd)(chi)


def read_reference_table(text):
    header = []
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            header.append(line[1:].strip())
            continue
        a, b = line.split()[:2]
        rows.append((float(a), float(b)))
    data = np.array(rows)
    return ReferenceTable(data[:, 0], data[:, 1], "\n".join(header))


_REFERENCE = None


def reference_table():
    """The bundled simple-cubic drag table."""
    global _REFERENCE
    if _REFERENCE is None:
        text = resources.files("porelbm").joinpath("data/sc_drag_reference.txt").read_text()
        _REFERENCE = read_reference_table(text)
    return _REFERENCE


def reference_drag(chi):
    """Reference ``C_D`` for a simple-cubic sphere array at solid fraction ``chi``."""
    return float(reference_table()(chi))


def dilute_drag(chi):
    """Leading point-force correction for a periodic simple-cubic array."""
    return 1.0 / (1.0 - 1.7601 * chi ** (1.0 / 3.0) + chi)


def richardson_extrapolate(h, values, order=None):
    """Zero-spacing limit of ``values(h) = v0 + a h^p``.

    With three samples and ``order=None`` the order is solved for as well;
    otherwise the two finest samples and the given order are used.
    Returns ``(v0, p)``.
    """
    h = np.asarray(h, dtype=float)
    v = np.asarray(values, dtype=float)
    idx = np.argsort(h)
    h, v = h[idx], v[idx]
    if order is None:
        if h.size != 3:
            raise AnalysisError("order estimation needs exactly three samples")

        def g(p):
            return (v[1] - v[0]) / (h[1] ** p - h[0] ** p) - (v[2] - v[1]) / (h[2] ** p - h[1] ** p)

        grid = np.linspace(0.25, 6.0, 200)
        vals = np.array([g(p) for p in grid])
        sign = np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))
        if not sign.size:
            raise AnalysisError("no consistent convergence order in samples")
        from scipy.optimize import brentq

        p = brentq(g, grid[sign[0]], grid[sign[0] + 1])
    else:
        p = float(order)
    a = (v[1] - v[0]) / (h[1] ** p - h[0] ** p)
    return float(v[0] - a * h[0] ** p), float(p)


def convergence_order(r, errors):
    """Slope of ``log|error|`` against ``log(1/r)`` by least squares."""
    r = np.asarray(r, dtype=float)
    e = np.abs(np.asarray(errors, dtype=float))
    slope, _ = np.polyfit(np.log(1.0 / r), np.log(e), 1)
    return float(slope)


# -- Darcy / Forchheimer / friction factor ---------------------------------

def darcy_permeability(series_or_u, mu, grad_p=None, converged=True, window=None):
    """Darcy permeability ``mu U / |grad P|``.

    Accepts either an :class:`ObservableSeries` (time-averaged over
    ``window`` steps, default the last quarter of the run) or a pair of
    scalars ``U, grad_p``.
    """
    if isinstance(series_or_u, ObservableSeries):
        if not converged:
            raise AnalysisError("permeability requires a converged series")
        s = series_or_u
        if window is None:
            steps = s.array("step")
            window = max(1, (steps[-1] - steps[0]) // 4)
        u = float(s.tail_mean("u", window))
        gp = float(s.tail_mean("grad_p", window))
    else:
        u, gp = float(series_or_u), float(grad_p)
    if gp == 0:
        raise AnalysisError("zero pressure gradient")
    return mu * abs(u) / abs(gp)


@dataclass
class ForchheimerFit:
    k_d: float
    beta: float
    c_f: float
    residual: float
    beta_stderr: float = float("nan")

    def beta_is_zero(self, n_sigma=2.0):
        """True when ``|beta|`` is within ``n_sigma`` standard errors of zero."""
        return bool(abs(self.beta) <= n_sigma * self.beta_stderr)


def forchheimer_fit(u, grad_p, mu, rho=1.0, rel_noise=0.0):
    """Least squares on ``|grad P| = (mu / K_D) U + beta rho U^2``.

    ``rel_noise`` is the relative uncertainty of each ``grad_p`` (e.g. the
    convergence tolerance).  The standard error of ``beta`` uses the larger
    of that and the scatter of the residuals when there are spare points.
    """
    u = np.abs(np.asarray(u, dtype=float))
    g = np.abs(np.asarray(grad_p, dtype=float))
    if u.size < 2 or np.ptp(u) <= 1e-12 * u.max():
        raise AnalysisError("Forchheimer fit needs at least two distinct velocities")
    A = np.column_stack([u, u * u])
    # column scaling keeps the normal equations well conditioned
    scale = np.abs(A).max(axis=0)
    coef, *_ = np.linalg.lstsq(A / scale, g, rcond=None)
    a, b = coef / scale
    if a <= 0:
        raise AnalysisError("non-positive Darcy term in Forchheimer fit")
    k_d = mu / a
    beta = b / rho
    r = A @ (coef / scale) - g
    res = float(np.linalg.norm(r) / np.linalg.norm(g))
    var = (rel_noise * g) ** 2
    if u.size > 2:
        var = np.maximum(var, np.sum(r * r) / (u.size - 2))
    # covariance of the scaled coefficients for independent errors
    As = A / scale
    pinv = np.linalg.pinv(As)
    cov = (pinv * var) @ pinv.T
    se = math.sqrt(cov[1, 1]) / scale[1] / rho
    return ForchheimerFit(k_d=k_d, beta=beta, c_f=beta * math.sqrt(k_d), residual=res, beta_stderr=se)


def forchheimer_constant(u, grad_p, mu, k_d, rho=1.0):
    """Pointwise ``C_F`` with the Darcy permeability held fixed."""
    u = np.abs(np.asarray(u, dtype=float))
    g = np.abs(np.asarray(grad_p, dtype=float))
    beta = (g - mu * u / k_d) / (rho * u * u)
    return beta * math.sqrt(k_d)


def friction_factor(u, grad_p, k_d, mu, rho=1.0):
    """Permeability-based Reynolds number and friction factor per point."""
    u = np.abs(np.asarray(u, dtype=float))
    g = np.abs(np.asarray(grad_p, dtype=float))
    sk = math.sqrt(k_d)
    return rho * u * sk / mu, g * sk / (rho * u * u)


def reynolds(u, length, nu):
    return np.abs(np.asarray(u, dtype=float)) * length / nu


# -- Barree-Conway ---------------------------------------------------------

def barree_conway(u, k_min, k_d, l_t, e, f, mu=1.0, rho=1.0):
    """Apparent permeability ``K_min + (K_D - K_min) / (1 + Re_T^F)^E``."""
    re_t = rho * l_t * np.abs(np.asarray(u, dtype=float)) / mu
    # huge trial exponents overflow to inf, which correctly gives K_min
    with np.errstate(over="ignore"):
        return k_min + (k_d - k_min) / (1.0 + re_t**f) ** e


@dataclass
class BarreeConwayFit:
    k_min: float
    k_d: float
    l_t: float
    e: float
    f: float
    residual: float

    def k_star(self, u, mu=1.0, rho=1.0):
        return barree_conway(u, self.k_min, self.k_d, self.l_t, self.e, self.f, mu, rho) / self.k_d


def _bc_unpack(p):
    # K_min = K_D * sigmoid(p1) keeps 0 < K_min < K_D
    k_d = math.exp(p[0])
    k_min = k_d / (1.0 + math.exp(-p[1]))
    return k_min, k_d, math.exp(p[2]), math.exp(p[3]), math.exp(p[4])


def barree_conway_fit(u, k_app, mu=1.0, rho=1.0, starts=None, max_nfev=20000, tol=1e-15):
    """Damped least-squares fit of the Barree-Conway model to ``K_app(U)``.

    Residuals are relative, ``model / K_app - 1``, so the fit is the same on
    ``K*`` as on ``K_app``.  Several starting points are tried: the knee of
    the measured curve for ``l_T`` and ``E = F = 1``, plus perturbations.
    """
    u = np.abs(np.asarray(u, dtype=float))
    k = np.asarray(k_app, dtype=float)
    if u.size < 5:
        raise AnalysisError("Barree-Conway fit needs at least five points")
    order = np.argsort(u)
    u, k = u[order], k[order]

    def resid(p):
        k_min, k_d, l_t, e, f = _bc_unpack(p)
        return barree_conway(u, k_min, k_d, l_t, e, f, mu, rho) / k - 1.0

    if starts is None:
        k_hi, k_lo = k.max(), k.min()
        mid = 0.5 * (k_hi + k_lo)
        knee_u = u[np.argmin(np.abs(k - mid))]
        l_knee = mu / (rho * knee_u)
        frac = max(min(k_lo / k_hi * 0.9, 0.99), 1e-3)
        starts = []
        for lt_fac in (1.0, 0.3, 3.0):
            for ef in ((1.0, 1.0), (0.5, 2.0), (2.0, 0.5)):
                starts.append((k_hi, frac * k_hi, lt_fac * l_knee, *ef))
    best = None
    for k_d0, k_min0, l0, e0, f0 in starts:
        r0 = min(max(k_min0 / k_d0, 1e-6), 1 - 1e-9)
        p0 = [math.log(k_d0), math.log(r0 / (1 - r0)), math.log(l0), math.log(e0), math.log(f0)]
        try:
            sol = least_squares(resid, p0, method="lm", xtol=tol, ftol=tol, gtol=tol, max_nfev=max_nfev)
        except (ValueError, FloatingPointError, OverflowError):
            continue
        if not np.all(np.isfinite(sol.fun)):
            continue
        cost = float(np.sqrt(np.mean(sol.fun**2)))
        if best is None or cost < best[0]:
            best = (cost, sol)
    if best is None:
        raise FitError("Barree-Conway fit failed from every starting point")
    cost, sol = best
    params = _bc_unpack(sol.x)
    if not sol.success:
        raise FitError(f"Barree-Conway fit did not converge: {sol.message}", best=params)
    return BarreeConwayFit(*params, residual=cost)


# -- reports ---------------------------------------------------------------

def fit_report(name, params, points=None):
    """Structured-text report plus CSV of per-point values."""
    out = io.StringIO()
    out.write(f"[{name}]\n")
    for key, val in params.items():
        out.write(f"{key} = {val!r}\n")
    if points:
        out.write("\n")
        keys = list(points[0])
        w = csv.writer(out, lineterminator="\n")
        w.writerow(keys)
        for p in points:
            w.writerow([repr(p[k]) if isinstance(p[k], float) else p[k] for k in keys])
    return out.getvalue()
