"""Solid-wall bounce-back schemes and the periodic pressure-drop exchange.

Every wall rule reconstructs the population ``f_kbar(x_f1, t+1)`` that
would have streamed out of the solid, from post-collision values ``ft`` at
up to three fluid cells on the line ``x_f1, x_f1 - e_k, x_f1 - 2 e_k``
where ``k`` points from the fluid into the wall.

Except for IEBB each scheme is a fixed linear combination of

    ft_k(x_f1), ft_kbar(x_f1), ft_k(x_f2), ft_kbar(x_f2), ft_k(x_f3)

so the coefficients are computed once per link at setup.
"""
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .collision import ConfigurationError
from .lattice import CS2, E, OPP, RHO0, W

SCHEMES = ("SBB", "LIBB", "QIBB", "IEBB", "MR", "CLI")


def sbb(ft_k1):
    return ft_k1


def libb(q, ft_k1, ft_kb1, ft_k2):
    if q < 0.5:
        return (1.0 - 2.0 * q) * ft_k2 + 2.0 * q * ft_k1
    return (1.0 - 1.0 / (2.0 * q)) * ft_kb1 + 1.0 / (2.0 * q) * ft_k1


def qibb(q, ft_k1, ft_kb1, ft_k2, ft_kb2, ft_k3):
    if q < 0.5:
        return q * (1.0 + 2.0 * q) * ft_k1 + (1.0 - 4.0 * q * q) * ft_k2 - q * (1.0 - 2.0 * q) * ft_k3
    return (
        (2.0 * q - 1.0) / q * ft_kb1
        + 1.0 / (q * (2.0 * q + 1.0)) * ft_k1
        + (1.0 - 2.0 * q) / (2.0 * q + 1.0) * ft_kb2
    )


def mr(q, ft_k1, ft_kb1, ft_k2, ft_kb2, ft_k3):
    a = (1.0 - 2.0 * q - 2.0 * q * q) / (1.0 + q) ** 2
    b = q * q / (1.0 + q) ** 2
    return a * ft_k2 + b * ft_k3 - a * ft_kb1 - b * ft_kb2 + ft_k1


def cli(q, ft_k1, ft_kb1, ft_k2):
    c = (1.0 - 2.0 * q) / (1.0 + 2.0 * q)
    return c * ft_k2 - c * ft_kb1 + ft_k1


def iebb_weight(q, omega):
    """Interpolation weight X between the bounced value and the auxiliary one."""
    if q < 0.5:
        denom = 1.0 / omega - 2.0
        if denom == 0.0:
            raise ConfigurationError("IEBB undefined for omega = 1/2")
        return (2.0 * q - 1.0) / denom
    return (2.0 * q - 1.0) / (1.0 / omega + 0.5)


def iebb_auxiliary(k, rho1, u1, u_bf):
    """Auxiliary population at the solid node for direction ``k``.

    The density term is the full local density, which is the fluctuation of
    the offset-storage form plus the rest weight carried by every population.
    """
    e = E[k]
    eu_bf = e @ np.asarray(u_bf, dtype=float)
    eu = e @ np.asarray(u1, dtype=float)
    uu = np.dot(u1, u1)
    return W[k] * (rho1 + RHO0 * (eu_bf / CS2 + 0.5 * eu * eu / CS2**2 - 0.5 * uu / CS2))


def iebb(q, k, omega, ft_k1, rho1, u1, u2=None):
    if q < 0.5:
        u_bf = np.asarray(u2, dtype=float)
    else:
        u_bf = (1.0 - 3.0 / (2.0 * q)) * np.asarray(u1, dtype=float)
    x = iebb_weight(q, omega)
    return (1.0 - x) * ft_k1 + x * iebb_auxiliary(k, rho1, u1, u_bf)


FALLBACK_CHAIN = {
    "SBB": ("SBB",),
    "LIBB": ("LIBB", "SBB"),
    "QIBB": ("QIBB", "LIBB", "SBB"),
    "MR": ("MR", "CLI", "LIBB", "SBB"),
    "CLI": ("CLI", "LIBB", "SBB"),
    "IEBB": ("IEBB", "SBB"),
}


def _raw_coefficients(scheme, q):
    """Coefficients and the stencil requirement of one scheme, ignoring neighbours.

    Returns ``(coeffs, needs2, needs3)``; IEBB only carries its bounce part.
    """
    n = q.size
    c = np.zeros((n, 5))
    c[:, 0] = 1.0
    lo = q < 0.5
    none = np.zeros(n, dtype=bool)
    if scheme in ("SBB", "IEBB"):
        return c, (lo if scheme == "IEBB" else none), none
    if scheme == "LIBB":
        c[:, 0] = np.where(lo, 2 * q, 1 / (2 * q))
        c[:, 1] = np.where(lo, 0.0, 1 - 1 / (2 * q))
        c[:, 2] = np.where(lo, 1 - 2 * q, 0.0)
        return c, lo, none
    if scheme == "QIBB":
        c[:, 0] = np.where(lo, q * (1 + 2 * q), 1 / (q * (2 * q + 1)))
        c[:, 1] = np.where(lo, 0.0, (2 * q - 1) / q)
        c[:, 2] = np.where(lo, 1 - 4 * q * q, 0.0)
        c[:, 3] = np.where(lo, 0.0, (1 - 2 * q) / (2 * q + 1))
        c[:, 4] = np.where(lo, -q * (1 - 2 * q), 0.0)
        return c, np.ones(n, dtype=bool), lo
    if scheme == "MR":
        a = (1 - 2 * q - 2 * q * q) / (1 + q) ** 2
        b = q * q / (1 + q) ** 2
        c[:, 1] = -a
        c[:, 2] = a
        c[:, 3] = -b
        c[:, 4] = b
        return c, np.ones(n, dtype=bool), np.ones(n, dtype=bool)
    if scheme == "CLI":
        a = (1 - 2 * q) / (1 + 2 * q)
        c[:, 1] = -a
        c[:, 2] = a
        return c, np.ones(n, dtype=bool), none
    raise ConfigurationError(f"unknown wall scheme {scheme!r}")


def scheme_coefficients(scheme, q, has2, has3, fallback="cascade"):
    """Vectorised coefficient table for the linear schemes.

    Links whose stencil reaches into the solid drop down the scheme's
    fallback chain (e.g. MR -> CLI -> LIBB -> SBB) to the first scheme
    whose neighbours are all fluid.  With ``fallback="sbb"`` they go
    straight to simple bounce-back.  Returns ``(coeffs, used)`` with
    ``coeffs`` of shape ``(n, 5)`` and ``used`` the scheme name per link.
    """
    if scheme not in FALLBACK_CHAIN:
        raise ConfigurationError(f"unknown wall scheme {scheme!r}")
    if fallback == "cascade":
        chain = FALLBACK_CHAIN[scheme]
    elif fallback == "sbb":
        chain = (scheme, "SBB") if scheme != "SBB" else ("SBB",)
    else:
        raise ConfigurationError(f"unknown fallback mode {fallback!r}")
    q = np.asarray(q, dtype=float)
    has2 = np.asarray(has2, dtype=bool)
    has3 = np.asarray(has3, dtype=bool)
    coeffs = np.zeros((q.size, 5))
    used = np.full(q.size, "", dtype=object)
    todo = np.ones(q.size, dtype=bool)
    for name in chain:
        c, n2, n3 = _raw_coefficients(name, q)
        ok = todo & ~(n2 & ~has2) & ~(n3 & ~has3)
        coeffs[ok] = c[ok]
        used[ok] = name
        todo &= ~ok
    return coeffs, used


@dataclass
class WallLinkSet:
    """All fluid-to-solid links of a flag field with their cached stencils.

    ``i1, i2, i3`` are flat cell indices of ``x_f1`` and the next two cells
    opposite to the link (``-1`` when not fluid); ``s2, s3`` are +1/-1 when
    those cells were reached across the low/high face of the pressure axis,
    so their populations carry the pressure jump ``s * w * drho``.
    """

    shape: tuple
    i1: np.ndarray
    k: np.ndarray
    q: np.ndarray
    i2: np.ndarray
    i3: np.ndarray
    s2: np.ndarray
    s3: np.ndarray
    missed: int = 0
    diagnostics: Counter = field(default_factory=Counter)

    def __len__(self):
        return self.i1.size

    @property
    def kbar(self):
        return OPP[self.k]

    @classmethod
    def build(cls, solid, geometry=None, axis=0):
        """Collect links from a solid mask; ``q`` from ``geometry`` or 0.5."""
        solid = np.asarray(solid, dtype=bool)
        shape = solid.shape
        fluid_idx = []
        ks = []
        for k in range(1, 19):
            nb_solid = np.roll(solid, shift=tuple(-E[k]), axis=(0, 1, 2))
            idx = np.flatnonzero(~solid & nb_solid)
            fluid_idx.append(idx)
            ks.append(np.full(idx.size, k, dtype=np.int64))
        i1 = np.concatenate(fluid_idx)
        k = np.concatenate(ks)
        order = np.lexsort((k, i1))
        i1, k = i1[order], k[order]

        ijk = np.stack(np.unravel_index(i1, shape), axis=-1)
        e = E[k]
        missed = 0
        if geometry is None:
            q = np.full(i1.size, 0.5)
        else:
            q = geometry.wall_distance(ijk + 0.5, e)
            bad = ~np.isfinite(q)
            missed = int(bad.sum())
            q[bad] = 0.5

        n = np.array(shape)
        flat_solid = solid.ravel()

        def neighbour(steps):
            p = ijk - steps * e
            cross = p[:, axis]
            s = np.where(cross < 0, 1, np.where(cross >= n[axis], -1, 0))
            p = p % n
            idx = np.ravel_multi_index(tuple(p.T), shape)
            fluid = ~flat_solid[idx]
            return np.where(fluid, idx, -1), np.where(fluid, s, 0)

        i2, s2 = neighbour(1)
        i3, s3 = neighbour(2)
        i3 = np.where(i2 >= 0, i3, -1)
        s3 = np.where(i2 >= 0, s3, 0)
        return cls(shape, i1, k, q, i2, i3, s2, s3, missed=missed)

    def report(self):
        """Plain-text diagnostics: link count, q range and histogram, fallbacks."""
        lines = [f"wall links: {len(self)}"]
        if len(self):
            lines.append(f"q min/max: {self.q.min():.6f} {self.q.max():.6f}")
            hist, edges = np.histogram(self.q, bins=10, range=(0.0, 1.0))
            for h, a, b in zip(hist, edges[:-1], edges[1:]):
                lines.append(f"  q in [{a:.1f}, {b:.1f}): {h}")
        lines.append(f"links with no ray-sphere hit (q set to 0.5): {self.missed}")
        for key, count in sorted(self.diagnostics.items()):
            lines.append(f"fallback {key}: {count}")
        return "\n".join(lines) + "\n"


class WallBoundary:
    """A wall scheme bound to a link set, applied to whole fields."""

    def __init__(self, links, scheme="SBB", omega=None, fallback="cascade"):
        scheme = scheme.upper()
        if scheme not in SCHEMES:
            raise ConfigurationError(f"unknown wall scheme {scheme!r}")
        self.links = links
        self.scheme = scheme
        has2 = links.i2 >= 0
        has3 = links.i3 >= 0
        self.coeffs, used = scheme_coefficients(scheme, links.q, has2, has3, fallback)
        fallback = used != scheme
        self.n_fallback = int(fallback.sum())
        for name, count in zip(*np.unique(used[fallback].astype(str), return_counts=True)):
            links.diagnostics[f"{scheme}->{name}"] = int(count)
        self._k = links.k
        self._kb = links.kbar
        # neighbour indices are only read where the coefficient is nonzero
        self._i2 = np.where(has2, links.i2, links.i1)
        self._i3 = np.where(has3, links.i3, links.i1)
        self._wk = W[self._k]
        self._wkb = W[self._kb]
        if scheme == "IEBB":
            if omega is None:
                raise ConfigurationError("IEBB needs the shear relaxation rate")
            q = links.q
            lo = q < 0.5
            if np.any(lo):
                denom = 1.0 / omega - 2.0
                if denom == 0.0:
                    raise ConfigurationError("IEBB undefined for omega = 1/2")
            with np.errstate(divide="ignore"):
                x = np.where(lo, (2 * q - 1) / (1.0 / omega - 2.0), (2 * q - 1) / (1.0 / omega + 0.5))
            x[fallback] = 0.0
            self._x = x
            self._lo = lo & ~fallback
            self._ubf_scale = np.where(lo, 0.0, 1.0 - 3.0 / (2.0 * q))
            self._e = E[self._k].astype(float)

    def values(self, ft, drho=0.0):
        """Reconstructed populations ``f_kbar(x_f1)`` for every link.

        ``ft`` is the post-collision field, any shape ending in 19.
        """
        F = ft.reshape(-1, 19)
        L = self.links
        c = self.coeffs
        k, kb = self._k, self._kb
        j2 = drho * L.s2
        f1 = F[L.i1, k]
        # same correction form as the compiled kernel
        val = f1 + c[:, 1] * (F[L.i1, kb] - f1)
        if self.scheme not in ("SBB", "IEBB"):
            val = val + c[:, 2] * (F[self._i2, k] + j2 * self._wk - f1)
            val = val + c[:, 3] * (F[self._i2, kb] + j2 * self._wkb - f1)
            val = val + c[:, 4] * (F[self._i3, k] + drho * L.s3 * self._wk - f1)
        if self.scheme == "IEBB":
            val = self._iebb(F, val)
        return val

    def _iebb(self, F, val):
        L = self.links
        f1 = F[L.i1]
        rho1 = f1.sum(axis=1)
        u1 = f1 @ E / RHO0
        u2 = F[self._i2] @ E / RHO0
        u_bf = np.where(self._lo[:, None], u2, self._ubf_scale[:, None] * u1)
        e = self._e
        eu_bf = np.einsum("ia,ia->i", e, u_bf)
        eu = np.einsum("ia,ia->i", e, u1)
        uu = np.einsum("ia,ia->i", u1, u1)
        fstar = self._wk * (rho1 + RHO0 * (eu_bf / CS2 + 0.5 * eu * eu / CS2**2 - 0.5 * uu / CS2))
        return val + self._x * (fstar - val)

    def apply(self, ft, f, drho=0.0):
        """Write reconstructed populations into the streamed field ``f``."""
        if self.scheme == "IEBB":
            vals = self.values(ft, drho)
            f.reshape(-1, 19)[self.links.i1, self._kb] = vals
            return vals
        L = self.links
        vals = np.empty(len(L))
        kernels.apply_links(
            ft.reshape(-1, 19), f.reshape(-1, 19), L.i1, self._k, self._kb,
            self._i2, self._i3, self.coeffs, L.s2.astype(float), L.s3.astype(float), drho, vals,
        )
        return vals

    def momentum_exchange(self, ft, f):
        """Force on the solid: sum of ``e_k (ft_k(x_f1) + f_kbar(x_f1, t+1))``."""
        Ft = ft.reshape(-1, 19)
        Fn = f.reshape(-1, 19)
        L = self.links
        s = Ft[L.i1, self._k] + Fn[L.i1, self._kb]
        return E[self._k].T.astype(float) @ s


@dataclass(frozen=True)
class PeriodicPressure:
    """Pressure drop ``dp = c_s^2 drho`` imposed across the periodic faces of ``axis``."""

    axis: int = 0
    drho: float = 0.0

    @property
    def dp(self):
        return CS2 * self.drho


def periodic_pressure_exchange(inlet, outlet, drho):
    """Ghost layers for a pressure-periodic axis.

    ``inlet`` and ``outlet`` are the populations of the first and last cell
    layers, shape ``(..., 19)``.  Returns the ghost layer upstream of the
    inlet (a copy of the outlet plus ``w_k drho``) and downstream of the
    outlet (a copy of the inlet minus ``w_k drho``).
    """
    ghost_in = np.asarray(outlet, dtype=float) + W * drho
    ghost_out = np.asarray(inlet, dtype=float) - W * drho
    return ghost_in, ghost_out


def crossing_links(solid, axis=0):
    """Weight sum of fluid-fluid links across the periodic faces of ``axis``.

    Returns ``(w_in, w_out)``: the summed weights of populations streaming
    into the low layer from the high layer and vice versa.
    """
    solid = np.asarray(solid, dtype=bool)
    lo = np.take(solid, 0, axis=axis)
    hi = np.take(solid, -1, axis=axis)
    w_in = 0.0
    w_out = 0.0
    other = [a for a in range(3) if a != axis]
    for k in range(1, 19):
        c = E[k, axis]
        if c == 0:
            continue
        # source cell of the pull, in the 2D face coordinates
        shift = tuple(int(E[k, a]) for a in other)
        if c == 1:
            src = np.roll(hi, shift, axis=(0, 1))
            w_in += W[k] * np.count_nonzero(~lo & ~src)
        else:
            src = np.roll(lo, shift, axis=(0, 1))
            w_out += W[k] * np.count_nonzero(~hi & ~src)
    return w_in, w_out
