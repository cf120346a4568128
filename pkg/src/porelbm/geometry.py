"""Periodic sphere packs, voxelisation and exact link wall distances.

Cell ``i`` spans ``[i, i + 1)`` with its centre at ``i + 0.5``; a plane at
an integer coordinate therefore sits half-way on every link crossing it.
"""
import itertools
import math
from dataclasses import dataclass, field

import numpy as np


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float


@dataclass
class SpherePack:
    """Spheres in a box with per-axis periodicity (all lengths in cells)."""

    shape: tuple
    spheres: list = field(default_factory=list)
    periodic: tuple = (True, True, True)

    def __post_init__(self):
        self.shape = tuple(int(n) for n in self.shape)
        self.periodic = tuple(bool(p) for p in self.periodic)
        self.spheres = [
            s if isinstance(s, Sphere) else Sphere(tuple(map(float, s[0])), float(s[1]))
            for s in self.spheres
        ]

    def _image_offsets(self):
        ranges = [(-1, 0, 1) if p else (0,) for p in self.periodic]
        L = np.array(self.shape, dtype=float)
        return np.array(list(itertools.product(*ranges)), dtype=float) * L

    def is_solid(self, points):
        """Points inside (or on) any sphere, periodic images included."""
        points = np.asarray(points, dtype=float)
        solid = np.zeros(points.shape[:-1], dtype=bool)
        L = np.array(self.shape, dtype=float)
        for s in self.spheres:
            if s.radius <= 0:
                continue
            d = points - np.array(s.center)
            for a in range(3):
                if self.periodic[a]:
                    d[..., a] -= L[a] * np.round(d[..., a] / L[a])
            solid |= np.einsum("...a,...a->...", d, d) <= s.radius**2
        return solid

    def wall_distance(self, points, directions):
        """Fraction of each link ``x -> x + e`` travelled before hitting a sphere.

        Returns ``q`` in (0, 1] or NaN where the segment misses every sphere.
        """
        x = np.asarray(points, dtype=float)
        e = np.asarray(directions, dtype=float)
        q = np.full(x.shape[0], np.inf)
        a = np.einsum("ij,ij->i", e, e)
        L = np.array(self.shape, dtype=float)
        for s in self.spheres:
            c0 = np.array(s.center)
            base = x - c0
            for a_ in range(3):
                if self.periodic[a_]:
                    base[:, a_] -= L[a_] * np.round(base[:, a_] / L[a_])
            for off in self._image_offsets():
                d = base - off
                b = np.einsum("ij,ij->i", d, e)
                c = np.einsum("ij,ij->i", d, d) - s.radius**2
                disc = b * b - a * c
                ok = disc >= 0
                sq = np.sqrt(np.where(ok, disc, 0.0))
                # entry point of the ray; stable form of (-b - sq) / a
                with np.errstate(divide="ignore", invalid="ignore"):
                    t = np.where(b < 0, c / (-b + sq), (-b - sq) / a)
                hit = ok & (t > 0) & (t <= 1.0 + 1e-12)
                q = np.where(hit & (t < q), np.minimum(t, 1.0), q)
        q[~np.isfinite(q)] = np.nan
        return q

    def solid_fraction(self):
        """Analytic solid fraction of a single-sphere periodic cube."""
        if len(self.spheres) != 1 or len(set(self.shape)) != 1:
            raise GeometryError("analytic fraction only for one sphere in a cube")
        return solid_fraction(self.spheres[0].radius, self.shape[0])


@dataclass
class Channel:
    """Plane channel: solid below ``lower`` and above ``upper`` along ``normal``."""

    shape: tuple
    lower: float
    upper: float
    normal: int = 1

    def is_solid(self, points):
        y = np.asarray(points, dtype=float)[..., self.normal]
        return (y <= self.lower) | (y >= self.upper)

    def wall_distance(self, points, directions):
        y = np.asarray(points, dtype=float)[:, self.normal]
        c = np.asarray(directions, dtype=float)[:, self.normal]
        q = np.full(y.shape, np.nan)
        down = c < 0
        up = c > 0
        q[down] = (y[down] - self.lower) / -c[down]
        q[up] = (self.upper - y[up]) / c[up]
        q[(q <= 0) | (q > 1)] = np.nan
        return q


def cell_centers(shape):
    grids = np.meshgrid(*[np.arange(n) + 0.5 for n in shape], indexing="ij")
    return np.stack(grids, axis=-1)


def voxelize(geometry):
    """Boolean solid mask; a cell is solid iff its centre is inside (ties solid)."""
    return geometry.is_solid(cell_centers(geometry.shape))


def _cap_volume(r, h):
    return math.pi * h * h * (3.0 * r - h) / 3.0


def solid_fraction(r, L):
    """Solid fraction of one sphere of radius ``r`` centred in a periodic cube ``L``.

    Caps protruding through the six faces overlap the neighbouring images and
    are removed once; the formula is exact while the caps stay disjoint.
    """
    if r <= 0:
        return 0.0
    if r > L / math.sqrt(2.0):
        raise GeometryError(f"r/L = {r / L:.4f} beyond the disjoint-cap range")
    vol = 4.0 / 3.0 * math.pi * r**3
    h = r - L / 2.0
    if h > 0:
        vol -= 6.0 * _cap_volume(r, h)
    return vol / L**3


def max_fraction():
    """Largest solid fraction covered by :func:`solid_fraction`."""
    return solid_fraction(1.0 / math.sqrt(2.0), 1.0)


def domain_size_for_fraction(r, chi, rtol=1e-12):
    """Edge of the periodic cube holding one sphere at solid fraction ``chi``."""
    if not 0.0 < chi < max_fraction():
        raise GeometryError(f"solid fraction {chi} not reachable (max {max_fraction():.6f})")
    lo, hi = math.sqrt(2.0) * r, r * (4.0 * math.pi / (3.0 * chi)) ** (1.0 / 3.0) * 2.0
    # solid_fraction decreases monotonically in L
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if solid_fraction(r, mid) > chi:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def single_sphere_rev(radius, chi, offset=0.0, axis=0, exact_fraction=True):
    """Periodic cube with one centred sphere, optionally shifted along ``axis``.

    The cube edge is rounded to whole cells.  With ``exact_fraction`` the
    radius is then rescaled so the analytic solid fraction is exactly ``chi``;
    otherwise the nominal radius is kept and the fraction follows.
    """
    L = max(2, int(round(domain_size_for_fraction(radius, chi))))
    r = radius
    if exact_fraction:
        r = radius * L / domain_size_for_fraction(radius, chi)
    center = [L / 2.0] * 3
    center[axis] += offset
    return SpherePack(shape=(L, L, L), spheres=[Sphere(tuple(center), r)])


def write_pack(pack, path):
    """Write a pack description file (one keyword line per item)."""
    with open(path, "w") as fh:
        fh.write("# sphere pack, lengths in lattice cells\n")
        fh.write("shape %d %d %d\n" % pack.shape)
        fh.write("periodic %d %d %d\n" % tuple(int(p) for p in pack.periodic))
        for s in pack.spheres:
            fh.write("sphere %.17g %.17g %.17g %.17g\n" % (*s.center, s.radius))


def read_pack(path):
    shape = None
    periodic = (True, True, True)
    spheres = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, *vals = line.split()
            if key == "shape":
                shape = tuple(int(v) for v in vals)
            elif key == "periodic":
                periodic = tuple(bool(int(v)) for v in vals)
            elif key == "sphere":
                x, y, z, r = map(float, vals)
                spheres.append(Sphere((x, y, z), r))
            else:
                raise GeometryError(f"{path}:{lineno}: unknown keyword {key!r}")
    if shape is None or len(shape) != 3:
        raise GeometryError(f"{path}: missing 'shape' line")
    return SpherePack(shape=shape, spheres=spheres, periodic=periodic)


def link_points(index, shape):
    """Cell-centre coordinates of flat cell indices."""
    ijk = np.stack(np.unravel_index(index, shape), axis=-1)
    return ijk + 0.5
