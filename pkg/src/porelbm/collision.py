"""SRT, TRT and MRT relaxation operators and their rate bookkeeping.

Value-level functions take populations with the direction index last and
broadcast over any leading axes.  The field kernels used by the engine live
in :mod:`porelbm.kernels` and are checked against these functions.
"""
from dataclasses import dataclass, field

import numpy as np

from .lattice import E, OPP, Q, W


class ConfigurationError(ValueError):
    """Invalid combination of relaxation parameters."""


def omega_from_viscosity(nu):
    """Relaxation rate of the shear modes, ``(3 nu + 1/2)^-1``."""
    return 1.0 / (3.0 * nu + 0.5)


def viscosity_from_omega(omega):
    return (1.0 / omega - 0.5) / 3.0


def omega_minus(omega_plus, magic):
    """Antisymmetric TRT rate from the symmetric rate and the magic parameter.

    Solves ``magic = (1/omega_plus - 1/2) (1/omega_minus - 1/2)``.
    """
    if not 0.0 < omega_plus < 2.0:
        raise ConfigurationError(f"omega_plus={omega_plus} outside (0, 2)")
    if not magic > 0.0:
        raise ConfigurationError(f"magic parameter must be positive, got {magic}")
    om = 1.0 / (magic / (1.0 / omega_plus - 0.5) + 0.5)
    if not 0.0 < om < 2.0:
        raise ConfigurationError(f"omega_minus={om} outside (0, 2)")
    return om


def relax_srt(f, feq, omega):
    return f - omega * (f - feq)


def relax_trt(f, feq, omega_plus, omega_minus):
    """Two-relaxation-time update of populations ``f[..., 19]``."""
    f = np.asarray(f, dtype=float)
    feq = np.asarray(feq, dtype=float)
    fp = 0.5 * (f + f[..., OPP])
    fm = 0.5 * (f - f[..., OPP])
    ep = 0.5 * (feq + feq[..., OPP])
    em = 0.5 * (feq - feq[..., OPP])
    return f - omega_plus * (fp - ep) - omega_minus * (fm - em)


# Polynomials in the velocity components, in the usual order of the
# D3Q19 moment set: density, energy, energy squared, momentum and heat
# flux per axis, the five stress components with their fourth-order
# partners, and the three antisymmetric third-order modes.
def _moment_polynomials():
    ex, ey, ez = (E[:, a].astype(float) for a in range(3))
    e2 = ex**2 + ey**2 + ez**2
    return [
        np.ones(Q),
        e2,
        e2**2,
        ex, e2 * ex,
        ey, e2 * ey,
        ez, e2 * ez,
        3 * ex**2 - e2, e2 * (3 * ex**2 - e2),
        ey**2 - ez**2, e2 * (ey**2 - ez**2),
        ex * ey, ey * ez, ex * ez,
        ex * (ey**2 - ez**2), ey * (ez**2 - ex**2), ez * (ex**2 - ey**2),
    ]


#: Row indices of the conserved moments (density and the three momenta).
CONSERVED = (0, 3, 5, 7)
#: Rows relaxed with the shear rate.
VISCOUS = (9, 11, 13, 14, 15)
#: Energy rows whose rate keeps a fixed ratio to the shear rate.
ENERGY = (1, 2)
#: Remaining non-conserved rows.
KINETIC = (4, 6, 8, 10, 12, 16, 17, 18)


@dataclass(frozen=True)
class MomentBasis:
    """Orthogonal moment transform with its exact inverse."""

    M: np.ndarray
    norms: np.ndarray = field(repr=False)
    Minv: np.ndarray = field(repr=False)

    def to_moments(self, f):
        return np.asarray(f) @ self.M.T

    def from_moments(self, m):
        return np.asarray(m) @ self.Minv.T


def build_moment_basis():
    """Gram-Schmidt orthogonalisation of the D3Q19 moment polynomials.

    The rows are orthogonal but not normalised; the inverse is
    ``M.T @ diag(1 / diag(M M.T))``.
    """
    rows = []
    for p in _moment_polynomials():
        v = p.copy()
        for r in rows:
            v -= (v @ r) / (r @ r) * r
        # the polynomial set is linearly independent on the 19 velocities
        assert np.linalg.norm(v) > 1e-8
        rows.append(v)
    M = np.array(rows)
    # clean round-off so that integer-valued rows are exact
    M[np.abs(M) < 1e-13] = 0.0
    norms = np.einsum("ij,ij->i", M, M)
    Minv = M.T / norms
    return MomentBasis(M=M, norms=norms, Minv=Minv)


def mrt_rates(s_nu, ratio=4.6):
    """Relaxation rates for the 19 moments.

    Conserved moments get zero, the five stress moments ``s_nu``, the two
    energy moments a rate such that ``(1/s_nu - 1/2) / (1/s_i - 1/2)`` equals
    ``ratio``, and the rest ``8 (2 - s_nu) / (8 - s_nu)``.
    """
    if not 0.0 < s_nu <= 2.0:
        raise ConfigurationError(f"s_nu={s_nu} outside (0, 2]")
    s = np.zeros(Q)
    s[list(VISCOUS)] = s_nu
    s[list(KINETIC)] = 8.0 * (2.0 - s_nu) / (8.0 - s_nu)
    s[list(ENERGY)] = 1.0 / ((1.0 / s_nu - 0.5) / ratio + 0.5)
    return s


def relax_mrt(f, feq, basis, rates):
    f = np.asarray(f, dtype=float)
    m = (f - feq) @ basis.M.T
    return f - (m * rates) @ basis.Minv.T


@dataclass(frozen=True)
class CollisionConfig:
    """Collision operator choice and its relaxation parameters.

    ``nu`` fixes the shear rate for every variant.  ``magic`` is only used
    by TRT, ``energy_ratio`` only by MRT.
    """

    kind: str = "TRT"
    nu: float = 1.0 / 6.0
    magic: float = 0.25
    energy_ratio: float = 4.6

    def __post_init__(self):
        kind = self.kind.upper()
        object.__setattr__(self, "kind", kind)
        if kind not in ("SRT", "TRT", "MRT"):
            raise ConfigurationError(f"unknown collision operator {self.kind!r}")
        if not self.nu > 0:
            raise ConfigurationError("viscosity must be positive")
        if kind == "TRT":
            omega_minus(self.omega, self.magic)
        if kind == "MRT" and not self.energy_ratio > 0:
            raise ConfigurationError("energy ratio must be positive")

    @property
    def omega(self):
        """Shear relaxation rate (omega, omega+ or s_nu)."""
        om = omega_from_viscosity(self.nu)
        if not 0.0 < om < 2.0:
            raise ConfigurationError(f"rate {om} outside (0, 2)")
        return om

    @property
    def omega_minus(self):
        if self.kind == "TRT":
            return omega_minus(self.omega, self.magic)
        if self.kind == "SRT":
            return self.omega
        raise ConfigurationError("MRT has no single antisymmetric rate")

    @property
    def effective_magic(self):
        """Magic parameter implied by the rates (SRT: (1/omega - 1/2)^2)."""
        if self.kind == "TRT":
            return self.magic
        return (1.0 / self.omega - 0.5) ** 2

    def rates(self):
        return mrt_rates(self.omega, self.energy_ratio)

    def relax(self, f, feq, basis=None):
        """Value-level collision of populations ``f[..., 19]``."""
        if self.kind == "SRT":
            return relax_srt(f, feq, self.omega)
        if self.kind == "TRT":
            return relax_trt(f, feq, self.omega, self.omega_minus)
        basis = basis or build_moment_basis()
        return relax_mrt(f, feq, basis, self.rates())


def linear_stability_norm(f, rho0=1.0):
    """Weighted L2 distance of a field from the uniform rest state."""
    d = f - W * rho0
    return float(np.sqrt(np.sum(d * d / W)))
