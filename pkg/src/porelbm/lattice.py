"""D3Q19 lattice, incompressible equilibrium and moment evaluation.

All quantities are in lattice units (dx = dt = 1).  Populations always
carry the direction index last, ``f[..., k]``; simulation fields are
``(nx, ny, nz, 19)`` arrays.
"""
from dataclasses import dataclass

import numpy as np

#: Mean density of the incompressible model.
RHO0 = 1.0

#: Lattice speed of sound squared, c_s^2 = 1/3.
CS2 = 1.0 / 3.0

# Rest, six axis links, twelve face diagonals.  Opposite directions are
# stored next to each other so that opp(k) = k ^ 1 for k >= 1.
E = np.array(
    [
        [0, 0, 0],
        [1, 0, 0], [-1, 0, 0],
        [0, 1, 0], [0, -1, 0],
        [0, 0, 1], [0, 0, -1],
        [1, 1, 0], [-1, -1, 0],
        [1, -1, 0], [-1, 1, 0],
        [1, 0, 1], [-1, 0, -1],
        [1, 0, -1], [-1, 0, 1],
        [0, 1, 1], [0, -1, -1],
        [0, 1, -1], [0, -1, 1],
    ],
    dtype=np.int64,
)

W = np.array([1.0 / 3.0] + [1.0 / 18.0] * 6 + [1.0 / 36.0] * 12)

OPP = np.array([0] + [k + 1 if k % 2 else k - 1 for k in range(1, 19)], dtype=np.int64)

Q = 19


class StabilityError(RuntimeError):
    """Raised when the flow state leaves the range the lattice can represent."""


@dataclass(frozen=True)
class LatticeDescriptor:
    """Velocity set, weights and opposite map of a lattice."""

    e: np.ndarray = E
    w: np.ndarray = W
    opp: np.ndarray = OPP
    cs2: float = CS2

    @property
    def q(self):
        return len(self.w)

    def check(self, atol=1e-15):
        """Return a dict of named identity checks (True when satisfied)."""
        e = self.e.astype(float)
        w = self.w
        second = np.einsum("k,ka,kb->ab", w, e, e)
        return {
            "weights_sum_to_one": abs(w.sum() - 1.0) <= atol,
            "first_moment_zero": bool(np.all(np.abs(w @ e) <= atol)),
            "second_moment_isotropic": bool(
                np.allclose(second, self.cs2 * np.eye(3), rtol=0, atol=atol)
            ),
            "opposite_involution": bool(np.all(self.opp[self.opp] == np.arange(self.q))),
            "opposite_reverses": bool(np.all(self.e[self.opp] == -self.e)),
        }


D3Q19 = LatticeDescriptor()


def equilibrium(rho, u, check=True):
    """Incompressible equilibrium populations.

    Parameters
    ----------
    rho : float or array_like
        Density, ``rho = RHO0 + delta_rho``.
    u : array_like, shape (..., 3)
        Velocity.
    check : bool
        Reject velocities at or above the lattice sound speed.

    Returns
    -------
    ndarray, shape (..., 19)
    """
    rho = np.asarray(rho, dtype=float)
    u = np.asarray(u, dtype=float)
    if check:
        if np.any(rho <= 0):
            raise ValueError("density must be positive")
        speed2 = np.sum(u * u, axis=-1)
        if np.any(speed2 >= CS2) or not np.all(np.isfinite(speed2)):
            raise StabilityError(
                f"|u| = {np.sqrt(np.max(speed2)):.4g} exceeds the lattice sound speed; "
                "the flow is under-resolved"
            )
    eu = u @ E.T
    uu = np.sum(u * u, axis=-1)[..., None]
    return W * (rho[..., None] + RHO0 * (eu / CS2 + 0.5 * eu**2 / CS2**2 - 0.5 * uu / CS2))


def moments(f):
    """Density and velocity of populations ``f[..., 19]``.

    The velocity is the first moment divided by ``RHO0`` (not by the local
    density), as required by the incompressible model.
    """
    f = np.asarray(f, dtype=float)
    rho = f.sum(axis=-1)
    u = (f @ E) / RHO0
    return rho, u

