"""Compiled per-cell kernels for streaming and collision.

Fields are ``(nx, ny, nz, 19)`` float64 arrays.  Every kernel reads one
buffer and writes disjoint cells, so the result does not depend on the
iteration order.
"""
import numba
import numpy as np

from .lattice import CS2, E, RHO0, W

_E = E.copy()
_W = W.copy()


@numba.njit(cache=True)
def stream_pull(src, dst, fluid, axis, drho):
    """Pull streaming with the periodic pressure jump along ``axis``.

    Populations entering through the low face along ``axis`` gain
    ``w_k drho``; those entering through the high face lose it.
    """
    nx, ny, nz, q = src.shape
    n_ax = src.shape[axis]
    for x in range(nx):
        for y in range(ny):
            for z in range(nz):
                if not fluid[x, y, z]:
                    continue
                p = x if axis == 0 else (y if axis == 1 else z)
                for k in range(q):
                    xs = x - _E[k, 0]
                    ys = y - _E[k, 1]
                    zs = z - _E[k, 2]
                    if xs < 0:
                        xs += nx
                    elif xs >= nx:
                        xs -= nx
                    if ys < 0:
                        ys += ny
                    elif ys >= ny:
                        ys -= ny
                    if zs < 0:
                        zs += nz
                    elif zs >= nz:
                        zs -= nz
                    v = src[xs, ys, zs, k]
                    c = _E[k, axis]
                    if c == 1 and p == 0:
                        v += _W[k] * drho
                    elif c == -1 and p == n_ax - 1:
                        v -= _W[k] * drho
                    dst[x, y, z, k] = v


def neighbour_table(fluid):
    """Flat source index of every pulled population of every fluid cell.

    Returns ``(cells, table)`` with ``table[i, k]`` the flat index of
    ``x_i - e_k`` (periodic wrap) for ``cells[i]``.
    """
    shape = fluid.shape
    cells = np.flatnonzero(fluid.ravel())
    ijk = np.stack(np.unravel_index(cells, shape), axis=-1)
    table = np.empty((cells.size, 19), dtype=np.int64)
    for k in range(19):
        src = (ijk - _E[k]) % np.array(shape)
        table[:, k] = np.ravel_multi_index(tuple(src.T), shape)
    return cells, table


def face_jumps(cells, shape, axis):
    """Entries ``(row, k, sign)`` of populations crossing the periodic faces."""
    ijk = np.stack(np.unravel_index(cells, shape), axis=-1)
    p = ijk[:, axis]
    rows, ks, signs = [], [], []
    for k in range(19):
        c = _E[k, axis]
        if c == 1:
            sel = np.flatnonzero(p == 0)
        elif c == -1:
            sel = np.flatnonzero(p == shape[axis] - 1)
        else:
            continue
        rows.append(sel)
        ks.append(np.full(sel.size, k))
        signs.append(np.full(sel.size, float(c)))
    return (
        np.concatenate(rows).astype(np.int64),
        np.concatenate(ks).astype(np.int64),
        np.concatenate(signs),
    )


@numba.njit(cache=True)
def stream_table(src, dst, cells, table, jump_rows, jump_k, jump_sign, drho):
    """Pull streaming through a precomputed neighbour table.

    ``src`` and ``dst`` are flat ``(n_cells, 19)`` views.
    """
    for i in range(cells.size):
        n = cells[i]
        for k in range(19):
            dst[n, k] = src[table[i, k], k]
    if drho != 0.0:
        for j in range(jump_rows.size):
            n = cells[jump_rows[j]]
            k = jump_k[j]
            dst[n, k] += jump_sign[j] * _W[k] * drho


@numba.njit(cache=True)
def apply_links(ft, fn, i1, k, kb, i2, i3, coeffs, s2, s3, drho, out):
    """Linear wall schemes on flat fields; also returns the values in ``out``."""
    for j in range(i1.size):
        a = i1[j]
        kk = k[j]
        kbb = kb[j]
        c = coeffs[j]
        # coefficients sum to one, so write the combination as corrections to
        # ft_k(x_f1); a uniform state is then reproduced without round-off
        f1 = ft[a, kk]
        v = f1 + c[1] * (ft[a, kbb] - f1)
        if c[2] != 0.0 or c[3] != 0.0:
            b = i2[j]
            jump = drho * s2[j]
            v += c[2] * (ft[b, kk] + jump * _W[kk] - f1) + c[3] * (ft[b, kbb] + jump * _W[kbb] - f1)
        if c[4] != 0.0:
            v += c[4] * (ft[i3[j], kk] + drho * s3[j] * _W[kk] - f1)
        out[j] = v
        fn[a, kbb] = v


@numba.njit(cache=True)
def _equilibrium_cell(rho, ux, uy, uz, feq):
    uu = ux * ux + uy * uy + uz * uz
    for k in range(19):
        eu = _E[k, 0] * ux + _E[k, 1] * uy + _E[k, 2] * uz
        feq[k] = _W[k] * (rho + RHO0 * (eu / CS2 + 0.5 * eu * eu / (CS2 * CS2) - 0.5 * uu / CS2))


@numba.njit(cache=True)
def collide_trt(f, fluid, omega_plus, omega_minus):
    """In-place TRT collision on fluid cells (SRT when the rates agree)."""
    nx, ny, nz, q = f.shape
    feq = np.empty(19)
    for x in range(nx):
        for y in range(ny):
            for z in range(nz):
                if not fluid[x, y, z]:
                    continue
                rho = 0.0
                jx = 0.0
                jy = 0.0
                jz = 0.0
                for k in range(19):
                    v = f[x, y, z, k]
                    rho += v
                    jx += _E[k, 0] * v
                    jy += _E[k, 1] * v
                    jz += _E[k, 2] * v
                _equilibrium_cell(rho, jx / RHO0, jy / RHO0, jz / RHO0, feq)
                f[x, y, z, 0] -= omega_plus * (f[x, y, z, 0] - feq[0])
                for k in range(1, 19, 2):
                    a = f[x, y, z, k]
                    b = f[x, y, z, k + 1]
                    sym = 0.5 * (a + b) - 0.5 * (feq[k] + feq[k + 1])
                    asym = 0.5 * (a - b) - 0.5 * (feq[k] - feq[k + 1])
                    f[x, y, z, k] = a - omega_plus * sym - omega_minus * asym
                    f[x, y, z, k + 1] = b - omega_plus * sym + omega_minus * asym


@numba.njit(cache=True)
def collide_mrt(f, fluid, M, Minv, rates):
    """In-place MRT collision on fluid cells."""
    nx, ny, nz, q = f.shape
    feq = np.empty(19)
    d = np.empty(19)
    m = np.empty(19)
    for x in range(nx):
        for y in range(ny):
            for z in range(nz):
                if not fluid[x, y, z]:
                    continue
                rho = 0.0
                jx = 0.0
                jy = 0.0
                jz = 0.0
                for k in range(19):
                    v = f[x, y, z, k]
                    rho += v
                    jx += _E[k, 0] * v
                    jy += _E[k, 1] * v
                    jz += _E[k, 2] * v
                _equilibrium_cell(rho, jx / RHO0, jy / RHO0, jz / RHO0, feq)
                for k in range(19):
                    d[k] = f[x, y, z, k] - feq[k]
                for i in range(19):
                    s = rates[i]
                    if s == 0.0:
                        m[i] = 0.0
                        continue
                    acc = 0.0
                    for k in range(19):
                        acc += M[i, k] * d[k]
                    m[i] = s * acc
                for k in range(19):
                    acc = 0.0
                    for i in range(19):
                        acc += Minv[k, i] * m[i]
                    f[x, y, z, k] -= acc
