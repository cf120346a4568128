"""Legacy VTK ``STRUCTURED_POINTS`` field dumps.

Cell data of an ``(nx, ny, nz)`` grid are written as point data of a grid
with the same dimensions, origin at the first cell centre and unit spacing.
"""
import numpy as np


def _ordered(a):
    # VTK wants x varying fastest
    a = np.asarray(a)
    if a.ndim == 3:
        return a.transpose(2, 1, 0).reshape(-1)
    return a.transpose(2, 1, 0, 3).reshape(-1, a.shape[-1])


def write_structured_points(path, shape, scalars=None, vectors=None, title="porelbm field", binary=True):
    """Write named scalar ``(nx, ny, nz)`` and vector ``(nx, ny, nz, 3)`` arrays."""
    scalars = scalars or {}
    vectors = vectors or {}
    nx, ny, nz = shape
    n = nx * ny * nz
    head = [
        "# vtk DataFile Version 3.0",
        title[:255],
        "BINARY" if binary else "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {nx} {ny} {nz}",
        "ORIGIN 0.5 0.5 0.5",
        "SPACING 1 1 1",
        f"POINT_DATA {n}",
    ]
    with open(path, "wb") as fh:
        fh.write(("\n".join(head) + "\n").encode("ascii"))
        for name, arr in scalars.items():
            if np.shape(arr) != tuple(shape):
                raise ValueError(f"scalar field {name!r} has shape {np.shape(arr)}")
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n".encode("ascii"))
            _write_values(fh, _ordered(arr).astype(float), binary)
        for name, arr in vectors.items():
            if np.shape(arr) != tuple(shape) + (3,):
                raise ValueError(f"vector field {name!r} has shape {np.shape(arr)}")
            fh.write(f"VECTORS {name} double\n".encode("ascii"))
            _write_values(fh, _ordered(arr).astype(float), binary)


def _write_values(fh, values, binary):
    if binary:
        fh.write(np.ascontiguousarray(values, dtype=">f8").tobytes())
        fh.write(b"\n")
    else:
        rows = values.reshape(len(values), -1)
        fh.write("".join(" ".join(repr(float(v)) for v in r) + "\n" for r in rows).encode("ascii"))


def write_simulation(path, sim, binary=True):
    """Dump density, velocity and the solid flag of a simulation."""
    rho, u = sim.macroscopic()
    write_structured_points(
        path,
        sim.shape,
        scalars={"rho": rho, "solid": sim.solid.astype(float)},
        vectors={"velocity": u},
        title=f"porelbm step {sim.step_count}",
        binary=binary,
    )


def read_structured_points(path):
    """Minimal reader for files produced by :func:`write_structured_points`.

    Returns ``(shape, fields)`` with arrays back in ``(nx, ny, nz[, 3])`` order.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    pos = 0

    def line():
        nonlocal pos
        end = data.index(b"\n", pos)
        text = data[pos:end].decode("ascii")
        pos = end + 1
        return text

    if not line().startswith("# vtk DataFile"):
        raise ValueError(f"{path}: not a legacy VTK file")
    line()
    binary = line().strip() == "BINARY"
    if line().strip() != "DATASET STRUCTURED_POINTS":
        raise ValueError(f"{path}: not STRUCTURED_POINTS")
    shape = None
    fields = {}
    n = 0
    while pos < len(data):
        words = line().split()
        if not words:
            continue
        key = words[0]
        if key == "DIMENSIONS":
            shape = tuple(int(v) for v in words[1:4])
        elif key == "POINT_DATA":
            n = int(words[1])
        elif key in ("SCALARS", "VECTORS"):
            ncomp = 1 if key == "SCALARS" else 3
            if key == "SCALARS":
                line()  # LOOKUP_TABLE
            count = n * ncomp
            if binary:
                vals = np.frombuffer(data, dtype=">f8", count=count, offset=pos).astype(float)
                pos += 8 * count + 1
            else:
                rows = [line().split() for _ in range(n)]
                vals = np.array(rows, dtype=float).reshape(-1)
            nx, ny, nz = shape
            if ncomp == 1:
                fields[words[1]] = vals.reshape(nz, ny, nx).transpose(2, 1, 0)
            else:
                fields[words[1]] = vals.reshape(nz, ny, nx, 3).transpose(2, 1, 0, 3)
    return shape, fields
