"""Uniform rectangular grids (1D/2D) with adjoint-exact difference operators.

Scalar data lives at cell centers, gradient data on interior faces.  The
discrete gradient is a forward difference with zero flux through the boundary
faces, and the discrete divergence is its exact negative adjoint under the
cell/face inner products, so summation-by-parts identities hold to rounding.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import GridMismatchError, SnapshotFormatError


@dataclass(frozen=True)
class Grid:
    """Uniform rectangular domain with 1 or 2 axes and spacing dx on each.

    extents holds the cell count per axis; the measure of the domain is
    (prod of extents) * dx**dimension.
    """

    extents: tuple
    dx: float

    def __post_init__(self):
        extents = tuple(int(n) for n in np.atleast_1d(self.extents))
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "dx", float(self.dx))
        if len(extents) not in (1, 2):
            raise GridMismatchError(f"dimension must be 1 or 2, got {len(extents)}")
        if any(n < 2 for n in extents):
            raise GridMismatchError(f"every axis needs at least 2 cells, got {extents}")
        if not (np.isfinite(self.dx) and self.dx > 0):
            raise GridMismatchError(f"dx must be positive and finite, got {self.dx}")

    @property
    def dimension(self) -> int:
        return len(self.extents)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.extents))

    @property
    def cell_volume(self) -> float:
        return self.dx ** self.dimension

    @property
    def measure(self) -> float:
        return self.n_cells * self.cell_volume

    @property
    def lengths(self) -> tuple:
        return tuple(n * self.dx for n in self.extents)


@dataclass(frozen=True)
class ScalarField:
    """One real value per cell of a grid.  Values are finite and immutable."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.extents:
            raise GridMismatchError(
                f"field shape {values.shape} does not match grid extents {self.grid.extents}"
            )
        if not np.isfinite(values).all():
            raise GridMismatchError("field contains non-finite entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class FaceVectorField:
    """Per-axis arrays of gradient components on interior faces.

    Component k has the grid shape shortened by one cell along axis k;
    boundary-normal faces carry zero flux and are not stored.
    """

    grid: Grid
    components: tuple

    def __post_init__(self):
        comps = []
        for axis, comp in enumerate(self.components):
            comp = np.array(comp, dtype=float)
            expected = _face_shape(self.grid, axis)
            if comp.shape != expected:
                raise GridMismatchError(
                    f"axis-{axis} face array has shape {comp.shape}, expected {expected}"
                )
            if not np.isfinite(comp).all():
                raise GridMismatchError("face array contains non-finite entries")
            comp.setflags(write=False)
            comps.append(comp)
        if len(comps) != self.grid.dimension:
            raise GridMismatchError("need one component array per axis")
        object.__setattr__(self, "components", tuple(comps))


def _face_shape(grid: Grid, axis: int) -> tuple:
    shape = list(grid.extents)
    shape[axis] -= 1
    return tuple(shape)


def _axis_slices(dim: int, axis: int):
    """(all-but-last, all-but-first, last) index tuples along one axis."""
    head = tuple(slice(0, -1) if a == axis else slice(None) for a in range(dim))
    tail = tuple(slice(1, None) if a == axis else slice(None) for a in range(dim))
    last = tuple(slice(-1, None) if a == axis else slice(None) for a in range(dim))
    return head, tail, last


def require_same_grid(*objects):
    grids = [obj.grid for obj in objects]
    first = grids[0]
    for other in grids[1:]:
        if other != first:
            raise GridMismatchError(f"grid mismatch: {first} vs {other}")
    return first


def gradient(v: ScalarField) -> FaceVectorField:
    """Forward-difference gradient on interior faces; boundary flux is zero."""
    grid = v.grid
    comps = [np.diff(v.values, axis=axis) / grid.dx for axis in range(grid.dimension)]
    return FaceVectorField(grid, tuple(comps))


def divergence(p: FaceVectorField) -> ScalarField:
    """Exact negative adjoint of gradient: <grad v, p> = -<v, div p>."""
    grid = p.grid
    out = np.zeros(grid.extents)
    for axis in range(grid.dimension):
        head, tail, _ = _axis_slices(grid.dimension, axis)
        comp = p.components[axis]
        out[head] += comp / grid.dx
        out[tail] -= comp / grid.dx
    return ScalarField(grid, out)


def integrate(v: ScalarField) -> float:
    """Cell quadrature of the field over the domain."""
    return float(v.values.sum() * v.grid.cell_volume)


def neumann_laplacian(v: ScalarField) -> ScalarField:
    """div(grad v): symmetric negative semidefinite, kernel = constants."""
    return divergence(gradient(v))


def cell_inner(a: ScalarField, b: ScalarField) -> float:
    grid = require_same_grid(a, b)
    return float(np.vdot(a.values, b.values) * grid.cell_volume)


def face_inner(p: FaceVectorField, q: FaceVectorField) -> float:
    grid = require_same_grid(p, q)
    total = 0.0
    for cp, cq in zip(p.components, q.components):
        total += float(np.vdot(cp, cq))
    return total * grid.cell_volume


# ---------------------------------------------------------------------------
# Flattened sparse operators (cached per grid) for the implicit solvers.
# A_k applies the forward difference along axis k to a C-order raveled field
# and writes zero in the boundary-cell slot, so sum_k A_k^T A_k equals the
# positive Neumann Laplacian.


def _diff1(n: int, dx: float) -> sp.csr_matrix:
    main = np.full(n, -1.0 / dx)
    main[-1] = 0.0
    upper = np.full(n - 1, 1.0 / dx)
    return sp.diags([main, upper], [0, 1], shape=(n, n), format="csr")


@lru_cache(maxsize=None)
def difference_matrices(grid: Grid) -> tuple:
    if grid.dimension == 1:
        return (_diff1(grid.extents[0], grid.dx),)
    n1, n2 = grid.extents
    a0 = sp.kron(_diff1(n1, grid.dx), sp.identity(n2, format="csr"), format="csr")
    a1 = sp.kron(sp.identity(n1, format="csr"), _diff1(n2, grid.dx), format="csr")
    return (a0, a1)


@lru_cache(maxsize=None)
def stiffness_matrix(grid: Grid) -> sp.csr_matrix:
    """Positive Neumann Laplacian sum_k A_k^T A_k (sparse, cached)."""
    mats = difference_matrices(grid)
    out = mats[0].T @ mats[0]
    for a in mats[1:]:
        out = out + a.T @ a
    return out.tocsr()


# ---------------------------------------------------------------------------
# Field snapshot files: plain text, round-trippable at full precision.


def _fmt(x: float) -> str:
    return repr(float(x))


def write_field(stream_or_path, field: ScalarField, t: float = 0.0):
    """Write one field block: four header lines then one row per grid row."""
    own = isinstance(stream_or_path, (str, bytes))
    stream = open(stream_or_path, "w") if own else stream_or_path
    try:
        grid = field.grid
        stream.write(f"# dim {grid.dimension}\n")
        stream.write("# extents " + " ".join(str(n) for n in grid.extents) + "\n")
        stream.write(f"# dx {_fmt(grid.dx)}\n")
        stream.write(f"# t {_fmt(t)}\n")
        rows = field.values.reshape(1, -1) if grid.dimension == 1 else field.values
        for row in rows:
            stream.write(" ".join(_fmt(x) for x in row) + "\n")
    finally:
        if own:
            stream.close()


def _read_block(lines, pos):
    header = {}
    while pos < len(lines) and lines[pos].startswith("#"):
        parts = lines[pos][1:].split()
        if not parts:
            raise SnapshotFormatError("empty header line")
        header[parts[0]] = parts[1:]
        pos += 1
    for key in ("dim", "extents", "dx", "t"):
        if key not in header:
            raise SnapshotFormatError(f"missing '# {key}' header")
    dim = int(header["dim"][0])
    extents = tuple(int(n) for n in header["extents"])
    if len(extents) != dim:
        raise SnapshotFormatError("extents do not match dim")
    dx = float(header["dx"][0])
    t = float(header["t"][0])
    n_rows = 1 if dim == 1 else extents[0]
    rows = []
    for _ in range(n_rows):
        if pos >= len(lines):
            raise SnapshotFormatError("truncated data block")
        rows.append([float(x) for x in lines[pos].split()])
        pos += 1
    values = np.array(rows)
    grid = Grid(extents, dx)
    values = values.reshape(grid.extents)
    return ScalarField(grid, values), t, pos


def read_fields(path) -> list:
    """Read every (field, t) block in a snapshot file."""
    with open(path) as stream:
        lines = [ln.rstrip("\n") for ln in stream if ln.strip()]
    blocks = []
    pos = 0
    while pos < len(lines):
        field, t, pos = _read_block(lines, pos)
        blocks.append((field, t))
    if not blocks:
        raise SnapshotFormatError(f"no field blocks in {path}")
    return blocks


def read_field(path) -> tuple:
    """Read a single-field snapshot; error if the file holds more blocks."""
    blocks = read_fields(path)
    if len(blocks) != 1:
        raise SnapshotFormatError(f"expected one field block in {path}, found {len(blocks)}")
    return blocks[0]


def write_state(stream_or_path, eta: ScalarField, theta: ScalarField, t: float = 0.0):
    """Write a state snapshot: eta block then theta block in one file."""
    require_same_grid(eta, theta)
    own = isinstance(stream_or_path, (str, bytes))
    stream = open(stream_or_path, "w") if own else stream_or_path
    try:
        write_field(stream, eta, t)
        write_field(stream, theta, t)
    finally:
        if own:
            stream.close()


def read_state(path) -> tuple:
    """Read (eta, theta, t) from a two-block state snapshot."""
    blocks = read_fields(path)
    if len(blocks) != 2:
        raise SnapshotFormatError(f"state snapshot needs two blocks, found {len(blocks)}")
    (eta, t0), (theta, t1) = blocks
    require_same_grid(eta, theta)
    if t0 != t1:
        raise SnapshotFormatError("eta and theta blocks carry different times")
    return eta, theta, t0


def state_to_text(eta: ScalarField, theta: ScalarField, t: float = 0.0) -> str:
    buf = io.StringIO()
    write_state(buf, eta, theta, t)
    return buf.getvalue()
