"""Cell-centred finite-volume Neumann Laplacian, boundary faces and the CG solver."""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .geometry import CAVITY, FLUID, CellMask

log = logging.getLogger(__name__)

if os.environ.get("HEAT_ENCLOSURE_PURE"):
    from . import _fallback as _backend
else:
    try:
        from . import _kernels as _backend
    except ImportError:  # extension not built
        from . import _fallback as _backend

BACKEND = "compiled" if _backend.__name__.endswith("_kernels") else "python"

# side codes; normals are outward from the body
WEST, EAST, SOUTH, NORTH = 0, 1, 2, 3
_NORMALS = {WEST: (-1.0, 0.0), EAST: (1.0, 0.0), SOUTH: (0.0, -1.0), NORTH: (0.0, 1.0)}


class GridError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, msg, residual):
        super().__init__(msg)
        self.residual = residual


@dataclass
class Stencil:
    """Five-point form of a grid operator on the zero-padded ``(n+2) x (n+2)`` grid.

    ``ce[i, j]`` couples padded cells (i, j) and (i+1, j); ``cn[i, j]`` couples
    (i, j) and (i, j+1).  ``ii``/``jj`` map fluid indices to padded positions.
    """

    ce: np.ndarray
    cn: np.ndarray
    inv_h2: float
    diag: np.ndarray
    ii: np.ndarray
    jj: np.ndarray

    def scatter(self, v, out=None) -> np.ndarray:
        if out is None:
            out = np.zeros(self.diag.shape)
        out[self.ii, self.jj] = v
        return out

    def gather(self, grid) -> np.ndarray:
        return grid[self.ii, self.jj]


@dataclass
class SparseOperator:
    """Row-compressed ``N x N`` matrix; ``diag`` caches the diagonal for Jacobi.

    Operators assembled from a cell mask also carry a :class:`Stencil`, which
    the solver uses as a faster matrix-free path for the same matrix.
    """

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    symmetric: bool = True
    stencil: Stencil | None = None

    def __post_init__(self):
        self.indptr = np.ascontiguousarray(self.indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        self.data = np.ascontiguousarray(self.data, dtype=float)
        self.diag = np.ascontiguousarray(self.to_scipy().diagonal(), dtype=float)

    @property
    def dim(self) -> int:
        return self.indptr.shape[0] - 1

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=(self.dim, self.dim))

    def matvec(self, x, shift: float = 0.0) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=float)
        out = np.empty_like(x)
        _backend.csr_matvec(self.indptr, self.indices, self.data, x, float(shift), out)
        return out

    def __matmul__(self, x):
        return self.matvec(x)


@dataclass
class BoundaryFaceSet:
    """Outer faces of the body, one per boundary cell side.

    Ordered: south (x increasing), east (y increasing), north (x decreasing),
    west (y decreasing), i.e. counter-clockwise.
    """

    cell: np.ndarray  # fluid index of the adjacent cell
    side: np.ndarray
    center: np.ndarray  # (F, 2)
    normal: np.ndarray  # (F, 2)
    length: np.ndarray

    def __len__(self):
        return self.cell.shape[0]

    @property
    def h(self) -> float:
        return float(self.length[0])

    def cell_centers(self) -> np.ndarray:
        return self.center - 0.5 * self.length[:, None] * self.normal

    def ghost_centers(self) -> np.ndarray:
        return self.center + 0.5 * self.length[:, None] * self.normal


def boundary_faces(mask: CellMask) -> BoundaryFaceSet:
    n, h = mask.n, mask.h
    x0, y0, x1, y1 = mask.rect
    xc, yc = mask.centers
    r = np.arange(n)
    blocks = [
        (r, np.zeros(n, int), SOUTH, np.c_[xc, np.full(n, y0)]),
        (np.full(n, n - 1), r, EAST, np.c_[np.full(n, x1), yc]),
        (r[::-1], np.full(n, n - 1), NORTH, np.c_[xc[::-1], np.full(n, y1)]),
        (np.zeros(n, int), r[::-1], WEST, np.c_[np.full(n, x0), yc[::-1]]),
    ]
    cells, sides, centers, normals = [], [], [], []
    for ii, jj, side, cen in blocks:
        if np.any(mask.tags[ii, jj] != FLUID):
            raise GridError("a cavity touches the outer boundary cells; refine the grid")
        cells.append(mask.fluid_index[ii, jj])
        sides.append(np.full(n, side))
        centers.append(cen)
        normals.append(np.tile(_NORMALS[side], (n, 1)))
    return BoundaryFaceSet(
        cell=np.concatenate(cells),
        side=np.concatenate(sides),
        center=np.vstack(centers),
        normal=np.vstack(normals),
        length=np.full(4 * n, h),
    )


@dataclass
class CavityFaceSet:
    """Staircase faces between a FLUID cell and a CAVITY cell.

    ``normal`` points from the fluid cell into the cavity cell.
    """

    fluid_cell: np.ndarray
    cavity_ij: np.ndarray  # (K, 2)
    fluid_center: np.ndarray
    cavity_center: np.ndarray
    normal: np.ndarray
    length: float

    def __len__(self):
        return self.fluid_cell.shape[0]


def cavity_faces(mask: CellMask) -> CavityFaceSet:
    n, h = mask.n, mask.h
    xc, yc = mask.centers
    fl, ck, fc, cc, nm = [], [], [], [], []
    padded = np.pad(mask.tags, 1, constant_values=-1)
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        nbr = padded[1 + di: n + 1 + di, 1 + dj: n + 1 + dj]
        ii, jj = np.nonzero((mask.tags == FLUID) & (nbr == CAVITY))
        fl.append(mask.fluid_index[ii, jj])
        ck.append(np.c_[ii + di, jj + dj])
        fc.append(np.c_[xc[ii], yc[jj]])
        cc.append(np.c_[xc[ii + di], yc[jj + dj]])
        nm.append(np.tile((float(di), float(dj)), (ii.size, 1)))
    return CavityFaceSet(
        np.concatenate(fl), np.vstack(ck).astype(int), np.vstack(fc), np.vstack(cc), np.vstack(nm), h
    )


def interior_fluid_faces(mask: CellMask) -> tuple[np.ndarray, np.ndarray]:
    """Pairs of fluid indices sharing a face (each pair once)."""
    tags, idx = mask.tags, mask.fluid_index
    pa, pb = [], []
    both = (tags[:-1, :] == FLUID) & (tags[1:, :] == FLUID)
    pa.append(idx[:-1, :][both])
    pb.append(idx[1:, :][both])
    both = (tags[:, :-1] == FLUID) & (tags[:, 1:] == FLUID)
    pa.append(idx[:, :-1][both])
    pb.append(idx[:, 1:][both])
    return np.concatenate(pa), np.concatenate(pb)


def build_neumann_laplacian(mask: CellMask) -> SparseOperator:
    """Discrete ``-Laplacian`` on FLUID cells with zero flux on every other face.

    Symmetric positive semidefinite; its null space is the constants.
    """
    nf = mask.n_fluid
    if nf == 0:
        raise GridError("mask has no FLUID cell")
    a, b = interior_fluid_faces(mask)
    h2 = mask.h**2
    w = np.full(a.size, 1.0 / h2)
    adj = sp.coo_matrix((np.r_[w, w], (np.r_[a, b], np.r_[b, a])), shape=(nf, nf)).tocsr()
    ncomp, _ = connected_components(adj, directed=False)
    if ncomp != 1:
        raise GridError(f"FLUID region has {ncomp} face-connected components; it must be connected")
    deg = np.asarray(adj.sum(axis=1)).ravel()
    A = (sp.diags(deg) - adj).tocsr()
    A.sort_indices()
    return SparseOperator(A.indptr, A.indices, A.data, symmetric=True, stencil=_stencil_of(mask, deg))


def _stencil_of(mask: CellMask, deg: np.ndarray) -> Stencil:
    n = mask.n
    fl = np.zeros((n + 2, n + 2), dtype=bool)
    fl[1:-1, 1:-1] = mask.tags == FLUID
    ce = np.zeros((n + 2, n + 2))
    cn = np.zeros((n + 2, n + 2))
    ce[:-1, :] = fl[:-1, :] & fl[1:, :]
    cn[:, :-1] = fl[:, :-1] & fl[:, 1:]
    ii, jj = mask.fluid_cells()
    st = Stencil(ce, cn, 1.0 / mask.h**2, np.zeros((n + 2, n + 2)), ii + 1, jj + 1)
    st.diag[st.ii, st.jj] = deg
    return st


def flux_load(mask: CellMask, faces: BoundaryFaceSet, g) -> np.ndarray:
    """Cell load ``b[cell] += g * face_length / cell_area`` over outer faces."""
    g = np.asarray(g, dtype=float)
    if g.shape != (len(faces),):
        raise GridError(f"flux data has shape {g.shape}, expected ({len(faces)},)")
    b = np.zeros(mask.n_fluid)
    np.add.at(b, faces.cell, g * faces.length / mask.h**2)
    return b


def cavity_load(mask: CellMask, cfaces: CavityFaceSet, g) -> np.ndarray:
    """Same as :func:`flux_load` for flux ``g`` prescribed on staircase cavity faces.

    ``g`` is the derivative along ``cfaces.normal`` (fluid -> cavity).
    """
    b = np.zeros(mask.n_fluid)
    np.add.at(b, cfaces.fluid_cell, np.asarray(g, dtype=float) * cfaces.length / mask.h**2)
    return b


def cg_solve(A: SparseOperator, shift: float, b, tol: float = 1e-10, max_iter: int = 10_000, x0=None) -> np.ndarray:
    """Jacobi-preconditioned CG for ``(A + shift I) x = b``."""
    if shift < 0:
        raise GridError("shift must be non-negative")
    b = np.ascontiguousarray(b, dtype=float)
    st = A.stencil
    if st is not None:
        bg = st.scatter(b)
        xg = st.scatter(0.0 if x0 is None else x0)
        work = np.empty((5,) + bg.shape)
        it, res = _backend.pcg_stencil(st.ce, st.cn, st.inv_h2, st.diag, float(shift), bg, xg, float(tol),
                                       int(max_iter), work)
        x = st.gather(xg)
    else:
        x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float, copy=True)
        work = np.empty((4, b.size))
        it, res = _backend.pcg(A.indptr, A.indices, A.data, A.diag, float(shift), b, x, float(tol), int(max_iter),
                               work)
    if res > tol:
        raise ConvergenceError(f"CG did not converge in {it} iterations (relative residual {res:.3e})", res)
    log.debug("cg: %d iterations, residual %.2e", it, res)
    return x
