"""L2 projections, mass matrices, and reduction onto the hybrid space.

The reduction of a function collects its cell projection and its face
projections into one local DoF vector laid out as ``[T | F_1 | ... | F_n]``.
Vector fields are projected component by component against the scalar mass
matrix; the DoF of scalar function ``i`` and component ``a`` sits at
``i * rank + a``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .basis import Basis, basis_size, face_basis, scaled_monomial_basis
from .mesh import Mesh
from .quadrature import QuadratureRule, cell_quadrature, face_quadrature


@dataclass(frozen=True)
class HhoDegrees:
    """Face degree, cell degree (equal or one higher), and field rank."""

    k_face: int
    k_cell: int | None = None
    rank: int = 1

    def __post_init__(self):
        if self.k_face < 0:
            raise ValueError("face degree must be nonnegative")
        if self.k_cell is None:
            object.__setattr__(self, "k_cell", self.k_face)
        if self.k_cell not in (self.k_face, self.k_face + 1):
            raise ValueError("cell degree must equal the face degree or exceed it by one")
        if self.rank not in (1, 2):
            raise ValueError("rank must be 1 (scalar) or 2 (2D vector)")

    @property
    def mixed(self) -> bool:
        return self.k_cell == self.k_face + 1


def equal_order(k: int, rank: int = 1) -> HhoDegrees:
    return HhoDegrees(k_face=k, k_cell=k, rank=rank)


def mixed_order(k: int, rank: int = 1) -> HhoDegrees:
    return HhoDegrees(k_face=k, k_cell=k + 1, rank=rank)


@dataclass(frozen=True)
class DofLayout:
    """Block layout of a local DoF vector for one cell."""

    cell_width: int
    face_width: int
    n_faces: int

    @property
    def size(self) -> int:
        return self.cell_width + self.n_faces * self.face_width

    @property
    def cell(self) -> slice:
        return slice(0, self.cell_width)

    def face(self, i: int) -> slice:
        start = self.cell_width + i * self.face_width
        return slice(start, start + self.face_width)

    @property
    def faces(self) -> slice:
        return slice(self.cell_width, self.size)


def dof_layout(mesh: Mesh, degrees: HhoDegrees, n_faces: int) -> DofLayout:
    d = mesh.dim
    cell_width = degrees.rank * basis_size(degrees.k_cell, d)
    face_width = degrees.rank * (1 if d == 1 else basis_size(degrees.k_face, d - 1))
    return DofLayout(cell_width, face_width, n_faces)


def mass_matrix(basis: Basis, rule: QuadratureRule) -> np.ndarray:
    """Symmetric positive-definite Gram matrix of the basis under ``rule``."""
    vals, _ = basis.eval(rule.points)
    M = vals.T @ (rule.weights[:, None] * vals)
    return 0.5 * (M + M.T)


def mass_cholesky(M: np.ndarray):
    try:
        return cho_factor(M, lower=True)
    except np.linalg.LinAlgError as exc:
        raise ValueError(
            "mass matrix is not positive definite; the cell is degenerate "
            "or the degree too high for raw monomials") from exc


def l2_project(basis: Basis, rule: QuadratureRule, f) -> np.ndarray:
    """Coefficients of the L2-orthogonal projection of ``f``.

    ``f`` maps an ``(npts, dim)`` array to values of shape ``(npts,)`` or
    ``(npts, rank)``; the result has one coefficient column per component.
    """
    vals, _ = basis.eval(rule.points)
    M = mass_matrix(basis, rule)
    fx = np.asarray(f(rule.points), dtype=float)
    rhs = vals.T @ (rule.weights[:, None] * fx.reshape(len(rule.weights), -1))
    coeffs = cho_solve(mass_cholesky(M), rhs)
    return coeffs[:, 0] if fx.ndim == 1 else coeffs


def _interleave(columns: np.ndarray) -> np.ndarray:
    """(n, rank) coefficient columns -> flat vector with component-minor order."""
    return np.ascontiguousarray(columns).reshape(-1)


def reduce_local(mesh: Mesh, cell: int, degrees: HhoDegrees, v,
                 quad_bump: int = 2) -> np.ndarray:
    """Local reduction: cell projection plus per-face projections.

    In 1D the face blocks degenerate to point values of ``v`` at the two
    cell endpoints.
    """
    geom = mesh.cell_geometry(cell)
    layout = dof_layout(mesh, degrees, geom.n_faces)
    order = 2 * (degrees.k_face + 1) + quad_bump
    out = np.zeros(layout.size)

    cbasis = scaled_monomial_basis(geom, degrees.k_cell)
    crule = cell_quadrature(geom, order)
    ccoef = l2_project(cbasis, crule, v)
    out[layout.cell] = _interleave(ccoef.reshape(cbasis.size, degrees.rank)) \
        if degrees.rank > 1 else ccoef

    for i, fi in enumerate(geom.face_indices):
        if mesh.dim == 1:
            val = np.asarray(v(geom.face_centers[i][None, :]), dtype=float)
            out[layout.face(i)] = val.reshape(-1)
        else:
            fbasis = face_basis(mesh, fi, degrees.k_face)
            frule = face_quadrature(mesh, fi, order)
            fcoef = l2_project(fbasis, frule, v)
            out[layout.face(i)] = _interleave(fcoef.reshape(fbasis.size, degrees.rank)) \
                if degrees.rank > 1 else fcoef
    return out


def reduce_global(mesh: Mesh, degrees: HhoDegrees, v, quad_bump: int = 2):
    """Cellwise reduction with single-valued face blocks.

    Returns ``(cell_coeffs, face_coeffs)`` arrays of shapes
    ``(n_cells, cell_width)`` and ``(n_faces, face_width)``.
    """
    layout0 = dof_layout(mesh, degrees, 1)
    cell_coeffs = np.zeros((mesh.n_cells, layout0.cell_width))
    face_coeffs = np.zeros((mesh.n_faces, layout0.face_width))
    seen = np.zeros(mesh.n_faces, dtype=bool)
    for ci in range(mesh.n_cells):
        local = reduce_local(mesh, ci, degrees, v, quad_bump)
        layout = dof_layout(mesh, degrees, mesh.cell_geometry(ci).n_faces)
        cell_coeffs[ci] = local[layout.cell]
        for i, fi in enumerate(mesh.cell_faces[ci]):
            if not seen[fi]:
                face_coeffs[fi] = local[layout.face(i)]
                seen[fi] = True
    return cell_coeffs, face_coeffs


def gather_local(mesh: Mesh, cell: int, degrees: HhoDegrees,
                 cell_coeffs: np.ndarray, face_coeffs: np.ndarray) -> np.ndarray:
    """Assemble the local DoF vector of one cell from global arrays."""
    geom = mesh.cell_geometry(cell)
    layout = dof_layout(mesh, degrees, geom.n_faces)
    out = np.zeros(layout.size)
    out[layout.cell] = cell_coeffs[cell]
    for i, fi in enumerate(mesh.cell_faces[cell]):
        out[layout.face(i)] = face_coeffs[fi]
    return out
