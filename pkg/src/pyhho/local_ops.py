"""Cell-local operators for the scalar diffusion problem.

For each cell this module builds, in the monomial bases of the hybrid
unknowns, the potential reconstruction of one degree higher, the
full-polynomial gradient reconstruction, the equal-order and
Lehrenfeld-Schoberl stabilizations, the resulting local bilinear-form
matrix, and the operator recovering equilibrated face fluxes.

All matrices act on local DoF vectors laid out as ``[T | F_1 | ... | F_n]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve

from .basis import Basis, basis_size, face_basis, scaled_monomial_basis
from .mesh import CellGeometry, Mesh
from .projection import DofLayout, HhoDegrees, dof_layout, mass_cholesky
from .quadrature import QuadratureRule, cell_quadrature, face_quadrature

COND_LIMIT = 1e12


@dataclass
class FaceContext:
    index: int
    basis: Basis
    rule: QuadratureRule
    normal: np.ndarray
    measure: float
    psi: np.ndarray          # (nq, n_face) face basis values
    phi: np.ndarray          # (nq, n_rec) cell basis values at face points
    dphi: np.ndarray         # (nq, n_rec, d) cell basis gradients at face points
    mass: np.ndarray         # (n_face, n_face)
    mass_cho: object
    trace_full: np.ndarray   # (n_face, n_rec): sum_q w psi phi^T


@dataclass
class CellContext:
    """Quadrature data and Gram matrices shared by all local operators."""

    mesh: Mesh
    cell: int
    geom: CellGeometry
    degrees: HhoDegrees
    layout: DofLayout
    rec_basis: Basis
    rule: QuadratureRule
    phi: np.ndarray          # (nq, n_rec)
    dphi: np.ndarray         # (nq, n_rec, d)
    mass_full: np.ndarray    # (n_rec, n_rec)
    stiff_full: np.ndarray   # (n_rec, n_rec)
    ints_full: np.ndarray    # (n_rec,) integrals of the basis functions
    faces: list = field(default_factory=list)

    @property
    def n_rec(self) -> int:
        return self.rec_basis.size

    @property
    def n_cell(self) -> int:
        """Scalar cell-basis size (prefix of the reconstruction basis)."""
        return basis_size(self.degrees.k_cell, self.mesh.dim)

    @property
    def n_k(self) -> int:
        """Scalar size of the face-degree polynomial space on the cell."""
        return basis_size(self.degrees.k_face, self.mesh.dim)

    @property
    def h(self) -> float:
        return self.geom.diameter

    @property
    def mass_cell(self) -> np.ndarray:
        return self.mass_full[: self.n_cell, : self.n_cell]


def build_cell_context(mesh: Mesh, cell: int, degrees: HhoDegrees) -> CellContext:
    """Evaluate bases and Gram matrices at quadrature order ``2(k+1)``."""
    geom = mesh.cell_geometry(cell)
    layout = dof_layout(mesh, degrees, geom.n_faces)
    k = degrees.k_face
    order = 2 * (k + 1)
    rec_basis = scaled_monomial_basis(geom, k + 1)
    rule = cell_quadrature(geom, order)
    phi, dphi = rec_basis.eval(rule.points)
    w = rule.weights
    mass_full = phi.T @ (w[:, None] * phi)
    mass_full = 0.5 * (mass_full + mass_full.T)
    cond = np.linalg.cond(mass_full)
    if cond > COND_LIMIT:
        raise ValueError(
            f"cell {cell}: mass-matrix condition number {cond:.2e} exceeds "
            f"{COND_LIMIT:.0e}; reduce the degree or orthonormalize the basis")
    stiff_full = np.einsum("qid,q,qjd->ij", dphi, w, dphi)
    stiff_full = 0.5 * (stiff_full + stiff_full.T)
    ints_full = w @ phi

    ctx = CellContext(mesh=mesh, cell=cell, geom=geom, degrees=degrees,
                      layout=layout, rec_basis=rec_basis, rule=rule,
                      phi=phi, dphi=dphi, mass_full=mass_full,
                      stiff_full=stiff_full, ints_full=ints_full)
    for i, fi in enumerate(geom.face_indices):
        fb = face_basis(mesh, fi, k)
        fr = face_quadrature(mesh, fi, order)
        psi, _ = fb.eval(fr.points)
        fphi, fdphi = rec_basis.eval(fr.points)
        M_i = psi.T @ (fr.weights[:, None] * psi)
        M_i = 0.5 * (M_i + M_i.T)
        trace_full = psi.T @ (fr.weights[:, None] * fphi)
        ctx.faces.append(FaceContext(
            index=fi, basis=fb, rule=fr, normal=geom.face_normals[i],
            measure=float(geom.face_measures[i]), psi=psi, phi=fphi,
            dphi=fdphi, mass=M_i, mass_cho=mass_cholesky(M_i),
            trace_full=trace_full))
    return ctx


# ---------------------------------------------------------------------------
# reconstruction


def reconstruction(ctx: CellContext):
    """Potential reconstruction matrices ``(Kstar, H, R, R_full, A)``.

    ``R`` maps local DoFs to the non-constant coefficients of the
    reconstructed polynomial; ``R_full`` prepends the row restoring the cell
    mean, so that ``R_full @ v`` are coefficients in the full degree-(k+1)
    basis.  ``A = H^T R`` is the consistency stiffness.
    """
    n_rec, n_cell = ctx.n_rec, ctx.n_cell
    layout = ctx.layout
    Kstar = ctx.stiff_full[1:, 1:]
    H = np.zeros((n_rec - 1, layout.size))
    H[:, layout.cell] = ctx.stiff_full[1:, :n_cell]
    for i, f in enumerate(ctx.faces):
        ndphi = f.dphi[:, 1:, :] @ f.normal          # (nq, n_rec-1)
        wn = f.rule.weights[:, None] * ndphi
        H[:, layout.cell] -= wn.T @ f.phi[:, :n_cell]
        H[:, layout.face(i)] += wn.T @ f.psi
    try:
        R = np.linalg.solve(Kstar, H)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"cell {ctx.cell}: singular reconstruction system") from exc
    A = H.T @ R
    A = 0.5 * (A + A.T)
    mean_row = np.zeros(layout.size)
    mean_row[layout.cell] = ctx.ints_full[:n_cell]
    r0 = (mean_row - ctx.ints_full[1:] @ R) / ctx.geom.measure
    R_full = np.vstack([r0, R])
    return Kstar, H, R, R_full, A


def gradient_reconstruction(ctx: CellContext) -> np.ndarray:
    """Gradient reconstruction into vector polynomials of the face degree.

    Returns ``G`` of shape ``(d, n_k, size)``: component ``c`` of the
    reconstructed gradient has coefficients ``G[c] @ v``.
    """
    d = ctx.mesh.dim
    n_k = ctx.n_k
    layout = ctx.layout
    Mk = ctx.mass_full[:n_k, :n_k]
    cho = mass_cholesky(Mk)
    w = ctx.rule.weights
    G = np.zeros((d, n_k, layout.size))
    for c in range(d):
        rhs = np.zeros((n_k, layout.size))
        # volume term (grad v_T, q) and face terms -(v_T - v_F, n_c q)
        rhs[:, layout.cell] = ctx.phi[:, :n_k].T @ (
            w[:, None] * ctx.dphi[:, : ctx.n_cell, c])
        for i, f in enumerate(ctx.faces):
            wq = f.rule.weights * f.normal[c]
            rhs[:, layout.cell] -= f.phi[:, :n_k].T @ (wq[:, None] * f.phi[:, : ctx.n_cell])
            rhs[:, layout.face(i)] += f.phi[:, :n_k].T @ (wq[:, None] * f.psi)
        G[c] = cho_solve(cho, rhs)
    return G


# ---------------------------------------------------------------------------
# stabilization


def stabilization_ls(ctx: CellContext):
    """Lehrenfeld-Schoberl stabilization: project the cell trace, subtract
    the face unknown.  Returns ``(face_ops, penalty)``."""
    layout = ctx.layout
    face_ops = []
    penalty = np.zeros((layout.size, layout.size))
    for i, f in enumerate(ctx.faces):
        Z = np.zeros((f.basis.size, layout.size))
        Z[:, layout.cell] = cho_solve(f.mass_cho, f.trace_full[:, : ctx.n_cell])
        Z[:, layout.face(i)] -= np.eye(f.basis.size)
        face_ops.append(Z)
        penalty += (Z.T @ f.mass @ Z) / ctx.h
    return face_ops, 0.5 * (penalty + penalty.T)


def stabilization_equal_order(ctx: CellContext, R: np.ndarray):
    """Equal-order stabilization including the reconstruction correction."""
    if ctx.degrees.mixed:
        raise ValueError("equal-order stabilization requires k_cell == k_face")
    n_cell = ctx.n_cell
    layout = ctx.layout
    Q = ctx.mass_full[:n_cell, 1:]
    cell_cho = mass_cholesky(ctx.mass_cell)
    tmp1 = -cho_solve(cell_cho, Q @ R)        # coefficients of v_T - Pi_T(R v)
    tmp1[:, layout.cell] += np.eye(n_cell)
    face_ops = []
    penalty = np.zeros((layout.size, layout.size))
    for i, f in enumerate(ctx.faces):
        S = cho_solve(f.mass_cho,
                      f.trace_full[:, 1:] @ R + f.trace_full[:, :n_cell] @ tmp1)
        S[:, layout.face(i)] -= np.eye(f.basis.size)
        face_ops.append(S)
        penalty += (S.T @ f.mass @ S) / ctx.h
    return face_ops, 0.5 * (penalty + penalty.T)


def seminorm_gram(ctx: CellContext) -> np.ndarray:
    """Gram matrix of the H1-like seminorm |grad v_T|^2 + h^-1 |v_T - v_F|^2."""
    layout = ctx.layout
    n_cell = ctx.n_cell
    N = np.zeros((layout.size, layout.size))
    N[layout.cell, layout.cell] = ctx.stiff_full[:n_cell, :n_cell]
    for i, f in enumerate(ctx.faces):
        D = np.zeros((len(f.rule.weights), layout.size))
        D[:, layout.cell] = f.phi[:, :n_cell]
        D[:, layout.face(i)] = -f.psi
        N += D.T @ (f.rule.weights[:, None] * D) / ctx.h
    return 0.5 * (N + N.T)


# ---------------------------------------------------------------------------
# bundled operators


@dataclass
class LocalPoissonOperators:
    ctx: CellContext
    Kstar: np.ndarray
    H: np.ndarray
    R: np.ndarray
    R_full: np.ndarray
    A: np.ndarray
    G: np.ndarray
    stab_face: list
    penalty: np.ndarray
    L: np.ndarray
    flux: np.ndarray          # (n_faces * n_face, size) face-flux coefficients

    def flux_coefficients(self, dofs: np.ndarray):
        """Per-face coefficient arrays of the numerical flux of ``dofs``."""
        vals = self.flux @ dofs
        nf = self.ctx.faces[0].basis.size
        return [vals[i * nf:(i + 1) * nf] for i in range(len(self.ctx.faces))]

    def to_json(self) -> str:
        """Debug dump of the per-cell matrices (golden-file tests)."""
        payload = {name: getattr(self, name).tolist()
                   for name in ("Kstar", "H", "R", "R_full", "A", "penalty", "L")}
        payload["cell"] = self.ctx.cell
        payload["stab_face"] = [S.tolist() for S in self.stab_face]
        return json.dumps(payload, sort_keys=True)


def _flux_matrix(ctx: CellContext, R: np.ndarray, stab_face: list) -> np.ndarray:
    layout = ctx.layout
    nf = ctx.faces[0].basis.size
    nfaces = len(ctx.faces)
    total = nfaces * nf

    Sstack = np.vstack(stab_face)
    embed = np.zeros((layout.size, total))
    embed[layout.faces, :] = np.eye(total)
    Sigma = -Sstack @ embed                      # stabilization acting on face data

    flux = np.zeros((total, layout.size))
    Mblocks = np.zeros((total, total))
    for i, f in enumerate(ctx.faces):
        rows = slice(i * nf, (i + 1) * nf)
        Mblocks[rows, rows] = f.mass
        ndphi = f.dphi[:, 1:, :] @ f.normal
        Gn = f.psi.T @ (f.rule.weights[:, None] * ndphi)
        flux[rows] = -cho_solve(f.mass_cho, Gn @ R)
    adj = Sigma.T @ Mblocks @ Sstack / ctx.h
    for i, f in enumerate(ctx.faces):
        rows = slice(i * nf, (i + 1) * nf)
        flux[rows] += cho_solve(f.mass_cho, adj[rows])
    return flux


def local_bilinear(ctx: CellContext) -> LocalPoissonOperators:
    """Full local matrix ``L = A + penalty`` with its building blocks.

    Equal-order degrees use the reconstruction-corrected stabilization,
    mixed-order degrees the Lehrenfeld-Schoberl one.
    """
    Kstar, H, R, R_full, A = reconstruction(ctx)
    if ctx.degrees.mixed:
        stab_face, penalty = stabilization_ls(ctx)
    else:
        stab_face, penalty = stabilization_equal_order(ctx, R)
    L = A + penalty
    L = 0.5 * (L + L.T)
    return LocalPoissonOperators(
        ctx=ctx, Kstar=Kstar, H=H, R=R, R_full=R_full, A=A,
        G=gradient_reconstruction(ctx), stab_face=stab_face,
        penalty=penalty, L=L, flux=_flux_matrix(ctx, R, stab_face))


def numerical_flux(ops: LocalPoissonOperators, dofs: np.ndarray):
    """Numerical fluxes of a local DoF vector, one polynomial per face."""
    return ops.flux_coefficients(dofs)
