"""Cell-local operators for 2D linear elasticity (face degree k >= 1).

The strain reconstruction maps the hybrid displacement unknowns into
symmetric-tensor polynomials of degree k, the divergence reconstruction is
its trace, and the displacement reconstruction of degree k+1 is pinned by
mean-value and skew-gradient constraints that remove the rigid-body
ambiguity.  The local bilinear form combines the strain and divergence
terms with a stabilization weighted by ``2 mu / h``.

Vector DoFs interleave components: scalar function ``i``, component ``a``
sits at ``2 i + a`` inside each block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from .local_ops import CellContext
from .projection import mass_cholesky

# symmetric unit tensors E_xx, E_yy, E_xy([[0,1],[1,0]]) and their ':' norms
TENSOR_WEIGHTS = np.array([1.0, 1.0, 2.0])


def _strain_columns(dphi: np.ndarray) -> np.ndarray:
    """Strain components of the vector basis built from scalar gradients.

    ``dphi`` has shape (nq, n, 2); the result has shape (nq, 2n, 3) holding
    (eps_xx, eps_yy, eps_xy) of each vector basis function, components
    interleaved.
    """
    nq, n, _ = dphi.shape
    eps = np.zeros((nq, 2 * n, 3))
    eps[:, 0::2, 0] = dphi[:, :, 0]              # e_x phi: eps_xx = dx phi
    eps[:, 1::2, 1] = dphi[:, :, 1]              # e_y phi: eps_yy = dy phi
    eps[:, 0::2, 2] = 0.5 * dphi[:, :, 1]        # eps_xy of e_x phi
    eps[:, 1::2, 2] = 0.5 * dphi[:, :, 0]
    return eps


def _vec(M: np.ndarray) -> np.ndarray:
    """Tensorize a scalar block with the 2D Cartesian basis."""
    return np.kron(M, np.eye(2))


def _embed_cols(rows: int, layout, block: slice, M: np.ndarray) -> np.ndarray:
    out = np.zeros((rows, layout.size))
    out[:, block] = M
    return out


def strain_reconstruction(ctx: CellContext) -> np.ndarray:
    """Coefficient maps ``Es`` of shape (3, n_k, size) of the symmetric
    strain reconstruction; component m lives on the m-th unit tensor."""
    if ctx.degrees.rank != 2 or ctx.mesh.dim != 2:
        raise ValueError("strain reconstruction requires 2D vector degrees")
    if ctx.degrees.k_face < 1:
        raise ValueError("elasticity requires face degree k >= 1")
    n_k, n_cell = ctx.n_k, ctx.n_cell
    layout = ctx.layout
    w = ctx.rule.weights
    Mk_cho = mass_cholesky(ctx.mass_full[:n_k, :n_k])

    eps_cell = _strain_columns(ctx.dphi[:, :n_cell, :])   # (nq, 2 n_cell, 3)
    Es = np.zeros((3, n_k, layout.size))
    for m in range(3):
        rhs = np.zeros((n_k, layout.size))
        # cell pairing (eps(v_T) : E_m, phi_i); the xy tensor carries both
        # off-diagonal entries, hence the contraction weight
        rhs[:, layout.cell] = TENSOR_WEIGHTS[m] * (
            ctx.phi[:, :n_k].T @ (w[:, None] * eps_cell[:, :, m]))
        for i, f in enumerate(ctx.faces):
            # (E_m n) picks the Cartesian components paired with each face term
            en = np.zeros(2)
            if m == 0:
                en[0] = f.normal[0]
            elif m == 1:
                en[1] = f.normal[1]
            else:
                en[0], en[1] = f.normal[1], f.normal[0]
            fw = f.rule.weights
            for a in range(2):
                if en[a] == 0.0:
                    continue
                blk = f.phi[:, :n_k].T @ (fw[:, None] * f.phi[:, :n_cell]) * en[a]
                rhs[:, layout.cell][:, a::2] -= blk
                fb = f.phi[:, :n_k].T @ (fw[:, None] * f.psi) * en[a]
                rhs[:, layout.face(i)][:, a::2] += fb
        Es[m] = cho_solve(Mk_cho, rhs) / TENSOR_WEIGHTS[m]
    return Es


def divergence_reconstruction(ctx: CellContext, Es: np.ndarray | None = None) -> np.ndarray:
    """Divergence reconstruction as the trace of the strain reconstruction."""
    if Es is None:
        Es = strain_reconstruction(ctx)
    return Es[0] + Es[1]


def displacement_reconstruction(ctx: CellContext) -> np.ndarray:
    """Degree-(k+1) displacement reconstruction with rigid-body constraints.

    Solves the symmetric-gradient stiffness system augmented by two
    mean-value rows and one skew-gradient row (Lagrange multipliers), so
    ``Dep @ v`` are the full vector coefficients including the rigid part.
    """
    n_rec, n_cell = ctx.n_rec, ctx.n_cell
    layout = ctx.layout
    w = ctx.rule.weights
    nv = 2 * n_rec

    eps_full = _strain_columns(ctx.dphi)                  # (nq, nv, 3)
    weighted = eps_full * TENSOR_WEIGHTS[None, None, :]
    K = np.einsum("qim,q,qjm->ij", weighted, w, eps_full)
    K = 0.5 * (K + K.T)

    H = np.zeros((nv, layout.size))
    eps_cell = eps_full[:, : 2 * n_cell, :]
    H[:, layout.cell] = np.einsum("qim,q,qjm->ij", weighted, w, eps_cell)
    for i, f in enumerate(ctx.faces):
        feps = _strain_columns(f.dphi)                    # (nq, nv, 3)
        n = f.normal
        # traction (eps(q) n) of each vector basis function
        tr = np.zeros((len(f.rule.weights), nv, 2))
        tr[:, :, 0] = feps[:, :, 0] * n[0] + feps[:, :, 2] * n[1]
        tr[:, :, 1] = feps[:, :, 2] * n[0] + feps[:, :, 1] * n[1]
        fw = f.rule.weights
        for a in range(2):
            H[:, layout.cell][:, a::2] -= tr[:, :, a].T @ (fw[:, None] * f.phi[:, :n_cell])
            H[:, layout.face(i)][:, a::2] += tr[:, :, a].T @ (fw[:, None] * f.psi)

    # constraint rows: component means and the mean skew gradient
    C = np.zeros((3, nv))
    C[0, 0::2] = ctx.ints_full
    C[1, 1::2] = ctx.ints_full
    int_grad = w @ ctx.dphi.reshape(len(w), -1)
    int_grad = int_grad.reshape(n_rec, 2)                 # integrals of (dx, dy) phi_j
    C[2, 0::2] = 0.5 * int_grad[:, 1]
    C[2, 1::2] = -0.5 * int_grad[:, 0]

    D = np.zeros((3, layout.size))
    D[0, layout.cell][0::2] = ctx.ints_full[:n_cell]
    D[1, layout.cell][1::2] = ctx.ints_full[:n_cell]
    for i, f in enumerate(ctx.faces):
        ints_psi = f.rule.weights @ f.psi
        D[2, layout.face(i)][0::2] += 0.5 * ints_psi * f.normal[1]
        D[2, layout.face(i)][1::2] -= 0.5 * ints_psi * f.normal[0]

    saddle = np.zeros((nv + 3, nv + 3))
    saddle[:nv, :nv] = K
    saddle[:nv, nv:] = C.T
    saddle[nv:, :nv] = C
    rhs = np.vstack([H, D])
    try:
        sol = np.linalg.solve(saddle, rhs)
    except np.linalg.LinAlgError as exc:
        raise ValueError(
            f"cell {ctx.cell}: singular displacement-reconstruction system") from exc
    return sol[:nv]


def stabilization_elastic(ctx: CellContext, Dep: np.ndarray | None):
    """Vector stabilization; the equal-order variant needs ``Dep``.

    Returns ``(face_ops, penalty)`` where ``penalty`` carries the plain
    ``1/h`` weight (the ``2 mu`` factor is applied by the bilinear form).
    """
    layout = ctx.layout
    n_cell = ctx.n_cell
    face_ops = []
    penalty = np.zeros((layout.size, layout.size))
    if not ctx.degrees.mixed:
        if Dep is None:
            raise ValueError("equal-order elastic stabilization needs the "
                             "displacement reconstruction")
        n_k = ctx.n_k
        Qv = _vec(ctx.mass_full[:n_k, :])                 # (2 n_k, 2 n_rec)
        Mc = _vec(ctx.mass_full[:n_k, :n_k])
        tmp1 = -np.linalg.solve(Mc, Qv @ Dep)
        tmp1[:, layout.cell] += np.eye(2 * n_k)
    for i, f in enumerate(ctx.faces):
        Mi = _vec(f.mass)
        nf = Mi.shape[0]
        if ctx.degrees.mixed:
            S = np.zeros((nf, layout.size))
            S[:, layout.cell] = np.linalg.solve(Mi, _vec(f.trace_full[:, :n_cell]))
        else:
            S = np.linalg.solve(
                Mi, _vec(f.trace_full) @ Dep + _vec(f.trace_full[:, :n_cell]) @ tmp1)
        S[:, layout.face(i)] -= np.eye(nf)
        face_ops.append(S)
        penalty += (S.T @ Mi @ S) / ctx.h
    return face_ops, 0.5 * (penalty + penalty.T)


@dataclass
class LocalElasticOperators:
    ctx: CellContext
    mu: float
    lam: float
    Es: np.ndarray            # (3, n_k, size) strain reconstruction
    Dv: np.ndarray            # (n_k, size) divergence reconstruction
    Dep: np.ndarray           # (2 n_rec, size) displacement reconstruction
    stab_face: list
    penalty: np.ndarray
    L: np.ndarray
    traction: np.ndarray      # (n_faces * face_width, size)

    def traction_coefficients(self, dofs: np.ndarray):
        vals = self.traction @ dofs
        nf = self.ctx.layout.face_width
        return [vals[i * nf:(i + 1) * nf] for i in range(len(self.ctx.faces))]


def _traction_matrix(ctx: CellContext, mu, lam, Es, stab_face) -> np.ndarray:
    """Numerical tractions: stress of the reconstructed strain plus the
    stabilization correction, projected facewise."""
    layout = ctx.layout
    n_k = ctx.n_k
    nf = layout.face_width
    nfaces = len(ctx.faces)
    total = nfaces * nf

    # stress coefficients on the tensor basis
    sig = np.zeros_like(Es)
    sig[0] = (2 * mu + lam) * Es[0] + lam * Es[1]
    sig[1] = lam * Es[0] + (2 * mu + lam) * Es[1]
    sig[2] = 2 * mu * Es[2]

    Sstack = np.vstack(stab_face)
    embed = np.zeros((layout.size, total))
    embed[layout.faces, :] = np.eye(total)
    Sigma = -Sstack @ embed

    trac = np.zeros((total, layout.size))
    Mblocks = np.zeros((total, total))
    for i, f in enumerate(ctx.faces):
        rows = slice(i * nf, (i + 1) * nf)
        Miv = _vec(f.mass)
        Mblocks[rows, rows] = Miv
        n = f.normal
        # -(sigma n) tested with the vector face basis, component a
        rhs = np.zeros((nf, layout.size))
        fw = f.rule.weights
        pairing = f.psi.T @ (fw[:, None] * f.phi[:, :n_k])   # (nfs, n_k)
        comp0 = pairing @ (sig[0] * n[0] + sig[2] * n[1])
        comp1 = pairing @ (sig[2] * n[0] + sig[1] * n[1])
        rhs[0::2] = -comp0
        rhs[1::2] = -comp1
        trac[rows] = np.linalg.solve(Miv, rhs)
    adj = (2.0 * mu / ctx.h) * (Sigma.T @ Mblocks @ Sstack)
    for i, f in enumerate(ctx.faces):
        rows = slice(i * nf, (i + 1) * nf)
        trac[rows] += np.linalg.solve(_vec(f.mass), adj[rows])
    return trac


def local_bilinear_elastic(ctx: CellContext, mu: float, lam: float) -> LocalElasticOperators:
    """Local elastic matrix ``2mu (strain, strain) + lam (div, div) +
    2mu/h (stab, stab)`` with all constituent operators."""
    if mu <= 0 or lam < 0:
        raise ValueError("need mu > 0 and lambda >= 0")
    n_k = ctx.n_k
    Mk = ctx.mass_full[:n_k, :n_k]
    Es = strain_reconstruction(ctx)
    Dv = divergence_reconstruction(ctx, Es)
    Dep = displacement_reconstruction(ctx)
    stab_face, penalty = stabilization_elastic(
        ctx, None if ctx.degrees.mixed else Dep)

    strain_term = sum(TENSOR_WEIGHTS[m] * Es[m].T @ Mk @ Es[m] for m in range(3))
    div_term = Dv.T @ Mk @ Dv
    L = 2 * mu * strain_term + lam * div_term + 2 * mu * penalty
    L = 0.5 * (L + L.T)
    return LocalElasticOperators(
        ctx=ctx, mu=mu, lam=lam, Es=Es, Dv=Dv, Dep=Dep,
        stab_face=stab_face, penalty=penalty, L=L,
        traction=_traction_matrix(ctx, mu, lam, Es, stab_face))


def traction_recovery(ops: LocalElasticOperators, dofs: np.ndarray):
    """Per-face numerical traction polynomials of a local DoF vector."""
    return ops.traction_coefficients(dofs)
