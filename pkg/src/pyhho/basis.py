"""Scaled-monomial bases on cells and mapped faces.

A cell basis on ``T`` consists of the monomials in the rescaled variable
``2 (x - x_T) / h_T`` up to the requested total degree, ordered graded
lexicographically with the constant first.  Face bases in 2D are 1D scaled
monomials composed with the inverse of an isometric map from the face onto
a centered interval, so they can be evaluated directly at physical points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from .mesh import CellGeometry, Mesh
from .quadrature import QuadratureRule

MAX_DEGREE = 6


def basis_size(degree: int, dim: int) -> int:
    """Dimension of the polynomial space of total degree <= degree."""
    return comb(degree + dim, dim)


def graded_exponents(degree: int, dim: int) -> np.ndarray:
    """Multi-indices of length <= degree in graded-lex order, constant first."""
    if dim == 0:
        return np.zeros((1, 0), dtype=int)
    rows = []
    for total in range(degree + 1):
        if dim == 1:
            rows.append((total,))
        else:
            rows.extend((total - j, j) for j in range(total + 1))
    return np.asarray(rows, dtype=int)


@dataclass(frozen=True)
class Basis:
    """Polynomial basis on a cell or face, evaluable at physical points.

    ``entity_dim`` is the intrinsic dimension (0 for a vertex-face in 1D).
    For 2D faces ``origin``/``tangent`` define the isometric chart; cells
    use ``center``/``scale`` directly.  ``coeffs`` lets an orthonormalized
    basis express itself in terms of the raw monomials.
    """

    entity_dim: int
    degree: int
    center: np.ndarray
    scale: float
    exponents: np.ndarray = field(default=None)
    origin: np.ndarray | None = None
    tangent: np.ndarray | None = None
    coeffs: np.ndarray | None = None

    def __post_init__(self):
        if self.exponents is None:
            object.__setattr__(self, "exponents",
                               graded_exponents(self.degree, self.entity_dim))

    @property
    def size(self) -> int:
        if self.entity_dim == 0:
            return 1
        return basis_size(self.degree, self.entity_dim)

    def local_coords(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.tangent is not None:
            s = (pts - self.origin) @ self.tangent
            return s[:, None]
        return pts

    def eval(self, points: np.ndarray):
        """Values and gradients at physical points.

        Returns ``(values, gradients)`` with shapes ``(npts, n)`` and
        ``(npts, n, entity_dim)``; gradients of 2D face bases are taken with
        respect to the arc-length coordinate.
        """
        pts = self.local_coords(points)
        npts = pts.shape[0]
        if self.entity_dim == 0:
            return np.ones((npts, 1)), np.zeros((npts, 1, 1))
        dim = self.entity_dim
        xt = 2.0 * (pts - self.center) / self.scale
        kmax = self.degree
        # powers[c, j, q] = xt[q, c] ** j
        powers = np.ones((dim, kmax + 1, npts))
        for j in range(1, kmax + 1):
            powers[:, j, :] = powers[:, j - 1, :] * xt.T
        exps = self.exponents
        vals = np.ones((npts, len(exps)))
        for c in range(dim):
            vals *= powers[c, exps[:, c], :].T
        grads = np.zeros((npts, len(exps), dim))
        for c in range(dim):
            a = exps[:, c]
            other = np.ones((npts, len(exps)))
            for c2 in range(dim):
                if c2 != c:
                    other *= powers[c2, exps[:, c2], :].T
            dpow = np.zeros((len(exps), npts))
            nz = a > 0
            dpow[nz] = a[nz, None] * powers[c, a[nz] - 1, :]
            grads[:, :, c] = (2.0 / self.scale) * dpow.T * other
        if self.coeffs is not None:
            vals = vals @ self.coeffs.T
            grads = np.einsum("ij,qjc->qic", self.coeffs, grads)
        return vals, grads


def scaled_monomial_basis(geometry: CellGeometry, degree: int,
                          max_degree: int = MAX_DEGREE) -> Basis:
    """Cell basis centered at the barycenter with the diameter as scale."""
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    if degree > max_degree:
        raise ValueError(
            f"degree {degree} above cap {max_degree}; raw monomials are "
            "ill-conditioned at high order (consider orthonormalization)")
    return Basis(entity_dim=geometry.dim, degree=degree,
                 center=geometry.barycenter, scale=geometry.diameter)


def face_mapping(mesh: Mesh, face: int):
    """Isometric chart of a 2D face: ``T_F(s) = x_F + s t`` with unit ``t``.

    The tangent runs from the lower-indexed to the higher-indexed vertex,
    which pins one of the two admissible orientations deterministically.
    Returns ``(forward, inverse)`` callables.
    """
    a, b = sorted(mesh.faces[face])
    pa, pb = mesh.vertices[a], mesh.vertices[b]
    length = np.linalg.norm(pb - pa)
    if length <= 0:
        raise ValueError(f"face {face} has zero length")
    center = 0.5 * (pa + pb)
    tangent = (pb - pa) / length

    def forward(s):
        s = np.asarray(s, dtype=float)
        return center + np.multiply.outer(s, tangent)

    def inverse(x):
        return (np.atleast_2d(np.asarray(x, dtype=float)) - center) @ tangent

    return forward, inverse


def face_basis(mesh: Mesh, face: int, degree: int,
               max_degree: int = MAX_DEGREE) -> Basis:
    """Face basis: 1D scaled monomials in the chart coordinate (2D meshes),
    or the single constant on a vertex-face of a 1D mesh."""
    if degree > max_degree:
        raise ValueError(f"degree {degree} above cap {max_degree}")
    if mesh.dim == 1:
        return Basis(entity_dim=0, degree=0, center=np.zeros(1), scale=1.0)
    a, b = sorted(mesh.faces[face])
    pa, pb = mesh.vertices[a], mesh.vertices[b]
    length = float(np.linalg.norm(pb - pa))
    return Basis(entity_dim=1, degree=degree, center=np.zeros(1), scale=length,
                 origin=0.5 * (pa + pb), tangent=(pb - pa) / length)


def eval_basis(basis: Basis, points: np.ndarray):
    """Functional wrapper around :meth:`Basis.eval`."""
    return basis.eval(points)


def orthonormalize(basis: Basis, rule: QuadratureRule) -> Basis:
    """Gram-Schmidt the basis against the mass matrix of ``rule``.

    Returns a basis whose mass matrix is the identity; the constant-first
    and graded-prefix structure is preserved because the transform is
    triangular.
    """
    vals, _ = basis.eval(rule.points)
    M = vals.T @ (rule.weights[:, None] * vals)
    M = 0.5 * (M + M.T)
    L = np.linalg.cholesky(M)
    coeffs = np.linalg.inv(L)  # lower-triangular inverse, constant stays first
    if basis.coeffs is not None:
        coeffs = coeffs @ basis.coeffs
    return Basis(entity_dim=basis.entity_dim, degree=basis.degree,
                 center=basis.center, scale=basis.scale,
                 exponents=basis.exponents, origin=basis.origin,
                 tangent=basis.tangent, coeffs=coeffs)
