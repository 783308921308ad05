"""Symplectic linear algebra and the universal quadratic exponents.

Conventions, fixed once and verified by the identity suite:

* ``J0 = [[0, -I], [I, 0]]`` is the standard complex structure on R^{2d};
  the standard symplectic form is ``omega0(u, v) = u^t (-J0) v``.
* ``R^{2d} ~ C^d`` via ``(a, b) -> a + i b``, under which
  ``omega0(u, v) = Im(conj(z_u) . z_v)``.
* Every other sign in the package is derived from these two choices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

SYMPLECTIC_TOL = 1e-10


class PolarDecompositionError(ValueError):
    """Polar factorization failed to meet tolerance (ill-conditioned input)."""


def standard_j(d: int) -> np.ndarray:
    """The 2d x 2d block matrix [[0, -I], [I, 0]]."""
    j = np.zeros((2 * d, 2 * d))
    j[:d, d:] = -np.eye(d)
    j[d:, :d] = np.eye(d)
    return j


def omega0(u: np.ndarray, v: np.ndarray) -> float:
    """Standard symplectic form u^t (-J0) v."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.ndim != 1 or u.size % 2:
        raise ValueError(f"expected matching even-dimensional vectors, got {u.shape} and {v.shape}")
    d = u.size // 2
    # u^t(-J0)v = u_q . v_p - u_p . v_q
    return float(u[:d] @ v[d:] - u[d:] @ v[:d])


def is_symplectic(a: np.ndarray, tol: float = SYMPLECTIC_TOL) -> bool:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] % 2:
        return False
    mj = -standard_j(a.shape[0] // 2)
    return bool(np.abs(a.T @ mj @ a - mj).max() <= tol)


def check_symplectic(a: np.ndarray, tol: float = SYMPLECTIC_TOL) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if not is_symplectic(a, tol):
        raise ValueError("matrix is not symplectic within tolerance %.1e" % tol)
    return a


def random_symplectic(d: int, scale: float, seed: int) -> np.ndarray:
    """exp(-J0 H) for a seeded random symmetric H with ||H||_2 <= scale."""
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((2 * d, 2 * d))
    h = (g + g.T) / 2
    norm = np.linalg.norm(h, 2)
    if norm > 0:
        h *= min(1.0, scale / norm)
    else:
        h *= 0.0
    return expm(-standard_j(d) @ h)


def random_unitary_symplectic(d: int, seed: int) -> np.ndarray:
    """Random orthogonal symplectic matrix (polar unitary factor)."""
    return polar_decompose(random_symplectic(d, 1.0, seed)).o


@dataclass(frozen=True)
class PolarFactors:
    """A = O P with O orthogonal symplectic and P symmetric positive symplectic.

    Carries the derived symmetric matrices Q = I + P^2, Pcal = O Q^{-1} O^t
    and Rcal = O (I - P^2) Q^{-1} J0 O^t used by the graph exponent.
    """

    o: np.ndarray
    p: np.ndarray
    q: np.ndarray
    pcal: np.ndarray
    rcal: np.ndarray


def polar_decompose(a: np.ndarray, tol: float = 1e-12, cond_max: float = 1e6) -> PolarFactors:
    """Unique positive polar decomposition via the symmetric eigenproblem of A^t A."""
    a = np.asarray(a, dtype=float)
    d = a.shape[0] // 2
    w, v = np.linalg.eigh(a.T @ a)
    if w.min() <= 0:
        raise PolarDecompositionError("A^t A not positive definite")
    s = np.sqrt(w)
    if s.max() / s.min() > cond_max:
        raise PolarDecompositionError(
            "condition number %.2e exceeds %.1e" % (s.max() / s.min(), cond_max)
        )
    p = (v * s) @ v.T
    p = (p + p.T) / 2
    o = a @ (v * (1.0 / s)) @ v.T
    resid = max(
        np.abs(o @ p - a).max(),
        np.abs(o.T @ o - np.eye(2 * d)).max(),
    )
    if resid > max(tol, 100 * tol * s.max() ** 2):
        raise PolarDecompositionError("polar factors residual %.2e above tolerance" % resid)
    j = standard_j(d)
    q = np.eye(2 * d) + p @ p
    qi = np.linalg.inv(q)
    pcal = o @ qi @ o.T
    rcal = o @ (np.eye(2 * d) - p @ p) @ qi @ j @ o.T
    return PolarFactors(o=o, p=p, q=q, pcal=(pcal + pcal.T) / 2, rcal=(rcal + rcal.T) / 2)


def szego_exponent(u: np.ndarray, v: np.ndarray) -> complex:
    """Universal near-diagonal exponent -i omega0(u, v) - |u - v|^2 / 2."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return -1j * omega0(u, v) - 0.5 * float((u - v) @ (u - v))


def graph_exponent(a: np.ndarray, u: np.ndarray, w: np.ndarray,
                   factors: PolarFactors | None = None) -> complex:
    """Quadratic exponent adapted to graph(A); Re < 0 off the graph.

    Value: -L^t [Pcal + (i/2) Rcal] L - i omega0(A u, w)  with  L = A u - w.
    """
    a = np.asarray(a, dtype=float)
    if factors is None:
        factors = polar_decompose(a)
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    ell = a @ u - w
    return complex(-ell @ (factors.pcal + 0.5j * factors.rcal) @ ell - 1j * omega0(a @ u, w))


def normalization_factor(a: np.ndarray) -> float:
    """Kernel prefactor normalization det(I + A^t A)^{1/2}; >= 2^d, = 2^d iff A unitary."""
    a = np.asarray(a, dtype=float)
    return float(np.sqrt(np.linalg.det(np.eye(a.shape[0]) + a.T @ a)))


def normalization_three_ways(a: np.ndarray) -> tuple[float, float, float]:
    """The normalization computed from Q, from I + A^t A, and from A J0 + J0 A."""
    a = np.asarray(a, dtype=float)
    d = a.shape[0] // 2
    j = standard_j(d)
    f = polar_decompose(a)
    nu_q = float(np.sqrt(np.linalg.det(f.q)))
    nu_ata = float(np.sqrt(np.linalg.det(np.eye(2 * d) + a.T @ a)))
    nu_j = float(np.sqrt(np.linalg.det(a @ j + j @ a)))
    return nu_q, nu_ata, nu_j


@dataclass(frozen=True)
class GraphSplitting:
    """Orthonormal bases of graph(A) in R^{2d} x R^{2d} and of its orthocomplement."""

    tangent: np.ndarray   # (4d, 2d), columns span {(u, Au)}
    normal: np.ndarray    # (4d, 2d), columns span the orthocomplement


def graph_splitting(a: np.ndarray) -> GraphSplitting:
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    tan = np.vstack([np.eye(n), a])
    nor = np.vstack([-a.T, np.eye(n)])
    tq, _ = np.linalg.qr(tan)
    nq, _ = np.linalg.qr(nor)
    return GraphSplitting(tangent=tq, normal=nq)


def gaussian_reduction_terms(a: np.ndarray, u: np.ndarray, w: np.ndarray,
                             check_tol: float = 1e-10) -> tuple[complex, np.ndarray, np.ndarray]:
    """(Gamma, F, G) entering the Gaussian reduction of the composed kernel.

    Gamma = psi2(Au, w) + i omega0(A^{-1}L, Q^{-1}A^t L) + (1/2) L^t A Q^{-1} A^t L,
    F = -J0 A^{-1} L (= -A^t J0 L, asserted), G = A^t L.
    """
    a = np.asarray(a, dtype=float)
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    d = a.shape[0] // 2
    j = standard_j(d)
    q = np.eye(2 * d) + a.T @ a
    qi = np.linalg.inv(q)
    ell = a @ u - w
    ainv_l = np.linalg.solve(a, ell)
    f_vec = -j @ ainv_l
    f_alt = -a.T @ j @ ell
    if np.abs(f_vec - f_alt).max() > check_tol * max(1.0, np.abs(f_vec).max()):
        raise ValueError("the two expressions for F disagree beyond tolerance")
    g_vec = a.T @ ell
    gamma = (szego_exponent(a @ u, w)
             + 1j * omega0(ainv_l, qi @ a.T @ ell)
             + 0.5 * float(ell @ a @ qi @ a.T @ ell))
    return complex(gamma), f_vec, g_vec


def graph_exponent_via_reduction(a: np.ndarray, u: np.ndarray, w: np.ndarray) -> complex:
    """Assemble the graph exponent from psi2, F, G and Q (independent route)."""
    a = np.asarray(a, dtype=float)
    d = a.shape[0] // 2
    q = np.eye(2 * d) + a.T @ a
    qi = np.linalg.inv(q)
    _, f_vec, g_vec = gaussian_reduction_terms(a, u, w)
    return complex(
        szego_exponent(a @ np.asarray(u, float), np.asarray(w, float))
        - 1j * float(g_vec @ qi @ f_vec)
        + 0.5 * float(g_vec @ qi @ g_vec)
        - 0.5 * float(f_vec @ qi @ f_vec)
    )


@dataclass(frozen=True)
class IdentityReport:
    """Max absolute residuals of the two polar matrix identities."""

    pcal_residual: float
    rcal_residual: float

    @property
    def max_residual(self) -> float:
        return max(self.pcal_residual, self.rcal_residual)


def polar_matrix_identities(a: np.ndarray) -> IdentityReport:
    """Residuals of I - J0 A Q^{-1} A^t J0 - A Q^{-1} A^t = 2 Pcal
    and A Q^{-1} A^t J0 + (A Q^{-1} A^t J0)^t = -Rcal."""
    a = np.asarray(a, dtype=float)
    d = a.shape[0] // 2
    j = standard_j(d)
    f = polar_decompose(a)
    qi = np.linalg.inv(f.q)
    aqa = a @ qi @ a.T
    lhs1 = np.eye(2 * d) - j @ aqa @ j - aqa
    res1 = np.abs(lhs1 - 2 * f.pcal).max()
    lhs2 = aqa @ j + (aqa @ j).T
    res2 = np.abs(lhs2 + f.rcal).max()
    return IdentityReport(pcal_residual=float(res1), rcal_residual=float(res2))


def matrix_to_json(a: np.ndarray) -> list[list[float]]:
    """Row-major nested lists, the wire format used by the harness."""
    return [[float(x) for x in row] for row in np.asarray(a, dtype=float)]


def matrix_from_json(rows: list[list[float]]) -> np.ndarray:
    a = np.asarray(rows, dtype=float)
    if a.ndim != 2:
        raise ValueError("expected a nested list of rows")
    return a
