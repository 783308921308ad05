"""Executable stationary-phase algebra for the composed kernel integral.

The 4-dimensional phase in the dilation/angle variables, its stationary
point and Hessian homotopy, the square-root prefactor with its branch, the
two Gaussian change-of-variable identities, and the evolution phase of the
one-parameter group.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import dblquad

from .symplectic import (
    gaussian_reduction_terms,
    graph_exponent,
    omega0,
    standard_j,
    szego_exponent,
)


class NewtonConvergenceError(RuntimeError):
    """Newton iteration on the complexified gradient did not converge."""


class ReductionIdentityError(AssertionError):
    """Both substitution variants fail the reduction identity (implementation bug)."""


@dataclass(frozen=True)
class PhasePoint:
    """Point (t, theta, u, vartheta) of the phase domain; t, u range over (0, inf)."""

    t: float
    theta: float
    u: float
    vartheta: float

    def __post_init__(self) -> None:
        if self.t <= 0 or self.u <= 0:
            raise ValueError("dilation variables t, u must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.t, self.theta, self.u, self.vartheta], dtype=float)


def phase(p: PhasePoint) -> complex:
    """i t (1 - e^{-i theta}) + i u (1 - e^{i(theta + vartheta)}) - vartheta."""
    t, th, u, vt = p.t, p.theta, p.u, p.vartheta
    return complex(1j * t * (1 - np.exp(-1j * th)) + 1j * u * (1 - np.exp(1j * (th + vt))) - vt)


def _phase_gradient_c(x: np.ndarray) -> np.ndarray:
    """Gradient of the phase, valid for complexified coordinates."""
    t, th, u, vt = x
    e_m = np.exp(-1j * th)
    e_p = np.exp(1j * (th + vt))
    return np.array([
        1j * (1 - e_m),
        -t * e_m + u * e_p,
        1j * (1 - e_p),
        u * e_p - 1,
    ], dtype=complex)


def phase_gradient(p: PhasePoint) -> np.ndarray:
    return _phase_gradient_c(p.as_array().astype(complex))


def _phase_hessian_c(x: np.ndarray) -> np.ndarray:
    t, th, u, vt = x
    e_m = np.exp(-1j * th)
    e_p = np.exp(1j * (th + vt))
    return np.array([
        [0, -e_m, 0, 0],
        [-e_m, 1j * t * e_m + 1j * u * e_p, e_p, 1j * u * e_p],
        [0, e_p, 0, e_p],
        [0, 1j * u * e_p, e_p, 1j * u * e_p],
    ], dtype=complex)


def stationary_point(start: PhasePoint, tol: float = 1e-12, max_iter: int = 50) -> PhasePoint:
    """Newton iteration on the complexified gradient; converges to (1, 0, 1, 0)."""
    x = start.as_array().astype(complex)
    for _ in range(max_iter):
        g = _phase_gradient_c(x)
        if np.abs(g).max() < tol:
            if np.abs(x.imag).max() > 1e-8:
                raise NewtonConvergenceError("converged to a non-real point")
            return PhasePoint(*[float(v) for v in x.real])
        h = _phase_hessian_c(x)
        try:
            step = np.linalg.solve(h, g)
        except np.linalg.LinAlgError as exc:
            raise NewtonConvergenceError("singular Hessian during Newton") from exc
        x = x - step
        if not np.all(np.isfinite(x)) or np.abs(x).max() > 1e6:
            raise NewtonConvergenceError("iteration diverged")
    raise NewtonConvergenceError("no convergence in %d iterations" % max_iter)


def hessian_path(s: float) -> np.ndarray:
    """The Hessian homotopy H(s); H(1) is the phase Hessian at the stationary point.

    det H(s) = 1 for every s in [0, 1]; H(0) is real symmetric with vanishing
    signature, which fixes the square-root branch below.
    """
    if not 0.0 <= s <= 1.0:
        raise ValueError("s must lie in [0, 1]")
    return np.array([
        [0, -1, 0, 0],
        [-1, 2j * s, 1, 1j * s],
        [0, 1, 0, 1],
        [0, 1j * s, 1, 1j * s],
    ], dtype=complex)


def sqrt_hessian_factor(k: float) -> complex:
    """sqrt(det(k H / 2 pi i)) = (k / 2 pi)^2 with branch +1 from the real endpoint."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return complex((k / (2 * np.pi)) ** 2)


def sqrt_factor_branch_track(k: float, samples: int = 11) -> tuple[complex, float]:
    """Track arg det(k H(s)/2 pi i)^{1/2} along s in [0, 1].

    Returns the endpoint square root (continuous branch, anchored at +|.|^{1/2}
    at the real signature-zero endpoint s = 0) and the net phase wound.
    """
    ss = np.linspace(0.0, 1.0, samples)
    dets = np.array([np.linalg.det(k * hessian_path(s) / (2j * np.pi)) for s in ss])
    args = np.unwrap(np.angle(dets))
    args -= args[0]  # branch anchored at the real endpoint
    half_arg = args[-1] / 2
    val = np.sqrt(np.abs(dets[-1])) * np.exp(1j * half_arg)
    return complex(val), float(half_arg)


@dataclass(frozen=True)
class ReductionReport:
    """Residuals of the two change-of-variable identities and the passing variant."""

    first_residual: float
    second_residual: float
    variant: str   # "At": r = s - Q^{-1} A^t L; "A": r = s - Q^{-1} A L

    @property
    def max_residual(self) -> float:
        return max(self.first_residual, self.second_residual)


def _pair_exponent(a: np.ndarray, u: np.ndarray, v: np.ndarray, w: np.ndarray) -> complex:
    return szego_exponent(u, v) + szego_exponent(a @ v, w)


def gaussian_reduction_check(a: np.ndarray, u: np.ndarray, w: np.ndarray,
                             s: np.ndarray) -> ReductionReport:
    """Evaluate both sides of the two reduction identities at the sample vector s.

    The first substitutes v = r + u; the second additionally shifts
    r = s - Q^{-1} X L with X = A^t (the variant that closes; X = A is also
    tried and the passing variant recorded).
    """
    a = np.asarray(a, dtype=float)
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    s = np.asarray(s, dtype=float)
    d = a.shape[0] // 2
    j = standard_j(d)
    q = np.eye(2 * d) + a.T @ a
    qi = np.linalg.inv(q)
    ell = a @ u - w
    ainv_l = np.linalg.solve(a, ell)
    scale = max(1.0, float(np.abs(ell).max()) ** 2, float(s @ s))

    # first identity at r = s
    r = s
    lhs1 = _pair_exponent(a, u, r + u, w)
    rhs1 = (szego_exponent(a @ u, w)
            - 1j * omega0(ainv_l, r)
            - float(r @ a.T @ ell)
            - 0.5 * float(r @ q @ r))
    res1 = abs(lhs1 - rhs1) / scale

    gamma, _, _ = gaussian_reduction_terms(a, u, w)

    def second_residual(x_mat: np.ndarray) -> float:
        rr = s - qi @ x_mat @ ell
        lhs2 = _pair_exponent(a, u, rr + u, w)
        rhs2 = gamma - 1j * float(s @ j @ ainv_l) - 0.5 * float(s @ q @ s)
        return abs(lhs2 - rhs2) / scale

    res_at = second_residual(a.T)
    res_a = second_residual(a)
    tol = 1e-9
    if res_at <= tol or res_at <= res_a:
        return ReductionReport(first_residual=float(res1), second_residual=float(res_at),
                               variant="At")
    if res_a <= tol:
        return ReductionReport(first_residual=float(res1), second_residual=float(res_a),
                               variant="A")
    raise ReductionIdentityError(
        "both substitution variants fail: residuals %.2e (A^t), %.2e (A)" % (res_at, res_a)
    )


def leading_gaussian_integral(a: np.ndarray, u: np.ndarray, w: np.ndarray) -> complex:
    """Closed form of e^Gamma * integral exp(i s.F - s^t Q s / 2) ds over R^{2d}.

    Equals (2 pi)^d det(Q)^{-1/2} e^{Gamma - F^t Q^{-1} F / 2}, and by the
    reduction algebra also (2 pi)^d det(Q)^{-1/2} e^{S_A(u, w)}.
    """
    a = np.asarray(a, dtype=float)
    d = a.shape[0] // 2
    q = np.eye(2 * d) + a.T @ a
    qi = np.linalg.inv(q)
    gamma, f_vec, _ = gaussian_reduction_terms(a, u, w)
    return complex((2 * np.pi) ** d / np.sqrt(np.linalg.det(q))
                   * np.exp(gamma - 0.5 * float(f_vec @ qi @ f_vec)))


def leading_gaussian_integral_via_graph(a: np.ndarray, u: np.ndarray, w: np.ndarray) -> complex:
    """(2 pi)^d det(Q)^{-1/2} e^{S_A(u, w)}: the graph-exponent route."""
    a = np.asarray(a, dtype=float)
    d = a.shape[0] // 2
    q = np.eye(2 * d) + a.T @ a
    return complex((2 * np.pi) ** d / np.sqrt(np.linalg.det(q))
                   * np.exp(graph_exponent(a, u, w)))


def oscillatory_gaussian_quadrature(a: np.ndarray, u: np.ndarray, w: np.ndarray,
                                    tol: float = 1e-9, half_width: float = 12.0) -> complex:
    """Adaptive 2-D quadrature of e^Gamma * exp(i s.F - s^t Q s / 2), d = 1 only."""
    a = np.asarray(a, dtype=float)
    if a.shape != (2, 2):
        raise ValueError("quadrature cross-check is d = 1 only")
    q = np.eye(2) + a.T @ a
    gamma, f_vec, _ = gaussian_reduction_terms(a, u, w)

    def integrand(y: float, x: float, part: str) -> float:
        s = np.array([x, y])
        val = np.exp(1j * (s @ f_vec) - 0.5 * (s @ q @ s))
        return val.real if part == "re" else val.imag

    lim = half_width / np.sqrt(np.linalg.eigvalsh(q).min())
    re, _ = dblquad(integrand, -lim, lim, -lim, lim, args=("re",), epsabs=tol, epsrel=tol)
    im, _ = dblquad(integrand, -lim, lim, -lim, lim, args=("im",), epsabs=tol, epsrel=tol)
    return complex(np.exp(gamma) * (re + 1j * im))


@dataclass(frozen=True)
class EvolutionPhase:
    """Stationary data of the one-parameter-group phase u(tau f0 + vt + th) - t th - vt."""

    point: np.ndarray      # (1, 0, 1, -tau f0)
    value: float           # tau f0
    hessian: np.ndarray    # constant 4x4, signature zero


def evolution_phase(tau: float, f0: float) -> EvolutionPhase:
    point = np.array([1.0, 0.0, 1.0, -tau * f0])
    hess = np.array([
        [0, -1, 0, 0],
        [-1, 0, 1, 0],
        [0, 1, 0, 1],
        [0, 0, 1, 0],
    ], dtype=float)
    return EvolutionPhase(point=point, value=float(tau * f0), hessian=hess)


def evolution_phase_gradient(x: np.ndarray, tau: float, f0: float) -> np.ndarray:
    """Gradient of u(tau f0 + vt + th) - t th - vt at x = (t, th, u, vt)."""
    t, th, u, vt = x
    return np.array([
        -th,
        u - t,
        tau * f0 + vt + th,
        u - 1.0,
    ], dtype=float)
