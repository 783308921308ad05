"""Closed-form asymptotic predictions for the quantized flow kernel.

Leading near-graph term, rapid-decay envelope, unitarization modulus,
diagonal composition law and the isolated fixed-point trace.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .symplectic import (
    PolarFactors,
    graph_exponent,
    normalization_factor,
    polar_decompose,
    standard_j,
)


class DegenerateFixedPointError(ValueError):
    """The fixed-point quadratic form is degenerate (non-isolated fixed point)."""


@dataclass(frozen=True)
class LeadingKernelPrediction:
    """Leading term rho (k/pi)^d (2^d / nu) e^{S_A(u,w)} split into its factors."""

    k: int
    prefactor: complex   # rho (k/pi)^d 2^d / nu
    exponent: complex    # S_A(u, w)

    @property
    def value(self) -> complex:
        return self.prefactor * np.exp(self.exponent)


def leading_kernel(a: np.ndarray, rho: complex, k: int, u: np.ndarray, w: np.ndarray,
                   factors: PolarFactors | None = None) -> LeadingKernelPrediction:
    """Leading rescaled kernel value at offsets (u, w) from the graph point."""
    if k < 1:
        raise ValueError("k must be >= 1")
    a = np.asarray(a, dtype=float)
    d = a.shape[0] // 2
    nu = normalization_factor(a)
    pref = complex(rho) * (k / np.pi) ** d * 2.0 ** d / nu
    expo = graph_exponent(a, u, w, factors=factors)
    return LeadingKernelPrediction(k=int(k), prefactor=pref, exponent=expo)


def unitarization_modulus(a: np.ndarray) -> float:
    """|rho| = 2^{-d/2} sqrt(nu) making the quantized flow unitary at leading order."""
    a = np.asarray(a, dtype=float)
    d = a.shape[0] // 2
    return float(2.0 ** (-d / 2) * np.sqrt(normalization_factor(a)))


def unitarization_modulus_alt(a: np.ndarray) -> float:
    """Equivalent form 2^{-d/2} det(A J0 + J0 A)^{1/4}."""
    a = np.asarray(a, dtype=float)
    d = a.shape[0] // 2
    j = standard_j(d)
    return float(2.0 ** (-d / 2) * np.linalg.det(a @ j + j @ a) ** 0.25)


def decay_envelope(a: np.ndarray, u: np.ndarray, w: np.ndarray) -> float:
    """exp(Re S_A(u,w)): modulus attenuation relative to the on-graph value.

    Equals 1 iff A u = w; the level k drops out at fixed rescaled offsets.
    """
    return float(np.exp(graph_exponent(a, u, w).real))


def diagonal_composition(a: np.ndarray, rho: complex, k: int) -> float:
    """(k/pi)^d |rho|^2 2^d / sqrt(det Q): the U U* diagonal at leading order."""
    a = np.asarray(a, dtype=float)
    d = a.shape[0] // 2
    f = polar_decompose(a)
    return float((k / np.pi) ** d * abs(rho) ** 2 * 2.0 ** d / np.sqrt(np.linalg.det(f.q)))


def diagonal_gaussian_integral(q: np.ndarray) -> float:
    """Closed form of the R^{2d} integral of exp(-2 v^t Q^{-1} v): 2^{-2d}(2 pi)^d sqrt(det Q)."""
    q = np.asarray(q, dtype=float)
    n = q.shape[0]
    if n % 2 or q.shape != (n, n):
        raise ValueError("Q must be 2d x 2d")
    if np.abs(q - q.T).max() > 1e-12 * max(1.0, np.abs(q).max()):
        raise ValueError("Q must be symmetric")
    ev = np.linalg.eigvalsh((q + q.T) / 2)
    if ev.min() <= 0:
        raise ValueError("Q must be positive definite")
    d = n // 2
    return float(2.0 ** (-2 * d) * (2 * np.pi) ** d * np.sqrt(np.linalg.det(q)))


def fixed_point_form(a: np.ndarray) -> np.ndarray:
    """Symmetric matrix S with S_A(u, u) = -(1/2) u^t S u."""
    a = np.asarray(a, dtype=float)
    d = a.shape[0] // 2
    f = polar_decompose(a)
    j = standard_j(d)
    ami = a - np.eye(2 * d)
    c = -(ami.T @ (f.pcal + 0.5j * f.rcal) @ ami) - 1j * (a.T @ (-j))
    return -(c + c.T)


def _det_inv_sqrt_rhp(s: np.ndarray) -> complex:
    """det(S)^{-1/2} by principal per-eigenvalue roots.

    Valid for complex symmetric S with positive-definite real part: the
    spectrum lies in the open right half plane, so each principal root is
    continuous along the deformation Re(S) + t i Im(S) from the positive
    definite case, fixing the branch.
    """
    ev = np.linalg.eigvals(s)
    if np.any(ev.real <= 0):
        raise DegenerateFixedPointError("fixed-point form does not have positive real part")
    return complex(np.prod(ev ** -0.5))


def fixed_point_trace(a_fixed: np.ndarray, rho: complex, det_tol: float = 1e-8) -> complex:
    """Per-fixed-point trace contribution rho 2^{2d} / nu * det(S)^{-1/2}.

    Requires the differential at an isolated non-degenerate fixed point; the
    identity (and any A with degenerate S) is rejected.
    """
    a = np.asarray(a_fixed, dtype=float)
    d = a.shape[0] // 2
    s = fixed_point_form(a)
    if abs(np.linalg.det(s)) < det_tol:
        raise DegenerateFixedPointError(
            "det of the fixed-point form is %.2e (degenerate fixed point)" % abs(np.linalg.det(s))
        )
    nu = normalization_factor(a)
    return complex(rho) * 2.0 ** (2 * d) / nu * _det_inv_sqrt_rhp(s)
