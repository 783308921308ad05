"""Exact finite-level Bargmann-Fock model.

Level-k space spanned by normalized monomials z^m sqrt(k^{|m|+d}/(pi^d m!))
against the weight e^{-k|z|^2} on C^d, truncated at total degree N.  The
quantized flow operator is the compression of the lifted pullback of a
linear Hamiltonian flow; every quantity the asymptotic predictions speak
about (kernel values, composition diagonal, traces, generators) is
computable here by quadrature and serves as the brute-force reference.

Identification R^{2d} ~ C^d: v = (a, b) -> a + i b, matching the symplectic
conventions of :mod:`fockflow.symplectic`.

Quadrature: tensorized Gauss-Hermite per real axis against the model
weight, with Lebesgue-folded weights.  Node count is tied to the truncation
degree so the basis Gram matrix is integrated exactly; adequacy for
transformed integrands is enforced by explicit gates, never assumed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from math import ceil
from pathlib import Path

import numpy as np
from scipy.linalg import expm

from .symplectic import standard_j

# Fiber phase rate of the circle-bundle lift, as exp(i k c tau f(z)) inside
# the pullback.  Pinned once by calibrate_lift_constant: the rotation flow
# (H = I) is exactly unitary and diagonal only for c = 0; any nonzero rate
# multiplies a non-holomorphic phase whose Toeplitz compression is a strict
# contraction.  Frozen here, re-derivable through the calibration routine.
LIFT_CONSTANT = 0.0

_CHUNK = 1 << 14
_MAX_AXIS_NODES = 349   # keeps exp(t_max^2) = exp(2 nh + 1) finite in double precision
_MAX_TOTAL_NODES = 5_000_000


class GramGateError(RuntimeError):
    """Quadrature failed to reproduce the basis Gram matrix to tolerance."""


class QuadratureGateError(RuntimeError):
    """Quadrature inadequate for the transformed integrand (flow norm too large)."""


class TailGateError(RuntimeError):
    """Truncation tail dominates the requested quantity."""


class FiniteDifferenceError(RuntimeError):
    """Finite-difference step failed the halving consistency check."""


class FitError(RuntimeError):
    """Coefficient extraction across the level sweep is ill-conditioned."""


def _multi_indices(d: int, n_max: int) -> np.ndarray:
    """All multi-indices with |m| <= n_max in graded lexicographic order."""
    out: list[tuple[int, ...]] = []

    def rec(prefix: list[int], remaining: int, slots: int) -> None:
        if slots == 1:
            out.append(tuple(prefix + [remaining]))
            return
        for v in range(remaining + 1):
            rec(prefix + [v], remaining - v, slots - 1)

    for total in range(n_max + 1):
        rec([], total, d)
    return np.asarray(out, dtype=np.int64)


@dataclass(frozen=True)
class ModelSpace:
    """Immutable truncated model space with its quadrature rule."""

    d: int
    k: int
    n_max: int
    exponents: np.ndarray      # (dim, d) multi-indices, graded lex
    nodes_real: np.ndarray     # (npts, 2d) quadrature nodes in R^{2d}
    weights: np.ndarray        # (npts,) Lebesgue-folded weights
    gram_residual: float
    axis_nodes: int
    quad_pad: float

    @property
    def dim(self) -> int:
        return self.exponents.shape[0]

    @property
    def degrees(self) -> np.ndarray:
        return self.exponents.sum(axis=1)

    def nodes_complex(self) -> np.ndarray:
        return self.nodes_real[:, : self.d] + 1j * self.nodes_real[:, self.d:]

    def basis_at(self, pts: np.ndarray) -> np.ndarray:
        """Weighted basis values F_m(z) at complex points pts (npts, d)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=complex))
        m = pts.shape[0]
        k = float(self.k)
        tables = []
        for j in range(self.d):
            z = pts[:, j]
            t = np.empty((m, self.n_max + 1), dtype=np.complex128)
            t[:, 0] = np.sqrt(k / np.pi) * np.exp(-k * np.abs(z) ** 2 / 2)
            for p in range(self.n_max):
                t[:, p + 1] = t[:, p] * z * np.sqrt(k / (p + 1))
            tables.append(t)
        b = tables[0][:, self.exponents[:, 0]]
        for j in range(1, self.d):
            b = b * tables[j][:, self.exponents[:, j]]
        return b


def _gh_axis(nh: int, k: float) -> tuple[np.ndarray, np.ndarray]:
    t, w = np.polynomial.hermite.hermgauss(nh)
    # Lebesgue weights: int f(x) dx = sum (w e^{t^2}) f(t / sqrt k) / sqrt k
    c = np.exp(np.log(w) + t * t) / np.sqrt(k)
    return t / np.sqrt(k), c


def build_space(d: int, k: int, n_max: int, quad_pad: float = 1.3,
                gram_tol: float = 1e-9) -> ModelSpace:
    """Construct the truncated space; fails loudly if the Gram gate misses."""
    if d < 1 or k < 1 or n_max < 0:
        raise ValueError("need d >= 1, k >= 1, n_max >= 0")
    nh = max(n_max + 2, ceil(quad_pad * (n_max + 1)))
    if n_max + 2 > _MAX_AXIS_NODES:
        raise GramGateError(
            "truncation degree %d needs more than %d nodes per axis" % (n_max, _MAX_AXIS_NODES)
        )
    nh = min(nh, _MAX_AXIS_NODES)
    if nh ** (2 * d) > _MAX_TOTAL_NODES:
        raise GramGateError("quadrature grid %d^%d exceeds the node budget" % (nh, 2 * d))
    axis_x, axis_c = _gh_axis(nh, float(k))
    grids = np.meshgrid(*([axis_x] * (2 * d)), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    wgrids = np.meshgrid(*([axis_c] * (2 * d)), indexing="ij")
    weights = wgrids[0].ravel().copy()
    for g in wgrids[1:]:
        weights *= g.ravel()

    exps = _multi_indices(d, n_max)
    space = ModelSpace(d=d, k=int(k), n_max=int(n_max), exponents=exps,
                       nodes_real=nodes, weights=weights, gram_residual=np.nan,
                       axis_nodes=nh, quad_pad=float(quad_pad))
    gram = _quadrature_gram(space)
    resid = float(np.abs(gram - np.eye(space.dim)).max())
    if resid > gram_tol:
        raise GramGateError("Gram residual %.3e exceeds gate %.1e" % (resid, gram_tol))
    return replace(space, gram_residual=resid)


def _quadrature_gram(space: ModelSpace, pts: np.ndarray | None = None,
                     extra_weight: np.ndarray | None = None) -> np.ndarray:
    """Chunked B^H diag(w) B over the quadrature nodes."""
    z = space.nodes_complex() if pts is None else pts
    w = space.weights if extra_weight is None else space.weights * extra_weight
    g = np.zeros((space.dim, space.dim), dtype=np.complex128)
    for lo in range(0, z.shape[0], _CHUNK):
        hi = min(lo + _CHUNK, z.shape[0])
        b = space.basis_at(z[lo:hi])
        g += b.conj().T @ (w[lo:hi, None] * b)
    return g


def szego_kernel(space: ModelSpace, z: np.ndarray, w: np.ndarray) -> complex:
    """Closed-form projector kernel (k/pi)^d exp(k (z.conj(w) - |z|^2/2 - |w|^2/2))."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    w = np.atleast_1d(np.asarray(w, dtype=complex))
    k = space.k
    expo = k * (z @ w.conj() - (np.abs(z) ** 2).sum() / 2 - (np.abs(w) ** 2).sum() / 2)
    return complex((k / np.pi) ** space.d * np.exp(expo))


@dataclass(frozen=True)
class QuadraticFlow:
    """Linear Hamiltonian flow of f(v) = v^t H v / 2 with its lifted data.

    a_tau is the differential (= the map itself) of the backward flow at
    time tau, i.e. exp(tau J0 H); the fiber phase rate of the lift is
    lift_constant, applied as exp(i k c tau f(z)) inside the pullback.
    """

    hamiltonian: np.ndarray
    tau: float
    a_tau: np.ndarray
    lift_constant: float

    @property
    def d(self) -> int:
        return self.hamiltonian.shape[0] // 2

    def energy(self, v: np.ndarray) -> float:
        v = np.asarray(v, dtype=float)
        return 0.5 * float(v @ self.hamiltonian @ v)

    def vector_field(self, v: np.ndarray) -> np.ndarray:
        return -standard_j(self.d) @ self.hamiltonian @ np.asarray(v, dtype=float)

    def map_forward(self, v: np.ndarray) -> np.ndarray:
        """Forward flow at time tau (inverse of a_tau)."""
        return np.linalg.solve(self.a_tau, np.asarray(v, dtype=float))

    def map_backward(self, v: np.ndarray) -> np.ndarray:
        return self.a_tau @ np.asarray(v, dtype=float)


def flow_from_hamiltonian(hamiltonian: np.ndarray, tau: float,
                          lift_constant: float = LIFT_CONSTANT) -> QuadraticFlow:
    h = np.asarray(hamiltonian, dtype=float)
    n = h.shape[0]
    if h.shape != (n, n) or n % 2:
        raise ValueError("Hamiltonian must be a 2d x 2d matrix")
    if np.abs(h - h.T).max() > 1e-12 * max(1.0, np.abs(h).max()):
        raise ValueError("Hamiltonian must be symmetric")
    a_tau = expm(tau * standard_j(n // 2) @ h)
    return QuadraticFlow(hamiltonian=h, tau=float(tau), a_tau=a_tau,
                         lift_constant=float(lift_constant))


@dataclass(frozen=True)
class TruncatedOperator:
    """Operator on the truncated level-k space in the normalized monomial basis."""

    space: ModelSpace
    matrix: np.ndarray

    def adjoint(self) -> "TruncatedOperator":
        return TruncatedOperator(space=self.space, matrix=self.matrix.conj().T)

    def compose(self, other: "TruncatedOperator") -> "TruncatedOperator":
        if other.space is not self.space and other.space.dim != self.space.dim:
            raise ValueError("operators live on different spaces")
        return TruncatedOperator(space=self.space, matrix=self.matrix @ other.matrix)

    def scaled(self, factor: complex) -> "TruncatedOperator":
        return TruncatedOperator(space=self.space, matrix=self.matrix * complex(factor))

    @classmethod
    def projector(cls, space: ModelSpace) -> "TruncatedOperator":
        return cls(space=space, matrix=np.eye(space.dim, dtype=np.complex128))


def pullback_operator(space: ModelSpace, flow: QuadraticFlow,
                      adequacy_tol: float = 1e-7) -> TruncatedOperator:
    """Compress the lifted pullback of the backward flow to the truncated space.

    Matrix entries <Pi phi* e_n, e_m> by quadrature; the Gram of the basis at
    the transformed nodes is accumulated alongside and must reproduce the
    identity, which is the change-of-variables adequacy gate for the rule.
    """
    if flow.d != space.d:
        raise ValueError("flow dimension does not match the space")
    a = flow.a_tau
    x = space.nodes_real
    xa = x @ a.T
    za = xa[:, : space.d] + 1j * xa[:, space.d:]
    z = space.nodes_complex()
    c = flow.lift_constant
    if c != 0.0:
        f_vals = 0.5 * np.einsum("ij,jl,il->i", x, flow.hamiltonian, x)
        phase = np.exp(1j * space.k * c * flow.tau * f_vals)
    else:
        phase = None

    m = np.zeros((space.dim, space.dim), dtype=np.complex128)
    ga = np.zeros((space.dim, space.dim), dtype=np.complex128)
    w = space.weights
    for lo in range(0, z.shape[0], _CHUNK):
        hi = min(lo + _CHUNK, z.shape[0])
        b_out = space.basis_at(z[lo:hi])
        b_in = space.basis_at(za[lo:hi])
        cw = w[lo:hi] if phase is None else w[lo:hi] * phase[lo:hi]
        m += b_out.conj().T @ (cw[:, None] * b_in)
        ga += b_in.conj().T @ (w[lo:hi, None] * b_in)
    resid = float(np.abs(ga - np.eye(space.dim)).max())
    if resid > adequacy_tol:
        raise QuadratureGateError(
            "transformed-node Gram residual %.3e exceeds %.1e for ||A|| = %.3f; "
            "raise quad_pad or lower the truncation degree"
            % (resid, adequacy_tol, np.linalg.norm(a, 2))
        )
    return TruncatedOperator(space=space, matrix=m)


def apply_symbol(op: TruncatedOperator, rho: complex) -> TruncatedOperator:
    """Scale by a constant leading symbol value at the base point."""
    return op.scaled(rho)


def toeplitz_operator(space: ModelSpace, hamiltonian: np.ndarray) -> TruncatedOperator:
    """Compression of multiplication by f(v) = v^t H v / 2 to the truncated space."""
    h = np.asarray(hamiltonian, dtype=float)
    if h.shape != (2 * space.d, 2 * space.d):
        raise ValueError("Hamiltonian must be 2d x 2d")
    f_vals = 0.5 * np.einsum("ij,jl,il->i", space.nodes_real, h, space.nodes_real)
    m = _quadrature_gram(space, extra_weight=f_vals)
    return TruncatedOperator(space=space, matrix=m)


@dataclass(frozen=True)
class KernelSample:
    """One rescaled kernel evaluation with its truncation-tail diagnostic."""

    u: np.ndarray
    w: np.ndarray
    value: complex
    tail: float            # relative weight of the discarded modes at the two arguments
    flagged: bool

    TAIL_WARN = 1e-7


def kernel_value(op: TruncatedOperator, flow: QuadraticFlow, u: np.ndarray, w: np.ndarray,
                 base: np.ndarray | None = None) -> KernelSample:
    """Kernel at (base + u/sqrt(k), flow(base) + w/sqrt(k)).

    The default base is the origin, the fixed point of the linear flow, where
    the equivariant frame factors cancel identically.  Off-origin bases are
    evaluated in the global frame: the modulus is faithful, the
    Heisenberg-frame phase factors are omitted.
    """
    space = op.space
    k = space.k
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    if base is None:
        b_out = np.zeros(2 * space.d)
        b_in = np.zeros(2 * space.d)
    else:
        b_out = np.asarray(base, dtype=float)
        b_in = flow.map_backward(b_out)
    p_out = b_out + u / np.sqrt(k)
    p_in = b_in + w / np.sqrt(k)
    z_out = (p_out[: space.d] + 1j * p_out[space.d:])[None, :]
    z_in = (p_in[: space.d] + 1j * p_in[space.d:])[None, :]
    f_out = op.space.basis_at(z_out)[0]
    f_in = op.space.basis_at(z_in)[0]
    value = complex(f_out @ op.matrix @ f_in.conj())
    full = (k / np.pi) ** space.d
    tail_out = max(0.0, 1.0 - float((np.abs(f_out) ** 2).sum()) / full)
    tail_in = max(0.0, 1.0 - float((np.abs(f_in) ** 2).sum()) / full)
    tail = float(np.sqrt(tail_out) + np.sqrt(tail_in))
    return KernelSample(u=u, w=w, value=value, tail=tail, flagged=tail > KernelSample.TAIL_WARN)


@dataclass(frozen=True)
class SchrodingerResidual:
    """Normalized generator residual with its step-halving diagnostic."""

    value: float
    value_halved: float
    step_change: float
    k: int


def schrodinger_residual(space: ModelSpace, hamiltonian: np.ndarray, tau0: float,
                         u: np.ndarray, w: np.ndarray, dtau: float = 1e-3,
                         step_tol: float = 0.10,
                         lift_constant: float = LIFT_CONSTANT) -> SchrodingerResidual:
    """|d/dtau kernel - i k (T_f U) kernel| / (k^d e^{Re S}) at the rescaled offsets.

    The tau-derivative is a central difference validated by step halving;
    disagreement above step_tol raises, flagging a too-large step.
    """
    from .symplectic import graph_exponent  # local import avoids cycle at module load

    h = np.asarray(hamiltonian, dtype=float)
    k = space.k

    def kernel_at(tau: float) -> complex:
        fl = flow_from_hamiltonian(h, tau, lift_constant)
        return kernel_value(pullback_operator(space, fl), fl, u, w).value

    flow0 = flow_from_hamiltonian(h, tau0, lift_constant)
    op0 = pullback_operator(space, flow0)
    t_f = toeplitz_operator(space, h)
    gen = TruncatedOperator(space=space, matrix=t_f.matrix @ op0.matrix)
    gen_kernel = kernel_value(gen, flow0, u, w).value
    s_re = graph_exponent(flow0.a_tau, u, w).real
    norm = k ** space.d * np.exp(s_re)

    k_plus, k_minus = kernel_at(tau0 + dtau), kernel_at(tau0 - dtau)
    k_plus_h, k_minus_h = kernel_at(tau0 + dtau / 2), kernel_at(tau0 - dtau / 2)
    res = abs((k_plus - k_minus) / (2 * dtau) - 1j * k * gen_kernel) / norm
    res_h = abs((k_plus_h - k_minus_h) / dtau - 1j * k * gen_kernel) / norm
    change = abs(res - res_h) / max(res, 1e-300)
    if change > step_tol:
        raise FiniteDifferenceError(
            "halving the step changed the residual by %.1f%% (> %.0f%%); dtau too large"
            % (100 * change, 100 * step_tol)
        )
    return SchrodingerResidual(value=float(res), value_halved=float(res_h),
                               step_change=float(change), k=k)


def model_trace(op: TruncatedOperator, window_eps: float = 0.0,
                tail_tol: float | None = None, band: int | None = None) -> complex:
    """Trace, optionally against the invariant Gaussian bump e^{-eps k |z|^2}.

    The bump weights the degree-m diagonal entry by (1 + eps)^{-(|m| + d)}
    (an exact moment).  With tail_tol set, the top degree band must carry at
    most that fraction of the total, otherwise the truncated series cannot
    be trusted and a TailGateError is raised.
    """
    space = op.space
    if window_eps < 0:
        raise ValueError("window_eps must be >= 0")
    deg = space.degrees
    gamma = (1.0 + window_eps) ** -(deg + space.d) if window_eps else np.ones_like(deg, float)
    diag = np.diag(op.matrix)
    total = complex(np.sum(diag * gamma))
    if tail_tol is not None:
        bw = band if band is not None else max(1, space.n_max // 10)
        top = deg > space.n_max - bw
        top_mass = abs(np.sum(diag[top] * gamma[top]))
        if top_mass > tail_tol * max(abs(total), 1e-14):
            raise TailGateError(
                "top degree band carries %.2e of a trace of size %.2e" % (top_mass, abs(total))
            )
    return total


def rotation_trace_series(angle: float, n_max: int, window_eps: float = 0.0) -> complex:
    """Closed form sum_{n<=N} e^{i n a} (1+eps)^{-(n+1)}: the d=1 rotation oracle."""
    q = np.exp(1j * angle) / (1.0 + window_eps)
    if abs(q - 1.0) < 1e-15:
        return complex(n_max + 1)
    return complex((1.0 / (1.0 + window_eps)) * (1 - q ** (n_max + 1)) / (1 - q))


@dataclass(frozen=True)
class DefectReport:
    """Unitarity defect away from the truncation edge."""

    value: float
    band_width: int
    retained_degree: int
    retained_dim: int


def unitarity_defect(op: TruncatedOperator, band_fraction: float = 0.5) -> DefectReport:
    """Spectral norm of U U* - I on modes of degree <= (1 - band_fraction) N.

    The top degree band is where truncation bites (the flow spreads degrees
    by a factor up to ||A||^2); its width is reported, not hidden.
    """
    if not 0.0 <= band_fraction < 1.0:
        raise ValueError("band_fraction must lie in [0, 1)")
    space = op.space
    keep_deg = int(np.floor((1.0 - band_fraction) * space.n_max))
    keep = space.degrees <= keep_deg
    g = op.matrix @ op.matrix.conj().T
    block = g[np.ix_(keep, keep)] - np.eye(int(keep.sum()))
    value = float(np.linalg.norm(block, 2)) if keep.sum() else 0.0
    return DefectReport(value=value, band_width=space.n_max - keep_deg,
                        retained_degree=keep_deg, retained_dim=int(keep.sum()))


def calibrate_lift_constant(d: int = 1, k: int = 32, tau: float = 0.7,
                            candidates: tuple[float, ...] = (-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0),
                            ) -> tuple[float, dict[float, float]]:
    """Pin the lift phase rate: the candidate making the rotation flow unitary.

    Returns the winning constant and the measured defect per candidate.
    """
    n_max = ceil(8 * np.sqrt(k))
    space = build_space(d, k, n_max)
    h = np.eye(2 * d)
    defects: dict[float, float] = {}
    for c in candidates:
        op = pullback_operator(space, flow_from_hamiltonian(h, tau, lift_constant=c))
        defects[c] = unitarity_defect(op, band_fraction=0.25).value
    best = min(defects, key=lambda c: defects[c])
    return best, defects


@dataclass(frozen=True)
class SymbolCorrectionFit:
    """First-order symbol correction extracted from the composition diagonal."""

    f1: float
    r2: float
    max_signal: float
    window_values: tuple[float, float]
    per_k: dict[int, float]

    NO_SIGNAL_FLOOR = 1e-8


def composition_diagonal_signal(op: TruncatedOperator, rho0: float) -> float:
    """(U U*)(x, x) / (k/pi)^d - 1 at the origin for symbol rho0."""
    row = op.matrix[0, :]
    return float(rho0 ** 2 * np.sum(np.abs(row) ** 2) - 1.0)


def fit_correction_from_signals(signals: dict[int, float]) -> SymbolCorrectionFit:
    """Extract the 1/k coefficient from measured composition-diagonal signals."""
    ks = np.array(sorted(signals), dtype=float)
    sig = np.array([signals[int(k)] for k in ks])
    max_sig = float(np.abs(sig).max())
    if max_sig < SymbolCorrectionFit.NO_SIGNAL_FLOOR:
        return SymbolCorrectionFit(f1=0.0, r2=1.0, max_signal=max_sig,
                                   window_values=(0.0, 0.0),
                                   per_k={int(k): signals[int(k)] for k in ks})

    def fit_c1(kk: np.ndarray, ss: np.ndarray) -> tuple[float, float]:
        x = 1.0 / kk
        c1 = float(np.sum(x * ss) / np.sum(x * x))
        pred = c1 * x
        ss_tot = float(np.sum((ss - ss.mean()) ** 2))
        r2 = 1.0 - float(np.sum((ss - pred) ** 2)) / max(ss_tot, 1e-300)
        return c1, r2

    c1, r2 = fit_c1(ks, sig)
    if r2 < 0.95:
        raise FitError("1/k coefficient fit has R^2 = %.3f < 0.95" % r2)
    half = len(ks) // 2 + 1
    c1_lo, _ = fit_c1(ks[:half], sig[:half])
    c1_hi, _ = fit_c1(ks[-half:], sig[-half:])
    return SymbolCorrectionFit(f1=-c1 / 2.0, r2=r2, max_signal=max_sig,
                               window_values=(-c1_lo / 2.0, -c1_hi / 2.0),
                               per_k={int(k): signals[int(k)] for k in ks})


def fit_symbol_correction(space: ModelSpace, flow: QuadraticFlow, rho0: float,
                          k_list: tuple[int, ...] = (32, 48, 64, 96, 128, 192, 256),
                          ) -> SymbolCorrectionFit:
    """Measure the 1/k coefficient of (U U*)(x,x)/(k/pi)^d - 1 at symbol rho0.

    Returns the relative correction f1 with rho(k) = rho0 (1 + f1 / k)
    cancelling that coefficient; the truncation rule and quadrature padding
    are inherited from the template space.  When the measured signal never
    rises above the numerical floor the correction is zero by measurement
    (the composition diagonal is already flat to this order) and f1 = 0 is
    returned; a signal that is present but fits 1/k poorly (R^2 < 0.95)
    raises FitError.
    """
    mult = space.n_max / np.sqrt(space.k)
    signals: dict[int, float] = {}
    for k in k_list:
        n_k = ceil(mult * np.sqrt(k))
        sp = build_space(space.d, k, n_k, quad_pad=space.quad_pad)
        op = pullback_operator(sp, flow_from_hamiltonian(
            flow.hamiltonian, flow.tau, flow.lift_constant))
        signals[k] = composition_diagonal_signal(op, rho0)
    return fit_correction_from_signals(signals)


SERIAL_VERSION = 1


def save_operator(op: TruncatedOperator, path: str | Path) -> None:
    """Versioned JSON container: dimensions, level, truncation, interleaved matrix."""
    m = op.matrix
    inter = np.empty(2 * m.size)
    inter[0::2] = m.real.ravel()
    inter[1::2] = m.imag.ravel()
    doc = {
        "version": SERIAL_VERSION,
        "d": op.space.d,
        "k": op.space.k,
        "n_max": op.space.n_max,
        "quad_pad": op.space.quad_pad,
        "shape": list(m.shape),
        "matrix": inter.tolist(),
    }
    Path(path).write_text(json.dumps(doc))


def load_operator(path: str | Path, space: ModelSpace | None = None) -> TruncatedOperator:
    """Load a serialized operator, rebuilding its space unless one is supplied."""
    doc = json.loads(Path(path).read_text())
    if doc.get("version") != SERIAL_VERSION:
        raise ValueError("unsupported container version %r" % doc.get("version"))
    if space is None:
        space = build_space(doc["d"], doc["k"], doc["n_max"], quad_pad=doc["quad_pad"])
    elif (space.d, space.k, space.n_max) != (doc["d"], doc["k"], doc["n_max"]):
        raise ValueError("supplied space does not match the container")
    inter = np.asarray(doc["matrix"])
    m = (inter[0::2] + 1j * inter[1::2]).reshape(doc["shape"])
    return TruncatedOperator(space=space, matrix=m)
