"""Scenario configuration, level sweeps, slope fits and report emission.

Scenario files are versioned TOML (JSON accepted equivalently); acceptance
thresholds live in the scenario file, not in code.  Every sweep record
carries its gate flags, fits exclude gated points and report how many were
excluded, and output is byte-deterministic for a fixed scenario and seed.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import ceil
from pathlib import Path

import numpy as np

from . import fock
from .asymptotics import (
    fixed_point_trace,
    leading_kernel,
    unitarization_modulus,
    unitarization_modulus_alt,
)
from .stationary_phase import (
    PhasePoint,
    evolution_phase,
    evolution_phase_gradient,
    gaussian_reduction_check,
    hessian_path,
    leading_gaussian_integral,
    leading_gaussian_integral_via_graph,
    oscillatory_gaussian_quadrature,
    phase,
    phase_gradient,
    sqrt_factor_branch_track,
    sqrt_hessian_factor,
    stationary_point,
)
from .symplectic import (
    graph_exponent,
    graph_exponent_via_reduction,
    graph_splitting,
    matrix_from_json,
    normalization_three_ways,
    polar_decompose,
    polar_matrix_identities,
    random_symplectic,
    random_unitary_symplectic,
)

REL_ERR_FLOOR = 1e-14        # denominator floor for relative errors
RATIO_NOISE_FLOOR = 1e-12    # |model - predicted| below this (relative) is numerical noise
VALUE_NOISE_FLOOR = 1e-18    # predicted magnitudes below this (relative to k^d) are unmeasurable

SCENARIO_VERSION = 1


@dataclass(frozen=True)
class Offset:
    """A (u, w) offset pair; kind 'normal' is resolved against graph(A) at run time."""

    tag: str
    u: np.ndarray | None = None
    w: np.ndarray | None = None
    kind: str = "explicit"       # explicit | normal
    norm: float = 1.0

    def resolve(self, a_tau: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "explicit":
            assert self.u is not None and self.w is not None
            return self.u, self.w
        n = a_tau.shape[0]
        col = graph_splitting(a_tau).normal[:, 0] * self.norm
        return col[:n], col[n:]


@dataclass(frozen=True)
class Scenario:
    """One reproducible experiment: flow, symbol mode, levels, offsets, gates."""

    scenario_id: str
    d: int
    hamiltonian: np.ndarray
    tau: float
    rho_mode: str                      # one | unitarized | corrected
    k_list: tuple[int, ...]
    offsets: tuple[Offset, ...] = ()
    trunc_multiplier: float = 8.0
    quad_pad: float = 1.3
    seed: int = 0
    band_fraction: float = 0.5
    trace_window: float = 0.6          # bump strength eps0; eps(k) = eps0 / sqrt(k)
    dtau: float = 1e-3
    decay_delta: np.ndarray | None = None
    thresholds: dict = field(default_factory=dict)

    def n_for(self, k: int) -> int:
        return ceil(self.trunc_multiplier * np.sqrt(k))


def _offsets_from_raw(raw: list[dict]) -> tuple[Offset, ...]:
    out = []
    for item in raw:
        kind = str(item.get("kind", "explicit"))
        if kind == "normal":
            out.append(Offset(tag=str(item.get("tag", "normal")), kind="normal",
                              norm=float(item.get("norm", 1.0))))
        else:
            out.append(Offset(tag=str(item.get("tag", "generic")),
                              u=np.asarray(item["u"], dtype=float),
                              w=np.asarray(item["w"], dtype=float)))
    return tuple(out)


def scenario_from_dict(doc: dict) -> Scenario:
    if int(doc.get("version", -1)) != SCENARIO_VERSION:
        raise ValueError("unsupported scenario version %r" % doc.get("version"))
    delta = doc.get("decay_delta")
    sc = Scenario(
        scenario_id=str(doc["id"]),
        d=int(doc["d"]),
        hamiltonian=matrix_from_json(doc["hamiltonian"]),
        tau=float(doc["tau"]),
        rho_mode=str(doc.get("rho_mode", "one")),
        k_list=tuple(int(k) for k in doc["k_list"]),
        offsets=_offsets_from_raw(doc.get("offsets", [])),
        trunc_multiplier=float(doc.get("truncation_multiplier", 8.0)),
        quad_pad=float(doc.get("quad_pad", 1.3)),
        seed=int(doc.get("seed", 0)),
        band_fraction=float(doc.get("band_fraction", 0.5)),
        trace_window=float(doc.get("trace_window", 0.6)),
        dtau=float(doc.get("dtau", 1e-3)),
        decay_delta=None if delta is None else np.asarray(delta, dtype=float),
        thresholds=dict(doc.get("thresholds", {})),
    )
    if list(sc.k_list) != sorted(sc.k_list):
        raise ValueError("k_list must be ascending")
    if sc.rho_mode not in ("one", "unitarized", "corrected"):
        raise ValueError("rho_mode must be one of: one, unitarized, corrected")
    return sc


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        doc = json.loads(text)
    else:
        try:
            import tomllib  # type: ignore[import-not-found]
        except ModuleNotFoundError:
            import tomli as tomllib  # type: ignore[no-redef]
        doc = tomllib.loads(text)
    return scenario_from_dict(doc)


@dataclass(frozen=True)
class SweepRecord:
    scenario_id: str
    k: int
    quantity: str
    model: complex
    predicted: complex
    gate: str = ""    # empty = clean; otherwise comma-joined flags

    @property
    def rel_err(self) -> float:
        return abs(self.model - self.predicted) / max(abs(self.predicted), REL_ERR_FLOOR)

    @property
    def gated(self) -> bool:
        return bool(self.gate)


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r2: float
    n_used: int
    n_excluded: int


def fit_loglog(ks: list[int], errs: list[float], gates: list[bool]) -> SlopeFit:
    """OLS of log(err) against log(k), skipping gated points."""
    xs, ys, skipped = [], [], 0
    for k, e, g in zip(ks, errs, gates):
        if g or not np.isfinite(e) or e <= 0:
            skipped += 1
            continue
        xs.append(np.log(float(k)))
        ys.append(np.log(e))
    if len(xs) < 2:
        return SlopeFit(slope=float("nan"), intercept=float("nan"), r2=float("nan"),
                        n_used=len(xs), n_excluded=skipped)
    x = np.asarray(xs)
    y = np.asarray(ys)
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - pred) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return SlopeFit(slope=float(slope), intercept=float(intercept), r2=float(r2),
                    n_used=len(xs), n_excluded=skipped)


def fit_linear(xs: list[float], ys: list[float]) -> SlopeFit:
    """Plain OLS (the decay law is linear in k itself, not in log k)."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - pred) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return SlopeFit(slope=float(slope), intercept=float(intercept), r2=float(r2),
                    n_used=len(x), n_excluded=0)


class _SweepContext:
    """Per-run cache: one built space and one raw flow operator per level."""

    def __init__(self, sc: Scenario) -> None:
        self.sc = sc
        self.flow = fock.flow_from_hamiltonian(sc.hamiltonian, sc.tau)
        self._spaces: dict[int, fock.ModelSpace] = {}
        self._ops: dict[int, fock.TruncatedOperator] = {}

    def space(self, k: int) -> fock.ModelSpace:
        if k not in self._spaces:
            self._spaces[k] = fock.build_space(self.sc.d, k, self.sc.n_for(k),
                                               quad_pad=self.sc.quad_pad)
        return self._spaces[k]

    def raw_operator(self, k: int) -> fock.TruncatedOperator:
        if k not in self._ops:
            self._ops[k] = fock.pullback_operator(self.space(k), self.flow)
        return self._ops[k]

    def rho(self, k: int, f1: float = 0.0) -> complex:
        if self.sc.rho_mode == "one":
            return 1.0 + 0.0j
        rho0 = unitarization_modulus(self.flow.a_tau)
        if self.sc.rho_mode == "unitarized":
            return complex(rho0)
        return complex(rho0 * (1.0 + f1 / k))


def _map_over_k(sc: Scenario, fn, jobs: int = 1) -> list:
    if jobs <= 1:
        return [fn(k) for k in sc.k_list]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, sc.k_list))


# ----------------------------------------------------------------- identity suite

IDENTITY_TOL = 1e-9


@dataclass(frozen=True)
class SuiteReport:
    residuals: dict[str, float]
    runtime: float
    tol: float
    tols: dict[str, float] = field(default_factory=dict)

    def tol_for(self, name: str) -> float:
        return self.tols.get(name, self.tol)

    @property
    def passed(self) -> bool:
        return all(v <= self.tol_for(name) for name, v in self.residuals.items())

    def lines(self) -> list[str]:
        out = []
        for name in sorted(self.residuals):
            v = self.residuals[name]
            ok = v <= self.tol_for(name)
            out.append("%-34s %.3e  (tol %.0e)  %s"
                       % (name, v, self.tol_for(name), "ok" if ok else "FAIL"))
        out.append("runtime: %.2f s" % self.runtime)
        return out


def run_identity_suite(seed: int, samples: int) -> SuiteReport:
    """Algebraic identity battery over seeded random symplectic matrices, d in {1,2,3}."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    res: dict[str, float] = {
        "polar_reconstruction": 0.0,
        "polar_p_symplectic": 0.0,
        "normalization_three_ways": 0.0,
        "matrix_identity_pcal": 0.0,
        "matrix_identity_rcal": 0.0,
        "graph_exponent_invariance": 0.0,
        "graph_exponent_closure": 0.0,
        "unitarization_two_ways": 0.0,
        "gaussian_reduction_first": 0.0,
        "gaussian_reduction_second": 0.0,
    }
    dims = (1, 2, 3)
    for i in range(samples):
        d = dims[i % len(dims)]
        sub = int(rng.integers(0, 2 ** 31))
        a = random_symplectic(d, 2.0, sub)
        f = polar_decompose(a)
        res["polar_reconstruction"] = max(
            res["polar_reconstruction"], float(np.abs(f.o @ f.p - a).max()))
        mj = np.block([[np.zeros((d, d)), np.eye(d)],
                       [-np.eye(d), np.zeros((d, d))]])
        res["polar_p_symplectic"] = max(
            res["polar_p_symplectic"], float(np.abs(f.p.T @ mj @ f.p - mj).max()))
        n1, n2, n3 = normalization_three_ways(a)
        res["normalization_three_ways"] = max(
            res["normalization_three_ways"], abs(n1 - n2) / n1, abs(n1 - n3) / n1)
        rep = polar_matrix_identities(a)
        res["matrix_identity_pcal"] = max(res["matrix_identity_pcal"], rep.pcal_residual)
        res["matrix_identity_rcal"] = max(res["matrix_identity_rcal"], rep.rcal_residual)
        u = rng.standard_normal(2 * d)
        w = rng.standard_normal(2 * d)
        s_dir = graph_exponent(a, u, w, factors=f)
        r_mat = random_unitary_symplectic(d, sub + 1)
        s_mat = random_unitary_symplectic(d, sub + 2)
        s_inv = graph_exponent(r_mat @ a @ s_mat.T, s_mat @ u, r_mat @ w)
        scale = max(1.0, abs(s_dir))
        res["graph_exponent_invariance"] = max(
            res["graph_exponent_invariance"], abs(s_inv - s_dir) / scale)
        s_red = graph_exponent_via_reduction(a, u, w)
        res["graph_exponent_closure"] = max(
            res["graph_exponent_closure"], abs(s_red - s_dir) / scale)
        res["unitarization_two_ways"] = max(
            res["unitarization_two_ways"],
            abs(unitarization_modulus(a) - unitarization_modulus_alt(a)))
        s_vec = rng.standard_normal(2 * d)
        red = gaussian_reduction_check(a, u, w, s_vec)
        res["gaussian_reduction_first"] = max(res["gaussian_reduction_first"],
                                              red.first_residual)
        res["gaussian_reduction_second"] = max(res["gaussian_reduction_second"],
                                               red.second_residual)
    return SuiteReport(residuals=res, runtime=time.perf_counter() - t0, tol=IDENTITY_TOL)


# ------------------------------------------------------- stationary-phase suite

STATIONARY_TOLS = {
    "gradient_at_critical_point": 1e-12,
    "hessian_matches_finite_diff": 1e-8,
    "hessian_det_along_path": 1e-12,
    "sqrt_factor_value": 1e-12,
    "sqrt_factor_net_phase": 1e-12,
    "newton_converges": 1e-10,
    "gaussian_reduction_first": 1e-9,
    "gaussian_reduction_second": 1e-9,
    "leading_integral_two_routes": 1e-9,
    "oscillatory_quadrature": 1e-6,
    "evolution_phase_gradient": 1e-12,
    "evolution_phase_value": 1e-12,
    "evolution_phase_signature": 1e-12,
}


def run_stationary_phase_suite(seed: int, samples: int) -> SuiteReport:
    """Phase critical point, Hessian homotopy, branch tracking, reductions, quadrature."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    res: dict[str, float] = {}

    res["gradient_at_critical_point"] = float(
        np.abs(phase_gradient(PhasePoint(1.0, 0.0, 1.0, 0.0))).max())

    h1 = hessian_path(1.0)
    fd = _numeric_hessian(_phase_at, np.array([1.0, 0.0, 1.0, 0.0]))
    res["hessian_matches_finite_diff"] = float(np.abs(h1 - fd).max())

    res["hessian_det_along_path"] = max(
        abs(np.linalg.det(hessian_path(s)) - 1.0) for s in np.linspace(0, 1, 11))

    val, net = sqrt_factor_branch_track(4.0)
    res["sqrt_factor_value"] = abs(val - sqrt_hessian_factor(4.0))
    res["sqrt_factor_net_phase"] = abs(net)

    newton = stationary_point(PhasePoint(1.2, 0.1, 0.9, -0.1))
    res["newton_converges"] = float(
        np.abs(newton.as_array() - np.array([1.0, 0.0, 1.0, 0.0])).max())

    red1 = red2 = 0.0
    for i in range(samples):
        d = 1 if i % 2 == 0 else 2
        a = random_symplectic(d, 2.0, int(rng.integers(0, 2 ** 31)))
        u = rng.standard_normal(2 * d)
        w = rng.standard_normal(2 * d)
        s = rng.standard_normal(2 * d)
        rep = gaussian_reduction_check(a, u, w, s)
        red1 = max(red1, rep.first_residual)
        red2 = max(red2, rep.second_residual)
    res["gaussian_reduction_first"] = red1
    res["gaussian_reduction_second"] = red2

    lead_two = 0.0
    for i in range(min(samples, 20)):
        a = random_symplectic(1, 1.5, seed + 1000 + i)
        u = rng.standard_normal(2)
        w = rng.standard_normal(2)
        v1 = leading_gaussian_integral(a, u, w)
        v2 = leading_gaussian_integral_via_graph(a, u, w)
        lead_two = max(lead_two, abs(v1 - v2) / max(abs(v2), 1e-30))
    res["leading_integral_two_routes"] = lead_two

    res["oscillatory_quadrature"] = quadrature_cross_check(seed)

    ev = evolution_phase(0.5, 2.0)
    res["evolution_phase_gradient"] = float(
        np.abs(evolution_phase_gradient(ev.point, 0.5, 2.0)).max())
    res["evolution_phase_value"] = abs(ev.value - 1.0)
    sig = np.sign(np.linalg.eigvalsh(ev.hessian))
    res["evolution_phase_signature"] = abs(float(sig.sum()))

    return SuiteReport(residuals=res, runtime=time.perf_counter() - t0,
                       tol=IDENTITY_TOL, tols=dict(STATIONARY_TOLS))


def quadrature_cross_check(seed: int) -> float:
    """d = 1 oscillatory Gaussian: adaptive quadrature against the closed form."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(3):
        a = random_symplectic(1, 1.0, seed + 77 + i)
        u = rng.standard_normal(2) * 0.5
        w = rng.standard_normal(2) * 0.5
        quad = oscillatory_gaussian_quadrature(a, u, w)
        closed = leading_gaussian_integral(a, u, w)
        worst = max(worst, abs(quad - closed) / max(abs(closed), 1e-30))
    return worst


def _phase_at(x: np.ndarray) -> complex:
    return phase(PhasePoint(x[0], x[1], x[2], x[3]))


def _numeric_hessian(fn, x0: np.ndarray, h: float = 3e-3) -> np.ndarray:
    """Richardson-extrapolated mixed central differences (h^2 term cancelled)."""

    def mixed(step: float) -> np.ndarray:
        n = x0.size
        out = np.zeros((n, n), dtype=complex)
        for i in range(n):
            for j in range(n):
                xpp = x0.copy(); xpp[i] += step; xpp[j] += step
                xpm = x0.copy(); xpm[i] += step; xpm[j] -= step
                xmp = x0.copy(); xmp[i] -= step; xmp[j] += step
                xmm = x0.copy(); xmm[i] -= step; xmm[j] -= step
                out[i, j] = (fn(xpp) - fn(xpm) - fn(xmp) + fn(xmm)) / (4 * step * step)
        return out

    return (4.0 * mixed(h / 2) - mixed(h)) / 3.0


# ------------------------------------------------------------------ kernel sweep

@dataclass(frozen=True)
class KernelSweepResult:
    records: list[SweepRecord]
    fits: dict[str, SlopeFit]

    def rel_err(self, tag: str, k: int) -> float:
        for r in self.records:
            if r.k == k and r.quantity == "kernel[%s]" % tag:
                return r.rel_err
        raise KeyError((tag, k))


def run_kernel_sweep(sc: Scenario, jobs: int = 1) -> KernelSweepResult:
    """Model kernel against the leading prediction at every offset and level."""
    ctx = _SweepContext(sc)
    resolved = [(off.tag, *off.resolve(ctx.flow.a_tau)) for off in sc.offsets]

    def one_k(k: int) -> list[SweepRecord]:
        rho = ctx.rho(k)
        op = fock.apply_symbol(ctx.raw_operator(k), rho)
        recs = []
        for tag, u, w in resolved:
            sample = fock.kernel_value(op, ctx.flow, u, w)
            pred = leading_kernel(ctx.flow.a_tau, rho, k, u, w)
            gates = []
            if sample.flagged:
                gates.append("tail")
            scale = (k / np.pi) ** sc.d
            if abs(pred.value) < VALUE_NOISE_FLOOR * scale:
                gates.append("below_floor")
            elif abs(sample.value - pred.value) < RATIO_NOISE_FLOOR * abs(pred.value):
                gates.append("noise")
            recs.append(SweepRecord(scenario_id=sc.scenario_id, k=k,
                                    quantity="kernel[%s]" % tag,
                                    model=sample.value, predicted=pred.value,
                                    gate=",".join(gates)))
        return recs

    records = [r for sub in _map_over_k(sc, one_k, jobs) for r in sub]
    fits: dict[str, SlopeFit] = {}
    for tag, _, _ in resolved:
        sel = [r for r in records if r.quantity == "kernel[%s]" % tag]
        fits[tag] = fit_loglog([r.k for r in sel], [r.rel_err for r in sel],
                               [r.gated for r in sel])
    return KernelSweepResult(records=records, fits=fits)


# ------------------------------------------------------------------- decay sweep

@dataclass(frozen=True)
class DecaySweepResult:
    records: list[SweepRecord]
    fit: SlopeFit            # log|K| - d log k against k over clean points
    predicted_rate: float


def run_decay_sweep(sc: Scenario, jobs: int = 1) -> DecaySweepResult:
    """Off-graph kernel modulus at a fixed (unrescaled) offset on the second leg."""
    if sc.decay_delta is None:
        raise ValueError("scenario has no decay_delta")
    ctx = _SweepContext(sc)
    delta = np.asarray(sc.decay_delta, dtype=float)

    def one_k(k: int) -> SweepRecord:
        rho = ctx.rho(k)
        op = fock.apply_symbol(ctx.raw_operator(k), rho)
        w = np.sqrt(k) * delta
        sample = fock.kernel_value(op, ctx.flow, np.zeros(2 * sc.d), w)
        pred = leading_kernel(ctx.flow.a_tau, rho, k, np.zeros(2 * sc.d), w)
        gates = []
        if sample.flagged:
            gates.append("tail")
        if abs(pred.value) < VALUE_NOISE_FLOOR * (k / np.pi) ** sc.d:
            gates.append("below_floor")
        return SweepRecord(scenario_id=sc.scenario_id, k=k, quantity="decay",
                           model=sample.value, predicted=pred.value,
                           gate=",".join(gates))

    records = _map_over_k(sc, one_k, jobs)
    xs, ys = [], []
    for r in records:
        if r.gated or abs(r.model) <= 0:
            continue
        xs.append(float(r.k))
        ys.append(float(np.log(abs(r.model)) - sc.d * np.log(r.k)))
    if len(xs) >= 2:
        fit = fit_linear(xs, ys)
        fit = SlopeFit(slope=fit.slope, intercept=fit.intercept, r2=fit.r2,
                       n_used=fit.n_used, n_excluded=len(records) - len(xs))
    else:
        fit = SlopeFit(float("nan"), float("nan"), float("nan"), len(xs),
                       len(records) - len(xs))
    f = polar_decompose(ctx.flow.a_tau)
    predicted_rate = -float(delta @ f.pcal @ delta)
    return DecaySweepResult(records=records, fit=fit, predicted_rate=predicted_rate)


# --------------------------------------------------------------- unitarity sweep

@dataclass(frozen=True)
class UnitaritySweepResult:
    records: list[SweepRecord]
    fits: dict[str, SlopeFit]
    band_width: int
    correction: fock.SymbolCorrectionFit | None


def run_unitarity_sweep(sc: Scenario, jobs: int = 1,
                        modes: tuple[str, ...] = ("one", "unitarized", "corrected"),
                        ) -> UnitaritySweepResult:
    """Unitarity defect per level for each symbol mode; one operator per level."""
    ctx = _SweepContext(sc)
    rho0 = unitarization_modulus(ctx.flow.a_tau)
    correction: fock.SymbolCorrectionFit | None = None
    if "corrected" in modes:
        signals = {k: fock.composition_diagonal_signal(ctx.raw_operator(k), rho0)
                   for k in sc.k_list}
        correction = fock.fit_correction_from_signals(signals)

    def one_k(k: int) -> tuple[list[SweepRecord], int]:
        raw = ctx.raw_operator(k)
        recs = []
        band = 0
        for mode in modes:
            if mode == "one":
                rho = 1.0
            elif mode == "unitarized":
                rho = rho0
            else:
                f1 = correction.f1 if correction is not None else 0.0
                rho = rho0 * (1.0 + f1 / k)
            rep = fock.unitarity_defect(fock.apply_symbol(raw, rho),
                                        band_fraction=sc.band_fraction)
            band = rep.band_width
            gates = []
            if rep.value < 1e-11:
                gates.append("floor")
            recs.append(SweepRecord(scenario_id=sc.scenario_id, k=k,
                                    quantity="unitarity_defect[%s]" % mode,
                                    model=complex(rep.value), predicted=0.0,
                                    gate=",".join(gates)))
        return recs, band

    out = _map_over_k(sc, one_k, jobs)
    records = [r for sub, _ in out for r in sub]
    band_width = max(b for _, b in out)
    fits = {}
    for mode in modes:
        sel = [r for r in records if r.quantity == "unitarity_defect[%s]" % mode]
        fits[mode] = fit_loglog([r.k for r in sel], [abs(r.model) for r in sel],
                                [r.gated for r in sel])
    return UnitaritySweepResult(records=records, fits=fits, band_width=band_width,
                                correction=correction)


# ------------------------------------------------------------------- trace sweep

@dataclass(frozen=True)
class TraceSweepResult:
    records: list[SweepRecord]
    rel_errors: dict[int, float]
    oracle_residual: float     # matrix trace vs closed-form series (rotation flows)


def run_trace_sweep(sc: Scenario, jobs: int = 1) -> TraceSweepResult:
    """Windowed model trace against the isolated fixed-point formula."""
    ctx = _SweepContext(sc)
    predicted = fixed_point_trace(ctx.flow.a_tau, ctx.rho(sc.k_list[0]))
    is_rotation = bool(sc.d == 1 and np.abs(sc.hamiltonian - np.eye(2)).max() < 1e-12)

    def one_k(k: int) -> tuple[SweepRecord, float]:
        op = fock.apply_symbol(ctx.raw_operator(k), ctx.rho(k))
        eps = sc.trace_window / np.sqrt(k)
        tr = fock.model_trace(op, window_eps=eps, tail_tol=0.05)
        resid = 0.0
        if is_rotation:
            closed = complex(ctx.rho(k)) * fock.rotation_trace_series(
                sc.tau, op.space.n_max, window_eps=eps)
            resid = abs(tr - closed)
        rec = SweepRecord(scenario_id=sc.scenario_id, k=k, quantity="trace",
                          model=tr, predicted=predicted, gate="")
        return rec, resid

    out = _map_over_k(sc, one_k, jobs)
    records = [r for r, _ in out]
    oracle_residual = max(resid for _, resid in out)
    rel = {r.k: r.rel_err for r in records}
    return TraceSweepResult(records=records, rel_errors=rel, oracle_residual=oracle_residual)


# -------------------------------------------------------------- schrodinger check

@dataclass(frozen=True)
class SchrodingerSweepResult:
    records: list[SweepRecord]
    fit: SlopeFit
    max_step_change: float


def run_schrodinger_check(sc: Scenario, jobs: int = 1) -> SchrodingerSweepResult:
    """Normalized generator residual per level with step-halving validation."""
    ctx = _SweepContext(sc)
    if sc.offsets:
        off = sc.offsets[0]
        u, w = off.resolve(ctx.flow.a_tau)
    else:
        u = np.zeros(2 * sc.d)
        w = np.zeros(2 * sc.d)

    def one_k(k: int) -> tuple[SweepRecord, float]:
        space = ctx.space(k)
        res = fock.schrodinger_residual(space, sc.hamiltonian, sc.tau, u, w, dtau=sc.dtau)
        rec = SweepRecord(scenario_id=sc.scenario_id, k=k, quantity="schrodinger_residual",
                          model=complex(res.value), predicted=0.0, gate="")
        return rec, res.step_change

    out = _map_over_k(sc, one_k, jobs)
    records = [r for r, _ in out]
    max_change = max(c for _, c in out)
    fit = fit_loglog([r.k for r in records], [abs(r.model) for r in records],
                     [r.gated for r in records])
    return SchrodingerSweepResult(records=records, fit=fit, max_step_change=max_change)


# ------------------------------------------------------------- threshold checking

@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


def _window_check(name: str, value: float, window: list) -> Check:
    lo, hi = float(window[0]), float(window[1])
    ok = bool(np.isfinite(value) and lo <= value <= hi)
    return Check(name, ok, "value %.4g, window [%g, %g]" % (value, lo, hi))


def evaluate_kernel_thresholds(sc: Scenario, result: KernelSweepResult) -> list[Check]:
    th = sc.thresholds
    checks: list[Check] = []
    if "ratio_max" in th:
        cfg = th["ratio_max"]
        err = result.rel_err(str(cfg["tag"]), int(cfg["k"]))
        checks.append(Check("kernel ratio at %s, k=%d" % (cfg["tag"], cfg["k"]),
                            err <= float(cfg["max"]),
                            "rel err %.3e, max %g" % (err, cfg["max"])))
    for tag, window in th.get("slope_windows", {}).items():
        fit = result.fits.get(tag)
        slope = fit.slope if fit is not None else float("nan")
        c = _window_check("kernel error slope at %s" % tag, slope, window)
        extra = ""
        if fit is not None and fit.n_used < 2:
            extra = " (%d points usable, %d gated as numerical noise)" % (
                fit.n_used, fit.n_excluded)
        checks.append(Check(c.name, c.passed, c.detail + extra))
    return checks


def evaluate_decay_thresholds(sc: Scenario, result: DecaySweepResult) -> list[Check]:
    th = sc.thresholds
    checks: list[Check] = []
    r2_min = float(th.get("decay_r2_min", 0.98))
    checks.append(Check("decay linearity", bool(result.fit.r2 >= r2_min),
                        "R2 %.5f (min %g), %d points, %d excluded"
                        % (result.fit.r2, r2_min, result.fit.n_used, result.fit.n_excluded)))
    checks.append(Check("decay slope negative", bool(result.fit.slope < 0),
                        "slope %.4g per unit k (predicted %.4g)"
                        % (result.fit.slope, result.predicted_rate)))
    return checks


def evaluate_unitarity_thresholds(sc: Scenario, result: UnitaritySweepResult) -> list[Check]:
    th = sc.thresholds
    checks: list[Check] = []
    for mode, cap in th.get("defect_max", {}).items():
        worst = max(abs(r.model) for r in result.records
                    if r.quantity == "unitarity_defect[%s]" % mode)
        checks.append(Check("defect cap [%s]" % mode, worst <= float(cap),
                            "max defect %.3e, cap %g" % (worst, cap)))
    for mode, cap in th.get("slope_max", {}).items():
        slope = result.fits[mode].slope
        checks.append(Check("defect slope [%s]" % mode,
                            bool(np.isfinite(slope) and slope <= float(cap)),
                            "slope %.3f, max %g" % (slope, cap)))
    if "plateau_min_slope" in th:
        slope = result.fits["one"].slope
        checks.append(Check("defect plateau [one]",
                            bool(np.isfinite(slope) and slope >= float(th["plateau_min_slope"])),
                            "slope %.3f, plateau floor %g" % (slope, th["plateau_min_slope"])))
    if "correction_improvement_min" in th and result.correction is not None:
        s_u = result.fits["unitarized"].slope
        s_c = result.fits["corrected"].slope
        gain = s_u - s_c if np.isfinite(s_u) and np.isfinite(s_c) else float("nan")
        checks.append(Check(
            "correction slope gain", bool(np.isfinite(gain)
                                          and gain >= float(th["correction_improvement_min"])),
            "unitarized slope %.3f, corrected slope %.3f, gain %.3f, fitted f1 %.3e "
            "(max composition-diagonal signal %.2e)"
            % (s_u, s_c, gain, result.correction.f1, result.correction.max_signal)))
    if "correction_window_tol" in th and result.correction is not None:
        w1, w2 = result.correction.window_values
        ref = max(abs(result.correction.f1), 1e-12)
        stable = abs(w1 - w2) <= float(th["correction_window_tol"]) * ref
        checks.append(Check("correction window stability", bool(stable),
                            "windows %.3e / %.3e, f1 %.3e" % (w1, w2, result.correction.f1)))
    return checks


def evaluate_trace_thresholds(sc: Scenario, result: TraceSweepResult) -> list[Check]:
    th = sc.thresholds
    checks: list[Check] = []
    if "rel_err_max" in th:
        cfg = th["rel_err_max"]
        k = int(cfg["k"])
        checks.append(Check("trace error at k=%d" % k,
                            result.rel_errors[k] <= float(cfg["max"]),
                            "rel err %.4f, max %g" % (result.rel_errors[k], cfg["max"])))
    if th.get("monotone", False):
        ks = sorted(result.rel_errors)
        mono = all(result.rel_errors[b] < result.rel_errors[a] * 1.02
                   for a, b in zip(ks, ks[1:]))
        checks.append(Check("trace error decreasing", bool(mono),
                            "errors " + ", ".join("%d: %.4f" % (k, result.rel_errors[k])
                                                  for k in ks)))
    if "oracle_tol" in th:
        checks.append(Check("trace series oracle", result.oracle_residual <= float(th["oracle_tol"]),
                            "residual %.2e, tol %g" % (result.oracle_residual, th["oracle_tol"])))
    return checks


def evaluate_schrodinger_thresholds(sc: Scenario, result: SchrodingerSweepResult) -> list[Check]:
    th = sc.thresholds
    checks: list[Check] = []
    cap = float(th.get("slope_max", 0.6))
    checks.append(Check("residual slope", bool(np.isfinite(result.fit.slope)
                                               and result.fit.slope <= cap),
                        "slope %.3f, max %g" % (result.fit.slope, cap)))
    step_cap = float(th.get("step_change_max", 0.10))
    checks.append(Check("step halving", result.max_step_change <= step_cap,
                        "max change %.2e, cap %g" % (result.max_step_change, step_cap)))
    return checks


# ----------------------------------------------------------------------- outputs

CSV_HEADER = "scenario,k,quantity,model_re,model_im,pred_re,pred_im,rel_err,gate"


def records_to_csv(records: list[SweepRecord]) -> str:
    if not records:
        raise ValueError("no records to emit")
    lines = [CSV_HEADER]
    for r in sorted(records, key=lambda r: (r.scenario_id, r.quantity, r.k)):
        lines.append("%s,%d,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%s" % (
            r.scenario_id, r.k, r.quantity,
            r.model.real, r.model.imag, r.predicted.real, r.predicted.imag,
            r.rel_err, r.gate))
    return "\n".join(lines) + "\n"


def emit_csv(records: list[SweepRecord], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(records_to_csv(records))
    return path


def load_csv(path: str | Path) -> list[dict]:
    """Parse an emitted CSV back into row dictionaries (lossless round trip)."""
    rows = []
    lines = Path(path).read_text().strip().split("\n")
    header = lines[0].split(",")
    if header != CSV_HEADER.split(","):
        raise ValueError("unexpected CSV header")
    for line in lines[1:]:
        parts = line.split(",")
        rows.append({
            "scenario": parts[0], "k": int(parts[1]), "quantity": parts[2],
            "model": complex(float(parts[3]), float(parts[4])),
            "predicted": complex(float(parts[5]), float(parts[6])),
            "rel_err": float(parts[7]), "gate": parts[8] if len(parts) > 8 else "",
        })
    return rows


def emit_svg(points: list[tuple[float, float]], fit: SlopeFit, path: str | Path,
             title: str = "", xlabel: str = "log10 k", ylabel: str = "log10 err") -> Path:
    """Minimal deterministic log-log scatter with the fitted line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not points:
        raise ValueError("no points to plot")
    width, height, margin = 480, 360, 50
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    xr = (x1 - x0) or 1.0
    yr = (y1 - y0) or 1.0

    def sx(x: float) -> float:
        return margin + (x - x0) / xr * (width - 2 * margin)

    def sy(y: float) -> float:
        return height - margin - (y - y0) / yr * (height - 2 * margin)

    parts = [
        '<svg xmlns="http://www.w3.org/2000/svg" width="%d" height="%d">' % (width, height),
        '<rect width="%d" height="%d" fill="white"/>' % (width, height),
        '<text x="%d" y="20" font-size="13">%s</text>' % (margin, title),
        '<text x="%d" y="%d" font-size="11">%s</text>' % (width // 2 - 30, height - 12, xlabel),
        '<text x="12" y="%d" font-size="11" transform="rotate(-90 12 %d)">%s</text>'
        % (height // 2, height // 2, ylabel),
        '<line x1="%g" y1="%g" x2="%g" y2="%g" stroke="black"/>'
        % (margin, height - margin, width - margin, height - margin),
        '<line x1="%g" y1="%g" x2="%g" y2="%g" stroke="black"/>'
        % (margin, margin, margin, height - margin),
    ]
    if np.isfinite(fit.slope):
        b10 = fit.intercept / np.log(10)
        ya = min(max(fit.slope * x0 + b10, y0), y1)
        yb = min(max(fit.slope * x1 + b10, y0), y1)
        parts.append('<line x1="%g" y1="%g" x2="%g" y2="%g" stroke="steelblue"/>'
                     % (sx(x0), sy(ya), sx(x1), sy(yb)))
        parts.append('<text x="%d" y="36" font-size="11">slope %.3f, R2 %.4f</text>'
                     % (margin, fit.slope, fit.r2))
    for x, y in points:
        parts.append('<circle cx="%g" cy="%g" r="3" fill="crimson"/>' % (sx(x), sy(y)))
    parts.append('</svg>')
    path.write_text("\n".join(parts) + "\n")
    return path
