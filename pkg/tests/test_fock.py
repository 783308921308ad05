import math

import numpy as np
import pytest
from scipy.integrate import dblquad

from fockflow.asymptotics import leading_kernel, unitarization_modulus
from fockflow.fock import (
    LIFT_CONSTANT,
    FiniteDifferenceError,
    FitError,
    GramGateError,
    QuadratureGateError,
    TailGateError,
    TruncatedOperator,
    apply_symbol,
    build_space,
    calibrate_lift_constant,
    composition_diagonal_signal,
    fit_correction_from_signals,
    fit_symbol_correction,
    flow_from_hamiltonian,
    kernel_value,
    load_operator,
    model_trace,
    pullback_operator,
    rotation_trace_series,
    save_operator,
    schrodinger_residual,
    szego_kernel,
    toeplitz_operator,
    unitarity_defect,
)
from fockflow.symplectic import normalization_factor, omega0, szego_exponent

HYP = np.diag([1.0, -1.0])


@pytest.fixture(scope="module")
def space32():
    return build_space(1, 32, 46)


@pytest.fixture(scope="module")
def hyp_op32(space32):
    flow = flow_from_hamiltonian(HYP, 0.3)
    return flow, pullback_operator(space32, flow)


# ------------------------------------------------------------------- model space

def test_build_space_trivial():
    sp = build_space(1, 1, 0)
    assert sp.dim == 1
    assert sp.gram_residual < 1e-12


def test_build_space_dimension_count():
    assert build_space(2, 4, 3, quad_pad=1.0).dim == 10


def test_build_space_gram_gate_large():
    sp = build_space(1, 64, 256, quad_pad=1.0)
    assert sp.gram_residual <= 1e-9


def test_build_space_rejects_oversized():
    with pytest.raises(GramGateError):
        build_space(1, 4, 400)


def test_basis_norm_completeness(space32):
    # sum over all modes of |F_m(z)|^2 approaches (k/pi)^d from below
    k = space32.k
    z = np.array([[0.2 + 0.1j]])
    total = float((np.abs(space32.basis_at(z)[0]) ** 2).sum())
    assert total <= k / np.pi + 1e-12
    assert total == pytest.approx(k / np.pi, rel=1e-10)


# ------------------------------------------------------------------ szego kernel

def test_szego_kernel_diagonal(space32):
    k = space32.k
    assert szego_kernel(space32, [0.0], [0.0]) == pytest.approx((k / np.pi), rel=1e-14)


def test_szego_kernel_rescaled_is_szego_exponent(space32):
    k = space32.k
    u = np.array([0.7, -0.4])
    w = np.array([0.1, 0.9])
    zu = (u[0] + 1j * u[1]) / np.sqrt(k)
    zw = (w[0] + 1j * w[1]) / np.sqrt(k)
    expected = (k / np.pi) * np.exp(szego_exponent(u, w))
    assert szego_kernel(space32, [zu], [zw]) == pytest.approx(expected, rel=1e-12)


def test_szego_kernel_cauchy_schwarz(space32):
    rng = np.random.default_rng(0)
    for _ in range(5):
        z = rng.standard_normal(2) * 0.1
        w = rng.standard_normal(2) * 0.1
        kzw = abs(szego_kernel(space32, [z[0] + 1j * z[1]], [w[0] + 1j * w[1]]))
        kzz = szego_kernel(space32, [z[0] + 1j * z[1]], [z[0] + 1j * z[1]]).real
        kww = szego_kernel(space32, [w[0] + 1j * w[1]], [w[0] + 1j * w[1]]).real
        assert kzw <= np.sqrt(kzz * kww) + 1e-9


def test_szego_kernel_reproduces_under_quadrature(space32):
    # integral of Pi(z, .) against a basis state recovers the state value
    k = space32.k
    z0 = 0.05 + 0.02j
    nodes = space32.nodes_complex()
    b = space32.basis_at(nodes)
    n_test = 3
    # weighted kernel values Pi(z0, z_i) e^{-k(|z0|^2+|z_i|^2)/2} = sum_m F_m(z0) conj(F_m(z_i))
    kern = space32.basis_at(np.array([[z0]]))[0] @ b.conj().T
    reproduced = np.sum(space32.weights * kern * b[:, n_test])
    expected = space32.basis_at(np.array([[z0]]))[0][n_test]
    assert reproduced == pytest.approx(expected, abs=1e-8 * np.sqrt(k / np.pi))


# ------------------------------------------------------------------------- flows

def test_flow_zero_time_is_identity():
    flow = flow_from_hamiltonian(HYP, 0.0)
    np.testing.assert_allclose(flow.a_tau, np.eye(2), atol=1e-15)


def test_flow_rotation_is_orthogonal():
    flow = flow_from_hamiltonian(np.eye(2), 0.7)
    a = flow.a_tau
    np.testing.assert_allclose(a.T @ a, np.eye(2), atol=1e-12)
    assert normalization_factor(a) == pytest.approx(2.0, rel=1e-12)
    np.testing.assert_allclose(a, [[np.cos(0.7), -np.sin(0.7)], [np.sin(0.7), np.cos(0.7)]],
                               atol=1e-12)


def test_flow_hyperbolic_eigenvalues():
    flow = flow_from_hamiltonian(HYP, 0.3)
    a = flow.a_tau
    np.testing.assert_allclose(a, a.T, atol=1e-12)
    ev = np.sort(np.linalg.eigvalsh(a))
    np.testing.assert_allclose(ev, [np.exp(-0.3), np.exp(0.3)], atol=1e-12)


def test_flow_vector_field_contract():
    rng = np.random.default_rng(1)
    for seed in range(3):
        g = rng.standard_normal((2, 2))
        h = g + g.T
        flow = flow_from_hamiltonian(h, 0.1)
        for _ in range(5):
            v = rng.standard_normal(2)
            w = rng.standard_normal(2)
            assert omega0(flow.vector_field(v), w) == pytest.approx(v @ h @ w, abs=1e-10)


def test_flow_energy_conservation():
    flow = flow_from_hamiltonian(HYP, 0.45)
    rng = np.random.default_rng(2)
    for _ in range(10):
        v = rng.standard_normal(2)
        assert flow.energy(flow.map_backward(v)) == pytest.approx(flow.energy(v), abs=1e-9)
        assert flow.energy(flow.map_forward(v)) == pytest.approx(flow.energy(v), abs=1e-9)


def test_flow_requires_symmetric_hamiltonian():
    with pytest.raises(ValueError):
        flow_from_hamiltonian(np.array([[0.0, 1.0], [0.0, 0.0]]), 0.1)


# -------------------------------------------------------------- pullback operator

def test_pullback_zero_time_is_projector(space32):
    op = pullback_operator(space32, flow_from_hamiltonian(HYP, 0.0))
    np.testing.assert_allclose(op.matrix, np.eye(space32.dim), atol=1e-12)


def test_pullback_rotation_diagonal_unitary(space32):
    tau = 0.7
    op = pullback_operator(space32, flow_from_hamiltonian(np.eye(2), tau))
    off = op.matrix - np.diag(np.diag(op.matrix))
    assert np.abs(off).max() < 1e-12
    phases = np.diag(op.matrix)
    n = np.arange(space32.dim)
    np.testing.assert_allclose(phases, np.exp(1j * n * tau), atol=1e-10)


def test_pullback_operator_norm_bounded(hyp_op32):
    flow, op = hyp_op32
    sv = np.linalg.svd(op.matrix, compute_uv=False)
    assert sv.max() <= 1.0 + 1e-9
    # away from the truncation edge the singular values sit at sqrt(2/nu)
    expected = np.sqrt(2.0 / normalization_factor(flow.a_tau))
    mid = sv[(sv > 0.5 * expected)]
    assert abs(np.median(mid) - expected) < 1e-6


def test_pullback_quadrature_gate_trips():
    sp = build_space(1, 48, 55, quad_pad=1.0)
    with pytest.raises(QuadratureGateError):
        pullback_operator(sp, flow_from_hamiltonian(HYP, 0.8))


def test_pullback_entries_against_direct_integration():
    # independent 2D adaptive integration of a few matrix entries, k small
    k, n_max = 4, 6
    sp = build_space(1, k, n_max, quad_pad=3.0)
    tau = 0.3
    flow = flow_from_hamiltonian(HYP, tau)
    op = pullback_operator(sp, flow)
    a = flow.a_tau

    def entry(m, n):
        def f(y, x, part):
            z = np.array([x, y])
            az = a @ z
            zc = x + 1j * y
            azc = az[0] + 1j * az[1]
            fm = zc ** m * np.sqrt(k ** (m + 1) / (np.pi * math.factorial(m)))
            fn = azc ** n * np.sqrt(k ** (n + 1) / (np.pi * math.factorial(n)))
            val = np.conj(fm) * fn * np.exp(-k * (x * x + y * y) / 2
                                            - k * (az @ az) / 2)
            return val.real if part == "re" else val.imag
        lim = 6.0 / np.sqrt(k)
        re, _ = dblquad(f, -lim, lim, -lim, lim, args=("re",), epsabs=1e-12)
        im, _ = dblquad(f, -lim, lim, -lim, lim, args=("im",), epsabs=1e-12)
        return re + 1j * im

    for (m, n) in ((0, 0), (0, 2), (1, 3), (2, 2)):
        assert op.matrix[m, n] == pytest.approx(entry(m, n), abs=1e-9)


def test_pullback_equivariance_blocks(space32):
    # rotation-commuting Hamiltonian: no coupling across monomial degree
    op = pullback_operator(space32, flow_from_hamiltonian(np.eye(2), 0.3))
    deg = space32.degrees
    mask = deg[:, None] != deg[None, :]
    assert np.abs(op.matrix[mask]).max() < 1e-9


def test_lift_constant_calibration():
    best, defects = calibrate_lift_constant(k=16)
    assert best == LIFT_CONSTANT == 0.0
    assert defects[0.0] < 1e-9
    for c, v in defects.items():
        if c != 0.0:
            assert v > 1e-3


# ------------------------------------------------------------------ apply symbol

def test_apply_symbol_identity(hyp_op32):
    _, op = hyp_op32
    np.testing.assert_allclose(apply_symbol(op, 1.0).matrix, op.matrix, atol=0)


def test_apply_symbol_scales_kernel(hyp_op32):
    flow, op = hyp_op32
    u = np.array([0.2, 0.1])
    w = np.array([-0.3, 0.4])
    v1 = kernel_value(op, flow, u, w).value
    v2 = kernel_value(apply_symbol(op, 2.0), flow, u, w).value
    assert v2 == pytest.approx(2.0 * v1, rel=1e-12)


# ------------------------------------------------------------------ kernel values

def test_kernel_projector_diagonal(space32):
    flow = flow_from_hamiltonian(HYP, 0.0)
    op = TruncatedOperator.projector(space32)
    sample = kernel_value(op, flow, np.zeros(2), np.zeros(2))
    assert sample.value == pytest.approx(space32.k / np.pi, rel=1e-12)
    assert not sample.flagged


def test_kernel_projector_matches_szego_exponent(space32):
    flow = flow_from_hamiltonian(HYP, 0.0)
    op = TruncatedOperator.projector(space32)
    u = np.array([0.8, -0.2])
    w = np.array([-0.5, 0.3])
    expected = (space32.k / np.pi) * np.exp(szego_exponent(u, w))
    assert kernel_value(op, flow, u, w).value == pytest.approx(expected, rel=1e-7)


def test_kernel_concentration_exact(hyp_op32):
    # the truncated model reproduces the leading prediction at machine precision
    flow, op = hyp_op32
    k = op.space.k
    for (u, w) in [(np.zeros(2), np.zeros(2)),
                   (np.array([0.6, 0.2]), np.array([0.5, -0.4])),
                   (np.array([-0.3, 1.0]), np.array([0.0, 0.7]))]:
        pred = leading_kernel(flow.a_tau, 1.0, k, u, w)
        got = kernel_value(op, flow, u, w).value
        assert got == pytest.approx(pred.value, rel=1e-10)


def test_kernel_adjoint_symmetry(hyp_op32):
    # the adjoint kernel at swapped arguments is the conjugate of the kernel
    flow, op = hyp_op32
    u = np.array([0.4, -0.1])
    w = np.array([0.2, 0.6])
    forward = kernel_value(op, flow, u, w).value
    m = op.matrix
    f_u = op.space.basis_at(np.array([[(u[0] + 1j * u[1]) / np.sqrt(op.space.k)]]))[0]
    f_w = op.space.basis_at(np.array([[(w[0] + 1j * w[1]) / np.sqrt(op.space.k)]]))[0]
    adj = complex(f_w @ m.conj().T @ f_u.conj())
    assert np.conj(adj) == pytest.approx(forward, rel=1e-10)


def test_kernel_tail_flag_for_far_offsets(space32):
    flow = flow_from_hamiltonian(HYP, 0.3)
    op = pullback_operator(space32, flow)
    far = np.sqrt(space32.k) * np.array([1.8, 0.0])   # |z| = 1.8 needs degree ~ k|z|^2 > N
    sample = kernel_value(op, flow, np.zeros(2), far)
    assert sample.flagged


# --------------------------------------------------------------------- toeplitz

def test_toeplitz_number_operator(space32):
    # H = I: exact Gaussian moments give diagonal (n+1)/(2k)
    t = toeplitz_operator(space32, np.eye(2))
    k = space32.k
    n = np.arange(space32.dim)
    np.testing.assert_allclose(np.diag(t.matrix).real, (n + 1) / (2 * k), atol=1e-12)
    off = t.matrix - np.diag(np.diag(t.matrix))
    assert np.abs(off).max() < 1e-12


def test_toeplitz_self_adjoint(space32):
    t = toeplitz_operator(space32, HYP)
    assert np.abs(t.matrix - t.matrix.conj().T).max() < 1e-9


def test_toeplitz_constant_symbol(space32):
    # f = v^t 0 v / 2 + handled through H = 0: zero operator; scale route via H = 2c I
    t = toeplitz_operator(space32, np.zeros((2, 2)))
    assert np.abs(t.matrix).max() < 1e-12


# ------------------------------------------------------------------ model trace

def test_model_trace_projector(space32):
    op = TruncatedOperator.projector(space32)
    assert model_trace(op) == pytest.approx(space32.dim)


def test_model_trace_linearity(hyp_op32):
    _, op = hyp_op32
    assert model_trace(op.scaled(2.0)) == pytest.approx(2.0 * model_trace(op), rel=1e-12)


def test_model_trace_rotation_matches_series(space32):
    tau = 0.7
    op = pullback_operator(space32, flow_from_hamiltonian(np.eye(2), tau))
    for eps in (0.0, 0.05, 0.12):
        tr = model_trace(op, window_eps=eps)
        closed = rotation_trace_series(tau, space32.n_max, window_eps=eps)
        assert tr == pytest.approx(closed, abs=1e-8)


def test_model_trace_tail_gate_trips_without_window(space32):
    # sharp truncation of the rotation series does not settle; the gate reports it
    op = pullback_operator(space32, flow_from_hamiltonian(np.eye(2), 0.7))
    with pytest.raises(TailGateError):
        model_trace(op, window_eps=0.0, tail_tol=0.05)
    # with the bump the top band is damped and the gate passes
    model_trace(op, window_eps=0.1, tail_tol=0.05)


# ------------------------------------------------------------- unitarity defect

def test_unitarity_defect_rotation(space32):
    op = pullback_operator(space32, flow_from_hamiltonian(np.eye(2), 0.7))
    rep = unitarity_defect(op, band_fraction=0.25)
    assert rep.value < 1e-7


def test_unitarity_defect_hyperbolic_unitarized(hyp_op32):
    flow, op = hyp_op32
    rho0 = unitarization_modulus(flow.a_tau)
    rep = unitarity_defect(apply_symbol(op, rho0), band_fraction=0.5)
    assert rep.value < 2e-2
    assert rep.band_width == op.space.n_max - int(np.floor(0.5 * op.space.n_max))


def test_unitarity_defect_negative_control(hyp_op32):
    flow, op = hyp_op32
    rep = unitarity_defect(op, band_fraction=0.5)
    nu = normalization_factor(flow.a_tau)
    assert rep.value == pytest.approx(abs(2.0 / nu - 1.0), abs=2e-2)


# -------------------------------------------------------------------- generator

def test_schrodinger_residual_small_and_stable():
    sp = build_space(1, 16, 32)
    res = schrodinger_residual(sp, HYP, 0.3, np.array([0.3, 0.1]), np.array([-0.2, 0.4]))
    assert res.value < 1.0           # well below the k^{1/2} budget
    assert res.step_change < 0.10


def test_schrodinger_residual_rejects_huge_step():
    sp = build_space(1, 16, 32, quad_pad=3.0)
    with pytest.raises(FiniteDifferenceError):
        schrodinger_residual(sp, HYP, 0.1, np.array([0.3, 0.1]), np.array([-0.2, 0.4]),
                             dtau=0.5)


# ------------------------------------------------------------- symbol correction

def test_fit_correction_no_signal_returns_zero():
    fit = fit_correction_from_signals({32: 1e-12, 64: -2e-12, 128: 5e-13})
    assert fit.f1 == 0.0
    assert fit.max_signal < 1e-8


def test_fit_correction_recovers_synthetic_coefficient():
    ks = (32, 48, 64, 96, 128, 192, 256)
    c1 = 0.8
    fit = fit_correction_from_signals({k: c1 / k + 1e-4 / k ** 2 for k in ks})
    assert fit.f1 == pytest.approx(-c1 / 2, rel=2e-3)
    assert fit.r2 > 0.99


def test_fit_correction_rejects_non_power_law():
    rng = np.random.default_rng(3)
    with pytest.raises(FitError):
        fit_correction_from_signals({k: float(rng.standard_normal()) for k in
                                     (32, 64, 128, 256)})


def test_fit_symbol_correction_rotation_is_zero():
    sp = build_space(1, 16, 32)
    flow = flow_from_hamiltonian(np.eye(2), 0.7)
    fit = fit_symbol_correction(sp, flow, 1.0, k_list=(8, 16, 24))
    assert fit.f1 == 0.0


def test_composition_diagonal_signal_unitarized(hyp_op32):
    flow, op = hyp_op32
    rho0 = unitarization_modulus(flow.a_tau)
    assert abs(composition_diagonal_signal(op, rho0)) < 1e-10


# ---------------------------------------------------------------- serialization

def test_operator_round_trip(tmp_path, hyp_op32):
    _, op = hyp_op32
    path = tmp_path / "op.json"
    save_operator(op, path)
    back = load_operator(path, space=op.space)
    np.testing.assert_allclose(back.matrix, op.matrix, atol=0)
    assert (back.space.d, back.space.k, back.space.n_max) == (1, 32, 46)


def test_operator_round_trip_rebuilds_space(tmp_path):
    sp = build_space(1, 4, 6, quad_pad=3.0)
    op = pullback_operator(sp, flow_from_hamiltonian(HYP, 0.2))
    path = tmp_path / "op.json"
    save_operator(op, path)
    back = load_operator(path)
    np.testing.assert_allclose(back.matrix, op.matrix, atol=0)
    assert back.space.dim == sp.dim


def test_load_operator_version_check(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"version": 99}')
    with pytest.raises(ValueError):
        load_operator(path)


def test_schrodinger_residual_rotation_at_fixed_point():
    # holomorphic flow, evaluation at the fixed point: far below the k^{d+1} scale
    sp = build_space(1, 16, 32)
    res = schrodinger_residual(sp, np.eye(2), 0.4, np.zeros(2), np.zeros(2))
    assert res.value < 1.0
    assert res.step_change < 0.10
