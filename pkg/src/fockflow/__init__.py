"""Scaling asymptotics of quantized linear Hamiltonian flows.

Closed-form predictions (leading kernel term, decay envelope, unitarization
condition, fixed-point trace) checked against an exact truncated
Bargmann-Fock model, plus the stationary-phase algebra behind them and a
sweep harness with a CLI.
"""

from .asymptotics import (
    DegenerateFixedPointError,
    LeadingKernelPrediction,
    decay_envelope,
    diagonal_composition,
    diagonal_gaussian_integral,
    fixed_point_form,
    fixed_point_trace,
    leading_kernel,
    unitarization_modulus,
)
from .fock import (
    LIFT_CONSTANT,
    KernelSample,
    ModelSpace,
    QuadraticFlow,
    TruncatedOperator,
    apply_symbol,
    build_space,
    calibrate_lift_constant,
    fit_symbol_correction,
    flow_from_hamiltonian,
    kernel_value,
    load_operator,
    model_trace,
    pullback_operator,
    save_operator,
    schrodinger_residual,
    szego_kernel,
    toeplitz_operator,
    unitarity_defect,
)
from .harness import (
    Scenario,
    SweepRecord,
    load_scenario,
    run_identity_suite,
    run_kernel_sweep,
    run_schrodinger_check,
    run_stationary_phase_suite,
    run_trace_sweep,
    run_unitarity_sweep,
)
from .symplectic import (
    GraphSplitting,
    PolarFactors,
    graph_exponent,
    graph_splitting,
    normalization_factor,
    omega0,
    polar_decompose,
    random_symplectic,
    standard_j,
    szego_exponent,
)

__version__ = "0.1.0"
