"""Accelerated forward-backward splitting with Lyapunov certificates."""

from .core import (
    InputError,
    NonsmoothTerm,
    SmoothTerm,
    SplitProblem,
    box_term,
    l1_term,
    least_squares_smooth,
    prox_box,
    prox_l1,
    prox_zero,
    quadratic_smooth,
    theta_eval,
    zero_term,
)
from .diagnostics import CertificateReport, Trace, TraceRecord, Verdict, build_report, fit_rate
from .solver import (
    IterateState,
    PowerLawErrors,
    RunResult,
    SolverConfig,
    Termination,
    extrapolate,
    fb_step,
    gradient_mapping,
    inertial_coefficient,
    inexact_fb_step,
    run,
    run_baseline,
    z_direct,
    z_recursive,
)

__version__ = "0.1.0"
