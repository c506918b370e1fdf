"""Inertial forward-backward iterations.

The accelerated scheme is::

    y_k     = x_k + (k-1)/(k+alpha-1) * (x_k - x_{k-1})
    x_{k+1} = prox_{s Psi}(y_k - s * (grad Phi(y_k) - g_k))

with ``g_k = 0`` for exact runs.  Iterations start at ``k = 1`` with
``x_0 = x_1 = x_init``, so the first step is a plain forward-backward step.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import InputError, SplitProblem, as_point
from .diagnostics import Trace, TraceBuilder

__all__ = [
    "SolverConfig",
    "IterateState",
    "RunResult",
    "Termination",
    "PowerLawErrors",
    "inertial_coefficient",
    "extrapolate",
    "gradient_mapping",
    "fb_step",
    "inexact_fb_step",
    "z_direct",
    "z_recursive",
    "run",
    "run_baseline",
]

MAX_ITER = 2**31 - 1


class Termination(str, enum.Enum):
    BUDGET_EXHAUSTED = "budget_exhausted"
    RESIDUAL_BELOW_TOL = "residual_below_tol"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class PowerLawErrors:
    """Gradient perturbations ``g_k = c * k**(-p) * u_k`` with ``||u_k|| = 1``.

    ``mode="fixed"`` reuses one seeded unit vector, ``mode="random"`` draws a
    fresh one per iteration from a counter-based stream, so ``g_k`` depends
    only on ``(seed, k)``.  ``sum k ||g_k||`` is finite iff ``p > 2``.
    """

    scale: float
    power: float
    dimension: int
    seed: int = 0
    mode: str = "fixed"

    def __post_init__(self):
        if self.mode not in ("fixed", "random"):
            raise InputError(f"unknown error-schedule mode {self.mode!r}")
        if self.scale < 0:
            raise InputError("error scale must be nonnegative")

    @property
    def summable(self) -> bool:
        return self.scale == 0 or self.power > 2

    def _unit(self, k: int) -> np.ndarray:
        key = (self.seed,) if self.mode == "fixed" else (self.seed, k)
        u = np.random.default_rng(key).standard_normal(self.dimension)
        return u / np.linalg.norm(u)

    def __call__(self, k: int) -> np.ndarray:
        if self.mode == "fixed":
            u = self.__dict__.get("_u")
            if u is None:
                u = self._unit(k)
                object.__setattr__(self, "_u", u)
        else:
            u = self._unit(k)
        return (self.scale * float(k) ** (-self.power)) * u


@dataclass
class SolverConfig:
    alpha: float
    step: float
    max_iter: int
    initial_point: np.ndarray
    error_schedule: Optional[Callable[[int], np.ndarray]] = None
    record_every: int = 1
    allow_critical_step: bool = False
    # optional early stop on ||G_s(y_k)||; None runs the full budget
    residual_tol: Optional[float] = None
    store_iterates: bool = True

    def validate(self, problem: SplitProblem) -> None:
        if not np.isfinite(self.alpha) or self.alpha < 3:
            raise InputError(f"alpha must be >= 3, got {self.alpha}")
        if not self.step > 0:
            raise InputError(f"step must be positive, got {self.step}")
        limit = 1.0 / problem.lipschitz
        if self.allow_critical_step:
            if self.step > limit:
                raise InputError(f"step {self.step:g} exceeds 1/L = {limit:g}")
        elif self.step >= limit:
            raise InputError(
                f"step {self.step:g} must be < 1/L = {limit:g} "
                "(use allow_critical_step for s = 1/L)")
        if not 1 <= int(self.max_iter) <= MAX_ITER:
            raise InputError(f"max_iter must lie in [1, {MAX_ITER}]")
        if int(self.record_every) < 1:
            raise InputError("record_every must be a positive integer")
        as_point(self.initial_point, problem.dimension)


@dataclass(frozen=True)
class IterateState:
    k: int
    x_curr: np.ndarray
    x_prev: np.ndarray
    y: np.ndarray
    z: np.ndarray


@dataclass
class RunResult:
    final_state: IterateState
    trace: Trace
    termination: Termination
    method: str
    alpha: float
    step: float
    iterations: int
    # rows are x_1, ..., x_{K+1}; None unless store_iterates
    iterates: Optional[np.ndarray] = None
    z_max_gap: float = 0.0
    z_max_norm: float = 0.0
    errors: Optional[np.ndarray] = None
    extras: dict = field(default_factory=dict)


# -- step primitives ---------------------------------------------------------

def inertial_coefficient(k: int, alpha: float) -> float:
    if k < 1:
        raise InputError(f"iteration index must be >= 1, got {k}")
    return (k - 1) / (k + alpha - 1)


def extrapolate(x_curr, x_prev, k: int, alpha: float) -> np.ndarray:
    x_curr = as_point(x_curr)
    x_prev = as_point(x_prev, x_curr.shape[0])
    return x_curr + inertial_coefficient(k, alpha) * (x_curr - x_prev)


def fb_step(problem: SplitProblem, step: float, y) -> np.ndarray:
    """Forward-backward image ``prox_{s Psi}(y - s grad Phi(y))``."""
    y = as_point(y, problem.dimension)
    return problem.nonsmooth.prox(step, y - step * problem.smooth.gradient(y))


def inexact_fb_step(problem: SplitProblem, step: float, y, g) -> np.ndarray:
    """Forward-backward step on the perturbed gradient ``grad Phi(y) - g``."""
    y = as_point(y, problem.dimension)
    g = as_point(g, problem.dimension)
    return problem.nonsmooth.prox(step, y - step * (problem.smooth.gradient(y) - g))


def gradient_mapping(problem: SplitProblem, step: float, y) -> np.ndarray:
    """``G_s(y) = (y - fb_step(y)) / s``; zero exactly at minimizers."""
    if not step > 0:
        raise InputError(f"step must be positive, got {step}")
    y = as_point(y, problem.dimension)
    return (y - fb_step(problem, step, y)) / step


def z_direct(state: IterateState, alpha: float) -> np.ndarray:
    return state.x_curr + ((state.k - 1) / (alpha - 1)) * (state.x_curr - state.x_prev)


def z_recursive(z_prev, k: int, alpha: float, step: float, G) -> np.ndarray:
    """``z_{k+1} = z_k - s (k+alpha-1)/(alpha-1) G_s(y_k)``."""
    return np.asarray(z_prev, dtype=float) - (step * (k + alpha - 1) / (alpha - 1)) * np.asarray(G, dtype=float)


# -- drivers -----------------------------------------------------------------

def run(problem: SplitProblem, config: SolverConfig) -> RunResult:
    """Accelerated forward-backward run; inexact when ``error_schedule`` is set."""
    return _iterate(problem, config, accelerated=True)


def run_baseline(problem: SplitProblem, config: SolverConfig) -> RunResult:
    """Unaccelerated forward-backward run (``y_k = x_k``)."""
    return _iterate(problem, config, accelerated=False)


def _iterate(problem: SplitProblem, config: SolverConfig, accelerated: bool) -> RunResult:
    config.validate(problem)
    alpha = float(config.alpha)
    s = float(config.step)
    K = int(config.max_iter)
    every = int(config.record_every)
    schedule = config.error_schedule
    grad = problem.smooth.gradient
    prox = problem.nonsmooth.prox
    certified = problem.has_reference
    xs = problem.reference_minimizer
    gap = problem.suboptimality if certified else problem.theta

    x = as_point(config.initial_point, problem.dimension).astype(float, copy=True)
    x_prev = x.copy()
    z_rec = x.copy()
    theta = gap(x)
    best = theta

    builder = TraceBuilder(capacity=(K - 1) // every + 1, alpha=alpha, step=s,
                           certified=certified, inexact=schedule is not None)
    iterates = None
    if config.store_iterates:
        iterates = np.empty((K + 1, problem.dimension))
        iterates[0] = x
    errors = np.empty((K, problem.dimension)) if schedule is not None else None

    termination = Termination.BUDGET_EXHAUSTED
    z_gap = 0.0
    z_norm = float(np.linalg.norm(x))
    k_done = 0
    for k in range(1, K + 1):
        if accelerated:
            beta = (k - 1) / (k + alpha - 1)
            y = x + beta * (x - x_prev)
        else:
            y = x
        d = grad(y)
        if schedule is not None:
            g = np.asarray(schedule(k), dtype=float)
            errors[k - 1] = g
            d = d - g
        x_next = prox(s, y - s * d)
        with np.errstate(all="ignore"):
            theta_next = gap(x_next)
        if not (np.all(np.isfinite(x_next)) and np.isfinite(theta_next)):
            termination = Termination.NUMERICAL_FAILURE
            break

        G = (y - x_next) / s
        z = x + ((k - 1) / (alpha - 1)) * (x - x_prev)
        if accelerated:
            z_gap = max(z_gap, float(np.linalg.norm(z_rec - z)))
            z_norm = max(z_norm, float(np.linalg.norm(z)))
        if (k - 1) % every == 0:
            v = x_next - x
            vel = float(np.linalg.norm(v))
            builder.add(
                k=k, theta=theta, theta_next=theta_next, velocity_norm=vel,
                z_dist=float(np.linalg.norm(z - xs)) if certified else math.nan,
                grad_map_norm=float(np.linalg.norm(G)),
                error_norm=float(np.linalg.norm(g)) if schedule is not None else 0.0,
            )
        if accelerated:
            z_rec = z_rec - (s * (k + alpha - 1) / (alpha - 1)) * G
        x_prev, x = x, x_next
        theta = theta_next
        best = min(best, theta)
        k_done = k
        if iterates is not None:
            iterates[k] = x
        if config.residual_tol is not None and float(np.linalg.norm(G)) <= config.residual_tol:
            termination = Termination.RESIDUAL_BELOW_TOL
            break

    k_final = k_done + 1
    if accelerated:
        y_final = x + ((k_final - 1) / (k_final + alpha - 1)) * (x - x_prev)
    else:
        y_final = x.copy()
    z_final = x + ((k_final - 1) / (alpha - 1)) * (x - x_prev)
    state = IterateState(k=k_final, x_curr=x, x_prev=x_prev, y=y_final, z=z_final)
    if iterates is not None:
        iterates = iterates[:k_done + 1]
    if errors is not None:
        errors = errors[:k_done]
    return RunResult(
        final_state=state,
        trace=builder.build(theta_offset=0.0 if certified else best - 1e-12),
        termination=termination,
        method="accelerated" if accelerated else "baseline",
        alpha=alpha,
        step=s,
        iterations=k_done,
        iterates=iterates,
        z_max_gap=z_gap,
        z_max_norm=z_norm,
        errors=errors,
    )
