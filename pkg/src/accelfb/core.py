"""Split objectives ``Theta = Phi + Psi`` and closed-form oracles.

``Phi`` is the smooth convex part (value, gradient, Lipschitz constant of the
gradient) and ``Psi`` the nonsmooth convex part (value, proximal map).  Every
oracle is a pure function of its arguments, so one problem instance can be
shared between concurrent runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "InputError",
    "SmoothTerm",
    "NonsmoothTerm",
    "SplitProblem",
    "theta_eval",
    "prox_l1",
    "prox_box",
    "prox_zero",
    "l1_term",
    "box_term",
    "zero_term",
    "quadratic_smooth",
    "least_squares_smooth",
    "power_iteration",
]

LIPSCHITZ_INFLATION = 1.0 + 1e-6


class InputError(ValueError):
    """Raised on malformed oracle or solver inputs."""


def as_point(x, dimension: Optional[int] = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InputError(f"expected a 1-D point, got shape {x.shape}")
    if dimension is not None and x.shape[0] != dimension:
        raise InputError(f"dimension mismatch: expected {dimension}, got {x.shape[0]}")
    return x


def _default_difference(value):
    def difference(x, ref):
        return value(x) - value(ref)
    return difference


@dataclass(frozen=True)
class SmoothTerm:
    """Convex ``Phi`` with an ``L``-Lipschitz gradient.

    ``difference(x, ref)`` returns ``Phi(x) - Phi(ref)``.  Closed-form terms
    supply a cancellation-free version of it, which keeps suboptimality gaps
    accurate long after ``Phi(x)`` itself has stopped changing in the last
    bits.
    """

    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    lipschitz: float
    difference: Optional[Callable[[np.ndarray, np.ndarray], float]] = None
    # raw spectral estimate before inflation, when L was computed numerically
    lipschitz_estimate: Optional[float] = None

    def __post_init__(self):
        if not np.isfinite(self.lipschitz) or self.lipschitz <= 0:
            raise InputError(f"Lipschitz constant must be positive and finite, got {self.lipschitz}")
        if self.difference is None:
            object.__setattr__(self, "difference", _default_difference(self.value))


@dataclass(frozen=True)
class NonsmoothTerm:
    """Proper lsc convex ``Psi`` with its proximal map ``prox(step, y)``."""

    value: Callable[[np.ndarray], float]
    prox: Callable[[float, np.ndarray], np.ndarray]
    difference: Optional[Callable[[np.ndarray, np.ndarray], float]] = None
    name: str = ""

    def __post_init__(self):
        if self.difference is None:
            object.__setattr__(self, "difference", _default_difference(self.value))


@dataclass(frozen=True)
class SplitProblem:
    """``min Phi(x) + Psi(x)`` over ``R^dimension``.

    ``reference_minimizer``/``reference_optimum`` are optional; when present
    they must describe a point of the solution set (see
    :func:`accelfb.problems.certify_reference`).  ``info`` holds generator
    metadata such as the solution-set basis of degenerate instances.
    """

    smooth: SmoothTerm
    nonsmooth: NonsmoothTerm
    dimension: int
    reference_minimizer: Optional[np.ndarray] = None
    reference_optimum: Optional[float] = None
    name: str = ""
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if int(self.dimension) < 1:
            raise InputError("dimension must be a positive integer")
        if self.reference_minimizer is not None:
            xs = as_point(self.reference_minimizer, self.dimension)
            xs.setflags(write=False)
            object.__setattr__(self, "reference_minimizer", xs)
            if self.reference_optimum is None:
                object.__setattr__(self, "reference_optimum", theta_eval(self, xs))

    @property
    def lipschitz(self) -> float:
        return self.smooth.lipschitz

    @property
    def has_reference(self) -> bool:
        return self.reference_minimizer is not None

    def theta(self, x) -> float:
        return theta_eval(self, x)

    def suboptimality(self, x) -> float:
        """``Theta(x) - Theta(x*)`` evaluated in difference form.

        May be marginally negative at rounding level when ``x`` is itself a
        minimizer; callers treat such values as zero within tolerance.
        """
        if self.reference_minimizer is None:
            raise InputError("problem has no reference minimizer")
        x = as_point(x, self.dimension)
        ref = self.reference_minimizer
        dpsi = self.nonsmooth.difference(x, ref)
        if dpsi == np.inf:
            return np.inf
        return float(self.smooth.difference(x, ref) + dpsi)


def theta_eval(problem: SplitProblem, x) -> float:
    """Objective value ``Phi(x) + Psi(x)``; ``+inf`` outside ``dom Psi``."""
    x = as_point(x, problem.dimension)
    psi = problem.nonsmooth.value(x)
    if psi == np.inf:
        return np.inf
    return float(problem.smooth.value(x) + psi)


# -- proximal maps -----------------------------------------------------------

def _check_step(step):
    if not step > 0:
        raise InputError(f"step must be positive, got {step}")


def prox_l1(weight: float, step: float, y) -> np.ndarray:
    """Soft thresholding, the prox of ``step * weight * ||.||_1``."""
    if weight < 0:
        raise InputError(f"l1 weight must be nonnegative, got {weight}")
    _check_step(step)
    y = as_point(y)
    t = step * weight
    if t == 0:
        return y.copy()
    return np.sign(y) * np.maximum(np.abs(y) - t, 0.0)


def prox_box(lower, upper, step: float, y) -> np.ndarray:
    """Projection onto ``[lower, upper]``; the step is irrelevant for indicators."""
    _check_step(step)
    y = as_point(y)
    lower = np.broadcast_to(np.asarray(lower, dtype=float), y.shape)
    upper = np.broadcast_to(np.asarray(upper, dtype=float), y.shape)
    if np.any(lower > upper):
        raise InputError("box lower bound exceeds upper bound")
    return np.clip(y, lower, upper)


def prox_zero(step: float, y) -> np.ndarray:
    _check_step(step)
    return as_point(y).copy()


# -- nonsmooth terms ---------------------------------------------------------

def l1_term(weight: float) -> NonsmoothTerm:
    if weight < 0:
        raise InputError(f"l1 weight must be nonnegative, got {weight}")
    weight = float(weight)

    def value(x):
        return weight * float(np.sum(np.abs(x)))

    def difference(x, ref):
        # |x_i| - |ref_i| is exact once x_i and ref_i agree to a factor of two
        return weight * float(np.sum(np.abs(x) - np.abs(ref)))

    return NonsmoothTerm(value=value, prox=lambda step, y: prox_l1(weight, step, y),
                         difference=difference, name=f"l1({weight:g})")


def box_term(lower, upper) -> NonsmoothTerm:
    lower = np.array(lower, dtype=float)
    upper = np.array(upper, dtype=float)
    if np.any(lower > upper):
        raise InputError("box lower bound exceeds upper bound")
    lower.setflags(write=False)
    upper.setflags(write=False)

    def value(x):
        inside = np.all(x >= lower) and np.all(x <= upper)
        return 0.0 if inside else np.inf

    def difference(x, ref):
        return value(x) - value(ref)

    return NonsmoothTerm(value=value, prox=lambda step, y: prox_box(lower, upper, step, y),
                         difference=difference, name="box")


def zero_term() -> NonsmoothTerm:
    return NonsmoothTerm(value=lambda x: 0.0, prox=prox_zero,
                         difference=lambda x, ref: 0.0, name="zero")


# -- smooth terms ------------------------------------------------------------

def quadratic_smooth(eigenvalues, basis=None, center=None) -> SmoothTerm:
    """``Phi(x) = 1/2 (x-c)^T U diag(lam) U^T (x-c)``.

    Stored in spectral form so that ``Phi`` is exactly nonnegative and exactly
    flat along zero eigen-directions.  ``basis=None`` means ``U = I``.
    """
    lam = np.array(eigenvalues, dtype=float)
    if lam.ndim != 1 or np.any(lam < 0):
        raise InputError("eigenvalues must be a nonnegative vector")
    if lam.max() <= 0:
        raise InputError("quadratic with zero Hessian has no positive Lipschitz constant")
    n = lam.shape[0]
    U = None if basis is None else np.array(basis, dtype=float)
    if U is not None and U.shape != (n, n):
        raise InputError("basis must be square and match the eigenvalues")
    c = np.zeros(n) if center is None else as_point(center, n).copy()
    for arr in (lam, c) if U is None else (lam, c, U):
        arr.setflags(write=False)

    if U is None:
        def coords(v):
            return v

        def back(w):
            return w
    else:
        def coords(v):
            return U.T @ v

        def back(w):
            return U @ w

    def value(x):
        w = coords(x - c)
        return 0.5 * float(np.dot(lam * w, w))

    def gradient(x):
        return back(lam * coords(x - c))

    def difference(x, ref):
        wr = coords(ref - c)
        wd = coords(x - ref)
        return float(np.dot(lam * wr, wd) + 0.5 * np.dot(lam * wd, wd))

    return SmoothTerm(value=value, gradient=gradient, lipschitz=float(lam.max()),
                      difference=difference)


def power_iteration(matrix, rtol: float = 1e-10, max_iter: int = 100_000, seed: int = 0) -> float:
    """Largest eigenvalue of ``A^T A`` by power iteration on the normal map.

    The Rayleigh quotient increases monotonically towards the top eigenvalue.
    Iteration stops once the geometric extrapolation of the remaining
    increments falls below ``rtol`` relative.
    """
    A = np.asarray(matrix, dtype=float)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    rho = 0.0
    delta_prev = None
    for _ in range(max_iter):
        w = A.T @ (A @ v)
        rho_new = float(np.dot(v, w))
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
        delta = abs(rho_new - rho)
        rho = rho_new
        if delta_prev is not None and delta_prev > 0:
            q = min(delta / delta_prev, 1.0 - 1e-12)
            if delta <= rtol * rho and delta * q / (1.0 - q) <= rtol * rho:
                break
        elif delta_prev is not None and delta == 0:
            break
        delta_prev = delta
    return rho


def least_squares_smooth(design, observations) -> SmoothTerm:
    """``Phi(x) = 1/2 ||Ax - b||^2`` with ``L`` from power iteration.

    The spectral estimate is inflated by ``1 + 1e-6`` so that ``L`` is a safe
    upper bound on ``||A^T A||``; the raw estimate is kept in
    ``lipschitz_estimate``.
    """
    A = np.array(design, dtype=float)
    b = np.array(observations, dtype=float)
    if A.ndim != 2 or b.ndim != 1 or A.shape[0] != b.shape[0]:
        raise InputError(f"inconsistent shapes: design {A.shape}, observations {b.shape}")
    A.setflags(write=False)
    b.setflags(write=False)
    lam = power_iteration(A)
    if lam <= 0:
        raise InputError("zero design matrix: Phi is constant, no admissible step")

    def value(x):
        r = A @ x - b
        return 0.5 * float(np.dot(r, r))

    def gradient(x):
        return A.T @ (A @ x - b)

    def difference(x, ref):
        r_ref = A @ ref - b
        Ad = A @ (x - ref)
        return float(np.dot(r_ref, Ad) + 0.5 * np.dot(Ad, Ad))

    return SmoothTerm(value=value, gradient=gradient, lipschitz=lam * LIPSCHITZ_INFLATION,
                      difference=difference, lipschitz_estimate=lam)
