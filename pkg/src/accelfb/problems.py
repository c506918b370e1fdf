"""Reproducible desk-scale benchmarks with certified minimizers.

All randomness comes from ``numpy.random.Generator(PCG64(seed))``; the same
``BenchmarkSpec`` always rebuilds bit-identical problem data on one platform.
Reference minimizers are produced by :func:`certify_reference`, which never
calls the accelerated solver.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .core import (
    InputError,
    SplitProblem,
    l1_term,
    least_squares_smooth,
    quadratic_smooth,
    zero_term,
)

__all__ = [
    "PRNG",
    "BenchmarkSpec",
    "Certification",
    "make_quadratic",
    "make_degenerate_quadratic",
    "make_lasso",
    "certify_reference",
    "build",
    "save_problem",
    "load_problem",
    "DEFAULTS",
]

PRNG = "PCG64"
CERT_TOL = 1e-10
CERT_STEP_FRACTION = 0.99

DEFAULTS = {
    "quadratic": {"dim": 20, "condition": 1e4},
    "degenerate": {"dim": 20, "rank_deficiency": 5, "condition": 100.0},
    "lasso": {"rows": 100, "cols": 50, "sparsity": 0.2, "l1_weight": 0.1, "noise": 0.01,
              "condition": 100.0},
}


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


@dataclass(frozen=True)
class Certification:
    method: str
    residual: float
    reference_theta: float
    success: bool
    iterations: int = 0


@dataclass
class BenchmarkSpec:
    name: str
    seed: int = 0
    params: dict = field(default_factory=dict)
    prng: str = PRNG
    certification: Optional[Certification] = None

    def resolved(self) -> dict:
        if self.name not in DEFAULTS:
            raise InputError(f"unknown benchmark {self.name!r}; choose from {sorted(DEFAULTS)}")
        out = dict(DEFAULTS[self.name])
        unknown = set(self.params) - set(out)
        if unknown:
            raise InputError(f"unknown parameters for {self.name}: {sorted(unknown)}")
        out.update({k: v for k, v in self.params.items() if v is not None})
        return out

    def to_dict(self) -> dict:
        d = {"name": self.name, "seed": self.seed, "params": self.resolved(), "prng": self.prng}
        d["certification"] = None if self.certification is None else asdict(self.certification)
        return d


def make_quadratic(dim: int, condition_number: float, seed: int = 0) -> SplitProblem:
    """``1/2 x^T diag(q) x`` with ``q`` geometric from ``1/condition`` to 1; ``x* = 0``."""
    if dim < 1:
        raise InputError("dim must be >= 1")
    if not condition_number >= 1:
        raise InputError("condition number must be >= 1")
    q = np.geomspace(1.0 / condition_number, 1.0, dim) if dim > 1 else np.ones(1)
    q[-1] = 1.0
    return SplitProblem(
        smooth=quadratic_smooth(q),
        nonsmooth=zero_term(),
        dimension=dim,
        reference_minimizer=np.zeros(dim),
        reference_optimum=0.0,
        name="quadratic",
        info={"eigenvalues": q, "seed": seed,
              "certification": Certification("construction", 0.0, 0.0, True)},
    )


def make_degenerate_quadratic(dim: int, rank_deficiency: int, seed: int = 0,
                              condition: float = 100.0) -> SplitProblem:
    """Quadratic whose minimizer set is an affine subspace of dimension ``rank_deficiency``.

    ``Phi(x) = 1/2 (x-c)^T U diag(lam) U^T (x-c)`` with a seeded orthogonal
    ``U``; the last ``rank_deficiency`` entries of ``lam`` are zero, so
    ``S = c + span(U[:, -r:])``.
    """
    if not 1 <= rank_deficiency < dim:
        raise InputError("rank_deficiency must satisfy 1 <= rank_deficiency < dim")
    rng = _rng(seed)
    Z = rng.standard_normal((dim, dim))
    U, R = np.linalg.qr(Z)
    U = U * np.sign(np.diag(R))
    c = rng.standard_normal(dim)
    r = dim - rank_deficiency
    lam = np.zeros(dim)
    lam[:r] = np.geomspace(1.0, 1.0 / condition, r) if r > 1 else 1.0
    basis = U[:, r:].copy()
    return SplitProblem(
        smooth=quadratic_smooth(lam, basis=U, center=c),
        nonsmooth=zero_term(),
        dimension=dim,
        reference_minimizer=c,
        reference_optimum=0.0,
        name="degenerate",
        info={"solution_basis": basis, "solution_offset": c, "eigenvalues": lam, "eigenbasis": U,
              "seed": seed,
              "certification": Certification("construction", 0.0, 0.0, True)},
    )


def lasso_data(rows, cols, sparsity, noise, condition, seed):
    """Seeded design ``A = U diag(sigma) V^T`` with ``sigma`` geometric in
    ``[1/condition, 1]``, planted sparse signal and Gaussian noise."""
    if rows < 1 or cols < 1:
        raise InputError("rows and cols must be >= 1")
    rng = _rng(seed)
    m = min(rows, cols)
    U, _ = np.linalg.qr(rng.standard_normal((rows, m)))
    V, _ = np.linalg.qr(rng.standard_normal((cols, m)))
    sigma = np.geomspace(1.0, 1.0 / condition, m) if m > 1 else np.ones(1)
    A = (U * sigma) @ V.T
    nnz = max(1, int(round(sparsity * cols)))
    support = np.sort(rng.choice(cols, size=nnz, replace=False))
    x_true = np.zeros(cols)
    x_true[support] = rng.standard_normal(nnz)
    b = A @ x_true + noise * rng.standard_normal(rows)
    return A, b, x_true


def make_lasso(rows: int = 100, cols: int = 50, sparsity: float = 0.2, l1_weight: float = 0.1,
               noise: float = 0.01, condition: float = 100.0, seed: int = 0,
               certify: bool = True, budget: int = 10**6) -> SplitProblem:
    """``1/2 ||Ax - b||^2 + l1_weight ||x||_1`` with a certified reference minimizer."""
    A, b, x_true = lasso_data(rows, cols, sparsity, noise, condition, seed)
    problem = SplitProblem(
        smooth=least_squares_smooth(A, b),
        nonsmooth=l1_term(l1_weight),
        dimension=cols,
        name="lasso",
        info={"design": A, "observations": b, "l1_weight": float(l1_weight), "planted": x_true,
              "seed": seed},
    )
    if not certify:
        return problem
    return with_certified_reference(problem, budget)


def with_certified_reference(problem: SplitProblem, budget: int = 10**6) -> SplitProblem:
    x_star, cert = certify_reference(problem, budget)
    info = dict(problem.info, certification=cert)
    if not cert.success:
        return SplitProblem(problem.smooth, problem.nonsmooth, problem.dimension, name=problem.name,
                            info=info)
    return SplitProblem(problem.smooth, problem.nonsmooth, problem.dimension,
                        reference_minimizer=x_star, reference_optimum=cert.reference_theta,
                        name=problem.name, info=info)


def _residual(problem, step, x):
    from .solver import gradient_mapping
    return float(np.linalg.norm(gradient_mapping(problem, step, x)))


def _support_solve(A, b, lam, x):
    """Exact minimizer on the support/sign pattern of ``x``."""
    S = np.nonzero(x)[0]
    out = np.zeros_like(x)
    if S.size == 0:
        return out
    AS = A[:, S]
    rhs = AS.T @ b - lam * np.sign(x[S])
    out[S] = np.linalg.solve(AS.T @ AS, rhs)
    return out


def certify_reference(problem: SplitProblem, budget: int = 10**6, tol: float = CERT_TOL,
                      check_every: int = 100):
    """Independent high-accuracy minimizer: plain proximal gradient at ``s = 0.99/L``.

    Constructed families short-circuit to their known minimizer.  For an
    ``l1``-regularized least-squares problem the proximal-gradient iterate's
    support and signs are periodically handed to an exact restricted solve,
    which lands on ``x*`` to rounding once the support is identified.
    Returns ``(x_star, Certification)``; ``x_star`` is None on failure.
    """
    step = CERT_STEP_FRACTION / problem.lipschitz
    if problem.name in ("quadratic", "degenerate") and problem.reference_minimizer is not None:
        x = np.array(problem.reference_minimizer)
        res = _residual(problem, step, x)
        return x, Certification("construction", res, float(problem.theta(x)), res <= tol)

    from .solver import fb_step

    lasso = "design" in problem.info and "l1_weight" in problem.info
    if lasso:
        A = problem.info["design"]
        b = problem.info["observations"]
        lam = problem.info["l1_weight"]
    x = np.zeros(problem.dimension)
    best = (math.inf, x)
    for it in range(1, budget + 1):
        x = fb_step(problem, step, x)
        if it % check_every and it != budget:
            continue
        candidates = [x]
        if lasso:
            candidates.insert(0, _support_solve(A, b, lam, x))
        for cand in candidates:
            res = _residual(problem, step, cand)
            if res < best[0]:
                best = (res, cand)
        if best[0] <= tol:
            break
    res, x_star = best
    method = "prox-gradient+support-solve" if lasso else "prox-gradient"
    ok = res <= tol
    return (x_star if ok else None), Certification(method, res, float(problem.theta(x_star)), ok,
                                                   iterations=it)


def build(spec: BenchmarkSpec, budget: int = 10**6) -> SplitProblem:
    """Instantiate the benchmark described by ``spec``; fills ``spec.certification``."""
    p = spec.resolved()
    if spec.name == "quadratic":
        problem = make_quadratic(int(p["dim"]), float(p["condition"]), spec.seed)
    elif spec.name == "degenerate":
        problem = make_degenerate_quadratic(int(p["dim"]), int(p["rank_deficiency"]), spec.seed,
                                            float(p["condition"]))
    else:
        problem = make_lasso(int(p["rows"]), int(p["cols"]), float(p["sparsity"]),
                             float(p["l1_weight"]), float(p["noise"]), float(p["condition"]),
                             spec.seed, budget=budget)
    spec.certification = problem.info.get("certification")
    return problem


# -- serialization -----------------------------------------------------------

def save_problem(path, spec: BenchmarkSpec, problem: SplitProblem) -> None:
    """Write a self-describing ``.npz``: JSON header plus the arrays that define the instance."""
    arrays = {}
    for key in ("design", "observations", "eigenvalues", "eigenbasis", "solution_basis",
                "solution_offset", "planted"):
        if key in problem.info:
            arrays[key] = np.asarray(problem.info[key])
    if problem.reference_minimizer is not None:
        arrays["reference_minimizer"] = np.asarray(problem.reference_minimizer)
    header = {
        "format": "accelfb-problem",
        "v": 1,
        "spec": spec.to_dict(),
        "dimension": problem.dimension,
        "lipschitz": problem.lipschitz,
        "reference_optimum": problem.reference_optimum,
        "arrays": sorted(arrays),
    }
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header, sort_keys=True)), **arrays)


def load_problem(path):
    """Rebuild ``(spec, problem)`` from the arrays stored by :func:`save_problem`."""
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("format") != "accelfb-problem":
            raise InputError(f"{path}: not an accelfb problem file")
        arr = {k: np.array(data[k]) for k in header["arrays"]}
    s = header["spec"]
    cert = s.get("certification")
    spec = BenchmarkSpec(name=s["name"], seed=s["seed"], params=s["params"], prng=s["prng"],
                         certification=None if cert is None else Certification(**cert))
    info = {k: v for k, v in arr.items() if k != "reference_minimizer"}
    info["seed"] = spec.seed
    info["certification"] = spec.certification
    if spec.name == "lasso":
        info["l1_weight"] = float(s["params"]["l1_weight"])
        smooth = least_squares_smooth(arr["design"], arr["observations"])
        nonsmooth = l1_term(info["l1_weight"])
    elif spec.name == "quadratic":
        smooth = quadratic_smooth(arr["eigenvalues"])
        nonsmooth = zero_term()
    elif spec.name == "degenerate":
        smooth = quadratic_smooth(arr["eigenvalues"], basis=arr["eigenbasis"],
                                  center=arr["solution_offset"])
        nonsmooth = zero_term()
    else:
        raise InputError(f"{path}: unknown benchmark {spec.name!r}")
    problem = SplitProblem(smooth, nonsmooth, int(header["dimension"]),
                           reference_minimizer=arr.get("reference_minimizer"),
                           reference_optimum=header["reference_optimum"], name=spec.name, info=info)
    return spec, problem
