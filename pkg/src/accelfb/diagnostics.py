"""Lyapunov ledger, inequality checkers and empirical rates.

Every checker records an inequality ``A <= B`` as ``slack = B - A`` and passes
when ``slack >= -tol`` at every index it covers.  Slacks are kept on pass as
well, so margins can be tracked across runs.  A verdict whose preconditions
do not hold (wrong ``alpha``, uncertified reference, short trace, ...) is
reported as not applicable rather than as a pass.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import InputError, SplitProblem, as_point

__all__ = [
    "COLUMNS",
    "TraceRecord",
    "Trace",
    "TraceBuilder",
    "Verdict",
    "CertificateReport",
    "RateFit",
    "energy",
    "check_energy_decrease",
    "check_pointwise_bounds",
    "check_partial_sums",
    "check_mechanical",
    "check_lemma1_tail",
    "check_rate_tails",
    "check_inexact_energy",
    "check_energy_ledger",
    "check_descent_inequality",
    "check_iterate_convergence",
    "solution_set_distance",
    "fit_rate",
    "tail_ratio",
    "build_report",
]

COLUMNS = (
    "k", "theta", "d", "velocity_norm", "energy", "k2_theta", "k_velocity",
    "lemma1_quantity", "z_dist", "grad_map_norm", "error_norm",
)

RTOL = 1e-9


@dataclass(frozen=True)
class TraceRecord:
    k: int
    theta: float
    d: float
    velocity_norm: float
    energy: float
    k2_theta: float
    k_velocity: float
    lemma1_quantity: float
    z_dist: float
    grad_map_norm: float
    error_norm: float


class Trace:
    """Column store of :class:`TraceRecord` rows, ordered by strictly increasing ``k``."""

    def __init__(self, columns: dict):
        missing = [c for c in COLUMNS if c not in columns]
        if missing:
            raise InputError(f"trace is missing columns {missing}")
        n = len(columns["k"])
        cols = {}
        for name in COLUMNS:
            arr = np.array(columns[name], dtype=np.int64 if name == "k" else float)
            if arr.shape != (n,):
                raise InputError(f"column {name!r} has shape {arr.shape}, expected ({n},)")
            arr.setflags(write=False)
            cols[name] = arr
        if n > 1 and np.any(np.diff(cols["k"]) <= 0):
            raise InputError("trace indices must be strictly increasing")
        self._cols = cols

    def __len__(self) -> int:
        return len(self._cols["k"])

    def __getitem__(self, key):
        if isinstance(key, str):
            return self._cols[key]
        i = int(key)
        row = {name: self._cols[name][i] for name in COLUMNS}
        row["k"] = int(row["k"])
        return TraceRecord(**{n: (v if n == "k" else float(v)) for n, v in row.items()})

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def k(self) -> np.ndarray:
        return self._cols["k"]

    @property
    def columns(self) -> dict:
        return dict(self._cols)

    @property
    def contiguous(self) -> bool:
        """True when the trace holds every iteration ``1..K``."""
        k = self.k
        return len(k) > 0 and k[0] == 1 and bool(np.all(np.diff(k) == 1))

    def slice(self, start: int, stop: int) -> "Trace":
        return Trace({n: c[start:stop] for n, c in self._cols.items()})


class TraceBuilder:
    """Preallocated per-run trace buffer used by the solver loop."""

    def __init__(self, capacity: int, alpha: float, step: float, certified: bool, inexact: bool):
        self.alpha = alpha
        self.step = step
        self.certified = certified
        self.inexact = inexact
        self._n = 0
        self._k = np.empty(capacity, dtype=np.int64)
        self._raw = {name: np.empty(capacity) for name in
                     ("theta", "theta_next", "velocity_norm", "z_dist", "grad_map_norm", "error_norm")}

    def add(self, k, theta, theta_next, velocity_norm, z_dist, grad_map_norm, error_norm):
        i = self._n
        self._k[i] = k
        raw = self._raw
        raw["theta"][i] = theta
        raw["theta_next"][i] = theta_next
        raw["velocity_norm"][i] = velocity_norm
        raw["z_dist"][i] = z_dist
        raw["grad_map_norm"][i] = grad_map_norm
        raw["error_norm"][i] = error_norm
        self._n = i + 1

    def build(self, theta_offset: float = 0.0) -> Trace:
        n = self._n
        raw = {name: a[:n] for name, a in self._raw.items()}
        theta = raw["theta"] - theta_offset
        theta_next = raw["theta_next"] - theta_offset
        return ledger_columns(self._k[:n], theta, theta_next, raw["velocity_norm"],
                              raw["z_dist"], raw["grad_map_norm"], raw["error_norm"],
                              self.alpha, self.step)


def ledger_columns(k, theta, theta_next, velocity_norm, z_dist, grad_map_norm, error_norm,
                   alpha, step) -> Trace:
    """Derive every trace column from the raw per-iteration quantities."""
    kf = np.asarray(k, dtype=float)
    vel = np.asarray(velocity_norm, dtype=float)
    return Trace({
        "k": k,
        "theta": theta,
        "d": vel**2 / (2.0 * step),
        "velocity_norm": vel,
        "energy": energy(kf, theta, z_dist, alpha, step),
        "k2_theta": kf**2 * theta,
        "k_velocity": kf * vel,
        "lemma1_quantity": kf**2 * vel**2 + (kf + 1.0)**2 * theta_next,
        "z_dist": z_dist,
        "grad_map_norm": grad_map_norm,
        "error_norm": error_norm,
    })


def energy(k, theta, z_dist, alpha, step):
    """``E(k) = 2s/(alpha-1) (k+alpha-2)^2 theta_k + (alpha-1) ||z_k - x*||^2``."""
    k = np.asarray(k, dtype=float)
    out = (2.0 * step / (alpha - 1.0)) * (k + alpha - 2.0)**2 * np.asarray(theta) \
        + (alpha - 1.0) * np.asarray(z_dist)**2
    return float(out) if np.ndim(out) == 0 else out


# -- verdicts ----------------------------------------------------------------

@dataclass
class Verdict:
    name: str
    passed: Optional[bool]          # None: not applicable
    worst_slack: Optional[float] = None
    worst_k: Optional[int] = None
    detail: str = ""

    @property
    def applicable(self) -> bool:
        return self.passed is not None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "pass": self.passed,
            "applicable": self.applicable,
            "worst_slack": _finite_or_none(self.worst_slack),
            "worst_k": self.worst_k,
            "detail": self.detail,
        }


def not_applicable(name: str, why: str) -> Verdict:
    return Verdict(name=name, passed=None, detail=why)


def _finite_or_none(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _from_slacks(name, ks, slack, tol, detail="") -> Verdict:
    """Fold per-index slacks into a verdict; worst index is worst ``slack / tol``."""
    slack = np.asarray(slack, dtype=float)
    tol = np.broadcast_to(np.asarray(tol, dtype=float), slack.shape)
    if slack.size == 0:
        return not_applicable(name, "no indices to check")
    bad = ~np.isfinite(slack)
    score = np.where(bad, -np.inf, slack / np.where(tol > 0, tol, 1.0))
    i = int(np.argmin(score))
    passed = bool(np.all(~bad & (slack >= -tol)))
    return Verdict(name=name, passed=passed, worst_slack=float(slack[i]), worst_k=int(ks[i]),
                   detail=detail)


def _e1(trace: Trace) -> float:
    return float(trace["energy"][0])


def _energy_available(trace: Trace) -> bool:
    return len(trace) > 0 and bool(np.all(np.isfinite(trace["energy"])))


def _consecutive(trace: Trace):
    """Index pairs ``(i, i+1)`` whose iteration numbers differ by one."""
    k = trace.k
    return np.nonzero(np.diff(k) == 1)[0]


def check_energy_decrease(trace: Trace, alpha: float, step: float) -> Verdict:
    """``E(k+1) + 2s (alpha-3)/(alpha-1) k theta_k <= E(k)`` at every recorded pair."""
    name = "energy_decrease"
    if alpha < 3:
        return not_applicable(name, "requires alpha >= 3")
    if not _energy_available(trace):
        return not_applicable(name, "energy unavailable (uncertified reference)")
    i = _consecutive(trace)
    if i.size == 0:
        return not_applicable(name, "no consecutive iterations recorded")
    E = trace["energy"]
    k = trace.k.astype(float)
    theta = trace["theta"]
    slack = E[i] - E[i + 1] - 2.0 * step * (alpha - 3.0) / (alpha - 1.0) * k[i] * theta[i]
    tol = RTOL * (1.0 + _e1(trace))
    return _from_slacks(name, trace.k[i], slack, tol)


def check_pointwise_bounds(trace: Trace, alpha: float, step: float, e1: Optional[float] = None) -> Verdict:
    """Pointwise ``theta_k <= (alpha-1) E(1) / (2s (k+alpha-2)^2)`` and
    ``||z_k - x*||^2 <= E(1)/(alpha-1)``."""
    name = "pointwise_bounds"
    if alpha < 3:
        return not_applicable(name, "requires alpha >= 3")
    if not _energy_available(trace):
        return not_applicable(name, "energy unavailable (uncertified reference)")
    if e1 is None:
        if trace.k[0] != 1:
            return not_applicable(name, "trace does not start at k = 1")
        e1 = _e1(trace)
    k = trace.k.astype(float)
    bound_theta = (alpha - 1.0) * e1 / (2.0 * step * (k + alpha - 2.0)**2)
    bound_z = np.full(len(trace), e1 / (alpha - 1.0))
    slack = np.concatenate([bound_theta - trace["theta"], bound_z - trace["z_dist"]**2])
    tol = RTOL * np.concatenate([np.maximum(bound_theta, 1e-300), np.maximum(bound_z, 1e-300)])
    ks = np.concatenate([trace.k, trace.k])
    v = _from_slacks(name, ks, slack, tol)
    if v.applicable:
        j = int(np.argmin(slack / tol))
        v.detail = "theta bound" if j < len(trace) else "z bound"
    return v


def check_partial_sums(trace: Trace, alpha: float, step: float, e1: Optional[float] = None):
    """Partial sums of ``k theta_k`` and ``k ||x_{k+1}-x_k||^2`` against closed-form bounds.

    Returns ``(theta_sum_verdict, velocity_sum_verdict, partial_sums)``.  The velocity sum
    is bounded through ``sum k d_k <= alpha(3 alpha-5) E(1) / (4s(alpha-1)(alpha-3))``,
    i.e. ``sum k ||v_k||^2 <= alpha(3 alpha-5) E(1) / (2(alpha-1)(alpha-3))``.
    """
    names = ("sum_k_theta_bound", "sum_k_velocity_bound")
    sums = {"sum_k_theta": None, "bound_sum_k_theta": None, "sum_k_vel2": None, "bound_sum_k_vel2": None}
    why = None
    if not alpha > 3:
        why = "requires alpha > 3"
    elif not _energy_available(trace):
        why = "energy unavailable (uncertified reference)"
    elif not trace.contiguous:
        why = "partial sums need every iteration from k = 1"
    if why:
        return not_applicable(names[0], why), not_applicable(names[1], why), sums
    if e1 is None:
        e1 = _e1(trace)
    k = trace.k.astype(float)
    s3 = np.cumsum(k * trace["theta"])
    s4 = np.cumsum(k * trace["velocity_norm"]**2)
    b3 = (alpha - 1.0) * e1 / (2.0 * step * (alpha - 3.0))
    b4 = alpha * (3.0 * alpha - 5.0) * e1 / (2.0 * (alpha - 1.0) * (alpha - 3.0))
    sums.update(sum_k_theta=float(s3[-1]), bound_sum_k_theta=b3, sum_k_vel2=float(s4[-1]), bound_sum_k_vel2=b4)
    v3 = _from_slacks(names[0], trace.k, b3 - s3, RTOL * max(b3, 1e-300))
    v4 = _from_slacks(names[1], trace.k, b4 - s4, RTOL * max(b4, 1e-300))
    return v3, v4, sums


def check_mechanical(trace: Trace, alpha: float, step: float) -> Verdict:
    """``theta_{k+1} + d_k <= theta_k + ((k-1)/(k+alpha-1))^2 d_{k-1}`` with ``d_0 = 0``."""
    name = "mechanical_energy"
    k = trace.k
    n = len(trace)
    if n < 2:
        return not_applicable(name, "trace too short")
    theta = trace["theta"]
    d = trace["d"]
    idx = []
    for i in range(n - 1):
        if k[i + 1] != k[i] + 1:
            continue
        if k[i] == 1 or (i > 0 and k[i - 1] == k[i] - 1):
            idx.append(i)
    if not idx:
        return not_applicable(name, "no consecutive iterations recorded")
    i = np.array(idx)
    kf = k[i].astype(float)
    d_prev = np.where(k[i] == 1, 0.0, d[np.maximum(i - 1, 0)])
    coef = ((kf - 1.0) / (kf + alpha - 1.0))**2
    slack = theta[i] + coef * d_prev - theta[i + 1] - d[i]
    theta1 = theta[0] if k[0] == 1 else 0.0
    tol = RTOL * (1.0 + abs(theta1))
    return _from_slacks(name, k[i], slack, tol)


def tail_ratio(values, ks, fraction: float = 0.2) -> tuple[float, int]:
    """``max over k >= (1-fraction) K`` divided by the global max; returns ``(ratio, k_at_tail_max)``."""
    values = np.asarray(values, dtype=float)
    ks = np.asarray(ks)
    gmax = float(np.max(values))
    tail = ks >= (1.0 - fraction) * ks[-1]
    j = int(np.argmax(np.where(tail, values, -np.inf)))
    tmax = float(values[j])
    if gmax <= 0:
        return 0.0, int(ks[j])
    return tmax / gmax, int(ks[j])


def check_rate_tails(trace: Trace, alpha: Optional[float] = None, fraction: float = 0.2,
                     threshold: float = 0.01):
    """Tail of ``k^2 theta_k`` and ``k ||x_{k+1}-x_k||`` small against their maxima.

    Returns ``(theta_verdict, velocity_verdict)``.
    """
    out = []
    for name, col in (("theta_tail", "k2_theta"), ("velocity_tail", "k_velocity")):
        if alpha is not None and not alpha > 3:
            out.append(not_applicable(name, "requires alpha > 3"))
            continue
        if len(trace) < 100:
            out.append(not_applicable(name, "trace shorter than 100 records"))
            continue
        vals = trace[col]
        if not np.all(np.isfinite(vals)):
            out.append(not_applicable(name, "non-finite values"))
            continue
        ratio, kk = tail_ratio(vals, trace.k, fraction)
        gmax = max(float(np.max(vals)), 0.0)
        tmax = ratio * gmax
        out.append(Verdict(name=name, passed=bool(ratio <= threshold), worst_slack=threshold * gmax - tmax,
                           worst_k=kk, detail=f"tail/max = {ratio:.3e}"))
    return tuple(out)


def check_lemma1_tail(trace: Trace, alpha: float, window: float = 0.2,
                      oscillation: float = 0.05, threshold: float = 0.01) -> Verdict:
    """Settling of ``k^2 ||x_{k+1}-x_k||^2 + (k+1)^2 theta_{k+1}`` towards zero."""
    name = "lemma1_tail"
    if not alpha > 3:
        return not_applicable(name, "requires alpha > 3")
    if len(trace) < 100:
        return not_applicable(name, "trace shorter than 100 records")
    q = trace["lemma1_quantity"]
    if not np.all(np.isfinite(q)):
        return not_applicable(name, "non-finite values")
    ks = trace.k
    gmax = max(float(np.max(q)), 0.0)
    tail = ks >= (1.0 - window) * ks[-1]
    qt = q[tail]
    osc = float(qt.max() - qt.min())
    tmax = float(qt.max())
    s_osc = oscillation * gmax - osc
    s_tail = threshold * gmax - tmax
    kk = int(ks[tail][np.argmax(qt)])
    passed = s_osc >= 0 and s_tail >= 0
    return Verdict(name=name, passed=bool(passed), worst_slack=min(s_osc, s_tail), worst_k=kk,
                   detail=f"oscillation/max = {osc / gmax if gmax else 0.0:.3e}, "
                          f"tail/max = {tmax / gmax if gmax else 0.0:.3e}")


def _decay_exponent(ks, values) -> float:
    ks = np.asarray(ks, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = values > 0
    if keep.sum() < 2:
        return -math.inf
    return float(np.polyfit(np.log(ks[keep]), np.log(values[keep]), 1)[0])


def check_inexact_energy(trace: Trace, alpha: float, step: float, e1: Optional[float] = None):
    """Perturbed energy bound for inexact runs.

    Checks ``E(k) <= E(1) + sum_{j<k} 2s (j+alpha-1) ||g_j|| ||z_{j+1} - x*||``
    and the boundedness of ``z_k`` it implies,
    ``||z_k - x*|| <= sqrt(E(1)/(alpha-1)) + 2s/(alpha-1) sum_{j<k} (j+alpha-1) ||g_j||``.

    Returns ``(energy_verdict, z_verdict, budget)`` where ``budget`` reports
    ``sum k ||g_k||`` and whether it looks summable: the increments
    ``k ||g_k||`` over the second half of the trace must decay faster than
    ``1/k`` (fitted log-log exponent below -1.05).
    """
    names = ("inexact_energy", "z_bounded")
    err = trace["error_norm"]
    budget = {"total": float(np.sum(trace.k * err)), "summable": None,
              "decay_exponent": None, "last_increment_ratio": None}
    why = None
    if not np.any(err > 0):
        why = "exact run"
    elif not _energy_available(trace):
        why = "energy unavailable (uncertified reference)"
    elif not trace.contiguous:
        why = "perturbed bound needs every iteration from k = 1"
    if why:
        return not_applicable(names[0], why), not_applicable(names[1], why), budget

    ks = trace.k
    inc = ks * err
    half = ks >= ks[-1] / 2.0
    expo = _decay_exponent(ks[half], inc[half])
    budget["decay_exponent"] = expo
    budget["last_increment_ratio"] = float(inc[-1] / budget["total"]) if budget["total"] > 0 else 0.0
    budget["summable"] = bool(expo < -1.05)

    if e1 is None:
        e1 = _e1(trace)
    kf = ks.astype(float)
    E = trace["energy"]
    zd = trace["z_dist"]
    # term j pairs g_j with z_{j+1}: available for j = 1..K-1
    terms = 2.0 * step * (kf[:-1] + alpha - 1.0) * err[:-1] * zd[1:]
    rhs = e1 + np.concatenate([[0.0], np.cumsum(terms)])
    v_e = _from_slacks(names[0], ks, rhs - E, RTOL * (1.0 + np.abs(rhs)))

    beta = (2.0 * step / (alpha - 1.0)) * (kf[:-1] + alpha - 1.0) * err[:-1]
    zbound = math.sqrt(e1 / (alpha - 1.0)) + np.concatenate([[0.0], np.cumsum(beta)])
    v_z = _from_slacks(names[1], ks, zbound - zd, RTOL * (1.0 + zbound),
                       detail=f"max ||z_k - x*|| = {float(np.max(zd)):.6g}")
    return v_e, v_z, budget


def check_energy_ledger(trace: Trace, alpha: float, step: float, rtol: float = 1e-12) -> Verdict:
    """Derived columns agree with their defining formulas (tamper detection)."""
    name = "ledger_consistency"
    if len(trace) == 0:
        return not_applicable(name, "empty trace")
    kf = trace.k.astype(float)
    theta = trace["theta"]
    vel = trace["velocity_norm"]
    expected = {
        "d": vel**2 / (2.0 * step),
        "k2_theta": kf**2 * theta,
        "k_velocity": kf * vel,
    }
    if _energy_available(trace):
        expected["energy"] = energy(kf, theta, trace["z_dist"], alpha, step)
    worst = (math.inf, None, "")
    passed = True
    for col, exp in expected.items():
        got = trace[col]
        scale = np.maximum(np.abs(exp), np.abs(got))
        err = np.abs(got - exp)
        tol = rtol * scale + 1e-300
        ok = err <= tol
        ok |= (scale == 0)
        if not np.all(ok):
            passed = False
        slack = tol - err
        i = int(np.argmin(slack / tol))
        if slack[i] / tol[i] < worst[0]:
            worst = (slack[i] / tol[i], i, col)
    i = worst[1]
    return Verdict(name=name, passed=passed, worst_slack=None if i is None else float(worst[0]),
                   worst_k=None if i is None else int(trace.k[i]),
                   detail=f"worst column: {worst[2]}" if not passed else "")


def fit_rate(trace, k_min: int, k_max: int, column: str = "theta") -> "RateFit":
    """Least-squares slope of ``log theta_k`` against ``log k`` over ``[k_min, k_max]``.

    The window is cut at the first nonpositive value, so exact convergence
    does not poison the fit.
    """
    if k_min < 10:
        raise InputError("k_min must be >= 10")
    if isinstance(trace, Trace):
        ks, vals = trace.k, trace[column]
    else:
        ks, vals = trace
    ks = np.asarray(ks, dtype=float)
    vals = np.asarray(vals, dtype=float)
    sel = (ks >= k_min) & (ks <= k_max)
    ks, vals = ks[sel], vals[sel]
    nonpos = np.nonzero(~(vals > 0))[0]
    if nonpos.size:
        ks, vals = ks[:nonpos[0]], vals[:nonpos[0]]
    if ks.size < 2:
        return RateFit(math.nan, math.nan, math.nan, k_min, k_max, int(ks.size))
    X = np.column_stack([np.log(ks), np.ones_like(ks)])
    coef, *_ = np.linalg.lstsq(X, np.log(vals), rcond=None)
    resid = np.log(vals) - X @ coef
    return RateFit(float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(resid**2))),
                   int(ks[0]), int(ks[-1]), int(ks.size))


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    residual: float
    k_lo: int
    k_hi: int
    points: int


# -- problem-level checks ----------------------------------------------------

def check_descent_inequality(problem: SplitProblem, step: float, samples: int = 1000, seed: int = 0,
                             centers: Sequence = ()) -> Verdict:
    """Sampled check of
    ``Theta(y - s G(y)) <= Theta(x) + <G(y), y - x> - s/2 ||G(y)||^2``.

    Pairs are drawn with a seeded PCG64 stream around ``centers`` (default:
    the origin and the reference minimizer), with spread ``1 + ||center||``.
    """
    from .solver import fb_step

    name = f"descent_inequality(s={step * problem.lipschitz:.4g}/L)"
    if step > 1.0 / problem.lipschitz:
        return not_applicable(name, "requires s <= 1/L")
    rng = np.random.default_rng(seed)
    n = problem.dimension
    pts = [np.zeros(n)] + [as_point(c, n) for c in centers]
    if problem.reference_minimizer is not None:
        pts.append(problem.reference_minimizer)
    slacks = np.empty(samples)
    tols = np.empty(samples)
    for i in range(samples):
        cy = pts[rng.integers(len(pts))]
        cx = pts[rng.integers(len(pts))]
        y = cy + (1.0 + np.linalg.norm(cy)) * rng.standard_normal(n)
        x = cx + (1.0 + np.linalg.norm(cx)) * rng.standard_normal(n)
        if i % 10 == 0:
            # pair sharing the point exercises the tight end of the inequality
            x = y.copy()
        x_plus = fb_step(problem, step, y)
        G = (y - x_plus) / step
        tx = problem.theta(x)
        lhs = problem.theta(x_plus)
        rhs = tx + float(np.dot(G, y - x)) - 0.5 * step * float(np.dot(G, G))
        slacks[i] = rhs - lhs if np.isfinite(tx) else math.inf
        tols[i] = RTOL * (1.0 + abs(tx)) if np.isfinite(tx) else 1.0
    fin = np.isfinite(slacks)
    slacks[~fin] = 1.0
    return _from_slacks(name, np.arange(samples), slacks, tols)


def solution_set_distance(problem: SplitProblem, x) -> Optional[float]:
    """Distance from ``x`` to the stored affine solution set, if the problem has one."""
    basis = problem.info.get("solution_basis")
    offset = problem.info.get("solution_offset")
    if basis is None or offset is None:
        return None
    r = as_point(x, problem.dimension) - offset
    B = np.asarray(basis, dtype=float)
    return float(np.linalg.norm(r - B @ (B.T @ r)))


def check_iterate_convergence(iterates, problem: SplitProblem, step: float, alpha: float,
                              tail_fraction: float = 0.1, velocity_tail: Optional[Verdict] = None,
                              cauchy_tol: float = 1e-4, residual_tol: float = 1e-6) -> list:
    """Finite-dimensional convergence of ``x_k``: Cauchy tail plus stationarity of the limit.

    Returns a list of verdicts: ``iterate_cauchy`` and, when the problem stores
    its solution set, ``solution_set_distance``.
    """
    from .solver import gradient_mapping

    name = "iterate_cauchy"
    if not alpha > 3:
        return [not_applicable(name, "requires alpha > 3")]
    if iterates is None or len(iterates) < 10:
        return [not_applicable(name, "iterates unavailable")]
    if velocity_tail is not None and velocity_tail.passed is False:
        return [not_applicable(name, "velocity tail check failed")]
    X = np.asarray(iterates)
    xK = X[-1]
    start = int(math.floor((1.0 - tail_fraction) * (len(X) - 1)))
    dev = np.linalg.norm(X[start:] - xK, axis=1)
    j = int(np.argmax(dev))
    bound = cauchy_tol * (1.0 + float(np.linalg.norm(xK)))
    res = float(np.linalg.norm(gradient_mapping(problem, step, xK)))
    passed = bool(dev[j] <= bound and res <= residual_tol)
    out = [Verdict(name=name, passed=passed, worst_slack=min(bound - float(dev[j]), residual_tol - res),
                   worst_k=start + j + 1, detail=f"tail deviation {dev[j]:.3e}, residual {res:.3e}")]
    dist = solution_set_distance(problem, xK)
    if dist is not None:
        out.append(Verdict(name="solution_set_distance", passed=bool(dist <= cauchy_tol),
                           worst_slack=cauchy_tol - dist, worst_k=len(X),
                           detail=f"distance {dist:.3e}"))
    return out


# -- report ------------------------------------------------------------------

@dataclass
class CertificateReport:
    verdicts: list
    partial_sums: dict
    rate: dict
    certified: bool
    notes: list = field(default_factory=list)
    error_budget: Optional[dict] = None

    def verdict(self, name: str) -> Verdict:
        for v in self.verdicts:
            if v.name == name:
                return v
        raise KeyError(name)

    @property
    def failures(self) -> list:
        return [v for v in self.verdicts if v.passed is False]

    def to_dict(self) -> dict:
        return {
            "verdicts": [v.to_dict() for v in self.verdicts],
            "partial_sums": {k: _finite_or_none(v) for k, v in self.partial_sums.items()},
            "rate": {k: (_finite_or_none(v) if isinstance(v, float) else v) for k, v in self.rate.items()},
            "certified": self.certified,
            "notes": list(self.notes),
            "error_budget": None if self.error_budget is None else
            {k: (_finite_or_none(v) if isinstance(v, float) else v) for k, v in self.error_budget.items()},
        }

    def summary(self) -> str:
        lines = [f"{'check':<34} {'status':<6} {'worst_slack':>14} {'worst_k':>9}"]
        for v in self.verdicts:
            status = "n/a" if v.passed is None else ("PASS" if v.passed else "FAIL")
            ws = "" if v.worst_slack is None else f"{v.worst_slack:.4e}"
            wk = "" if v.worst_k is None else str(v.worst_k)
            lines.append(f"{v.name:<34} {status:<6} {ws:>14} {wk:>9}  {v.detail}")
        lines.append(f"certified: {'yes' if self.certified else 'no'}")
        lines.extend(f"note: {n}" for n in self.notes)
        return "\n".join(lines)


def rate_summary(trace: Trace, slope_window=(100, 10_000), fraction: float = 0.2) -> dict:
    K = int(trace.k[-1]) if len(trace) else 0
    lo, hi = slope_window
    hi = min(hi, K)
    fit = fit_rate(trace, lo, hi) if hi > lo and len(trace) else RateFit(math.nan, math.nan, math.nan, lo, hi, 0)
    out = {"slope_theta": fit.slope, "slope_window": [int(lo), int(hi)], "slope_residual": fit.residual,
           "tail_ratio_k2theta": math.nan, "tail_ratio_kvel": math.nan}
    if len(trace) and np.all(np.isfinite(trace["k2_theta"])):
        out["tail_ratio_k2theta"] = tail_ratio(trace["k2_theta"], trace.k, fraction)[0]
        out["tail_ratio_kvel"] = tail_ratio(trace["k_velocity"], trace.k, fraction)[0]
    return out


def build_report(trace: Trace, alpha: float, step: float, *, method: str = "accelerated",
                 inexact: bool = False, reference_certified: bool = True,
                 problem: Optional[SplitProblem] = None, iterates=None,
                 z_consistency: Optional[tuple] = None, descent_samples: int = 0, seed: int = 0,
                 slope_window=(100, 10_000)) -> CertificateReport:
    """Run every applicable checker over a trace and aggregate the verdicts.

    ``problem``/``iterates`` enable the checks that need more than the trace
    (descent inequality, iterate convergence); ``z_consistency`` is the
    ``(max gap, max norm)`` pair recorded by the solver.
    """
    verdicts = [check_energy_ledger(trace, alpha, step)]
    notes = []
    sums = {"sum_k_theta": None, "bound_sum_k_theta": None, "sum_k_vel2": None, "bound_sum_k_vel2": None}
    budget = None
    accelerated = method == "accelerated"

    if not reference_certified:
        notes.append("uncertified reference: bounds involving x* skipped")

    if accelerated and not inexact:
        verdicts.append(check_energy_decrease(trace, alpha, step))
        verdicts.append(check_pointwise_bounds(trace, alpha, step))
        v3, v4, sums = check_partial_sums(trace, alpha, step)
        verdicts += [v3, v4]
        verdicts.append(check_mechanical(trace, alpha, step))
    elif accelerated and inexact:
        v_e, v_z, budget = check_inexact_energy(trace, alpha, step)
        verdicts += [v_e, v_z]
        if budget.get("summable") is False:
            notes.append("error budget sum k||g_k|| not summable: run not certified")

    rate_checks_ok = accelerated and reference_certified and (not inexact or (budget or {}).get("summable"))
    if rate_checks_ok:
        verdicts.append(check_lemma1_tail(trace, alpha))
        vt, vv = check_rate_tails(trace, alpha)
        verdicts += [vt, vv]
        if iterates is not None and problem is not None:
            verdicts += check_iterate_convergence(iterates, problem, step, alpha, velocity_tail=vv)

    if accelerated and z_consistency is not None:
        gap, znorm = z_consistency
        tol = 1e-8 * (1.0 + znorm)
        verdicts.append(Verdict(name="z_dual_formula", passed=bool(gap <= tol), worst_slack=tol - gap,
                                detail=f"max gap {gap:.3e}"))

    if problem is not None and descent_samples > 0:
        verdicts.append(check_descent_inequality(problem, step, descent_samples, seed))

    if not accelerated:
        notes.append("baseline run: no certificate claims")

    applicable = [v for v in verdicts if v.applicable]
    certified = (accelerated and reference_certified and bool(applicable)
                 and all(v.passed for v in applicable)
                 and (budget is None or budget.get("summable") is not False))
    return CertificateReport(verdicts=verdicts, partial_sums=sums,
                             rate=rate_summary(trace, slope_window), certified=certified,
                             notes=notes, error_budget=budget)
