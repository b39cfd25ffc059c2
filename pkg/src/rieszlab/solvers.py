"""Deterministic solvers for min mu^T K mu - 2 b^T mu over the cone or the simplex.

Both solvers run an accelerated projected gradient phase (step 1/L with L the
largest Gershgorin row sum of K, momentum restarted whenever the objective
would increase, so the recorded objective is nonincreasing), then an
active-set polish: the stationarity system restricted to the current support
is solved exactly, blocking indices are dropped along the segment towards
that solution and the most violated KKT index is added, until the KKT
residual is below tolerance.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .geometry import DiscreteMeasure
from .kernel import KernelContext

MASS_FLOOR = 1e-12
CONSTRAINTS = ("cone", "simplex")


@dataclass(frozen=True, eq=False)
class QpProblem:
    ctx: KernelContext
    b: np.ndarray
    constraint: str = "cone"
    tol: float = 1e-8
    max_iter: int = 200_000
    mass_floor: float = MASS_FLOOR

    def __post_init__(self):
        b = np.array(self.b, dtype=float).reshape(-1)
        if b.size != self.ctx.cloud.size:
            raise ValueError("linear term length differs from the node count")
        if not np.all(np.isfinite(b)):
            raise ValueError("linear term contains NaN or inf")
        if self.constraint not in CONSTRAINTS:
            raise ValueError(f"constraint must be one of {CONSTRAINTS}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be positive")
        if not np.all(np.isfinite(self.ctx.matrix)):
            raise ValueError("kernel matrix contains NaN or inf")
        b.setflags(write=False)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True, eq=False)
class QpSolution:
    masses: DiscreteMeasure
    objective: float
    kkt_residual: float
    multiplier: float
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)
    support: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))

    def write_trace(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "objective", "kkt_residual"])
            for row in self.trace:
                w.writerow([row[0], repr(row[1]), repr(row[2])])


def objective(K, b, mu) -> float:
    return float(mu @ (K @ mu) - 2 * b @ mu)


def kkt_residual(K, b, mu, constraint: str, multiplier: float = 0.0,
                 mass_floor: float = MASS_FLOOR) -> float:
    """Largest violation of the KKT conditions at mu.

    cone:    g = K mu - b must be >= 0 everywhere and 0 on the support;
    simplex: g >= multiplier everywhere, = multiplier on the support, and
             the masses must sum to one.
    """
    g = K @ mu - b
    total = mu.sum()
    supp = mu > mass_floor * total if total > 0 else np.zeros(mu.size, bool)
    shift = multiplier if constraint == "simplex" else 0.0
    r = max(0.0, float(np.max(shift - g)))
    if np.any(supp):
        r = max(r, float(np.max(np.abs(g[supp] - shift))))
    if constraint == "simplex":
        r = max(r, abs(float(total) - 1.0))
    return r


def _residual_from(g, x, constraint):
    total = x.sum()
    supp = x > MASS_FLOOR * total if total > 0 else np.zeros(x.size, bool)
    shift = float(x @ g / total) if constraint == "simplex" else 0.0
    r = max(0.0, float(np.max(shift - g)))
    if np.any(supp):
        r = max(r, float(np.max(np.abs(g[supp] - shift))))
    return r


def simplex_multiplier(K, b, mu) -> float:
    """The constant C = mu^T (K mu - b) / sum(mu) shared by the support."""
    return float(mu @ (K @ mu - b) / mu.sum())


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum x = 1} (sort-based)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    cond = u - css / k > 0
    r = k[cond][-1]
    theta = css[r - 1] / r
    return np.maximum(v - theta, 0.0)


def _project(v, constraint):
    return np.maximum(v, 0.0) if constraint == "cone" else project_simplex(v)


def _apg(K, b, x0, constraint, iters, tol, trace):
    L = 2.0 * float(np.max(np.abs(K).sum(1)))
    step = 1.0 / L
    x = x0.copy()
    Kx = K @ x
    f = float(x @ Kx - 2 * b @ x)
    y, t = x.copy(), 1.0
    Ky = Kx.copy()
    done = 0
    for k in range(iters):
        xn = _project(y - step * 2.0 * (Ky - b), constraint)
        Kxn = K @ xn
        fn = float(xn @ Kxn - 2 * b @ xn)
        if fn > f:
            # restart from x with a plain projected gradient step (monotone)
            xn = _project(x - step * 2.0 * (Kx - b), constraint)
            Kxn = K @ xn
            fn = float(xn @ Kxn - 2 * b @ xn)
            t = 1.0
            if fn > f:
                xn, Kxn, fn = x, Kx, f
        tn = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        y = xn + ((t - 1) / tn) * (xn - x)
        if constraint == "cone":
            y = np.maximum(y, 0.0)
        Ky = K @ y
        moved = float(np.max(np.abs(xn - x))) if k else np.inf
        x, Kx, f, t = xn, Kxn, fn, tn
        done = k + 1
        if trace is not None:
            trace.append((len(trace), f, _residual_from(Kx - b, x, constraint)))
        if moved < tol * 1e-3 * max(1.0, float(np.max(np.abs(x)))):
            break
    return x, done


def _solve_support(K, b, S, constraint):
    """Stationary point of the problem restricted to S, ignoring signs."""
    KS = K[np.ix_(S, S)]
    try:
        cf = cho_factor(KS, lower=True, check_finite=False)
        u = cho_solve(cf, b[S], check_finite=False)
        if constraint == "cone":
            return u, 0.0
        v = cho_solve(cf, np.ones(S.size), check_finite=False)
    except LinAlgError:
        u = np.linalg.lstsq(KS, b[S], rcond=None)[0]
        if constraint == "cone":
            return u, 0.0
        v = np.linalg.lstsq(KS, np.ones(S.size), rcond=None)[0]
    nu = (1.0 - u.sum()) / v.sum()
    return u + nu * v, nu


def _polish(K, b, x, constraint, tol, mass_floor, max_rounds):
    """Primal active-set iterations starting from a feasible point x."""
    N = x.size
    x = x.copy()
    total = x.sum()
    active = x > mass_floor * max(total, 1.0)
    if constraint == "simplex" and not active.any():
        active[np.argmin(np.diag(K) - 2 * b)] = True
        x = np.zeros(N)
        x[active] = 1.0
    if constraint == "cone" and not active.any():
        g = K @ x - b
        if g.min() >= -tol:
            return x, 0
        active[np.argmin(g)] = True
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        S = np.flatnonzero(active)
        z, nu = _solve_support(K, b, S, constraint)
        if np.all(z > 0):
            x = np.zeros(N)
            x[S] = z
            g = K @ x - b
            shift = nu if constraint == "simplex" else 0.0
            viol = shift - g
            viol[S] = -np.inf
            j = int(np.argmax(viol))
            if viol[j] <= tol:
                return x, rounds
            active[j] = True
            continue
        # move from x towards z until the first support mass hits zero
        xs = x[S]
        neg = z <= 0
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(neg, xs / (xs - z), np.inf)
        s = float(np.clip(ratios.min(), 0.0, 1.0))
        xs = xs + s * (z - xs)
        drop = neg & (ratios <= s * (1 + 1e-12) + 1e-300)
        drop |= xs <= 0
        xs[drop] = 0.0
        x = np.zeros(N)
        x[S] = xs
        active[S[drop]] = False
        if not active.any():
            if constraint == "cone":
                g = K @ x - b
                active[np.argmin(g)] = True
            else:
                active[np.argmin(np.diag(K) - 2 * b)] = True
    return x, rounds


def _solve(problem: QpProblem, trace_on: bool) -> QpSolution:
    ctx, b, cons = problem.ctx, problem.b, problem.constraint
    K = ctx.matrix
    N = b.size
    trace = [] if trace_on else None
    if cons == "cone" and np.all(b <= 0):
        x = np.zeros(N)
        it = 0
    elif N == 1:
        x = np.ones(1) if cons == "simplex" else np.array([max(b[0], 0.0) / K[0, 0]])
        it = 0
    else:
        x0 = np.full(N, 1.0 / N) if cons == "simplex" else np.zeros(N)
        budget = int(problem.max_iter)
        warm = min(budget, max(50, 20 * int(math.sqrt(N))))
        x, it = _apg(K, b, x0, cons, warm, problem.tol, trace)
        rounds = 4 * N + 10
        x, r = _polish(K, b, x, cons, problem.tol, problem.mass_floor, rounds)
        it += r
        res = _residual(K, b, x, cons, problem.mass_floor)
        if res > problem.tol and it < budget:
            # fall back to a long gradient run followed by another polish
            x, more = _apg(K, b, x, cons, budget - it, problem.tol * 1e-2, trace)
            x, r = _polish(K, b, x, cons, problem.tol, problem.mass_floor, rounds)
            it += more + r
    x = np.maximum(x, 0.0)
    if cons == "simplex":
        x = x / x.sum()
    mult = simplex_multiplier(K, b, x) if cons == "simplex" else 0.0
    res = kkt_residual(K, b, x, cons, mult, problem.mass_floor)
    obj = objective(K, b, x)
    if trace is not None:
        trace.append((len(trace), obj, res))
    supp = np.flatnonzero(x > problem.mass_floor * x.sum()) if x.sum() > 0 else np.zeros(0, np.int64)
    return QpSolution(DiscreteMeasure(ctx.cloud, x), obj, res, mult, int(it), bool(res <= problem.tol),
                      trace or [], supp)


def _residual(K, b, x, cons, floor):
    x = np.maximum(x, 0.0)
    if cons == "simplex":
        x = x / x.sum()
        return kkt_residual(K, b, x, cons, simplex_multiplier(K, b, x), floor)
    return kkt_residual(K, b, x, cons, 0.0, floor)


def minimize_cone(problem: QpProblem, trace: bool = False) -> QpSolution:
    if problem.constraint != "cone":
        raise ValueError("minimize_cone needs a cone problem")
    return _solve(problem, trace)


def minimize_simplex(problem: QpProblem, trace: bool = False) -> QpSolution:
    if problem.constraint != "simplex":
        raise ValueError("minimize_simplex needs a simplex problem")
    return _solve(problem, trace)


def solve(problem: QpProblem, trace: bool = False) -> QpSolution:
    return _solve(problem, trace)
