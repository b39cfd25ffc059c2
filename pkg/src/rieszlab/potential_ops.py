"""Capacity, equilibrium and harmonic measures, balayage, H_z and Wiener sums."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernel as kn
from .geometry import (
    DiscreteMeasure, EmptyDiscretization, PointCloud, SetDescriptor, Slice, Truncate, _AxialBody,
    PROFILE_FLOOR, annulus_decompose, discretize, kelvin_invert_cloud, kelvin_transform_measure,
)
from .solvers import QpProblem, minimize_cone

DEFAULT_LADDER = (10.0, 20.0, 40.0, 80.0)
WIENER_MODES = ("irregular_test", "thin_at_infinity_test", "ultra_test")


def _ctx(cloud, alpha, ctx):
    if ctx is not None:
        if ctx.cloud is not cloud or ctx.alpha != alpha:
            raise ValueError("kernel context does not match cloud/alpha")
        return ctx
    return kn.assemble_kernel(cloud, alpha)


# ---------------------------------------------------------------------------
# equilibrium measure and capacity
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EquilibriumResult:
    gamma: DiscreteMeasure
    capacity: float
    potential_on_nodes: np.ndarray
    kkt_residual: float
    energy: float
    objective: float
    converged: bool
    iterations: int = 0
    trace: list = field(default_factory=list)

    def potential(self, points, alpha):
        return kn.measure_potential(self.gamma, points, alpha)


def equilibrium_measure(cloud: PointCloud, alpha: float, tol: float = 1e-8,
                        max_iter: int = 200_000, ctx: kn.KernelContext | None = None,
                        trace: bool = False) -> EquilibriumResult:
    """Minimize I(mu) - 2 mu(R^n) over nonnegative measures on the cloud."""
    ctx = _ctx(cloud, alpha, ctx)
    sol = minimize_cone(QpProblem(ctx, np.ones(cloud.size), "cone", tol, max_iter), trace=trace)
    g = sol.masses
    U = ctx.matrix @ g.masses
    return EquilibriumResult(g, g.total, U, sol.kkt_residual, float(g.masses @ U), sol.objective,
                             sol.converged, sol.iterations, sol.trace)


def capacity(target, alpha: float, resolution: int | None = None, boundary: bool = False,
             **kw) -> float:
    """Capacity of a cloud, or of a descriptor discretized at ``resolution``.

    Descriptors with no sample points (for instance an annulus missing the
    set) have capacity 0.
    """
    if isinstance(target, SetDescriptor):
        if resolution is None:
            raise ValueError("a resolution is needed to discretize a descriptor")
        try:
            target = discretize(target, resolution, boundary)
        except EmptyDiscretization:
            return 0.0
    return equilibrium_measure(target, alpha, **kw).capacity


# ---------------------------------------------------------------------------
# balayage
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BalayageResult:
    swept: DiscreteMeasure
    source: dict
    source_mass: float
    mass_ratio: float
    potential_match_residual: float
    potential_excess_max: float
    kkt_residual: float
    converged: bool
    trace: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "source_mass": self.source_mass,
            "swept_mass": self.swept.total,
            "mass_ratio": self.mass_ratio,
            "potential_match_residual": self.potential_match_residual,
            "potential_excess_max": self.potential_excess_max,
            "kkt_residual": self.kkt_residual,
            "converged": self.converged,
            "swept_masses": self.swept.masses.tolist(),
        }


def source_potential(source, target_cloud: PointCloud, alpha: float, mass: float = 1.0,
                     ctx: kn.KernelContext | None = None):
    """Potential of the source at target nodes and a description of the source."""
    if isinstance(source, DiscreteMeasure):
        if source.cloud is target_cloud:
            K = ctx.matrix if ctx is not None else kn.assemble_kernel(target_cloud, alpha).matrix
            return K @ source.masses, {"kind": "measure_on_target", "nodes": source.cloud.size}, source.total
        Kx = kn.cross_kernel(target_cloud.nodes, source.cloud.nodes, alpha)
        return Kx @ source.masses, {"kind": "measure", "nodes": source.cloud.size}, source.total
    z = np.asarray(source, dtype=float).reshape(-1)
    if z.size != target_cloud.dimension:
        raise ValueError("point source has the wrong dimension")
    r = np.linalg.norm(target_cloud.nodes - z, axis=1)
    if np.any(r == 0):
        raise ValueError("point source coincides with a target node; its potential is undefined there")
    if not mass > 0:
        raise ValueError("point source mass must be positive")
    return mass * r ** (alpha - target_cloud.dimension), {"kind": "point", "z": z.tolist(), "mass": mass}, mass


def balayage(source, target_cloud: PointCloud, alpha: float, mass: float = 1.0, tol: float = 1e-8,
             max_iter: int = 200_000, ctx: kn.KernelContext | None = None,
             trace: bool = False) -> BalayageResult:
    """Sweep a discrete measure or a point mass onto the target cloud.

    Solved as the cone problem with b_i = U^source(x_i).  The match residual
    is measured where it must vanish: the deficit max(0, b - K mu) over all
    nodes and |K mu - b| on the support.  ``potential_excess_max`` reports how
    far K mu exceeds b off the support.
    """
    ctx = _ctx(target_cloud, alpha, ctx)
    b, desc, smass = source_potential(source, target_cloud, alpha, mass, ctx)
    sol = minimize_cone(QpProblem(ctx, b, "cone", tol, max_iter), trace=trace)
    mu = sol.masses
    g = ctx.matrix @ mu.masses - b
    supp = np.zeros(target_cloud.size, bool)
    supp[sol.support] = True
    match = max(float(np.max(-g, initial=0.0)), float(np.max(np.abs(g[supp]), initial=0.0)))
    excess = float(np.max(g[~supp], initial=0.0))
    ratio = mu.total / smass if smass > 0 else 0.0
    return BalayageResult(mu, desc, smass, ratio, match, excess, sol.kkt_residual, sol.converged, sol.trace)


def harmonic_measure(z, target_cloud: PointCloud, alpha: float, **kw) -> BalayageResult:
    """Balayage of the unit point mass at z onto the target cloud."""
    return balayage(np.asarray(z, float), target_cloud, alpha, 1.0, **kw)


def kelvin_harmonic_measure(y, target_cloud: PointCloud, alpha: float, **kw) -> DiscreteMeasure:
    """Harmonic measure at y built as the Kelvin transform of the equilibrium measure of the inverse cloud."""
    inv = kelvin_invert_cloud(target_cloud, y)
    eq = equilibrium_measure(inv, alpha, **kw)
    return kelvin_transform_measure(eq.gamma, y, alpha)


# ---------------------------------------------------------------------------
# H_z over truncation ladders
# ---------------------------------------------------------------------------

def extrapolate(radii: Sequence[float], values: Sequence[float]):
    """Limit of values along an increasing ladder of truncation radii.

    Identical values are returned as is.  Three or more rungs whose successive
    differences shrink geometrically are accelerated with Aitken's delta^2;
    otherwise two rungs are combined by Richardson extrapolation in 1/R.
    """
    v = np.asarray(values, float)
    R = np.asarray(radii, float)
    if v.size == 0:
        return math.nan, "none"
    if v.size == 1:
        return float(v[0]), "single"
    if np.allclose(v, v[-1], rtol=1e-12, atol=0.0):
        return float(v[-1]), "exact"
    if v.size >= 3:
        d1, d2 = v[-2] - v[-3], v[-1] - v[-2]
        if d1 != 0 and 0 < d2 / d1 < 0.95:
            r = d2 / d1
            return float(v[-1] + d2 * r / (1 - r)), "aitken"
    r1, r2 = R[-2], R[-1]
    return float((r2 * v[-1] - r1 * v[-2]) / (r2 - r1)), "richardson_1/R"


@dataclass(frozen=True, eq=False)
class HValueResult:
    value: float
    route_mass: float
    route_potential: float
    ladder: list
    harmonic_mass: list
    equilibrium_potential: list
    node_counts: list
    method_mass: str
    method_potential: str
    relative_gap: float
    agree: bool
    inconclusive: bool

    def __float__(self):
        return float(self.value)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "value", "route_mass", "route_potential", "ladder", "harmonic_mass", "equilibrium_potential",
            "node_counts", "method_mass", "method_potential", "relative_gap", "agree", "inconclusive")}


def truncation_clouds(descriptor: SetDescriptor, ladder: Sequence[float], resolution: int,
                      boundary: bool = False) -> list:
    """Discretize A ∩ B(0, R) for every rung, reusing clouds that coincide."""
    out, last = [], None
    for R in ladder:
        if descriptor.bounding_radius() <= R and last is not None and last[0] >= descriptor.bounding_radius():
            out.append(last[1])
            continue
        c = discretize(Truncate(descriptor, float(R)), resolution, boundary)
        out.append(c)
        last = (R, c)
    return out


def h_value(z, descriptor: SetDescriptor, alpha: float, truncation_ladder: Sequence[float] = DEFAULT_LADDER,
            resolution: int = 8, boundary: bool = False, cross_tol: float = 0.02, tol: float = 1e-8,
            max_iter: int = 200_000) -> HValueResult:
    """H_z = 1/mass(eps_z^A), with the cross-check 1/U^{gamma_A}(z).

    For unbounded sets both quantities are computed on A ∩ B(0,R) for each
    ladder rung and extrapolated in R.
    """
    ladder = [float(R) for R in truncation_ladder]
    if any(b <= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("truncation ladder must be strictly increasing")
    z = np.asarray(z, float)
    clouds = truncation_clouds(descriptor, ladder, resolution, boundary)
    masses, pots, counts = [], [], []
    cache = {}
    for c in clouds:
        if id(c) not in cache:
            ctx = kn.assemble_kernel(c, alpha)
            hm = harmonic_measure(z, c, alpha, tol=tol, max_iter=max_iter, ctx=ctx)
            eq = equilibrium_measure(c, alpha, tol=tol, max_iter=max_iter, ctx=ctx)
            cache[id(c)] = (hm.swept.total, float(kn.measure_potential(eq.gamma, z[None, :], alpha)[0]))
        m, u = cache[id(c)]
        masses.append(m)
        pots.append(u)
        counts.append(c.size)
    mlim, meth_m = extrapolate(ladder, masses)
    ulim, meth_u = extrapolate(ladder, pots)
    h1 = 1.0 / mlim if mlim > 0 else math.inf
    h2 = 1.0 / ulim if ulim > 0 else math.inf
    gap = abs(h1 - h2) / max(abs(h1), 1e-300)
    unbounded = not descriptor.bounded or descriptor.bounding_radius() > ladder[0]
    inconclusive = bool(unbounded and len(ladder) < 2 and meth_m != "exact")
    return HValueResult(h1, h1, h2, ladder, masses, pots, counts, meth_m, meth_u, gap,
                        bool(gap <= cross_tol), inconclusive)


# ---------------------------------------------------------------------------
# Wiener-type series
# ---------------------------------------------------------------------------

def thin_cylinder_capacity(length: float, log_radius: float) -> float:
    """Newtonian capacity asymptotic L / (2 ln(L/rho)) of a slender tube."""
    lr = math.log(length) - log_radius
    if lr <= 0:
        raise ValueError("surrogate needs rho < L")
    return length / (2 * lr)


@dataclass(frozen=True, eq=False)
class WienerReport:
    mode: str
    ratio: float
    records: list
    partial_sums: list
    tail_ratios: list
    verdict: str
    delta: float

    @property
    def terms(self):
        return [r["term"] for r in self.records]

    def to_dict(self) -> dict:
        return {"mode": self.mode, "ratio": self.ratio, "records": self.records,
                "partial_sums": self.partial_sums, "tail_ratios": self.tail_ratios,
                "verdict": self.verdict, "delta": self.delta}


def _slice_axial_range(sl: Slice):
    body = sl.inner
    if not isinstance(body, _AxialBody) or not np.allclose(body.axis, (1, 0, 0)):
        return None
    if not np.allclose(sl.center[1:], 0.0):
        return None
    a = max(body.x1_min, sl.center[0] + sl.r_in)
    b = min(body.x1_max, sl.center[0] + sl.r_out)
    return a, b


def _slice_capacity(sl: Slice, alpha, resolution, boundary, tol, max_iter):
    """Capacity of one annular slice and the method used."""
    rng = _slice_axial_range(sl)
    if rng is not None:
        a, b = rng
        if b <= a:
            return 0.0, "empty", 0
        xs = np.linspace(a, b, 513)
        lmax = float(np.max(sl.inner.log_rho(xs)))
        if lmax < math.log(PROFILE_FLOOR):
            if alpha != 2 or sl.ambient_dim != 3:
                raise ValueError("the thin-tube surrogate is Newtonian (alpha=2, n=3) only")
            return thin_cylinder_capacity(b - a, lmax), "analytic_surrogate", 0
    try:
        cloud = discretize(sl, resolution, boundary)
    except EmptyDiscretization:
        return 0.0, "empty", 0
    eq = equilibrium_measure(cloud, alpha, tol=tol, max_iter=max_iter)
    return eq.capacity, "qp", cloud.size


def tail_verdict(terms: Sequence[float], delta: float = 0.05):
    """Finite proxy for convergence of a positive series from its last half.

    converging: every tail ratio t_{j+1}/t_j <= 1 - delta (or the tail vanishes);
    diverging:  every tail ratio >= 1 + delta, or the tail terms do not decay
                at all (all ratios >= 1 - delta and the last term is at least
                (1 - delta) times the first tail term);
    otherwise inconclusive.
    """
    t = np.asarray(terms, float)
    if t.size == 0 or np.all(t == 0):
        return "series_converging", []
    start = t.size // 2
    tail = t[start:]
    if tail.size < 2:
        return "inconclusive", []
    if np.all(tail == 0):
        return "series_converging", []
    if np.any(tail[:-1] == 0):
        nz = np.flatnonzero(tail)
        return ("series_converging" if nz[-1] < tail.size - 1 else "inconclusive"), []
    ratios = (tail[1:] / tail[:-1]).tolist()
    if all(r <= 1 - delta for r in ratios):
        return "series_converging", ratios
    if all(r >= 1 + delta for r in ratios):
        return "series_diverging", ratios
    if all(r >= 1 - delta for r in ratios) and tail[-1] >= (1 - delta) * tail[0]:
        return "series_diverging", ratios
    return "inconclusive", ratios


def wiener_classify(descriptor: SetDescriptor, y, ratio: float, j_range: Sequence[int], mode: str,
                    alpha: float = 2.0, resolution: int = 4, boundary: bool = True, delta: float = 0.05,
                    tol: float = 1e-8, max_iter: int = 200_000) -> WienerReport:
    """Evaluate the Wiener-type series of the given mode term by term.

    irregular_test:         A_j on ratio^{j+1} < |x-y| <= ratio^j, terms c_j / ratio^{j(n-alpha)}
    ultra_test:             A_j on ratio^{j+1} <= |x-y| < ratio^j, terms c_j / ratio^{2j(n-alpha)}
    thin_at_infinity_test:  A_j on ratio^j <= |x-y| < ratio^{j+1}, terms c_j / ratio^{j(n-alpha)}
    """
    if mode not in WIENER_MODES:
        raise ValueError(f"mode must be one of {WIENER_MODES}")
    if ratio == 1:
        raise ValueError("ratio must differ from 1")
    if mode == "thin_at_infinity_test":
        if not ratio > 1:
            raise ValueError("thin_at_infinity_test needs ratio > 1")
        slices = annulus_decompose(descriptor, y, ratio, j_range, "expanding", "inner")
    else:
        if not 0 < ratio < 1:
            raise ValueError(f"{mode} needs ratio in (0, 1)")
        slices = annulus_decompose(descriptor, y, ratio, j_range, "shrinking",
                                   "inner" if mode == "ultra_test" else "outer")
    n = descriptor.ambient_dim
    power = (2 if mode == "ultra_test" else 1) * (n - alpha)
    records = []
    for j, sl in zip(j_range, slices):
        c, method, nodes = _slice_capacity(sl, alpha, resolution, boundary, tol, max_iter)
        records.append({"j": int(j), "capacity": c, "term": c / ratio ** (j * power),
                        "method": method, "nodes": nodes, "r_in": sl.r_in, "r_out": sl.r_out})
    partial = np.cumsum([r["term"] for r in records]).tolist()
    verdict, ratios = tail_verdict([r["term"] for r in records], delta)
    return WienerReport(mode, ratio, records, partial, ratios, verdict, delta)


def tube_cloud(length: float, radius: float, stations: int, x1_start: float = 1.0) -> PointCloud:
    """Straight thin tube as a row of tube cells on the x1 axis."""
    dx = length / stations
    x = x1_start + dx * (np.arange(stations) + 0.5)
    X = np.c_[x, np.zeros(stations), np.zeros(stations)]
    return PointCloud(X, np.full(stations, 2 * np.pi * radius * dx), np.full(stations, radius),
                      np.ones(stations, int), np.full(stations, dx), "tube")


def surrogate_check(aspect_ratios: Sequence[float] = (1e-2, 1e-3, 1e-4), length: float = 1.0,
                    stations: int = 200, ring_resolution: int = 2, tol: float = 1e-8) -> list:
    """Thin-tube surrogate against QP capacities of straight tubes with radius rho = ratio * L.

    Each tube is solved as a row of tube cells; where the surface can be
    resolved with a few thousand nodes (rho/L >= 1e-2) a ring-resolved
    surface cloud is solved as well.
    """
    from .geometry import HalfCylinder
    rows = []
    for a in aspect_ratios:
        rho = a * length
        qp = equilibrium_measure(tube_cloud(length, rho, stations), 2.0, tol=tol).capacity
        sur = thin_cylinder_capacity(length, math.log(rho))
        row = {"aspect_ratio": a, "stations": stations, "qp_tube": qp, "surrogate": sur,
               "relative_gap": abs(sur - qp) / qp, "qp_rings": None, "nodes_rings": None}
        if a >= 1e-2:
            cloud = discretize(HalfCylinder(rho, 1.0, 1.0 + length), ring_resolution, boundary=True)
            if cloud.size <= kn.NODE_CAP:
                row["qp_rings"] = equilibrium_measure(cloud, 2.0, tol=tol).capacity
                row["nodes_rings"] = cloud.size
        rows.append(row)
    return rows
