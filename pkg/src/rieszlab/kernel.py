"""Riesz kernel matrices, potentials and energies of discrete measures.

Off-diagonal entries are the exact kernel |x_i - x_j|^(alpha-n).  The
diagonal entry of node i is the mean kernel interaction of a uniform cell
around the node (a ball or disk of radius ``cell_radius``, a segment of half
length ``cell_radius``, or a thin cylindrical tube), which keeps the discrete
energy a consistent quadrature of the continuous one.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, special
from scipy.spatial import cKDTree

from . import _backend
from .geometry import DiscreteMeasure, PointCloud

NODE_CAP = 20000


def check_alpha(alpha: float, n: int) -> None:
    if not (0 < alpha <= 2) or not alpha < n:
        raise ValueError(f"alpha must satisfy 0 < alpha <= 2 and alpha < n (got alpha={alpha}, n={n})")


# ---------------------------------------------------------------------------
# cell self-interaction constants
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def ball_constant(p: float) -> float:
    """Mean of |x-y|^p for x, y uniform in the unit ball of R^3."""
    if p <= -3:
        raise ValueError("ball self-interaction diverges for p <= -3")
    # distance density 3 r^2 (1 - 3r/4 + r^3/16) on [0, 2]
    return (3 * 2 ** (p + 3) / (p + 3) - 2.25 * 2 ** (p + 4) / (p + 4)
            + 3 / 16 * 2 ** (p + 6) / (p + 6))


@lru_cache(maxsize=None)
def disk_constant(p: float) -> float:
    """Mean of |x-y|^p for x, y uniform in the unit disk."""
    if p <= -2:
        raise ValueError("disk self-interaction diverges for p <= -2")

    def dens(r):
        return (4 * r / np.pi) * (np.arccos(r / 2) - (r / 2) * np.sqrt(1 - r * r / 4))

    val, _ = integrate.quad(lambda r: dens(r) * r ** p, 0, 2, limit=200, epsabs=1e-14, epsrel=1e-13)
    return float(val)


@lru_cache(maxsize=None)
def segment_constant(p: float) -> float:
    """Mean of |s-t|^p for s, t uniform on a segment of half length 1."""
    if p <= -1:
        raise ValueError("segment self-interaction diverges for p <= -1")
    return 2 ** (p + 1) / ((p + 1) * (p + 2))


def _graded_theta_rule(levels=44, order=10):
    """Gauss-Legendre nodes on dyadically graded subintervals of (0, pi)."""
    x, w = np.polynomial.legendre.leggauss(order)
    th, wt = [], []
    for k in range(levels):
        a, b = np.pi * 2.0 ** (-k - 1), np.pi * 2.0 ** (-k)
        th.append(0.5 * (b - a) * x + 0.5 * (a + b))
        wt.append(0.5 * (b - a) * w)
    return np.concatenate(th), np.concatenate(wt) / np.pi


_THETA, _THETA_W = _graded_theta_rule()


def tube_self_interaction(radius, length, p: float) -> np.ndarray:
    """Mean of |x-y|^p over a uniform cylindrical surface (radius, length).

    The axial difference is integrated in closed form; the angular
    difference (uniform on (0, pi)) uses a graded Gauss rule that resolves
    the integrable singularity at coincident angles.
    """
    if p <= -2:
        raise ValueError("tube self-interaction diverges for p <= -2")
    rho = np.atleast_1d(np.asarray(radius, float))[:, None]
    ell = np.atleast_1d(np.asarray(length, float))[:, None]
    c = 2 * rho * np.sin(_THETA[None, :] / 2)
    if p == -1.0:
        # log form: rho can be close to the smallest normal double
        lx = np.log(ell) - np.log(2 * rho) - np.log(np.sin(_THETA[None, :] / 2))
        ash = np.where(lx > 20, lx + np.log(2.0), np.arcsinh(np.exp(np.minimum(lx, 20))))
        t = np.exp(-lx)
        Eu = (2 / ell) * (ash - (np.sqrt(1 + t * t) - t))
    else:
        J0 = ell * c ** p * special.hyp2f1(-p / 2, 0.5, 1.5, -(ell / c) ** 2)
        if p == -2.0:
            J1 = 0.5 * np.log1p((ell / c) ** 2)
        else:
            J1 = ((ell * ell + c * c) ** (p / 2 + 1) - c ** (p + 2)) / (p + 2)
        Eu = (2 / ell) * (J0 - J1 / ell)
    return (Eu * _THETA_W[None, :]).sum(1)


def diagonal_entries(cloud: PointCloud, alpha: float):
    """Diagonal of the kernel matrix and a record of the rule used."""
    n = cloud.dimension
    p = alpha - n
    d = cloud.cell_dim
    rho = cloud.cell_radius
    diag = np.empty(cloud.size)
    consts = {}
    full = d == n
    if np.any(full):
        c = ball_constant(p) if n == 3 else disk_constant(p)
        consts["ball" if n == 3 else "disk"] = c
        diag[full] = c * rho[full] ** p
    surf = (d == 2) & (n == 3)
    if np.any(surf):
        c = disk_constant(p)
        consts["disk"] = c
        diag[surf] = c * rho[surf] ** p
    line = d == 1
    if np.any(line):
        if n == 2:
            c = segment_constant(p)
            consts["segment"] = c
            diag[line] = c * rho[line] ** p
        else:
            diag[line] = tube_self_interaction(rho[line], cloud.cell_length[line], p)
            consts["tube"] = "cylindrical-surface mean (closed-form axial, graded Gauss angular)"
    rule = {
        "scheme": "uniform_cell_mean",
        "cell_radius": "half the local grid spacing (tube cells: tube radius)",
        "exponent": p,
        "constants": consts,
    }
    return diag, rule


# ---------------------------------------------------------------------------
# kernel context
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class KernelContext:
    alpha: float
    n: int
    cloud: PointCloud
    matrix: np.ndarray
    diagonal_rule: dict = field(default_factory=dict)

    @property
    def exponent(self) -> float:
        return self.alpha - self.n

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.matrix)


def assemble_kernel(cloud: PointCloud, alpha: float, node_cap: int = NODE_CAP) -> KernelContext:
    n = cloud.dimension
    check_alpha(alpha, n)
    if cloud.size > node_cap:
        raise ValueError(f"cloud has {cloud.size} nodes, above the dense cap of {node_cap}")
    K = _backend.pair_power(cloud.nodes, cloud.nodes, alpha - n)
    diag, rule = diagonal_entries(cloud, alpha)
    np.fill_diagonal(K, diag)
    rule["backend"] = _backend.BACKEND
    K.setflags(write=False)
    return KernelContext(float(alpha), n, cloud, K, rule)


def cross_kernel(X, Y, alpha: float) -> np.ndarray:
    """Exact kernel block between two disjoint point sets."""
    X = np.atleast_2d(X)
    Y = np.atleast_2d(Y)
    K = _backend.pair_power(X, Y, alpha - X.shape[1])
    if np.any(K == 0):
        raise ValueError("point sets share a node; the kernel is singular there")
    return K


def _masses(ctx_cloud, mu):
    if isinstance(mu, DiscreteMeasure):
        if ctx_cloud is not None and mu.cloud is not ctx_cloud:
            raise ValueError("measure lives on a different cloud than the kernel context")
        return mu.masses
    m = np.asarray(mu, dtype=float).reshape(-1)
    if ctx_cloud is not None and m.size != ctx_cloud.size:
        raise ValueError("mass vector length does not match the cloud")
    return m


def potential_at(ctx: KernelContext, measure, eval_points) -> np.ndarray:
    """U^mu at arbitrary points; points equal to a node use the diagonal rule."""
    m = _masses(ctx.cloud, measure)
    P = np.atleast_2d(np.asarray(eval_points, dtype=float))
    if P.shape[1] != ctx.n:
        raise ValueError("evaluation points have the wrong dimension")
    U = _backend.apply_power(ctx.cloud.nodes, m, P, ctx.exponent)
    dist, idx = cKDTree(ctx.cloud.nodes).query(P, k=1)
    hit = dist == 0
    if np.any(hit):
        U[hit] += m[idx[hit]] * ctx.matrix[idx[hit], idx[hit]]
    return U


def potential_on_nodes(ctx: KernelContext, measure) -> np.ndarray:
    return ctx.matrix @ _masses(ctx.cloud, measure)


def measure_potential(measure: DiscreteMeasure, eval_points, alpha: float) -> np.ndarray:
    """Potential of a measure at points away from its nodes (exact kernel)."""
    P = np.atleast_2d(np.asarray(eval_points, dtype=float))
    return _backend.apply_power(measure.cloud.nodes, measure.masses, P, alpha - P.shape[1])


def energy(ctx: KernelContext, measure) -> float:
    m = _masses(ctx.cloud, measure)
    return float(m @ (ctx.matrix @ m))


def mutual_energy(ctx: KernelContext, mu, nu) -> float:
    a = _masses(ctx.cloud, mu)
    b = _masses(ctx.cloud, nu)
    return float(a @ (ctx.matrix @ b))


def energy_norm(ctx: KernelContext, mu, nu=None) -> float:
    """||mu - nu|| in the kernel's energy inner product."""
    a = _masses(ctx.cloud, mu)
    if nu is not None:
        a = a - _masses(ctx.cloud, nu)
    return float(np.sqrt(max(a @ (ctx.matrix @ a), 0.0)))


def cross_energy(mu: DiscreteMeasure, nu: DiscreteMeasure, alpha: float) -> float:
    """I(mu, nu) for measures on two clouds with no common node."""
    if mu.cloud is nu.cloud:
        raise ValueError("use mutual_energy for measures on the same cloud")
    return float(mu.masses @ cross_kernel(mu.cloud.nodes, nu.cloud.nodes, alpha) @ nu.masses)
