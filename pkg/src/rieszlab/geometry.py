"""Set descriptors, quadrature point clouds, annulus slicing and Kelvin inversion.

Clouds carry, per node, the cell measure (``weights``), a characteristic
half-diameter (``cell_radius``) and the intrinsic dimension of the cell
(``cell_dim``).  Cells of dimension 1 are thin tubes: the node sits on the
axis, ``cell_radius`` is the tube radius and ``cell_length`` the axial
length.  The kernel module turns these into diagonal entries.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import qmc

PROFILE_FLOOR = 1e-300
BOUNDARY_LAYER = 0.25    # thickness of the outermost ball cell, in layer spacings
INTERIOR_GROWTH = 1.6    # radial spacing growth towards the ball centre
MIN_SLICE_STATIONS = 8


class EmptyDiscretization(ValueError):
    """Raised when a descriptor has no sample points at the requested resolution."""


def _vec(v, n=None):
    a = np.asarray(v, dtype=float).reshape(-1)
    if n is not None and a.size != n:
        raise ValueError(f"expected a {n}-vector, got {a.size} entries")
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite coordinates")
    return a


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# clouds and measures
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PointCloud:
    nodes: np.ndarray
    weights: np.ndarray
    cell_radius: np.ndarray
    cell_dim: np.ndarray
    cell_length: np.ndarray | None = None
    label: str = ""

    def __post_init__(self):
        X = np.array(self.nodes, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1:
            raise ValueError("cloud needs at least one node")
        N, n = X.shape
        if n < 2:
            raise ValueError("ambient dimension must be at least 2")
        w = np.broadcast_to(np.asarray(self.weights, float), (N,))
        r = np.broadcast_to(np.asarray(self.cell_radius, float), (N,))
        d = np.broadcast_to(np.asarray(self.cell_dim), (N,)).astype(np.int64)
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(w)) and np.all(np.isfinite(r))):
            raise ValueError("non-finite cloud data")
        if np.any(w <= 0) or np.any(r <= 0):
            raise ValueError("weights and cell radii must be positive")
        if np.any(d < 1) or np.any(d > n):
            raise ValueError("cell dimensions must lie in 1..n")
        L = None
        if np.any(d == 1):
            if self.cell_length is None:
                raise ValueError("tube cells need cell_length")
            L = np.broadcast_to(np.asarray(self.cell_length, float), (N,))
            if np.any(L[d == 1] <= 0) or not np.all(np.isfinite(L)):
                raise ValueError("tube cell lengths must be positive")
        if np.unique(X, axis=0).shape[0] != N:
            raise ValueError("cloud nodes must be pairwise distinct")
        object.__setattr__(self, "nodes", _readonly(X))
        object.__setattr__(self, "weights", _readonly(w))
        object.__setattr__(self, "cell_radius", _readonly(r))
        dd = np.array(d)
        dd.setflags(write=False)
        object.__setattr__(self, "cell_dim", dd)
        object.__setattr__(self, "cell_length", None if L is None else _readonly(L))

    @property
    def dimension(self) -> int:
        return self.nodes.shape[1]

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    def __len__(self):
        return self.size

    @property
    def intrinsic_dim(self) -> int:
        return int(self.cell_dim.max())

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def bounding_radius(self, center=None) -> float:
        c = np.zeros(self.dimension) if center is None else _vec(center, self.dimension)
        return float(np.sqrt(((self.nodes - c) ** 2).sum(1)).max())

    def subset(self, mask) -> "PointCloud":
        idx = np.flatnonzero(np.asarray(mask))
        if idx.size == 0:
            raise EmptyDiscretization("subset is empty")
        L = None if self.cell_length is None else self.cell_length[idx]
        return PointCloud(self.nodes[idx], self.weights[idx], self.cell_radius[idx],
                          self.cell_dim[idx], L, self.label)


def concatenate(clouds: Sequence[PointCloud], label="") -> PointCloud:
    clouds = list(clouds)
    if not clouds:
        raise EmptyDiscretization("nothing to concatenate")
    lengths = [c.cell_length if c.cell_length is not None else np.zeros(c.size) for c in clouds]
    has_tube = any(c.cell_length is not None for c in clouds)
    return PointCloud(
        np.vstack([c.nodes for c in clouds]),
        np.concatenate([c.weights for c in clouds]),
        np.concatenate([c.cell_radius for c in clouds]),
        np.concatenate([c.cell_dim for c in clouds]),
        np.concatenate(lengths) if has_tube else None,
        label,
    )


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    cloud: PointCloud
    masses: np.ndarray

    def __post_init__(self):
        m = np.array(self.masses, dtype=float).reshape(-1)
        if m.size != self.cloud.size:
            raise ValueError(f"{m.size} masses for a cloud of {self.cloud.size} nodes")
        if not np.all(np.isfinite(m)):
            raise ValueError("masses must be finite")
        if np.any(m < 0):
            raise ValueError("masses must be nonnegative")
        m.setflags(write=False)
        object.__setattr__(self, "masses", m)

    @property
    def total(self) -> float:
        return float(self.masses.sum())

    def support(self, mass_floor=1e-12) -> np.ndarray:
        t = self.total
        if t <= 0:
            return np.zeros(0, dtype=np.int64)
        return np.flatnonzero(self.masses > mass_floor * t)

    def scaled(self, c: float) -> "DiscreteMeasure":
        return DiscreteMeasure(self.cloud, c * self.masses)

    @classmethod
    def point(cls, cloud: PointCloud, index: int, mass=1.0) -> "DiscreteMeasure":
        m = np.zeros(cloud.size)
        m[index] = mass
        return cls(cloud, m)


def point_cloud(points, radius=1e-3, dim=None) -> PointCloud:
    """Build a cloud of isolated ball-type cells around the given points."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    d = P.shape[1] if dim is None else dim
    n = P.shape[1]
    w = (2 * radius) ** d * np.ones(len(P))
    return PointCloud(P, w, radius * np.ones(len(P)), d * np.ones(len(P), int),
                      np.full(len(P), 2 * radius) if d == 1 else None, "points")


# ---------------------------------------------------------------------------
# descriptors
# ---------------------------------------------------------------------------

class SetDescriptor:
    """Base class of the analytic set families."""

    kind = "abstract"

    @property
    def ambient_dim(self) -> int:
        raise NotImplementedError

    def contains(self, points, tol=1e-12) -> np.ndarray:
        raise NotImplementedError

    def bounding_radius(self) -> float:
        """Radius of a ball about the origin containing the set (inf if unbounded)."""
        raise NotImplementedError

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.bounding_radius())

    def to_dict(self) -> dict:
        raise NotImplementedError

    @staticmethod
    def from_dict(d: dict) -> "SetDescriptor":
        return descriptor_from_dict(d)


@dataclass(frozen=True)
class Ball(SetDescriptor):
    center: tuple
    radius: float
    kind = "ball"

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(_vec(self.center)))
        if not self.radius > 0 or not math.isfinite(self.radius):
            raise ValueError("ball radius must be positive and finite")
        if len(self.center) < 2:
            raise ValueError("ambient dimension must be at least 2")

    @property
    def ambient_dim(self):
        return len(self.center)

    def contains(self, points, tol=1e-12):
        r = np.linalg.norm(np.atleast_2d(points) - np.array(self.center), axis=1)
        return r <= self.radius * (1 + tol)

    def bounding_radius(self):
        return float(np.linalg.norm(self.center)) + self.radius

    def to_dict(self):
        return {"type": "ball", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Sphere(SetDescriptor):
    center: tuple
    radius: float
    kind = "sphere"

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(_vec(self.center)))
        if not self.radius > 0 or not math.isfinite(self.radius):
            raise ValueError("sphere radius must be positive and finite")
        if len(self.center) < 2:
            raise ValueError("ambient dimension must be at least 2")

    @property
    def ambient_dim(self):
        return len(self.center)

    def contains(self, points, tol=1e-9):
        r = np.linalg.norm(np.atleast_2d(points) - np.array(self.center), axis=1)
        return np.abs(r - self.radius) <= tol * self.radius

    def bounding_radius(self):
        return float(np.linalg.norm(self.center)) + self.radius

    def to_dict(self):
        return {"type": "sphere", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Shell(SetDescriptor):
    center: tuple
    r_in: float
    r_out: float
    kind = "shell"

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(_vec(self.center)))
        if not (0 < self.r_in < self.r_out) or not math.isfinite(self.r_out):
            raise ValueError("shell needs 0 < r_in < r_out < inf")

    @property
    def ambient_dim(self):
        return len(self.center)

    def contains(self, points, tol=1e-12):
        r = np.linalg.norm(np.atleast_2d(points) - np.array(self.center), axis=1)
        return (r >= self.r_in * (1 - tol)) & (r <= self.r_out * (1 + tol))

    def bounding_radius(self):
        return float(np.linalg.norm(self.center)) + self.r_out

    def to_dict(self):
        return {"type": "shell", "center": list(self.center), "r_in": self.r_in, "r_out": self.r_out}


PROFILES = ("power", "exp_s", "cusp")


class _AxialBody(SetDescriptor):
    """Solid of revolution about an axis through the origin, radius rho(x1)."""

    axis = (1.0, 0.0, 0.0)

    @property
    def ambient_dim(self):
        return 3

    def log_rho(self, x1):
        raise NotImplementedError

    def rho(self, x1):
        return np.exp(self.log_rho(x1))

    @property
    def log_spaced(self) -> bool:
        return False

    def frame(self) -> np.ndarray:
        """Orthonormal matrix whose first column is the axis."""
        a = np.asarray(self.axis, float)
        a = a / np.linalg.norm(a)
        helper = np.eye(3)[np.argmin(np.abs(a))]
        b = np.cross(a, helper)
        b /= np.linalg.norm(b)
        c = np.cross(a, b)
        return np.column_stack([a, b, c])

    def local(self, points):
        return np.atleast_2d(points) @ self.frame()

    def contains(self, points, tol=1e-12):
        L = self.local(points)
        x1 = L[:, 0]
        inside = (x1 >= self.x1_min * (1 - tol) - tol) & (x1 <= self.x1_max * (1 + tol) + tol)
        out = np.zeros(len(L), bool)
        if np.any(inside):
            xs = np.clip(x1[inside], self.x1_min, self.x1_max)
            with np.errstate(divide="ignore", over="ignore"):
                lr = self.log_rho(np.maximum(xs, 1e-300))
            r2 = (L[inside, 1:] ** 2).sum(1)
            with np.errstate(divide="ignore"):
                out[inside] = (r2 == 0) | (np.log(r2) <= 2 * lr + 2 * tol + 1e-12)
        return out

    def max_rho(self, a, b) -> float:
        xs = np.linspace(a, b, 257)
        return float(np.exp(np.max(self.log_rho(xs))))

    def bounding_radius(self):
        if not math.isfinite(self.x1_max):
            return math.inf
        lo = max(self.x1_min, 1e-300)
        return math.hypot(max(abs(self.x1_min), abs(self.x1_max)), self.max_rho(lo, self.x1_max))


@dataclass(frozen=True)
class RotationBody(_AxialBody):
    profile: str
    exponent: float
    x1_min: float
    x1_max: float
    kind = "rotation_body"

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ValueError(f"unknown profile {self.profile!r}; expected one of {PROFILES}")
        if not math.isfinite(self.exponent) or self.exponent < 0:
            raise ValueError("profile exponent must be finite and nonnegative")
        if self.profile != "power" and self.exponent == 0:
            raise ValueError(f"{self.profile} profile needs a positive exponent")
        if not (0 < self.x1_min < self.x1_max):
            raise ValueError("rotation body needs 0 < x1_min < x1_max")

    def log_rho(self, x1):
        x1 = np.asarray(x1, float)
        if self.profile == "power":
            return -self.exponent * np.log(x1)
        if self.profile == "exp_s":
            return -(x1 ** self.exponent)
        return -(x1 ** (-self.exponent))

    @property
    def log_spaced(self):
        return self.profile == "cusp"

    def monotonicity(self) -> str:
        if self.profile == "cusp":
            return "increasing"
        if self.profile == "power" and self.exponent == 0:
            return "constant"
        return "decreasing"

    def to_dict(self):
        key = "beta" if self.profile == "cusp" else "s"
        return {"type": "rotation_body", "profile": self.profile, key: self.exponent,
                "x1_min": self.x1_min, "x1_max": _jnum(self.x1_max)}


@dataclass(frozen=True)
class HalfCylinder(_AxialBody):
    radius: float
    x1_min: float
    x1_max: float = math.inf
    axis: tuple = (1.0, 0.0, 0.0)
    kind = "half_cylinder"

    def __post_init__(self):
        a = _vec(self.axis, 3)
        if np.linalg.norm(a) == 0:
            raise ValueError("axis must be nonzero")
        object.__setattr__(self, "axis", tuple(a / np.linalg.norm(a)))
        if not self.radius > 0 or not math.isfinite(self.radius):
            raise ValueError("cylinder radius must be positive and finite")
        if not self.x1_min < self.x1_max:
            raise ValueError("empty x1 range")

    def log_rho(self, x1):
        return np.full(np.shape(x1), math.log(self.radius))

    def to_dict(self):
        return {"type": "half_cylinder", "radius": self.radius, "x1_min": self.x1_min,
                "x1_max": _jnum(self.x1_max), "axis": list(self.axis)}


@dataclass(frozen=True)
class Union(SetDescriptor):
    parts: tuple
    kind = "union"

    def __post_init__(self):
        parts = tuple(self.parts)
        if not parts:
            raise ValueError("union needs at least one part")
        if len({p.ambient_dim for p in parts}) != 1:
            raise ValueError("union parts live in different dimensions")
        object.__setattr__(self, "parts", parts)

    @property
    def ambient_dim(self):
        return self.parts[0].ambient_dim

    def contains(self, points, tol=1e-12):
        out = np.zeros(len(np.atleast_2d(points)), bool)
        for p in self.parts:
            out |= p.contains(points, tol)
        return out

    def bounding_radius(self):
        return max(p.bounding_radius() for p in self.parts)

    def to_dict(self):
        return {"type": "union", "parts": [p.to_dict() for p in self.parts]}


@dataclass(frozen=True)
class Truncate(SetDescriptor):
    inner: SetDescriptor
    radius: float
    kind = "truncate"

    def __post_init__(self):
        if not self.radius > 0 or not math.isfinite(self.radius):
            raise ValueError("truncation radius must be positive and finite")

    @property
    def ambient_dim(self):
        return self.inner.ambient_dim

    def contains(self, points, tol=1e-12):
        P = np.atleast_2d(points)
        return self.inner.contains(P, tol) & (np.linalg.norm(P, axis=1) <= self.radius * (1 + tol))

    def bounding_radius(self):
        return min(self.radius, self.inner.bounding_radius())

    def to_dict(self):
        return {"type": "truncate", "inner": self.inner.to_dict(), "radius": self.radius}


@dataclass(frozen=True)
class Slice(SetDescriptor):
    """Intersection of a set with the annulus r_in < |x - center| <= r_out.

    ``closed`` selects which bounding sphere belongs to the annulus
    ("outer" as above, or "inner" for r_in <= |x - center| < r_out).
    """
    inner: SetDescriptor
    center: tuple
    r_in: float
    r_out: float
    closed: str = "outer"
    kind = "slice"

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(_vec(self.center)))
        if not (0 <= self.r_in < self.r_out):
            raise ValueError("annulus needs 0 <= r_in < r_out")
        if self.closed not in ("outer", "inner"):
            raise ValueError("closed must be 'outer' or 'inner'")

    @property
    def ambient_dim(self):
        return self.inner.ambient_dim

    def in_annulus(self, points):
        r = np.linalg.norm(np.atleast_2d(points) - np.array(self.center), axis=1)
        if self.closed == "outer":
            return (r > self.r_in) & (r <= self.r_out)
        return (r >= self.r_in) & (r < self.r_out)

    def contains(self, points, tol=1e-12):
        return self.inner.contains(points, tol) & self.in_annulus(points)

    def bounding_radius(self):
        return min(self.inner.bounding_radius(), float(np.linalg.norm(self.center)) + self.r_out)

    def to_dict(self):
        return {"type": "slice", "inner": self.inner.to_dict(), "center": list(self.center),
                "r_in": self.r_in, "r_out": self.r_out, "closed": self.closed}


def _jnum(x):
    return None if not math.isfinite(x) else x


def _fnum(x, default=math.inf):
    return default if x is None else float(x)


def descriptor_from_dict(d: dict) -> SetDescriptor:
    """Parse the tagged-record form used by scenario files."""
    if not isinstance(d, dict) or "type" not in d:
        raise ValueError("set descriptor must be an object with a 'type' field")
    t = d["type"]
    try:
        if t == "ball":
            return Ball(tuple(d["center"]), float(d["radius"]))
        if t == "sphere":
            return Sphere(tuple(d["center"]), float(d["radius"]))
        if t == "shell":
            return Shell(tuple(d["center"]), float(d["r_in"]), float(d["r_out"]))
        if t == "rotation_body":
            prof = d["profile"]
            key = "beta" if prof == "cusp" else "s"
            return RotationBody(prof, float(d[key]), float(d["x1_min"]), _fnum(d.get("x1_max")))
        if t == "half_cylinder":
            return HalfCylinder(float(d["radius"]), float(d["x1_min"]), _fnum(d.get("x1_max")),
                                tuple(d.get("axis", (1.0, 0.0, 0.0))))
        if t == "union":
            return Union(tuple(descriptor_from_dict(p) for p in d["parts"]))
        if t == "truncate":
            return Truncate(descriptor_from_dict(d["inner"]), float(d["radius"]))
        if t == "slice":
            return Slice(descriptor_from_dict(d["inner"]), tuple(d["center"]), float(d["r_in"]),
                         float(d["r_out"]), d.get("closed", "outer"))
    except KeyError as exc:
        raise ValueError(f"{t} descriptor is missing field {exc.args[0]!r}") from None
    raise ValueError(f"unknown set type {t!r}")


# ---------------------------------------------------------------------------
# discretization
# ---------------------------------------------------------------------------

def fibonacci_sphere(N: int) -> np.ndarray:
    """Quasi-uniform unit vectors on S^2 (golden-angle spiral)."""
    if N == 1:
        return np.array([[0.0, 0.0, 1.0]])
    i = np.arange(N) + 0.5
    phi = np.arccos(1 - 2 * i / N)
    theta = np.pi * (1 + 5 ** 0.5) * i
    return np.c_[np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)]


def _sphere_dirs(n, count):
    if n == 3:
        return fibonacci_sphere(count)
    if n == 2:
        t = 2 * np.pi * (np.arange(count) + 0.5) / count
        return np.c_[np.cos(t), np.sin(t)]
    raise ValueError("spheres are discretized for n in {2, 3} only")


def _sphere_count(n, radius, spacing):
    if n == 3:
        return max(1, int(round(4 * np.pi * radius ** 2 / (np.sqrt(3) / 2 * spacing ** 2))))
    return max(1, int(round(2 * np.pi * radius / spacing)))


def _half_spacing(w, d):
    return 0.5 * w ** (1.0 / d)


def _sphere_cloud(center, radius, spacing, n):
    N = max(_sphere_count(n, radius, spacing), 4 if n == 3 else 3)
    X = np.asarray(center) + radius * _sphere_dirs(n, N)
    area = (4 * np.pi * radius ** 2) if n == 3 else 2 * np.pi * radius
    w = np.full(N, area / N)
    d = n - 1
    return PointCloud(X, w, _half_spacing(w, d), np.full(N, d),
                      np.full(N, area / N) if d == 1 else None, "sphere")


def _ball_volume(n, r):
    return 4 / 3 * np.pi * r ** 3 if n == 3 else np.pi * r ** 2


def _layered_cloud(center, r_out, r_in, spacing, n, inner_boundary):
    """Concentric quasi-uniform shells with thin boundary cells.

    The outermost cell (and innermost, for shells) is BOUNDARY_LAYER spacings
    thick so that boundary nodes carry near-surface cells; radial spacing grows
    by INTERIOR_GROWTH towards the centre of a solid ball.
    """
    radii, steps = [r_out], [spacing]
    r, s = r_out, spacing
    if inner_boundary:
        count = max(1, int(math.ceil((r_out - r_in) / spacing)))
        radii = list(np.linspace(r_out, r_in, count + 1))
        steps = [(r_out - r_in) / count] * len(radii)
    else:
        while True:
            rn = r - s
            if rn < 0.5 * s:
                break
            radii.append(rn)
            steps.append(s)
            r = rn
            s *= INTERIOR_GROWTH
    K = len(radii)
    bounds = [r_out]
    if K > 1:
        bounds.append(r_out - BOUNDARY_LAYER * steps[0])
        bounds += [0.5 * (radii[k] + radii[k + 1]) for k in range(1, K - 1)]
    if inner_boundary:
        if K > 2:
            bounds[-1] = r_in + BOUNDARY_LAYER * steps[-1]
        bounds.append(r_in)
    else:
        bounds.append(0.0)
    pts, ws = [], []
    for k, rk in enumerate(radii):
        Nk = _sphere_count(n, rk, steps[k]) if rk > 0 else 1
        vol = _ball_volume(n, bounds[k]) - _ball_volume(n, bounds[k + 1])
        if Nk == 1 and not inner_boundary and k == K - 1:
            P = np.zeros((1, n))
        else:
            Nk = max(Nk, 4 if n == 3 else 3)
            P = rk * _sphere_dirs(n, Nk)
        pts.append(P + np.asarray(center))
        ws.append(np.full(len(P), vol / len(P)))
    X = np.vstack(pts)
    w = np.concatenate(ws)
    return PointCloud(X, w, _half_spacing(w, n), np.full(len(w), n), None, "layered")


def _disk_rings(a, spacing):
    """Cell-centred rings filling a disk of radius a: (radii, angles, areas)."""
    K = max(1, int(round(a / spacing)))
    dr = a / K
    out = []
    for j in range(K):
        rj = (j + 0.5) * dr
        Mj = max(3, int(round(2 * np.pi * rj / dr)))
        area = np.pi * ((j + 1) ** 2 - j ** 2) * dr ** 2
        t = 2 * np.pi * (np.arange(Mj) + 0.5 * (j % 2)) / Mj
        out.append((rj, t, area / Mj))
    return out


def _axial_stations(body, a, b, resolution):
    """Cell edges along the axis on [a, b]."""
    if body.log_spaced:
        per_octave = max(MIN_SLICE_STATIONS, 4 * resolution)
        K = max(1, int(math.ceil(math.log2(b / a) * per_octave)))
        return a * (b / a) ** (np.arange(K + 1) / K)
    h = _axial_spacing(body, resolution)
    K = max(1, int(math.ceil((b - a) / h - 1e-9)))
    return np.linspace(a, b, K + 1)


def _axial_spacing(body, resolution):
    if isinstance(body, HalfCylinder):
        return body.radius / resolution
    return 1.0 / resolution


def _axial_cloud(body, a, b, resolution, boundary, cut_radius=None):
    """Discretize the part a <= x1 <= b of an axial body.

    Stations whose circumference spans at least three cells become rings of
    surface (or cross-section) cells; thinner stations become single tube
    cells on the axis.  Stations with profile below PROFILE_FLOOR are dropped.
    """
    edges = _axial_stations(body, a, b, resolution)
    mid = 0.5 * (edges[:-1] + edges[1:])
    dx = np.diff(edges)
    logr = body.log_rho(mid)
    keep = logr > math.log(PROFILE_FLOOR)
    le = body.log_rho(edges)
    rows = []   # (local points, weight, radius, dim, length)
    for k in np.flatnonzero(keep):
        rho = math.exp(logr[k])
        slope = (math.exp(le[k + 1]) - math.exp(le[k])) / dx[k] if np.isfinite(le).all() else 0.0
        slant = math.sqrt(1 + slope * slope)
        M = int(round(2 * np.pi * rho / dx[k]))
        if M >= 3:
            if boundary:
                t = 2 * np.pi * (np.arange(M) + 0.5 * (k % 2)) / M
                P = np.c_[np.full(M, mid[k]), rho * np.cos(t), rho * np.sin(t)]
                w = 2 * np.pi * rho * dx[k] * slant / M
                rows.append((P, np.full(M, w), np.full(M, _half_spacing(w, 2)), 2, 0.0))
            else:
                for rj, t, area in _disk_rings(rho, dx[k]):
                    P = np.c_[np.full(len(t), mid[k]), rj * np.cos(t), rj * np.sin(t)]
                    w = area * dx[k]
                    rows.append((P, np.full(len(t), w), np.full(len(t), _half_spacing(w, 3)), 3, 0.0))
        else:
            # disk geometric mean distance rho*e^{-1/4} stands in for a solid tube
            reff = rho if boundary else rho * math.exp(-0.25)
            w = 2 * np.pi * rho * dx[k] * slant if boundary else np.pi * rho * rho * dx[k]
            rows.append((np.array([[mid[k], 0.0, 0.0]]), np.array([w]), np.array([reff]), 1, dx[k]))
    if boundary:
        for end, x1 in ((0, a), (1, b)):
            lr = float(body.log_rho(np.array([x1]))[0])
            if lr <= math.log(PROFILE_FLOOR):
                continue
            rho = math.exp(lr)
            h = dx[0] if end == 0 else dx[-1]
            if int(round(2 * np.pi * rho / h)) < 3:
                continue
            for rj, t, area in _disk_rings(rho, h):
                if end == 1 and cut_radius is not None:
                    xc = math.sqrt(max(cut_radius ** 2 - rj ** 2, 0.0))
                    area = area * cut_radius / max(xc, 1e-300)
                else:
                    xc = x1
                P = np.c_[np.full(len(t), xc), rj * np.cos(t), rj * np.sin(t)]
                rows.append((P, np.full(len(t), area), np.full(len(t), _half_spacing(area, 2)), 2, 0.0))
    if not rows:
        raise EmptyDiscretization("axial body has no representable stations")
    F = body.frame()
    X = np.vstack([r[0] for r in rows]) @ F.T
    w = np.concatenate([r[1] for r in rows])
    rad = np.concatenate([r[2] for r in rows])
    dim = np.concatenate([np.full(len(r[1]), r[3]) for r in rows])
    L = np.concatenate([np.full(len(r[1]), r[4]) for r in rows])
    return PointCloud(X, w, rad, dim, L if np.any(dim == 1) else None, body.kind)


def _cut_x1(body, R, a, b):
    """Largest x1 in [a, b] with x1^2 + rho(x1)^2 <= R^2 (bisection)."""
    def f(x):
        return x * x + math.exp(2 * float(body.log_rho(np.array([x]))[0])) - R * R
    if f(a) > 0:
        return None
    if math.isfinite(b) and f(b) <= 0:
        return b
    lo, hi = a, min(b, R)
    for _ in range(200):
        m = 0.5 * (lo + hi)
        if f(m) <= 0:
            lo = m
        else:
            hi = m
    return lo


def _box_cloud(desc, lo, hi, spacing):
    """Cell-centred cubic grid on a box, filtered by membership."""
    n = len(lo)
    counts = np.maximum(1, np.ceil((hi - lo) / spacing - 1e-9).astype(int))
    axes = [lo[i] + (np.arange(counts[i]) + 0.5) * spacing for i in range(n)]
    G = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, n)
    G = G[desc.contains(G)]
    if len(G) == 0:
        raise EmptyDiscretization("no grid cell centre falls inside the set")
    w = np.full(len(G), spacing ** n)
    return PointCloud(G, w, np.full(len(G), spacing / 2), np.full(len(G), n), None, "grid")


def discretize(descriptor: SetDescriptor, resolution: int, boundary: bool = False) -> PointCloud:
    """Quadrature cloud for a descriptor.

    ``resolution`` is the number of cells per characteristic length: per
    radius for balls, spheres and cylinders, per unit length along the axis
    for power and stretched-exponential bodies, and a quarter of the stations
    per octave for cusps.  With ``boundary=True`` solid bodies are replaced by
    their boundary surface (the carrier of equilibrium and harmonic measures
    when alpha = 2).
    """
    if not isinstance(resolution, (int, np.integer)) or resolution < 1:
        raise ValueError("resolution must be a positive integer")
    d = descriptor
    if isinstance(d, Sphere):
        return _sphere_cloud(d.center, d.radius, d.radius / resolution, d.ambient_dim)
    if isinstance(d, Ball):
        if boundary:
            return _sphere_cloud(d.center, d.radius, d.radius / resolution, d.ambient_dim)
        return _layered_cloud(d.center, d.radius, 0.0, d.radius / resolution, d.ambient_dim, False)
    if isinstance(d, Shell):
        h = d.r_out / resolution
        if boundary:
            return concatenate([_sphere_cloud(d.center, d.r_out, h, d.ambient_dim),
                                _sphere_cloud(d.center, d.r_in, h, d.ambient_dim)], "shell")
        return _layered_cloud(d.center, d.r_out, d.r_in, min(h, (d.r_out - d.r_in) / 2),
                              d.ambient_dim, True)
    if isinstance(d, _AxialBody):
        if not math.isfinite(d.x1_max):
            raise ValueError("unbounded body: wrap it in Truncate before discretizing")
        return _axial_cloud(d, d.x1_min, d.x1_max, resolution, boundary)
    if isinstance(d, Union):
        parts = []
        for k, p in enumerate(d.parts):
            try:
                c = discretize(p, resolution, boundary)
            except EmptyDiscretization:
                continue
            if parts:
                prev = Union(d.parts[:k])
                keep = ~prev.contains(c.nodes, tol=-1e-9)
                if not keep.any():
                    continue
                c = c.subset(keep)
            parts.append(c)
        return concatenate(parts, "union")
    if isinstance(d, Truncate):
        return _discretize_truncated(d, resolution, boundary)
    if isinstance(d, Slice):
        return _discretize_slice(d, resolution, boundary)
    raise ValueError(f"cannot discretize {type(d).__name__}")


def _discretize_truncated(d, resolution, boundary):
    inner, R = d.inner, d.radius
    if inner.bounding_radius() <= R:
        return discretize(inner, resolution, boundary)
    if isinstance(inner, _AxialBody) and np.allclose(inner.axis, (1, 0, 0)) and inner.x1_min >= 0:
        b = _cut_x1(inner, R, inner.x1_min, inner.x1_max)
        if b is None or b <= inner.x1_min:
            raise EmptyDiscretization("truncation removes the whole body")
        c = _axial_cloud(inner, inner.x1_min, b, resolution, boundary,
                         cut_radius=R if b < inner.x1_max else None)
        keep = np.linalg.norm(c.nodes, axis=1) <= R * (1 + 1e-12)
        return c.subset(keep)
    if isinstance(inner, Union):
        return discretize(Union(tuple(Truncate(p, R) for p in inner.parts)), resolution, boundary)
    c = discretize(inner, resolution, boundary)
    return c.subset(np.linalg.norm(c.nodes, axis=1) <= R * (1 + 1e-12))


def _discretize_slice(d, resolution, boundary):
    inner = d.inner
    if isinstance(inner, _AxialBody) and np.allclose(inner.axis, (1, 0, 0)):
        a = max(inner.x1_min, d.center[0] - d.r_out) if len(d.center) == 3 else inner.x1_min
        b = min(inner.x1_max, d.center[0] + d.r_out)
        if b <= a:
            raise EmptyDiscretization("slice misses the body")
        if np.allclose(d.center[1:], 0.0) and d.center[0] <= inner.x1_min:
            a = max(a, d.center[0] + math.sqrt(max(d.r_in ** 2 - inner.max_rho(a, b) ** 2, 0.0)) * 0.999)
        if b <= a:
            raise EmptyDiscretization("slice misses the body")
        c = _axial_cloud(inner, a, b, resolution, boundary)
        keep = d.in_annulus(c.nodes)
        if not keep.any():
            raise EmptyDiscretization("slice misses the body")
        return c.subset(keep)
    if boundary or not isinstance(inner, (Ball, Shell)):
        c = discretize(inner, resolution, boundary)
        keep = d.in_annulus(c.nodes)
        if not keep.any():
            raise EmptyDiscretization("slice misses the set")
        return c.subset(keep)
    # solid pieces get their own grid at the scale of the annulus
    n = inner.ambient_dim
    cen = np.asarray(d.center)
    lo = np.maximum(cen - d.r_out, np.asarray(inner.center) - inner.radius if isinstance(inner, Ball)
                    else np.asarray(inner.center) - inner.r_out)
    hi = np.minimum(cen + d.r_out, np.asarray(inner.center) + (inner.radius if isinstance(inner, Ball)
                                                                 else inner.r_out))
    if np.any(hi <= lo):
        raise EmptyDiscretization("slice misses the set")
    spacing = d.r_out / (2 * resolution)
    return _box_cloud(d, lo, hi, spacing)


def annulus_decompose(descriptor: SetDescriptor, y, ratio: float, j_range: Sequence[int],
                      mode: str = "shrinking", closed: str | None = None) -> list:
    """Per-j intersections of the set with dyadic-type annuli about y.

    shrinking (ratio in (0,1)):  ratio^{j+1} < |x-y| <= ratio^j
    expanding (ratio > 1):       ratio^j <= |x-y| < ratio^{j+1}
    """
    y = tuple(_vec(y, descriptor.ambient_dim))
    js = list(j_range)
    if mode == "shrinking":
        if not 0 < ratio < 1:
            raise ValueError("shrinking mode needs ratio in (0, 1)")
        cl = closed or "outer"
        return [Slice(descriptor, y, ratio ** (j + 1), ratio ** j, cl) for j in js]
    if mode == "expanding":
        if not ratio > 1:
            raise ValueError("expanding mode needs ratio > 1")
        cl = closed or "inner"
        return [Slice(descriptor, y, ratio ** j, ratio ** (j + 1), cl) for j in js]
    raise ValueError("mode must be 'shrinking' or 'expanding'")


def partition_cloud(cloud: PointCloud, y, ratio: float, j_range: Sequence[int],
                    mode: str = "shrinking") -> list:
    """Split an existing cloud's node indices among the annuli of annulus_decompose."""
    r = np.linalg.norm(cloud.nodes - _vec(y, cloud.dimension), axis=1)
    out = []
    for j in j_range:
        if mode == "shrinking":
            m = (r > ratio ** (j + 1)) & (r <= ratio ** j)
        else:
            m = (r >= ratio ** j) & (r < ratio ** (j + 1))
        out.append(np.flatnonzero(m))
    return out


# ---------------------------------------------------------------------------
# Kelvin inversion
# ---------------------------------------------------------------------------

def _check_center(cloud, center):
    c = _vec(center, cloud.dimension)
    r = np.linalg.norm(cloud.nodes - c, axis=1)
    if np.any(r == 0):
        raise ValueError("a node coincides with the inversion centre")
    return c, r


def kelvin_invert_cloud(cloud: PointCloud, center) -> PointCloud:
    """Invert a cloud in the unit sphere about ``center``.

    A cell of intrinsic dimension d at distance r is scaled linearly by r^-2,
    so its measure scales by r^(-2d) and its radius and length by r^-2.
    """
    c, r = _check_center(cloud, center)
    X = c + (cloud.nodes - c) / (r * r)[:, None]
    s = r ** -2.0
    L = None if cloud.cell_length is None else cloud.cell_length * s
    return PointCloud(X, cloud.weights * s ** cloud.cell_dim, cloud.cell_radius * s,
                      cloud.cell_dim, L, cloud.label + "*")


def kelvin_transform_measure(measure: DiscreteMeasure, center, alpha: float) -> DiscreteMeasure:
    """Kelvin transform: mass at the image of x is |x - center|^(alpha-n) times the mass at x."""
    cloud = measure.cloud
    c, r = _check_center(cloud, center)
    inv = kelvin_invert_cloud(cloud, c)
    return DiscreteMeasure(inv, measure.masses * r ** (alpha - cloud.dimension))


# ---------------------------------------------------------------------------
# probes
# ---------------------------------------------------------------------------

def probe_points(center, radius: float, count: int, avoid: Sequence[np.ndarray] = (),
                 margin: float = 0.0, exclude=None) -> np.ndarray:
    """Deterministic low-discrepancy probes in the cube of half-width 2*radius.

    Points closer than ``margin`` to any array in ``avoid`` or inside the
    descriptor ``exclude`` are skipped; the Halton stream is extended until
    ``count`` points are collected.
    """
    c = _vec(center)
    n = c.size
    sampler = qmc.Halton(d=n, scramble=False)
    sampler.fast_forward(1)
    out = []
    got = 0
    for _ in range(200):
        U = sampler.random(max(4 * count, 64))
        P = c + (2 * U - 1) * 2 * radius
        ok = np.ones(len(P), bool)
        for A in avoid:
            A = np.atleast_2d(A)
            for s in range(0, len(A), 4096):
                D = np.linalg.norm(P[:, None, :] - A[None, s:s + 4096, :], axis=2)
                ok &= D.min(1) > margin
        if exclude is not None:
            ok &= ~exclude.contains(P, tol=0.0)
        out.append(P[ok])
        got += int(ok.sum())
        if got >= count:
            break
    P = np.vstack(out)[:count]
    if len(P) < count:
        raise ValueError("could not place the requested number of probes")
    return P
