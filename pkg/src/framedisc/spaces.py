"""Metric measure spaces with small-scale doubling and upper Ahlfors data,
finite quadrature windows into them, and greedy-net partitions."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .kernels import EUCLIDEAN, HYPERBOLIC

log = logging.getLogger(__name__)


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


@dataclass(frozen=True)
class SpaceModel:
    """A metric measure space together with its small-scale constants.

    ``kind`` is ``"euclidean"`` or ``"hyperbolic"``. Euclidean spaces carry a
    constant ``density`` multiplying Lebesgue measure (1 for the plain space).
    """

    kind: str
    dim: int
    R_A: float
    C_RA: float
    ahlfors_alpha: float
    ahlfors_exponent: float
    density: float = 1.0

    def __post_init__(self):
        if self.kind not in ("euclidean", "hyperbolic"):
            raise ValueError(f"unknown space kind {self.kind!r}")
        if self.kind == "hyperbolic" and self.dim != 2:
            raise ValueError("the hyperbolic model is two dimensional")
        if not (self.R_A > 0 and self.C_RA >= 1 and self.ahlfors_alpha > 0
                and self.ahlfors_exponent > 0 and self.density > 0):
            raise ValueError("space constants out of range")

    @property
    def code(self) -> int:
        return HYPERBOLIC if self.kind == "hyperbolic" else EUCLIDEAN

    def describe(self) -> dict:
        return {
            "kind": self.kind, "dim": self.dim, "R_A": self.R_A,
            "C_RA": self.C_RA, "ahlfors_alpha": self.ahlfors_alpha,
            "ahlfors_exponent": self.ahlfors_exponent, "density": self.density,
        }


def euclidean(d: int, R_A: float = 4.0, density: float = 1.0) -> SpaceModel:
    """R^d with (a constant multiple of) Lebesgue measure; exact constants."""
    return SpaceModel("euclidean", d, R_A, 2.0 ** d, density * unit_ball_volume(d), float(d), density)


def euclidean_region(d: int, density: float, R_A: float = 4.0) -> SpaceModel:
    return euclidean(d, R_A=R_A, density=density)


def hyperbolic_half_plane() -> SpaceModel:
    """Upper half plane ``{(b, a): a > 0}`` with measure ``a^-2 db da``.

    The constants hold for radii up to ``R_A = 0.5``: the doubling ratio
    peaks at 4.255 there and ``2 pi (cosh r - 1) <= 1.1 pi r^2``.
    """
    return SpaceModel("hyperbolic", 2, 0.5, 4.5, math.pi * 1.1, 2.0)


def _as_points(p) -> np.ndarray:
    return np.atleast_2d(np.asarray(p, dtype=float))


def _check_points(space: SpaceModel, P: np.ndarray) -> None:
    if P.shape[1] != space.dim:
        raise ValueError(f"points have dimension {P.shape[1]}, space has {space.dim}")
    if space.kind == "hyperbolic" and np.any(P[:, 1] <= 0):
        raise ValueError("hyperbolic points need a positive scale coordinate")


def distance(space: SpaceModel, p, q) -> float:
    P, Q = _as_points(p), _as_points(q)
    _check_points(space, P)
    _check_points(space, Q)
    return float(kernels.pairwise_distances(space.code, P, Q)[0, 0])


def distances(space: SpaceModel, P, Q) -> np.ndarray:
    P, Q = _as_points(P), _as_points(Q)
    _check_points(space, P)
    _check_points(space, Q)
    return kernels.pairwise_distances(space.code, P, Q)


def ball_measure(space: SpaceModel, center, r: float) -> float:
    """Measure of the open ball of radius ``r``; independent of the center
    for both built-in geometries."""
    if not r > 0:
        raise ValueError("radius must be positive")
    _check_points(space, _as_points(center))
    if space.kind == "hyperbolic":
        # 2 pi (cosh r - 1) = 4 pi sinh^2(r/2), cancellation-free for small r
        return 4.0 * math.pi * math.sinh(r / 2) ** 2
    return space.density * unit_ball_volume(space.dim) * r ** space.dim


def hyperbolic_ball_mc(center, r: float, samples: int = 1_000_000, seed: int = 0) -> float:
    """Monte Carlo estimate of the hyperbolic ball measure by integrating
    ``a^-2`` over the ball's Euclidean bounding box."""
    b0, a0 = map(float, center)
    rng = np.random.default_rng(seed)
    # the ball is the Euclidean disc centred (b0, a0 cosh r), radius a0 sinh r
    half = a0 * math.sinh(r)
    lo, hi = a0 * math.exp(-r), a0 * math.exp(r)
    b = rng.uniform(b0 - half, b0 + half, samples)
    a = rng.uniform(lo, hi, samples)
    inside = 2.0 * np.arcsinh(np.hypot(b - b0, a - a0) / (2.0 * np.sqrt(a * a0))) < r
    box = 2 * half * (hi - lo)
    return float(box * np.mean(np.where(inside, a ** -2.0, 0.0)))


def check_space_constants(space: SpaceModel, samples: int = 200, seed: int = 0) -> list[str]:
    """Spot-check the doubling and Ahlfors constants at random radii in
    ``(0, R_A]``; returns a list of violations (empty when consistent)."""
    rng = np.random.default_rng(seed)
    center = np.zeros(space.dim)
    if space.kind == "hyperbolic":
        center[1] = 1.0
    bad = []
    for r in rng.uniform(0, space.R_A, samples):
        if r == 0:
            continue
        m1 = ball_measure(space, center, r)
        m2 = ball_measure(space, center, 2 * r)
        if m2 > space.C_RA * m1 * (1 + 1e-6):
            bad.append(f"doubling fails at r={r:.4g}: ratio {m2 / m1:.6g}")
        if m1 > space.ahlfors_alpha * r ** space.ahlfors_exponent * (1 + 1e-6):
            bad.append(f"Ahlfors bound fails at r={r:.4g}")
    return bad


@dataclass(frozen=True)
class Region:
    """Tensor midpoint grid on a coordinate box, with quadrature weights for
    the space's measure. Axes listed in ``log_axes`` are spaced uniformly in
    the logarithm of the coordinate (useful for hyperbolic scale axes)."""

    space: SpaceModel
    lower: tuple
    upper: tuple
    shape: tuple
    log_axes: tuple = ()
    points: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        d = self.space.dim
        lower = tuple(float(x) for x in np.broadcast_to(self.lower, (d,)))
        upper = tuple(float(x) for x in np.broadcast_to(self.upper, (d,)))
        shape = tuple(int(x) for x in np.broadcast_to(self.shape, (d,)))
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "log_axes", tuple(self.log_axes))
        if any(s <= 0 for s in shape):
            raise ValueError("empty region: every axis needs at least one grid point")
        if any(u <= l for l, u in zip(lower, upper)):
            raise ValueError("region bounds must satisfy lower < upper")
        axes, dx = [], []
        for k in range(d):
            if k in self.log_axes:
                if lower[k] <= 0:
                    raise ValueError("log-spaced axis needs positive bounds")
                u0, u1 = math.log(lower[k]), math.log(upper[k])
                h = (u1 - u0) / shape[k]
                u = u0 + h * (np.arange(shape[k]) + 0.5)
                axes.append(np.exp(u))
                dx.append(np.exp(u) * h)  # dx = x du
            else:
                h = (upper[k] - lower[k]) / shape[k]
                axes.append(lower[k] + h * (np.arange(shape[k]) + 0.5))
                dx.append(np.full(shape[k], h))
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        w = np.ones(pts.shape[0])
        for m in np.meshgrid(*dx, indexing="ij"):
            w = w * m.ravel()
        if self.space.kind == "hyperbolic":
            if lower[1] <= 0:
                raise ValueError("hyperbolic region needs a > 0")
            w = w / pts[:, 1] ** 2
        else:
            w = w * self.space.density
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def measure(self) -> float:
        """Exact measure of the coordinate box."""
        if self.space.kind == "hyperbolic":
            return (self.upper[0] - self.lower[0]) * (1 / self.lower[1] - 1 / self.upper[1])
        return self.space.density * float(np.prod(np.subtract(self.upper, self.lower)))

    def resolution(self) -> float:
        """Largest metric distance between grid neighbours along an axis."""
        steps = []
        for k in range(self.space.dim):
            if self.shape[k] < 2:
                continue
            if k in self.log_axes:
                h = math.log(self.upper[k] / self.lower[k]) / self.shape[k]
            else:
                h = (self.upper[k] - self.lower[k]) / self.shape[k]
            if self.space.kind == "hyperbolic":
                a_min = min(self.points[:, 1])
                if k == 0:
                    h = 2 * math.asinh(h / (2 * a_min))
                elif k not in self.log_axes:
                    h = math.log1p(h / a_min)
            steps.append(h)
        return max(steps, default=0.0)


@dataclass(frozen=True)
class Partition:
    """Cells ``X_n`` of a region: cell ``n`` holds the grid points assigned
    to ``centers[n]``."""

    centers: np.ndarray
    cell_of: np.ndarray
    measures: np.ndarray
    radius: float

    @property
    def n_cells(self) -> int:
        return self.centers.shape[0]

    def members(self, n: int) -> np.ndarray:
        return np.flatnonzero(self.cell_of == n)


def greedy_net(space: SpaceModel, region: Region, r: float) -> np.ndarray:
    """Centers of a maximal family of grid points at pairwise distance
    ``>= 2r``, scanned in grid order. Every grid point ends up within ``2r``
    of some center."""
    if region.size == 0:
        raise ValueError("empty region")
    if not (0 < r <= space.R_A / 4 * (1 + 1e-12)):
        raise ValueError(f"net radius must lie in (0, R_A/4] = (0, {space.R_A / 4:g}]")
    if region.resolution() > r / 4:
        log.warning("grid resolution %.3g exceeds r/4 = %.3g; cells are grid-limited",
                    region.resolution(), r / 4)
    idx = kernels.greedy_net_indices(space.code, region.points, 2 * r)
    return region.points[idx].copy()


def assign_cells(space: SpaceModel, region: Region, centers, r: float) -> Partition:
    """Nearest-center partition of the grid (ties go to the lower index)."""
    C = _as_points(centers)
    _check_points(space, C)
    owner, dist = kernels.assign_nearest(space.code, region.points, C)
    if np.any(dist >= 2 * r):
        far = int(np.argmax(dist))
        raise ValueError(
            f"grid point {far} is {dist[far]:.4g} >= 2r from every center; the net is not maximal")
    measures = np.bincount(owner, weights=region.weights, minlength=C.shape[0])
    return Partition(C, owner, measures, float(r))


def partition(space: SpaceModel, region: Region, r: float) -> Partition:
    return assign_cells(space, region, greedy_net(space, region, r), r)


def partition_violations(space: SpaceModel, region: Region, part: Partition) -> list[str]:
    """All violated partition invariants, as readable strings."""
    bad = []
    r = part.radius
    if part.cell_of.shape != (region.size,) or part.cell_of.min() < 0:
        bad.append("cells do not cover every grid point")
    D = kernels.pairwise_distances(space.code, region.points, part.centers)
    own = D[np.arange(region.size), part.cell_of]
    if np.any(own >= 2 * r):
        bad.append("a cell leaves the ball of radius 2r around its center")
    inner = D < r
    hit = np.argwhere(inner)
    if hit.size and np.any(part.cell_of[hit[:, 0]] != hit[:, 1]):
        bad.append("a point within r of a center belongs to another cell")
    cap = space.ahlfors_alpha * (2 * r) ** space.ahlfors_exponent
    if np.any(part.measures > cap * (1 + 1e-9)):
        bad.append(f"cell measure {part.measures.max():.4g} exceeds alpha (2r)^gamma = {cap:.4g}")
    cc = kernels.pairwise_distances(space.code, part.centers, part.centers)
    np.fill_diagonal(cc, np.inf)
    if part.n_cells > 1 and cc.min() < 2 * r * (1 - 1e-12):
        bad.append("two centers are closer than 2r")
    return bad


def crowding_count(space: SpaceModel, points, radius: float) -> int:
    """Largest number of points in an open ball of the given radius centred
    at one of the points (the point itself included)."""
    P = _as_points(points)
    if P.size == 0:
        return 0
    _check_points(space, P)
    return kernels.crowding(space.code, P, radius)


def separation(space: SpaceModel, points) -> float:
    P = _as_points(points)
    if P.shape[0] < 2:
        raise ValueError("separation needs at least two points")
    _check_points(space, P)
    return kernels.min_separation(space.code, P)


def one_per_cell(part: Partition, rng: np.random.Generator, region: Region) -> np.ndarray:
    """A random representative grid point from every cell."""
    reps = []
    for n in range(part.n_cells):
        m = part.members(n)
        reps.append(region.points[rng.choice(m)])
    return np.asarray(reps)
