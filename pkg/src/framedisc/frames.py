"""Continuous frames discretized on quadrature grids.

The Hilbert space ``H`` is modelled by ``C^n``: vectors are samples of a
function on an ``n``-point grid scaled by the square roots of the grid
weights, so the Euclidean inner product approximates the ``L^2`` one. A
model may further restrict to a subspace ("band") given by an orthonormal
basis, in which case vectors are coordinates in that basis.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy import integrate

from .operators import HermitianOp, weighted_gram
from .spaces import Region, SpaceModel, euclidean_region, hyperbolic_half_plane


class InadmissibleWavelet(ValueError):
    pass


@dataclass(eq=False)
class FrameModel:
    """A continuous frame ``t -> Psi(t)`` sampled on ``region``'s grid.

    ``evaluate`` maps an ``(m, d)`` array of parameter points to an
    ``(m, dim)`` complex array. ``D`` is the declared bound on
    ``||Psi(t)||^2`` and ``tight_bound`` the frame bound of the underlying
    continuous tight frame, when known.
    """

    name: str
    space: SpaceModel
    region: Region
    dim: int
    evaluate: Callable[[np.ndarray], np.ndarray]
    D: float
    tight_bound: float | None = None
    params: dict = field(default_factory=dict)

    @cached_property
    def vectors(self) -> np.ndarray:
        V = np.asarray(self.evaluate(self.region.points), dtype=complex)
        if V.shape != (self.region.size, self.dim):
            raise ValueError(f"evaluate returned shape {V.shape}")
        V.setflags(write=False)
        return V

    @cached_property
    def norms_sq(self) -> np.ndarray:
        return np.einsum("ij,ij->i", self.vectors, self.vectors.conj()).real

    @cached_property
    def operator(self) -> HermitianOp:
        return frame_operator(self)

    @cached_property
    def reference_bounds(self) -> tuple[float, float]:
        w = self.operator.eigvalsh()
        return float(w[0]), float(w[-1])

    def describe(self) -> dict:
        A, B = self.reference_bounds
        return {
            "generator": self.name, "dim": self.dim, "grid_points": self.region.size,
            "D": self.D, "A_ref": A, "B_ref": B, "tight_bound": self.tight_bound,
            "params": self.params,
        }


def frame_operator(frame: FrameModel) -> HermitianOp:
    """Quadrature frame operator ``sum_i w_i T_{Psi(t_i)}``."""
    w = frame.region.weights
    if np.any(w <= 0):
        raise ValueError("grid weights must be positive")
    return HermitianOp(weighted_gram(frame.vectors, w))


def norm_bound_D(frame: FrameModel) -> tuple[float, float]:
    """Largest ``||Psi(t)||^2`` over the grid next to the declared ``D``."""
    top = float(frame.norms_sq.max())
    if top > frame.D * (1 + 1e-6):
        raise ValueError(f"declared D = {frame.D:.6g} is exceeded on the grid ({top:.6g})")
    return top, frame.D


def _period_density(width: float, step: float) -> float:
    # A sampled model is 1/step-periodic in the dual variable; a parameter
    # interval spanning several periods covers every frequency that often,
    # so the measure is normalized per period.
    periods = width * step
    return 1.0 / periods if periods >= 1.0 else 1.0


def _band_projector(basis):
    if basis is None:
        return lambda V: V
    Q = np.asarray(basis, dtype=complex)
    return lambda V: V @ Q.conj()


# ------------------------------------------------------------------ Gabor


def gaussian(width: float = 1.0):
    """``g(x) = exp(-pi (x / width)^2)``; ``||g||^2 = width / sqrt(2)``."""
    return lambda x: np.exp(-math.pi * (np.asarray(x) / width) ** 2)


def gabor_frame(window, n: int = 64, time_interval=(-8.0, 8.0), a_range=(-4.0, 4.0),
                b_range=(-4.0, 4.0), grid=(64, 64), band: float | None = None,
                ) -> FrameModel:
    """Short-time Fourier frame ``(a, b) -> e^{-2 pi i b x} g(x - a)``.

    ``window`` is a vectorized callable. The model lives on ``n`` midpoint
    samples ``s_k`` of ``time_interval``; ``band`` keeps only coordinates with
    ``|s_k| <= band`` (the central band covered by the translates).
    """
    t0, t1 = map(float, time_interval)
    h = (t1 - t0) / n
    s = t0 + h * (np.arange(n) + 0.5)
    g_s = np.asarray(window(s), dtype=complex)
    norm_g = float(h * np.sum(np.abs(g_s) ** 2))
    if norm_g == 0.0:
        raise ValueError("window is identically zero on the grid")
    keep = np.arange(n) if band is None else np.flatnonzero(np.abs(s) <= band)
    if keep.size == 0:
        raise ValueError("central band is empty")
    s_keep = s[keep]
    density = _period_density(b_range[1] - b_range[0], h)
    space = euclidean_region(2, density=density)
    region = Region(space, (a_range[0], b_range[0]), (a_range[1], b_range[1]), grid)
    root_h = math.sqrt(h)

    def evaluate(P):
        P = np.atleast_2d(P)
        a, b = P[:, :1], P[:, 1:2]
        return root_h * np.exp(-2j * math.pi * b * s_keep) * window(s_keep - a)

    return FrameModel(
        "gabor", space, region, keep.size, evaluate, D=norm_g, tight_bound=norm_g,
        params={"n": n, "time_interval": [t0, t1], "a_range": list(a_range),
                "b_range": list(b_range), "grid": list(grid), "band": band,
                "measure_density": density},
    )


# ------------------------------------------------------------ exponentials


def _interval_quadrature(intervals, n):
    intervals = [tuple(map(float, iv)) for iv in intervals]
    lengths = np.array([b - a for a, b in intervals])
    if lengths.size == 0 or np.any(lengths <= 0):
        raise ValueError("S must be a nonempty union of intervals of positive length")
    total = lengths.sum()
    counts = np.maximum(1, np.round(n * lengths / total).astype(int))
    counts[-1] += n - counts.sum()
    if counts[-1] <= 0:
        raise ValueError("too few quadrature nodes for the given intervals")
    nodes, weights = [], []
    for (a, b), c in zip(intervals, counts):
        h = (b - a) / c
        nodes.append(a + h * (np.arange(c) + 0.5))
        weights.append(np.full(c, h))
    return np.concatenate(nodes), np.concatenate(weights)


def exponential_frame(S=((0.0, 1.0),), n: int = 32, lam_box=(-16.0, 16.0),
                      grid: int = 256) -> FrameModel:
    """Fourier frame ``lambda -> e^{2 pi i lambda x}`` restricted to ``L^2(S)``."""
    s, w = _interval_quadrature(S, n)
    h = float(w.max())
    density = _period_density(lam_box[1] - lam_box[0], h)
    space = euclidean_region(1, density=density)
    region = Region(space, (lam_box[0],), (lam_box[1],), (grid,))
    root_w = np.sqrt(w)

    def evaluate(P):
        lam = np.atleast_2d(P)[:, :1]
        return root_w * np.exp(2j * math.pi * lam * s)

    return FrameModel(
        "exponential", space, region, n, evaluate, D=float(w.sum()), tight_bound=1.0,
        params={"S": [list(iv) for iv in S], "n": n, "lam_box": list(lam_box),
                "grid": grid, "measure_density": density},
    )


# ---------------------------------------------------------------- wavelets


@dataclass(frozen=True)
class WaveletSpec:
    """Frequency-side profile ``psi_hat`` with its support split into
    intervals on each half-line (endpoints may be infinite)."""

    profile: Callable[[np.ndarray], np.ndarray]
    positive: tuple = ((0.0, math.inf),)
    negative: tuple = ((-math.inf, 0.0),)
    name: str = "custom"

    def scaled(self, lam: float) -> WaveletSpec:
        """The profile ``xi -> psi_hat(lam xi)``."""
        f = self.profile
        return WaveletSpec(
            lambda xi: f(lam * np.asarray(xi)),
            tuple((a / lam, b / lam) for a, b in self.positive),
            tuple((a / lam, b / lam) for a, b in self.negative),
            f"{self.name}@{lam:g}",
        )


def band_indicator(lo: float = 1.0, hi: float = 2.0) -> WaveletSpec:
    def prof(xi):
        x = np.abs(np.asarray(xi, dtype=float))
        return ((x >= lo) & (x <= hi)).astype(float)

    return WaveletSpec(prof, ((lo, hi),), ((-hi, -lo),), "band-indicator")


def odd_gaussian_derivative() -> WaveletSpec:
    """``psi_hat(xi) = xi e^{-xi^2}``, so ``psi(x) = i pi^{3/2} x e^{-pi^2 x^2}``."""
    return WaveletSpec(lambda xi: np.asarray(xi) * np.exp(-np.asarray(xi) ** 2),
                       name="mexican-hat-like")


@dataclass(frozen=True)
class Calderon:
    left: float
    right: float

    @property
    def value(self) -> float:
        return 0.5 * (self.left + self.right)

    @property
    def defect(self) -> float:
        return abs(self.left - self.right)

    @property
    def admissible(self) -> bool:
        return self.value > 0 and self.defect <= 1e-6 * self.value


def _half_line_integral(profile, intervals):
    total = 0.0
    f = lambda x: abs(complex(profile(np.array([x]))[0])) ** 2 / abs(x) if x != 0 else 0.0
    for a, b in intervals:
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, _ = integrate.quad(f, a, b, limit=400, epsabs=1e-13, epsrel=1e-12)
            except integrate.IntegrationWarning as exc:
                raise ArithmeticError(f"Calderon integral over ({a}, {b}) does not converge") from exc
        if not math.isfinite(val):
            raise ArithmeticError("Calderon integral diverges")
        total += val
    return total


def calderon_constant(spec: WaveletSpec) -> Calderon:
    """Both half-line integrals of ``|psi_hat(xi)|^2 / |xi|``."""
    return Calderon(_half_line_integral(spec.profile, spec.negative),
                    _half_line_integral(spec.profile, spec.positive))


def wavelet_frame(spec: WaveletSpec, period: float = 4.0, freq_band=(1.0, 2.0),
                  a_range=(0.5, 2.0), grid=(64, 32)) -> FrameModel:
    """Continuous wavelet frame ``(b, a) -> a^{-1/2} psi((x - b) / a)`` with
    Haar measure ``a^-2 db da`` on the hyperbolic half plane.

    Functions are modelled as ``period``-periodic signals whose spectrum lies
    in ``freq_band <= |xi|``; vectors are their normalized Fourier
    coefficients ``a^{1/2} psi_hat(a xi_j) e^{-2 pi i b xi_j} / sqrt(period)``
    at ``xi_j = j / period``. The translation window spans one period.
    """
    cal = calderon_constant(spec)
    if not cal.admissible:
        raise InadmissibleWavelet(
            f"half-line integrals differ: {cal.left:.6g} vs {cal.right:.6g}")
    lo, hi = freq_band
    j = np.arange(math.ceil(lo * period - 1e-9), math.floor(hi * period + 1e-9) + 1)
    xi = np.concatenate([-j[::-1], j]) / period
    space = hyperbolic_half_plane()
    region = Region(space, (-period / 2, a_range[0]), (period / 2, a_range[1]), grid,
                    log_axes=(1,))
    scale = 1.0 / math.sqrt(period)

    def evaluate(P):
        P = np.atleast_2d(P)
        b, a = P[:, :1], P[:, 1:2]
        return scale * np.sqrt(a) * spec.profile(a * xi) * np.exp(-2j * math.pi * b * xi)

    V = evaluate(region.points)
    D = float(np.max(np.einsum("ij,ij->i", V, V.conj()).real))
    return FrameModel(
        "wavelet", space, region, xi.size, evaluate, D=D, tight_bound=cal.value,
        params={"profile": spec.name, "period": period, "freq_band": list(freq_band),
                "a_range": list(a_range), "grid": list(grid), "calderon": cal.value},
    )


# -------------------------------------------------------------------- sinc


def sinc_kernel(A: float, x, y):
    """``K(x, y) = sin(A (x - y)) / (pi (x - y))`` with the diagonal limit."""
    u = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    small = np.abs(u) < 1e-8
    safe = np.where(small, 1.0, u)
    return np.where(small, A / math.pi, np.sin(A * safe) / (math.pi * safe))


def sinc_kernel_frame(A: float = math.pi, interval=(-8.0, 8.0), n: int = 64,
                      grid: int = 256, x_interval=None, band_threshold: float | None = None,
                      ) -> FrameModel:
    """Reproducing-kernel frame ``x -> K(x, .)`` of the Paley-Wiener space.

    ``band_threshold`` restricts to the eigenvectors of the sampled kernel
    Gram matrix with eigenvalue at least the threshold.
    """
    if not A > 0:
        raise ValueError("bandwidth A must be positive")
    t0, t1 = map(float, interval)
    h = (t1 - t0) / n
    s = t0 + h * (np.arange(n) + 0.5)
    root_w = math.sqrt(h)
    x0, x1 = x_interval if x_interval is not None else (t0, t1)
    space = euclidean_region(1, density=1.0)
    region = Region(space, (x0,), (x1,), (grid,))
    basis = None
    if band_threshold is not None:
        G = h * sinc_kernel(A, s[:, None], s[None, :])
        ev, U = np.linalg.eigh(G)
        basis = U[:, ev >= band_threshold]
        if basis.shape[1] == 0:
            raise ValueError("no kernel eigenvalue reaches the band threshold")
    project = _band_projector(basis)

    def evaluate(P):
        x = np.atleast_2d(P)[:, :1]
        return project(root_w * sinc_kernel(A, x, s).astype(complex))

    dim = n if basis is None else basis.shape[1]
    return FrameModel(
        "sinc", space, region, dim, evaluate, D=A / math.pi, tight_bound=1.0,
        params={"A": A, "interval": [t0, t1], "n": n, "grid": grid,
                "x_interval": [x0, x1], "band_threshold": band_threshold},
    )
