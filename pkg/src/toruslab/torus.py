"""Torus geometry, Fourier fields on the dual lattice, observation regions and
grid quadrature.

Conventions
-----------
The torus is ``R^2 / (A Z x B Z)``.  Lattice point ``n = (n1, n2)`` carries the
physical frequency ``xi_n = (2 pi n1 / A, 2 pi n2 / B)`` and the orthonormal
exponential ``e_n(z) = exp(i xi_n . z) / sqrt(A B)``.  A :class:`FourierField`
stores the coefficients of a function in that orthonormal basis on the square
box ``|n1|, |n2| <= N``, so its L2 norm is the l2 norm of the coefficient array.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
from scipy import fft

__all__ = [
    "TorusGeometry",
    "FourierField",
    "ObservationRegion",
    "GridFunction",
    "box_points",
    "weighted_norm_sq",
    "synthesize_grid",
    "analyze_grid",
    "lp_norm",
    "restrict_to_region",
    "rng",
]


def rng(seed: int) -> np.random.Generator:
    """Counter-based generator used for every random draw in the package."""
    return np.random.Generator(np.random.Philox(key=int(seed)))


@dataclass(frozen=True)
class TorusGeometry:
    period_x: float = 2 * math.pi
    period_y: float = 2 * math.pi

    def __post_init__(self):
        if not (self.period_x > 0 and self.period_y > 0):
            raise ValueError("torus periods must be positive")

    @property
    def area(self) -> float:
        return self.period_x * self.period_y

    def frequency(self, n) -> np.ndarray:
        n = np.asarray(n, dtype=float)
        scale = np.array([2 * math.pi / self.period_x, 2 * math.pi / self.period_y])
        return n * scale


def weighted_norm_sq(geometry: TorusGeometry, n) -> np.ndarray | float:
    """|xi_n|^2 for one lattice point or an array of shape (..., 2)."""
    xi = geometry.frequency(n)
    out = np.sum(xi**2, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def box_points(N: int) -> np.ndarray:
    """Lattice points of the box ``|n1|, |n2| <= N`` in n1-major order, shape (d, 2)."""
    r = np.arange(-N, N + 1)
    n1, n2 = np.meshgrid(r, r, indexing="ij")
    return np.stack([n1.ravel(), n2.ravel()], axis=1)


@dataclass(frozen=True, eq=False)
class FourierField:
    """Finitely supported Fourier series; ``coeffs[n1 + N, n2 + N] = c_n``."""

    geometry: TorusGeometry
    cutoff: int
    coeffs: np.ndarray

    def __post_init__(self):
        side = 2 * self.cutoff + 1
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (side, side):
            raise ValueError(f"coefficient array must have shape {(side, side)}, got {c.shape}")
        object.__setattr__(self, "coeffs", c)

    # constructors
    @classmethod
    def zeros(cls, geometry: TorusGeometry, N: int) -> "FourierField":
        return cls(geometry, N, np.zeros((2 * N + 1, 2 * N + 1), dtype=complex))

    @classmethod
    def from_dict(cls, geometry: TorusGeometry, N: int, coeffs: Mapping) -> "FourierField":
        """Orthonormal-basis coefficients given as ``{(n1, n2): c_n}``."""
        out = np.zeros((2 * N + 1, 2 * N + 1), dtype=complex)
        for (n1, n2), c in coeffs.items():
            if abs(n1) > N or abs(n2) > N:
                raise ValueError(f"mode {(n1, n2)} outside cutoff {N}")
            out[n1 + N, n2 + N] += c
        return cls(geometry, N, out)

    @classmethod
    def from_plain(cls, geometry: TorusGeometry, N: int, amplitudes: Mapping) -> "FourierField":
        """Field equal to ``sum_n a_n exp(i xi_n . z)`` (no basis normalisation)."""
        s = math.sqrt(geometry.area)
        return cls.from_dict(geometry, N, {n: a * s for n, a in amplitudes.items()})

    @classmethod
    def constant(cls, geometry: TorusGeometry, N: int, value: complex) -> "FourierField":
        return cls.from_plain(geometry, N, {(0, 0): value})

    @classmethod
    def from_vector(cls, geometry: TorusGeometry, N: int, vec) -> "FourierField":
        side = 2 * N + 1
        return cls(geometry, N, np.asarray(vec, dtype=complex).reshape(side, side))

    @classmethod
    def random(cls, geometry: TorusGeometry, N: int, seed: int, radius: int | None = None) -> "FourierField":
        """Unit-norm complex Gaussian field, optionally supported on ``|n|_inf <= radius``."""
        g = rng(seed)
        side = 2 * N + 1
        c = g.standard_normal((side, side)) + 1j * g.standard_normal((side, side))
        if radius is not None:
            pts = box_points(N)
            mask = (np.abs(pts).max(axis=1) <= radius).reshape(side, side)
            c = np.where(mask, c, 0)
        return cls(geometry, N, c / np.linalg.norm(c))

    # accessors
    @property
    def vector(self) -> np.ndarray:
        return self.coeffs.ravel()

    def coefficient(self, n) -> complex:
        n1, n2 = n
        N = self.cutoff
        if abs(n1) > N or abs(n2) > N:
            return 0j
        return complex(self.coeffs[n1 + N, n2 + N])

    def plain(self, n) -> complex:
        return self.coefficient(n) / math.sqrt(self.geometry.area)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def resized(self, N: int) -> "FourierField":
        """Zero-pad or truncate to a new cutoff."""
        out = np.zeros((2 * N + 1, 2 * N + 1), dtype=complex)
        m = min(N, self.cutoff)
        out[N - m:N + m + 1, N - m:N + m + 1] = self.coeffs[
            self.cutoff - m:self.cutoff + m + 1, self.cutoff - m:self.cutoff + m + 1
        ]
        return FourierField(self.geometry, N, out)

    def is_real(self, tol: float = 1e-12) -> bool:
        """Hermitian symmetry ``c_{-n} = conj(c_n)``."""
        c = self.coeffs
        return bool(np.max(np.abs(c - np.conj(c[::-1, ::-1])), initial=0.0) <= tol * max(1.0, np.abs(c).max(initial=0.0)))

    def translated(self, shift) -> "FourierField":
        """Coefficients of ``u(z - shift)``."""
        xi = self.geometry.frequency(box_points(self.cutoff))
        phase = np.exp(-1j * xi @ np.asarray(shift, dtype=float))
        return FourierField(self.geometry, self.cutoff, (self.vector * phase).reshape(self.coeffs.shape))

    def __add__(self, other: "FourierField") -> "FourierField":
        N = max(self.cutoff, other.cutoff)
        return FourierField(self.geometry, N, self.resized(N).coeffs + other.resized(N).coeffs)

    def __sub__(self, other: "FourierField") -> "FourierField":
        return self + (-1) * other

    def __mul__(self, scalar) -> "FourierField":
        return FourierField(self.geometry, self.cutoff, scalar * self.coeffs)

    __rmul__ = __mul__

    def __neg__(self):
        return -1 * self


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples on the ``M x M`` grid ``(j A / M, k B / M)``."""

    geometry: TorusGeometry
    samples: np.ndarray

    @property
    def M(self) -> int:
        return self.samples.shape[0]

    def points(self) -> tuple[np.ndarray, np.ndarray]:
        M = self.M
        x = np.arange(M) * self.geometry.period_x / M
        y = np.arange(M) * self.geometry.period_y / M
        return np.meshgrid(x, y, indexing="ij")

    def integral(self, values=None) -> complex:
        v = self.samples if values is None else values
        return complex(v.sum() * self.geometry.area / self.M**2)


def synthesize_grid(field: FourierField, M: int) -> GridFunction:
    """Evaluate the field on the ``M x M`` grid (inverse DFT)."""
    N = field.cutoff
    if M < 2 * N + 1:
        raise ValueError(f"grid M={M} aliases a degree-{N} field; need M >= {2 * N + 1}")
    spec = np.zeros((M, M), dtype=complex)
    idx = np.arange(-N, N + 1) % M
    spec[np.ix_(idx, idx)] = field.coeffs
    samples = fft.ifft2(spec) * (M * M / math.sqrt(field.geometry.area))
    return GridFunction(field.geometry, samples)


def analyze_grid(grid: GridFunction, N: int) -> FourierField:
    """Coefficients on the box of cutoff ``N`` from grid samples (forward DFT)."""
    M = grid.M
    if M < 2 * N + 1:
        raise ValueError(f"grid M={M} cannot resolve cutoff {N}")
    spec = fft.fft2(grid.samples) * (math.sqrt(grid.geometry.area) / (M * M))
    idx = np.arange(-N, N + 1) % M
    return FourierField(grid.geometry, N, spec[np.ix_(idx, idx)])


def _parse_p(p) -> float:
    if isinstance(p, str):
        p = {"inf": math.inf, "4/3": 4 / 3}.get(p, p)
    p = float(p)
    if not any(math.isclose(p, q) for q in (2.0, 4.0, 4 / 3)) and p != math.inf:
        raise ValueError(f"unsupported exponent p={p}; use 2, 4/3, 4 or inf")
    return p


def lp_grid_size(N: int, p, oversample: int = 2) -> int:
    """Grid size used by :func:`lp_norm` for a degree-``N`` field."""
    p = _parse_p(p)
    M = oversample * (2 * N + 1)
    if math.isclose(p, 4.0):
        M = max(M, 4 * N + 1)
    return M


def lp_norm(field: FourierField, p=2, oversample: int = 2) -> float:
    """Quadrature value of ``||u||_{L^p(T^2)}``.

    p=2 and p=4 are exact on the chosen grid (``M >= 4N + 1`` for p=4); p=4/3
    has no exact rule and requires ``oversample >= 4``.  p=inf is the maximum
    over grid samples.
    """
    p = _parse_p(p)
    if math.isclose(p, 4 / 3) and oversample < 4:
        raise ValueError("L^{4/3} quadrature requires oversample >= 4")
    M = lp_grid_size(field.cutoff, p, oversample)
    u = np.abs(synthesize_grid(field, M).samples)
    top = float(u.max(initial=0.0))
    if p == math.inf or top == 0.0:
        return top
    w = field.geometry.area / M**2
    return top * float((w * np.sum((u / top) ** p)) ** (1 / p))  # scaled against under/overflow


@dataclass(frozen=True)
class ObservationRegion:
    """Union of half-open axis-aligned rectangles ``[x0, x1) x [y0, y1)``."""

    rectangles: tuple[tuple[float, float, float, float], ...]
    cells: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        rects = tuple(tuple(float(v) for v in r) for r in self.rectangles)
        if not rects:
            raise ValueError("observation region must contain at least one rectangle")
        for x0, x1, y0, y1 in rects:
            if not (x1 > x0 and y1 > y0):
                raise ValueError(f"rectangle {(x0, x1, y0, y1)} has no area")
        object.__setattr__(self, "rectangles", rects)
        object.__setattr__(self, "cells", _disjoint_cells(rects))

    @classmethod
    def full(cls, geometry: TorusGeometry) -> "ObservationRegion":
        return cls(((0.0, geometry.period_x, 0.0, geometry.period_y),))

    def validate(self, geometry: TorusGeometry) -> None:
        A, B = geometry.period_x, geometry.period_y
        for x0, x1, y0, y1 in self.rectangles:
            if x0 < 0 or y0 < 0 or x1 > A * (1 + 1e-12) or y1 > B * (1 + 1e-12):
                raise ValueError("rectangles must lie in the fundamental domain")

    def measure(self) -> float:
        return sum((x1 - x0) * (y1 - y0) for x0, x1, y0, y1 in self.cells)

    def contains(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast(x, y).shape, dtype=bool)
        for x0, x1, y0, y1 in self.rectangles:
            out |= (x >= x0) & (x < x1) & (y >= y0) & (y < y1)
        return out

    def indicator(self, geometry: TorusGeometry, M: int) -> np.ndarray:
        g = GridFunction(geometry, np.zeros((M, M)))
        X, Y = g.points()
        return self.contains(X, Y).astype(float)

    def fourier_table(self, geometry: TorusGeometry, K: int) -> np.ndarray:
        """``(1/AB) int_Omega exp(i xi_d . z) dz`` for ``|d1|, |d2| <= K``."""
        d = np.arange(-K, K + 1)
        kx = 2 * math.pi * d / geometry.period_x
        ky = 2 * math.pi * d / geometry.period_y
        table = np.zeros((2 * K + 1, 2 * K + 1), dtype=complex)
        for x0, x1, y0, y1 in self.cells:
            table += np.outer(_exp_integral(kx, x0, x1), _exp_integral(ky, y0, y1))
        return table / geometry.area

    def galerkin_matrix(self, geometry: TorusGeometry, N: int) -> np.ndarray:
        """Exact matrix ``<1_Omega e_b, e_a>`` on the box of cutoff ``N``."""
        table = self.fourier_table(geometry, 2 * N)
        pts = box_points(N)
        diff = pts[None, :, :] - pts[:, None, :] + 2 * N  # n_b - n_a
        return table[diff[..., 0], diff[..., 1]]


def _exp_integral(k: np.ndarray, a: float, b: float) -> np.ndarray:
    out = np.empty(k.shape, dtype=complex)
    small = np.abs(k) * (b - a) < 1e-12
    out[small] = b - a
    ks = k[~small]
    out[~small] = (np.exp(1j * ks * b) - np.exp(1j * ks * a)) / (1j * ks)
    return out


def _disjoint_cells(rects) -> tuple:
    xs = sorted({v for r in rects for v in r[:2]})
    ys = sorted({v for r in rects for v in r[2:]})
    cells = []
    for i in range(len(xs) - 1):
        xm = 0.5 * (xs[i] + xs[i + 1])
        for j in range(len(ys) - 1):
            ym = 0.5 * (ys[j] + ys[j + 1])
            if any(x0 <= xm < x1 and y0 <= ym < y1 for x0, x1, y0, y1 in rects):
                cells.append((xs[i], xs[i + 1], ys[j], ys[j + 1]))
    return tuple(cells)


def restrict_to_region(field: FourierField, region: ObservationRegion, M: int) -> tuple[GridFunction, float]:
    """``1_Omega u`` on the grid and its quadrature ``L^2(Omega)`` norm."""
    grid = synthesize_grid(field, M)
    chi = region.indicator(field.geometry, M)
    restricted = GridFunction(field.geometry, grid.samples * chi)
    w = field.geometry.area / M**2
    return restricted, float(math.sqrt(w * np.sum(np.abs(restricted.samples) ** 2)))


def region_norm(field: FourierField, region: ObservationRegion) -> float:
    """Exact ``||u||_{L^2(Omega)}`` through the Galerkin matrix of the indicator."""
    Mo = region.galerkin_matrix(field.geometry, field.cutoff)
    v = field.vector
    return float(math.sqrt(max(np.real(np.vdot(v, Mo @ v)), 0.0)))


def intervals_galerkin_1d(intervals: Iterable[tuple[float, float]], N: int, period: float = 2 * math.pi) -> np.ndarray:
    """Exact ``<1_omega e_m, e_n>`` for ``e_n = exp(i n x)/sqrt(period)``, ``|n| <= N``."""
    intervals = [(float(a), float(b)) for a, b in intervals]
    if not intervals or any(b <= a for a, b in intervals):
        raise ValueError("observation set must be a nonempty list of intervals")
    # merge overlaps
    merged = []
    for a, b in sorted(intervals):
        if merged and a <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], b))
        else:
            merged.append((a, b))
    d = np.arange(-2 * N, 2 * N + 1)
    k = 2 * math.pi * d / period
    table = sum(_exp_integral(k, a, b) for a, b in merged) / period
    n = np.arange(-N, N + 1)
    return table[(n[None, :] - n[:, None]) + 2 * N]
