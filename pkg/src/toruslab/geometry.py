"""Annular sectors, sector-sum disjointness, lattice counts and straight-line hitting times."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Sequence

import numpy as np
from scipy import optimize
from scipy.spatial import cKDTree

from .torus import ObservationRegion, TorusGeometry

HALF_PI = math.pi / 2
# closures that touch along a shared sector edge are only reached to ~1e-9 by
# the bounded least-squares search; they count as intersecting
WITNESS_TOL = 1e-8
MAX_CLOUD = 400_000


# sectors ---------------------------------------------------------------------

@dataclass(frozen=True)
class SectorFamily:
    """Sectors ``A_alpha`` of the quarter annulus ``|h|z| - 1| <= kappa^2 h^2``.

    ``variant="B"`` uses ``|h^2 |z|^2 - 1| <= kappa^2 h^2`` instead.
    """

    kappa: float
    h: float
    variant: str = "A"

    def __post_init__(self):
        if not 0 < self.h < 1 or self.kappa <= 0:
            raise ValueError("need kappa > 0 and 0 < h < 1")
        if self.variant not in ("A", "B"):
            raise ValueError("variant must be 'A' or 'B'")

    @property
    def epsilon(self) -> float:
        return self.kappa**2 * self.h**2

    @property
    def width(self) -> float:
        return self.h * self.kappa

    @property
    def n_sectors(self) -> int:
        return int(math.floor(math.pi / (2 * self.width)))

    def in_annulus(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        tol = 1e-12
        if self.variant == "A":
            return np.abs(self.h * r - 1) <= self.epsilon + tol
        return np.abs(self.h**2 * r**2 - 1) <= self.epsilon + tol

    def sector_index(self, x, y) -> np.ndarray:
        """Sector of each point (``-1`` outside the closed quarter annulus)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        theta = np.arctan2(y, x)
        idx = np.floor(theta / self.width + 1e-12).astype(int)
        ok = (x >= 0) & (y >= 0) & self.in_annulus(np.hypot(x, y))
        return np.where(ok, idx, -1)


def sector_membership(z: complex, family: SectorFamily, alpha: int) -> bool:
    z = complex(z)
    return bool(family.sector_index(z.real, z.imag) == alpha)


@dataclass(frozen=True)
class PolarBox:
    r0: float
    r1: float
    t0: float
    t1: float

    def sample(self, step: float) -> tuple[np.ndarray, float]:
        """Polar grid of the box and its covering radius (at most ``step``)."""
        nr = max(1, int(math.ceil((self.r1 - self.r0) * math.sqrt(2) / step)))
        arc = (self.t1 - self.t0) * self.r1
        nt = max(1, int(math.ceil(arc * math.sqrt(2) / step)))
        # cell centres; every point of a cell lies within (dr + darc) / 2 of its centre
        r = self.r0 + (np.arange(nr) + 0.5) * (self.r1 - self.r0) / nr
        t = self.t0 + (np.arange(nt) + 0.5) * (self.t1 - self.t0) / nt
        R, Tt = np.meshgrid(r, t, indexing="ij")
        pts = np.stack([(R * np.cos(Tt)).ravel(), (R * np.sin(Tt)).ravel()], axis=1)
        dr = (self.r1 - self.r0) / nr
        darc = self.r1 * (self.t1 - self.t0) / nt
        return pts, 0.5 * (dr + darc)


def rescaled_box(epsilon: float, alpha: int) -> PolarBox:
    """Closure of ``B_{eps,alpha}``: ``||z| - 1| <= eps``, ``arg z`` in ``[alpha, alpha + 1) sqrt(eps)``."""
    w = math.sqrt(epsilon)
    return PolarBox(1 - epsilon, 1 + epsilon, alpha * w, min((alpha + 1) * w, HALF_PI))


def rescaled_count(epsilon: float) -> int:
    return int(math.floor(math.pi / (2 * math.sqrt(epsilon))))


# Minkowski sums --------------------------------------------------------------

def _sum_bounds(b1: PolarBox, b2: PolarBox) -> tuple[float, float, float, float]:
    """Angle interval and modulus interval containing ``b1 + b2``."""
    lo_t, hi_t = min(b1.t0, b2.t0), max(b1.t1, b2.t1)
    gap_max = max(abs(b1.t1 - b2.t0), abs(b2.t1 - b1.t0))
    gap_min = max(0.0, b1.t0 - b2.t1, b2.t0 - b1.t1)

    def mod(r1, r2, g):
        return math.sqrt(max(r1 * r1 + r2 * r2 + 2 * r1 * r2 * math.cos(g), 0.0))

    return lo_t, hi_t, mod(b1.r0, b2.r0, gap_max), mod(b1.r1, b2.r1, gap_min)


_DIRECTIONS = np.linspace(0.0, 2 * math.pi, 256, endpoint=False)


def _support(b: PolarBox, phi: np.ndarray) -> np.ndarray:
    """Exact support function ``max_{z in b} z . (cos phi, sin phi)``."""
    d = np.mod(phi - 0.5 * (b.t0 + b.t1) + math.pi, 2 * math.pi) - math.pi
    gap = np.maximum(np.abs(d) - 0.5 * (b.t1 - b.t0), 0.0)
    c = np.cos(gap)
    return np.where(c >= 0, b.r1 * c, b.r0 * c)


def _cone_certificate(p1, p2) -> float:
    """Positive separation if ``p1[0] + p1[1]`` and ``p2[0] + p2[1]`` are certifiably disjoint, else 0.

    Two tests: the bounding polar boxes of the sums, and a separating line
    found among fixed directions using support functions, which add under
    Minkowski sums.
    """
    a0, a1, m0, m1 = _sum_bounds(*p1)
    b0, b1, n0, n1 = _sum_bounds(*p2)
    ang = max(b0 - a1, a0 - b1)
    rad = max(n0 - m1, m0 - n1)
    phi = _DIRECTIONS
    h1 = _support(p1[0], phi) + _support(p1[1], phi)
    low2 = -(_support(p2[0], phi + math.pi) + _support(p2[1], phi + math.pi))
    line = float(np.max(low2 - h1))
    h2 = _support(p2[0], phi) + _support(p2[1], phi)
    low1 = -(_support(p1[0], phi + math.pi) + _support(p1[1], phi + math.pi))
    line = max(line, float(np.max(low1 - h2)))
    return max(ang, rad, line, 0.0)


def _witness(p1, p2, starts: int = 4, seed: int = 0, max_nfev: int = 200) -> float:
    """Smallest ``|z1 + z2 - z3 - z4|`` found by bounded least squares."""
    boxes = list(p1) + list(p2)
    lo = np.array([v for b in boxes for v in (b.r0, b.t0)])
    hi = np.array([v for b in boxes for v in (b.r1, b.t1)])
    sign = np.array([1, 1, -1, -1])

    def res(x):
        r, t = x[0::2], x[1::2]
        return np.array([np.sum(sign * r * np.cos(t)), np.sum(sign * r * np.sin(t))])

    g = np.random.Generator(np.random.Philox(key=seed))
    best = math.inf
    for k in range(starts):
        x0 = 0.5 * (lo + hi) if k == 0 else g.uniform(lo, hi)
        sol = optimize.least_squares(res, x0, bounds=(lo, hi), xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=max_nfev)
        best = min(best, float(np.linalg.norm(res(sol.x))))
        if best <= 1e-12:
            break
    return best


def _split(b: PolarBox) -> tuple[PolarBox, PolarBox]:
    if (b.r1 - b.r0) >= b.r1 * (b.t1 - b.t0):
        m = 0.5 * (b.r0 + b.r1)
        return PolarBox(b.r0, m, b.t0, b.t1), PolarBox(m, b.r1, b.t0, b.t1)
    m = 0.5 * (b.t0 + b.t1)
    return PolarBox(b.r0, b.r1, b.t0, m), PolarBox(b.r0, b.r1, m, b.t1)


def _subdivision_certificate(p1, p2, max_pieces: int = 4000) -> float:
    """Smallest polar-box separation over a subdivision certifying disjointness, or 0 if none found."""
    stack = [tuple(p1) + tuple(p2)]
    margin = math.inf
    pieces = 0
    while stack:
        boxes = stack.pop()
        sep = _cone_certificate(boxes[:2], boxes[2:])
        if sep > 0:
            margin = min(margin, sep)
            continue
        pieces += 1
        if pieces > max_pieces:
            return 0.0
        k = max(range(4), key=lambda i: max(boxes[i].r1 - boxes[i].r0, boxes[i].r1 * (boxes[i].t1 - boxes[i].t0)))
        for half in _split(boxes[k]):
            stack.append(boxes[:k] + (half,) + boxes[k + 1:])
    return margin


@dataclass(frozen=True)
class DisjointnessVerdict:
    status: str  # "intersect" | "disjoint" | "unknown"
    margin: float = 0.0
    method: str = ""


class _SumClouds:
    """Sampled Minkowski sums ``B_a + B_b`` with KD-trees, cached per grid step."""

    def __init__(self, epsilon: float):
        self.epsilon = epsilon
        self._cache: dict = {}

    def get(self, a: int, b: int, step: float):
        key = (min(a, b), max(a, b), step)
        if key not in self._cache:
            pa, ra = rescaled_box(self.epsilon, a).sample(step)
            pb, rb = rescaled_box(self.epsilon, b).sample(step)
            if len(pa) * len(pb) > MAX_CLOUD:
                return None
            pts = (pa[:, None, :] + pb[None, :, :]).reshape(-1, 2)
            self._cache[key] = (pts, cKDTree(pts), ra + rb)
        return self._cache[key]


def minkowski_disjointness(epsilon: float, a1: int, a2: int, a3: int, a4: int, grid_step: float = 0.01,
                           refinements: int = 2, clouds: _SumClouds | None = None) -> DisjointnessVerdict:
    """Decide whether ``B_a1 + B_a2`` meets ``B_a3 + B_a4`` (closures of the rescaled sectors).

    Disjointness is certified by separated bounding polar boxes, first for the
    whole sectors and then over an adaptive subdivision; sampled clouds whose
    nearest-neighbour distance exceeds the covering error are the last resort.
    Intersection is certified by an explicit witness.
    """
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    if sorted((a1, a2)) == sorted((a3, a4)):
        return DisjointnessVerdict("intersect", 0.0, "identical")
    p1 = (rescaled_box(epsilon, a1), rescaled_box(epsilon, a2))
    p2 = (rescaled_box(epsilon, a3), rescaled_box(epsilon, a4))
    sep = _cone_certificate(p1, p2)
    if sep > 0:
        return DisjointnessVerdict("disjoint", sep, "polar-box")
    if _witness(p1, p2) <= WITNESS_TOL:
        return DisjointnessVerdict("intersect", 0.0, "witness")
    sep = _subdivision_certificate(p1, p2)
    if sep > 0:
        return DisjointnessVerdict("disjoint", sep, "subdivision")
    if _witness(p1, p2, starts=40, seed=1, max_nfev=2000) <= WITNESS_TOL:
        return DisjointnessVerdict("intersect", 0.0, "witness")
    clouds = clouds or _SumClouds(epsilon)
    step = grid_step
    for _ in range(refinements + 1):
        c1, c2 = clouds.get(a1, a2, step), clouds.get(a3, a4, step)
        if c1 is None or c2 is None:
            break
        pts1, _, rho1 = c1
        _, tree2, rho2 = c2
        m = float(tree2.query(pts1)[0].min())
        margin = m - rho1 - rho2
        if margin > 0:
            return DisjointnessVerdict("disjoint", margin, f"cloud(step={step:g})")
        step /= 2
    return DisjointnessVerdict("unknown", 0.0, "unresolved")


def index_distance(a1, a2, a3, a4) -> int:
    return min(abs(a1 - a3) + abs(a2 - a4), abs(a1 - a4) + abs(a2 - a3))


@dataclass
class LemmaGeomReport:
    epsilon: float
    n_sectors: int
    q_min: int
    q_bound: int
    quadruples: int
    intersecting: int
    disjoint: int
    inconclusive: list = field(default_factory=list)
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.inconclusive and not self.violations

    def summary(self) -> dict:
        return {"epsilon": self.epsilon, "N_sectors": self.n_sectors, "Q_min": self.q_min, "Q": self.q_bound,
                "quadruples": self.quadruples, "intersecting": self.intersecting, "disjoint": self.disjoint,
                "inconclusive_count": len(self.inconclusive), "violations": len(self.violations)}


def lemma_geom_bruteforce(epsilon: float, Q: int = 12, grid_step: float = 0.01, eps0: float = 1 / 16) -> LemmaGeomReport:
    """Exhaustive check over all index quadruples ``0..N_eps``.

    Quadruples are visited as unordered pairs of unordered pairs, which covers
    every ordered quadruple through the symmetries of the sum.
    """
    if epsilon > eps0:
        raise ValueError(f"epsilon must not exceed {eps0}")
    n = rescaled_count(epsilon)
    pairs = list(combinations_with_replacement(range(n + 1), 2))
    clouds = _SumClouds(epsilon)
    rep = LemmaGeomReport(epsilon, n, 0, Q, (n + 1) ** 4, 0, 0)
    for i, (a1, a2) in enumerate(pairs):
        for a3, a4 in pairs[i:]:
            v = minkowski_disjointness(epsilon, a1, a2, a3, a4, grid_step, clouds=clouds)
            d = index_distance(a1, a2, a3, a4)
            if v.status == "intersect":
                rep.intersecting += 1
                rep.q_min = max(rep.q_min, d)
                if d > Q:
                    rep.violations.append((a1, a2, a3, a4))
            elif v.status == "disjoint":
                rep.disjoint += 1
            else:
                rep.inconclusive.append((a1, a2, a3, a4))
    return rep


# lattice counting ------------------------------------------------------------

@dataclass(frozen=True)
class SectorCounts:
    family: SectorFamily
    counts: np.ndarray  # index alpha -> number of lattice points
    quadrant_total: int

    @property
    def partition_ok(self) -> bool:
        return int(self.counts.sum()) == self.quadrant_total

    def rectangle_constant(self) -> float:
        k, h = self.family.kappa, self.family.h
        return float(self.counts.max(initial=0) / ((1 + k) * (1 + 3 * k * k * h)))

    def square_bound_ok(self, C: float = 8.0) -> bool:
        return bool(self.counts.max(initial=0) <= C * (1 + self.family.kappa) ** 2)


def _quadrant_annulus_points(geometry: TorusGeometry, family: SectorFamily) -> np.ndarray:
    rmax = (1 + family.epsilon) / family.h if family.variant == "A" else math.sqrt(1 + family.epsilon) / family.h
    nx = int(math.ceil(rmax * geometry.period_x / (2 * math.pi))) + 1
    ny = int(math.ceil(rmax * geometry.period_y / (2 * math.pi))) + 1
    n1, n2 = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), indexing="ij")
    xi = geometry.frequency(np.stack([n1.ravel(), n2.ravel()], axis=1))
    keep = family.in_annulus(np.hypot(xi[:, 0], xi[:, 1]))
    return xi[keep]


def sector_counts(geometry: TorusGeometry, family: SectorFamily) -> SectorCounts:
    """Dual-lattice points in every sector of the quarter annulus."""
    xi = _quadrant_annulus_points(geometry, family)
    idx = family.sector_index(xi[:, 0], xi[:, 1])
    counts = np.bincount(idx[idx >= 0], minlength=family.n_sectors + 1)
    return SectorCounts(family, counts, len(xi))


def lattice_points_in_sector(geometry: TorusGeometry, family: SectorFamily, alpha: int) -> dict:
    sc = sector_counts(geometry, family)
    count = int(sc.counts[alpha]) if alpha < len(sc.counts) else 0
    k, h = family.kappa, family.h
    return {"alpha": alpha, "count": count, "rectangle_scale": (1 + k) * (1 + 3 * k * k * h),
            "square_scale": (1 + k) ** 2}


# hitting fractions -----------------------------------------------------------

@dataclass(frozen=True)
class HittingReport:
    direction: tuple
    z0: tuple
    T: float
    fraction: float
    refinement_delta: float


def _unit_direction(geometry: TorusGeometry, direction) -> tuple[np.ndarray, float | None]:
    """Unit vector and closing length (``None`` for a non-lattice direction)."""
    if isinstance(direction, (tuple, list)) and len(direction) == 2 and all(isinstance(v, (int, np.integer)) for v in direction):
        p, q = int(direction[0]), int(direction[1])
        if math.gcd(p, q) != 1:
            raise ValueError("lattice directions must be coprime pairs")
        v = np.array([p * geometry.period_x, q * geometry.period_y], dtype=float)
        length = float(np.hypot(*v))
        return v / length, length
    if isinstance(direction, (tuple, list)):
        v = np.asarray(direction, dtype=float)
        return v / np.hypot(*v), None
    theta = float(direction)
    return np.array([math.cos(theta), math.sin(theta)]), None


def _time_in_region(geometry: TorusGeometry, region: ObservationRegion, z0, zeta, s0: float, s1: float) -> float:
    """Exact measure of ``{s in [s0, s1] : z0 + s zeta in Omega (mod lattice)}``."""
    A, B = geometry.period_x, geometry.period_y
    cuts = [np.array([s0, s1])]
    for axis, period, edges in ((0, A, {v for r in region.rectangles for v in r[:2]}),
                                (1, B, {v for r in region.rectangles for v in r[2:]})):
        c = zeta[axis]
        if abs(c) < 1e-15:
            continue
        lo, hi = sorted((z0[axis] + s0 * c, z0[axis] + s1 * c))
        for e in edges:
            k = np.arange(math.floor((lo - e) / period) - 1, math.ceil((hi - e) / period) + 2)
            s = (e + k * period - z0[axis]) / c
            cuts.append(s[(s > s0) & (s < s1)])
    s = np.unique(np.concatenate(cuts))
    mid = 0.5 * (s[1:] + s[:-1])
    x = np.mod(z0[0] + mid * zeta[0], A)
    y = np.mod(z0[1] + mid * zeta[1], B)
    inside = region.contains(x, y)
    return float(np.sum(np.diff(s)[inside]))


def _sampled_fraction(geometry, region, z0, zeta, T, samples) -> float:
    s = (np.arange(samples) + 0.5) * T / samples
    x = np.mod(z0[0] + s * zeta[0], geometry.period_x)
    y = np.mod(z0[1] + s * zeta[1], geometry.period_y)
    return float(region.contains(x, y).mean())


def hitting_fraction(geometry: TorusGeometry, direction, z0, region: ObservationRegion, T: float,
                     samples: int = 20_000) -> HittingReport:
    """Fraction of ``[0, T]`` the line ``z0 + s zeta`` spends in ``Omega``.

    ``direction`` is a coprime pair ``(p, q)`` (the lattice vector ``(pA, qB)``),
    a real vector, or an angle.  Lattice directions are integrated over one
    closing period and extended periodically.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    zeta, period = _unit_direction(geometry, direction)
    z0 = np.asarray(z0, dtype=float)
    if period is not None:
        full, rest = divmod(T, period)
        per = _time_in_region(geometry, region, z0, zeta, 0.0, period)
        tail = _time_in_region(geometry, region, z0, zeta, 0.0, rest) if rest > 0 else 0.0
        frac = (full * per + tail) / T
    else:
        frac = _time_in_region(geometry, region, z0, zeta, 0.0, T) / T
    s1 = _sampled_fraction(geometry, region, z0, zeta, T, samples)
    s2 = _sampled_fraction(geometry, region, z0, zeta, T, 2 * samples)
    delta = max(abs(frac - s1), abs(frac - s2))
    dir_out = tuple(direction) if isinstance(direction, (tuple, list)) else (float(direction),)
    return HittingReport(dir_out, tuple(z0.tolist()), float(T), float(min(max(frac, 0.0), 1.0)), float(delta))


def coprime_directions(n_min: float, n_max: float) -> list[tuple[int, int]]:
    """Primitive ``(p, q)`` with ``p >= 0`` (and ``q = 1`` when ``p = 0``) and norm in ``[n_min, n_max]``."""
    out = []
    m = int(math.floor(n_max))
    for p in range(0, m + 1):
        for q in range(-m, m + 1):
            if p == 0 and q != 1:
                continue
            if math.gcd(p, q) != 1:
                continue
            r = math.hypot(p, q)
            if n_min <= r <= n_max:
                out.append((p, q))
    return out


def rational_hitting_lowerbound(geometry: TorusGeometry, region: ObservationRegion, N: float, norm_cap: float,
                                z_grid: int = 8) -> dict:
    """Minimum periodic-orbit hitting fraction over directions and base points."""
    if N > norm_cap:
        raise ValueError("N must not exceed norm_cap")
    A, B = geometry.period_x, geometry.period_y
    zs = [(A * (i + 0.5) / z_grid, B * (j + 0.5) / z_grid) for i in range(z_grid) for j in range(z_grid)]
    best = {"delta": 1.0, "direction": None, "z": None, "directions": 0}
    dirs = coprime_directions(N, norm_cap)
    best["directions"] = len(dirs)
    for d in dirs:
        zeta, period = _unit_direction(geometry, d)
        for z in zs:
            frac = _time_in_region(geometry, region, np.asarray(z), zeta, 0.0, period) / period
            if frac < best["delta"]:
                best.update(delta=frac, direction=d, z=z)
    return best


def inscribed_square(center: Sequence[float], radius: float) -> ObservationRegion:
    """Axis-aligned square inscribed in the disc of the given centre and radius."""
    s = radius / math.sqrt(2)
    cx, cy = center
    return ObservationRegion(((cx - s, cx + s, cy - s, cy + s),))
