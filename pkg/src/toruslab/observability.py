"""Observability Gramians on the 2-torus, shell restrictions, and periodic-direction frames."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import fft, integrate

from ._numerics import GramianReport, gramian_in_eigenbasis, iota, report_from_gramian
from .hamiltonian import Hamiltonian2D, SpectralProjectorSpec, build_hamiltonian
from .torus import FourierField, ObservationRegion, TorusGeometry, box_points, weighted_norm_sq


def observation_matrix(H: Hamiltonian2D, region: ObservationRegion, M: int | None = None) -> np.ndarray:
    """Galerkin matrix of ``1_Omega``; exact by default, grid-sampled if ``M`` is given."""
    region.validate(H.geometry)
    N = H.cutoff
    if M is None:
        return region.galerkin_matrix(H.geometry, N)
    if M < 4 * N + 1:
        raise ValueError(f"grid M={M} aliases products of two degree-{N} fields (need M >= {4 * N + 1})")
    chi = region.indicator(H.geometry, M)
    table = fft.ifft2(chi)
    pts = box_points(N)
    diff = (pts[None, :, :] - pts[:, None, :]) % M
    return table[diff[..., 0], diff[..., 1]]


def build_gramian(H: Hamiltonian2D, region: ObservationRegion, T: float,
                  M: int | None = None) -> tuple[np.ndarray, GramianReport]:
    """Gramian ``int_0^T U(t)^* 1_Omega U(t) dt`` in the eigenbasis of ``H``."""
    if T <= 0:
        raise ValueError("T must be positive")
    G = gramian_in_eigenbasis(H.eigensystem, observation_matrix(H, region, M), T)
    report = report_from_gramian(G, T, N=H.cutoff, region=[list(r) for r in region.rectangles])
    return G, report


def gramian_form(H: Hamiltonian2D, G: np.ndarray, u: FourierField) -> float:
    """``<G u, u>`` for a state given in Fourier coordinates."""
    a = H.eigensystem.eigenvectors.conj().T @ H.coerce(u)
    return float(np.real(np.vdot(a, G @ a)))


def observed_energy_quadrature(H: Hamiltonian2D, region: ObservationRegion, T: float, u: FourierField,
                               steps: int = 10_000) -> float:
    """``int_0^T ||1_Omega U(t) u||^2 dt`` by composite Simpson in time."""
    eig = H.eigensystem
    phi, lam = eig.eigenvectors, eig.eigenvalues
    obs = phi.conj().T @ region.galerkin_matrix(H.geometry, H.cutoff) @ phi
    a = phi.conj().T @ H.coerce(u)
    t = np.linspace(0.0, T, steps + 1)
    B = np.exp(-1j * np.outer(t, lam)) * a[None, :]
    vals = np.real(np.einsum("ta,ta->t", B.conj(), B @ obs.T))
    return float(integrate.simpson(vals, x=t))


def observability_constant(geometry: TorusGeometry, V: FourierField | None, region: ObservationRegion,
                           T: float, N_list: Sequence[int], M: int | None = None) -> list[GramianReport]:
    """``K(N)`` for each cutoff; extras carry the stabilisation ratio."""
    N_list = list(N_list)
    if N_list != sorted(N_list):
        raise ValueError("N_list must be ascending")
    reports = []
    for N in N_list:
        H = build_hamiltonian(geometry, V, N)
        _, rep = build_gramian(H, region, T, None if M is None else max(M, 4 * N + 1))
        if rep.failed:
            rep.extras["unobservable_at_truncation"] = True
        reports.append(rep)
    if len(reports) >= 2:
        reports[-1].extras["stabilization_ratio"] = reports[-1].K / reports[-2].K
    return reports


def is_nondecreasing(values: Sequence[float], rtol: float = 1e-9) -> bool:
    return all(b >= a * (1 - rtol) for a, b in zip(values, values[1:]))


def shell_observability_scan(H: Hamiltonian2D, spec_list: Sequence[SpectralProjectorSpec],
                             region: ObservationRegion, T: float) -> list[GramianReport]:
    """Gramian restricted to the range of each {0,1}-valued shell projector."""
    G, _ = build_gramian(H, region, T)
    lam = H.eigensystem.eigenvalues
    reports = []
    for spec in spec_list:
        keep = spec.weights(lam) > 0.5
        if not keep.any():
            continue
        rep = report_from_gramian(G[np.ix_(keep, keep)], T, h=spec.h, rho=spec.rho, shell_size=int(keep.sum()))
        reports.append(rep)
    return reports


def restricted_free_gramian(geometry: TorusGeometry, N: int, region: ObservationRegion, T: float,
                            modes: np.ndarray) -> np.ndarray:
    """Gramian of ``-Laplacian`` on the span of plane waves ``modes`` (no eigensolver)."""
    table = region.fourier_table(geometry, 2 * N)
    diff = modes[None, :, :] - modes[:, None, :] + 2 * N
    obs = table[diff[..., 0], diff[..., 1]]
    k = weighted_norm_sq(geometry, modes)
    return obs * iota(k[:, None] - k[None, :], T)


def perturbation_check(geometry: TorusGeometry, V: FourierField, region: ObservationRegion, T: float,
                       N: int) -> dict:
    """Compare ``K`` for the free operator and for ``V``."""
    K0 = observability_constant(geometry, None, region, T, [N])[0].K
    KV = observability_constant(geometry, V, region, T, [N])[0].K
    v = V.norm()
    return {"K_free": K0, "K_potential": KV, "relative_change": abs(KV - K0) / K0,
            "slope": abs(KV - K0) / (v * K0**2) if v > 0 else 0.0, "potential_l2": v}


# periodic directions -----------------------------------------------------------

def _bezout(p: int, q: int) -> tuple[int, int]:
    """Integers ``(r, s)`` with ``s p - r q = 1`` and minimal ``|r| + |s|``."""
    def egcd(a, b):
        if b == 0:
            return a, 1, 0
        g, x, y = egcd(b, a % b)
        return g, y, x - (a // b) * y

    g, x, y = egcd(p, q)  # x p + y q = g
    if abs(g) != 1:
        raise ValueError(f"direction ({p}, {q}) is not primitive")
    s, r = x * g, -y * g
    cands = [(r + t * p, s + t * q) for t in range(-abs(r) - abs(s) - 2, abs(r) + abs(s) + 3)]
    return min(cands, key=lambda rs: (abs(rs[0]) + abs(rs[1]), rs))


@dataclass(frozen=True)
class DirectionFrame:
    geometry: TorusGeometry
    p: int
    q: int
    xi0: np.ndarray
    xi0_perp: np.ndarray
    a: float
    b: float
    gamma_shift: float
    bezout: tuple[int, int]

    def to_torus(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        """``F(x, y) = x Xi0_perp + y Xi0`` in torus coordinates."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return x * self.xi0_perp[0] + y * self.xi0[0], x * self.xi0_perp[1] + y * self.xi0[1]

    def pullback(self, u: FourierField, x, y) -> np.ndarray:
        """``u(F(x, y))`` by direct summation."""
        z1, z2 = self.to_torus(x, y)
        pts = box_points(u.cutoff)
        xi = u.geometry.frequency(pts)
        ph = np.exp(1j * (np.multiply.outer(z1, xi[:, 0]) + np.multiply.outer(z2, xi[:, 1])))
        return ph @ u.vector / math.sqrt(u.geometry.area)

    def period_defect(self, u: FourierField, samples: int = 64, seed: int = 0) -> float:
        """Largest ``|F*u(x + a, y) - F*u(x, y - gamma)|`` and ``|F*u(x, y + b) - F*u(x, y)|``."""
        g = np.random.Generator(np.random.Philox(key=seed))
        x = g.uniform(0, self.a, samples)
        y = g.uniform(0, self.b, samples)
        d1 = self.pullback(u, x + self.a, y) - self.pullback(u, x, y - self.gamma_shift)
        d2 = self.pullback(u, x, y + self.b) - self.pullback(u, x, y)
        return float(max(np.abs(d1).max(), np.abs(d2).max()))


def direction_frame(geometry: TorusGeometry, p: int, q: int) -> DirectionFrame:
    if math.gcd(p, q) != 1:
        raise ValueError(f"direction ({p}, {q}) must be a coprime pair")
    A, B = geometry.period_x, geometry.period_y
    b = math.hypot(p * A, q * B)
    xi0 = np.array([A * p, B * q]) / b
    perp = np.array([-q * B, p * A]) / b
    r, s = _bezout(p, q)
    return DirectionFrame(geometry, p, q, xi0, perp, A * B / b, b, (r * p * A**2 + s * q * B**2) / b, (r, s))


@dataclass(frozen=True)
class AveragedPotential:
    """``W(x) = sum_j w_j exp(2 pi i j x / a)``; ``coeffs`` maps ``j`` to ``w_j``."""

    period: float
    coeffs: dict

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=complex)
        for j, w in self.coeffs.items():
            out += w * np.exp(2j * math.pi * j * x / self.period)
        return out

    def l2(self) -> float:
        return math.sqrt(self.period * sum(abs(w) ** 2 for w in self.coeffs.values()))

    def lipschitz_constant(self, geometry: TorusGeometry) -> float:
        """Bound ``||W - W'||_{L^2(0,a)} <= C ||V - V'||_{L^2(T^2)}`` (equality on resonant modes)."""
        return math.sqrt(self.period / geometry.area)


def averaged_potential(V: FourierField, frame: DirectionFrame) -> AveragedPotential:
    """Mean of ``V(F(x, y))`` over ``y in [0, b]``: only modes ``j (-q, p)`` survive."""
    coeffs = {}
    L = V.cutoff
    for j in range(-2 * L - 2, 2 * L + 3):
        n = (-j * frame.q, j * frame.p)
        if abs(n[0]) <= L and abs(n[1]) <= L:
            w = V.plain(n)
            if w != 0:
                coeffs[j] = w
    return AveragedPotential(frame.a, coeffs)


def averaged_potential_quadrature(V: FourierField, frame: DirectionFrame, x, quad: int = 256) -> np.ndarray:
    """Direct y-average of ``V(F(x, y))`` with a ``quad``-point periodic trapezoid rule."""
    x = np.asarray(x, dtype=float)
    y = frame.b * np.arange(quad) / quad
    vals = frame.pullback(V, x[:, None], y[None, :])
    return vals.mean(axis=1)
