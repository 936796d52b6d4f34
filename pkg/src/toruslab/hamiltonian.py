"""Galerkin Hamiltonians ``-Laplacian + V`` on a 2-torus and their propagators."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import fft

from ._numerics import EigenSystem, gauss_legendre_panels
from .torus import (
    FourierField,
    GridFunction,
    TorusGeometry,
    analyze_grid,
    box_points,
    lp_norm,
    rng,
    synthesize_grid,
    weighted_norm_sq,
)


class AliasingWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class Hamiltonian2D:
    geometry: TorusGeometry
    potential: FourierField
    cutoff: int
    matrix: np.ndarray
    _eig: list = field(default_factory=list, repr=False)

    @property
    def eigensystem(self) -> EigenSystem:
        if not self._eig:
            self._eig.append(EigenSystem.of(self.matrix))
        return self._eig[0]

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def kinetic(self) -> np.ndarray:
        return weighted_norm_sq(self.geometry, box_points(self.cutoff))

    def field(self, vec) -> FourierField:
        return FourierField.from_vector(self.geometry, self.cutoff, vec)

    def coerce(self, u: FourierField) -> np.ndarray:
        """Coefficient vector of ``u`` on this Hamiltonian's box."""
        if u.cutoff > self.cutoff and np.any(u.coeffs[_outer_mask(u.cutoff, self.cutoff)]):
            raise ValueError(f"state has modes beyond the cutoff {self.cutoff}")
        return u.resized(self.cutoff).vector


def _outer_mask(N: int, inner: int) -> np.ndarray:
    pts = box_points(N)
    return (np.abs(pts).max(axis=1) > inner).reshape(2 * N + 1, 2 * N + 1)


def potential_matrix(V: FourierField, N: int) -> np.ndarray:
    """Matrix of multiplication by ``V`` on the box of cutoff ``N``."""
    L = V.cutoff
    pts = box_points(N)
    diff = pts[:, None, :] - pts[None, :, :]  # n_a - n_b
    inside = np.all(np.abs(diff) <= L, axis=-1)
    out = np.zeros(diff.shape[:2], dtype=complex)
    out[inside] = V.coeffs[diff[inside][:, 0] + L, diff[inside][:, 1] + L]
    return out / math.sqrt(V.geometry.area)


def build_hamiltonian(geometry: TorusGeometry, V: FourierField | None, N: int) -> Hamiltonian2D:
    if V is None:
        V = FourierField.zeros(geometry, 0)
    if not V.is_real(1e-10):
        raise ValueError("potential coefficients are not Hermitian-symmetric (V must be real)")
    H = potential_matrix(V, N)
    H[np.diag_indices_from(H)] += weighted_norm_sq(geometry, box_points(N))
    return Hamiltonian2D(geometry, V, N, 0.5 * (H + H.conj().T))


def propagate(H: Hamiltonian2D, u0: FourierField, t: float) -> FourierField:
    return H.field(H.eigensystem.evolve(H.coerce(u0), t))


def free_flight(u: FourierField, t: float) -> FourierField:
    """``exp(i t Laplacian) u``."""
    k = weighted_norm_sq(u.geometry, box_points(u.cutoff)).reshape(u.coeffs.shape)
    return FourierField(u.geometry, u.cutoff, np.exp(-1j * t * k) * u.coeffs)


def sample_potential(V: FourierField, M: int) -> np.ndarray:
    """Exact point values of ``V`` on the ``M x M`` grid, any cutoff."""
    L = V.cutoff
    spec = np.zeros((M, M), dtype=complex)
    idx = np.arange(-L, L + 1) % M
    np.add.at(spec, (idx[:, None], idx[None, :]), V.coeffs)
    return fft.ifft2(spec) * (M * M / math.sqrt(V.geometry.area))


def split_step(geometry: TorusGeometry, V: FourierField, u0: FourierField, t: float, steps: int,
               M: int | None = None) -> FourierField:
    """Strang splitting: half free flight, potential phase on the grid, half free flight."""
    if steps < 1:
        raise ValueError("steps must be positive")
    N = u0.cutoff
    M = M or 2 * N + 1
    if M < 2 * N + 1:
        raise ValueError(f"grid M={M} aliases the state (need M >= {2 * N + 1})")
    if V.cutoff > N:
        warnings.warn(f"potential cutoff {V.cutoff} exceeds state cutoff {N}; products alias on the grid",
                      AliasingWarning, stacklevel=2)
    dt = t / steps
    vgrid = sample_potential(V, M)
    if np.max(np.abs(vgrid.imag)) > 1e-9 * max(1.0, np.max(np.abs(vgrid))):
        raise ValueError("potential is not real")
    phase = np.exp(-1j * dt * vgrid.real)
    u = u0
    for _ in range(steps):
        u = free_flight(u, dt / 2)
        g = synthesize_grid(u, M)
        u = analyze_grid(GridFunction(geometry, g.samples * phase), N)
        u = free_flight(u, dt / 2)
    return u


# bump profiles ---------------------------------------------------------------

def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s**3 * (10 - 15 * s + 6 * s * s)


def profile(kind: str | Callable = "smooth") -> Callable:
    """Even bump with value 1 at the origin and support in ``[-1, 1]``.

    ``smooth`` is C2, equal to 1 on ``|x| <= 1/2``; ``sharp`` is the indicator
    of ``|x| < 1``; ``closed`` is the indicator of ``|x| <= 1``.
    """
    if callable(kind):
        return kind
    if kind == "smooth":
        return lambda x: 1.0 - _smoothstep(2 * np.abs(np.asarray(x, dtype=float)) - 1)
    if kind == "sharp":
        return lambda x: (np.abs(np.asarray(x, dtype=float)) < 1).astype(float)
    if kind == "closed":
        return lambda x: (np.abs(np.asarray(x, dtype=float)) <= 1 + 1e-12).astype(float)
    raise ValueError(f"unknown profile {kind!r}")


@dataclass(frozen=True)
class SpectralProjectorSpec:
    h: float
    rho: float
    chi: str | Callable = "smooth"

    def __post_init__(self):
        if not 0 < self.h < 1:
            raise ValueError("h must lie in (0, 1)")
        if self.rho <= 0:
            raise ValueError("rho must be positive")

    def weights(self, eigenvalues) -> np.ndarray:
        return profile(self.chi)((self.h**2 * np.asarray(eigenvalues) - 1) / self.rho)


def spectral_projector(H: Hamiltonian2D, spec: SpectralProjectorSpec, u0: FourierField) -> FourierField:
    return H.field(H.eigensystem.apply(spec.weights, H.coerce(u0)))


def projector_basis(H: Hamiltonian2D, spec: SpectralProjectorSpec) -> np.ndarray:
    """Orthonormal eigenvectors spanning the range of a {0,1}-valued projector."""
    w = spec.weights(H.eigensystem.eigenvalues)
    return H.eigensystem.eigenvectors[:, w > 0.5]


# Duhamel ---------------------------------------------------------------------

def multiply_project(V: FourierField, u: FourierField) -> FourierField:
    """``P_N (V u)`` computed exactly on a grid large enough for the product."""
    N, L = u.cutoff, V.cutoff
    M = 2 * N + L + 1
    g = synthesize_grid(u, M)
    vg = sample_potential(V, M)
    return analyze_grid(GridFunction(u.geometry, g.samples * vg), N)


def duhamel_residual(H_free: Hamiltonian2D, V: FourierField, u0: FourierField, t: float,
                     quad_steps: int = 8) -> float:
    """Norm of the Duhamel identity defect with ``quad_steps`` two-point Gauss panels."""
    if quad_steps < 2:
        raise ValueError("quad_steps must be at least 2")
    geometry, N = H_free.geometry, H_free.cutoff
    H = build_hamiltonian(geometry, V, N)
    u0 = u0.resized(N)
    lhs = propagate(H, u0, t)
    free = free_flight(u0, t)
    nodes, weights = gauss_legendre_panels(0.0, t, quad_steps, 2)
    acc = np.zeros_like(u0.coeffs)
    for s, w in zip(nodes, weights):
        us = propagate(H, u0, s)
        acc += w * free_flight(multiply_project(V, us), t - s).coeffs
    rhs = free.coeffs - 1j * acc
    return float(np.linalg.norm(lhs.coeffs - rhs))


# potentials ------------------------------------------------------------------

def littlewood_paley_truncate(V: FourierField, j: int, chi: str | Callable = "smooth") -> FourierField:
    if j < 0:
        raise ValueError("j must be nonnegative")
    k = weighted_norm_sq(V.geometry, box_points(V.cutoff)).reshape(V.coeffs.shape)
    return FourierField(V.geometry, V.cutoff, profile(chi)(k * 2.0 ** (-2 * j)) * V.coeffs)


def truncation_report(V: FourierField, j: int, chi: str | Callable = "smooth") -> dict:
    Vj = littlewood_paley_truncate(V, j, chi)
    return {
        "j": j,
        "l2_error": (V - Vj).norm(),
        "sup_norm": lp_norm(Vj, "inf", oversample=4),
    }


def rough_potential(geometry: TorusGeometry, L: int, eps: float, l2_norm: float, seed: int) -> FourierField:
    """Real random potential with ``|c_n| ~ <n>^{-1-eps}`` and prescribed L2 norm."""
    g = rng(seed)
    side = 2 * L + 1
    c = g.standard_normal((side, side)) + 1j * g.standard_normal((side, side))
    pts = box_points(L)
    c *= ((1 + np.sum(pts**2, axis=1)) ** (-(1 + eps) / 2)).reshape(side, side)
    c = 0.5 * (c + np.conj(c[::-1, ::-1]))
    c *= l2_norm / np.linalg.norm(c)
    return FourierField(geometry, L, c)


def propagator_lipschitz(V: FourierField, Vn: FourierField, u0: FourierField, T: float,
                         samples: int = 16) -> dict:
    """``max_t ||(U_V(t) - U_Vn(t)) u0||`` and its ratio to ``||V - Vn|| ||u0||``."""
    N = u0.cutoff
    H1 = build_hamiltonian(u0.geometry, V, N)
    H2 = build_hamiltonian(u0.geometry, Vn, N)
    best, t_best = 0.0, 0.0
    for t in np.linspace(0.0, T, samples + 1)[1:]:
        d = np.linalg.norm(H1.eigensystem.evolve(u0.vector, t) - H2.eigensystem.evolve(u0.vector, t))
        if d > best:
            best, t_best = float(d), float(t)
    scale = (V - Vn).norm() * u0.norm()
    return {"max_difference": best, "t": t_best, "ratio": best / scale if scale > 0 else 0.0}
