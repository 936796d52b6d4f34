"""Floquet operators ``-(d/dx + ik)^2 + W`` on the circle.

States are coefficient vectors in ``e_n(x) = exp(i n x) / sqrt(2 pi)``, |n| <= N.
Potentials are given by their plain Fourier coefficients ``W(x) = sum_m w_m e^{imx}``,
either as a mapping ``{m: w_m}`` or a centred array of odd length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

import numpy as np

from ._numerics import (
    EigenSystem,
    GramianReport,
    gramian_in_eigenbasis,
    iota,
    japanese,
    report_from_gramian,
)
from .torus import intervals_galerkin_1d, rng

TWO_PI = 2 * math.pi


def _as_mapping(coeffs) -> dict[int, complex]:
    if coeffs is None:
        return {}
    if isinstance(coeffs, Mapping):
        return {int(m): complex(v) for m, v in coeffs.items() if v != 0}
    arr = np.asarray(coeffs, dtype=complex)
    if arr.ndim != 1 or arr.size % 2 == 0:
        raise ValueError("coefficient arrays must be one-dimensional with odd length (centred)")
    L = arr.size // 2
    return {m - L: complex(v) for m, v in enumerate(arr) if v != 0}


@dataclass(frozen=True, eq=False)
class FloquetOperator1D:
    k: float
    potential_coeffs: dict
    cutoff: int
    matrix: np.ndarray
    _eig: list = field(default_factory=list, repr=False)

    @property
    def eigensystem(self) -> EigenSystem:
        if not self._eig:
            self._eig.append(EigenSystem.of(self.matrix))
        return self._eig[0]

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.cutoff, self.cutoff + 1)

    def potential_l2(self) -> float:
        """``||W||_{L^2(0, 2 pi)}``."""
        return math.sqrt(TWO_PI * sum(abs(v) ** 2 for v in self.potential_coeffs.values()))


def build_floquet(k: float, potential_coeffs, N: int) -> FloquetOperator1D:
    if not 0 <= k < 1:
        raise ValueError("Floquet parameter must lie in [0, 1)")
    w = _as_mapping(potential_coeffs)
    for m, v in w.items():
        if abs(w.get(-m, 0) - np.conj(v)) > 1e-12 * max(1.0, abs(v)):
            raise ValueError(f"potential is not real: coefficient {m} has no conjugate partner")
    n = np.arange(-N, N + 1)
    H = np.diag((n + k) ** 2).astype(complex)
    diff = n[:, None] - n[None, :]
    for m, v in w.items():
        H[diff == m] += v
    return FloquetOperator1D(k, w, N, H)


def propagate_floquet(op: FloquetOperator1D, v0, t: float) -> np.ndarray:
    return op.eigensystem.evolve(np.asarray(v0, dtype=complex), t)


@dataclass(frozen=True)
class DispersiveIdentity:
    lhs: float
    rhs: float
    bound: float
    period: float
    exact: bool

    @property
    def holds(self) -> bool:
        return abs(self.lhs - self.rhs) <= 1e-8 * max(1.0, self.rhs) and self.lhs <= self.bound * (1 + 1e-12)


def _time_period(k: float, max_den: int = 1000) -> tuple[float, bool]:
    frac = Fraction(2 * k).limit_denominator(max_den)
    exact = abs(float(frac) - 2 * k) < 1e-12
    return TWO_PI * frac.denominator, exact


def free_dispersive_identity(c, k: float, x_points: int | None = None) -> DispersiveIdentity:
    """Compare the time-averaged ``|sum c_n e^{-it(n+k)^2 + inx}|^2`` with its resonant part.

    Both sides are sup-ed over a uniform x grid.  The time integral is over a
    full period of the phases when ``2k`` is rational (exactly ``[0, 2 pi]``
    when ``2k`` is an integer), rescaled to a window of length ``2 pi``.
    """
    cm = _as_mapping(c)
    if not cm:
        return DispersiveIdentity(0.0, 0.0, 0.0, TWO_PI, True)
    n = np.array(sorted(cm))
    a = np.array([cm[m] for m in n])
    N = int(np.abs(n).max())
    P = x_points or max(8 * N, 16)
    x = TWO_PI * np.arange(P) / P
    period, exact = _time_period(k)

    freq = (n + k) ** 2
    # lhs: (2 pi / period) int_0^period |sum a_n e^{inx} e^{-it freq_n}|^2 dt
    I = iota(freq[None, :] - freq[:, None], period) * (TWO_PI / period)  # I[a,b] = int e^{-it(f_a - f_b)}
    beta = a[None, :] * np.exp(1j * np.outer(x, n))
    lhs_x = np.real(np.einsum("xa,ab,xb->x", beta, I, beta.conj()))

    classes: dict[float, list[int]] = {}
    for i, f in enumerate(freq):
        classes.setdefault(round(float(f), 9), []).append(i)
    rhs_x = np.zeros(P)
    for idx in classes.values():
        rhs_x += np.abs(beta[:, idx].sum(axis=1)) ** 2
    rhs_x *= TWO_PI
    bound = 4 * TWO_PI * float(np.sum(np.abs(a) ** 2))
    return DispersiveIdentity(float(lhs_x.max()), float(rhs_x.max()), bound, period, exact)


def observation_matrix_1d(N: int, omega, M: int | None = None) -> np.ndarray:
    """Matrix of ``1_omega`` in the basis ``e_n``; exact unless a grid size ``M`` is given."""
    if M is None:
        return intervals_galerkin_1d(omega, N)
    if M < 2 * N + 1:
        raise ValueError("grid too coarse for the cutoff")
    x = TWO_PI * np.arange(M) / M
    chi = np.zeros(M)
    for a, b in omega:
        chi[(x >= a) & (x < b)] = 1.0
    n = np.arange(-N, N + 1)
    E = np.exp(1j * np.outer(x, n)) / math.sqrt(TWO_PI)
    return (E.conj().T * chi) @ E * (TWO_PI / M)


def observability_constant_1d(op: FloquetOperator1D, omega, T: float, M: int | None = None) -> GramianReport:
    if T <= 0:
        raise ValueError("observation time must be positive")
    obs = observation_matrix_1d(op.cutoff, omega, M)
    G = gramian_in_eigenbasis(op.eigensystem, obs, T)
    return report_from_gramian(G, T)


@dataclass(frozen=True)
class StationaryReport:
    ratio: float
    tau: float
    near_eigenvalue: bool
    residual: float
    kernel_case: bool = False


def stationary_check_1d(op: FloquetOperator1D, tau: float, g, omega, shift: float = 1e-6) -> StationaryReport:
    """``||u|| / (<tau>^{-1/2} ||g|| + ||u||_{L^2(omega)})`` for ``(H - tau) u = g``."""
    obs = observation_matrix_1d(op.cutoff, omega)
    eig = op.eigensystem
    g = None if g is None else np.asarray(g, dtype=complex)
    gap = float(np.min(np.abs(eig.eigenvalues - tau)))
    near = gap <= 1e-8
    if g is None or not np.any(g):
        j = int(np.argmin(np.abs(eig.eigenvalues - tau)))
        u = eig.eigenvectors[:, j]
        u_om = math.sqrt(max(np.real(np.vdot(u, obs @ u)), 0.0))
        return StationaryReport(float(np.linalg.norm(u) / u_om), float(eig.eigenvalues[j]), near, 0.0, True)
    tau_used = tau + shift if near else tau
    u = eig.apply(lambda lam: 1.0 / (lam - tau_used), g)
    res = float(np.linalg.norm(op.matrix @ u - tau_used * u - g) / np.linalg.norm(g))
    u_om = math.sqrt(max(np.real(np.vdot(u, obs @ u)), 0.0))
    denom = np.linalg.norm(g) / math.sqrt(japanese(tau_used)) + u_om
    return StationaryReport(float(np.linalg.norm(u) / denom), tau_used, near, res)


def stationary_scan_1d(op: FloquetOperator1D, taus, omega, trials: int = 20, seed: int = 0) -> dict:
    """Largest ratio over a tau grid and random right-hand sides."""
    g_rng = rng(seed)
    d = 2 * op.cutoff + 1
    best = {"max_ratio": 0.0, "tau": None, "near_eigenvalue": False}
    for tau in taus:
        for _ in range(trials):
            g = g_rng.standard_normal(d) + 1j * g_rng.standard_normal(d)
            rep = stationary_check_1d(op, float(tau), g, omega)
            if rep.ratio > best["max_ratio"]:
                best = {"max_ratio": rep.ratio, "tau": rep.tau, "near_eigenvalue": rep.near_eigenvalue}
    return best


def dispersive_ratio_1d(op: FloquetOperator1D, u0, T: float, x_points: int | None = None) -> float:
    """``sup_x ||u(., x)||_{L^2(0,T)} / ((1 + sqrt T)(1 + ||W||_2) ||u0||)``.

    The time integral is exact through the eigen-expansion; the sup is over a
    uniform grid of ``x_points`` points.
    """
    u0 = np.asarray(u0, dtype=complex)
    eig = op.eigensystem
    alpha = eig.eigenvectors.conj().T @ u0
    n = op.modes
    P = x_points or max(16 * op.cutoff, 64)
    x = TWO_PI * np.arange(P) / P
    E = np.exp(1j * np.outer(x, n)) / math.sqrt(TWO_PI)
    beta = (E @ eig.eigenvectors) * alpha[None, :]
    lam = eig.eigenvalues
    I = iota(lam[:, None] - lam[None, :], T)
    val = np.real(np.einsum("xa,ab,xb->x", beta.conj(), I, beta))
    sup = math.sqrt(max(float(val.max()), 0.0))
    return sup / ((1 + math.sqrt(T)) * (1 + op.potential_l2()) * np.linalg.norm(u0))


def rough_potential_1d(L: int, eps: float, l2_norm: float, seed: int) -> dict[int, complex]:
    """Real potential with ``|w_m| ~ <m>^{-1/2-eps}`` and prescribed L2 norm."""
    g = rng(seed)
    w = {0: complex(g.standard_normal())}
    for m in range(1, L + 1):
        v = (g.standard_normal() + 1j * g.standard_normal()) * (1 + m * m) ** (-(0.5 + eps) / 2)
        w[m] = v
        w[-m] = np.conj(v)
    w[0] = complex(w[0].real)
    scale = l2_norm / math.sqrt(TWO_PI * sum(abs(v) ** 2 for v in w.values()))
    return {m: v * scale for m, v in w.items()}
