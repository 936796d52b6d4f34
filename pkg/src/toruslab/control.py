"""Hilbert-uniqueness control synthesis for ``i u_t = H u + 1_Omega f``.

With ``U(t) = exp(-i t H)`` and ``f(s) = 1_Omega U(s) phi`` Duhamel gives
``u(T) = U(T) (u0 - i G phi)``, so the control vanishes at time T exactly when
``G phi = -i u0``.  ``G`` is applied matrix-free in the eigenbasis of ``H``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import integrate
from scipy.sparse.linalg import LinearOperator, cg

from ._numerics import GramianReport, gauss_legendre_panels, iota
from .hamiltonian import Hamiltonian2D
from .observability import observation_matrix, observed_energy_quadrature
from .torus import FourierField, GridFunction, ObservationRegion, synthesize_grid


class ControlFailure(RuntimeError):
    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True, eq=False)
class ControlSolution:
    H: Hamiltonian2D
    region: ObservationRegion
    T: float
    phi: FourierField
    alpha: np.ndarray  # phi in eigen-coordinates
    terminal_norm: float
    cost: float
    cg_iterations: int

    def control_coeffs(self, t: float) -> np.ndarray:
        """Galerkin coefficients of ``1_Omega U(t) phi``."""
        eig = self.H.eigensystem
        obs = observation_matrix(self.H, self.region)
        return obs @ (eig.eigenvectors @ (np.exp(-1j * t * eig.eigenvalues) * self.alpha))

    def control_at(self, t: float, M: int | None = None) -> GridFunction:
        """``f(t) = 1_Omega U(t) phi`` on an ``M x M`` grid; exactly zero off Omega."""
        M = M or 4 * self.H.cutoff + 1
        vec = self.H.eigensystem.evolve(self.phi.vector, t)
        g = synthesize_grid(self.H.field(vec), M)
        chi = self.region.indicator(self.H.geometry, M)
        return GridFunction(g.geometry, np.where(chi > 0, g.samples, 0))

    def summary(self) -> dict:
        return {"cost": self.cost, "terminal_norm": self.terminal_norm, "cg_iterations": self.cg_iterations,
                "T": self.T, "dimension": self.H.dimension}


def _gramian_operator(H: Hamiltonian2D, region: ObservationRegion, T: float) -> LinearOperator:
    eig = H.eigensystem
    phi, lam = eig.eigenvectors, eig.eigenvalues
    obs = phi.conj().T @ observation_matrix(H, region) @ phi
    I = iota(lam[:, None] - lam[None, :], T)
    G = obs * I
    G = 0.5 * (G + G.conj().T)
    d = H.dimension
    return LinearOperator((d, d), matvec=lambda x: G @ x, dtype=complex)


def synthesize_control(H: Hamiltonian2D, region: ObservationRegion, T: float, u0: FourierField,
                       tol: float = 1e-10, maxiter: int | None = None) -> ControlSolution:
    eig = H.eigensystem
    a0 = eig.eigenvectors.conj().T @ H.coerce(u0)
    d = H.dimension
    if not np.any(a0):
        zero = H.field(np.zeros(d))
        return ControlSolution(H, region, T, zero, np.zeros(d, complex), 0.0, 0.0, 0)
    G = _gramian_operator(H, region, T)
    b = -1j * a0
    count = [0]

    def tick(_):
        count[0] += 1

    alpha, info = cg(G, b, rtol=tol, atol=0.0, maxiter=maxiter or 10 * d, callback=tick)
    resid = b - G.matvec(alpha)
    terminal = float(np.linalg.norm(resid))
    if info != 0 or terminal > 10 * tol * np.linalg.norm(b):
        raise ControlFailure("conjugate gradient did not converge; the Gramian is close to singular",
                             {"info": int(info), "iterations": count[0], "residual": terminal})
    cost = float(np.real(np.vdot(alpha, G.matvec(alpha))))
    phi = H.field(eig.eigenvectors @ alpha)
    return ControlSolution(H, region, T, phi, alpha, terminal, cost, count[0])


def verify_terminal(H: Hamiltonian2D, region: ObservationRegion, T: float, solution: ControlSolution | None,
                    u0: FourierField, steps: int = 32, order: int = 4) -> float:
    """``||u(T)||`` from Duhamel with ``steps`` Gauss-Legendre panels (standard basis)."""
    if steps < 16:
        raise ValueError("steps must be at least 16")
    eig = H.eigensystem
    obs = observation_matrix(H, region)
    uT = eig.evolve(H.coerce(u0), T)
    if solution is not None and solution.cost > 0:
        phi = solution.phi.vector
        nodes, weights = gauss_legendre_panels(0.0, T, steps, order)
        acc = np.zeros_like(uT)
        for s, w in zip(nodes, weights):
            acc += w * eig.evolve(obs @ eig.evolve(phi, s), T - s)
        uT = uT - 1j * acc
    return float(np.linalg.norm(uT))


def control_cost_bound_check(solution: ControlSolution, report: GramianReport, u0: FourierField,
                             rtol: float = 1e-8) -> dict:
    a = solution.alpha
    form = float(np.real(np.vdot(a, report.gramian @ a)))
    a0 = solution.H.eigensystem.eigenvectors.conj().T @ solution.H.coerce(u0)
    dual = float(np.real(np.vdot(a, -1j * a0)))
    u2 = u0.norm() ** 2
    scale = max(solution.cost, 1e-300)
    out = {
        "cost": solution.cost,
        "gramian_form": form,
        "dual_pairing": dual,
        "K_bound": report.K * u2,
        "form_ok": abs(form - solution.cost) <= rtol * scale + 1e-300,
        "dual_ok": abs(dual - solution.cost) <= max(rtol * scale, 10 * solution.terminal_norm * np.linalg.norm(a)),
        "bound_ok": solution.cost <= report.K * u2 + 1e-8,
    }
    out["passed"] = out["form_ok"] and out["dual_ok"] and out["bound_ok"]
    return out


def cost_by_quadrature(solution: ControlSolution, steps: int = 10_000) -> float:
    """``||f||^2_{L^2([0,T] x Omega)}`` by Simpson's rule in time."""
    return observed_energy_quadrature(solution.H, solution.region, solution.T, solution.phi, steps)


def export_samples(solution: ControlSolution, u0: FourierField, tol: float = 1e-4, start: int = 16,
                   max_samples: int = 1 << 14) -> int:
    """Uniform sample count whose Simpson re-integration reaches ``||u(T)|| <= tol ||u0||``."""
    eig = solution.H.eigensystem
    uT0 = eig.evolve(solution.H.coerce(u0), solution.T)
    n = start
    while True:
        t = np.linspace(0.0, solution.T, n + 1)
        vals = np.array([eig.evolve(solution.control_coeffs(s), solution.T - s) for s in t])
        uT = uT0 - 1j * integrate.simpson(vals, x=t, axis=0)
        if np.linalg.norm(uT) <= tol * u0.norm() or n >= max_samples:
            return n
        n *= 2


def write_control_csv(solution: ControlSolution, path: str | Path, samples: int, M: int | None = None) -> Path:
    """CSV rows ``t, grid_x, grid_y, re_f, im_f`` at ``samples + 1`` uniform times."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "grid_x", "grid_y", "re_f", "im_f"])
        for t in np.linspace(0.0, solution.T, samples + 1):
            g = solution.control_at(float(t), M)
            X, Y = g.points()
            for x, y, v in zip(X.ravel(), Y.ravel(), g.samples.ravel()):
                w.writerow([repr(float(t)), repr(float(x)), repr(float(y)), repr(float(v.real)), repr(float(v.imag))])
    return path
