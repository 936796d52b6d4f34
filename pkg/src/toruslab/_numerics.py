"""Small numerical kernels shared by the 1D and 2D solvers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

ISERIES_CUTOFF = 1e-4


def iota(delta, T: float) -> np.ndarray:
    """``int_0^T exp(i delta t) dt`` elementwise, stable near ``delta = 0``."""
    d = np.asarray(delta, dtype=float)
    x = d * T
    out = np.empty(d.shape, dtype=complex)
    small = np.abs(x) < ISERIES_CUTOFF
    z = 1j * x[small]
    out[small] = T * (1 + z / 2 + z**2 / 6 + z**3 / 24)
    ds = d[~small]
    out[~small] = (np.exp(1j * ds * T) - 1) / (1j * ds)
    return out


def gauss_legendre_panels(a: float, b: float, panels: int, order: int = 2):
    """Nodes and weights of a composite Gauss-Legendre rule on ``[a, b]``."""
    if panels < 1:
        raise ValueError("need at least one panel")
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


@dataclass(frozen=True, eq=False)
class EigenSystem:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @classmethod
    def of(cls, matrix: np.ndarray) -> "EigenSystem":
        lam, phi = linalg.eigh(matrix)
        return cls(lam, phi)

    def evolve(self, v: np.ndarray, t: float) -> np.ndarray:
        """``exp(-i t H) v``."""
        phi = self.eigenvectors
        return phi @ (np.exp(-1j * t * self.eigenvalues) * (phi.conj().T @ v))

    def apply(self, fn, v: np.ndarray) -> np.ndarray:
        phi = self.eigenvectors
        return phi @ (fn(self.eigenvalues) * (phi.conj().T @ v))

    def residual(self, matrix: np.ndarray) -> float:
        phi = self.eigenvectors
        r = matrix @ phi - phi * self.eigenvalues
        return float(np.linalg.norm(r, 2))


@dataclass(frozen=True, eq=False)
class GramianReport:
    """Observability Gramian in the eigenbasis and the constant ``K = 1/lambda_min``."""

    gramian: np.ndarray
    lambda_min: float
    lambda_max: float
    K: float
    T: float
    dimension: int
    failed: bool = False
    note: str = ""
    extras: dict = field(default_factory=dict)

    def summary(self) -> dict:
        out = {
            "T": self.T,
            "dimension": self.dimension,
            "lambda_min": self.lambda_min,
            "lambda_max": self.lambda_max,
            "K": self.K,
            "failed": self.failed,
        }
        if self.note:
            out["note"] = self.note
        out.update(self.extras)
        return out


def gramian_in_eigenbasis(eig: EigenSystem, observation: np.ndarray, T: float) -> np.ndarray:
    """``G_ab = <M phi_b, phi_a> iota(lambda_a - lambda_b, T)``."""
    phi = eig.eigenvectors
    obs = phi.conj().T @ observation @ phi
    lam = eig.eigenvalues
    G = obs * iota(lam[:, None] - lam[None, :], T)
    return 0.5 * (G + G.conj().T)


def report_from_gramian(G: np.ndarray, T: float, tol: float = 1e-10, **extras) -> GramianReport:
    mu = linalg.eigvalsh(G) if G.size else np.zeros(1)
    lam_min = float(mu[0])
    scale = max(float(mu[-1]), 1.0)
    failed = lam_min <= tol * scale
    K = float("inf") if lam_min <= 0 else 1.0 / lam_min
    note = "smallest Gramian eigenvalue is not positive within tolerance" if failed else ""
    return GramianReport(G, lam_min, float(mu[-1]), K, T, G.shape[0], failed, note, dict(extras))


def japanese(x) -> np.ndarray:
    return np.sqrt(1.0 + np.asarray(x, dtype=float) ** 2)
