"""Empirical ratio scans for the L4 / resolvent / Strichartz / 1D dispersive bounds.

Random inputs only give lower bounds on operator norms, so every driver
reports the largest observed ratio together with the seed that produced it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from ._numerics import gauss_legendre_panels
from .floquet import FloquetOperator1D, dispersive_ratio_1d
from .hamiltonian import Hamiltonian2D
from .torus import FourierField, TorusGeometry, box_points, lp_norm, synthesize_grid, weighted_norm_sq


def trial_rng(seed: int, *ids: int) -> np.random.Generator:
    """Independent Philox stream for ``(seed, *ids)``; used to replay witnesses."""
    key = np.random.SeedSequence([int(seed), *map(int, ids)]).generate_state(2, np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True, eq=False)
class AnnulusBand:
    geometry: TorusGeometry
    kappa: float
    h: float
    members: np.ndarray  # shape (m, 2)
    box: int
    flagged: bool = False

    def __len__(self):
        return len(self.members)

    def field(self, coeffs) -> FourierField:
        N = max(int(np.abs(self.members).max(initial=0)), 0)
        return FourierField.from_dict(self.geometry, N, {tuple(map(int, n)): c for n, c in zip(self.members, coeffs)})


def annulus_band(geometry: TorusGeometry, kappa: float, h: float, box: int | None = None) -> AnnulusBand:
    """Lattice points with ``|h^2 |xi_n|^2 - 1| <= kappa^2 h^2``."""
    if not 0 < h < 1:
        raise ValueError("h must lie in (0, 1)")
    rmax = math.sqrt(1 / h**2 + kappa**2)
    need = int(math.ceil(rmax * max(geometry.period_x, geometry.period_y) / (2 * math.pi)))
    flagged = box is not None and box < need
    box = need if box is None else int(box)
    pts = box_points(box)
    k = weighted_norm_sq(geometry, pts)
    tol = 1e-12 / h**2
    keep = np.abs(k - 1 / h**2) <= kappa**2 + tol
    return AnnulusBand(geometry, kappa, h, pts[keep], box, flagged)


def zygmund_ratio(u: FourierField) -> float:
    """Scale-free ratio ``||u||_4 (AB)^{1/4} / ||u||_2``; equals 1 for a single mode."""
    return lp_norm(u, 4) * u.geometry.area ** 0.25 / u.norm()


def quartic_ratio(members: np.ndarray, coeffs: np.ndarray) -> float:
    """Same ratio from the exact quartic form over ``n + m = p + q``."""
    c = np.asarray(coeffs, dtype=complex)
    sums: dict[tuple[int, int], complex] = {}
    for i, n in enumerate(members):
        for j, m in enumerate(members):
            key = (int(n[0] + m[0]), int(n[1] + m[1]))
            sums[key] = sums.get(key, 0) + c[i] * c[j]
    q = sum(abs(v) ** 2 for v in sums.values())
    return float((q / np.sum(np.abs(c) ** 2) ** 2) ** 0.25)


def zygmund_sup_search(members: np.ndarray, starts: int = 40, seed: int = 0) -> float:
    """Multi-start maximisation of :func:`quartic_ratio` over all coefficient vectors."""
    d = len(members)
    g = trial_rng(seed, 0)

    def neg(x):
        return -quartic_ratio(members, x[:d] + 1j * x[d:])

    best = 1.0
    for s in range(starts):
        x0 = g.standard_normal(2 * d) if s else np.concatenate([np.ones(d), np.zeros(d)])
        res = optimize.minimize(neg, x0, method="BFGS", options={"gtol": 1e-10})
        best = max(best, -res.fun)
    return best


@dataclass(frozen=True)
class RatioReport:
    params: tuple
    trials: int
    max_ratio: float
    mean_ratio: float
    witness: tuple
    note: str = ""
    extras: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {"params": list(self.params), "trials": self.trials, "max_ratio": self.max_ratio,
               "mean_ratio": self.mean_ratio, "witness": list(self.witness)}
        if self.note:
            out["note"] = self.note
        out.update(self.extras)
        return out


def _band_trial(band: AnnulusBand, seed: int, point: int, trial: int) -> float:
    g = trial_rng(seed, point, trial)
    m = len(band)
    c = g.standard_normal(m) + 1j * g.standard_normal(m)
    return zygmund_ratio(band.field(c))


def zygmund_scan(geometry: TorusGeometry, kappa_list: Sequence[float], h_list: Sequence[float],
                 trials: int = 200, seed: int = 0, delta0: float = 0.25) -> list[RatioReport]:
    reports = []
    point = 0
    for h in h_list:
        for kappa in kappa_list:
            point += 1
            if kappa * h > delta0 + 1e-15:
                continue
            band = annulus_band(geometry, kappa, h)
            if len(band) == 0:
                reports.append(RatioReport((kappa, h), 0, 0.0, 0.0, (), "empty band"))
                continue
            ratios = np.array([_band_trial(band, seed, point, t) for t in range(trials)])
            w = int(np.argmax(ratios))
            reports.append(RatioReport((kappa, h), trials, float(ratios.max()), float(ratios.mean()),
                                       (seed, point, w), extras={"band_size": len(band)}))
    return reports


def replay_zygmund(geometry: TorusGeometry, report: RatioReport) -> float:
    kappa, h = report.params
    seed, point, trial = report.witness
    return _band_trial(annulus_band(geometry, kappa, h), seed, point, trial)


def growth_exponents(reports: Sequence[RatioReport]) -> dict[float, float]:
    """Least-squares slope of ``log max_ratio`` against ``log(1 + kappa)`` per h."""
    by_h: dict[float, list] = {}
    for r in reports:
        if r.trials:
            by_h.setdefault(r.params[1], []).append((r.params[0], r.max_ratio))
    out = {}
    for h, pts in by_h.items():
        if len(pts) >= 2:
            x = np.log1p([p[0] for p in pts])
            y = np.log([p[1] for p in pts])
            out[h] = float(np.polyfit(x, y, 1)[0])
    return out


def resolvent_ratio_scan(H: Hamiltonian2D, tau_list: Sequence[complex], trials: int = 200,
                         seed: int = 0) -> list[RatioReport]:
    """``||(H - tau)^{-1} f||_4 / ||f||_{4/3}`` over random full-box ``f``."""
    eig = H.eigensystem
    lam = eig.eigenvalues
    phi = eig.eigenvectors
    d = H.dimension
    reports = []
    for point, tau in enumerate(tau_list):
        tau = complex(tau)
        if abs(tau.imag) < 1:
            raise ValueError(f"|Im tau| must be at least 1, got {tau}")
        cond = float(np.max(np.abs(lam - tau)) / np.min(np.abs(lam - tau)))
        ratios, worst_res = [], 0.0
        for t in range(trials):
            g = trial_rng(seed, point, t)
            f = g.standard_normal(d) + 1j * g.standard_normal(d)
            u = phi @ ((phi.conj().T @ f) / (lam - tau))
            res = np.linalg.norm(H.matrix @ u - tau * u - f) / np.linalg.norm(f)
            worst_res = max(worst_res, float(res))
            ratios.append(lp_norm(H.field(u), 4) / lp_norm(H.field(f), 4 / 3, oversample=4))
        ratios = np.array(ratios)
        w = int(np.argmax(ratios))
        reports.append(RatioReport((tau.real, tau.imag), trials, float(ratios.max()), float(ratios.mean()),
                                   (seed, point, w), extras={"residual": worst_res, "condition": cond}))
    return reports


def strichartz_ratio(H: Hamiltonian2D, u0: FourierField, f_spec: Callable | None, T: float,
                     grids: tuple[int, int] = (32, 16)) -> tuple[float, float]:
    """Ratios ``||u||_{L^inf_t L^2_x}`` and ``||u||_{L^4_x L^2_t}`` over ``||u0|| + ||f||_{L^1_t L^2_x}``.

    ``u`` solves ``i u_t = H u + f`` with ``u(0) = u0``.  ``grids = (panels, inner)``
    sets the composite two-point Gauss rule for the outer time integral and for
    each Duhamel integral.
    """
    panels, inner = grids
    eig = H.eigensystem
    lam, phi = eig.eigenvalues, eig.eigenvectors
    a0 = phi.conj().T @ H.coerce(u0)
    nodes, weights = gauss_legendre_panels(0.0, T, panels, 2)

    def fhat(s):
        return phi.conj().T @ np.asarray(f_spec(s), dtype=complex)

    f_norm = 0.0
    if f_spec is not None:
        fn, fw = gauss_legendre_panels(0.0, T, panels * inner, 2)
        f_norm = float(sum(w * np.linalg.norm(fhat(s)) for s, w in zip(fn, fw)))

    states = []
    for t in np.concatenate([nodes, [T]]):
        a = a0.copy()
        if f_spec is not None and t > 0:
            sn, sw = gauss_legendre_panels(0.0, t, inner, 2)
            a = a - 1j * sum(w * np.exp(1j * s * lam) * fhat(s) for s, w in zip(sn, sw))
        states.append(phi @ (np.exp(-1j * t * lam) * a))
    linf = max(np.linalg.norm(s) for s in states)

    N = H.cutoff
    M = 4 * N + 1
    acc = np.zeros((M, M))
    for s, w in zip(states[:-1], weights):
        acc += w * np.abs(synthesize_grid(H.field(s), M).samples) ** 2
    l4l2 = float((np.sum(acc**2) * H.geometry.area / M**2) ** 0.25)
    data = u0.norm() + f_norm
    return float(linf / data), l4l2 / data


def strichartz_scan(hamiltonians: Sequence[Hamiltonian2D], T: float, trials: int = 10, seed: int = 0,
                    with_source: bool = True) -> RatioReport:
    """Largest ``L^4_x L^2_t`` ratio over a corpus of potentials and random data."""
    ratios, ids = [], []
    for i, H in enumerate(hamiltonians):
        d = H.dimension
        for t in range(trials):
            g = trial_rng(seed, i, t)
            u0 = H.field(g.standard_normal(d) + 1j * g.standard_normal(d))
            u0 = u0 * (1 / u0.norm())
            f_spec = None
            if with_source:
                f0 = g.standard_normal(d) + 1j * g.standard_normal(d)
                f0 /= np.linalg.norm(f0)
                omega = float(g.uniform(0, 20))
                f_spec = (lambda s, f0=f0, omega=omega: np.exp(-1j * omega * s) * f0)
            ratios.append(strichartz_ratio(H, u0, f_spec, T)[1])
            ids.append((seed, i, t))
    ratios = np.array(ratios)
    w = int(np.argmax(ratios))
    return RatioReport((T,), len(ratios), float(ratios.max()), float(ratios.mean()), ids[w])


def dispersive_scan(operators: Sequence[FloquetOperator1D], T_list: Sequence[float], trials: int = 10,
                    seed: int = 0) -> list[RatioReport]:
    """1D ``L^inf_x L^2_t`` ratios for random data, one report per horizon."""
    reports = []
    for p, T in enumerate(T_list):
        ratios, ids = [], []
        for i, op in enumerate(operators):
            d = 2 * op.cutoff + 1
            for t in range(trials):
                g = trial_rng(seed, i, t)
                u0 = g.standard_normal(d) + 1j * g.standard_normal(d)
                ratios.append(dispersive_ratio_1d(op, u0, T))
                ids.append((seed, i, t))
        ratios = np.array(ratios)
        w = int(np.argmax(ratios))
        reports.append(RatioReport((T,), len(ratios), float(ratios.max()), float(ratios.mean()), ids[w]))
    return reports


def tail_slope(reports: Sequence[RatioReport], tail: int = 4) -> float:
    """Log-log slope of ``max_ratio`` against the horizon over the last ``tail`` reports.

    A bound of the form ``C (1 + sqrt T)`` shows up as a slope tending to zero;
    growth like ``T`` instead of ``sqrt T`` gives a slope near 1/2.
    """
    pts = [(r.params[0], r.max_ratio) for r in reports][-tail:]
    if len(pts) < 2:
        raise ValueError("need at least two horizons")
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    return float(np.polyfit(x, y, 1)[0])
