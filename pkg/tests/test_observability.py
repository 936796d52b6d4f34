import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from toruslab.hamiltonian import SpectralProjectorSpec, build_hamiltonian, rough_potential
from toruslab.observability import (averaged_potential, averaged_potential_quadrature, build_gramian,
                                    direction_frame, gramian_form, is_nondecreasing, observability_constant,
                                    observation_matrix, observed_energy_quadrature, perturbation_check,
                                    restricted_free_gramian, shell_observability_scan)
from toruslab.torus import FourierField, ObservationRegion, TorusGeometry, box_points

SQ = TorusGeometry(2 * math.pi, 2 * math.pi)
PI = math.pi
HALF = ObservationRegion(((0.0, PI, 0.0, 2 * PI),))
QUARTER = ObservationRegion(((0.0, PI, 0.0, PI),))
L_SHAPE = ObservationRegion(((0.0, 1.0, 0.0, 2 * PI), (0.0, 2 * PI, 5.0, 6.0)))

# 1/lambda_min of the stepped Gramian (tests/oracles.stepped_gramian, 2000-4000 Simpson steps)
K_HALF_T1 = {2: 21.794629200641392, 4: 23.913910206884417}


def test_full_region_gives_T_identity():
    H = build_hamiltonian(SQ, rough_potential(SQ, 2, 0.2, 1.0, 0), 3)
    G, rep = build_gramian(H, ObservationRegion.full(SQ), 1.7)
    assert np.allclose(G, 1.7 * np.eye(49), atol=1e-12)
    assert rep.K == pytest.approx(1 / 1.7, rel=1e-12)
    reps = observability_constant(SQ, None, ObservationRegion.full(SQ), 2.0, [1, 2, 3])
    assert all(r.K == pytest.approx(0.5, rel=1e-12) for r in reps)


def test_short_time_limit():
    H = build_hamiltonian(SQ, None, 2)
    T = 1e-7
    G, _ = build_gramian(H, HALF, T)
    phi = H.eigensystem.eigenvectors
    want = phi.conj().T @ HALF.galerkin_matrix(SQ, 2) @ phi
    assert np.allclose(G / T, want, atol=1e-6)


def test_half_torus_constants_match_stepped_oracle():
    reps = observability_constant(SQ, None, HALF, 1.0, [2, 4])
    for r, N in zip(reps, (2, 4)):
        assert r.K == pytest.approx(K_HALF_T1[N], rel=1e-9)
        assert r.lambda_min > 0


@pytest.mark.parametrize("region", [HALF, QUARTER, L_SHAPE])
def test_form_matches_time_stepping(region):
    V = rough_potential(SQ, 2, 0.2, 1.0, 1)
    H = build_hamiltonian(SQ, V, 3)
    G, rep = build_gramian(H, region, 1.0)
    O = oracles.indicator_matrix(2 * PI, 2 * PI, 3, region.cells)
    for s in range(3):
        u = FourierField.random(SQ, 3, seed=s)
        want = oracles.stepped_observed_energy(H.matrix, O, u.vector, 1.0, 10_000)
        assert gramian_form(H, G, u) == pytest.approx(want, rel=1e-5)
        assert observed_energy_quadrature(H, region, 1.0, u) == pytest.approx(want, rel=1e-8)
    assert 0 < rep.lambda_min <= rep.lambda_max <= 1.0 * (1 + 1e-12)


def test_grid_observation_needs_fine_grid():
    H = build_hamiltonian(SQ, None, 3)
    with pytest.raises(ValueError):
        observation_matrix(H, HALF, M=12)
    # on a grid aligned with the region edges the sampled matrix is a Riemann sum of the exact one
    approx = observation_matrix(H, HALF, M=400)
    assert np.abs(approx - HALF.galerkin_matrix(SQ, 3)).max() < 2e-2


def test_monotone_in_N_and_region():
    Ks = [r.K for r in observability_constant(SQ, None, HALF, 1.0, [1, 2, 3, 4])]
    assert is_nondecreasing(Ks)
    H = build_hamiltonian(SQ, None, 3)
    assert build_gramian(H, HALF, 1.0)[1].K <= build_gramian(H, QUARTER, 1.0)[1].K + 1e-9


def test_degenerate_relabeling_invariance():
    H = build_hamiltonian(SQ, None, 3)
    G, rep = build_gramian(H, QUARTER, 1.0)
    # rotate inside every degenerate eigenspace and rebuild the Gramian by hand
    lam, phi = H.eigensystem.eigenvalues, H.eigensystem.eigenvectors
    g = np.random.Generator(np.random.Philox(3))
    Q = np.zeros_like(phi)
    start = 0
    while start < len(lam):
        stop = start
        while stop < len(lam) and abs(lam[stop] - lam[start]) < 1e-9:
            stop += 1
        m = stop - start
        Z = np.linalg.qr(g.standard_normal((m, m)) + 1j * g.standard_normal((m, m)))[0]
        Q[:, start:stop] = phi[:, start:stop] @ Z
        start = stop
    from toruslab._numerics import EigenSystem, gramian_in_eigenbasis
    G2 = gramian_in_eigenbasis(EigenSystem(lam, Q), QUARTER.galerkin_matrix(SQ, 3), 1.0)
    assert 1 / np.linalg.eigvalsh(G2)[0] == pytest.approx(rep.K, rel=1e-9)


@given(st.integers(0, 10_000), st.floats(0, 2 * math.pi))
def test_form_phase_invariant(seed, theta):
    H = build_hamiltonian(SQ, None, 2)
    G, _ = build_gramian(H, QUARTER, 1.0)
    u = FourierField.random(SQ, 2, seed)
    assert gramian_form(H, G, u * np.exp(1j * theta)) == pytest.approx(gramian_form(H, G, u), rel=1e-12)


def test_shell_scan():
    H = build_hamiltonian(SQ, None, 6)
    full = shell_observability_scan(H, [SpectralProjectorSpec(0.5, 1e6, "sharp")], QUARTER, 1.0)[0]
    assert full.K == pytest.approx(build_gramian(H, QUARTER, 1.0)[1].K, rel=1e-12)
    reps = shell_observability_scan(H, [SpectralProjectorSpec(1 / 3, 0.2, "sharp"),
                                        SpectralProjectorSpec(0.99, 0.001, "sharp")], QUARTER, 1.0)
    assert len(reps) == 1  # empty shell skipped


def test_shell_gramian_matches_plane_wave_oracle():
    H = build_hamiltonian(SQ, None, 6)
    spec = SpectralProjectorSpec(1 / 4, 0.2, "sharp")
    rep = shell_observability_scan(H, [spec], QUARTER, 1.0)[0]
    pts = box_points(6)
    k = (pts**2).sum(axis=1)
    modes = pts[np.abs(k / 16 - 1) < 0.2]
    G = restricted_free_gramian(SQ, 6, QUARTER, 1.0, modes)
    assert rep.K == pytest.approx(1 / np.linalg.eigvalsh(0.5 * (G + G.conj().T))[0], rel=1e-9)


def test_perturbation_small():
    V = rough_potential(SQ, 3, 0.2, 0.05, 2)
    rep = perturbation_check(SQ, V, HALF, 1.0, 4)
    assert rep["relative_change"] <= 0.25
    assert rep["slope"] < 1.0


def test_frames():
    f = direction_frame(SQ, 0, 1)
    assert np.allclose(f.xi0, [0, 1]) and f.b == pytest.approx(2 * PI) and f.a == pytest.approx(2 * PI)
    assert (f.gamma_shift / (2 * PI)) == pytest.approx(round(f.gamma_shift / (2 * PI)), abs=1e-12)
    f = direction_frame(SQ, 1, 0)
    assert f.b == pytest.approx(2 * PI) and f.a == pytest.approx(2 * PI)
    f = direction_frame(SQ, 1, 2)
    assert f.b == pytest.approx(2 * PI * math.sqrt(5)) and f.a == pytest.approx(2 * PI / math.sqrt(5))
    with pytest.raises(ValueError):
        direction_frame(SQ, 2, 4)


@given(st.integers(0, 10_000), st.sampled_from([(1, 2), (2, 3), (3, -1), (0, 1), (1, 1)]))
def test_frame_periodicity(seed, pq):
    geo = TorusGeometry(2 * PI, 3.0)
    f = direction_frame(geo, *pq)
    assert f.period_defect(FourierField.random(geo, 3, seed), seed=seed) <= 1e-10


def test_averaged_potential_examples():
    # depends only on the coordinate across the direction (1, 2)
    V = FourierField.from_plain(SQ, 2, {(2, -1): 1.0, (-2, 1): 1.0})
    f = direction_frame(SQ, 1, 2)
    W = averaged_potential(V, f)
    assert set(W.coeffs) == {-1, 1}
    x = np.linspace(0, f.a, 7)
    assert np.allclose(W(x), averaged_potential_quadrature(V, f, x), atol=1e-12)
    assert np.allclose(W(x), f.pullback(V, x, 0.37), atol=1e-12)
    osc = FourierField.from_plain(SQ, 2, {(1, 0): 1.0, (-1, 0): 1.0})
    assert averaged_potential(osc, f).coeffs == {}
    assert np.allclose(averaged_potential_quadrature(osc, f, x), 0, atol=1e-12)


def test_averaged_potential_lipschitz():
    f = direction_frame(SQ, 1, 2)
    V1 = rough_potential(SQ, 4, 0.2, 1.0, 1)
    V2 = rough_potential(SQ, 4, 0.2, 1.0, 2)
    W1, W2 = averaged_potential(V1, f), averaged_potential(V2, f)
    diff = {j: W1.coeffs.get(j, 0) - W2.coeffs.get(j, 0) for j in set(W1.coeffs) | set(W2.coeffs)}
    dW = math.sqrt(f.a * sum(abs(v) ** 2 for v in diff.values()))
    assert dW <= W1.lipschitz_constant(SQ) * (V1 - V2).norm() * (1 + 1e-12)
