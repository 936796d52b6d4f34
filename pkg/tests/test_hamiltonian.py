import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import linalg
from scipy.special import mathieu_a

import oracles
from toruslab.hamiltonian import (AliasingWarning, SpectralProjectorSpec, build_hamiltonian, duhamel_residual,
                                  littlewood_paley_truncate, multiply_project, profile, propagate, propagator_lipschitz,
                                  rough_potential, spectral_projector, split_step)
from toruslab.torus import FourierField, TorusGeometry, box_points, weighted_norm_sq

SQ = TorusGeometry(2 * math.pi, 2 * math.pi)
ODD = TorusGeometry(4.0, 7.0)


def cos_xy():
    return FourierField.from_plain(SQ, 1, {(1, 0): 1, (-1, 0): 1, (0, 1): 1, (0, -1): 1})


def test_free_spectrum_small_box():
    lam = build_hamiltonian(SQ, None, 1).eigensystem.eigenvalues
    assert np.allclose(lam, [0, 1, 1, 1, 1, 2, 2, 2, 2], atol=1e-12)


def test_constant_potential_shifts_spectrum():
    free = build_hamiltonian(ODD, None, 3).eigensystem.eigenvalues
    shifted = build_hamiltonian(ODD, FourierField.constant(ODD, 0, 0.75), 3).eigensystem.eigenvalues
    assert np.allclose(shifted, free + 0.75, atol=1e-12)


def test_separable_ground_state():
    # 2 cos x + 2 cos y separates into two Mathieu problems with a = 4 lam, q = 4
    lam = build_hamiltonian(SQ, cos_xy(), 6).eigensystem.eigenvalues[0]
    assert lam == pytest.approx(2 * mathieu_a(0, 4.0) / 4, abs=1e-9)


def test_matrix_matches_entrywise_oracle():
    V = rough_potential(ODD, 2, 0.3, 1.0, seed=4)
    plain = {tuple(n): V.plain(tuple(n)) for n in box_points(2)}
    H = build_hamiltonian(ODD, V, 3)
    assert np.allclose(H.matrix, oracles.hamiltonian_matrix(4.0, 7.0, 3, plain), atol=1e-12)


def test_rejects_complex_potential():
    V = FourierField.from_plain(SQ, 1, {(1, 0): 1.0})
    with pytest.raises(ValueError):
        build_hamiltonian(SQ, V, 3)


@given(st.integers(0, 10_000), st.floats(0, 10))
def test_unitarity(seed, t):
    H = build_hamiltonian(SQ, rough_potential(SQ, 3, 0.2, 2.0, seed), 4)
    u = FourierField.random(SQ, 4, seed + 1)
    assert abs(propagate(H, u, t).norm() - 1.0) <= 1e-10


def test_propagate_matches_expm():
    H = build_hamiltonian(ODD, rough_potential(ODD, 2, 0.3, 1.0, seed=1), 3)
    u = FourierField.random(ODD, 3, seed=2)
    want = linalg.expm(-1.3j * H.matrix) @ u.vector
    assert np.allclose(propagate(H, u, 1.3).vector, want, atol=1e-11)
    assert np.allclose(propagate(H, u, 0.0).vector, u.vector, atol=1e-14)


def test_split_step_exact_cases():
    u = FourierField.random(SQ, 5, seed=3)
    H0 = build_hamiltonian(SQ, None, 5)
    assert (split_step(SQ, FourierField.zeros(SQ, 0), u, 2.0, 3) - propagate(H0, u, 2.0)).norm() <= 1e-12
    c = FourierField.constant(SQ, 0, 0.4)
    out = split_step(SQ, c, u, 2.0, 3)
    assert (out - propagate(H0, u, 2.0) * np.exp(-0.8j)).norm() <= 1e-12


def test_split_step_second_order():
    V = rough_potential(SQ, 3, 0.5, 1.0, seed=1)
    u0 = FourierField.random(SQ, 8, seed=2, radius=3)
    ref = propagate(build_hamiltonian(SQ, V, 8), u0, 1.0)
    steps = np.array([16, 32, 64, 128])
    err = [(split_step(SQ, V, u0, 1.0, int(s), M=2 * 8 + 2 * 3 + 1) - ref).norm() for s in steps]
    order = -np.polyfit(np.log(steps), np.log(err), 1)[0]
    assert 1.8 <= order <= 2.2


def test_split_step_aliasing_flag():
    with pytest.warns(AliasingWarning):
        split_step(SQ, rough_potential(SQ, 6, 0.5, 1.0, 0), FourierField.random(SQ, 3, 0), 0.1, 2)
    with pytest.raises(ValueError):
        split_step(SQ, FourierField.zeros(SQ, 0), FourierField.random(SQ, 3, 0), 0.1, 2, M=5)


def test_profiles():
    x = np.array([-1.0, -0.5, 0.0, 0.5, 0.99, 1.0, 1.2])
    assert np.allclose(profile("smooth")(x), [0, 1, 1, 1, profile("smooth")(0.99), 0, 0])
    assert np.allclose(profile("sharp")(x), [0, 1, 1, 1, 1, 0, 0])
    assert np.allclose(profile("closed")(x), [1, 1, 1, 1, 1, 1, 0])
    s = np.linspace(-1.5, 1.5, 3001)
    d2 = np.diff(profile("smooth")(s), 2) / (s[1] - s[0]) ** 2
    # second derivative of the quintic step peaks at 10/sqrt(3), scaled by 2^2 from the argument
    assert np.abs(d2).max() == pytest.approx(40 / math.sqrt(3), rel=1e-3)
    assert np.abs(np.diff(profile("smooth")(s))).max() < 1e-2  # continuous


def test_projector_examples():
    H = build_hamiltonian(SQ, None, 7)
    u = FourierField.random(SQ, 7, seed=5)
    big = SpectralProjectorSpec(0.5, 1e6, "sharp")
    assert (spectral_projector(H, big, u) - u).norm() <= 1e-12
    shell = SpectralProjectorSpec(1 / 5, 0.2, "sharp")
    out = spectral_projector(H, shell, u)
    k = weighted_norm_sq(SQ, box_points(7))
    keep = np.abs(k / 25 - 1) < 0.2
    assert np.allclose(out.vector, np.where(keep, u.vector, 0), atol=1e-12)
    e = FourierField.from_dict(SQ, 7, {(3, 4): 1.0})
    assert (spectral_projector(H, SpectralProjectorSpec(1 / 5, 0.1), e) - e).norm() <= 1e-12


@given(st.integers(0, 10_000), st.floats(0, 5), st.floats(0.15, 0.6), st.sampled_from(["smooth", "sharp"]))
def test_projector_commutes_with_flow(seed, t, h, chi):
    H = build_hamiltonian(SQ, rough_potential(SQ, 2, 0.3, 1.0, seed), 4)
    spec = SpectralProjectorSpec(h, 0.3, chi)
    u = FourierField.random(SQ, 4, seed)
    a = spectral_projector(H, spec, propagate(H, u, t))
    b = propagate(H, spectral_projector(H, spec, u), t)
    assert (a - b).norm() <= 1e-10


def test_multiply_project_is_galerkin_product():
    V = rough_potential(ODD, 3, 0.2, 1.0, seed=8)
    u = FourierField.random(ODD, 4, seed=9)
    H = build_hamiltonian(ODD, V, 4)
    want = (H.matrix - np.diag(weighted_norm_sq(ODD, box_points(4)))) @ u.vector
    assert np.allclose(multiply_project(V, u).vector, want, atol=1e-12)


def test_duhamel_free_and_constant():
    H0 = build_hamiltonian(SQ, None, 4)
    u = FourierField.random(SQ, 4, seed=1)
    assert duhamel_residual(H0, FourierField.zeros(SQ, 0), u, 0.7) <= 1e-12
    # V = c: exact factor exp(-i c t); the two-point Gauss rule applied to
    # int_0^t c exp(-i c s) ds has an explicit defect
    c, t = 0.9, 0.5
    V = FourierField.constant(SQ, 0, c)
    for steps in (4, 8):
        x, w = np.polynomial.legendre.leggauss(2)
        edges = np.linspace(0, t, steps + 1)
        quad = sum(0.5 * (b - a) * wi * c * np.exp(-1j * c * (0.5 * (a + b) + 0.5 * (b - a) * xi))
                   for a, b in zip(edges[:-1], edges[1:]) for xi, wi in zip(x, w))
        scalar = abs(np.exp(-1j * c * t) - 1 + 1j * quad)
        assert duhamel_residual(H0, V, u, t, steps) == pytest.approx(scalar * u.norm(), rel=1e-6, abs=1e-15)


def test_duhamel_refinement_order():
    V = FourierField.from_plain(SQ, 1, {(1, 0): 1, (-1, 0): 1})
    H0 = build_hamiltonian(SQ, None, 5)
    u = FourierField.random(SQ, 5, seed=2)
    r8, r16 = duhamel_residual(H0, V, u, 0.5, 8), duhamel_residual(H0, V, u, 0.5, 16)
    assert math.log2(r8 / r16) >= 3.5


def test_lp_truncation():
    V = rough_potential(SQ, 4, 0.2, 1.0, seed=3)
    assert (littlewood_paley_truncate(V, 10) - V).norm() == 0.0
    V0 = littlewood_paley_truncate(V, 0, "closed")
    kept = {tuple(n) for n in box_points(4) if V0.coefficient(tuple(n)) != 0}
    assert kept == {(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)}
    errs = [(littlewood_paley_truncate(V, j) - V).norm() for j in range(5)]
    assert all(b <= a + 1e-15 for a, b in zip(errs, errs[1:]))


def test_lipschitz_zero_for_equal_potentials():
    V = rough_potential(SQ, 3, 0.2, 1.0, seed=3)
    rep = propagator_lipschitz(V, V, FourierField.random(SQ, 4, 0), 2.0)
    assert rep["max_difference"] <= 1e-13 and rep["ratio"] == 0.0


def test_rough_potential_is_real_with_given_norm():
    V = rough_potential(ODD, 6, 0.1, 2.5, seed=1)
    assert V.is_real(1e-14)
    assert V.norm() == pytest.approx(2.5, rel=1e-12)


def test_aliasing_warning_not_raised_when_resolved():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        split_step(SQ, cos_xy(), FourierField.random(SQ, 3, 0), 0.1, 2)
