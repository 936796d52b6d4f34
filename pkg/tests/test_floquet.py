import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import mathieu_a

import oracles
from toruslab._numerics import iota
from toruslab.floquet import (build_floquet, dispersive_ratio_1d, free_dispersive_identity, observability_constant_1d,
                              propagate_floquet, rough_potential_1d, stationary_check_1d)

TWO_PI = 2 * math.pi


def test_free_matrices():
    assert np.allclose(build_floquet(0.0, {}, 2).matrix, np.diag([4, 1, 0, 1, 4]))
    assert np.allclose(build_floquet(0.5, {}, 1).matrix, np.diag([0.25, 0.25, 2.25]))


def test_mathieu_ground_state():
    # -v'' + 2 cos(x) v = lam v  <=>  y'' + (a - 2 q cos 2s) y = 0 with x = 2s, a = 4 lam, q = 4
    want = mathieu_a(0, 4.0) / 4
    lam = build_floquet(0.0, {1: 1.0, -1: 1.0}, 8).eigensystem.eigenvalues[0]
    assert lam == pytest.approx(want, abs=1e-10)


def test_matrix_matches_oracle():
    w = rough_potential_1d(4, 0.2, 1.3, seed=2)
    op = build_floquet(0.37, w, 5)
    assert np.allclose(op.matrix, oracles.floquet_matrix(0.37, w, 5), atol=1e-14)


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        build_floquet(0.0, {1: 1.0, -1: 0.5}, 3)  # not real
    with pytest.raises(ValueError):
        build_floquet(1.0, {}, 3)


def test_rough_potential_norm():
    w = rough_potential_1d(10, 0.1, 0.7, seed=5)
    assert build_floquet(0.0, w, 4).potential_l2() == pytest.approx(0.7, rel=1e-12)


@given(st.integers(0, 10_000), st.floats(0, 0.99), st.floats(-50, 50))
def test_propagation_is_unitary(seed, k, t):
    g = np.random.Generator(np.random.Philox(seed))
    op = build_floquet(k, rough_potential_1d(3, 0.1, 1.0, seed), 6)
    v = g.standard_normal(13) + 1j * g.standard_normal(13)
    assert np.linalg.norm(propagate_floquet(op, v, t)) == pytest.approx(np.linalg.norm(v), rel=1e-10)
    assert np.allclose(propagate_floquet(op, v, 0.0), v, atol=1e-13)


def test_dispersive_identity_examples():
    single = free_dispersive_identity({3: 2.0}, 0.3)
    assert single.lhs == pytest.approx(TWO_PI * 4, rel=1e-10)
    half = free_dispersive_identity({0: 1.0, -1: 1.0}, 0.5)
    assert half.rhs == pytest.approx(8 * math.pi, rel=1e-12)
    assert half.lhs == pytest.approx(8 * math.pi, rel=1e-10)
    zero = free_dispersive_identity({1: 1.0, -1: 1.0}, 0.0)
    assert zero.lhs == pytest.approx(8 * math.pi, rel=1e-10)


@pytest.mark.parametrize("k", [0.0, 0.3, 0.5])
def test_dispersive_lhs_matches_time_stepping(k):
    g = np.random.Generator(np.random.Philox(11))
    c = {n: complex(g.standard_normal(), g.standard_normal()) for n in range(-4, 5)}
    rep = free_dispersive_identity(c, k, x_points=32)
    x = TWO_PI * np.arange(32) / 32
    vals = [oracles.dispersive_lhs_bruteforce(c, k, rep.period, xi, 20_000) * TWO_PI / rep.period for xi in x]
    assert rep.lhs == pytest.approx(max(vals), rel=1e-7)


@given(st.integers(0, 10_000), st.sampled_from([0.0, 0.3, 0.5, 0.25]), st.integers(1, 12))
def test_dispersive_identity_holds(seed, k, N):
    g = np.random.Generator(np.random.Philox(seed))
    c = {n: complex(g.standard_normal(), g.standard_normal()) for n in range(-N, N + 1)}
    rep = free_dispersive_identity(c, k)
    assert rep.holds


def test_full_circle_gramian_is_T_identity():
    op = build_floquet(0.3, {1: 1.0, -1: 1.0}, 5)
    rep = observability_constant_1d(op, [(0.0, TWO_PI)], 2.5)
    assert np.allclose(rep.gramian, 2.5 * np.eye(11), atol=1e-12)
    assert rep.K == pytest.approx(1 / 2.5, rel=1e-12)


def test_half_circle_constant_matches_stepped_gramian():
    N, T = 6, TWO_PI
    n = np.arange(-N, N + 1)
    O = np.array([[oracles.rect_overlap_integral(b - a, 0.0, math.pi) for b in n] for a in n]) / TWO_PI
    G = oracles.stepped_gramian(oracles.floquet_matrix(0.0, {}, N), O, T, 10_000)
    want = 1 / np.linalg.eigvalsh(0.5 * (G + G.conj().T))[0]
    rep = observability_constant_1d(build_floquet(0.0, {}, N), [(0.0, math.pi)], T)
    assert rep.K == pytest.approx(want, rel=1e-6)
    assert rep.K == pytest.approx(1 / math.pi, rel=1e-9)  # stepped oracle value 0.3183098861839...


def test_constant_decreases_with_larger_window():
    op = build_floquet(0.0, {}, 6)
    small = observability_constant_1d(op, [(0.0, math.pi)], 1.0).K
    large = observability_constant_1d(op, [(0.0, 1.5 * math.pi)], 1.0).K
    assert large < small


def test_stationary_diagonal_resolvent():
    op = build_floquet(0.0, {}, 4)
    g = np.zeros(9, complex)
    g[4 + 2] = 1.0  # mode n = 2
    omega = [(0.0, math.pi)]
    rep = stationary_check_1d(op, 0.5, g, omega)
    u_norm = 1 / (4 - 0.5)
    u_omega = u_norm * math.sqrt(0.5)  # |e_n|^2 is constant, omega has half the length
    want = u_norm / (1 / math.sqrt(math.sqrt(1 + 0.25)) + u_omega)
    assert rep.ratio == pytest.approx(want, rel=1e-12)
    assert rep.residual <= 1e-12


def test_stationary_kernel_case():
    op = build_floquet(0.0, {}, 4)
    rep = stationary_check_1d(op, 4.0, None, [(0.0, math.pi)])
    assert rep.kernel_case and rep.near_eigenvalue
    assert math.isfinite(rep.ratio)


def test_dispersive_ratio_single_mode_closed_form():
    op = build_floquet(0.0, {}, 3)
    u0 = np.zeros(7, complex)
    u0[3 + 1] = 2.0
    T = 3.0
    # |u(x, t)| = 2/sqrt(2 pi) for all x, t
    want = (2 / math.sqrt(TWO_PI)) * math.sqrt(T) / ((1 + math.sqrt(T)) * 2)
    assert dispersive_ratio_1d(op, u0, T) == pytest.approx(want, rel=1e-12)


def test_iota_series_branch_is_continuous():
    T = 2.0
    d = np.array([1e-5 / T, 2e-4 / T, 1e-6])
    exact = (np.exp(1j * d * T) - 1) / (1j * d)
    assert np.allclose(iota(d, T), exact, rtol=1e-10)
    assert iota(np.array([0.0]), T)[0] == T
