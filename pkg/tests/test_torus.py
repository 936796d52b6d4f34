import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from toruslab.torus import (FourierField, ObservationRegion, TorusGeometry, analyze_grid, lp_norm, region_norm,
                            restrict_to_region, synthesize_grid, weighted_norm_sq)

SQ = TorusGeometry(2 * math.pi, 2 * math.pi)
RECT = TorusGeometry(2 * math.pi, 2 * math.pi / math.sqrt(2))
ODD = TorusGeometry(3.0, 5.5)


def test_weighted_norm_sq_examples():
    assert weighted_norm_sq(SQ, (0, 0)) == 0
    assert weighted_norm_sq(SQ, (3, 4)) == pytest.approx(25, abs=1e-12)
    assert weighted_norm_sq(RECT, (1, 1)) == pytest.approx(3, abs=1e-12)


def test_weighted_norm_sq_matches_second_difference():
    # -Laplacian of exp(i xi . z) by central differences of the direct sum
    z, h = np.array([0.3, 1.1]), 1e-4
    f = lambda x, y: oracles.direct_eval({(1, 1): 1.0}, RECT.period_x, RECT.period_y, x, y)
    lap = (f(z[0] + h, z[1]) + f(z[0] - h, z[1]) + f(z[0], z[1] + h) + f(z[0], z[1] - h) - 4 * f(*z)) / h**2
    assert -lap / f(*z) == pytest.approx(3, rel=1e-6)


@given(st.integers(-50, 50), st.integers(-50, 50))
def test_weighted_norm_sq_even(a, b):
    assert weighted_norm_sq(ODD, (a, b)) == weighted_norm_sq(ODD, (-a, -b))


def test_constant_and_single_mode_grids():
    g = synthesize_grid(FourierField.from_dict(SQ, 2, {(0, 0): 1}), 8)
    assert np.allclose(g.samples, 1 / math.sqrt(SQ.area), atol=1e-14)
    g = synthesize_grid(FourierField.from_dict(SQ, 1, {(1, 0): 1}), 8)
    j = np.arange(8)
    want = np.exp(2j * math.pi * j / 8)[:, None] * np.ones(8)[None, :] / math.sqrt(SQ.area)
    assert np.allclose(g.samples, want, atol=1e-14)


def test_grid_matches_direct_summation_and_round_trips():
    u = FourierField.random(ODD, 4, seed=7)
    g = synthesize_grid(u, 11)
    X, Y = g.points()
    coeffs = {n: u.coefficient(n) for n in oracles.modes(4)}
    assert np.allclose(g.samples, oracles.direct_eval(coeffs, ODD.period_x, ODD.period_y, X, Y), atol=1e-12)
    back = analyze_grid(g, 4)
    assert np.allclose(back.vector, u.vector, atol=1e-13)


def test_synthesis_rejects_aliasing_grid():
    with pytest.raises(ValueError):
        synthesize_grid(FourierField.random(SQ, 5, seed=0), 10)


@pytest.mark.parametrize("p", [2, 4, "4/3", "inf"])
def test_lp_norm_of_constant(p):
    gamma = 0.7 - 0.2j
    u = FourierField.constant(ODD, 3, gamma)
    q = {2: 2, 4: 4, "4/3": 4 / 3, "inf": math.inf}[p]
    want = abs(gamma) * (ODD.area ** (1 / q) if q != math.inf else 1.0)
    assert lp_norm(u, p, oversample=4) == pytest.approx(want, rel=1e-12)


def test_lp2_is_parseval_on_50_fields():
    worst = 0.0
    for s in range(50):
        u = FourierField.random(ODD, 5, seed=s) * (1 + s)
        worst = max(worst, abs(lp_norm(u, 2) - u.norm()) / u.norm())
    assert worst <= 1e-10


def test_lp4_matches_direct_quadrature():
    u = FourierField.random(SQ, 3, seed=3)
    M = 4 * 3 + 3  # |u|^4 has degree 4N, so M > 4N integrates it exactly
    x = 2 * math.pi * np.arange(M) / M
    X, Y = np.meshgrid(x, x, indexing="ij")
    vals = oracles.direct_eval({n: u.coefficient(n) for n in oracles.modes(3)}, SQ.period_x, SQ.period_y, X, Y)
    want = (np.sum(np.abs(vals) ** 4) * SQ.area / M**2) ** 0.25
    assert lp_norm(u, 4) == pytest.approx(want, rel=1e-12)


def test_lp_norm_rejects_unsupported_exponent():
    u = FourierField.random(SQ, 2, seed=0)
    with pytest.raises(ValueError):
        lp_norm(u, 3)
    with pytest.raises(ValueError):
        lp_norm(u, "4/3", oversample=2)


@given(st.integers(0, 10_000), st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False),
       st.sampled_from([2, 4, "inf"]))
def test_lp_norm_homogeneous(seed, lam, p):
    u = FourierField.random(SQ, 3, seed=seed)
    assert lp_norm(u * lam, p) == pytest.approx(abs(lam) * lp_norm(u, p), rel=1e-12, abs=1e-300)


def test_restrict_examples():
    u = FourierField.random(ODD, 4, seed=1) * 3.0
    _, nrm = restrict_to_region(u, ObservationRegion.full(ODD), 9)
    assert nrm == pytest.approx(u.norm(), rel=1e-10)
    gamma = 1.5
    c = FourierField.constant(ODD, 2, gamma)
    region = ObservationRegion(((0.0, 1.5, 0.0, 5.5),))
    m = region.measure()
    assert region_norm(c, region) == pytest.approx(abs(gamma) * math.sqrt(m), rel=1e-12)
    assert region_norm(c, region) == pytest.approx(c.norm() * math.sqrt(m / ODD.area), rel=1e-12)
    e = FourierField.from_dict(SQ, 3, {(2, -1): 1.0})
    half = ObservationRegion(((0.0, math.pi, 0.0, 2 * math.pi),))
    _, nrm = restrict_to_region(e, half, 64)
    assert nrm == pytest.approx(1 / math.sqrt(2), rel=1e-12)
    assert region_norm(e, half) == pytest.approx(1 / math.sqrt(2), rel=1e-12)


def test_empty_region_rejected():
    with pytest.raises(ValueError):
        ObservationRegion(())
    with pytest.raises(ValueError):
        ObservationRegion(((1.0, 1.0, 0.0, 2.0),))


def test_galerkin_matrix_matches_entrywise_integrals():
    rects = ((0.0, 1.0, 0.5, 2.0), (2.0, 3.0, 0.0, 5.5))
    region = ObservationRegion(rects)
    want = oracles.indicator_matrix(ODD.period_x, ODD.period_y, 2, rects)
    assert np.allclose(region.galerkin_matrix(ODD, 2), want, atol=1e-13)


def test_overlapping_rectangles_count_once():
    a = ObservationRegion(((0.0, 2.0, 0.0, 2.0), (1.0, 3.0, 1.0, 3.0)))
    assert a.measure() == pytest.approx(7.0)


rects = st.tuples(st.floats(0, 2.9), st.floats(0.05, 3.0), st.floats(0, 5.4), st.floats(0.05, 5.5)).map(
    lambda r: (r[0], min(r[0] + r[1], 3.0), r[2], min(r[2] + r[3], 5.5))).filter(lambda r: r[1] > r[0] and r[3] > r[2])


@given(st.integers(0, 10_000), st.lists(rects, min_size=1, max_size=3))
def test_restriction_never_exceeds_norm(seed, rs):
    u = FourierField.random(ODD, 3, seed=seed)
    region = ObservationRegion(tuple(rs))
    _, grid_norm = restrict_to_region(u, region, 16)
    assert grid_norm <= u.norm() * (1 + 1e-12)
    assert region_norm(u, region) <= u.norm() * (1 + 1e-12)
