import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lfp.core import Dataset, LfpCoefficients, SpectralSolution, build_lattice, gamma_l2_norm
from lfp.data import random_1d
from lfp.solver import (
    RidgeConfig,
    SingularSystemError,
    gram_matrix,
    interpolation_residual,
    kernel_matrix,
    predict,
    solve_interpolant,
    solve_lfp,
    spectrum_csv,
)

import oracles

# frozen from oracles.primal_ridge(X, Y, d=1, L=1, K=8, A=1, B=0.5, eps=1e-3)
PRIMAL_X = np.array([0.1, 0.35, 0.6, 0.9])
PRIMAL_Y = np.array([1.0, -0.5, 0.25, 2.0])
PRIMAL_H1 = 0.5401986252150701 + 0.19377984837649717j
PRIMAL_H3 = 0.07620942691905987 + 0.13194248583798046j
PRIMAL_AT_HALF = -1.1623076465288735


def test_gram_diagonal_is_gamma_norm_squared():
    lat = build_lattice(2, 3.0, 6)
    c = LfpCoefficients(0.5, 1.5, 2)
    X = np.random.default_rng(0).uniform(-1, 1, (7, 2))
    G = gram_matrix(X, lat, c)
    np.testing.assert_allclose(np.diag(G), gamma_l2_norm(lat, c) ** 2, rtol=1e-13)


def test_gram_single_pair():
    lat = build_lattice(1, 1.0, 2)
    G = gram_matrix(np.array([0.0, 0.5]), lat, LfpCoefficients(1.0, 0.0, 1))
    np.testing.assert_allclose(G, [[2.0, -2.0], [-2.0, 2.0]], atol=1e-14)


@pytest.mark.parametrize("d,K", [(1, 9), (2, 4)])
def test_gram_matches_complex_oracle(d, K):
    rng = np.random.default_rng(d)
    X = rng.uniform(-1, 1, (6, d))
    G = gram_matrix(X, build_lattice(d, 1.3, K), LfpCoefficients(0.8, 1.2, d))
    ref = oracles.gram_complex(X, d, 1.3, K, 0.8, 1.2)
    assert np.max(np.abs(ref.imag)) < 1e-12 * np.max(np.abs(ref))
    np.testing.assert_allclose(G, ref.real, rtol=1e-12, atol=1e-12 * np.max(np.abs(ref)))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), M=st.integers(1, 12))
def test_gram_symmetric_psd(seed, M):
    rng = np.random.default_rng(seed)
    lat = build_lattice(1, 2.0, 20)
    X = rng.uniform(-1, 1, M)
    G = gram_matrix(X, lat, LfpCoefficients(rng.uniform(0, 2), rng.uniform(0.01, 2), 1))
    np.testing.assert_array_equal(G, G.T)
    assert np.linalg.eigvalsh(G)[0] >= -1e-9 * np.trace(G)


def test_kernel_matrix_agrees_with_gram():
    lat = build_lattice(1, 5.0, 40)
    c = LfpCoefficients(1.0, 1.0, 1)
    X = np.linspace(-1, 1, 9)
    np.testing.assert_allclose(kernel_matrix(X, X, lat, c), gram_matrix(X, lat, c), rtol=1e-12)


def test_single_point_absorbed_by_intercept():
    lat = build_lattice(1, 20.0, 50)
    dual, spec = solve_lfp(Dataset([0.0], [1.0]), lat, LfpCoefficients(1.0, 1.0, 1))
    assert dual.alpha == pytest.approx([0.0], abs=1e-15)
    assert dual.intercept == pytest.approx(1.0, abs=1e-15)
    assert np.max(np.abs(spec.coeffs)) < 1e-15


@pytest.mark.parametrize("mode", ["unpenalized", "none"])
def test_zero_data_gives_zero_solution(mode):
    lat = build_lattice(1, 20.0, 50)
    data = Dataset([-0.5, 0.1, 0.7], [0.0, 0.0, 0.0])
    dual, spec = solve_lfp(data, lat, LfpCoefficients(1.0, 1.0, 1), RidgeConfig(1e-6, mode))
    assert np.all(dual.alpha == 0) and dual.intercept == 0 and np.all(spec.coeffs == 0)
    assert interpolation_residual(spec, data) == 0.0


def test_dual_matches_frozen_primal_solution():
    lat = build_lattice(1, 1.0, 8)
    c = LfpCoefficients(1.0, 0.5, 1)
    _, spec = solve_lfp(Dataset(PRIMAL_X, PRIMAL_Y), lat, c, RidgeConfig(1e-3, "none"))
    assert spec.coeffs[lat.index_of((1,)) - lat.half] == pytest.approx(PRIMAL_H1, rel=1e-10)
    assert spec.coeffs[lat.index_of((3,)) - lat.half] == pytest.approx(PRIMAL_H3, rel=1e-10)
    assert predict(spec, [0.5])[0] == pytest.approx(PRIMAL_AT_HALF, rel=1e-10)


def test_dual_matches_primal_oracle_2d():
    rng = np.random.default_rng(4)
    X = rng.uniform(0, 1, (5, 2))
    y = rng.normal(size=5)
    lat = build_lattice(2, 1.5, 4)
    _, spec = solve_lfp(Dataset(X, y), lat, LfpCoefficients(0.6, 1.4, 2), RidgeConfig(1e-2, "none"))
    ref = oracles.primal_ridge(X, y, 2, 1.5, 4, 0.6, 1.4, 1e-2)
    np.testing.assert_allclose(spec.coeffs, [ref[tuple(k)] for k in lat.k_pos], rtol=1e-9, atol=1e-12)


def test_kkt_and_stationarity():
    data = random_1d(12, seed=3)
    lat = build_lattice(1, 20.0, 2000)
    c = LfpCoefficients(0.03, 0.002, 1)
    dual, spec = solve_lfp(data, lat, c, RidgeConfig(1e-6))
    lhs = (dual.gram + 1e-6 * np.eye(12)) @ dual.alpha + dual.intercept
    np.testing.assert_allclose(lhs, data.y, atol=1e-10 * np.max(np.abs(data.y)))
    assert abs(np.sum(dual.alpha)) < 1e-10 * np.max(np.abs(dual.alpha))
    # h(xi) / c(xi) = sum_i alpha_i exp(-2 pi i xi.x_i)
    E = np.exp(-2j * np.pi * data.X @ lat.xi_pos.T)
    np.testing.assert_allclose(spec.coeffs / c(lat.xi_pos), dual.alpha @ E, rtol=1e-12, atol=1e-12)
    assert np.isfinite(dual.condition)


def test_residual_small_and_decreasing_in_epsilon():
    data = random_1d(12, seed=0)
    lat = build_lattice(1, 20.0, 2000)
    c = LfpCoefficients(0.03, 0.002, 1)
    res = []
    for eps in (1e-4, 1e-5, 1e-6, 1e-7):
        dual, spec = solve_lfp(data, lat, c, RidgeConfig(eps))
        r = interpolation_residual(spec, data)
        assert r == pytest.approx(eps * np.max(np.abs(dual.alpha)), abs=1e-10 * np.max(np.abs(data.y)))
        res.append(r)
    assert res[2] < 1e-3 * np.max(np.abs(data.y))
    assert all(b <= a for a, b in zip(res, res[1:]))


def test_halving_epsilon_never_increases_residual():
    rng = np.random.default_rng(9)
    X, y = rng.uniform(0, 1, 6), rng.normal(size=6)
    lat = build_lattice(1, 1.0, 12)
    c = LfpCoefficients(1.0, 1.0, 1)
    prev = np.inf
    for j in range(20):
        _, spec = solve_lfp(Dataset(X, y), lat, c, RidgeConfig(2.0 ** -j, "none"))
        r = interpolation_residual(spec, Dataset(X, y))
        assert r <= prev * (1 + 1e-12)
        prev = r


def test_interpolant_is_exact():
    rng = np.random.default_rng(2)
    data = Dataset(rng.uniform(0, 1, 5), rng.normal(size=5))
    _, spec = solve_interpolant(data, build_lattice(1, 1.0, 10), LfpCoefficients(1.0, 1.0, 1))
    assert interpolation_residual(spec, data) < 1e-10


def test_dual_and_spectral_predictions_agree():
    rng = np.random.default_rng(5)
    data = Dataset(rng.uniform(-1, 1, (8, 2)), rng.normal(size=8))
    lat = build_lattice(2, 24.0, 30)
    dual, spec = solve_lfp(data, lat, LfpCoefficients(1.0, 0.5, 2))
    pts = rng.uniform(-1, 1, (200, 2))
    a, b = predict(dual, pts), predict(spec, pts)
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-9 * np.max(np.abs(b)))
    np.testing.assert_allclose(predict(dual, data.X), predict(spec, data.X), rtol=1e-9)


def test_shift_invariance_on_periodic_lattice():
    rng = np.random.default_rng(6)
    X, y = rng.uniform(0, 0.5, 5), rng.normal(size=5)
    lat = build_lattice(1, 1.0, 16)
    c = LfpCoefficients(1.0, 1.0, 1)
    delta = 0.3
    _, s0 = solve_lfp(Dataset(X, y), lat, c)
    _, s1 = solve_lfp(Dataset(X + delta, y), lat, c)
    t = np.linspace(0, 1, 50)
    np.testing.assert_allclose(predict(s1, t + delta), predict(s0, t), atol=1e-10)


def test_h_ini_is_added_back():
    rng = np.random.default_rng(7)
    lat = build_lattice(1, 1.0, 6)
    c = LfpCoefficients(1.0, 1.0, 1)
    h_ini = SpectralSolution(lat, rng.normal(size=lat.half) + 1j * rng.normal(size=lat.half), 0.0)
    data = Dataset(rng.uniform(0, 1, 3), rng.normal(size=3))
    dual, spec = solve_lfp(data, lat, c, RidgeConfig(1e-9, "none"), h_ini=h_ini)
    np.testing.assert_allclose(predict(spec, data.X), data.y, atol=1e-6)
    np.testing.assert_allclose(predict(dual, [0.2, 0.4]), predict(spec, [0.2, 0.4]), atol=1e-10)
    # y = h_ini(X): nothing to learn
    same = Dataset(data.X, h_ini(data.X))
    _, s2 = solve_lfp(same, lat, c, RidgeConfig(1e-6, "none"), h_ini=h_ini)
    np.testing.assert_allclose(s2.coeffs, h_ini.coeffs, atol=1e-12)


def test_errors():
    lat1 = build_lattice(1, 1.0, 2)
    with pytest.raises(ValueError):
        solve_lfp(Dataset(np.zeros((1, 2)), [1.0]), lat1, LfpCoefficients(1, 1, 1))
    # five points, one frequency pair: rank 2 Gram, singular without regularisation
    data = Dataset(np.linspace(0, 0.8, 5), np.arange(5.0))
    with pytest.raises(SingularSystemError) as info:
        solve_interpolant(data, lat1, LfpCoefficients(1, 0, 1), intercept_mode="none")
    assert info.value.condition > 1e15
    for bad in [dict(epsilon=0.0), dict(intercept_mode="bias"), dict(solver_tolerance=-1.0)]:
        with pytest.raises(ValueError):
            RidgeConfig(**bad)


def test_serialisation():
    data = random_1d(5, seed=1)
    lat = build_lattice(1, 4.0, 10)
    dual, spec = solve_lfp(data, lat, LfpCoefficients(1.0, 2.0, 1))
    raw = json.loads(dual.to_json())
    assert raw["lattice"] == {"d": 1, "L_prime": 4.0, "K": 10}
    assert raw["alpha"] == [float(a) for a in dual.alpha]
    assert raw["dataset_sha256"] == data.sha256()
    lines = spectrum_csv(spec).splitlines()
    assert lines[0] == "k1,re,im"
    assert len(lines) == 2 + lat.half
    assert lines[1].startswith("0,")
