import math

import numpy as np
import pytest

from gegd.field_chain import (
    FieldChain,
    backward_chain,
    bound_map,
    forward_chain,
    gaussian_filter,
    gaussian_filter_adjoint,
    inverse_bound_map,
    tanh_project,
)
from gegd.grid import DesignGrid
from oracles import central_difference, direct_gaussian_filter


def test_bound_map_values():
    rho, jac = bound_map(np.array([0.0, math.log(3.0), 50.0, -50.0]))
    assert rho[0] == 0.0 and jac[0] == 0.5
    assert rho[1] == pytest.approx(0.5, abs=1e-15)
    assert rho[2] == pytest.approx(1.0) and rho[3] == pytest.approx(-1.0)
    z = np.linspace(-5, 5, 11)
    np.testing.assert_allclose(inverse_bound_map(bound_map(z)[0]), z, atol=1e-12)
    assert np.all(np.abs(bound_map(np.linspace(-30, 30, 101))[0]) < 1)


def test_filter_constant_and_symmetry():
    np.testing.assert_allclose(gaussian_filter(np.full((7, 9), 0.3), 1.7), 0.3, rtol=1e-14)
    rng = np.random.default_rng(0)
    a = rng.normal(size=(6, 8))
    sym = a + a[:, ::-1]
    out = gaussian_filter(sym, 1.3)
    np.testing.assert_allclose(out, out[:, ::-1], atol=1e-14)
    with pytest.raises(ValueError):
        gaussian_filter(a, 0.0)


def test_filter_impulse_center_weight():
    f = np.zeros((21, 21))
    f[10, 10] = 1.0
    out = gaussian_filter(f, 1.0)
    k = np.exp(-0.5 * np.arange(-4, 5) ** 2)
    assert out[10, 10] == pytest.approx(1.0 / k.sum() ** 2, rel=1e-12)
    assert out[10, 10] == pytest.approx(0.15915589, abs=1e-8)


def test_filter_matches_direct_sum():
    rng = np.random.default_rng(1)
    f = rng.uniform(-1, 1, (7, 10))
    np.testing.assert_allclose(gaussian_filter(f, 1.41), direct_gaussian_filter(f, 1.41), atol=1e-12)


def test_filter_adjoint_identity():
    rng = np.random.default_rng(2)
    x, y = rng.normal(size=(2, 9, 11))
    assert np.sum(gaussian_filter(x, 2.0) * y) == pytest.approx(np.sum(x * gaussian_filter_adjoint(y, 2.0)), rel=1e-12)


def test_projection_values():
    p, _ = tanh_project(np.array([0.0, 1.0, -1.0, 0.25]), 8.0)
    assert p[0] == 0.0 and p[1] == pytest.approx(1.0) and p[2] == pytest.approx(-1.0)
    assert p[3] == pytest.approx(math.tanh(2) / math.tanh(8))
    assert p[3] == pytest.approx(0.96403, abs=1e-5)
    x = np.linspace(-0.9, 0.9, 7)
    _, dp = tanh_project(x, 3.0)
    fd = (tanh_project(x + 1e-7, 3.0)[0] - tanh_project(x - 1e-7, 3.0)[0]) / 2e-7
    np.testing.assert_allclose(dp, fd, rtol=1e-6)


def test_chain_stays_in_range():
    g = DesignGrid(10, 12, 3, "d1-cols")
    chain = FieldChain.for_fdg(g)
    rho = chain.forward_latent(np.random.default_rng(3).uniform(-1, 1, g.n_params)).reward.rho_r
    assert np.all(np.abs(rho) < 1) and g.is_symmetric(rho, atol=1e-14)


@pytest.mark.parametrize("sym", ["none", "d1-cols", "d1-rows"])
def test_chain_gradient_matches_finite_differences(sym):
    g = DesignGrid(8, 8, 3, sym)
    chain = FieldChain(g, 1.2, 2.0)
    rng = np.random.default_rng(4)
    zeta = rng.normal(scale=0.5, size=g.n_params)
    w = rng.normal(size=g.shape)
    grad = backward_chain(w, zeta, chain)
    fd = central_difference(lambda z: float(np.sum(w * forward_chain(z, chain).rho_r)), zeta, 1e-6)
    assert np.linalg.norm(grad - fd) / np.linalg.norm(fd) < 1e-5
    # single-pixel upstream gradients
    for k in (0, g.size // 2 + 3):
        e = np.zeros(g.size)
        e[k] = 1.0
        gk = backward_chain(e.reshape(g.shape), zeta, chain)
        fdk = central_difference(lambda z: forward_chain(z, chain).rho_r.ravel()[k], zeta, 1e-6)
        assert np.linalg.norm(gk - fdk) / np.linalg.norm(fdk) < 1e-5


def test_chain_backward_degenerate_inputs():
    g = DesignGrid(6, 8, 2, "d1-cols")
    chain = FieldChain.for_fdg(g)
    zeta = np.random.default_rng(5).normal(size=g.n_params)
    assert np.all(backward_chain(np.zeros(g.shape), zeta, chain) == 0)
    # a mirror-symmetric point on an unconstrained grid gets a mirror-symmetric gradient
    free = DesignGrid(6, 8, 2)
    fchain = FieldChain.for_fdg(free)
    half = np.random.default_rng(6).normal(size=(6, 4))
    z = np.hstack([half, half[:, ::-1]]).ravel()
    gz = backward_chain(np.ones(free.shape), z, fchain).reshape(free.shape)
    np.testing.assert_allclose(gz, gz[:, ::-1], atol=1e-14)
    with pytest.raises(ValueError):
        chain.forward(np.zeros(g.n_params + 1))
    with pytest.raises(ValueError):
        chain.backward(chain.forward_latent(np.zeros(g.n_params)), np.zeros(g.shape))
