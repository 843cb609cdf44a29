"""Mode lattice, exact transitions, synthesis and sampling of the linear field."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from spdelab import measures as ms
from spdelab import noise as nz
from spdelab.covariance import variance
from spdelab.errors import CannotCapture
from spdelab.kernels import time_factor


def _captured(lat):
    r2 = lat.radii ** 2
    full = np.where(lat.paired, 2.0, 1.0) * lat.weights
    return float(np.sum(full / (1 + r2)))


def test_white_lattice_capture():
    lat = nz.build_lattice(ms.FractionalLine(0.5), 1.0, eps=0.01)
    assert _captured(lat) >= 0.99 * 0.5
    assert lat.captured_fraction >= 0.99
    assert lat.spacing <= math.pi / (2 * 1.0 * 2)


def test_isotropic_d2_cannot_capture():
    with pytest.raises(CannotCapture):
        nz.build_lattice(ms.IsotropicFractional(0.5, 2), 1.0, eps=0.01)


def test_doubling_L_halves_spacing():
    m = ms.FractionalLine(0.7)
    a = nz.build_lattice(m, 1.0, eps=0.05)
    b = nz.build_lattice(m, 2.0, eps=0.05)
    assert b.spacing == pytest.approx(a.spacing / 2, rel=1e-15)


def test_half_space_representatives():
    lat = nz.build_lattice(ms.Riesz(1.0, 2), 1.0, eps=0.05)
    c = lat.centers
    assert lat.has_origin and np.all(c[0] == 0)
    assert not lat.paired[0]
    # no cell appears together with its mirror image
    keys = {tuple(np.round(x / lat.spacing).astype(int)) for x in c[1:]}
    assert all(tuple(-k for k in key) not in keys for key in keys)
    assert lat.captured_fraction >= 0.95
    # the centre-point sum carries an O(spacing^2) quadrature error near the origin
    assert _captured(lat) >= 0.90 * lat.dalang


def test_heat_transition_limits():
    _, sd = nz.heat_transition(0.0, 0.25)
    assert sd ** 2 == 0.25
    _, sd = nz.heat_transition(math.sqrt(2.0), 1e3)  # lambda = 1
    assert sd ** 2 == pytest.approx(0.5, rel=1e-15)


def test_heat_step_monte_carlo():
    # lambda = 0.5, dt = 1: E a(1)^2 = 1 - e^-1 from rest
    lat = nz.ModeLattice(np.array([[1.0]]), np.array([1.0]), 1.0, 1.0, 1.0, 1.0, False)
    z = np.random.default_rng(123).standard_normal((100_000, 1, 2))
    st = nz.step_heat(lat, nz.zero_state("heat", lat, 100_000), 1.0, z)
    sq = st.a[:, 0, 0] ** 2
    ref = 1 - math.exp(-1)
    assert ref == pytest.approx(0.632121, abs=1e-6)
    assert abs(sq.mean() - ref) <= 3 * sq.std(ddof=1) / math.sqrt(sq.size)


def test_wave_zero_frequency_noise():
    va, vc, cov = nz.wave_noise_covariance(0.0, 1.0)
    assert va == pytest.approx(1 / 3, abs=1e-16)
    assert vc == pytest.approx(1.0, abs=1e-16)
    assert cov == pytest.approx(0.5, abs=1e-16)


@pytest.mark.parametrize("w", [0.1, 1.0, 10.0])
@pytest.mark.parametrize("dt", [0.01, 0.1, 1.0])
def test_wave_noise_covariance_vs_quadrature(w, dt):
    va, vc, cov = nz.wave_noise_covariance(w, dt)
    kw = dict(epsabs=1e-16, epsrel=1e-12, limit=200)
    ref_a = quad(lambda u: math.sin(w * u) ** 2 / w ** 2, 0, dt, **kw)[0]
    ref_c = quad(lambda u: math.cos(w * u) ** 2, 0, dt, **kw)[0]
    ref_ac = quad(lambda u: math.sin(w * u) * math.cos(w * u) / w, 0, dt, **kw)[0]
    assert va == pytest.approx(ref_a, abs=1e-12)
    assert vc == pytest.approx(ref_c, abs=1e-12)
    assert cov == pytest.approx(ref_ac, abs=1e-12)


def _one_step(kind, w, dt):
    if kind == "heat":
        decay, sd = nz.heat_transition(w, dt)
        return np.array([[float(decay)]]), np.array([[float(sd) ** 2]])
    c, sw, ws, l11, l21, l22 = (float(x) for x in nz.wave_transition(w, dt))
    R = np.array([[c, sw], [-ws, c]])
    Lc = np.array([[l11, 0.0], [l21, l22]])
    return R, Lc @ Lc.T


@pytest.mark.parametrize("kind", ["heat", "wave"])
@pytest.mark.parametrize("w", [0.0, 0.3, 1.0, 7.0])
def test_chapman_kolmogorov(kind, w):
    dt = 0.8
    R, Q = _one_step(kind, w, dt)
    R2, Q2 = _one_step(kind, w, dt / 2)
    assert np.allclose(R2 @ R2, R, atol=1e-12, rtol=0)
    assert np.allclose(R2 @ Q2 @ R2.T + Q2, Q, atol=1e-12, rtol=0)


@pytest.mark.parametrize("kind", ["heat", "wave"])
@pytest.mark.parametrize("w", [0.0, 0.5, 3.0, 20.0])
def test_transition_law_matches_time_factor(kind, w):
    times = np.array([0.1, 0.35, 0.5, 1.0, 1.6])
    cov = nz.transition_covariance(kind, w, times)
    for i, t in enumerate(times):
        for j, tp in enumerate(times):
            assert cov[i, j] == pytest.approx(time_factor(kind, t, tp, w), abs=1e-10)


def test_single_zero_mode_synthesis():
    lat = nz.ModeLattice(np.zeros((1, 1)), np.array([0.3]), 1.0, 1.0, 1.0, 1.0, True)
    modes = np.zeros((1, 1, 2))
    modes[0, 0, 0] = 2.0
    v = nz.synthesize(lat, modes, np.linspace(-1, 1, 5))
    # Var v = w Var A_0: every point carries sqrt(w) A_0
    assert np.allclose(v, math.sqrt(0.3) * 2.0, atol=1e-15)


def test_single_mode_covariance_identity():
    xi, w = 1.7, 0.4
    lat = nz.ModeLattice(np.array([[xi]]), np.array([w]), 1.0, 2.0, 1.0, 1.0, False)
    rng = np.random.default_rng(0)
    modes = rng.standard_normal((200_000, 1, 2))
    pts = np.array([0.2, -0.5])
    v = nz.synthesize(lat, modes, pts)
    emp = np.mean(v[:, 0] * v[:, 1])
    exact = 2 * w * math.cos(xi * 0.7)
    assert abs(emp - exact) < 4 * np.std(v[:, 0] * v[:, 1]) / math.sqrt(len(v))
    # exactly, through the lattice covariance
    c = lat.covariance("heat", [((1.0, 0.2), (1.0, -0.5))])[0]
    assert c == pytest.approx(exact * time_factor("heat", 1.0, 1.0, xi), rel=1e-14)


def test_normal_block_deterministic():
    a = nz.normal_block(7, 3, 2, (4, 2))
    b = nz.normal_block(7, 3, 2, (4, 2))
    c = nz.normal_block(7, 3, 3, (4, 2))
    d = nz.normal_block(7, 4, 2, (4, 2))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)
    assert np.all(nz.normal_block(7, 3, 2, (4, 2), zero=True) == 0)


@pytest.mark.parametrize("kind", ["heat", "wave"])
def test_sampling_independent_of_batching(kind):
    lat = nz.build_lattice(ms.FractionalLine(0.6), 1.0, eps=0.05)
    times = np.linspace(0, 1, 5)
    pts = np.linspace(-1, 1, 7)
    a = nz.sample_linear_field(kind, lat, times, pts, 12, seed=4, batch=12)
    b = nz.sample_linear_field(kind, lat, times, pts, 12, seed=4, batch=5, max_entries=64)
    c = nz.sample_linear_field(kind, lat, times, pts, 4, seed=4, first_sample=8)
    assert np.array_equal(a, b)
    assert np.array_equal(a[8:], c)


def test_zero_noise_gives_zero_field():
    lat = nz.build_lattice(ms.FractionalLine(0.5), 1.0, eps=0.05)
    v = nz.sample_linear_field("wave", lat, [0.5, 1.0], [0.0], 3, 1, zero_noise=True)
    assert np.all(v == 0)


@pytest.mark.parametrize("kind, ref", [("heat", math.sqrt(1 / math.pi)), ("wave", 0.25)])
def test_white_variance_lattice_and_mc(kind, ref):
    lat = nz.build_lattice(ms.FractionalLine(0.5), 1.0, eps=1e-3)
    lat_var = lat.covariance(kind, [((1.0, 0.0), (1.0, 0.0))])[0]
    assert abs(lat_var - ref) <= 1e-3
    v = nz.sample_linear_field(kind, lat, [1.0], [0.0, 0.5], 4000, seed=2)[:, 0, :]
    sq = v ** 2
    for j in range(2):
        se = sq[:, j].std(ddof=1) / math.sqrt(len(sq))
        assert abs(sq[:, j].mean() - lat_var) <= 4 * se


def test_uniform_moment_bound_over_family():
    fam = ms.fractional_family([1, 2, 4, 8])
    bound = max(variance("heat", m, 1.0, 1e-9) for m in fam.members)
    for m in fam.members:
        lat = nz.build_lattice(m, 1.0, eps=1e-2)
        v = nz.sample_linear_field("heat", lat, [1.0], [0.0], 2000, seed=9)[:, 0, 0]
        sq = v ** 2
        assert sq.mean() <= bound + 4 * sq.std(ddof=1) / math.sqrt(sq.size)
