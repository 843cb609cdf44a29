"""Pathwise Picard solver: drifts, envelopes, exactness, order, truncation."""

import math

import numpy as np
import pytest

from spdelab import measures as ms
from spdelab import solver as sv
from spdelab.errors import ConeViolation, InvalidInitialData, NoConvergence, UnsupportedKernel
from spdelab.fieldio import Field
from spdelab.kernels import KernelSpec, constant_data, sine_data, weierstrass_data


def _spec(kind, drift, data=None, T=1.0, nt=8, L=0.5, dx=0.25, d=1):
    data = constant_data(0.0) if data is None else data
    return sv.EquationSpec(KernelSpec(kind, d), drift, data, sv.SpaceTimeGrid(T, nt, L, dx, d))


def _eta(spec, values):
    g = spec.grid
    axes = g.axes(spec.kind)
    shape = (g.nt + 1,) + tuple(len(a) for a in axes)
    return Field(g.times, axes, np.broadcast_to(values, shape).astype(float).copy(), 0)


# --- drifts ------------------------------------------------------------------------------

def test_builtin_drifts_pass_spot_check():
    for name, make in sv.BUILTIN_DRIFTS.items():
        assert make().spot_check() == [], name


def test_spot_check_catches_wrong_tags():
    bad = sv.DriftSpec(lambda u: 3 * np.sin(u), 1.0, 1.0, "bad")
    problems = bad.spot_check()
    assert len(problems) == 2


def test_truncate_examples():
    bm = sv.truncate_drift(sv.linear_drift(1.0), 2.0)
    assert bm(np.array(3.0)) == 2.0
    assert bm(np.array(-3.0)) == -2.0
    assert bm(np.array(1.0)) == 1.0
    assert bm.bound == 2.0
    assert bm.lipschitz_constant == 1.0


def test_truncate_inactive_when_bounded():
    b = sv.sine_drift(0.5)
    bm = sv.truncate_drift(b, 0.5)
    x = np.linspace(-20, 20, 4001)
    assert np.array_equal(bm(x), b(x))


def test_truncate_bound_enforced():
    b = sv.DriftSpec(lambda u: 10 * np.sin(u), 10.0, 10.0, "big")
    x = np.linspace(-20, 20, 4001)
    assert np.max(np.abs(sv.truncate_drift(b, 5.0)(x))) <= 5.0


def test_truncate_rejects_nonpositive_level():
    with pytest.raises(ValueError):
        sv.truncate_drift(sv.sine_drift(), 0.0)


def test_drift_registry_roundtrip():
    b = sv.drift_from_dict({"name": "sine", "amp": 0.25})
    assert b.lipschitz_constant == 0.25 and b.bound == 0.25
    with pytest.raises(ValueError):
        sv.drift_from_dict({"name": "cubic"})


# --- envelopes ---------------------------------------------------------------------------

def test_wave_envelope_value():
    assert sv.gronwall_envelope("wave", 1.0, 1.0, 1.0, None, 1.0, 1.0, 2) == pytest.approx(2.5)


def test_wave_envelope_factorial_decay():
    vals = [sv.gronwall_envelope("wave", 0.0, 2.0, 1.0, None, 1.0, 1.0, k) for k in range(40)]
    assert vals[-1] < 1e-30
    assert vals[5] == pytest.approx(2.0 ** 5 / math.factorial(5))


def test_heat_envelope_limit():
    lam1, t = 0.3, 1.5
    v = sv.gronwall_envelope("heat", lam1, 1.0, 1.0, 1.0, 1.0, t, 60)
    assert v == pytest.approx(lam1 * math.exp(t), rel=1e-12)
    assert v <= lam1 * math.exp(t) * (1 + 1e-12)


def test_heat_envelope_bounded_form():
    # 2 |b| C_b^(k-1) (lam2 t)^k / k! at lam1 = 0
    v = sv.gronwall_envelope("heat", 0.0, 2.0, 5.0, 0.5, 3.0, 1.0, 3)
    assert v == pytest.approx(2 * 0.5 * 9.0 * 8.0 / 6.0)


def test_envelope_rejects_negative():
    with pytest.raises(ValueError):
        sv.gronwall_envelope("heat", -1.0, 1.0, 1.0, None, 1.0, 1.0, 1)


# --- equation invariants -----------------------------------------------------------------

def test_nonlinear_wave_needs_d1():
    with pytest.raises(UnsupportedKernel):
        _spec("wave", sv.sine_drift(), constant_data(1.0), d=2, dx=0.25)


def test_nonlinear_heat_needs_low_dimension():
    with pytest.raises(UnsupportedKernel):
        _spec("heat", sv.sine_drift(), constant_data(1.0), d=3, dx=0.5)


def test_unbounded_heat_drift_needs_holder_data():
    data = constant_data(1.0)
    data.regularity, data.grad_u0 = "bounded", None
    with pytest.raises(InvalidInitialData):
        _spec("heat", sv.linear_drift(-1.0), data)
    spec = _spec("heat", sv.linear_drift(-1.0), weierstrass_data(0.5))
    assert spec.continuum_caveat
    assert not _spec("heat", sv.sine_drift(), weierstrass_data(0.5)).continuum_caveat


# --- Picard ------------------------------------------------------------------------------

def test_zero_drift_returns_eta():
    spec = _spec("heat", sv.zero_drift())
    eta = _eta(spec, 0.0)
    eta.values[:] = np.random.default_rng(1).normal(size=eta.values.shape)
    z = sv.picard_solve(spec, eta)
    assert np.array_equal(z.values, eta.values)
    assert z.meta["iterations"] == [1]


@pytest.mark.parametrize("nt", [4, 8, 16])
def test_constant_drift_exact(nt):
    c = 1.7
    for kind, exact in [("heat", lambda t: c * t), ("wave", lambda t: c * t * t / 2)]:
        spec = _spec(kind, sv.constant_drift(c), nt=nt)
        z = sv.picard_solve(spec, _eta(spec, 0.0))
        sol = exact(spec.grid.times)[:, None]
        assert np.max(np.abs(z.values - sol)) <= 1e-12


def _ode_errors(kind, nts):
    errs = []
    for nt in nts:
        spec = _spec(kind, sv.linear_drift(-1.0), constant_data(1.0), nt=nt)
        eta = _eta(spec, sv.initial_field(spec))
        z = sv.picard_solve(spec, eta, tol=1e-14)
        t = spec.grid.times[:, None]
        exact = np.exp(-t) if kind == "heat" else np.cos(t)
        errs.append(float(np.max(np.abs(z.values - exact))))
    return np.array(errs)


@pytest.mark.parametrize("kind", ["heat", "wave"])
def test_second_order_in_time(kind):
    errs = _ode_errors(kind, [8, 16, 32, 64])
    ratios = errs[:-1] / errs[1:]
    assert np.all(np.abs(ratios - 4.0) <= 0.2), ratios


def test_certificate_holds_and_increments_decay():
    spec = _spec("heat", sv.sine_drift(0.5), sine_data(1.0), nt=16, dx=0.1)
    eta = _eta(spec, sv.initial_field(spec))
    z = sv.picard_solve(spec, eta, tol=1e-12)
    m = z.meta
    assert m["certificate"]
    inc = np.array(m["increments"][0])
    env = np.array(m["envelope"][0])
    assert np.all(inc <= 1.1 * env + 1e-13)
    assert inc[-1] <= 1e-12
    # residual of the returned iterate
    K = sv.SpaceTimeConvolution("heat", spec.grid, len(eta.axes[0]))
    res = np.max(np.abs(z.values - eta.values - K(spec.drift(z.values))))
    assert res <= 1e-12


def test_cone_violation():
    spec = _spec("wave", sv.sine_drift())
    g = spec.grid
    short = np.arange(-3, 4) * g.dx
    eta = Field(g.times, (short,), np.zeros((g.nt + 1, short.size)), 0)
    with pytest.raises(ConeViolation):
        sv.picard_solve(spec, eta)


def test_no_convergence_reported():
    spec = _spec("heat", sv.linear_drift(-1.0), constant_data(1.0))
    with pytest.raises(NoConvergence) as info:
        sv.picard_solve(spec, _eta(spec, 1.0), tol=1e-14, max_iter=3)
    assert info.value.iterations == 3
    assert info.value.residual > 1e-14


def test_operator_lipschitz_stable():
    spec = _spec("heat", sv.sine_drift(0.8), sine_data(1.0), nt=16, dx=0.1)
    g = spec.grid
    base = sv.initial_field(spec)
    rng = np.random.default_rng(42)
    ratios = []
    for _ in range(20):
        e1 = base + rng.normal(size=base.shape)
        e2 = e1 + 0.1 * rng.normal(size=base.shape)
        z1 = sv.picard_solve(spec, _eta(spec, e1)).values
        z2 = sv.picard_solve(spec, _eta(spec, e2)).values
        ratios.append(np.max(np.abs(z1 - z2)) / np.max(np.abs(e1 - e2)))
    ratios = np.array(ratios)
    # Gronwall: |F(e1) - F(e2)| <= exp(C_b kappa T) |e1 - e2|
    C = math.exp(0.8 * 1.0 * g.T)
    assert np.all(ratios <= C * (1 + 1e-9))
    assert ratios.max() / ratios.min() <= C


# --- full solve --------------------------------------------------------------------------

def test_zero_drift_zero_data_is_noise():
    spec = _spec("heat", sv.zero_drift(), constant_data(0.0))
    lat = sv.lattice_for(spec, ms.FractionalLine(0.5), eps=0.05)
    u = sv.solve_spde(spec, lat, 3, n_samples=4, report_only=False)
    v = sv.noise_field(spec, lat, 3, 4)
    assert np.array_equal(u.values, v)


def test_wave_zero_noise_constant_data():
    spec = _spec("wave", sv.zero_drift(), constant_data(1.0))
    lat = sv.lattice_for(spec, ms.FractionalLine(0.5), eps=0.05)
    u = sv.solve_spde(spec, lat, 1, n_samples=2, zero_noise=True)
    assert np.allclose(u.values, 1.0, atol=1e-15)


def test_heat_zero_noise_linear_drift_ode():
    spec = _spec("heat", sv.linear_drift(-1.0), constant_data(1.0), nt=32)
    lat = sv.lattice_for(spec, ms.FractionalLine(0.5), eps=0.05)
    u = sv.solve_spde(spec, lat, 1, zero_noise=True, tol=1e-13)
    t = spec.grid.times[:, None]
    assert np.max(np.abs(u.values[0] - np.exp(-t))) <= 2.5 * (1 / 32) ** 2 / 12


@pytest.mark.parametrize("kind", ["heat", "wave"])
def test_truncation_stabilizes(kind):
    data = sine_data(1.0)
    b = sv.linear_drift(0.7)
    spec = _spec(kind, b, data, nt=16, dx=0.1)
    lat = sv.lattice_for(spec, ms.FractionalLine(0.6), eps=0.05)
    u = sv.solve_spde(spec, lat, 5, n_samples=3)
    m = u.meta["drift_sup"]
    for level in (m, 1.5 * m, 10 * m):
        spec_m = _spec(kind, sv.truncate_drift(b, level), data, nt=16, dx=0.1)
        um = sv.solve_spde(spec_m, lat, 5, n_samples=3)
        assert np.array_equal(um.values, u.values)
    # a clamp below the observed sup changes the solution
    low = _spec(kind, sv.truncate_drift(b, 0.5 * m), data, nt=16, dx=0.1)
    assert not np.array_equal(sv.solve_spde(low, lat, 5, n_samples=3).values, u.values)


def test_solutions_independent_of_batching_and_workers():
    spec = _spec("heat", sv.sine_drift(0.5), sine_data(1.0), nt=8, dx=0.1)
    lat = sv.lattice_for(spec, ms.FractionalLine(0.7), eps=0.05)
    a = sv.solve_spde(spec, lat, 11, n_samples=6, batch=6)
    b = sv.solve_spde(spec, lat, 11, n_samples=6, batch=2, workers=2)
    c = sv.solve_spde(spec, lat, 11, n_samples=2, first_sample=4)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.values[4:], c.values)


def test_report_window_restriction():
    spec = _spec("wave", sv.sine_drift(0.5), sine_data(1.0), nt=8, dx=0.125)
    lat = sv.lattice_for(spec, ms.FractionalLine(0.5), eps=0.05)
    u = sv.solve_spde(spec, lat, 2, n_samples=1)
    assert u.axes[0][0] == pytest.approx(-0.5) and u.axes[0][-1] == pytest.approx(0.5)
    assert u.meta["certificate"]
