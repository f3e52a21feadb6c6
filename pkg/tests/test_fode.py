import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from subdiff.coefficients import Constant, ExpDecay, PlateauRamp
from subdiff.errors import DomainError
from subdiff.fode import (
    FodeSpec,
    FractionalOrders,
    PicardInfo,
    decay_g,
    gronwall_check,
    memory_kernel_g1,
    solve_const_multiterm,
    step_fode_numeric,
)
from subdiff.frac_calculus import AlgebraicKernel, History, TimeMesh
from subdiff.special_fn import MLParams, calE, ml_classic
from subdiff.suites import log2_slopes, relaxation_gap, two_term_gap


def test_orders_validation():
    with pytest.raises(DomainError):
        FractionalOrders(1.0)
    with pytest.raises(DomainError):
        FractionalOrders(0.5, (0.6,))
    with pytest.raises(DomainError):
        FractionalOrders(0.5, (0.3, 0.2))
    o = FractionalOrders(0.7, (0.2, 0.5))
    assert o.M == 2
    assert o.beta_bar == pytest.approx((0.7, 0.5, 0.2))


def test_spec_validation():
    o = FractionalOrders(0.5, (0.2,))
    with pytest.raises(DomainError):
        FodeSpec(o, 1.0, ())
    with pytest.raises(DomainError):
        FodeSpec(o, 1.0, (1.0,), damping=-1.0)
    with pytest.raises(DomainError):
        FodeSpec(o, 1.0, (1.0,), initial=-1.0)
    with pytest.raises(DomainError):
        FodeSpec(o, 1.0, (1.0,), forcing=-0.1)
    with pytest.raises(DomainError):
        # decreasing in time
        FodeSpec(o, ExpDecay(1.0, 1.0), (1.0,))


def test_relaxation_matches_mittag_leffler():
    nu, lam = 0.4, 1.0
    spec = FodeSpec(FractionalOrders(nu), 1.0, (), damping=lam, initial=2.0)
    mesh = TimeMesh.graded(5.0, 50, 2.0)
    V = solve_const_multiterm(spec, mesh).values
    ref = [2.0 * ml_classic(nu, 1.0, -lam * t**nu) for t in mesh.nodes[1:]]
    np.testing.assert_allclose(V[1:], ref, rtol=1e-11)
    assert relaxation_gap(M=2000) < 1e-4


@pytest.mark.parametrize("solver", [solve_const_multiterm, step_fode_numeric])
def test_zero_solution(solver):
    spec = FodeSpec(FractionalOrders(0.6, (0.3,)), 1.0, (0.5,), damping=1.0)
    V = solver(spec, TimeMesh.uniform(3.0, 60)).values
    assert np.all(V == 0.0)


def test_two_term_agreement():
    assert two_term_gap(M=2000) < 1e-4


def test_two_term_approaches_steady_state():
    spec = FodeSpec(FractionalOrders(0.6, (0.3,)), 1.0, (0.5,), damping=2.0, forcing=1.0, initial=0.0)
    mesh = TimeMesh.graded(1e4, 400, 1.0 / 0.6 * 1.4)
    V = solve_const_multiterm(spec, mesh).values
    # monotone rise toward F/d0 from below
    assert np.all(np.diff(V) >= -1e-12)
    assert V[-1] < 0.5 and V[-1] > 0.48


def test_analytic_time_dependent_forcing():
    nu = 0.5
    spec = FodeSpec(FractionalOrders(nu), 1.0, (), damping=1.0, forcing=lambda t: 1 + np.sin(t), initial=0.5)
    mesh = TimeMesh.uniform(5.0, 1000)
    exact = solve_const_multiterm(spec, mesh).values
    num = step_fode_numeric(spec, mesh).values
    t = mesh.nodes
    assert np.max(np.abs(num - exact)) < 1e-2
    assert np.max(np.abs(num - exact)[t >= 0.5]) < 1e-3


def test_memory_picard():
    nu = 0.6
    kern = AlgebraicKernel(0.1, 0.2)
    spec = FodeSpec(FractionalOrders(nu), 1.0, (), damping=1.0, memory=kern, forcing=0.2, initial=1.0)
    mesh = TimeMesh.uniform(10.0, 1000)
    info = PicardInfo()
    exact = solve_const_multiterm(spec, mesh, info=info).values
    assert 0 < info.iterations < 200 and info.last_change < 1e-10
    num = step_fode_numeric(spec, mesh).values
    assert np.max(np.abs(num - exact)) < 2e-2


def test_memory_requires_uniform_mesh():
    spec = FodeSpec(FractionalOrders(0.6), 1.0, (), damping=1.0, memory=AlgebraicKernel(0.1, 0.2))
    with pytest.raises(DomainError):
        solve_const_multiterm(spec, TimeMesh.graded(1.0, 10, 2.0))


def test_time_varying_requires_numeric_path():
    spec = FodeSpec(FractionalOrders(0.6), PlateauRamp(1.0, 1.0, 1.0), (), damping=1.0)
    with pytest.raises(DomainError):
        solve_const_multiterm(spec, TimeMesh.uniform(1.0, 10))


def test_plateau_coefficient_self_convergence():
    nu = 0.6
    spec = FodeSpec(FractionalOrders(nu), PlateauRamp(1.0, 1.0, 1.0), (), damping=1.0, forcing=1.0, initial=0.0)
    T = 2.0
    vals = []
    for M in (100, 200, 400, 800):
        mesh = TimeMesh.graded(T, M, (2 - nu) / nu)
        V = step_fode_numeric(spec, mesh).values
        assert np.all(V <= 1.0 + 1e-12)
        assert np.all(np.diff(V) >= -1e-12)
        vals.append(V[-1])
    diffs = np.abs(np.diff(vals))
    assert np.min(log2_slopes(diffs)) >= 1.8 - nu - 0.1


@given(st.floats(0.2, 0.9), st.floats(0.0, 3.0), st.floats(0.0, 2.0), st.floats(0.0, 2.0))
@settings(max_examples=25, deadline=None)
def test_positivity(nu, d0, F, V0):
    spec = FodeSpec(FractionalOrders(nu, (nu / 2,)), PlateauRamp(1.0, 0.5, 0.5), (0.3,),
                    damping=d0, forcing=F, initial=V0)
    V = step_fode_numeric(spec, TimeMesh.graded(3.0, 60, 1.5)).values
    assert np.all(V >= -1e-12)


def test_decay_g_small_time_limit():
    o = FractionalOrders(0.5, (0.2,))
    assert decay_g(1e-8, o, 1.0, (0.5,), 1.0) == pytest.approx(2.0, abs=1e-2)
    assert decay_g(1e-12, o, 1.0, (0.5,), 1.0) == pytest.approx(2.0, abs=1e-3)


def test_decay_g_large_time_asymptotics():
    o = FractionalOrders(0.5, (0.2,))
    rho, rho1, c0 = 1.0, 0.5, 1.0
    ts = np.array([1e8, 1e10, 1e12])
    g = decay_g(ts, o, rho, (rho1,), c0)
    display = (rho / c0) * ((rho1 / rho) * ts**-0.2 + ts**-0.5)
    # same order as the displayed sum, dominated by the smallest lower order
    ratio = g / display
    assert np.all((ratio > 0.5) & (ratio < 2.0))
    assert np.log(g[-1] / g[-2]) / np.log(ts[-1] / ts[-2]) == pytest.approx(-0.2, abs=5e-3)
    # both the relaxation defect and the lower-order term contribute (rho1/c0) t^-nu1 / Gamma(1-nu1)
    sharp = 2.0 * (rho1 / c0) * ts[-1] ** -0.2 / math.gamma(0.8)
    assert g[-1] == pytest.approx(sharp, rel=1e-2)


def test_decay_g_single_term_vs_quadrature():
    nu, rho, c0 = 0.6, 1.0, 1.5
    o = FractionalOrders(nu)
    p = MLParams((nu,), nu, (c0 / rho,))
    smooth = lambda s: ml_classic(nu, nu, -(c0 / rho) * s**nu)
    for t in (0.3, 2.0):
        e1, _ = integrate.quad(smooth, 0, t, weight="alg", wvar=(nu - 1, 0), epsrel=1e-11)
        e2, _ = integrate.quad(smooth, 0, t, weight="alg", wvar=(nu - 1, -nu), epsrel=1e-11)
        ref = abs(1 - (c0 / rho) * e1) + e2 / math.gamma(1 - nu)
        assert decay_g(t, o, rho, (), c0) == pytest.approx(ref, rel=1e-8)
    assert calE(1.0, p) > 0


def test_decay_g_rejects_bad_coefficients():
    o = FractionalOrders(0.5, (0.2,))
    with pytest.raises(DomainError):
        decay_g(1.0, o, 1.0, (0.5,), 0.0)
    with pytest.raises(DomainError):
        decay_g(1.0, o, 1.0, (), 1.0)


def test_gronwall_constant():
    mesh = TimeMesh.uniform(2.0, 20)
    v = History.sample(mesh, lambda t: np.full_like(t, 3.0))
    zero = History.sample(mesh, np.zeros_like)
    rep = gronwall_check(v, zero, zero, 0.5, 3.0, 1.0, 1.0)
    assert rep.holds and rep.premise_ok
    assert rep.multiplier == pytest.approx(1.0)
    assert rep.empirical == pytest.approx(1.0)


def test_gronwall_designed_violation():
    mesh = TimeMesh.uniform(1.0, 10)
    v = History.sample(mesh, lambda t: 2.0 * np.exp(t))
    zero = History.sample(mesh, np.zeros_like)
    rep = gronwall_check(v, zero, zero, 0.5, 2.0, 0.0, 0.0)
    assert not rep.holds
    assert rep.first_violation == 1
    assert rep.first_violation_time == pytest.approx(0.1)


def test_gronwall_on_memory_solution():
    nu = 0.6
    kern = AlgebraicKernel(0.2, 0.3)
    C0 = 1.0
    spec = FodeSpec(FractionalOrders(nu), 1.0, (), damping=0.0, memory=kern, forcing=0.0, initial=C0)
    mesh = TimeMesh.uniform(2.0, 400)
    V = step_fode_numeric(spec, mesh)
    k2 = History(mesh, np.r_[0.0, kern.coefficient * math.gamma(1 - kern.exponent)
                             / math.gamma(1 - kern.exponent + nu) * mesh.nodes[1:] ** (nu - kern.exponent)])
    zero = History.sample(mesh, np.zeros_like)
    rep = gronwall_check(V, zero, k2, nu, C0, 0.0, 1.0, rtol=1e-3)
    assert rep.holds
    assert rep.empirical <= rep.multiplier * (1 + 1e-3)


def test_g1_nonnegative_and_integrable():
    nu = 0.6
    kern = AlgebraicKernel(0.1, 0.2)
    spec = FodeSpec(FractionalOrders(nu, (0.3,)), 1.0, (0.5,), damping=1.0, memory=kern)
    t = np.geomspace(1e-4, 1e3, 200)
    G = memory_kernel_g1(spec, t)
    assert np.all(G >= 0)
    l1 = integrate.trapezoid(G, t)
    assert l1 <= kern.l1_norm(1e3)


def test_longtime_limit():
    spec = FodeSpec(FractionalOrders(0.7), 1.0, (), damping=2.0, forcing=1.0, initial=1.0)
    mesh = TimeMesh.graded(2e3, 800, 2.0)
    V = step_fode_numeric(spec, mesh).values
    g = decay_g(mesh.nodes[1:], spec.orders, 1.0, (), 2.0)
    idx = np.nonzero(g < 0.02)[0]
    assert idx.size
    assert np.all(np.abs(V[1:][idx] - 0.5) / 0.5 < 0.02)


def test_constant_coefficient_helper():
    assert Constant(2.0).time_constant
    assert not PlateauRamp(1.0, 1.0, 1.0).time_constant
