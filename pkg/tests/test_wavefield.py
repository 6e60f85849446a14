import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from superosc.constraints import ConstraintSet, PhysicalConfig
from superosc.errors import BoundaryJump, ZeroInSlit
from superosc.solver import construct
from superosc.wavefield import (
    ChebFit,
    Normalization,
    WaveField,
    derivative,
    eval_momentum,
    eval_position,
    ideal_template,
    momentum_norm_squared,
    momentum_stats,
    position_norm_squared,
    project_slit,
    zero_crossings,
)

from conftest import functional_error, random_point_problem


@pytest.fixture
def small_wave(cfg):
    cs = ConstraintSet.point_amplitude([-2.0, -0.5, 0.7, 2.4], [1, -1j, 0.5, 0.3 + 0.2j])
    return WaveField.from_solution(construct(cfg, cs))


def test_single_point_wave_is_sinc(cfg):
    w = WaveField.from_solution(construct(cfg, ConstraintSet.point_amplitude([0.0], [1])))
    for x in (0.0, 0.4, 2.0, 7.5):
        want = 1.0 if x == 0 else math.sin(x) / x
        assert complex(eval_position(w, x)) == pytest.approx(want, abs=1e-15)


def test_momentum_function_vanishes_outside_band(small_wave):
    assert eval_momentum(small_wave, 1.0001) == 0
    assert eval_momentum(small_wave, -3.0) == 0
    assert abs(eval_momentum(small_wave, 0.9999)) > 0


def test_constraints_reproduced(small_wave, cfg):
    sol = construct(cfg, small_wave.constraints)
    assert functional_error(sol) < 1e-12


def test_derivative_routes_agree(small_wave):
    for n in (0, 1, 2, 5):
        for x in (-1.3, 0.0, 2.2):
            a = derivative(small_wave, x, n, method="analytic")
            q = derivative(small_wave, x, n, method="quadrature", rtol=1e-12)
            assert abs(a - q) <= 1e-9 * max(1.0, abs(a))


def test_derivative_order_range(small_wave):
    with pytest.raises(ValueError):
        derivative(small_wave, 0.0, 31)
    with pytest.raises(ValueError):
        derivative(small_wave, 0.0, 1, method="finite")


def test_norm_in_both_spaces(small_wave):
    nsq = float(small_wave.norm_sq)
    assert momentum_norm_squared(small_wave) == pytest.approx(nsq, rel=1e-10)
    assert position_norm_squared(small_wave) == pytest.approx(nsq, rel=1e-6)


def test_unit_normalization(small_wave):
    u = small_wave.unit()
    assert u.normalization is Normalization.UNIT_NORM
    assert momentum_norm_squared(u) == pytest.approx(1.0, rel=1e-10)


def test_interval_constraints_reproduced(cfg):
    cs = ConstraintSet.interval_area(np.linspace(-3, 3, 5).tolist(), [0.3, 1.0, -0.5j, 0.2])
    assert functional_error(construct(cfg, cs)) < 1e-10


def test_derivative_constraints_reproduced(cfg):
    cs = ConstraintSet.derivative_at_point(0.5, [1, 0.5j, -2, 0.1, 3])
    assert functional_error(construct(cfg, cs)) < 1e-12


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2 ** 32 - 1))
def test_random_instances_satisfy_constraints(n, seed):
    cfg = PhysicalConfig()
    nodes, vals = random_point_problem(np.random.default_rng(seed), cfg, n)
    assert functional_error(construct(cfg, ConstraintSet.point_amplitude(nodes, vals))) < 1e-8


def test_chebfit_reproduces_smooth_function():
    f = ChebFit(lambda x: np.exp(1j * 3 * x) * np.cos(x), -2.0, 1.0)
    xs = np.linspace(-2, 1, 101)
    assert np.max(np.abs(f(xs) - np.exp(3j * xs) * np.cos(xs))) < 1e-13


# ---------------------------------------------------------------- slit


def test_template_moments_closed_form(cfg):
    tmpl = ideal_template(cfg, 2.0)
    stats = momentum_stats(project_slit(tmpl))
    assert stats.method == "position_derivative"
    assert stats.p_mean == pytest.approx(2.0, abs=1e-10)
    assert stats.p_std == pytest.approx(math.pi / cfg.slit_width, abs=1e-10)
    assert tmpl.momentum_uncertainty == pytest.approx(math.pi / cfg.slit_width)


def test_template_position_uncertainty_by_quadrature(cfg):
    tmpl = ideal_template(cfg, 1.0)
    xs = np.linspace(*cfg.slit, 200001)
    rho = np.abs(tmpl.values(xs)) ** 2
    m1 = np.trapezoid(xs * rho, xs)
    m2 = np.trapezoid(xs ** 2 * rho, xs)
    assert math.sqrt(m2 - m1 ** 2) == pytest.approx(tmpl.position_uncertainty, rel=1e-8)


def test_template_derivatives_against_mp_diff(cfg):
    tmpl = ideal_template(cfg, 2.0)
    with mp.workdps(30):
        for m in range(4):
            got = tmpl.derivative_at(0.4, m)
            want = mp.diff(lambda x: tmpl.derivative_at(x), 0.4, m)
            assert abs(got - want) < 1e-20


def test_template_area(cfg):
    tmpl = ideal_template(cfg, 0.7)
    with mp.workdps(30):
        want = mp.quad(lambda x: tmpl.derivative_at(x), [-1.0, 2.5])
        assert abs(tmpl.area(-1.0, 2.5) - want) < 1e-25


def test_spectral_and_position_stats_agree_for_smooth_edges(cfg):
    e = project_slit(ideal_template(cfg, 1.5))
    a = momentum_stats(e, "position_derivative")
    b = momentum_stats(e, "spectral")
    assert b.p_mean == pytest.approx(a.p_mean, abs=1e-6)
    assert b.p_std == pytest.approx(a.p_std, rel=2e-3)
    assert b.tail_mass < 1e-8


def test_boundary_jump_detected(cfg, small_wave):
    e = project_slit(small_wave)
    with pytest.raises(BoundaryJump):
        momentum_stats(e, "position_derivative")
    assert momentum_stats(e).method == "spectral"


def test_emerging_wave_is_unit_and_zero_outside(small_wave):
    e = project_slit(small_wave)
    assert e.norm_squared() == pytest.approx(1.0, rel=1e-12)
    lo, hi = small_wave.cfg.slit
    assert np.all(e.values([lo - 0.1, hi + 0.1]) == 0)


def test_zero_in_slit(cfg):
    class Flat:
        def __init__(self, cfg):
            self.cfg = cfg

        def values(self, xs, order=0):
            return np.zeros(np.shape(np.atleast_1d(xs)), dtype=complex)

    with pytest.raises(ZeroInSlit):
        project_slit(Flat(cfg))


def test_zero_crossings_of_known_function(cfg):
    class Sine:
        def __init__(self, cfg):
            self.cfg = cfg

        def values(self, xs, order=0):
            xs = np.atleast_1d(xs)
            return np.sin(3 * xs) + 1j * np.cos(2 * xs)

    s = Sine(cfg)
    # sin(3x) on (-pi, pi): zeros at k pi / 3 for k = -2..2
    assert zero_crossings(s, "real", cfg.slit) == 5
    assert zero_crossings(s, "imag", cfg.slit) == 4
    with pytest.raises(ValueError):
        zero_crossings(s, "abs", cfg.slit)
