import math
import warnings

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from superosc.constraints import ConstraintSet, PhysicalConfig
from superosc.errors import DegenerateEigenvalue, NotPositiveDefinite, PrecisionExhausted
from superosc.solver import (
    GramMatrix,
    assemble_gram,
    construct,
    extreme_coefficients,
    factorize,
    max_digits_from_env,
    norm_squared,
    solve,
    successive_constraint_value,
)

from conftest import random_point_problem


def test_single_point_closed_form(cfg):
    sol = construct(cfg, ConstraintSet.point_amplitude([0.0], [1]))
    with mp.workdps(34):
        assert abs(sol.lambdas[0] - mp.pi) < 1e-32
        assert abs(sol.norm_sq - mp.pi) < 1e-32
    assert sol.precision_digits_used == 34


def test_gram_points_pi_apart(cfg):
    gram = assemble_gram(cfg, ConstraintSet.point_amplitude([0.0, math.pi], [1, 1]))
    t = gram.to_numpy()
    assert np.allclose(t, np.eye(2) / math.pi, atol=1e-16)
    sol = solve(gram, [1, 1])
    assert [complex(v) for v in sol.lambdas] == pytest.approx([math.pi, math.pi], abs=1e-14)
    assert float(sol.norm_sq) == pytest.approx(2 * math.pi, abs=1e-14)


def test_zero_targets_rejected(cfg):
    gram = assemble_gram(cfg, ConstraintSet.point_amplitude([0.0, 1.0], [0, 0]))
    with pytest.raises(ValueError):
        solve(gram)


def test_length_mismatch_and_bad_tol_rejected(cfg):
    gram = assemble_gram(cfg, ConstraintSet.point_amplitude([0.0, 1.0], [1, 1]))
    with pytest.raises(ValueError):
        solve(gram, [1])
    with pytest.raises(ValueError):
        solve(gram, [1, 1], tol=0)


def test_gram_is_hermitian(cfg):
    rng = np.random.default_rng(3)
    nodes, vals = random_point_problem(rng, cfg, 6)
    t = assemble_gram(cfg, ConstraintSet.point_amplitude(nodes, vals)).to_numpy()
    assert np.array_equal(t, t.conj().T)
    assert np.all(np.linalg.eigvalsh(t) > 0)


def test_interval_gram_positive_definite(cfg):
    cs = ConstraintSet.interval_area(np.linspace(-3, 3, 6).tolist(), [1] * 5)
    factor = factorize(assemble_gram(cfg, cs).entries)
    assert all(p > 0 for p in factor.pivots)


def test_factorize_rejects_indefinite():
    with mp.workdps(30):
        m = mp.matrix([[1, 2], [2, 1]])
        with pytest.raises(NotPositiveDefinite) as info:
            factorize(m)
    assert info.value.pivot_index == 1


def test_factor_solves_hermitian_system():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    h = a @ a.conj().T + np.eye(5)
    b = rng.normal(size=5) + 1j * rng.normal(size=5)
    with mp.workdps(30):
        x = factorize(mp.matrix(h.tolist())).solve(b.tolist())
    assert np.allclose(np.array([complex(v) for v in x]), np.linalg.solve(h, b), atol=1e-12)


def test_precision_escalates_for_ill_conditioned_system(cfg):
    nodes = np.linspace(-1.0, 1.0, 12).tolist()
    sol = construct(cfg, ConstraintSet.point_amplitude(nodes, [(-1) ** k for k in range(12)]),
                    tol=1e-25)
    assert sol.precision_digits_used > 34
    assert sol.residual <= 1e-25


def test_precision_exhausted_at_cap(cfg):
    nodes = np.linspace(-1.0, 1.0, 12).tolist()
    cs = ConstraintSet.point_amplitude(nodes, [(-1) ** k for k in range(12)])
    with pytest.raises(PrecisionExhausted) as info:
        construct(cfg, cs, tol=1e-25, max_digits=34)
    assert info.value.digits == 34


def test_env_cap(monkeypatch):
    monkeypatch.setenv("SUPEROSC_MAX_DIGITS", "100")
    assert max_digits_from_env() == 100
    assert max_digits_from_env(64) == 64
    monkeypatch.setenv("SUPEROSC_MAX_DIGITS", "lots")
    with pytest.raises(ValueError):
        max_digits_from_env()


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 7), st.integers(0, 2 ** 32 - 1))
def test_residual_contract_and_norm_identity(n, seed):
    cfg = PhysicalConfig()
    nodes, vals = random_point_problem(np.random.default_rng(seed), cfg, n)
    sol = construct(cfg, ConstraintSet.point_amplitude(nodes, vals))
    assert sol.residual <= 1e-10
    assert sol.norm_sq > 0
    # a^H T^-1 a from an independent dense solve
    t = sol.gram.to_numpy()
    a = np.array(vals)
    want = np.real(a.conj() @ np.linalg.solve(t, a))
    assert float(norm_squared(sol)) == pytest.approx(want, rel=1e-6)


def test_successive_value_reproduces_solution(cfg):
    nodes = [-2.0, -0.5, 1.0]
    cs = ConstraintSet.point_amplitude(nodes, [1, -1j, 0.5])
    sol = construct(cfg, cs)
    ext, idx = cs.extended(0.25, 0)
    gram_ext = assemble_gram(cfg, ext)
    c = successive_constraint_value(gram_ext, sol, idx)
    vals = list(ext.values)
    vals[idx] = c
    ext_sol = solve(gram_ext, vals)
    assert abs(ext_sol.lambdas[idx]) < 1e-20
    assert abs(ext_sol.norm_sq - sol.norm_sq) < 1e-20 * sol.norm_sq


def test_extreme_symmetric_pair_closed_form(cfg):
    d = 0.6
    gram = assemble_gram(cfg, ConstraintSet.point_amplitude([-d, d], [1, 1]))
    pair = extreme_coefficients(gram)
    t11 = 1 / math.pi
    t12 = math.sin(2 * d) / (2 * d) / math.pi
    assert float(pair.eigenvalue) == pytest.approx(t11 - abs(t12), rel=1e-14)
    q = np.array([complex(v) for v in pair.vector])
    assert q[0] == pytest.approx(-q[1], abs=1e-15)
    assert np.linalg.norm(q) == pytest.approx(1.0, abs=1e-15)
    assert not pair.degenerate


def test_extreme_matches_dense_eigensolver(cfg):
    nodes = np.linspace(-2.0, 2.0, 6).tolist()
    gram = assemble_gram(cfg, ConstraintSet.point_amplitude(nodes, [1] * 6))
    pair = extreme_coefficients(gram)
    w, v = np.linalg.eigh(gram.to_numpy())
    assert float(pair.eigenvalue) == pytest.approx(w[0], rel=1e-9)
    assert float(pair.next_eigenvalue) == pytest.approx(w[1], rel=1e-9)
    q = np.array([complex(x) for x in pair.vector])
    assert abs(abs(np.vdot(v[:, 0], q)) - 1) < 1e-10


def test_degenerate_eigenvalue_warns(cfg):
    gram = assemble_gram(cfg, ConstraintSet.point_amplitude([0.0, math.pi], [1, 1]))
    with pytest.warns(DegenerateEigenvalue):
        pair = extreme_coefficients(gram)
    assert pair.degenerate
    # deterministic tie-break: iteration from (1, 0)
    assert [complex(v) for v in pair.vector] == pytest.approx([1, 0], abs=1e-15)


def test_extreme_is_deterministic(cfg):
    gram = assemble_gram(cfg, ConstraintSet.point_amplitude([-1.0, 0.2, 1.5], [1, 1, 1]))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        a = extreme_coefficients(gram)
        b = extreme_coefficients(gram)
    assert a.vector == b.vector and a.eigenvalue == b.eigenvalue


def test_gram_matrix_rebuilds_at_higher_precision(cfg):
    gram = assemble_gram(cfg, ConstraintSet.point_amplitude([0.0, 1.0], [1, 1]), digits=20)
    hi = gram.at_precision(60)
    assert isinstance(hi, GramMatrix) and hi.precision_digits == 60
    with mp.workdps(60):
        assert abs(hi.entries[0, 1] - mp.sin(1) / mp.pi) < mp.mpf(10) ** -55
