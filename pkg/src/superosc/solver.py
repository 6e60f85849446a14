"""Gram assembly, the minimum-norm solve, and spectral diagnostics.

The Gram matrix of superoscillatory constraints is Hermitian positive
definite but its condition number grows exponentially with the number of
constraints.  Everything here therefore runs in mpmath at an explicit number
of decimal digits, and :func:`solve` doubles the digits (re-assembling the
matrix) until the relative residual meets the requested tolerance.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import mpmath as mp
import numpy as np

from .constraints import ConstraintSet, PhysicalConfig, gram_entry
from .errors import DegenerateEigenvalue, NoConvergence, NotPositiveDefinite, PrecisionExhausted

__all__ = [
    "DEFAULT_DIGITS",
    "DEFAULT_MAX_DIGITS",
    "DEFAULT_TOL",
    "GramMatrix",
    "HermitianFactor",
    "Solution",
    "EigenPair",
    "assemble_gram",
    "factorize",
    "solve",
    "construct",
    "norm_squared",
    "successive_constraint_value",
    "extreme_coefficients",
    "max_digits_from_env",
]

DEFAULT_DIGITS = 34
DEFAULT_MAX_DIGITS = 4096
DEFAULT_TOL = 1e-10


def max_digits_from_env(default: int = DEFAULT_MAX_DIGITS) -> int:
    """Escalation cap, lowered by ``SUPEROSC_MAX_DIGITS`` when set."""
    raw = os.environ.get("SUPEROSC_MAX_DIGITS")
    if not raw:
        return default
    try:
        cap = int(raw)
    except ValueError:
        raise ValueError(f"SUPEROSC_MAX_DIGITS must be an integer, got {raw!r}") from None
    if cap < 1:
        raise ValueError("SUPEROSC_MAX_DIGITS must be positive")
    return min(default, cap)


@dataclass(frozen=True)
class GramMatrix:
    cfg: PhysicalConfig
    constraints: ConstraintSet
    entries: mp.matrix = field(repr=False)
    precision_digits: int

    @property
    def size(self) -> int:
        return self.entries.rows

    def at_precision(self, digits: int) -> "GramMatrix":
        """Re-assemble from the constraint kernels at ``digits`` digits."""
        return assemble_gram(self.cfg, self.constraints, digits)

    def to_numpy(self) -> np.ndarray:
        n = self.size
        return np.array([[complex(self.entries[i, j]) for j in range(n)] for i in range(n)])

    def matvec(self, v: Sequence) -> list:
        n = self.size
        return [mp.fsum(self.entries[i, j] * v[j] for j in range(n)) for i in range(n)]


def assemble_gram(cfg: PhysicalConfig, cs: ConstraintSet, digits: int = DEFAULT_DIGITS) -> GramMatrix:
    """Build T from the upper triangle and mirror it conjugated."""
    cs.validate(cfg)
    n = cs.size
    with mp.workdps(digits):
        t = mp.matrix(n, n)
        for k in range(n):
            t[k, k] = mp.mpc(mp.re(gram_entry(cfg, cs, k, k)))
            for r in range(k + 1, n):
                v = gram_entry(cfg, cs, k, r)
                t[k, r] = v
                t[r, k] = mp.conj(v)
    return GramMatrix(cfg, cs, t, digits)


@dataclass(frozen=True)
class HermitianFactor:
    """Diagonally pivoted Cholesky factor: T[perm][:, perm] = L L^H."""

    perm: tuple
    lower: mp.matrix = field(repr=False)
    pivots: tuple

    def solve(self, b: Sequence) -> list:
        n = len(self.perm)
        lo = self.lower
        y = [mp.mpc(b[self.perm[i]]) for i in range(n)]
        for i in range(n):
            y[i] = (y[i] - mp.fsum(lo[i, j] * y[j] for j in range(i))) / lo[i, i]
        for i in reversed(range(n)):
            y[i] = (y[i] - mp.fsum(mp.conj(lo[j, i]) * y[j] for j in range(i + 1, n))) / lo[i, i]
        x = [mp.mpc(0)] * n
        for i, p in enumerate(self.perm):
            x[p] = y[i]
        return x

    @property
    def condition_estimate(self) -> float:
        return float(max(self.pivots) / min(self.pivots))


def factorize(entries: mp.matrix) -> HermitianFactor:
    """Pivoted Cholesky of a Hermitian matrix at working precision.

    Raises:
        NotPositiveDefinite: a pivot (Schur-complement diagonal) is not positive.
    """
    n = entries.rows
    s = entries.copy()
    lo = mp.matrix(n, n)
    perm = list(range(n))
    pivots = []
    for j in range(n):
        p = max(range(j, n), key=lambda i: mp.re(s[i, i]))
        if p != j:
            perm[j], perm[p] = perm[p], perm[j]
            for c in range(n):
                s[j, c], s[p, c] = s[p, c], s[j, c]
            for r in range(n):
                s[r, j], s[r, p] = s[r, p], s[r, j]
            for c in range(j):
                lo[j, c], lo[p, c] = lo[p, c], lo[j, c]
        d = mp.re(s[j, j])
        if not d > 0:
            raise NotPositiveDefinite(f"pivot {j} is {mp.nstr(d, 5)}", j, d)
        pivots.append(d)
        root = mp.sqrt(d)
        lo[j, j] = root
        for i in range(j + 1, n):
            lo[i, j] = s[i, j] / root
        for i in range(j + 1, n):
            lij = lo[i, j]
            for c in range(j + 1, i + 1):
                s[i, c] -= lij * mp.conj(lo[c, j])
                if c != i:
                    s[c, i] = mp.conj(s[i, c])
    return HermitianFactor(tuple(perm), lo, tuple(pivots))


@dataclass(frozen=True)
class Solution:
    """Lagrange multipliers of the minimum-norm problem plus diagnostics."""

    gram: GramMatrix
    lambdas: tuple
    targets: tuple
    norm_sq: mp.mpf
    residual: float
    condition_estimate: float
    precision_digits_used: int

    @property
    def cfg(self) -> PhysicalConfig:
        return self.gram.cfg

    @property
    def constraints(self) -> ConstraintSet:
        return self.gram.constraints

    def summary(self) -> dict:
        return {
            "lambdas": [[float(mp.re(v)), float(mp.im(v))] for v in self.lambdas],
            "norm_sq": float(self.norm_sq),
            "residual": self.residual,
            "condition_estimate": self.condition_estimate,
            "precision_digits_used": self.precision_digits_used,
        }


def _vec_norm(v) -> mp.mpf:
    return mp.sqrt(mp.fsum(abs(x) ** 2 for x in v))


def solve(
    gram: GramMatrix,
    a: Sequence | None = None,
    tol: float = DEFAULT_TOL,
    max_digits: int = DEFAULT_MAX_DIGITS,
) -> Solution:
    """Solve T lambda = a, escalating precision until the residual meets ``tol``.

    ``a`` defaults to the values carried by the Gram matrix's constraint set.
    The residual is ||T lambda - a|| / ||a|| evaluated at the working precision.
    A non-positive pivot is treated like an unmet residual (the matrix may be
    numerically singular at the current digits) and only raised once the
    digit budget is spent.

    Raises:
        ValueError: ``a`` is zero or has the wrong length, or ``tol <= 0``.
        PrecisionExhausted: residual above ``tol`` at ``max_digits``.
        NotPositiveDefinite: factorization failed even at ``max_digits``.
    """
    if a is None:
        a = gram.constraints.values
    if len(a) != gram.size:
        raise ValueError(f"target vector has length {len(a)}, Gram matrix is {gram.size}x{gram.size}")
    if not tol > 0:
        raise ValueError("tol must be positive")
    digits = gram.precision_digits
    while True:
        with mp.workdps(digits):
            av = [mp.mpc(v) for v in a]
            anorm = _vec_norm(av)
            if anorm == 0:
                raise ValueError("target vector is zero; the minimum-norm solution is trivial")
            failure = None
            try:
                factor = factorize(gram.entries)
            except NotPositiveDefinite as exc:
                failure = exc
                residual = math.inf
            else:
                lam = factor.solve(av)
                r = gram.matvec(lam)
                residual = float(_vec_norm([ri - ai for ri, ai in zip(r, av)]) / anorm)
            if residual <= tol:
                quad = mp.fsum(mp.conj(ai) * li for ai, li in zip(av, lam))
                norm_sq = mp.re(quad)
                if abs(mp.im(quad)) > tol * max(abs(norm_sq), mp.mpf(1)):
                    raise PrecisionExhausted(
                        f"a^H lambda has imaginary part {mp.nstr(mp.im(quad), 5)}", residual, digits)
                return Solution(gram, tuple(lam), tuple(av), norm_sq, residual,
                                factor.condition_estimate, digits)
        if digits >= max_digits:
            if failure is not None:
                raise failure
            raise PrecisionExhausted(
                f"residual {residual:.3e} > tol {tol:.1e} at {digits} digits", residual, digits)
        digits = min(2 * digits, max_digits)
        gram = gram.at_precision(digits)


def construct(
    cfg: PhysicalConfig,
    cs: ConstraintSet,
    tol: float = DEFAULT_TOL,
    start_digits: int = DEFAULT_DIGITS,
    max_digits: int = DEFAULT_MAX_DIGITS,
) -> Solution:
    """Assemble and solve the minimum-norm problem for ``cs`` in one call."""
    return solve(assemble_gram(cfg, cs, start_digits), cs.values, tol, max_digits)


def norm_squared(solution: Solution, a: Sequence | None = None, tol: float | None = None) -> mp.mpf:
    """Squared norm a^H lambda = a^H T^-1 a of the minimum-norm function."""
    if a is None:
        a = solution.targets
    if len(a) != len(solution.lambdas):
        raise ValueError("target vector and multipliers differ in length")
    tol = solution.residual * 10 + 1e-30 if tol is None else tol
    with mp.workdps(solution.precision_digits_used):
        quad = mp.fsum(mp.conj(mp.mpc(ai)) * li for ai, li in zip(a, solution.lambdas))
        if abs(mp.im(quad)) > max(tol, 1e-12) * abs(quad):
            raise ValueError(f"a^H lambda is not real: {mp.nstr(quad, 8)}")
        return mp.re(quad)


def successive_constraint_value(gram_ext: GramMatrix, solution: Solution, new_index: int):
    """Value c that an added constraint already takes on the current solution.

    ``gram_ext`` is the Gram matrix of the extended constraint set; row
    ``new_index`` belongs to the added kernel and the remaining rows, in
    order, to the constraints that ``solution`` solved.  Choosing the new
    target equal to c leaves the minimum-norm solution unchanged.
    """
    n = gram_ext.size
    if len(solution.lambdas) != n - 1:
        raise ValueError("extended Gram matrix must have exactly one more row than the solution")
    if not 0 <= new_index < n:
        raise IndexError(f"new_index {new_index} out of range")
    digits = max(gram_ext.precision_digits, solution.precision_digits_used)
    if gram_ext.precision_digits < digits:
        gram_ext = gram_ext.at_precision(digits)
    others = [r for r in range(n) if r != new_index]
    with mp.workdps(digits):
        return mp.fsum(gram_ext.entries[new_index, r] * lam
                       for r, lam in zip(others, solution.lambdas))


@dataclass(frozen=True)
class EigenPair:
    eigenvalue: mp.mpf
    vector: tuple
    residual: float
    iterations: int
    degenerate: bool = False
    next_eigenvalue: mp.mpf | None = None


def _normalize(v):
    nrm = _vec_norm(v)
    return [x / nrm for x in v]


def _inverse_iteration(gram, factor, seed, deflate, rel_tol, max_iter):
    t_norm = mp.sqrt(mp.fsum(abs(gram.entries[i, j]) ** 2
                             for i in range(gram.size) for j in range(gram.size)))
    step_tol = mp.mpf(10) ** (-(mp.mp.dps // 2))

    def project(v):
        for u in deflate:
            c = mp.fsum(mp.conj(ui) * vi for ui, vi in zip(u, v))
            v = [vi - c * ui for vi, ui in zip(v, u)]
        return v

    q = _normalize(project(seed))
    nu_old = None
    for it in range(1, max_iter + 1):
        nxt = _normalize(project(factor.solve(q)))
        # fix the global phase on the largest component for a stable comparison
        big = max(range(len(nxt)), key=lambda i: abs(nxt[i]))
        phase = abs(nxt[big]) / nxt[big]
        nxt = [x * phase for x in nxt]
        tq = gram.matvec(nxt)
        nu = mp.re(mp.fsum(mp.conj(x) * y for x, y in zip(nxt, tq)))
        res = _vec_norm([y - nu * x for x, y in zip(nxt, tq)])
        change = _vec_norm([x - y for x, y in zip(nxt, q)])
        q = nxt
        # a near-degenerate pair never settles the vector; the Rayleigh
        # quotient does, and then the residual cannot improve further
        stalled = nu_old is not None and abs(nu - nu_old) <= step_tol ** 2 * 1e4 * abs(nu)
        nu_old = nu
        if res <= rel_tol * t_norm and (change <= step_tol or stalled):
            return nu, q, float(res), it
    raise NoConvergence(f"inverse iteration did not converge in {max_iter} steps "
                        f"(residual {mp.nstr(res, 3)})")


def extreme_coefficients(gram: GramMatrix, rel_tol: float = 1e-12, max_iter: int = 500) -> EigenPair:
    """Smallest eigenvalue of T and its unit eigenvector by inverse iteration.

    Iteration starts from (1, 0, ..., 0) and reuses one pivoted Cholesky
    factor.  A second, deflated run estimates the next eigenvalue; if the two
    agree to 1e-12 relative the pair is flagged degenerate and a
    :class:`DegenerateEigenvalue` warning is issued.
    """
    n = gram.size
    with mp.workdps(gram.precision_digits):
        factor = factorize(gram.entries)
        seed = [mp.mpc(1)] + [mp.mpc(0)] * (n - 1)
        nu, q, res, its = _inverse_iteration(gram, factor, seed, [], rel_tol, max_iter)
        nxt = None
        degenerate = False
        if n > 1:
            seed2 = [mp.mpc(0)] * (n - 1) + [mp.mpc(1)]
            if abs(q[-1]) > 0.999:
                seed2 = seed
            nxt, _, _, _ = _inverse_iteration(gram, factor, seed2, [q], rel_tol, max_iter)
            degenerate = abs(nxt - nu) <= mp.mpf("1e-12") * abs(nxt)
    if degenerate:
        warnings.warn(DegenerateEigenvalue(
            f"two smallest eigenvalues coincide: {mp.nstr(nu, 8)} vs {mp.nstr(nxt, 8)}"),
            stacklevel=2)
    return EigenPair(nu, tuple(q), res, its, degenerate, nxt)
