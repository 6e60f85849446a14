"""Minimum-norm band-limited functions under linear plus quadratic constraints.

Besides the linear targets ``a_k`` the wave must reproduce quadratic targets

    b_j = (2 pi hbar)^(-1/2) int |psi(p)|^2 Xi_j(p) dp,

and stationarity of the Lagrangian gives

    psi(p) = (2 pi hbar)^(-1/2) sum_k lambda_k chi_k(p) / D(p),
    D(p) = 1 + (2 pi hbar)^(-1/2) sum_j mu_j Xi_j(p).

For fixed ``mu`` the linear constraints are linear in ``lambda``:
``a = A(mu) lambda`` with ``A_kr = (2 pi hbar)^-1 int chi_k* chi_r / D dp``.
So ``lambda`` is eliminated exactly and damped Newton runs on ``mu`` alone.
The quadratic kernels are restricted to real functions, which keeps ``D``
and the multipliers ``mu`` real.

The inner integrals run in double precision, so this solver is meant for
small, well-conditioned problems.  With no quadratic kernels it hands the
problem to :func:`superosc.solver.solve` unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .constraints import ConstraintSet, Family, PhysicalConfig
from .errors import ConstraintError, DenominatorVanishing, NoConvergence
from .quadrature import QuadratureError, integrate
from .solver import DEFAULT_DIGITS, DEFAULT_MAX_DIGITS, Solution, construct

__all__ = ["QuadraticKernel", "QuadraticProblem", "solve_quadratic", "kernel_matrix"]


@dataclass(frozen=True)
class QuadraticKernel:
    """A real weight Xi(p) on the band."""

    kind: str
    coefficient: float = 1.0
    power: int = 0
    func: Callable[[np.ndarray], np.ndarray] | None = None

    @classmethod
    def constant(cls, value: float = 1.0) -> "QuadraticKernel":
        return cls("constant", float(value))

    @classmethod
    def monomial(cls, power: int, coefficient: float = 1.0) -> "QuadraticKernel":
        """coefficient * p**power."""
        if power < 0:
            raise ConstraintError("monomial power must be non-negative")
        return cls("monomial", float(coefficient), int(power))

    @classmethod
    def custom(cls, func: Callable[[np.ndarray], np.ndarray]) -> "QuadraticKernel":
        return cls("custom", func=func)

    def __call__(self, ps) -> np.ndarray:
        ps = np.asarray(ps, dtype=float)
        if self.kind == "constant":
            return np.full(ps.shape, self.coefficient)
        if self.kind == "monomial":
            return self.coefficient * ps ** self.power
        out = np.asarray(self.func(ps))
        if np.iscomplexobj(out):
            if np.any(out.imag != 0):
                raise ConstraintError("quadratic kernels must be real on the band")
            out = out.real
        return out.astype(float)

    def as_dict(self) -> dict:
        if self.kind == "custom":
            return {"kind": "custom"}
        return {"kind": self.kind, "coefficient": self.coefficient, "power": self.power}


@dataclass(frozen=True)
class QuadraticProblem:
    """Linear constraints, quadratic kernels and targets, plus the solved multipliers."""

    constraints: ConstraintSet
    kernels: tuple = ()
    targets: tuple = ()
    lambdas: tuple | None = None
    mus: tuple | None = None
    norm_sq: float | None = None
    residual: float | None = None
    iterations: int = 0
    linear: Solution | None = None

    def __post_init__(self):
        if len(self.kernels) != len(self.targets):
            raise ConstraintError(
                f"{len(self.kernels)} quadratic kernels but {len(self.targets)} targets")
        for b in self.targets:
            if isinstance(b, complex) and b.imag != 0:
                raise ConstraintError("quadratic targets of real kernels are real")

    @property
    def size(self) -> tuple[int, int]:
        return self.constraints.size, len(self.kernels)

    @property
    def solved(self) -> bool:
        return self.lambdas is not None

    def denominator(self, cfg: PhysicalConfig, ps, mus=None) -> np.ndarray:
        mus = self.mus if mus is None else mus
        ps = np.asarray(ps, dtype=float)
        pref = 1 / math.sqrt(2 * math.pi * cfg.hbar)
        out = np.ones(ps.shape)
        for mu, xi in zip(mus or (), self.kernels):
            out = out + pref * mu * xi(ps)
        return out

    def momentum_values(self, cfg: PhysicalConfig, ps) -> np.ndarray:
        """psi(p) of the solved problem; zero outside the band."""
        if not self.solved:
            raise ValueError("problem has not been solved")
        ps = np.atleast_1d(np.asarray(ps, dtype=float))
        inside = np.abs(ps) <= cfg.p_max
        pref = 1 / math.sqrt(2 * math.pi * cfg.hbar)
        lam = np.array([complex(v) for v in self.lambdas])
        out = np.zeros(ps.shape, dtype=complex)
        chi = kernel_matrix(cfg, self.constraints, ps[inside])
        out[inside] = pref * (chi @ lam) / self.denominator(cfg, ps[inside])
        return out

    def functionals(self, cfg: PhysicalConfig, rtol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
        """Re-evaluate (a, b) from the solved psi by quadrature."""
        pref = 1 / math.sqrt(2 * math.pi * cfg.hbar)
        n = self.constraints.size

        def integrand(ps):
            psi = self.momentum_values(cfg, ps)
            chi = kernel_matrix(cfg, self.constraints, ps)
            dens = np.abs(psi) ** 2
            cols = [psi[:, None] * np.conj(chi)] + [(dens * xi(ps))[:, None] for xi in self.kernels]
            return np.concatenate(cols, axis=1)

        vals = pref * integrate(integrand, -cfg.p_max, cfg.p_max, rtol=rtol)
        return vals[:n], np.real(vals[n:])

    def as_dict(self) -> dict:
        def pair(v):
            v = complex(v)
            return [v.real, v.imag]

        return {
            "constraints": self.constraints.as_dict(),
            "kernels": [k.as_dict() for k in self.kernels],
            "targets": [float(b) for b in self.targets],
            "lambdas": None if self.lambdas is None else [pair(v) for v in self.lambdas],
            "mus": None if self.mus is None else [float(m) for m in self.mus],
            "norm_sq": self.norm_sq,
            "residual": self.residual,
            "iterations": self.iterations,
        }


def kernel_matrix(cfg: PhysicalConfig, cs: ConstraintSet, ps) -> np.ndarray:
    """chi_k(p) in double precision, shape (len(ps), N)."""
    ps = np.asarray(ps, dtype=float)[:, None]
    hbar = cfg.hbar
    nodes = np.array([float(x) for x in cs.nodes])
    if cs.family is Family.POINT_AMPLITUDE:
        return np.exp(-1j * ps * nodes[None, :] / hbar)
    if cs.family is Family.DERIVATIVE_AT_POINT:
        orders = np.arange(cs.size)[None, :]
        return (-1j * ps / hbar) ** orders * np.exp(-1j * ps * nodes[0] / hbar)
    a, b = nodes[:-1][None, :], nodes[1:][None, :]
    # np.sinc(t) = sin(pi t) / (pi t)
    return np.exp(-1j * ps * (a + b) / (2 * hbar)) * (b - a) * np.sinc(ps * (b - a) / (2 * np.pi * hbar))


class _Reduced:
    """Residual map mu -> g(mu) with lambda eliminated."""

    def __init__(self, qp: QuadraticProblem, cfg: PhysicalConfig, rtol: float):
        self.qp, self.cfg, self.rtol = qp, cfg, rtol
        self.a = np.array([complex(v) for v in qp.constraints.values])
        self.b = np.array([float(v) for v in qp.targets])
        self.grid = np.linspace(-cfg.p_max, cfg.p_max, 4097)

    def check_pole(self, mus, floor: float = 1e-6) -> None:
        d = self.qp.denominator(self.cfg, self.grid, mus)
        i = int(np.argmin(d))
        if d[i] <= floor:
            raise DenominatorVanishing(
                f"denominator reaches {d[i]:.3e} at p = {self.grid[i]:.6g}", float(self.grid[i]))

    def lambdas(self, mus) -> np.ndarray:
        cfg, cs = self.cfg, self.qp.constraints
        n = cs.size

        def integrand(ps):
            chi = kernel_matrix(cfg, cs, ps)
            d = self.qp.denominator(cfg, ps, mus)
            outer = np.conj(chi)[:, :, None] * chi[:, None, :] / d[:, None, None]
            return outer.reshape(len(ps), n * n)

        a_mat = integrate(integrand, -cfg.p_max, cfg.p_max, rtol=self.rtol).reshape(n, n)
        a_mat /= 2 * math.pi * cfg.hbar
        return np.linalg.solve(a_mat, self.a)

    def __call__(self, mus) -> tuple[np.ndarray, np.ndarray, float]:
        """(g, lambda, norm_sq) at mu."""
        self.check_pole(mus)
        try:
            return self._evaluate(mus)
        except QuadratureError:
            # a near-pole between grid points defeats the quadrature
            d = self.qp.denominator(self.cfg, self.grid, mus)
            p = float(self.grid[int(np.argmin(d))])
            raise DenominatorVanishing(f"denominator nearly vanishes near p = {p:.6g}", p) from None

    def _evaluate(self, mus):
        lam = self.lambdas(mus)
        cfg, qp = self.cfg, self.qp
        pref = 1 / math.sqrt(2 * math.pi * cfg.hbar)

        def integrand(ps):
            chi = kernel_matrix(cfg, qp.constraints, ps)
            dens = np.abs(pref * (chi @ lam) / qp.denominator(cfg, ps, mus)) ** 2
            return np.stack([dens] + [dens * xi(ps) for xi in qp.kernels], axis=1)

        vals = np.real(integrate(integrand, -cfg.p_max, cfg.p_max, rtol=self.rtol))
        return pref * vals[1:] - self.b, lam, float(vals[0])


def solve_quadratic(
    qp: QuadraticProblem,
    cfg: PhysicalConfig,
    tol: float = 1e-10,
    max_iter: int = 50,
    start_digits: int = DEFAULT_DIGITS,
    max_digits: int = DEFAULT_MAX_DIGITS,
) -> QuadraticProblem:
    """Find lambda and mu so that psi meets both the linear and quadratic targets.

    Newton steps on mu use a central-difference Jacobian and are halved until
    the residual norm decreases (a trial that makes D vanish counts as no
    decrease).  Convergence means max_j |g_j| <= tol * max(1, max_j |b_j|).

    Raises:
        NoConvergence: ``max_iter`` Newton steps without convergence, or no
            decreasing step along the Newton direction.
        DenominatorVanishing: the Newton direction only leads into poles of
            psi inside the band; ``momentum`` names the offending p.
    """
    cs = qp.constraints
    cs.validate(cfg)
    if not qp.kernels:
        sol = construct(cfg, cs, tol, start_digits, max_digits)
        return replace(qp, lambdas=sol.lambdas, mus=(), norm_sq=float(sol.norm_sq),
                       residual=sol.residual, iterations=0, linear=sol)
    if not tol > 0:
        raise ValueError("tol must be positive")
    g_map = _Reduced(qp, cfg, rtol=min(1e-13, tol * 1e-3))
    scale = max(1.0, float(np.max(np.abs(g_map.b))))
    mus = np.zeros(len(qp.kernels))
    g, lam, norm = g_map(mus)
    for it in range(max_iter + 1):
        if np.max(np.abs(g)) <= tol * scale:
            return replace(qp, lambdas=tuple(complex(v) for v in lam),
                           mus=tuple(float(m) for m in mus), norm_sq=norm,
                           residual=float(np.max(np.abs(g)) / scale), iterations=it)
        if it == max_iter:
            break
        step = np.linalg.solve(_jacobian(g_map, mus), -g)
        t, pole = 1.0, None
        for _ in range(40):
            trial = mus + t * step
            try:
                g_new, lam_new, norm_new = g_map(trial)
            except DenominatorVanishing as exc:
                pole = exc
            else:
                if np.linalg.norm(g_new) < np.linalg.norm(g):
                    break
            t /= 2
        else:
            if pole is not None:
                raise pole
            raise NoConvergence(f"no decreasing Newton step at iteration {it}")
        mus, g, lam, norm = trial, g_new, lam_new, norm_new
    raise NoConvergence(f"quadratic constraints unmet after {max_iter} iterations "
                        f"(max residual {np.max(np.abs(g)):.3e})")


def _jacobian(g_map: _Reduced, mus: np.ndarray) -> np.ndarray:
    m = len(mus)
    jac = np.empty((m, m))
    for j in range(m):
        h = 1e-6 * max(1.0, abs(mus[j]))
        up, down = mus.copy(), mus.copy()
        up[j] += h
        down[j] -= h
        jac[:, j] = (g_map(up)[0] - g_map(down)[0]) / (2 * h)
    return jac
