"""Constraint families, their kernels, and Gram-matrix entries.

A constraint is a linear functional on a band-limited wave function,

    a_k = (2 pi hbar)^(-1/2) * int_{-p_max}^{p_max} conj(chi_k(p)) psi(p) dp,

fixed by its momentum-space kernel ``chi_k``.  Three families are supported:

* point amplitudes ``psi(x_k) = a_k``;
* derivatives ``psi^(k)(x0) = a_k`` of orders ``0..N-1`` at one anchor;
* interval areas ``int_{x_k}^{x_{k+1}} psi(x) dx = a_k`` over a partition.

Indices are zero-based throughout: kernel ``k`` of a derivative set is the
order-``k`` derivative.  Every function here computes at the current mpmath
working precision, so callers choose the digits with ``mp.workdps``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import mpmath as mp

from .errors import ConstraintError
from .quadrature import integrate_mp

__all__ = [
    "Family",
    "PhysicalConfig",
    "ConstraintSet",
    "moment_integrals",
    "kernel_momentum",
    "kernel_position",
    "kernel_row",
    "kernel_sup",
    "gram_entry",
]

# relative slack when checking nodes against the slit edges
_EDGE_SLACK = 1e-12


class Family(str, Enum):
    POINT_AMPLITUDE = "point_amplitude"
    DERIVATIVE_AT_POINT = "derivative_at_point"
    INTERVAL_AREA = "interval_area"


@dataclass(frozen=True)
class PhysicalConfig:
    """Units and slit geometry: hbar, band limit p_max, slit [c - L/2, c + L/2]."""

    hbar: float = 1.0
    p_max: float = 1.0
    slit_half_width: float = math.pi
    slit_center: float = 0.0

    def __post_init__(self):
        for name in ("hbar", "p_max", "slit_half_width"):
            value = getattr(self, name)
            if not (value > 0) or not math.isfinite(float(value)):
                raise ConstraintError(f"{name} must be positive and finite, got {value!r}")
        if not math.isfinite(float(self.slit_center)):
            raise ConstraintError("slit_center must be finite")

    @property
    def slit_width(self) -> float:
        return 2 * self.slit_half_width

    @property
    def slit(self) -> tuple[float, float]:
        return (self.slit_center - self.slit_half_width,
                self.slit_center + self.slit_half_width)

    @property
    def lambda_min(self) -> float:
        """Shortest wavelength inside the band, 2 pi hbar / p_max."""
        return 2 * math.pi * self.hbar / self.p_max

    def contains(self, x, slack: float = _EDGE_SLACK) -> bool:
        tol = slack * max(1.0, abs(self.slit_center) + self.slit_half_width)
        return abs(float(x) - self.slit_center) <= self.slit_half_width + tol

    def as_dict(self) -> dict:
        return {
            "hbar": float(self.hbar),
            "p_max": float(self.p_max),
            "slit_half_width": float(self.slit_half_width),
            "slit_center": float(self.slit_center),
        }


@dataclass(frozen=True)
class ConstraintSet:
    """A family tag, its nodes, and the target values a_k.

    ``nodes`` holds the points x_k for point amplitudes, the single anchor for
    derivatives, and the N+1 partition edges for interval areas.  Values may
    be any complex-convertible numbers (float, complex, mpf, mpc).
    """

    family: Family
    nodes: tuple
    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "values", tuple(self.values))
        n = len(self.values)
        if n < 1:
            raise ConstraintError("a constraint set needs at least one value")
        if self.family is Family.POINT_AMPLITUDE:
            if len(self.nodes) != n:
                raise ConstraintError(
                    f"point amplitudes need one node per value ({len(self.nodes)} != {n})")
            _check_increasing(self.nodes)
        elif self.family is Family.DERIVATIVE_AT_POINT:
            if len(self.nodes) != 1:
                raise ConstraintError("derivative constraints take exactly one anchor node")
        else:
            if len(self.nodes) != n + 1:
                raise ConstraintError(
                    f"interval areas need N+1 edges for N values ({len(self.nodes)} != {n + 1})")
            _check_increasing(self.nodes)
        for v in (*self.nodes, *self.values):
            if not mp.isfinite(v):
                raise ConstraintError(f"non-finite entry {v!r} in constraint set")

    @classmethod
    def point_amplitude(cls, nodes: Sequence, values: Sequence) -> "ConstraintSet":
        return cls(Family.POINT_AMPLITUDE, tuple(nodes), tuple(values))

    @classmethod
    def derivative_at_point(cls, anchor, values: Sequence) -> "ConstraintSet":
        return cls(Family.DERIVATIVE_AT_POINT, (anchor,), tuple(values))

    @classmethod
    def interval_area(cls, edges: Sequence, values: Sequence) -> "ConstraintSet":
        return cls(Family.INTERVAL_AREA, tuple(edges), tuple(values))

    @property
    def size(self) -> int:
        return len(self.values)

    def validate(self, cfg: PhysicalConfig) -> None:
        """Check that every node lies in the slit of ``cfg``."""
        for x in self.nodes:
            if not cfg.contains(x):
                lo, hi = cfg.slit
                raise ConstraintError(f"node {float(x)!r} outside the slit [{lo}, {hi}]")

    def with_values(self, values: Sequence) -> "ConstraintSet":
        return ConstraintSet(self.family, self.nodes, tuple(values))

    def extended(self, node=None, value=0) -> tuple["ConstraintSet", int]:
        """Append one more constraint of the same family.

        For point amplitudes ``node`` is inserted in order; for derivatives the
        next order is appended and ``node`` must be None.  Returns the new set
        and the index of the added constraint.
        """
        if self.family is Family.POINT_AMPLITUDE:
            if node is None:
                raise ConstraintError("a new point amplitude needs a node")
            idx = sum(1 for x in self.nodes if x < node)
            nodes = (*self.nodes[:idx], node, *self.nodes[idx:])
            values = (*self.values[:idx], value, *self.values[idx:])
            return ConstraintSet(self.family, nodes, values), idx
        if self.family is Family.DERIVATIVE_AT_POINT:
            if node is not None:
                raise ConstraintError("derivative sets extend by order, not by node")
            return ConstraintSet(self.family, self.nodes, (*self.values, value)), self.size
        raise ConstraintError("interval partitions cannot be extended without changing "
                              "existing constraints")

    def as_dict(self) -> dict:
        return {
            "family": self.family.value,
            "nodes": [float(x) for x in self.nodes],
            "values": [[float(mp.re(v)), float(mp.im(v))] for v in self.values],
        }


def _check_increasing(nodes: Sequence) -> None:
    for i, (lo, hi) in enumerate(zip(nodes[:-1], nodes[1:])):
        if not hi > lo:
            raise ConstraintError(f"nodes must be strictly increasing (index {i + 1})")


def _index(cs: ConstraintSet, k: int) -> int:
    if not isinstance(k, int) or not 0 <= k < cs.size:
        raise IndexError(f"constraint index {k!r} out of range for N={cs.size}")
    return k


def _sinc(z):
    return mp.mpf(1) if z == 0 else mp.sin(z) / z


def moment_integrals(m_max: int, z) -> list:
    """Return ``[I_0(z), ..., I_m_max(z)]`` with ``I_m(z) = int_{-1}^{1} t^m e^{izt} dt``.

    For ``|z| > m_max`` the upward recurrence
    ``I_m = (e^{iz} - (-1)^m e^{-iz} - m I_{m-1}) / (iz)`` is stable.  Otherwise
    the Taylor series in ``z`` is summed with enough guard digits to absorb the
    cancellation between its terms, which also handles ``z -> 0`` exactly.
    """
    dps = mp.mp.dps
    z = mp.mpf(z)
    az = abs(z)
    if az == 0:
        return [mp.mpf(2) / (m + 1) if m % 2 == 0 else mp.mpf(0) for m in range(m_max + 1)]
    if az > m_max and az > 1:
        with mp.workdps(dps + 10):
            s, c = mp.sin(z), mp.cos(z)
            iz = mp.mpc(0, z)
            out = [2 * s / z]
            for m in range(1, m_max + 1):
                boundary = 2j * s if m % 2 == 0 else 2 * c
                out.append((boundary - m * out[-1]) / iz)
        return [+v for v in out]
    guard = int(az * 0.4343) + 10
    with mp.workdps(dps + guard):
        eps = mp.mpf(10) ** (-(dps + guard))
        out = [mp.mpc(0)] * (m_max + 1)
        term = mp.mpf(1)  # z^j / j!
        phase = (1, 1j, -1, -1j)
        j = 0
        while True:
            pj = phase[j % 4]
            for m in range(j % 2, m_max + 1, 2):
                out[m] += pj * 2 * term / (m + j + 1)
            j += 1
            term = term * az / j
            if j > az and term < eps:
                break
        if z < 0:
            # I_m(-z) = conj(I_m(z))
            out = [mp.conj(v) for v in out]
    return [+v for v in out]


def kernel_momentum(cfg: PhysicalConfig, cs: ConstraintSet, k: int, p):
    """Momentum-space kernel chi_k(p) at working precision."""
    k = _index(cs, k)
    hbar = mp.mpf(cfg.hbar)
    p = mp.mpf(p)
    fam = cs.family
    if fam is Family.POINT_AMPLITUDE:
        return mp.expj(-p * mp.mpf(cs.nodes[k]) / hbar)
    if fam is Family.DERIVATIVE_AT_POINT:
        x0 = mp.mpf(cs.nodes[0])
        return mp.mpc(0, -p / hbar) ** k * mp.expj(-p * x0 / hbar)
    a, b = mp.mpf(cs.nodes[k]), mp.mpf(cs.nodes[k + 1])
    return mp.expj(-p * (a + b) / (2 * hbar)) * (b - a) * _sinc(p * (b - a) / (2 * hbar))


def kernel_sup(cfg: PhysicalConfig, cs: ConstraintSet, k: int):
    """Upper bound of |chi_k(p)| on the band."""
    k = _index(cs, k)
    if cs.family is Family.POINT_AMPLITUDE:
        return mp.mpf(1)
    if cs.family is Family.DERIVATIVE_AT_POINT:
        return (mp.mpf(cfg.p_max) / mp.mpf(cfg.hbar)) ** k
    return mp.mpf(cs.nodes[k + 1]) - mp.mpf(cs.nodes[k])


def _point_kernel(cfg: PhysicalConfig, u, order: int, moments=None):
    """n-th x-derivative of the point kernel centred at 0, evaluated at u.

    Equals (2 pi hbar)^(-1/2) int (ip/hbar)^n e^{ipu/hbar} dp over the band.
    """
    hbar = mp.mpf(cfg.hbar)
    pmax = mp.mpf(cfg.p_max)
    z = pmax * u / hbar
    pref = pmax / mp.sqrt(2 * mp.pi * hbar)
    if order == 0 and moments is None:
        return pref * 2 * _sinc(z)
    if moments is None:
        moments = moment_integrals(order, z)
    return pref * mp.mpc(0, pmax / hbar) ** order * moments[order]


def kernel_position(cfg: PhysicalConfig, cs: ConstraintSet, k: int, x, order: int = 0):
    """Position-space kernel chi_k(x), or its ``order``-th derivative.

    chi_k(x) = (2 pi hbar)^(-1/2) int_{-p_max}^{p_max} chi_k(p) e^{ipx/hbar} dp.
    """
    k = _index(cs, k)
    if order < 0:
        raise ValueError("derivative order must be non-negative")
    x = mp.mpf(x)
    fam = cs.family
    if fam is Family.POINT_AMPLITUDE:
        return _point_kernel(cfg, x - mp.mpf(cs.nodes[k]), order)
    if fam is Family.DERIVATIVE_AT_POINT:
        sign = -1 if k % 2 else 1
        return sign * _point_kernel(cfg, x - mp.mpf(cs.nodes[0]), order + k, moments=None)
    a, b = mp.mpf(cs.nodes[k]), mp.mpf(cs.nodes[k + 1])
    if order == 0:
        hbar = mp.mpf(cfg.hbar)
        pmax = mp.mpf(cfg.p_max)
        scale = 2 * hbar / mp.sqrt(2 * mp.pi * hbar)
        return scale * (mp.si(pmax * (x - a) / hbar) - mp.si(pmax * (x - b) / hbar))
    return _point_kernel(cfg, x - a, order - 1) - _point_kernel(cfg, x - b, order - 1)


def kernel_row(cfg: PhysicalConfig, cs: ConstraintSet, x, order: int = 0) -> list:
    """All position kernels (or their derivatives) at one x.

    Shares the moment-integral sweep across a derivative set, which is the
    expensive part for high orders.
    """
    if cs.family is Family.DERIVATIVE_AT_POINT:
        n = cs.size
        u = mp.mpf(x) - mp.mpf(cs.nodes[0])
        z = mp.mpf(cfg.p_max) * u / mp.mpf(cfg.hbar)
        moments = moment_integrals(n - 1 + order, z)
        return [(-1 if k % 2 else 1) * _point_kernel(cfg, u, order + k, moments)
                for k in range(n)]
    return [kernel_position(cfg, cs, k, x, order) for k in range(cs.size)]


def gram_entry(cfg: PhysicalConfig, cs: ConstraintSet, k: int, r: int):
    """T_kr = (2 pi hbar)^-1 int conj(chi_k(p)) chi_r(p) dp over the band."""
    k = _index(cs, k)
    r = _index(cs, r)
    hbar = mp.mpf(cfg.hbar)
    pmax = mp.mpf(cfg.p_max)
    fam = cs.family
    if fam is Family.POINT_AMPLITUDE:
        d = mp.mpf(cs.nodes[k]) - mp.mpf(cs.nodes[r])
        return mp.mpc(pmax / (mp.pi * hbar) * _sinc(pmax * d / hbar))
    if fam is Family.DERIVATIVE_AT_POINT:
        s = k + r
        if s % 2:
            return mp.mpc(0)
        # i^k (-i)^r = (-1)^r i^(k+r) = (-1)^(r + s/2) for even s
        sign = -1 if (r + s // 2) % 2 else 1
        val = sign * 2 * pmax ** (s + 1) / ((s + 1) * hbar ** s) / (2 * mp.pi * hbar)
        return mp.mpc(val)

    def integrand(p):
        return mp.conj(kernel_momentum(cfg, cs, k, p)) * kernel_momentum(cfg, cs, r, p)

    return integrate_mp(integrand, -pmax, pmax) / (2 * mp.pi * hbar)
