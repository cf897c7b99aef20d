"""Dispersion relations, velocities and high-energy time-scale diagnostics.

Momenta are arrays whose last axis has length 2.  Units: hbar = c = 1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ZeroVelocity


@dataclass(frozen=True)
class Dispersion:
    """Kinetic energy law: ``"NR"`` is p^2/2m, ``"Rel"`` is sqrt(p^2 + m^2)."""

    kind: str = "NR"
    mass: float = 1.0

    def __post_init__(self):
        if self.kind not in ("NR", "Rel"):
            raise ValueError(f"dispersion kind must be 'NR' or 'Rel', not {self.kind!r}")
        if not self.mass > 0:
            raise ValueError("mass must be positive")

    def h0(self, p):
        p = np.asarray(p, dtype=float)
        p2 = np.sum(p * p, axis=-1)
        if self.kind == "NR":
            return p2 / (2 * self.mass)
        return np.sqrt(p2 + self.mass**2)

    def velocity(self, p):
        p = np.asarray(p, dtype=float)
        if self.kind == "NR":
            return p / self.mass
        e = np.sqrt(np.sum(p * p, axis=-1) + self.mass**2)
        return p / e[..., None]

    def speed(self, p):
        return np.linalg.norm(self.velocity(p), axis=-1)

    def h2(self, pbar, p):
        """Remainder of the first-order expansion of ``h0`` around ``pbar``."""
        pbar = np.asarray(pbar, dtype=float)
        p = np.asarray(p, dtype=float)
        if self.kind == "NR":
            h = np.sum(p * p, axis=-1) / (2 * self.mass)
            return np.broadcast_to(h, np.broadcast(pbar[..., 0], p[..., 0]).shape).copy()
        a = np.sqrt(np.sum(pbar * pbar, axis=-1) + self.mass**2)
        q = pbar + p
        a2 = np.sqrt(np.sum(q * q, axis=-1) + self.mass**2)
        pp = np.sum(pbar * p, axis=-1)
        # a2 - a without cancellation, then subtract v(pbar).p
        return (2 * pp + np.sum(p * p, axis=-1)) / (a2 + a) - pp / a


def h0_eval(disp: Dispersion, p) -> float:
    return disp.h0(p)


def velocity_eval(disp: Dispersion, p):
    return disp.velocity(p)


def h2_remainder(disp: Dispersion, pbar, p):
    return disp.h2(pbar, p)


@dataclass(frozen=True)
class BoostSpec:
    """Average momentum ``pbar`` with its direction and group speed."""

    pbar: tuple
    omega: tuple
    vbar: float

    @classmethod
    def from_pbar(cls, disp: Dispersion, pbar) -> "BoostSpec":
        pb = np.asarray(pbar, dtype=float)
        norm = float(np.hypot(*pb))
        if norm == 0:
            raise ZeroVelocity("boost momentum is zero")
        v = disp.velocity(pb)
        speed = float(np.hypot(*v))
        omega = v / speed
        return cls((float(pb[0]), float(pb[1])), (float(omega[0]), float(omega[1])), speed)

    @property
    def magnitude(self) -> float:
        return float(np.hypot(*self.pbar))


@dataclass(frozen=True)
class TimescaleReport:
    interaction_time: float
    ratio_bound: float
    R: float


def timescale_ratio(disp: Dispersion, pbar, support_radius: float, R: float,
                    n_angle: int = 512) -> TimescaleReport:
    """Bound ``max |H2(pbar, p)| / v(pbar)`` over the disc ``|p| <= support_radius``.

    The maximum of ``|H2|`` over a disc is attained on its boundary for both
    dispersions (``H2`` is convex in ``p`` and vanishes at 0), so the boundary
    circle is sampled densely and then refined by a bounded scalar search.
    """
    from scipy.optimize import minimize_scalar

    pbar = np.asarray(pbar, dtype=float)
    vbar = float(disp.speed(pbar))
    if vbar == 0:
        raise ZeroVelocity("v(pbar) = 0")
    theta = np.linspace(0, 2 * np.pi, n_angle, endpoint=False)

    def h2_on_circle(th):
        p = support_radius * np.stack([np.cos(th), np.sin(th)], -1)
        return np.abs(disp.h2(pbar, p))

    vals = h2_on_circle(theta)
    k = int(np.argmax(vals))
    step = 2 * np.pi / n_angle
    res = minimize_scalar(lambda th: -h2_on_circle(np.array(th)),
                          bounds=(theta[k] - step, theta[k] + step),
                          method="bounded", options={"xatol": 1e-12})
    best = max(float(vals[k]), float(-res.fun))
    return TimescaleReport(R / vbar, best / vbar, R)
