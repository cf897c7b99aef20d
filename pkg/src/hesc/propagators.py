"""Time evolution engines.

All propagators are products of exactly unitary factors: multiplications
in momentum space (applied through the FFT) and pure phases in position
space.  Two interacting engines exist:

* :func:`interacting_evolve` runs Strang splitting in the lab frame and
  refuses to run when the packet would reach the periodic box boundary.
* :func:`comoving_evolve` works in the frame of the envelope ``Phi_0`` of a
  boosted packet ``exp(i pbar.x) Phi_0`` and additionally factors out the
  translation ``v(pbar) omega . p``.  The packet then only spreads under
  ``H2(pbar, p)`` while the potential sweeps past as ``V(x + omega r)`` with
  ``r = v(pbar) t``.  Translations cancel exactly inside scattering
  operators, so this frame needs no box large enough for the flight path.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

from .errors import ContainmentViolation, StepTooLarge
from .grid import Ball, WavePacket, apply_momentum_multiplier, fft2, ifft2, probability_mass
from .kinematics import BoostSpec, Dispersion
from .potentials import ScalarPotential, dollard_phase_grid, line_integrals

#: default spatial resolution of the moving potential, in units of r = v t
DR_MAX = 0.05


@dataclass(frozen=True)
class EvolutionConfig:
    """Fixed-step Strang configuration (``margin`` is a fraction of ``L``)."""

    dt: float
    t_total: float
    margin: float = 0.1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    @property
    def n_steps(self) -> int:
        return max(1, int(math.ceil(abs(self.t_total) / self.dt - 1e-9)))


def lab_kinetic(grid, disp: Dispersion) -> np.ndarray:
    PX, PY = grid.pp
    return disp.h0(np.stack([PX, PY], -1))


def comoving_kinetic(grid, disp: Dispersion, pbar) -> np.ndarray:
    PX, PY = grid.pp
    return disp.h2(np.asarray(pbar, float), np.stack([PX, PY], -1))


def default_dt(kinetic_max: float, V: ScalarPotential) -> float:
    """Half the smaller of the potential and kinetic phase limits."""
    vmax = V.sup_bound
    lim = math.pi / kinetic_max if kinetic_max > 0 else math.inf
    if vmax > 0:
        lim = min(lim, 0.5 / vmax)
    return 0.5 * lim


def free_evolve(packet: WavePacket, disp: Dispersion, t: float) -> WavePacket:
    """Exact free evolution ``exp(-i t H0)``."""
    if t == 0:
        return packet
    return apply_momentum_multiplier(packet, np.exp(-1j * t * lab_kinetic(packet.grid, disp)))


def _moments(packet: WavePacket, disp: Dispersion):
    g = packet.grid
    dens = np.abs(packet.position()) ** 2
    dens = dens / dens.sum()
    X, Y = g.xx
    cx, cy = float(np.sum(dens * X)), float(np.sum(dens * Y))
    sx = math.sqrt(max(float(np.sum(dens * (X - cx) ** 2)), float(np.sum(dens * (Y - cy) ** 2))))
    mdens = np.abs(packet.momentum()) ** 2
    mdens = mdens / mdens.sum()
    PX, PY = g.pp
    vel = disp.velocity(np.stack([PX, PY], -1))
    vx, vy = float(np.sum(mdens * vel[..., 0])), float(np.sum(mdens * vel[..., 1]))
    sv = math.sqrt(max(float(np.sum(mdens * (vel[..., 0] - vx) ** 2)),
                       float(np.sum(mdens * (vel[..., 1] - vy) ** 2))))
    return np.array([cx, cy]), np.array([vx, vy]), sx, sv


def check_containment(packet: WavePacket, disp: Dispersion, t_total: float, margin: float = 0.1):
    """Raise :class:`ContainmentViolation` if the classical region leaves the box."""
    L = packet.grid.L
    x0, v, sx, sv = _moments(packet, disp)
    for t in (0.0, t_total):
        centre = np.max(np.abs(x0 + t * v))
        width = math.sqrt(sx**2 + (sv * t) ** 2)
        if centre + 3 * width + margin * L >= L / 2:
            raise ContainmentViolation(
                f"packet reaches the box edge at t={t:.4g}: |x_c|={centre:.3g}, "
                f"3 sigma={3 * width:.3g}, margin={margin * L:.3g}, L/2={L / 2:.3g}"
            )


def interacting_evolve(packet: WavePacket, disp: Dispersion, V: ScalarPotential,
                       cfg: EvolutionConfig, check: bool = True) -> WavePacket:
    """Strang splitting ``e^{-i dt V/2} e^{-i dt H0} e^{-i dt V/2}`` in the lab frame."""
    g = packet.grid
    kin = lab_kinetic(g, disp)
    if cfg.dt * float(np.max(np.abs(kin))) > math.pi:
        raise StepTooLarge(f"dt * max|H0| = {cfg.dt * np.max(np.abs(kin)):.3g} exceeds pi")
    if check:
        check_containment(packet, disp, cfg.t_total, cfg.margin)
    n = cfg.n_steps
    dt = math.copysign(abs(cfg.t_total) / n, cfg.t_total) if cfg.t_total else 0.0
    if dt == 0:
        return packet
    Vg = V(*g.xx)
    half = np.exp(-0.5j * dt * Vg)
    full = half * half
    kfac = np.exp(-1j * dt * kin)
    psi = packet.position() * half
    for k in range(n):
        psi = ifft2(fft2(psi) * kfac)
        psi = psi * (full if k < n - 1 else half)
    return WavePacket(g, psi, "position", packet.spec)


def comoving_step(grid, disp: Dispersion, boost: BoostSpec, V: ScalarPotential,
                  dr_max: float = DR_MAX) -> float:
    """Time step for :func:`comoving_evolve` (phase guards plus potential sweep resolution)."""
    kmax = float(np.max(np.abs(comoving_kinetic(grid, disp, boost.pbar))))
    dt = default_dt(kmax, V)
    return min(dt, dr_max / boost.vbar)


def comoving_evolve(packet: WavePacket, disp: Dispersion, V: ScalarPotential,
                    boost: BoostSpec, r_start: float, r_end: float,
                    dr_max: float = DR_MAX) -> WavePacket:
    """Evolve the envelope from ``t = r_start/v`` to ``t = r_end/v`` in the comoving frame.

    The generator is ``H2(pbar, p) + V(x + omega v t)``.  Each step is the
    symmetric product ``e^{-i dt V(t+dt)/2} e^{-i dt H2} e^{-i dt V(t)/2}``,
    which is second order and exactly time reversible.
    """
    if r_end == r_start or V.is_zero:
        t = (r_end - r_start) / boost.vbar
        return apply_momentum_multiplier(
            packet, np.exp(-1j * t * comoving_kinetic(packet.grid, disp, boost.pbar)))
    g = packet.grid
    vbar = boost.vbar
    ox, oy = boost.omega
    dt_max = comoving_step(g, disp, boost, V, dr_max)
    T = (r_end - r_start) / vbar
    n = max(1, int(math.ceil(abs(T) / dt_max - 1e-9)))
    dt = T / n
    kfac = np.exp(-1j * dt * comoving_kinetic(g, disp, boost.pbar))
    X, Y = g.xx
    t0 = r_start / vbar

    def vphase(k, w):
        r = (t0 + k * dt) * vbar
        return np.exp(-1j * w * dt * V(X + ox * r, Y + oy * r))

    psi = packet.position() * vphase(0, 0.5)
    for k in range(1, n + 1):
        psi = ifft2(fft2(psi) * kfac)
        psi = psi * vphase(k, 0.5 if k == n else 1.0)
    return WavePacket(g, psi, "position", packet.spec)


def comoving_free(packet: WavePacket, disp: Dispersion, boost: BoostSpec, t: float) -> WavePacket:
    """``exp(-i t H2(pbar, p))``: free evolution of the envelope with translation removed."""
    if t == 0:
        return packet
    return apply_momentum_multiplier(
        packet, np.exp(-1j * t * comoving_kinetic(packet.grid, disp, boost.pbar)))


def translation_evolve(packet: WavePacket, omega, r: float) -> WavePacket:
    """Rigid translation by ``r omega`` generated by ``omega . p``."""
    PX, PY = packet.grid.pp
    return apply_momentum_multiplier(packet, np.exp(-1j * r * (omega[0] * PX + omega[1] * PY)))


def generator_evolve(packet: WavePacket, omega, tau: float, V: ScalarPotential, vbar: float,
                     dtau: float, h2=None) -> WavePacket:
    """Strang evolution for "time" ``tau`` under ``omega.p + h2/vbar + V/vbar``.

    ``h2`` is an optional momentum-space array added to the translation
    generator (used to compare against the pure translation generator).
    """
    g = packet.grid
    PX, PY = g.pp
    n = max(1, int(math.ceil(abs(tau) / dtau - 1e-9)))
    d = tau / n
    gen = omega[0] * PX + omega[1] * PY
    if h2 is not None:
        gen = gen + h2 / vbar
    kfac = np.exp(-1j * d * gen)
    if V.is_zero:
        return apply_momentum_multiplier(packet, np.exp(-1j * tau * gen))
    half = np.exp(-0.5j * d * V(*g.xx) / vbar)
    full = half * half
    psi = packet.position() * half
    for k in range(n):
        psi = ifft2(fft2(psi) * kfac)
        psi = psi * (full if k < n - 1 else half)
    return WavePacket(g, psi, "position", packet.spec)


class LineIntegralCache:
    """Read-mostly map from ``(grid, V, omega, window)`` to line-integral fields.

    Inserts are insert-if-absent under a lock, so concurrent callers always
    see the same array for a key.
    """

    def __init__(self):
        self._data = {}
        self._lock = threading.Lock()

    def get(self, grid, V, omega, r_minus, r_plus):
        key = (grid, V, tuple(map(float, omega)), float(r_minus), float(r_plus))
        hit = self._data.get(key)
        if hit is not None:
            return hit
        val = line_integrals(V, omega, *grid.xx, r_minus, r_plus)
        val.flags.writeable = False
        with self._lock:
            return self._data.setdefault(key, val)

    def clear(self):
        with self._lock:
            self._data.clear()


LINE_CACHE = LineIntegralCache()


def line_phase_apply(packet: WavePacket, V: ScalarPotential, omega, vbar: float,
                     r_minus: float, r_plus: float) -> WavePacket:
    """Multiply by ``exp(-(i/vbar) int_{r_-}^{r_+} V(x + omega r) dr)``."""
    if V.is_zero:
        return packet
    W = LINE_CACHE.get(packet.grid, V, omega, r_minus, r_plus)
    return packet.with_samples(packet.position() * np.exp(-1j * W / vbar), "position")


def dollard_multiplier(grid, disp: Dispersion, Vl: ScalarPotential, t: float,
                       pbar=(0.0, 0.0), comoving: bool = False) -> np.ndarray:
    """Momentum-space symbol of ``U^D(t, 0)``.

    ``exp(-i t H0(p) - i int_0^t V_l(s p/m) ds)``; with ``pbar`` the grid
    momenta are offsets from ``pbar`` and, if ``comoving``, the constant and
    translational parts of ``H0(pbar + p)`` are dropped (leaving ``H2``).
    """
    PX, PY = grid.pp
    qx, qy = PX + pbar[0], PY + pbar[1]
    if comoving:
        kin = disp.h2(np.asarray(pbar, float), np.stack([PX, PY], -1))
    else:
        kin = disp.h0(np.stack([qx, qy], -1))
    phase = t * kin
    if not Vl.is_zero and t != 0:
        phase = phase + dollard_phase_grid(Vl, qx, qy, disp.mass, 0.0, t)
    return np.exp(-1j * phase)


def dollard_evolve(packet: WavePacket, disp: Dispersion, Vl: ScalarPotential, t: float) -> WavePacket:
    """Dollard-modified free evolution ``U^D(t, 0)``, diagonal in momentum space."""
    return apply_momentum_multiplier(packet, dollard_multiplier(packet.grid, disp, Vl, t))


def forbidden_region_mass(packet0: WavePacket, disp: Dispersion, pbar, times,
                          edge_band: float = 0.05):
    """Mass of ``exp(-i t H0) exp(i pbar.x) Phi_0`` inside ``|x| < t v(pbar)/2``.

    ``packet0`` is the unboosted envelope centred at the origin.  The moduli
    of the lab-frame and comoving fields agree up to the translation by
    ``t v(pbar) omega``, so the region is evaluated as a ball centred at
    ``-t v(pbar) omega`` in comoving coordinates.  The box only has to hold
    the spreading envelope, not the flight path.
    """
    boost = BoostSpec.from_pbar(disp, pbar)
    g = packet0.grid
    out = []
    X, Y = g.xx
    band = (np.maximum(np.abs(X), np.abs(Y)) > g.L / 2 * (1 - 2 * edge_band))
    for t in times:
        t = float(t)
        if t == 0:
            out.append((0.0, 0.0))
            continue
        psi = comoving_free(packet0, disp, boost, t)
        shift = t * boost.vbar
        centre = (-shift * boost.omega[0], -shift * boost.omega[1])
        mass = probability_mass(psi, Ball(centre, shift / 2))
        edge = float(np.sum(np.abs(psi.position()[band]) ** 2) * g.dx**2)
        if shift / 2 >= g.L / 2 * (1 - 2 * edge_band):
            raise ContainmentViolation(
                f"forbidden region starts at distance {shift / 2:.3g}, outside the resolved box")
        if edge > max(1e-13, 1e-2 * mass):
            raise ContainmentViolation(
                f"edge-band mass {edge:.3g} is not negligible against region mass {mass:.3g}")
        out.append((t, mass))
    return out
