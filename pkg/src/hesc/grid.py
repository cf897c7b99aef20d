"""Periodic 2D grid, wave packets and elementary observables.

Position samples sit at ``x_j = -L/2 + j*dx`` and momentum samples at the
signed FFT frequencies ``p_k = k*dp`` (standard FFT ordering).  The discrete
Fourier transform is normalised so that it realises

    psi_hat(p) = (2 pi)^(-1) * sum_x exp(-i p.x) psi(x) dx^2

which makes it unitary between the position and momentum Riemann sums.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.fft as sfft

from .errors import GridMismatch, NyquistViolation, ZeroVelocity

#: density threshold (relative to peak) that defines the effective support
SUPPORT_THRESHOLD = 1e-12
#: required ratio between momentum Nyquist and the packet's outermost momentum
NYQUIST_MARGIN = 1.25

_FFT_WORKERS = 1


def set_fft_workers(n: int) -> None:
    """Set the thread count used by every FFT in the package."""
    global _FFT_WORKERS
    _FFT_WORKERS = max(1, int(n))


def fft2(a):
    return sfft.fft2(a, workers=_FFT_WORKERS)


def ifft2(a):
    return sfft.ifft2(a, workers=_FFT_WORKERS)


@dataclass(frozen=True)
class Grid2D:
    """Square periodic grid with ``n`` points per axis over a box of side ``L``."""

    n: int
    L: float

    def __post_init__(self):
        if self.n < 2 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two, got {self.n}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")

    @property
    def dx(self) -> float:
        return self.L / self.n

    @property
    def dp(self) -> float:
        return 2 * np.pi / self.L

    @property
    def p_nyquist(self) -> float:
        return np.pi / self.dx

    @cached_property
    def x(self) -> np.ndarray:
        return -self.L / 2 + self.dx * np.arange(self.n)

    @cached_property
    def p(self) -> np.ndarray:
        return 2 * np.pi * sfft.fftfreq(self.n, d=self.dx)

    @cached_property
    def xx(self):
        X, Y = np.meshgrid(self.x, self.x, indexing="ij")
        X.flags.writeable = False
        Y.flags.writeable = False
        return X, Y

    @cached_property
    def pp(self):
        PX, PY = np.meshgrid(self.p, self.p, indexing="ij")
        PX.flags.writeable = False
        PY.flags.writeable = False
        return PX, PY

    @cached_property
    def _shift_phase(self) -> np.ndarray:
        # exp(-i p.x0) with x0 = (-L/2, -L/2): accounts for the box offset
        PX, PY = self.pp
        ph = np.exp(0.5j * self.L * (PX + PY))
        ph.flags.writeable = False
        return ph


@dataclass(frozen=True)
class PacketSpec:
    """Momentum-space envelope plus position offset and momentum boost.

    ``envelope`` is ``"bump"`` (compact support of radius ``width``) or
    ``"gaussian"``; for the Gaussian ``width`` is the position-space width
    sigma of ``exp(-|x|^2 / (2 sigma^2))``, i.e. momentum width ``1/sigma``.
    """

    envelope: str = "bump"
    width: float = 1.0
    center: tuple = (0.0, 0.0)
    boost: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.envelope not in ("bump", "gaussian"):
            raise ValueError(f"unknown envelope {self.envelope!r}")
        if not self.width > 0:
            raise ValueError("envelope width must be positive")

    @property
    def support_radius(self) -> float:
        """Exact (bump) or effective (gaussian) momentum support radius."""
        if self.envelope == "bump":
            return float(self.width)
        # mass outside radius r of exp(-|p|^2 sigma^2) is exp(-r^2 sigma^2)
        return float(np.sqrt(-np.log(SUPPORT_THRESHOLD)) / self.width)

    def unboosted(self) -> "PacketSpec":
        return PacketSpec(self.envelope, self.width, self.center, (0.0, 0.0))

    def envelope_values(self, px, py):
        """Unnormalised momentum amplitude of the envelope centred at p = 0."""
        k2 = px**2 + py**2
        if self.envelope == "gaussian":
            return np.exp(-0.5 * k2 * self.width**2)
        u = k2 / self.width**2
        out = np.zeros(np.broadcast(px, py).shape)
        inside = u < 1.0
        out[inside] = np.exp(-1.0 / (1.0 - u[inside]))
        return out


@dataclass(frozen=True, eq=False)
class WavePacket:
    """Samples of a state on ``grid``; ``kind`` says which representation."""

    grid: Grid2D
    samples: np.ndarray
    kind: str = "position"
    spec: Optional[PacketSpec] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("position", "momentum"):
            raise ValueError(f"unknown representation {self.kind!r}")
        if self.samples.shape != (self.grid.n, self.grid.n):
            raise ValueError("sample array does not match grid shape")

    @property
    def cell(self) -> float:
        return self.grid.dx**2 if self.kind == "position" else self.grid.dp**2

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.samples) ** 2) * self.cell))

    def position(self) -> np.ndarray:
        if self.kind == "position":
            return self.samples
        return fourier_transform(self, "inverse").samples

    def momentum(self) -> np.ndarray:
        if self.kind == "momentum":
            return self.samples
        return fourier_transform(self, "forward").samples

    def with_samples(self, samples, kind=None) -> "WavePacket":
        return WavePacket(self.grid, samples, kind or self.kind, self.spec)

    def as_position(self) -> "WavePacket":
        return self if self.kind == "position" else fourier_transform(self, "inverse")


def fourier_transform(packet: WavePacket, direction: str = "forward") -> WavePacket:
    """Unitary discrete Fourier transform between the two representations."""
    g = packet.grid
    if direction == "forward":
        if packet.kind != "position":
            raise ValueError("forward transform expects a position-space packet")
        out = fft2(packet.samples) * g._shift_phase * (g.dx**2 / (2 * np.pi))
        return WavePacket(g, out, "momentum", packet.spec)
    if direction == "inverse":
        if packet.kind != "momentum":
            raise ValueError("inverse transform expects a momentum-space packet")
        out = ifft2(packet.samples * np.conj(g._shift_phase)) * (
            2 * np.pi / g.dx**2
        )
        return WavePacket(g, out, "position", packet.spec)
    raise ValueError(f"direction must be 'forward' or 'inverse', not {direction!r}")


def apply_momentum_multiplier(packet: WavePacket, mult) -> WavePacket:
    """Multiply by a function of the momentum operator (``mult`` on the p grid)."""
    if packet.kind == "momentum":
        return packet.with_samples(packet.samples * mult)
    # the box-offset phases cancel for diagonal operators
    return packet.with_samples(ifft2(fft2(packet.samples) * mult))


def make_packet(grid: Grid2D, spec: PacketSpec, check_nyquist: bool = True) -> WavePacket:
    """Normalised packet ``exp(i pbar.x) Phi_0`` with ``Phi_0`` centred at ``spec.center``."""
    pbar = np.asarray(spec.boost, dtype=float)
    reach = spec.support_radius + float(np.hypot(*pbar))
    if check_nyquist and NYQUIST_MARGIN * reach > grid.p_nyquist:
        raise NyquistViolation(
            f"support reach {reach:.4g} times margin {NYQUIST_MARGIN} exceeds "
            f"momentum Nyquist {grid.p_nyquist:.4g}"
        )
    PX, PY = grid.pp
    qx, qy = PX - pbar[0], PY - pbar[1]
    c = np.asarray(spec.center, dtype=float)
    amp = spec.envelope_values(qx, qy) * np.exp(-1j * (qx * c[0] + qy * c[1]))
    mom = WavePacket(grid, amp.astype(complex), "momentum", spec)
    amp = amp / mom.norm
    return fourier_transform(WavePacket(grid, amp, "momentum", spec), "inverse")


# -- regions -----------------------------------------------------------------

_EDGE = 1e-12


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def weight(self, X, Y):
        d = np.hypot(X - self.center[0], Y - self.center[1])
        tol = _EDGE * max(1.0, self.radius)
        w = (d < self.radius - tol).astype(float)
        if self.radius > 0:
            w[np.abs(d - self.radius) <= tol] = 0.5
        return w


@dataclass(frozen=True)
class ComplementBall:
    center: tuple
    radius: float

    def weight(self, X, Y):
        return 1.0 - Ball(self.center, self.radius).weight(X, Y)


@dataclass(frozen=True)
class HalfPlane:
    """Points with ``normal . x >= offset``; boundary samples count one half."""

    normal: tuple
    offset: float = 0.0

    def weight(self, X, Y):
        s = self.normal[0] * X + self.normal[1] * Y - self.offset
        tol = _EDGE * max(1.0, np.max(np.abs(X)))
        w = (s > tol).astype(float)
        w[np.abs(s) <= tol] = 0.5
        return w


def probability_mass(packet: WavePacket, region=None, space: str = "position") -> float:
    """Probability to find the particle in ``region`` (``None`` is the whole plane)."""
    g = packet.grid
    if space == "position":
        dens = np.abs(packet.position()) ** 2 * g.dx**2
        X, Y = g.xx
    elif space == "momentum":
        dens = np.abs(packet.momentum()) ** 2 * g.dp**2
        X, Y = g.pp
    else:
        raise ValueError(f"unknown space {space!r}")
    if region is None:
        return float(dens.sum())
    return float(np.sum(dens * region.weight(X, Y)))


def _support_mask(packet: WavePacket) -> np.ndarray:
    PX, PY = packet.grid.pp
    if packet.spec is not None:
        # relative to the envelope centre, which sits at the spec's boost
        bx, by = packet.spec.boost
        r = packet.spec.support_radius
        return np.hypot(PX - bx, PY - by) <= r * (1 + 1e-12)
    dens = np.abs(packet.momentum()) ** 2
    return dens > SUPPORT_THRESHOLD * dens.max()


def momentum_support_ratio(packet: WavePacket, disp, pbar) -> tuple:
    """Return ``(ratio, passes)`` for the minimal-velocity support condition.

    ``packet`` is the unboosted envelope; its momentum support is translated
    by ``pbar`` before the velocity ratio ``v(p)/v(pbar)`` is minimised.
    """
    pbar = np.asarray(pbar, dtype=float)
    vbar = disp.speed(pbar)
    if vbar == 0:
        raise ZeroVelocity("v(pbar) = 0: the support condition is undefined")
    PX, PY = packet.grid.pp
    mask = _support_mask(packet)
    if packet.spec is not None:
        bx, by = packet.spec.boost
        qx, qy = PX[mask] - bx, PY[mask] - by
    else:
        qx, qy = PX[mask], PY[mask]
    ratio = float(np.min(disp.speed(np.stack([qx + pbar[0], qy + pbar[1]], -1))) / vbar)
    return ratio, ratio >= 2.0 / 3.0


def energy_projection(packet: WavePacket, disp, E: float, boost=(0.0, 0.0)) -> WavePacket:
    """Spectral projection onto kinetic energies ``H0 >= E``.

    With a nonzero ``boost`` the grid momenta are read as offsets from it,
    i.e. the projection acts on the envelope frame ``exp(-i pbar.x) Phi``.
    """
    PX, PY = packet.grid.pp
    h = disp.h0(np.stack([PX + boost[0], PY + boost[1]], -1))
    return apply_momentum_multiplier(packet, (h >= E).astype(float))


def inner_product(a: WavePacket, b: WavePacket) -> complex:
    """Discrete L2 inner product, conjugate-linear in ``a``."""
    if a.grid != b.grid:
        raise GridMismatch(f"grids differ: {a.grid} vs {b.grid}")
    return complex(np.vdot(a.position(), b.position()) * a.grid.dx**2)
