"""Sinograms of the X-ray transform and their inversion by filtered back-projection.

Angle ``theta`` labels the line direction ``omega = (cos theta, sin theta)``;
the offset of a line is ``s = x . omega_perp`` with
``omega_perp = (-sin theta, cos theta)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .errors import InsufficientCoverage, MaskEmpty
from .grid import Grid2D
from .potentials import ScalarPotential, line_integrals

EPS_REG = 1e-3


@dataclass
class Sinogram:
    angles: np.ndarray
    offsets: np.ndarray
    values: np.ndarray
    provenance: str = "oracle"
    flags: np.ndarray = None

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=float)
        self.offsets = np.asarray(self.offsets, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.angles.size, self.offsets.size):
            raise ValueError("sinogram values must be K x J")
        if self.provenance not in ("oracle", "physics"):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.flags is None:
            self.flags = np.zeros(self.values.shape, dtype=int)

    @property
    def ds(self) -> float:
        return float(self.offsets[1] - self.offsets[0])

    @property
    def s_max(self) -> float:
        return float(self.offsets[-1])

    def row_totals(self) -> np.ndarray:
        """``sum_j W(s_j, omega_k) ds`` per angle (equal to the integral of V for every k)."""
        return self.values.sum(axis=1) * self.ds


@dataclass
class ReconField:
    grid: Grid2D
    values: np.ndarray = field(default=None)
    roi_radius: float = None

    def __post_init__(self):
        if self.values is None:
            self.values = np.zeros((self.grid.n, self.grid.n))
        if self.roi_radius is None:
            self.roi_radius = self.grid.L / 2

    def roi_mask(self, radius=None) -> np.ndarray:
        X, Y = self.grid.xx
        return np.hypot(X, Y) <= (self.roi_radius if radius is None else radius)


def uniform_angles(K: int) -> np.ndarray:
    return np.pi * np.arange(K) / K


def uniform_offsets(J: int, s_max: float) -> np.ndarray:
    return np.linspace(-s_max, s_max, J)


def _directions(theta):
    c, s = np.cos(theta), np.sin(theta)
    return (c, s), (-s, c)


def oracle_sinogram(V: ScalarPotential, angles, offsets) -> Sinogram:
    if V.long:
        raise ValueError("the oracle sinogram needs a short-range potential")
    offsets = np.asarray(offsets, dtype=float)
    vals = np.empty((len(angles), offsets.size))
    for k, th in enumerate(angles):
        om, perp = _directions(th)
        vals[k] = line_integrals(V, om, offsets * perp[0], offsets * perp[1])
    return Sinogram(angles, offsets, vals, "oracle")


def _bin_profile(profile, offsets):
    """Average ``W_field`` over thin strips around each line ``x . omega_perp = s_j``."""
    W, mask = profile.W_field, profile.mask
    X, Y = profile.grid.xx
    om = profile.omega
    s = X * -om[1] + Y * om[0]
    ds = offsets[1] - offsets[0]
    idx = np.rint((s - offsets[0]) / ds).astype(int)
    ok = mask & (idx >= 0) & (idx < offsets.size)
    counts = np.bincount(idx[ok], minlength=offsets.size)
    sums = np.bincount(idx[ok], weights=W[ok], minlength=offsets.size)
    row = np.zeros(offsets.size)
    hit = counts > 0
    row[hit] = sums[hit] / counts[hit]
    return row, ~hit


def _inpaint(row, missing, offsets):
    """Linear interpolation along ``s``; the span ends are anchored at zero."""
    if not missing.any():
        return row
    good = ~missing
    xs = offsets[good]
    ys = row[good]
    if missing[0]:
        xs, ys = np.r_[offsets[0], xs], np.r_[0.0, ys]
    if missing[-1]:
        xs, ys = np.r_[xs, offsets[-1]], np.r_[ys, 0.0]
    out = row.copy()
    out[missing] = np.interp(offsets[missing], xs, ys)
    return out


def assemble_sinogram(fields=None, oracle=None, offsets=None) -> Sinogram:
    """Build a sinogram from phase profiles (``fields``) or from ``oracle=(V, angles, offsets)``.

    Each field needs ``omega``, ``W_field``, ``mask`` and ``grid`` attributes;
    rows come out ordered by angle in ``[0, pi)``.  Cells with no masked grid
    point are flagged (1) and inpainted.
    """
    if oracle is not None:
        V, angles, offs = oracle
        return oracle_sinogram(V, angles, offs)
    if not fields:
        raise ValueError("need phase profiles or an oracle specification")
    if offsets is None:
        raise ValueError("physics path needs an offset grid")
    offsets = np.asarray(offsets, dtype=float)
    rows = []
    for f in fields:
        th = float(np.arctan2(f.omega[1], f.omega[0]) % np.pi)
        sign = 1.0
        if not np.isclose(np.cos(th), f.omega[0]) or not np.isclose(np.sin(th), f.omega[1]):
            # reversed direction: same line integral, mirrored offset
            sign = -1.0
        row, miss = _bin_profile(f, offsets)
        if sign < 0:
            row, miss = row[::-1], miss[::-1]
        if miss.all():
            raise MaskEmpty(f"no masked samples for direction {f.omega}")
        rows.append((th, _inpaint(row, miss, offsets), miss.astype(int)))
    rows.sort(key=lambda r: r[0])
    return Sinogram([r[0] for r in rows], offsets, np.array([r[1] for r in rows]),
                    "physics", np.array([r[2] for r in rows]))


def deconvolve_packet(measured, density, eps_reg: float = EPS_REG):
    """Undo convolution of a sinogram row by a (normalised) packet density.

    Both arrays live on the same offset grid; ``density`` is centred at the
    middle sample.
    """
    g = np.asarray(measured, dtype=float)
    rho = np.asarray(density, dtype=float)
    tot = rho.sum()
    if not tot > 0:
        raise ValueError("density must have a positive total")
    rho = np.fft.ifftshift(rho / tot)
    G = np.fft.fft(g)
    R = np.fft.fft(rho)
    reg = eps_reg**2 * np.max(np.abs(R)) ** 2
    return np.real(np.fft.ifft(G * np.conj(R) / (np.abs(R) ** 2 + reg)))


def ramp_filter(row_len: int, ds: float):
    """Frequency response of the Hann-windowed Ram-Lak kernel on a padded length."""
    npad = int(2 ** np.ceil(np.log2(2 * row_len)))
    n = np.arange(npad)
    n = np.where(n > npad // 2, n - npad, n)
    h = np.zeros(npad)
    h[0] = 1.0 / (4 * ds**2)
    odd = n % 2 == 1
    h[odd] = -1.0 / (np.pi * n[odd] * ds) ** 2
    H = np.real(sfft.fft(h)) * ds
    xi = sfft.fftfreq(npad)  # cycles per sample; Nyquist at 1/2
    return H * 0.5 * (1 + np.cos(2 * np.pi * xi)), npad


def fbp_invert(sino: Sinogram, recon: ReconField) -> ReconField:
    """Filtered back-projection onto the raster of ``recon``."""
    K, J = sino.values.shape
    if K < 2:
        raise InsufficientCoverage("need at least two angles")
    if recon.roi_radius > sino.s_max + 1e-12:
        raise InsufficientCoverage(
            f"ROI radius {recon.roi_radius} exceeds offset span {sino.s_max}")
    H, npad = ramp_filter(J, sino.ds)
    q = np.real(sfft.ifft(sfft.fft(sino.values, npad, axis=1) * H, axis=1))[:, :J]
    X, Y = recon.grid.xx
    out = np.zeros_like(X)
    s0, ds = sino.offsets[0], sino.ds
    for k in range(K):  # fixed angle order keeps accumulation deterministic
        _, perp = _directions(sino.angles[k])
        u = (X * perp[0] + Y * perp[1] - s0) / ds
        i0 = np.floor(u).astype(int)
        w = u - i0
        inside = (i0 >= 0) & (i0 < J - 1)
        i0c = np.clip(i0, 0, J - 2)
        vals = (1 - w) * q[k, i0c] + w * q[k, i0c + 1]
        out += np.where(inside, vals, 0.0)
    return ReconField(recon.grid, out * np.pi / K, recon.roi_radius)


def recon_error(estimate: ReconField, truth, roi_radius: float = None) -> dict:
    """Relative RMS and maximum absolute error on the disc of radius ``roi_radius``.

    ``truth`` is a potential (evaluated on the raster) or an array.
    """
    radius = estimate.roi_radius if roi_radius is None else roi_radius
    if radius > estimate.grid.L / 2 + 1e-12:
        raise InsufficientCoverage("ROI larger than the raster")
    X, Y = estimate.grid.xx
    tv = truth(X, Y) if callable(truth) else np.asarray(truth)
    m = estimate.roi_mask(radius)
    diff = estimate.values[m] - tv[m]
    norm = np.linalg.norm(tv[m])
    rms = float(np.linalg.norm(diff) / norm) if norm > 0 else float(np.linalg.norm(diff))
    return {"rms_rel": rms, "max_abs": float(np.max(np.abs(diff))) if diff.size else 0.0}



def physics_sinogram(grid, packet_spec, template, pbar: float, angles, offsets,
                     mask_threshold: float = 0.05, threads: int = 1) -> Sinogram:
    """One phase-profile scattering run per angle at boost magnitude ``pbar``."""
    from .scattering import _pmap, phase_profile_extract

    def run(th):
        cfg = template.with_pbar((pbar * np.cos(th), pbar * np.sin(th)))
        return phase_profile_extract(packet_spec, grid, cfg, mask_threshold)

    return assemble_sinogram(_pmap(run, list(angles), threads), offsets=offsets)
