"""Finite-time scattering operators, convergence control and high-energy scans.

All operators act on envelopes ``Phi_0``: ``finite_time_S`` returns
``exp(-i pbar.x) S(t+, t-) exp(i pbar.x) Phi_0``, which is how matrix
elements between boosted packets reduce to the envelope frame.  Windows
are given in separation units ``r = v(pbar) t``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import DegenerateFit, MaskEmpty, NotConverged, NumericPrecondition, PhaseWrapRisk
from .grid import Grid2D, PacketSpec, WavePacket, apply_momentum_multiplier, energy_projection
from .grid import inner_product, make_packet, momentum_support_ratio
from .kinematics import BoostSpec, Dispersion
from .potentials import ScalarPotential, classify_potential, xray_difference_grid
from .propagators import (DR_MAX, LINE_CACHE, check_containment, comoving_evolve, comoving_free,
                          default_dt, dollard_multiplier, fft2, ifft2)


@dataclass(frozen=True)
class ScatteringConfig:
    """Everything needed to evaluate ``S(t+, t-)`` for one boost.

    ``r_init`` is the first symmetric window ``(-r_init, r_init)``; ``None``
    picks ``4 * R99`` of the short-range part.
    """

    disp: Dispersion
    V: ScalarPotential
    boost: BoostSpec
    r_init: Optional[float] = None
    eps: float = 1e-4
    r_max: float = 256.0
    dr_max: float = DR_MAX
    method: str = "comoving"

    @classmethod
    def build(cls, disp, V, pbar, **kw) -> "ScatteringConfig":
        return cls(disp, V, BoostSpec.from_pbar(disp, pbar), **kw)

    def with_pbar(self, pbar) -> "ScatteringConfig":
        return replace(self, boost=BoostSpec.from_pbar(self.disp, pbar))

    def initial_window(self) -> float:
        if self.r_init is not None:
            return float(self.r_init)
        if self.V.short:
            return max(4.0 * classify_potential(self.V.short_part()).R99, 1.0)
        return 8.0


@dataclass
class ScatteringResult:
    element: complex
    out_field: Optional[WavePacket]
    convergence_log: list
    converged: bool
    boost: BoostSpec
    r_final: float = 0.0


def check_boost(phi: WavePacket, cfg: ScatteringConfig) -> float:
    """Support-condition ratio for the envelope; raises if it fails."""
    ratio, ok = momentum_support_ratio(phi, cfg.disp, cfg.boost.pbar)
    if not ok:
        raise NumericPrecondition(
            f"boost {cfg.boost.pbar} fails the minimal-velocity condition (ratio {ratio:.3f} < 2/3)"
        )
    return ratio


def _lab_frame_S(phi: WavePacket, cfg: ScatteringConfig, r_plus, r_minus) -> WavePacket:
    """Same operator with the translation kept in the dynamics (cross-check route)."""
    g = phi.grid
    PX, PY = g.pp
    pb = np.asarray(cfg.boost.pbar)
    K = cfg.disp.h0(np.stack([PX + pb[0], PY + pb[1]], -1)) - cfg.disp.h0(pb)
    vb = cfg.boost.vbar
    t_m, t_p = r_minus / vb, r_plus / vb
    psi = apply_momentum_multiplier(phi, np.exp(-1j * t_m * K))
    shifted = WavePacket(g, psi.position(), "position")
    # kinetic energy of the envelope frame, velocities measured with pbar added
    disp_shift = _ShiftedDispersion(cfg.disp, pb)
    check_containment(shifted, disp_shift, t_p - t_m, margin=0.05)
    kmax = float(np.max(np.abs(K)))
    dt_max = min(default_dt(kmax, cfg.V), cfg.dr_max / vb)
    T = t_p - t_m
    n = max(1, int(math.ceil(T / dt_max)))
    dt = T / n
    half = np.exp(-0.5j * dt * cfg.V(*g.xx))
    full = half * half
    kfac = np.exp(-1j * dt * K)
    a = psi.position() * half
    for k in range(n):
        a = ifft2(fft2(a) * kfac)
        a = a * (full if k < n - 1 else half)
    out = WavePacket(g, a, "position", phi.spec)
    return apply_momentum_multiplier(out, np.exp(1j * t_p * K))


class _ShiftedDispersion:
    def __init__(self, disp, pbar):
        self.disp, self.pbar = disp, pbar

    def velocity(self, p):
        return self.disp.velocity(p + self.pbar)


def finite_time_S(phi: WavePacket, cfg: ScatteringConfig, r_plus: float = None,
                  r_minus: float = None) -> WavePacket:
    """``exp(-i pbar.x) S(r+/v, r-/v) exp(i pbar.x)`` applied to the envelope ``phi``."""
    if r_plus is None:
        r_plus = cfg.initial_window()
    if r_minus is None:
        r_minus = -r_plus
    if r_plus == 0 and r_minus == 0:
        return phi
    if cfg.V.is_zero:
        return phi
    if cfg.method == "lab":
        return _lab_frame_S(phi, cfg, r_plus, r_minus)
    b = cfg.boost
    psi = comoving_free(phi, cfg.disp, b, r_minus / b.vbar)
    psi = comoving_evolve(psi, cfg.disp, cfg.V, b, r_minus, r_plus, cfg.dr_max)
    return comoving_free(psi, cfg.disp, b, -r_plus / b.vbar)


def finite_time_SD(phi: WavePacket, cfg: ScatteringConfig, r_plus: float = None,
                   r_minus: float = None) -> WavePacket:
    """Dollard-modified ``S^D(t+, t-)`` in the envelope frame (nonrelativistic only)."""
    if cfg.disp.kind != "NR":
        raise ValueError("the Dollard modification is defined for NR kinematics only")
    if r_plus is None:
        r_plus = cfg.initial_window()
    if r_minus is None:
        r_minus = -r_plus
    b = cfg.boost
    Vl = cfg.V.long_part()
    if Vl.is_zero:
        return finite_time_S(phi, cfg, r_plus, r_minus)
    g = phi.grid
    t_m, t_p = r_minus / b.vbar, r_plus / b.vbar
    psi = apply_momentum_multiplier(phi, dollard_multiplier(g, cfg.disp, Vl, t_m, b.pbar, True))
    psi = comoving_evolve(psi, cfg.disp, cfg.V, b, r_minus, r_plus, cfg.dr_max)
    return apply_momentum_multiplier(
        psi, np.conj(dollard_multiplier(g, cfg.disp, Vl, t_p, b.pbar, True)))


def converged_S_element(phi_p: WavePacket, phi: WavePacket, cfg: ScatteringConfig,
                        dollard: bool = False, strict: bool = True) -> ScatteringResult:
    """Double the symmetric window until the element moves by less than ``eps / v(pbar)``."""
    op = finite_time_SD if dollard else finite_time_S
    tol = cfg.eps / cfg.boost.vbar
    r = cfg.initial_window()
    log = []
    prev = None
    out = None
    converged = False
    while True:
        out = op(phi, cfg, r, -r)
        el = inner_product(phi_p, out)
        log.append((r, el))
        if prev is not None and abs(el - prev) < tol:
            converged = True
            break
        if 2 * r > cfg.r_max:
            break
        prev = el
        r *= 2
    res = ScatteringResult(log[-1][1], out, log, converged, cfg.boost, r)
    if strict and not converged:
        if len(log) < 2:
            msg = f"r_max={cfg.r_max} leaves no room to double the window r={r}"
        else:
            msg = f"element still moving by {abs(log[-1][1] - log[-2][1]):.3g} > {tol:.3g} at r={r}"
        raise NotConverged(msg, log)
    return res


# -- oracles -------------------------------------------------------------------

def oracle_matrix_element(phi_p: WavePacket, phi: WavePacket, field_values) -> tuple:
    """``sum conj(phi') F phi dx^2`` and a Richardson-style error estimate.

    The estimate compares the full Riemann sum with the sum over the
    sub-lattice of even points (spacing ``2 dx``).
    """
    g = phi.grid
    integrand = np.conj(phi_p.position()) * field_values * phi.position()
    full = complex(integrand.sum() * g.dx**2)
    coarse = complex(integrand[::2, ::2].sum() * (2 * g.dx) ** 2)
    return full, abs(full - coarse)


def short_range_oracle(phi_p, phi, V: ScalarPotential, omega) -> complex:
    """``int dr (Phi'_0, V_s(x + omega r) Phi_0)`` via the X-ray oracle."""
    if not V.short:
        return 0j
    W = LINE_CACHE.get(phi.grid, V.short_part(), tuple(omega), -np.inf, np.inf)
    return oracle_matrix_element(phi_p, phi, W)[0]


def exponential_oracle(phi_p, phi, V: ScalarPotential, omega, vbar: float = 1.0) -> complex:
    """``(Phi'_0, exp(-(i/v) int V_s(x + omega r) dr) Phi_0)``."""
    if not V.short:
        return inner_product(phi_p, phi)
    W = LINE_CACHE.get(phi.grid, V.short_part(), tuple(omega), -np.inf, np.inf)
    return oracle_matrix_element(phi_p, phi, np.exp(-1j * W / vbar))[0]


def long_range_correction(phi_p, phi, Vl: ScalarPotential, omega) -> complex:
    """``int dr (Phi'_0, [V_l(x + omega r) - V_l(omega r)] Phi_0)``."""
    if Vl.is_zero:
        return 0j
    D = xray_difference_grid(Vl, omega, *phi.grid.xx)
    return oracle_matrix_element(phi_p, phi, D)[0]


def energy_filter_defect(phi: WavePacket, disp: Dispersion, boost: BoostSpec) -> float:
    """``|| F(H0 >= H0(pbar)/2) Phi - Phi ||`` for the boosted packet, in the envelope frame."""
    E = float(disp.h0(np.asarray(boost.pbar))) / 2
    P = energy_projection(phi, disp, E, boost.pbar)
    return float(np.sqrt(np.sum(np.abs(P.position() - phi.position()) ** 2)) * phi.grid.dx)


# -- scans ---------------------------------------------------------------------

def _pmap(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _envelopes(grid, phi_p_spec, phi_spec):
    return make_packet(grid, phi_p_spec.unboosted()), make_packet(grid, phi_spec.unboosted())


def _boost_vector(template: ScatteringConfig, magnitude: float):
    ox, oy = template.boost.pbar
    n = math.hypot(ox, oy)
    return (magnitude * ox / n, magnitude * oy / n)


def nr_limit_scan(grid: Grid2D, phi_p_spec: PacketSpec, phi_spec: PacketSpec,
                  template: ScatteringConfig, pbar_list, threads: int = 1,
                  strict: bool = False) -> list:
    """``v(pbar) (Phi'_p, i(S - 1) Phi_p)`` against its short-range line-integral oracle."""
    if template.disp.kind != "NR":
        raise ValueError("nr_limit_scan needs NR kinematics")
    fp, f0 = _envelopes(grid, phi_p_spec, phi_spec)
    overlap = inner_product(fp, f0)
    oracle = short_range_oracle(fp, f0, template.V, template.boost.omega)

    def run(mag):
        cfg = template.with_pbar(_boost_vector(template, mag))
        check_boost(f0, cfg)
        res = converged_S_element(fp, f0, cfg, strict=strict)
        raw = res.element - overlap
        value = 1j * cfg.boost.vbar * raw
        return {"pbar": float(mag), "value": complex(value), "oracle": complex(oracle),
                "delta": abs(value - oracle), "raw": complex(raw), "converged": res.converged,
                "r_final": res.r_final, "element": res.element, "boost": cfg.boost}

    return sorted(_pmap(run, list(pbar_list), threads), key=lambda e: e["pbar"])


def rel_limit_check(grid: Grid2D, phi_p_spec: PacketSpec, phi_spec: PacketSpec,
                    template: ScatteringConfig, pbar_list, threads: int = 1,
                    strict: bool = False) -> list:
    """Relativistic matrix elements against ``(Phi'_0, exp(-i int V) Phi_0)``."""
    if template.disp.kind != "Rel":
        raise ValueError("rel_limit_check needs Rel kinematics")
    fp, f0 = _envelopes(grid, phi_p_spec, phi_spec)
    target = exponential_oracle(fp, f0, template.V, template.boost.omega, 1.0)

    def run(mag):
        cfg = template.with_pbar(_boost_vector(template, mag))
        check_boost(f0, cfg)
        res = converged_S_element(fp, f0, cfg, strict=strict)
        return {"pbar": float(mag), "element": complex(res.element), "target": complex(target),
                "delta": abs(res.element - target), "converged": res.converged,
                "r_final": res.r_final, "boost": cfg.boost}

    return sorted(_pmap(run, list(pbar_list), threads), key=lambda e: e["pbar"])


def long_range_limit_scan(grid: Grid2D, phi_p_spec: PacketSpec, phi_spec: PacketSpec,
                          template: ScatteringConfig, pbar_list, threads: int = 1,
                          strict: bool = False) -> list:
    """Dollard-modified scan with the long-range line correction subtracted."""
    if template.disp.kind != "NR":
        raise ValueError("long_range_limit_scan needs NR kinematics")
    fp, f0 = _envelopes(grid, phi_p_spec, phi_spec)
    overlap = inner_product(fp, f0)
    omega = template.boost.omega
    oracle = short_range_oracle(fp, f0, template.V, omega)
    corr = long_range_correction(fp, f0, template.V.long_part(), omega)

    def run(mag):
        cfg = template.with_pbar(_boost_vector(template, mag))
        check_boost(f0, cfg)
        res = converged_S_element(fp, f0, cfg, dollard=True, strict=strict)
        value = 1j * cfg.boost.vbar * (res.element - overlap)
        corrected = value - corr
        return {"pbar": float(mag), "value": complex(value), "corrected_value": complex(corrected),
                "correction": complex(corr), "oracle_short": complex(oracle),
                "delta": abs(corrected - oracle), "converged": res.converged,
                "r_final": res.r_final, "boost": cfg.boost}

    return sorted(_pmap(run, list(pbar_list), threads), key=lambda e: e["pbar"])


@dataclass
class PhaseProfile:
    W_field: np.ndarray
    mask: np.ndarray
    omega: tuple
    grid: Grid2D
    result: ScatteringResult = field(repr=False, default=None)


def phase_profile_extract(phi_spec: PacketSpec, grid: Grid2D, cfg: ScatteringConfig,
                          mask_threshold: float = 0.05, strict: bool = True) -> PhaseProfile:
    """Recover ``int V_s(x + omega r) dr`` from the phase of the scattered envelope.

    ``W_field = -v(pbar) arg(psi_out / phi_0)`` on the mask where
    ``|phi_0|`` exceeds ``mask_threshold`` of its maximum.
    """
    phi = make_packet(grid, phi_spec.unboosted())
    check_boost(phi, cfg)
    a0 = np.abs(phi.position())
    mask = a0 > mask_threshold * a0.max()
    if not mask.any():
        raise MaskEmpty("no grid point passes the mask threshold")
    omega = cfg.boost.omega
    if cfg.V.short:
        W = LINE_CACHE.get(grid, cfg.V.short_part(), tuple(omega), -np.inf, np.inf)
        wmax = float(np.max(np.abs(W[mask])))
        if wmax / cfg.boost.vbar >= 0.5 * np.pi:
            raise PhaseWrapRisk(
                f"max |W|/v = {wmax / cfg.boost.vbar:.3g} would wrap the principal phase")
    res = converged_S_element(phi, phi, cfg, strict=strict)
    ratio = res.out_field.position() / np.where(mask, phi.position(), 1.0)
    Wf = np.where(mask, -cfg.boost.vbar * np.angle(ratio), 0.0)
    return PhaseProfile(Wf, mask, omega, grid, res)


def error_slope_fit(scan) -> float:
    """Least-squares slope of ``log delta`` against ``log |pbar|``.

    Returns ``-inf`` when some ``delta`` vanishes (exact agreement).
    """
    if len(scan) < 3:
        raise DegenerateFit("need at least three scan entries")
    p = np.array([e["pbar"] for e in scan], dtype=float)
    d = np.array([e["delta"] for e in scan], dtype=float)
    if np.any(d <= 0):
        return float("-inf")
    return float(np.polyfit(np.log(np.abs(p)), np.log(d), 1)[0])
