"""Analytic potentials, range classification and line-integral oracles.

Every term is radial about its own centre ``c`` with a profile ``f(rho)``,
``rho = |x - c|``.  Line integrals are computed by adaptive quadrature
(``scipy.integrate.quad`` for single points, ``quad_vec`` for whole grids);
they serve as independent oracles for the propagator stack, so they never
use the closed forms that the tests check them against.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .errors import DivergentLineIntegral

QUAD_TOL = 1e-9
_TAIL_TOL = 1e-13


@dataclass(frozen=True)
class Gaussian:
    """``A exp(-|x - c|^2 / (2 sigma^2))``."""

    A: float = 1.0
    sigma: float = 1.0
    center: tuple = (0.0, 0.0)
    short_range = True

    def profile(self, rho):
        return self.A * np.exp(-0.5 * (rho / self.sigma) ** 2)

    def d1(self, rho):
        return -rho / self.sigma**2 * self.profile(rho)

    def d1_over_rho(self, rho):
        return -self.profile(rho) / self.sigma**2

    def d2(self, rho):
        return (rho**2 / self.sigma**4 - 1 / self.sigma**2) * self.profile(rho)

    @property
    def peak(self):
        return abs(self.A)

    def truncation(self, tol=_TAIL_TOL):
        """Half-length beyond which the line tail is below ``tol``."""
        if self.A == 0:
            return 0.0
        # tail of A exp(-u^2/2s^2) beyond T <= A s sqrt(pi/2) erfc(T/(s sqrt2))
        ratio = max(abs(self.A) * self.sigma * 2.0 / tol, 2.0)
        return self.sigma * math.sqrt(2 * math.log(ratio)) + self.sigma


@dataclass(frozen=True)
class Yukawa:
    """``q exp(-mu |x - c|) / sqrt(|x - c|^2 + b^2)``."""

    q: float = 1.0
    mu: float = 1.0
    b: float = 0.1
    center: tuple = (0.0, 0.0)
    short_range = True

    def __post_init__(self):
        if not (self.b > 0 and self.mu > 0):
            raise ValueError("yukawa term needs mu > 0 and core b > 0")

    def _g(self, rho):
        return 1.0 / np.sqrt(rho**2 + self.b**2)

    def profile(self, rho):
        return self.q * np.exp(-self.mu * rho) * self._g(rho)

    def d1(self, rho):
        g = self._g(rho)
        return self.q * np.exp(-self.mu * rho) * (-self.mu * g - rho * g**3)

    def d1_over_rho(self, rho):
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.d1(rho) / rho

    def d2(self, rho):
        g = self._g(rho)
        gp = -rho * g**3
        gpp = -(g**3) + 3 * rho**2 * g**5
        return self.q * np.exp(-self.mu * rho) * (self.mu**2 * g - 2 * self.mu * gp + gpp)

    @property
    def peak(self):
        return abs(self.q) / self.b

    def truncation(self, tol=_TAIL_TOL):
        if self.q == 0:
            return 0.0
        # tail beyond T <= |q| exp(-mu T) / (mu T); solve with a few fixed-point steps
        T = 1.0
        for _ in range(50):
            T = max(1.0, math.log(abs(self.q) / (self.mu * T * tol)) / self.mu)
        return T + 1.0


@dataclass(frozen=True)
class CoulombLike:
    """``q / sqrt(|x - c|^2 + b^2)``; long range."""

    q: float = 1.0
    b: float = 1.0
    center: tuple = (0.0, 0.0)
    short_range = False

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError("coulomb-like term needs core b > 0")

    def profile(self, rho):
        return self.q / np.sqrt(rho**2 + self.b**2)

    def d1(self, rho):
        return -self.q * rho * (rho**2 + self.b**2) ** -1.5

    def d1_over_rho(self, rho):
        return -self.q * (rho**2 + self.b**2) ** -1.5

    def d2(self, rho):
        s = rho**2 + self.b**2
        return -self.q * s**-1.5 + 3 * self.q * rho**2 * s**-2.5

    @property
    def peak(self):
        return abs(self.q) / self.b


TERM_TYPES = {"gaussian": Gaussian, "yukawa": Yukawa, "coulomb": CoulombLike}


def _rho(term, X, Y):
    return np.hypot(X - term.center[0], Y - term.center[1])


@dataclass(frozen=True)
class ScalarPotential:
    """Sum of analytic terms with a declared short/long-range split."""

    short: tuple = ()
    long: tuple = ()

    @property
    def terms(self):
        return tuple(self.short) + tuple(self.long)

    def __call__(self, X, Y):
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        out = np.zeros(np.broadcast(X, Y).shape)
        for t in self.terms:
            out = out + t.profile(_rho(t, X, Y))
        return out

    def gradient(self, X, Y):
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        gx = np.zeros(np.broadcast(X, Y).shape)
        gy = np.zeros_like(gx)
        for t in self.terms:
            rho = _rho(t, X, Y)
            with np.errstate(invalid="ignore"):
                k = t.d1_over_rho(rho)
            # radial terms have no preferred direction at their centre
            k = np.where(rho > 0, k, 0.0)
            gx = gx + k * (X - t.center[0])
            gy = gy + k * (Y - t.center[1])
        return gx, gy

    def laplacian(self, X, Y):
        out = 0.0
        for t in self.terms:
            rho = _rho(t, np.asarray(X, float), np.asarray(Y, float))
            out = out + t.d2(rho) + t.d1_over_rho(rho)
        return out

    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def sup_bound(self) -> float:
        return float(sum(t.peak for t in self.terms))

    def short_part(self) -> "ScalarPotential":
        return ScalarPotential(tuple(self.short), ())

    def long_part(self) -> "ScalarPotential":
        return ScalarPotential((), tuple(self.long))

    def scaled(self, a: float) -> "ScalarPotential":
        def sc(t):
            if isinstance(t, Gaussian):
                return Gaussian(a * t.A, t.sigma, t.center)
            if isinstance(t, Yukawa):
                return Yukawa(a * t.q, t.mu, t.b, t.center)
            return CoulombLike(a * t.q, t.b, t.center)

        return ScalarPotential(tuple(map(sc, self.short)), tuple(map(sc, self.long)))

    def __add__(self, other: "ScalarPotential") -> "ScalarPotential":
        return ScalarPotential(self.short + other.short, self.long + other.long)


def eval_potential(V: ScalarPotential, x) -> float:
    x = np.asarray(x, dtype=float)
    return V(x[..., 0], x[..., 1])


# -- classification ----------------------------------------------------------

@dataclass(frozen=True)
class ClassifyReport:
    short_range_integral: float
    is_short: bool
    long_ok: bool
    R99: float
    tail_exponent: float
    details: dict = field(default_factory=dict, compare=False)


def _shell_sup(fn, V, radii, n_angle=256):
    theta = np.linspace(0, 2 * np.pi, n_angle, endpoint=False)
    extra = [math.atan2(t.center[1], t.center[0]) for t in V.terms]
    theta = np.concatenate([theta, extra, np.array(extra) + np.pi])
    X = radii[:, None] * np.cos(theta)[None, :]
    Y = radii[:, None] * np.sin(theta)[None, :]
    return np.max(np.abs(fn(X, Y)), axis=1)


def _decay_exponent(radii, values, lo, hi):
    sel = (radii >= lo) & (radii <= hi)
    v = values[sel]
    if np.all(v == 0):
        return -np.inf
    if np.any(v == 0):
        # underflow inside the decade: faster than any power
        return -np.inf
    return float(np.polyfit(np.log(radii[sel]), np.log(v), 1)[0])


def shell_integral(V: ScalarPotential, R_max: float, n_radii: int = 600):
    """Riemann estimate of the short-range integral truncated at ``R_max``.

    Returns ``(radii, cumulative)`` with ``sup_{|x|>=R} |V|`` integrated from 0.
    """
    radii = np.concatenate([[0.0], np.geomspace(1e-3, R_max, n_radii)])
    shell = _shell_sup(V, V, radii)
    sup_out = np.maximum.accumulate(shell[::-1])[::-1]
    cum = np.concatenate([[0.0], integrate.cumulative_trapezoid(sup_out, radii)])
    return radii, cum


def classify_potential(V: ScalarPotential, R_max: float = 1e4) -> ClassifyReport:
    """Numeric probe of the short-range integral and the long-range derivative bounds.

    The truncated integral is extended by a power-law tail fitted over the
    last decade; the potential counts as short range only when the fitted
    exponent is below -1.01 (a pure 1/R tail fits at -1 to within 1e-6).
    """
    radii, cum = shell_integral(V, R_max)
    shell = _shell_sup(V, V, radii)
    sup_out = np.maximum.accumulate(shell[::-1])[::-1]
    alpha = _decay_exponent(radii, sup_out, R_max / 10, R_max)
    if alpha == -np.inf:
        tail, is_short = 0.0, True
    elif alpha < -1.01:
        C = sup_out[-1] / R_max**alpha
        tail, is_short = C * R_max ** (alpha + 1) / (-alpha - 1), True
    else:
        tail, is_short = np.inf, False
    total = float(cum[-1] + tail)
    target = 0.99 * (total if is_short else cum[-1])
    R99 = float(np.interp(target, cum, radii)) if cum[-1] > 0 else 0.0

    grad_sup = _shell_sup(lambda X, Y: np.hypot(*V.gradient(X, Y)), V, radii)
    lap_sup = _shell_sup(V.laplacian, V, radii)
    a_grad = _decay_exponent(radii, grad_sup, R_max / 10, R_max)
    a_lap = _decay_exponent(radii, lap_sup, R_max / 10, R_max)
    # V -> 0 at infinity plus the two derivative decay rates
    long_ok = bool(alpha < 0 and a_grad < -1.5 and a_lap < -2.0)
    return ClassifyReport(total, is_short, long_ok, R99, alpha,
                          {"grad_exponent": a_grad, "laplacian_exponent": a_lap})


def check_split(V: ScalarPotential) -> tuple:
    """Return ``(short_ok, long_ok)`` for the declared split of ``V``."""
    s = classify_potential(V.short_part()).is_short if V.short else True
    l_ = classify_potential(V.long_part()).long_ok if V.long else True
    return s, l_


# -- line integrals ------------------------------------------------------------

def _require_short(V: ScalarPotential):
    for t in V.terms:
        if not t.short_range:
            raise DivergentLineIntegral(
                f"{type(t).__name__} term is long range; its line integral diverges"
            )


def _line_geometry(term, omega, X, Y):
    """Distance ``d`` from the term centre and parameter of closest approach."""
    ox, oy = omega
    rx, ry = X - term.center[0], Y - term.center[1]
    along = rx * ox + ry * oy
    perp = -rx * oy + ry * ox
    return along, perp


def xray_oracle(V: ScalarPotential, omega, x) -> float:
    """Full line integral of ``V`` along ``x + omega r`` for a single point."""
    _require_short(V)
    omega = np.asarray(omega, dtype=float)
    x = np.asarray(x, dtype=float)
    total = 0.0
    for t in V.terms:
        _, d = _line_geometry(t, omega, x[0], x[1])
        T = t.truncation()
        val, _ = integrate.quad(lambda u: t.profile(math.sqrt(d * d + u * u)), 0.0, T,
                                epsabs=QUAD_TOL / 10, epsrel=1e-12, limit=200)
        total += 2 * val
    return float(total)


def _quad_grid(fn, a, b, tol):
    val, _ = integrate.quad_vec(fn, a, b, epsabs=tol, epsrel=1e-12, norm="max", limit=400)
    return val


def line_integrals(V: ScalarPotential, omega, X, Y, r_minus=-np.inf, r_plus=np.inf,
                   tol: float = QUAD_TOL):
    """Line integrals ``int_{r_-}^{r_+} V(x + omega r) dr`` at every point of ``(X, Y)``.

    Vectorised adaptive quadrature over all points at once; each term is
    integrated in the coordinate ``u`` measured from its closest approach.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    full = np.isinf(r_minus) and np.isinf(r_plus)
    if full:
        _require_short(V)
    out = np.zeros(np.broadcast(X, Y).shape)
    for t in V.terms:
        along, d = _line_geometry(t, omega, X, Y)
        d2 = (d * d).ravel()
        if full:
            T = t.truncation()
            val = _quad_grid(lambda u: t.profile(np.sqrt(d2 + u * u)), 0.0, T, tol / 2)
            out = out + 2 * val.reshape(out.shape)
            continue
        lo = (along + r_minus).ravel()
        hi = (along + r_plus).ravel()
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            if not t.short_range:
                raise DivergentLineIntegral("half-infinite window on a long-range term")
            T = t.truncation()
            lo = np.clip(lo, -T, T)
            hi = np.clip(hi, -T, T)
        span = hi - lo
        val = _quad_grid(lambda s: span * t.profile(np.sqrt(d2 + (lo + s * span) ** 2)),
                         0.0, 1.0, tol / 2)
        out = out + val.reshape(out.shape)
    return out


def line_integral_window(V: ScalarPotential, omega, x, r_minus, r_plus) -> float:
    """Scalar windowed line integral by ``quad`` (oracle for :func:`line_integrals`)."""
    omega = np.asarray(omega, dtype=float)
    x = np.asarray(x, dtype=float)
    f = lambda r: float(V(x[0] + omega[0] * r, x[1] + omega[1] * r))
    pts = [-(x - np.asarray(t.center)) @ omega for t in V.terms]
    pts = [p for p in pts if r_minus < p < r_plus]
    val, _ = integrate.quad(f, r_minus, r_plus, points=pts or None,
                            epsabs=QUAD_TOL / 10, epsrel=1e-12, limit=400)
    return float(val)


def xray_difference(Vl: ScalarPotential, omega, x) -> float:
    """``int [V(x + omega r) - V(omega r)] dr`` for a single point; converges for long range."""
    omega = np.asarray(omega, dtype=float)
    x = np.asarray(x, dtype=float)

    def f(r):
        return float(Vl(x[0] + omega[0] * r, x[1] + omega[1] * r) - Vl(omega[0] * r, omega[1] * r))

    val = 0.0
    for a, b in ((-np.inf, -50.0), (-50.0, 50.0), (50.0, np.inf)):
        v, _ = integrate.quad(f, a, b, epsabs=QUAD_TOL / 10, epsrel=1e-12, limit=400)
        val += v
    return float(val)


def xray_difference_grid(Vl: ScalarPotential, omega, X, Y, tol: float = QUAD_TOL):
    """Grid version of :func:`xray_difference`."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    ox, oy = omega
    xs, ys = X.ravel(), Y.ravel()

    def f(r):
        return Vl(xs + ox * r, ys + oy * r) - Vl(np.array(ox * r), np.array(oy * r))

    val = np.zeros(xs.shape)
    for a, b in ((-np.inf, -50.0), (-50.0, 50.0), (50.0, np.inf)):
        val = val + _quad_grid(f, a, b, tol / 3)
    return val.reshape(np.broadcast(X, Y).shape)


# -- vector potentials -------------------------------------------------------

@dataclass(frozen=True)
class VectorPotential:
    """``A = (A1, A2) + grad(chi)`` with short-range scalar components."""

    A1: ScalarPotential = ScalarPotential()
    A2: ScalarPotential = ScalarPotential()
    chi: ScalarPotential = ScalarPotential()

    def __call__(self, X, Y):
        gx, gy = self.chi.gradient(X, Y)
        return self.A1(X, Y) + gx, self.A2(X, Y) + gy

    def with_gauge(self, chi: ScalarPotential) -> "VectorPotential":
        return VectorPotential(self.A1, self.A2, self.chi + chi)


def vector_line_integral(A: VectorPotential, omega, x) -> float:
    """``int omega . A(x + omega r) dr`` by adaptive quadrature."""
    for comp in (A.A1, A.A2, A.chi):
        _require_short(comp)
    omega = np.asarray(omega, dtype=float)
    x = np.asarray(x, dtype=float)
    total = 0.0
    if not A.A1.is_zero and omega[0] != 0:
        total += omega[0] * xray_oracle(A.A1, omega, x)
    if not A.A2.is_zero and omega[1] != 0:
        total += omega[1] * xray_oracle(A.A2, omega, x)
    for t in A.chi.terms:
        along, _ = _line_geometry(t, omega, x[0], x[1])
        T = t.truncation()
        single = ScalarPotential((t,))

        def f(u):
            # u measured from the closest approach to this term's centre
            r = u - along
            gx, gy = single.gradient(x[0] + omega[0] * r, x[1] + omega[1] * r)
            return float(omega[0] * gx + omega[1] * gy)

        val, _ = integrate.quad(f, -T, T, points=[0.0], epsabs=QUAD_TOL / 10,
                                epsrel=1e-12, limit=200)
        total += val
    return float(total)


# -- Dollard phase -----------------------------------------------------------

def dollard_phase(Vl: ScalarPotential, p, m: float, t1: float, t2: float) -> float:
    """``int_{t1}^{t2} V_l(t p / m) dt`` by adaptive quadrature."""
    if Vl.is_zero:
        return 0.0
    u = np.asarray(p, dtype=float) / m
    f = lambda t: float(Vl(t * u[0], t * u[1]))
    speed = float(np.hypot(*u))
    pts = []
    if speed > 0:
        pts = [float(np.dot(u, t.center)) / speed**2 for t in Vl.terms]
        pts = [s for s in pts if min(t1, t2) < s < max(t1, t2)]
    val, _ = integrate.quad(f, t1, t2, points=pts or None, epsabs=QUAD_TOL / 10,
                            epsrel=1e-12, limit=400)
    return float(val)


def dollard_phase_grid(Vl: ScalarPotential, PX, PY, m: float, t1: float, t2: float):
    """Vectorised Dollard phase over a momentum grid.

    Uses the antiderivative of each term along the free classical path
    ``t -> t p/m`` (asinh for coulomb-like, erf for gaussian terms) and
    vectorised adaptive quadrature for the remaining term types.
    """
    PX = np.asarray(PX, dtype=float)
    PY = np.asarray(PY, dtype=float)
    ux, uy = PX / m, PY / m
    s = np.hypot(ux, uy)
    out = np.zeros(np.broadcast(PX, PY).shape)
    safe = np.where(s > 0, s, 1.0)
    for t in Vl.terms:
        cx, cy = t.center
        t0 = (ux * cx + uy * cy) / safe**2
        h2 = cx * cx + cy * cy - (ux * cx + uy * cy) ** 2 / safe**2
        h2 = np.maximum(h2, 0.0)
        if isinstance(t, CoulombLike):
            h = np.sqrt(h2 + t.b**2)
            val = t.q / safe * (np.arcsinh(safe * (t2 - t0) / h) - np.arcsinh(safe * (t1 - t0) / h))
            at_rest = t.q / math.sqrt(cx * cx + cy * cy + t.b**2) * (t2 - t1)
        elif isinstance(t, Gaussian):
            k = math.sqrt(2) * t.sigma
            val = (t.A * np.exp(-h2 / k**2) * math.sqrt(math.pi) * k / (2 * safe)
                   * (special.erf(safe * (t2 - t0) / k) - special.erf(safe * (t1 - t0) / k)))
            at_rest = t.A * math.exp(-(cx * cx + cy * cy) / k**2) * (t2 - t1)
        else:
            single = ScalarPotential((t,))
            fx, fy = ux.ravel(), uy.ravel()
            v = _quad_grid(lambda tt: single(tt * fx, tt * fy), t1, t2, QUAD_TOL)
            out = out + v.reshape(out.shape)
            continue
        out = out + np.where(s > 0, val, at_rest)
    return out
