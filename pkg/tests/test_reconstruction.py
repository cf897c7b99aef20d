from types import SimpleNamespace

import numpy as np
import pytest

from hesc.errors import InsufficientCoverage, MaskEmpty
from hesc.grid import Grid2D
from hesc.potentials import Gaussian, ScalarPotential
from hesc.reconstruction import (ReconField, Sinogram, assemble_sinogram, deconvolve_packet,
                                 fbp_invert, recon_error, uniform_angles, uniform_offsets)

V0 = ScalarPotential(short=(Gaussian(1.0, 1.0),))
RASTER = Grid2D(128, 12.0)


def oracle(V, K=32, J=128, smax=8.0):
    return assemble_sinogram(oracle=(V, uniform_angles(K), uniform_offsets(J, smax)))


def test_symmetric_rows_equal():
    s = oracle(V0)
    assert np.max(np.abs(s.values - s.values[0])) < 1e-6
    assert s.provenance == "oracle" and not s.flags.any()


def test_offset_bump_traces_sinusoid():
    c = np.array([1.5, -0.8])
    s = oracle(ScalarPotential(short=(Gaussian(1.0, 0.6, tuple(c)),)), J=257)
    for k, th in enumerate(s.angles):
        expect = c @ np.array([-np.sin(th), np.cos(th)])
        assert s.offsets[np.argmax(s.values[k])] == pytest.approx(expect, abs=s.ds)


def test_fubini_rows():
    V = ScalarPotential(short=(Gaussian(1.0, 0.8, (0.5, 0.2)), Gaussian(-0.4, 1.2, (-1, 1))))
    tot = s_tot = oracle(V).row_totals()
    exact = 2 * np.pi * (0.8**2 - 0.4 * 1.2**2)
    assert np.max(np.abs(tot - exact)) < 0.01 * abs(exact)
    assert np.ptp(s_tot) < 0.01 * abs(exact)


def test_deconvolve_delta_identity():
    rng = np.random.default_rng(0)
    g = rng.normal(size=64)
    d = np.zeros(64)
    d[32] = 1.0
    # Tikhonov damping leaves exactly the factor 1/(1 + eps^2) on a delta density
    eps = 1e-3
    assert np.max(np.abs(deconvolve_packet(g, d, eps) - g / (1 + eps**2))) < 1e-12
    assert np.max(np.abs(deconvolve_packet(g, d, 0.0) - g)) < 1e-12


@pytest.mark.parametrize("sigma_b", [1.0, 2.0])
def test_deconvolve_gaussian_blur(sigma_b):
    n = 128
    j = np.arange(n) - n // 2
    f = np.exp(-j**2 / (2 * 6.0**2)) + 0.5 * np.exp(-(j - 15) ** 2 / (2 * 4.0**2))
    rho = np.exp(-j**2 / (2 * sigma_b**2))
    blurred = np.real(np.fft.ifft(np.fft.fft(f) * np.fft.fft(np.fft.ifftshift(rho / rho.sum()))))
    rec = deconvolve_packet(blurred, rho)
    assert np.linalg.norm(rec - f) / np.linalg.norm(f) < 0.02


def test_deconvolve_regularisation_smooths():
    n = 128
    j = np.arange(n) - n // 2
    rho = np.exp(-j**2 / 8.0)
    g = np.exp(-j**2 / 50.0) + 1e-3 * np.random.default_rng(2).normal(size=n)
    hf = []
    for eps in (1e-4, 1e-3, 1e-2):
        spec = np.abs(np.fft.fft(deconvolve_packet(g, rho, eps))) ** 2
        hf.append(spec[n // 4: 3 * n // 4].sum())
    assert hf[0] >= hf[1] >= hf[2]
    with pytest.raises(ValueError):
        deconvolve_packet(g, np.zeros(n))


def test_fbp_linear_and_homogeneous():
    s = oracle(V0)
    tmpl = ReconField(RASTER, roi_radius=5.0)
    zero = Sinogram(s.angles, s.offsets, np.zeros_like(s.values))
    assert np.all(fbp_invert(zero, tmpl).values == 0)
    a = fbp_invert(s, tmpl).values
    s3 = Sinogram(s.angles, s.offsets, 3.7 * s.values)
    assert np.max(np.abs(fbp_invert(s3, tmpl).values - 3.7 * a)) < 1e-12 * np.max(np.abs(a)) * 10


def test_fbp_oracle_accuracy():
    s = oracle(V0, K=64, J=128)
    rec = fbp_invert(s, ReconField(RASTER, roi_radius=5.0))
    assert recon_error(rec, V0)["rms_rel"] < 0.05


def test_fbp_coverage():
    s = oracle(V0, smax=4.0)
    with pytest.raises(InsufficientCoverage):
        fbp_invert(s, ReconField(RASTER, roi_radius=5.0))
    one = Sinogram(s.angles[:1], s.offsets, s.values[:1])
    with pytest.raises(InsufficientCoverage):
        fbp_invert(one, ReconField(RASTER, roi_radius=3.0))


def test_recon_error_examples():
    X, Y = RASTER.xx
    truth = V0(X, Y)
    assert recon_error(ReconField(RASTER, truth.copy(), 5.0), V0) == {"rms_rel": 0.0, "max_abs": 0.0}
    assert recon_error(ReconField(RASTER, 2 * truth, 5.0), V0)["rms_rel"] == pytest.approx(1.0)
    rec = fbp_invert(oracle(V0, K=64), ReconField(RASTER, roi_radius=5.5))
    errs = [recon_error(rec, V0, r)["rms_rel"] for r in (5.5, 4.5, 3.5, 2.5)]
    assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))
    with pytest.raises(InsufficientCoverage):
        recon_error(rec, V0, 7.0)


def test_pipeline_linearity():
    A = ScalarPotential(short=(Gaussian(1.0, 0.7, (1.0, 0.0)),))
    B = ScalarPotential(short=(Gaussian(0.5, 1.1, (-0.5, 1.0)),))
    tmpl = ReconField(RASTER, roi_radius=5.0)
    sa, sb, sab = oracle(A), oracle(B), oracle(A + B)
    assert np.max(np.abs(sab.values - sa.values - sb.values)) < 1e-6
    ra, rb, rab = (fbp_invert(s, tmpl).values for s in (sa, sb, sab))
    assert np.max(np.abs(rab - ra - rb)) < 1e-6


def test_rotation_equivariance():
    K = 32
    c = np.array([1.2, 0.4])
    step = np.pi / K
    R = np.array([[np.cos(step), -np.sin(step)], [np.sin(step), np.cos(step)]])
    s1 = oracle(ScalarPotential(short=(Gaussian(1.0, 0.8, tuple(c)),)), K=K)
    s2 = oracle(ScalarPotential(short=(Gaussian(1.0, 0.8, tuple(R @ c)),)), K=K)
    assert np.max(np.abs(s2.values[1:] - s1.values[:-1])) < 1e-3
    # the last row wraps to angle pi, which is angle 0 with reversed offsets
    assert np.max(np.abs(s2.values[0] - s1.values[-1][::-1])) < 1e-3


def _profile(omega, W_field, mask, grid):
    return SimpleNamespace(omega=omega, W_field=W_field, mask=mask, grid=grid)


def test_physics_path_binning_and_inpainting():
    g = Grid2D(64, 16.0)
    X, Y = g.xx
    offs = uniform_offsets(33, 6.0)
    rows = []
    for th in (0.0, np.pi / 2):
        om = (np.cos(th), np.sin(th))
        s = -X * om[1] + Y * om[0]
        W = np.exp(-s**2)
        mask = np.abs(s) < 4.0
        mask &= ~((s > 0.9) & (s < 1.5))  # a gap to be inpainted
        rows.append(_profile(om, W, mask, g))
    # reversed direction maps to the same angle with mirrored offsets
    rows.append(_profile((-1.0, 0.0), np.exp(-Y**2), np.abs(Y) < 4.0, g))
    sino = assemble_sinogram(rows, offsets=offs)
    assert sino.provenance == "physics"
    assert sino.values.shape == (3, 33)
    assert sino.flags[0].sum() > 0 and sino.flags[0][np.abs(offs) > 5].all()
    assert np.max(np.abs(sino.values[:, np.abs(offs) < 0.8] - np.exp(-offs[np.abs(offs) < 0.8] ** 2)
                      )) < 0.1
    gap = (offs > 0.9) & (offs < 1.5)
    # rows sort by angle: the mirrored row joins angle 0, the vertical one is last
    assert np.all(sino.flags[0][gap] == 1) and np.all(sino.flags[2][gap] == 1)
    assert np.allclose(sino.angles, [0.0, 0.0, np.pi / 2])
    with pytest.raises(MaskEmpty):
        assemble_sinogram([_profile((1.0, 0.0), X * 0, X > 100, g)], offsets=offs)
