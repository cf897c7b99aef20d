"""File formats: QF2D1 binary fields and the CSV outputs."""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .errors import FieldFormatError
from .grid import Grid2D, WavePacket
from .reconstruction import Sinogram

_HEADER = re.compile(rb"QF2D1 n=(\d+) L=(\S+) kind=(position|momentum)\n")


def write_field(packet: WavePacket, path) -> None:
    header = f"QF2D1 n={packet.grid.n} L={packet.grid.L!r} kind={packet.kind}\n"
    data = np.ascontiguousarray(packet.samples, dtype="<c16")
    try:
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(data.tobytes())
    except OSError as exc:
        raise FieldFormatError(f"cannot write {path}: {exc}") from exc


def read_field(path) -> WavePacket:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise FieldFormatError(f"cannot read {path}: {exc}") from exc
    end = raw.find(b"\n")
    m = _HEADER.fullmatch(raw[: end + 1]) if end >= 0 else None
    if m is None:
        raise FieldFormatError(f"{path}: not a QF2D1 file")
    n = int(m.group(1))
    try:
        L = float(m.group(2))
        grid = Grid2D(n, L)
    except ValueError as exc:
        raise FieldFormatError(f"{path}: bad header: {exc}") from exc
    body = raw[end + 1:]
    if len(body) != 16 * n * n:
        raise FieldFormatError(f"{path}: expected {16 * n * n} data bytes, found {len(body)}")
    samples = np.frombuffer(body, dtype="<c16").reshape(n, n).astype(complex)
    return WavePacket(grid, samples, m.group(3).decode())


def write_real_field(grid: Grid2D, values, path) -> None:
    """Real raster (e.g. a reconstruction) as a position-kind QF2D1 file."""
    write_field(WavePacket(grid, np.asarray(values, dtype=complex), "position"), path)


def _open_text(path):
    try:
        return open(path, "w", newline="\n")
    except OSError as exc:
        raise FieldFormatError(f"cannot write {path}: {exc}") from exc


def write_sinogram(sino: Sinogram, path) -> None:
    K, J = sino.values.shape
    with _open_text(path) as fh:
        fh.write(f"# sinogram K={K} J={J} smax={float(sino.s_max)!r} provenance={sino.provenance}\n")
        for k in range(K):
            for j in range(J):
                fh.write(f"{k},{float(sino.angles[k])!r},{float(sino.offsets[j])!r},"
                         f"{float(sino.values[k, j])!r},{int(sino.flags[k, j])}\n")


def read_sinogram(path) -> Sinogram:
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise FieldFormatError(f"cannot read {path}: {exc}") from exc
    m = re.fullmatch(r"# sinogram K=(\d+) J=(\d+) smax=(\S+) provenance=(oracle|physics)",
                     lines[0] if lines else "")
    if m is None:
        raise FieldFormatError(f"{path}: missing sinogram header")
    K, J = int(m.group(1)), int(m.group(2))
    rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:] if ln])
    if rows.shape != (K * J, 5):
        raise FieldFormatError(f"{path}: expected {K * J} rows of 5 columns")
    angles = rows[::J, 1]
    offsets = rows[:J, 2]
    return Sinogram(angles, offsets, rows[:, 3].reshape(K, J), m.group(4),
                    rows[:, 4].reshape(K, J).astype(int))


def write_scattering_results(results, path) -> None:
    with _open_text(path) as fh:
        fh.write("pbar_x,pbar_y,re_element,im_element,converged,r_final\n")
        for r in results:
            fh.write(f"{float(r.boost.pbar[0])!r},{float(r.boost.pbar[1])!r},{float(r.element.real)!r},"
                     f"{float(r.element.imag)!r},{int(r.converged)},{float(r.r_final)!r}\n")


def emit_plotdata(data, path) -> None:
    """Plot-ready CSV for a limit scan (list of entries) or a sinogram."""
    if isinstance(data, Sinogram):
        write_sinogram(data, path)
        return
    if not data:
        raise FieldFormatError("nothing to write: empty scan")
    with _open_text(path) as fh:
        fh.write("# limit scan; pbar in units of mass*c, values in units of energy*length\n")
        fh.write("pbar,value_re,value_im,oracle_re,oracle_im,delta\n")
        for e in data:
            value = e.get("corrected_value", e.get("value", e.get("element")))
            oracle = e.get("oracle_short", e.get("oracle", e.get("target")))
            fh.write(f"{float(e['pbar'])!r},{float(value.real)!r},{float(value.imag)!r},"
                     f"{float(oracle.real)!r},{float(oracle.imag)!r},{float(e['delta'])!r}\n")
