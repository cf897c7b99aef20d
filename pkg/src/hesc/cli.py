"""Command line front end: ``hesc <subcommand> --config <ini> --out <dir>``."""
from __future__ import annotations

import argparse
import hashlib
import os
import sys
from pathlib import Path

import numpy as np

from . import io as hio
from .config import dump_config, load_config
from .errors import FieldFormatError, HescError
from .grid import Grid2D, make_packet, set_fft_workers
from .propagators import EvolutionConfig, default_dt, interacting_evolve, lab_kinetic
from .reconstruction import (ReconField, assemble_sinogram, fbp_invert, physics_sinogram,
                             recon_error, uniform_angles, uniform_offsets)
from .scattering import (ScatteringConfig, converged_S_element, long_range_limit_scan,
                         nr_limit_scan, rel_limit_check)

SUBCOMMANDS = ("evolve", "scatter", "limit-scan", "sinogram", "reconstruct", "xray-oracle")


def _template(cfg, pbar_mag=None):
    sc = cfg["scattering"]
    d = np.asarray(sc["direction"], float)
    d = d / np.hypot(*d)
    mag = sc["pbar"][0] if pbar_mag is None else pbar_mag
    return ScatteringConfig.build(cfg.dispersion, cfg.potential, tuple(mag * d),
                                  r_init=sc["r_init"], eps=sc["eps"], r_max=sc["r_max"],
                                  dr_max=sc["dr_max"], method=sc["method"])


def _evolve(cfg, out, threads):
    g, disp, V = cfg.grid, cfg.dispersion, cfg.potential
    phi = make_packet(g, cfg.packet())
    ev = cfg["evolution"]
    dt = ev["dt"] or default_dt(float(np.max(np.abs(lab_kinetic(g, disp)))), V)
    psi = interacting_evolve(phi, disp, V, EvolutionConfig(dt, ev["t_total"], ev["margin"]))
    hio.write_field(phi, out / "initial.qf2d")
    hio.write_field(psi, out / "final.qf2d")
    with open(out / "evolve.csv", "w", newline="\n") as fh:
        fh.write("t_total,dt,norm_initial,norm_final\n")
        fh.write(f"{ev['t_total']!r},{dt!r},{phi.norm!r},{psi.norm!r}\n")
    return ["initial.qf2d", "final.qf2d", "evolve.csv"]


def _scatter(cfg, out, threads):
    g = cfg.grid
    f0 = make_packet(g, cfg.packet().unboosted())
    fp = make_packet(g, cfg.packet(prime=True).unboosted())
    results = []
    for mag in cfg["scattering"]["pbar"]:
        results.append(converged_S_element(fp, f0, _template(cfg, mag),
                                           dollard=cfg["scattering"]["dollard"]))
    hio.write_scattering_results(results, out / "scattering.csv")
    hio.write_field(results[-1].out_field, out / "out_field.qf2d")
    return ["scattering.csv", "out_field.qf2d"]


def _limit_scan(cfg, out, threads):
    g = cfg.grid
    args = (g, cfg.packet(prime=True), cfg.packet(), _template(cfg), cfg["scattering"]["pbar"])
    if cfg.dispersion.kind == "Rel":
        scan = rel_limit_check(*args, threads=threads)
    elif cfg["scattering"]["dollard"] or cfg.potential.long:
        scan = long_range_limit_scan(*args, threads=threads)
    else:
        scan = nr_limit_scan(*args, threads=threads)
    hio.emit_plotdata(scan, out / "limit_scan.csv")
    return ["limit_scan.csv"]


def _offsets(cfg):
    rc = cfg["reconstruction"]
    return uniform_offsets(rc["offsets"], rc["s_max"])


def _physics_sinogram(cfg, threads):
    rc = cfg["reconstruction"]
    mag = cfg["scattering"]["pbar"][0]
    return physics_sinogram(cfg.grid, cfg.packet(), _template(cfg, mag), mag,
                            uniform_angles(rc["angles"]), _offsets(cfg), rc["mask_threshold"],
                            threads)


def _oracle_sinogram(cfg):
    rc = cfg["reconstruction"]
    return assemble_sinogram(oracle=(cfg.potential, uniform_angles(rc["angles"]), _offsets(cfg)))


def _sinogram(cfg, out, threads):
    hio.write_sinogram(_physics_sinogram(cfg, threads), out / "sinogram.csv")
    return ["sinogram.csv"]


def _xray_oracle(cfg, out, threads):
    hio.write_sinogram(_oracle_sinogram(cfg), out / "sinogram.csv")
    return ["sinogram.csv"]


def _reconstruct(cfg, out, threads):
    rc = cfg["reconstruction"]
    sino = _oracle_sinogram(cfg) if rc["source"] == "oracle" else _physics_sinogram(cfg, threads)
    field = fbp_invert(sino, ReconField(Grid2D(rc["raster_n"], rc["raster_L"]),
                                        roi_radius=rc["roi_radius"]))
    err = recon_error(field, cfg.potential.short_part())
    hio.write_sinogram(sino, out / "sinogram.csv")
    hio.write_real_field(field.grid, field.values, out / "recon.qf2d")
    with open(out / "recon_error.csv", "w", newline="\n") as fh:
        fh.write("rms_rel,max_abs\n")
        fh.write(f"{err['rms_rel']!r},{err['max_abs']!r}\n")
    return ["sinogram.csv", "recon.qf2d", "recon_error.csv"]


_HANDLERS = {
    "evolve": _evolve,
    "scatter": _scatter,
    "limit-scan": _limit_scan,
    "sinogram": _sinogram,
    "reconstruct": _reconstruct,
    "xray-oracle": _xray_oracle,
}


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out: Path, files) -> Path:
    lines = [f"{_sha256(out / f)}  {f}\n" for f in sorted(files)]
    path = out / "manifest.txt"
    path.write_text("".join(lines))
    return path


def run_pipeline(config_path, subcommand: str, out_dir, threads: int = None) -> int:
    """Run one subcommand and write its artifacts plus ``manifest.txt``.

    Returns the process exit status; errors are reported on stderr.
    """
    try:
        if subcommand not in _HANDLERS:
            raise HescError(f"unknown subcommand {subcommand!r}")
        cfg = load_config(config_path)
        threads = threads or cfg["run"]["threads"]
        set_fft_workers(threads)
        out = Path(out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise FieldFormatError(f"cannot create {out}: {exc}") from exc
        files = _HANDLERS[subcommand](cfg, out, threads)
        (out / "config.ini").write_text(dump_config(cfg))
        write_manifest(out, files + ["config.ini"])
        return 0
    except HescError as exc:
        print(f"hesc: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"hesc: io error: {exc}", file=sys.stderr)
        return 5


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="hesc", description="High-energy scattering toolkit")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", required=True, help="INI experiment configuration")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--threads", type=int, default=None,
                    help="worker threads (default: $HESC_THREADS or the config)")
    args = ap.parse_args(argv)
    threads = args.threads
    if threads is None and os.environ.get("HESC_THREADS"):
        threads = int(os.environ["HESC_THREADS"])
    return run_pipeline(args.config, args.subcommand, args.out, threads)


if __name__ == "__main__":
    sys.exit(main())
