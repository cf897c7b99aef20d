"""INI experiment configuration: typed schema, validation and round-trip.

Potential terms are written as ``name(key=value, ...)`` separated by ``;``::

    [potential]
    short = gaussian(A=0.5, sigma=1.0, cx=0.0, cy=0.0)
    long = coulomb(q=0.3, b=1.0)
"""
from __future__ import annotations

import configparser
import io
import re
from dataclasses import dataclass

from .errors import ConfigError
from .grid import Grid2D, PacketSpec
from .kinematics import Dispersion
from .potentials import CoulombLike, Gaussian, ScalarPotential, Yukawa


def _pair(text):
    parts = [p.strip() for p in str(text).split(",")]
    if len(parts) != 2:
        raise ValueError(f"expected two comma-separated numbers, got {text!r}")
    return (float(parts[0]), float(parts[1]))


def _floats(text):
    return tuple(float(p) for p in str(text).split(",") if p.strip())


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _choice(*options):
    def parse(text):
        t = str(text).strip()
        if t not in options:
            raise ValueError(f"{t!r} is not one of {options}")
        return t
    return parse


_TERMS = {
    "gaussian": (Gaussian, ("A", "sigma")),
    "yukawa": (Yukawa, ("q", "mu", "b")),
    "coulomb": (CoulombLike, ("q", "b")),
}
_TERM_RE = re.compile(r"\s*(\w+)\s*\(([^)]*)\)\s*")


def parse_terms(text):
    terms = []
    for chunk in filter(None, (c.strip() for c in str(text).split(";"))):
        m = _TERM_RE.fullmatch(chunk)
        if m is None or m.group(1) not in _TERMS:
            raise ValueError(f"cannot parse potential term {chunk!r}")
        cls, names = _TERMS[m.group(1)]
        kw = {}
        for item in filter(None, (i.strip() for i in m.group(2).split(","))):
            k, _, v = item.partition("=")
            kw[k.strip()] = float(v)
        unknown = set(kw) - set(names) - {"cx", "cy"}
        if unknown:
            raise ValueError(f"unknown parameter(s) {sorted(unknown)} for {m.group(1)}")
        center = (kw.pop("cx", 0.0), kw.pop("cy", 0.0))
        terms.append(cls(center=center, **kw))
    return tuple(terms)


def format_terms(terms) -> str:
    out = []
    for t in terms:
        name = next(k for k, (cls, _) in _TERMS.items() if isinstance(t, cls))
        args = [f"{p}={getattr(t, p)!r}" for p in _TERMS[name][1]]
        args += [f"cx={t.center[0]!r}", f"cy={t.center[1]!r}"]
        out.append(f"{name}({', '.join(args)})")
    return "; ".join(out)


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        if v and not isinstance(v[0], (int, float)):
            return format_terms(v)
        return ", ".join(repr(float(x)) for x in v)
    if v is None:
        return ""
    return repr(v) if isinstance(v, float) else str(v)


def _opt(parse):
    return lambda t: None if str(t).strip() == "" else parse(t)


# section -> key -> (parser, default); a default of ... marks a required key
SCHEMA = {
    "grid": {"n": (int, 128), "L": (float, 40.0)},
    "dispersion": {"kind": (_choice("NR", "Rel"), "NR"), "mass": (float, 1.0)},
    "packet": {
        "envelope": (_choice("bump", "gaussian"), "gaussian"),
        "width": (float, 3.0),
        "center": (_pair, (0.0, 0.0)),
        "boost": (_pair, (0.0, 0.0)),
        "prime_center": (_pair, (0.0, 0.0)),
    },
    "potential": {"short": (parse_terms, ()), "long": (parse_terms, ())},
    "scattering": {
        "pbar": (_floats, (16.0,)),
        "direction": (_pair, (1.0, 0.0)),
        "eps": (float, 1e-4),
        "r_init": (_opt(float), None),
        "r_max": (float, 256.0),
        "dr_max": (float, 0.05),
        "method": (_choice("comoving", "lab"), "comoving"),
        "dollard": (_bool, False),
    },
    "reconstruction": {
        "source": (_choice("physics", "oracle"), "physics"),
        "angles": (int, 16),
        "offsets": (int, 64),
        "s_max": (float, 8.0),
        "raster_n": (int, 128),
        "raster_L": (float, 12.0),
        "roi_radius": (float, 5.0),
        "mask_threshold": (float, 0.05),
    },
    "evolution": {"dt": (_opt(float), None), "t_total": (float, 1.0), "margin": (float, 0.1)},
    "run": {"seed": (int, 0), "threads": (int, 1)},
}


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict

    def __getitem__(self, section):
        return self.values[section]

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.values == other.values

    @property
    def grid(self) -> Grid2D:
        return Grid2D(self["grid"]["n"], self["grid"]["L"])

    @property
    def dispersion(self) -> Dispersion:
        return Dispersion(self["dispersion"]["kind"], self["dispersion"]["mass"])

    @property
    def potential(self) -> ScalarPotential:
        return ScalarPotential(self["potential"]["short"], self["potential"]["long"])

    def packet(self, prime=False) -> PacketSpec:
        p = self["packet"]
        return PacketSpec(p["envelope"], p["width"], p["prime_center"] if prime else p["center"],
                          p["boost"])

    @property
    def seed(self) -> int:
        return self["run"]["seed"]


def _validate(values):
    try:
        Grid2D(values["grid"]["n"], values["grid"]["L"])
    except ValueError as exc:
        raise ConfigError(f"[grid] {exc}", "n") from exc
    d = values["dispersion"]
    if not d["mass"] > 0:
        raise ConfigError("[dispersion] mass must be positive", "mass")
    if not values["packet"]["width"] > 0:
        raise ConfigError("[packet] width must be positive", "width")
    sc = values["scattering"]
    if not sc["pbar"] or any(p <= 0 for p in sc["pbar"]):
        raise ConfigError("[scattering] pbar needs positive magnitudes", "pbar")
    if sc["direction"] == (0.0, 0.0):
        raise ConfigError("[scattering] direction must be nonzero", "direction")
    if sc["dollard"] and d["kind"] != "NR":
        raise ConfigError("[scattering] dollard needs NR kinematics", "dollard")
    rc = values["reconstruction"]
    if rc["angles"] < 2:
        raise ConfigError("[reconstruction] needs at least two angles", "angles")
    if rc["roi_radius"] > min(rc["s_max"], rc["raster_L"] / 2):
        raise ConfigError("[reconstruction] roi_radius exceeds offsets or raster", "roi_radius")
    if values["run"]["threads"] < 1:
        raise ConfigError("[run] threads must be at least 1", "threads")


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    values = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", section)
    for section, keys in SCHEMA.items():
        given = cp[section] if cp.has_section(section) else {}
        for key in given:
            if key not in keys:
                raise ConfigError(f"unknown key {key!r} in [{section}]", key)
        sec = {}
        for key, (parse, default) in keys.items():
            if key in given:
                try:
                    sec[key] = parse(given[key])
                except (ValueError, TypeError) as exc:
                    raise ConfigError(f"[{section}] {key}: {exc}", key) from exc
            else:
                sec[key] = default
        values[section] = sec
    _validate(values)
    return ExperimentConfig(values)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def dump_config(cfg: ExperimentConfig) -> str:
    buf = io.StringIO()
    for section, keys in SCHEMA.items():
        buf.write(f"[{section}]\n")
        for key in keys:
            buf.write(f"{key} = {_fmt(cfg[section][key])}\n")
        buf.write("\n")
    return buf.getvalue()
