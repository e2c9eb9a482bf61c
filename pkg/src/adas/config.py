"""Run configuration: YAML with fixed sections and unit-suffixed keys.

Every key is declared in ``SCHEMA``; unknown keys are errors. Parsing fills
defaults and validates everything, collecting all problems before raising.
``canonical_text`` emits the fully-filled config, which re-parses to an equal
``RunConfig``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import yaml

from .assimilation import AssimilationConfig
from .models import Forcing, ModelSpec
from .observation import Observer
from .spectral import Grid

REQUIRED = object()


def _req(kind, check=None):
    return (kind, REQUIRED, check)


def _opt(kind, default, check=None):
    return (kind, default, check)


def _positive(v):
    return None if v > 0 else "must be > 0"


def _nonneg(v):
    return None if v >= 0 else "must be >= 0"


def _positive_list(v):
    if not v:
        return "must be a nonempty list"
    return None if all(x > 0 for x in v) else "entries must be > 0"


def _nonneg_list(v):
    if not v:
        return "must be a nonempty list"
    return None if all(x >= 0 for x in v) else "entries must be >= 0"


def _mask(v):
    return None if len(v) == 3 and any(v) else "must be 3 booleans with at least one true"


SCHEMA = {
    "seed": ("int", 0, _nonneg),
    "grid": {
        "n_points": _opt("int", 32),
        "L_length": _opt("float", 2 * math.pi, _positive),
        "dealias_fraction": _opt("str", "2/3"),
    },
    "model": {
        "preset": _opt("str", "Leray-alpha"),
        "nu_viscosity": _req("float", _positive),
        "alpha_length": _opt("float", 0.0, _nonneg),
        "theta_exponent": _opt("float", 1.0, _nonneg),
        "theta1_exponent": _opt("float", 1.0, _nonneg),
        "theta2_exponent": _opt("float", 1.0, _nonneg),
        "chi": _opt("int", 0),
        "dissipation": _opt("str", "laplacian"),
        "m_operator": _opt("str", "I"),
        "n_operator": _opt("str", "I"),
        "nonlinear": _opt("bool", True),
    },
    "forcing": {
        "kind": _opt("str", "steady_lowmode"),
        "amplitude_force": _opt("float?", None),
        "grashof_target": _opt("float?", None),
        "shell_index": _opt("int", 1, _positive),
        "snapshot_path": _opt("str?", None),
    },
    "initial": {
        "energy_velocity2_length3": _opt("float?", None),
        "shells": _opt("int", 4, _positive),
    },
    "time": {
        "dt_time": _req("float", _positive),
        "t_end_time": _req("float", _positive),
        "spin_up_time": _opt("float?", None),
        "spin_up_max_time": _opt("float", 100.0, _positive),
        "sample_every_steps": _opt("int", 1, _positive),
    },
    "assimilation": {
        "mu_per_time": _req("float", _nonneg),
        "observer": _opt("str", "fourier_lowmode"),
        "h_length": _req("float", _positive),
        "mask": _opt("boollist", [True, True, False], _mask),
        "v_star_init": _opt("str", "random"),
        "v_star_seed": _opt("int?", None),
        "v_star_energy_velocity2_length3": _opt("float?", None),
        "v_star_shells": _opt("int", 4, _positive),
        "v_star_snapshot_path": _opt("str?", None),
        "c0": _opt("float?", None),
        "c_const": _opt("float", 1.0, _positive),
        "c_tilde": _opt("float", 1.0, _positive),
        "gamma0_ensemble": _opt("int", 32, _positive),
    },
    "sweep": {
        "mu_values_per_time": _req("floatlist", _nonneg_list),
        "h_values_length": _req("floatlist", _positive_list),
        "converge_decades": _opt("float", 6.0, _positive),
        "write_series": _opt("bool", False),
    },
    "output": {
        "directory": _opt("str", "adas_out"),
    },
}

OPTIONAL_SECTIONS = ("assimilation", "sweep")


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


def _coerce(kind, value):
    """Return (value, error)."""
    nullable = kind.endswith("?")
    base = kind.rstrip("?")
    if value is None:
        return (None, None) if nullable else (None, "must not be null")
    if base == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            return None, f"must be an integer (got {value!r})"
        return value, None
    if base == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return None, f"must be a number (got {value!r})"
        return float(value), None
    if base == "bool":
        if not isinstance(value, bool):
            return None, f"must be true/false (got {value!r})"
        return value, None
    if base == "str":
        if not isinstance(value, str):
            return None, f"must be a string (got {value!r})"
        return value, None
    if base == "floatlist":
        if not isinstance(value, list) or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in value):
            return None, f"must be a list of numbers (got {value!r})"
        return [float(x) for x in value], None
    if base == "boollist":
        if not isinstance(value, list) or any(not isinstance(x, (bool, int)) for x in value):
            return None, f"must be a list of booleans (got {value!r})"
        return [bool(x) for x in value], None
    raise AssertionError(kind)


def _fill(raw: dict, errors: list) -> dict:
    if not isinstance(raw, dict):
        errors.append("top level must be a mapping of sections")
        return {}
    out = {}
    for key in raw:
        if key not in SCHEMA:
            errors.append(f"unknown key {key!r}")
    for sec, spec in SCHEMA.items():
        if isinstance(spec, tuple):
            kind, default, check = spec
            value, err = _coerce(kind, raw.get(sec, default))
            if err:
                errors.append(f"{sec} {err}")
            elif check and value is not None and check(value):
                errors.append(f"{sec} {check(value)}")
            out[sec] = value
            continue
        given = raw.get(sec)
        if given is None:
            if sec in OPTIONAL_SECTIONS:
                out[sec] = None
                continue
            given = {}
        if not isinstance(given, dict):
            errors.append(f"section {sec!r} must be a mapping")
            continue
        for key in given:
            if key not in spec:
                errors.append(f"unknown key {sec}.{key}")
        sec_out = {}
        for key, (kind, default, check) in spec.items():
            if key not in given and default is REQUIRED:
                errors.append(f"missing required field {sec}.{key}")
                sec_out[key] = None
                continue
            value, err = _coerce(kind, given.get(key, default))
            if err:
                errors.append(f"{sec}.{key} {err}")
            elif check and value is not None and check(value):
                errors.append(f"{sec}.{key} {check(value)}")
            sec_out[key] = value
        out[sec] = sec_out
    return out


@dataclass(frozen=True, eq=False)
class RunConfig:
    """Validated configuration; ``data`` is the fully-filled nested mapping."""

    data: dict

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.data == other.data

    @property
    def seed(self) -> int:
        return self.data["seed"]

    @property
    def output_dir(self) -> Path:
        return Path(self.data["output"]["directory"])

    @property
    def sample_every(self) -> int:
        return self.data["time"]["sample_every_steps"]

    def grid(self) -> Grid:
        g = self.data["grid"]
        return Grid(g["n_points"], g["L_length"], Fraction(g["dealias_fraction"]))

    def model(self) -> ModelSpec:
        m = self.data["model"]
        return ModelSpec(
            preset=m["preset"], nu=m["nu_viscosity"], alpha=m["alpha_length"], theta=m["theta_exponent"],
            theta1=m["theta1_exponent"], theta2=m["theta2_exponent"], chi=m["chi"],
            dissipation=m["dissipation"], m_operator=m["m_operator"], n_operator=m["n_operator"],
            nonlinear=m["nonlinear"],
        )

    def forcing(self) -> Forcing:
        f = self.data["forcing"]
        base = Forcing(f["kind"], f["amplitude_force"] or 0.0, f["shell_index"], f["snapshot_path"])
        if f["grashof_target"] is not None:
            return base.with_grashof(f["grashof_target"], self.data["model"]["nu_viscosity"], self.grid())
        return base

    def observer(self) -> Observer:
        a = self.data["assimilation"]
        return Observer(a["observer"], a["h_length"], tuple(a["mask"]))

    def assimilation(self) -> AssimilationConfig:
        a = self.data["assimilation"]
        if a is None:
            raise ValueError("configuration has no assimilation section")
        t = self.data["time"]
        ini = self.data["initial"]
        return AssimilationConfig(
            grid=self.grid(), model=self.model(), observer=self.observer(), mu=a["mu_per_time"],
            dt=t["dt_time"], t_end=t["t_end_time"], forcing=self.forcing(), spin_up=t["spin_up_time"],
            spin_up_max=t["spin_up_max_time"], seed=self.seed, ref_energy=ini["energy_velocity2_length3"],
            ref_shells=ini["shells"], v_star_init=a["v_star_init"],
            v_star_seed=a["v_star_seed"] if a["v_star_seed"] is not None else self.seed + 1,
            v_star_energy=a["v_star_energy_velocity2_length3"], v_star_shells=a["v_star_shells"],
            v_star_snapshot=a["v_star_snapshot_path"], sample_every=t["sample_every_steps"], c0=a["c0"],
            c=a["c_const"], c_tilde=a["c_tilde"], gamma0_ensemble=a["gamma0_ensemble"],
        )

    def with_overrides(self, seed=None, out=None) -> RunConfig:
        import copy

        d = copy.deepcopy(self.data)
        if seed is not None:
            d["seed"] = int(seed)
        if out is not None:
            d["output"]["directory"] = str(out)
        return validate(d)


def _semantic_errors(cfg: RunConfig) -> list[str]:
    errs = []
    try:
        Fraction(cfg.data["grid"]["dealias_fraction"])
    except (ValueError, ZeroDivisionError):
        return [f"grid.dealias_fraction {cfg.data['grid']['dealias_fraction']!r} is not a fraction"]
    try:
        grid = cfg.grid()
    except ValueError as e:
        errs.append(f"grid: {e}")
        grid = None
    try:
        cfg.model()
    except ValueError as e:
        errs.append(f"model: {e}")
    f = cfg.data["forcing"]
    if f["amplitude_force"] is not None and f["grashof_target"] is not None:
        errs.append("forcing: give either amplitude_force or grashof_target, not both")
    try:
        Forcing(f["kind"], f["amplitude_force"] or 0.0, f["shell_index"], f["snapshot_path"])
    except ValueError as e:
        errs.append(f"forcing: {e}")
    if grid is not None and cfg.data["initial"]["shells"] > grid.max_retained_index:
        errs.append(f"initial.shells exceeds the retained truncation {grid.max_retained_index}")
    a = cfg.data["assimilation"]
    if a is not None:
        try:
            obs = cfg.observer()
            if grid is not None:
                obs.check_grid(grid)
        except ValueError as e:
            errs.append(f"assimilation: {e}")
        if a["v_star_init"] not in ("zero", "random", "reference", "snapshot"):
            errs.append(f"assimilation.v_star_init {a['v_star_init']!r} is not one of zero/random/reference/snapshot")
        if a["v_star_init"] == "snapshot" and not a["v_star_snapshot_path"]:
            errs.append("assimilation.v_star_snapshot_path is required when v_star_init = snapshot")
        if grid is not None and a["v_star_shells"] > grid.max_retained_index:
            errs.append(f"assimilation.v_star_shells exceeds the retained truncation {grid.max_retained_index}")
    s = cfg.data["sweep"]
    if s is not None and a is None:
        errs.append("sweep needs an assimilation section for the base configuration")
    if s is not None and a is not None and grid is not None and s["h_values_length"]:
        for h in s["h_values_length"]:
            try:
                Observer(a["observer"], h, tuple(a["mask"])).check_grid(grid)
            except ValueError as e:
                errs.append(f"sweep.h_values_length: {e}")
    return errs


def validate(raw: dict) -> RunConfig:
    errors: list[str] = []
    data = _fill(raw, errors)
    if errors:
        raise ConfigError(errors)
    cfg = RunConfig(data)
    errors = _semantic_errors(cfg)
    if errors:
        raise ConfigError(errors)
    return cfg


def parse_text(text: str) -> RunConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError([f"YAML syntax error: {e}"]) from e
    return validate(raw if raw is not None else {})


def parse_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"config file {path} does not exist"])
    return parse_text(path.read_text())


def canonical_text(cfg: RunConfig) -> str:
    data = {k: v for k, v in cfg.data.items() if v is not None or k not in OPTIONAL_SECTIONS}
    return yaml.safe_dump(data, sort_keys=False, default_flow_style=None, width=100)


def content_hash(text: str) -> str:
    """git blob hash of ``text``."""
    raw = text.encode()
    return hashlib.sha1(b"blob %d\0" % len(raw) + raw).hexdigest()
