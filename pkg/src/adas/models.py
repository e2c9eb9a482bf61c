"""Generalized alpha-model right-hand sides and time stepping.

The family is

    d_t v + A v + (M v . grad)(N v) + chi grad(M v)^T . (N v) + grad p = f,   div v = 0,

with A, M, N diagonal in Fourier space. Pressure is removed by Leray
projection. Time stepping treats A exactly with an integrating factor and
advances everything else (advection, forcing, nudging) with Adams-Bashforth 2.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Callable

import numpy as np

from . import kernels
from .spectral import (
    Grid,
    SpectralField,
    fractional_symbol,
    leray_project,
    read_snapshot,
    smoothing_symbol,
    to_spectral,
    write_snapshot,
)

log = logging.getLogger(__name__)

COURANT = 0.4


class Preset(str, Enum):
    NSE = "NSE"
    LERAY_ALPHA = "Leray-alpha"
    ML_ALPHA = "ML-alpha"
    SBM = "SBM"
    NSV = "NSV"
    NS_ALPHA = "NS-alpha"
    NS_ALPHA_LIKE = "NS-alpha-like"
    CUSTOM = "Custom"


# dissipation slot: "laplacian" = -nu Lap, "voigt" = -nu Lap S, "fractional" = nu (-Lap)^theta
# smoothing slots: "I", "S", "S_theta1", "S_theta2"  with S_t = [I + (-alpha^2 Lap)^t]^{-1}
PRESET_SLOTS: dict[Preset, tuple[str, str, str, int]] = {
    Preset.NSE: ("laplacian", "I", "I", 0),
    Preset.LERAY_ALPHA: ("laplacian", "S", "I", 0),
    Preset.ML_ALPHA: ("laplacian", "I", "S", 0),
    Preset.SBM: ("laplacian", "S", "S", 0),
    Preset.NSV: ("voigt", "S", "S", 0),
    Preset.NS_ALPHA: ("laplacian", "S", "I", 1),
    Preset.NS_ALPHA_LIKE: ("fractional", "S_theta2", "I", 1),
}

DISSIPATION_SLOTS = ("laplacian", "voigt", "fractional")
SMOOTHING_SLOTS = ("I", "S", "S_theta1", "S_theta2")

# presets whose definition degenerates without a filter width
_REQUIRES_ALPHA = {Preset.NSV}


class CFLWarning(RuntimeWarning):
    pass


class NumericalInstabilityError(FloatingPointError):
    def __init__(self, message, step=None, t=None):
        super().__init__(message)
        self.step = step
        self.t = t


@dataclass(frozen=True)
class ModelSpec:
    """Operator configuration (A, M, N, chi) plus physical parameters.

    For presets the slots are fixed by the preset; ``dissipation``,
    ``m_operator``, ``n_operator`` and ``chi`` are only read for ``Custom``.
    """

    preset: Preset = Preset.LERAY_ALPHA
    nu: float = 1.0
    alpha: float = 0.0
    theta: float = 1.0
    theta1: float = 1.0
    theta2: float = 1.0
    chi: int = 0
    dissipation: str = "laplacian"
    m_operator: str = "I"
    n_operator: str = "I"
    nonlinear: bool = True

    def __post_init__(self):
        object.__setattr__(self, "preset", Preset(self.preset))
        if self.preset is not Preset.CUSTOM:
            d, m, n, chi = PRESET_SLOTS[self.preset]
            object.__setattr__(self, "dissipation", d)
            object.__setattr__(self, "m_operator", m)
            object.__setattr__(self, "n_operator", n)
            object.__setattr__(self, "chi", chi)
        errors = self.validation_errors()
        if errors:
            raise ValueError("; ".join(errors))

    def validation_errors(self) -> list[str]:
        errs = []
        if not self.nu > 0:
            errs.append(f"nu must be > 0 (got {self.nu})")
        if not self.alpha >= 0:
            errs.append(f"alpha must be >= 0 (got {self.alpha})")
        for name in ("theta", "theta1", "theta2"):
            if not getattr(self, name) >= 0:
                errs.append(f"{name} must be >= 0")
        if self.chi not in (0, 1):
            errs.append(f"chi must be 0 or 1 (got {self.chi})")
        if self.dissipation not in DISSIPATION_SLOTS:
            errs.append(f"unknown dissipation operator {self.dissipation!r}")
        for slot in ("m_operator", "n_operator"):
            if getattr(self, slot) not in SMOOTHING_SLOTS:
                errs.append(f"unknown {slot} {getattr(self, slot)!r}")
        if self.preset in _REQUIRES_ALPHA and self.alpha == 0:
            errs.append(f"{self.preset.value} requires alpha > 0")
        return errs

    def smoothing(self, slot: str, k2: np.ndarray) -> np.ndarray | None:
        """Symbol of an M/N slot, or None for the identity."""
        if slot == "I" or self.alpha == 0:
            return None
        theta = {"S": 1.0, "S_theta1": self.theta1, "S_theta2": self.theta2}[slot]
        return smoothing_symbol(k2, self.alpha, theta)

    def dissipation_symbol(self, k2: np.ndarray) -> np.ndarray:
        if self.dissipation == "laplacian":
            return self.nu * k2
        if self.dissipation == "voigt":
            return self.nu * k2 / (1.0 + self.alpha**2 * k2)
        return self.nu * fractional_symbol(k2, self.theta)


class _Symbols:
    def __init__(self, model: ModelSpec, grid: Grid):
        k2 = grid.k2
        self.a = np.ascontiguousarray(model.dissipation_symbol(k2))
        self.m = model.smoothing(model.m_operator, k2)
        self.n = model.smoothing(model.n_operator, k2)
        self.chi = model.chi
        self.nonlinear = model.nonlinear
        self._decay = {}

    def decay(self, dt):
        if dt not in self._decay:
            self._decay[dt] = np.ascontiguousarray(np.exp(-self.a * dt))
        return self._decay[dt]


@lru_cache(maxsize=64)
def _symbols(model: ModelSpec, grid: Grid) -> _Symbols:
    return _Symbols(model, grid)


@dataclass(frozen=True)
class Forcing:
    """Time-independent, solenoidal body force.

    ``steady_lowmode`` is the ABC (Beltrami) field at wavenumber shell s,
    ``taylor_green`` the Taylor-Green pattern, ``custom_snapshot`` a field
    read from a snapshot file and Leray-projected.
    """

    kind: str = "steady_lowmode"
    amplitude: float = 0.0
    shell: int = 1
    snapshot_path: str | None = None

    KINDS = ("steady_lowmode", "taylor_green", "custom_snapshot")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown forcing kind {self.kind!r}")
        if self.kind != "custom_snapshot" and (int(self.shell) != self.shell or self.shell < 1):
            raise ValueError("forcing shell must be a positive integer")
        if self.kind == "custom_snapshot" and not self.snapshot_path:
            raise ValueError("custom_snapshot forcing needs snapshot_path")

    def field(self, grid: Grid) -> SpectralField:
        return _forcing_field(self, grid)

    def with_grashof(self, grashof: float, nu: float, grid: Grid) -> Forcing:
        """Copy with amplitude scaled so that ||f|| / (nu^2 lambda1^(3/4)) = grashof."""
        unit = replace(self, amplitude=1.0)
        norm = _unscaled_norm(unit, grid)
        return replace(self, amplitude=grashof * nu**2 * grid.lambda1**0.75 / norm)


def _unscaled_norm(forcing, grid):
    from .spectral import norm_l2

    return norm_l2(forcing.field(grid))


@lru_cache(maxsize=32)
def _forcing_field(forcing: Forcing, grid: Grid) -> SpectralField:
    a = forcing.amplitude
    if forcing.kind == "custom_snapshot":
        f = read_snapshot(forcing.snapshot_path, grid)
        return leray_project(f)
    if a == 0:
        return SpectralField.zeros(grid)
    x, y, z = grid.coords
    s = forcing.shell * grid.k0
    if forcing.kind == "steady_lowmode":
        samples = np.stack(
            [
                np.sin(s * z) + np.cos(s * y),
                np.sin(s * x) + np.cos(s * z),
                np.sin(s * y) + np.cos(s * x),
            ]
        )
    else:
        samples = np.stack(
            [
                np.sin(s * x) * np.cos(s * y) * np.cos(s * z),
                -np.cos(s * x) * np.sin(s * y) * np.cos(s * z),
                np.zeros_like(x),
            ]
        )
    return leray_project(to_spectral(grid, a * samples))


@dataclass(frozen=True, eq=False)
class State:
    """Momentum variable v at time t, plus the multistep history.

    ``history`` holds the explicit tendency from the previous step (taken
    with step size ``history_dt``); None means the next step is a start-up
    step.
    """

    v: SpectralField
    t: float = 0.0
    history: np.ndarray | None = field(default=None, repr=False)
    history_dt: float | None = None
    steps: int = 0

    def filtered(self, model: ModelSpec) -> SpectralField:
        """The advecting velocity M v (u = (I - alpha^2 Lap)^{-1} v for Leray-alpha)."""
        sym = _symbols(model, self.v.grid)
        return self.v if sym.m is None else self.v.replace(self.v.coeffs * sym.m)

    def restart(self) -> State:
        return State(self.v, self.t)


def _grad_phys(grid, c):
    """Physical gradients g[i, j] = d_j c_i of a spectral vector."""
    kx, ky, kz = grid.kvec
    d = np.empty((3, 3) + grid.spectral_shape, complex)
    for i in range(3):
        d[i, 0] = 1j * kx * c[i]
        d[i, 1] = 1j * ky * c[i]
        d[i, 2] = 1j * kz * c[i]
    return np.ascontiguousarray(grid.inv(d))


def advection_physical(sym: _Symbols, grid: Grid, v: np.ndarray) -> tuple[np.ndarray, float]:
    """(Mv.grad)(Nv) + chi sum_j (Nv)_j grad (Mv)_j on the grid, and max |Mv|."""
    mv = v if sym.m is None else v * sym.m
    nv = v if sym.n is None else v * sym.n
    m_phys = np.ascontiguousarray(grid.inv(mv))
    out = np.empty_like(m_phys)
    kernels.contract(m_phys, _grad_phys(grid, nv), out)
    if sym.chi:
        n_phys = m_phys if sym.n is sym.m else np.ascontiguousarray(grid.inv(nv))
        kernels.contract(n_phys, _grad_phys(grid, mv), out, transpose=True, accumulate=True)
    speed = float(np.sqrt((m_phys**2).sum(0)).max())
    return out, speed


def explicit_tendency(model: ModelSpec, grid: Grid, v: np.ndarray, f: np.ndarray):
    """P[f - B(v)] on the retained modes (array level), and max advecting speed."""
    sym = _symbols(model, grid)
    if sym.nonlinear:
        adv, speed = advection_physical(sym, grid, v)
        w = f - grid.fwd(adv)
    else:
        w = f.copy()
        speed = float("nan")
    w = np.ascontiguousarray(w)
    kernels.project_dealias(w, grid.kx, grid.ky, grid.kz, grid.inv_kd2, grid.retained_mask)
    return w, speed


def rhs(model: ModelSpec, state: State, forcing: Forcing) -> SpectralField:
    """P[f - (Mv.grad)(Nv) - chi grad(Mv)^T.(Nv)] - A v, dealiased."""
    grid = state.v.grid
    sym = _symbols(model, grid)
    w, _ = explicit_tendency(model, grid, state.v.coeffs, forcing.field(grid).coeffs)
    w -= sym.a * (state.v.coeffs * grid.retained_mask)
    return SpectralField(grid, w, solenoidal=True)


def cfl_limit(state: State, grid: Grid | None = None, alpha: float = 0.0, courant: float = COURANT) -> float:
    """courant * dx / max|u| with u the Helmholtz-filtered velocity; inf for u = 0."""
    grid = grid or state.v.grid
    c = state.v.coeffs
    if alpha > 0:
        c = c / (1.0 + alpha**2 * state.v.grid.k2)
    u = state.v.grid.inv(c)
    umax = float(np.sqrt((u**2).sum(0)).max())
    if umax == 0:
        return math.inf
    return courant * grid.dx / umax


Extra = Callable[[np.ndarray], np.ndarray]


def step(
    model: ModelSpec,
    state: State,
    forcing: Forcing,
    dt: float,
    extra: Extra | None = None,
    substeps: int = 4,
) -> State:
    """Advance one step of size dt.

    ``extra`` adds an explicit tendency (already projected) evaluated at the
    current v, e.g. the nudging term; it is held fixed during start-up
    sub-steps. Without usable history the step is
    taken with ``substeps`` integrating-factor Euler sub-steps.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    grid = state.v.grid
    sym = _symbols(model, grid)
    f = forcing.field(grid).coeffs
    v = state.v.coeffs

    # the extra tendency is evaluated once, at the current state: its inputs
    # (observations) are only known at the step start. Holding it over the
    # start-up sub-steps keeps a nudged copy of the reference bitwise equal.
    e0 = None if extra is None else extra(v)

    def tendency(c):
        w, speed = explicit_tendency(model, grid, c, f)
        if e0 is not None:
            w += e0
        return w, speed

    n0, speed = tendency(v)
    if speed > 0 and COURANT * grid.dx / speed < dt:
        warnings.warn(
            f"dt={dt:g} exceeds the advective CFL limit {COURANT * grid.dx / speed:g} at t={state.t:g}",
            CFLWarning,
            stacklevel=2,
        )
    out = np.empty_like(n0)
    if state.history is not None and state.history_dt == dt:
        kernels.if_ab2(np.ascontiguousarray(v), n0, state.history, sym.decay(dt), dt, out)
    else:
        h = dt / substeps
        decay = sym.decay(h)
        cur = np.ascontiguousarray(v)
        nk = n0
        for k in range(substeps):
            if k:
                nk, _ = tendency(cur)
            kernels.if_euler(cur, nk, decay, h, out)
            cur = out.copy()
        out = cur
    if not np.isfinite(out).all():
        raise NumericalInstabilityError(
            f"non-finite coefficients after step {state.steps + 1} (t={state.t + dt:g})",
            step=state.steps + 1,
            t=state.t + dt,
        )
    # re-project: the integrating factor is diagonal, so only roundoff is removed here
    kernels.project_dealias(out, grid.kx, grid.ky, grid.kz, grid.inv_kd2, grid.retained_mask)
    return State(SpectralField(grid, out, solenoidal=True), state.t + dt, n0, dt, state.steps + 1)


# checkpoints ---------------------------------------------------------------

_META_KEYS = ("preset", "nu", "alpha", "theta", "theta1", "theta2", "chi",
              "dissipation", "m_operator", "n_operator", "nonlinear")


def write_checkpoint(path, model: ModelSpec, state: State, dt: float, seed) -> Path:
    """Snapshot at ``path`` plus a ``path.meta`` sidecar of ``key = value`` lines."""
    path = Path(path)
    write_snapshot(path, state.v)
    lines = [f"{k} = {_fmt(getattr(model, k))}" for k in _META_KEYS]
    lines += [f"t = {state.t!r}", f"dt = {dt!r}", f"steps = {state.steps}", f"seed = {seed}"]
    meta = path.with_name(path.name + ".meta")
    meta.write_text("\n".join(lines) + "\n")
    return meta


def _fmt(v):
    if isinstance(v, Enum):
        return v.value
    return repr(v) if isinstance(v, float) else str(v)


def read_checkpoint(path) -> tuple[ModelSpec, State, dict]:
    path = Path(path)
    meta = {}
    for line in path.with_name(path.name + ".meta").read_text().splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            meta[key.strip()] = value.strip()
    kw = {k: meta[k] for k in _META_KEYS}
    for k in ("nu", "alpha", "theta", "theta1", "theta2"):
        kw[k] = float(kw[k])
    kw["chi"] = int(kw["chi"])
    kw["nonlinear"] = kw["nonlinear"] == "True"
    model = ModelSpec(**kw)
    v = read_snapshot(path)
    state = State(leray_project(v), float(meta["t"]), steps=int(meta["steps"]))
    return model, state, meta
