"""Nudging (continuous data assimilation) for the alpha-model family.

The assimilated state v* obeys the model equations plus the feedback

    mu * sum_{i observed} [I_h(v_i) - I_h(v*_i)] e_i,

Leray-projected, where v is the reference ("truth") solution. Unobserved
components receive no feedback at all; they are recovered through the
coupling in the dynamics and the divergence constraint.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .diagnostics import DiagnosticsRecord, ball_radius_sq, grashof, make_record
from .models import Forcing, ModelSpec, NumericalInstabilityError, State, rhs, step
from .observation import Observer, estimate_gamma0, observe_array, observe_components
from .spectral import Grid, SpectralField, norm_grad, norm_l2, random_divfree_field, read_snapshot

log = logging.getLogger(__name__)

FLOOR_RELATIVE = 1e-9
V_STAR_INITS = ("zero", "random", "reference", "snapshot")


class NudgingStabilityWarning(RuntimeWarning):
    pass


# nudging -------------------------------------------------------------------

def nudging_tendency(observer: Observer, grid: Grid, mu: float, observed: dict):
    """Explicit tendency c -> P[mu sum_i (obs_i - I_h c_i) e_i], or None when mu = 0."""
    if mu == 0:
        return None

    def extra(c):
        w = np.zeros((3,) + grid.spectral_shape, complex)
        for i, o in observed.items():
            w[i] = mu * (o - observe_array(observer, grid, c[i]))
        kernels.project_dealias(w, grid.kx, grid.ky, grid.kz, grid.inv_kd2, grid.retained_mask)
        return w

    return extra


def nudged_rhs(model: ModelSpec, state: State, observed: dict, mu: float, observer: Observer,
               forcing: Forcing) -> SpectralField:
    """rhs(model, v*) plus the projected feedback toward the masked observations."""
    grid = state.v.grid
    observer.check_grid(grid)
    if set(observed) != set(observer.observed):
        raise ValueError(f"observations for components {sorted(observed)} do not match mask {observer.mask}")
    for o in observed.values():
        if o.shape != grid.spectral_shape:
            raise ValueError("observation array does not match the grid")
    base = rhs(model, state, forcing)
    extra = nudging_tendency(observer, grid, mu, observed)
    if extra is None:
        return base
    return SpectralField(grid, base.coeffs + extra(state.v.coeffs), solenoidal=True)


# sufficient conditions-------------------------------------------------------

@dataclass(frozen=True)
class ConditionReport:
    mu_threshold: float  # 2 c c~ nu G^4 / (alpha^4 lambda1)
    h2_max: float  # nu / (mu c0^2)
    cond1: bool  # mu >= mu_threshold
    cond2: bool  # mu c0^2 h^2 <= nu

    @property
    def both(self) -> bool:
        return self.cond1 and self.cond2


def check_conditions(nu, alpha, lambda1, G, mu, h, c0, c=1.0, c_tilde=1.0) -> ConditionReport:
    args = dict(nu=nu, alpha=alpha, lambda1=lambda1, G=G, mu=mu, h=h, c0=c0, c=c, c_tilde=c_tilde)
    bad = [k for k, v in args.items() if not v > 0]
    if bad:
        raise ValueError(f"check_conditions needs positive inputs; got nonpositive {', '.join(bad)}")
    threshold = 2 * c * c_tilde * nu * G**4 / (alpha**4 * lambda1)
    h2_max = nu / (mu * c0**2)
    return ConditionReport(threshold, h2_max, mu >= threshold, mu * c0**2 * h**2 <= nu)


# twin experiments ----------------------------------------------------------

@dataclass(frozen=True)
class AssimilationConfig:
    grid: Grid
    model: ModelSpec
    observer: Observer
    mu: float
    dt: float
    t_end: float
    forcing: Forcing = Forcing()
    spin_up: float | None = None  # None: until the energy enters the absorbing ball
    spin_up_max: float = 100.0
    seed: int = 0
    ref_energy: float | None = None
    ref_shells: int = 4
    v_star_init: str = "random"
    v_star_seed: int = 1
    v_star_energy: float | None = None
    v_star_shells: int = 4
    v_star_snapshot: str | None = None
    sample_every: int = 1
    c0: float | None = None
    c: float = 1.0
    c_tilde: float = 1.0
    gamma0_ensemble: int = 32

    def __post_init__(self):
        errs = self.validation_errors()
        if errs:
            raise ValueError("; ".join(errs))

    def validation_errors(self):
        errs = []
        if not self.mu >= 0:
            errs.append(f"mu must be >= 0 (got {self.mu})")
        if not self.dt > 0:
            errs.append("dt must be positive")
        if not self.t_end > 0:
            errs.append("t_end must be positive")
        if self.spin_up is not None and self.spin_up < 0:
            errs.append("spin_up must be >= 0")
        if self.v_star_init not in V_STAR_INITS:
            errs.append(f"v_star_init must be one of {V_STAR_INITS}")
        if self.v_star_init == "snapshot" and not self.v_star_snapshot:
            errs.append("v_star_init = snapshot needs v_star_snapshot")
        if self.sample_every < 1:
            errs.append("sample_every must be >= 1")
        try:
            self.observer.check_grid(self.grid)
        except ValueError as e:
            errs.append(str(e))
        return errs

    @property
    def grashof(self) -> float:
        return grashof(self.forcing.field(self.grid), self.model.nu, self.grid.lambda1)


@dataclass
class SyncSeries:
    times: list = field(default_factory=list)
    err_L2: list = field(default_factory=list)
    err_H1: list = field(default_factory=list)
    err_c1: list = field(default_factory=list)
    err_c2: list = field(default_factory=list)
    err_c3: list = field(default_factory=list)
    energy_ref: list = field(default_factory=list)
    energy_da: list = field(default_factory=list)
    cond1: bool = False
    cond2: bool = False
    conditions: ConditionReport | None = None
    c0: float | None = None
    G: float = 0.0
    spin_up_time: float = 0.0
    floor_time: float | None = None
    final_reference: State | None = None
    final_assimilated: State | None = None
    diagnostics: list = field(default_factory=list)

    COLUMNS = ("t", "err_L2", "err_H1", "err_c1", "err_c2", "err_c3", "energy_ref", "energy_da", "cond1", "cond2")

    def __len__(self):
        return len(self.times)

    def rows(self):
        c1, c2 = int(self.cond1), int(self.cond2)
        for i in range(len(self.times)):
            yield [self.times[i], self.err_L2[i], self.err_H1[i], self.err_c1[i], self.err_c2[i],
                   self.err_c3[i], self.energy_ref[i], self.energy_da[i], c1, c2]

    def append(self, t, ref: SpectralField, da: SpectralField):
        d = ref - da
        self.times.append(t)
        self.err_L2.append(norm_l2(d))
        self.err_H1.append(norm_grad(d))
        for i, lst in enumerate((self.err_c1, self.err_c2, self.err_c3)):
            lst.append(norm_l2(d.component(i)))
        self.energy_ref.append(norm_l2(ref) ** 2)
        self.energy_da.append(norm_l2(da) ** 2)
        if self.floor_time is None and self.err_L2[-1] < FLOOR_RELATIVE * math.sqrt(self.energy_ref[-1]):
            self.floor_time = t


def _initial_energy(cfg, explicit):
    if explicit is not None:
        return explicit
    G = cfg.grashof
    return 0.25 * ball_radius_sq(cfg.model.nu, cfg.grid.lambda1, G) if G > 0 else 1.0


def spin_up_reference(cfg: AssimilationConfig) -> State:
    """Reference run from seeded random data through the transient."""
    grid, model, f = cfg.grid, cfg.model, cfg.forcing
    v0 = random_divfree_field(grid, _initial_energy(cfg, cfg.ref_energy), cfg.ref_shells, cfg.seed)
    state = State(v0)
    if cfg.spin_up is not None:
        nsteps = int(round(cfg.spin_up / cfg.dt))
        for _ in range(nsteps):
            state = step(model, state, f, cfg.dt)
        return state
    G = cfg.grashof
    ball = ball_radius_sq(model.nu, grid.lambda1, G)
    max_steps = int(round(cfg.spin_up_max / cfg.dt))
    for _ in range(max_steps):
        if norm_l2(state.v) ** 2 <= ball:
            break
        state = step(model, state, f, cfg.dt)
    else:
        log.warning("reference did not enter the absorbing ball within spin_up_max=%g", cfg.spin_up_max)
    return state


def initial_assimilated(cfg: AssimilationConfig, reference: SpectralField) -> SpectralField:
    if cfg.v_star_init == "zero":
        return SpectralField.zeros(cfg.grid)
    if cfg.v_star_init == "reference":
        return reference
    if cfg.v_star_init == "snapshot":
        from .spectral import leray_project

        return leray_project(read_snapshot(cfg.v_star_snapshot, cfg.grid))
    energy = _initial_energy(cfg, cfg.v_star_energy)
    return random_divfree_field(cfg.grid, energy, cfg.v_star_shells, cfg.v_star_seed)


def measured_c0(cfg: AssimilationConfig) -> float:
    if cfg.c0 is not None:
        return cfg.c0
    return estimate_gamma0(cfg.observer, cfg.grid, cfg.gamma0_ensemble, seed=cfg.seed)


def run_twin(cfg: AssimilationConfig, record_diagnostics: bool = False) -> SyncSeries:
    """Reference and assimilated runs in lockstep with a shared dt.

    Time in the series is measured from the assimilation start. At that
    instant both integrators restart their multistep history, so a
    synchronized start stays synchronized bit for bit.
    """
    grid, model, f, obs = cfg.grid, cfg.model, cfg.forcing, cfg.observer
    if cfg.mu * cfg.dt > 1:
        warnings.warn(f"mu*dt = {cfg.mu * cfg.dt:g} > 1: explicit nudging may be unstable",
                      NudgingStabilityWarning, stacklevel=2)
    series = SyncSeries()
    series.G = G = cfg.grashof
    if cfg.mu > 0 and G > 0:
        series.c0 = measured_c0(cfg)
        rep = check_conditions(model.nu, model.alpha, grid.lambda1, G, cfg.mu, obs.h, series.c0,
                               cfg.c, cfg.c_tilde) if model.alpha > 0 else None
        if rep is not None:
            series.conditions = rep
            series.cond1, series.cond2 = rep.cond1, rep.cond2

    ref = spin_up_reference(cfg)
    series.spin_up_time = ref.t
    ref = State(ref.v, 0.0)
    da = State(initial_assimilated(cfg, ref.v), 0.0)

    nsteps = int(round(cfg.t_end / cfg.dt))
    series.append(0.0, ref.v, da.v)
    if record_diagnostics:
        series.diagnostics.append(make_record(ref.v, 0.0, model.nu, model.alpha, G, cfg.c_tilde))
    for n in range(1, nsteps + 1):
        observed = observe_components(obs, ref.v)
        extra = nudging_tendency(obs, grid, cfg.mu, observed)
        try:
            da = step(model, da, f, cfg.dt, extra=extra)
        except NumericalInstabilityError as exc:
            raise NumericalInstabilityError(f"assimilated system: {exc}", step=n, t=n * cfg.dt) from exc
        try:
            ref = step(model, ref, f, cfg.dt)
        except NumericalInstabilityError as exc:
            raise NumericalInstabilityError(f"reference system: {exc}", step=n, t=n * cfg.dt) from exc
        if n % cfg.sample_every == 0 or n == nsteps:
            t = n * cfg.dt
            series.append(t, ref.v, da.v)
            if record_diagnostics:
                series.diagnostics.append(make_record(ref.v, t, model.nu, model.alpha, G, cfg.c_tilde))
    series.final_reference = ref
    series.final_assimilated = da
    return series


# decay-rate analysis -------------------------------------------------------

@dataclass(frozen=True)
class DecayFit:
    rate: float  # r in err^2 ~ exp(-r t)
    floor_reached: bool
    samples: int
    intercept: float = float("nan")


def estimate_decay_rate(series: SyncSeries, window: tuple[float, float] | None = None,
                        min_samples: int = 10) -> DecayFit:
    """Least-squares slope of log err_L2^2 over the window."""
    t = np.asarray(series.times, float)
    e = np.asarray(series.err_L2, float)
    if window is not None:
        sel = (t >= window[0]) & (t <= window[1])
        t, e = t[sel], e[sel]
    if len(t) < min_samples:
        raise ValueError(f"need at least {min_samples} samples in the window, found {len(t)}")
    if np.any(e <= 0):
        return DecayFit(float("nan"), True, len(t))
    slope, intercept = np.polyfit(t, np.log(e**2), 1)
    rate = -float(slope)
    if abs(rate) < 1e-13:
        rate = 0.0
    return DecayFit(rate, False, len(t), float(intercept))


def decay_window(series: SyncSeries, transient: float = 0.05) -> tuple[float, float]:
    """From the end of the initial transient to the floor (or the horizon)."""
    t_end = series.times[-1]
    t1 = series.floor_time if series.floor_time is not None else t_end
    return transient * t_end, t1


def decades_of_decay(series: SyncSeries) -> float:
    e0, e1 = series.err_L2[0], series.err_L2[-1]
    if e0 == 0:
        return 0.0
    if e1 == 0:
        return math.inf
    return math.log10(e0 / e1)


# sweeps --------------------------------------------------------------------

VERDICTS = ("floor", "converged", "non-converged", "diverged", "failed")


@dataclass
class SweepCell:
    mu: float
    h: float
    verdict: str
    decades: float = float("nan")
    rate: float = float("nan")
    cond1: bool = False
    cond2: bool = False
    mu_threshold: float = float("nan")
    h2_max: float = float("nan")
    error: str = ""
    series: SyncSeries | None = field(default=None, repr=False)

    COLUMNS = ("mu", "h", "verdict", "decades", "rate", "cond1", "cond2", "mu_threshold", "h2_max", "error")

    @property
    def converged(self) -> bool:
        return self.verdict in ("floor", "converged")

    def row(self):
        return [self.mu, self.h, self.verdict, self.decades, self.rate, int(self.cond1), int(self.cond2),
                self.mu_threshold, self.h2_max, self.error]


def classify(series: SyncSeries, mu: float, decades_required: float = 6.0) -> str:
    """Verdict for one twin run. Runs without nudging are never counted as converged."""
    e = np.asarray(series.err_L2)
    if not np.all(np.isfinite(e)):
        return "diverged"
    if mu == 0:
        return "non-converged"
    if series.floor_time is not None:
        return "floor"
    d = decades_of_decay(series)
    if d >= decades_required:
        return "converged"
    if d < -1:
        return "diverged"
    return "non-converged"


def run_cell(base: AssimilationConfig, mu: float, h: float, decades_required: float = 6.0,
             keep_series: bool = False) -> SweepCell:
    try:
        cfg = replace(base, mu=mu, observer=replace(base.observer, h=h))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NudgingStabilityWarning)
            series = run_twin(cfg)
    except NumericalInstabilityError as exc:
        return SweepCell(mu, h, "diverged", error=str(exc))
    except Exception as exc:  # noqa: BLE001 - a failed cell must not abort the sweep
        return SweepCell(mu, h, "failed", error=f"{type(exc).__name__}: {exc}")
    cell = SweepCell(mu, h, classify(series, mu, decades_required), decades=decades_of_decay(series),
                     cond1=series.cond1, cond2=series.cond2)
    if series.conditions is not None:
        cell.mu_threshold = series.conditions.mu_threshold
        cell.h2_max = series.conditions.h2_max
    try:
        cell.rate = estimate_decay_rate(series, decay_window(series), min_samples=3).rate
    except ValueError:
        pass
    if keep_series:
        cell.series = series
    return cell


def _run_cell_args(args):
    return run_cell(*args)


def sweep(mus, hs, base: AssimilationConfig, workers: int = 1, decades_required: float = 6.0,
          keep_series: bool = False, on_cell=None) -> list[SweepCell]:
    """Run every (mu, h) cell; order is mu-major and independent of ``workers``.

    ``on_cell(cells_so_far)`` is called after each finished cell, in order,
    so callers can persist partial results.
    """
    args = [(base, float(mu), float(h), decades_required, keep_series) for mu in mus for h in hs]
    if not args:
        raise ValueError("sweep grid is empty")
    done = []

    def collect(it):
        for cell in it:
            done.append(cell)
            if on_cell is not None:
                on_cell(done)
        return done

    if workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return collect(pool.map(_run_cell_args, args))
    return collect(map(_run_cell_args, args))


@dataclass(frozen=True)
class Calibration:
    cc_tilde: float  # fitted product c * c~
    mu_boundary: float  # smallest sweep mu above which every admissible cell converged
    upward_closed: bool
    violations: tuple = ()  # (mu, h) cells breaking upward closure in mu


def calibrate(cells: list[SweepCell], nu: float, alpha: float, lambda1: float, G: float) -> Calibration:
    """Smallest c*c~ whose predicted region {mu >= threshold, mu c0^2 h^2 <= nu}
    contains no non-converged sweep cell.

    Only cells satisfying the resolution condition enter. The threshold is
    placed on the smallest sampled mu above the largest failing mu.
    """
    adm = [c for c in cells if c.cond2 and c.mu > 0 and c.verdict != "failed"]
    if not adm:
        raise ValueError("no sweep cell satisfies the resolution condition mu c0^2 h^2 <= nu")
    mus = sorted({c.mu for c in adm})
    failing = [c.mu for c in adm if not c.converged]
    if failing:
        above = [m for m in mus if m > max(failing)]
        if not above:
            return Calibration(math.inf, math.inf, False, tuple((c.mu, c.h) for c in adm if not c.converged))
        mu_b = above[0]
    else:
        mu_b = mus[0]
    violations = []
    for h in sorted({c.h for c in adm}):
        col = sorted((c for c in adm if c.h == h), key=lambda c: c.mu)
        seen = False
        for c in col:
            if c.converged:
                seen = True
            elif seen:
                violations.append((c.mu, c.h))
    cc = mu_b * alpha**4 * lambda1 / (2 * nu * G**4)
    return Calibration(cc, mu_b, not violations, tuple(violations))
