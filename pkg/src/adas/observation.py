"""Type-I interpolant observables I_h on scalar fields.

Two variants:

* ``fourier_lowmode``: orthogonal projection onto |k| <= 1/h (Euclidean |k|).
* ``volume_elements``: average over ceil(L/h)^3 grid-aligned cubes, computed
  on the physical samples.

Vector fields are observed component by component; only the masked
components are ever read.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spectral import Grid, SpectralField, norm_grad, norm_l2, random_scalar_field

VARIANTS = ("fourier_lowmode", "volume_elements")


@dataclass(frozen=True)
class Observer:
    variant: str = "fourier_lowmode"
    h: float = 1.0
    mask: tuple[bool, bool, bool] = (True, True, False)

    def __post_init__(self):
        object.__setattr__(self, "mask", tuple(bool(m) for m in self.mask))
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown observer variant {self.variant!r}")
        if not self.h > 0:
            raise ValueError(f"h must be positive (got {self.h})")
        if len(self.mask) != 3 or not any(self.mask):
            raise ValueError("mask must be a boolean triple with at least one observed component")

    @property
    def observed(self) -> tuple[int, ...]:
        return tuple(i for i, m in enumerate(self.mask) if m)

    def check_grid(self, grid: Grid) -> None:
        if not self.h < grid.L:
            raise ValueError(f"h={self.h} must be smaller than L={grid.L}")
        if self.variant == "fourier_lowmode":
            if 1.0 / self.h < grid.k0:
                raise ValueError(f"h={self.h} retains no Fourier mode (need 1/h >= {grid.k0})")
        elif self.cubes(grid) > grid.n:
            raise ValueError(f"h={self.h} gives cubes smaller than one grid cell")

    def cubes(self, grid: Grid) -> int:
        return math.ceil(grid.L / self.h - 1e-12)

    def lowmode_mask(self, grid: Grid) -> np.ndarray:
        return _lowmode_mask(grid, self.h)


def _lowmode_mask(grid, h):
    return grid.k2 <= (1.0 / h) ** 2 * (1 + 1e-12)


def _cube_edges(n, m):
    # exact when m divides n; otherwise nearest-sample boundaries
    return np.array([round(j * n / m) for j in range(m + 1)])


def _cube_average(samples, m):
    n = samples.shape[0]
    edges = _cube_edges(n, m)
    starts, lengths = edges[:-1], np.diff(edges)
    s = samples
    for ax in range(3):
        s = np.add.reduceat(s, starts, axis=ax)
    s = s / (lengths[:, None, None] * lengths[None, :, None] * lengths[None, None, :])
    for ax in range(3):
        s = np.repeat(s, lengths, axis=ax)
    return s


def observe_array(obs: Observer, grid: Grid, c: np.ndarray) -> np.ndarray:
    """I_h on a single spectral component array of shape grid.spectral_shape."""
    if obs.variant == "fourier_lowmode":
        return c * obs.lowmode_mask(grid)
    samples = grid.inv(c)
    out = grid.fwd(_cube_average(samples, obs.cubes(grid)))
    out[0, 0, 0] = 0.0
    return out


def observe(obs: Observer, phi: SpectralField) -> SpectralField:
    if phi.ncomp != 1:
        raise ValueError("observe acts on scalar fields; use observe_components for vectors")
    obs.check_grid(phi.grid)
    return SpectralField(phi.grid, observe_array(obs, phi.grid, phi.coeffs[0])[None])


def observe_components(obs: Observer, v: SpectralField) -> dict[int, np.ndarray]:
    """Measurements I_h(v_i) for the masked components only (spectral arrays)."""
    obs.check_grid(v.grid)
    return {i: observe_array(obs, v.grid, v.coeffs[i]) for i in obs.observed}


def approximation_ratio(obs: Observer, phi: SpectralField) -> float:
    """||phi - I_h phi|| / (h ||grad phi||), a lower sample of gamma_0."""
    g = norm_grad(phi)
    if g == 0:
        raise ValueError("approximation ratio undefined for a field with zero gradient")
    return norm_l2(phi - observe(obs, phi)) / (obs.h * g)


def _single_mode(grid, m, phase):
    c = np.zeros((1,) + grid.spectral_shape, complex)
    mx, my, mz = m
    if mz < 0 or (mz == 0 and (my < 0 or (my == 0 and mx < 0))):
        mx, my, mz = -mx, -my, -mz
        phase = -phase
    c[0, mx % grid.n, my % grid.n, mz] = np.exp(1j * phase)
    if mz == 0:
        c[0, -mx % grid.n, -my % grid.n, 0] = np.exp(-1j * phase)
    return SpectralField(grid, c)


def adversarial_fields(obs: Observer, grid: Grid):
    """Deterministic single-mode probes inside the retained set.

    For the low-mode projection: the wavevectors with the smallest |k| above
    the cutoff (the extremal case of the Parseval bound). For volume elements:
    axis, face-diagonal and body-diagonal modes at every retained shell, in
    sine and cosine phase.
    """
    M = grid.max_retained_index
    probes = []
    if obs.variant == "fourier_lowmode":
        kc2 = (1.0 / obs.h) ** 2 / grid.k0**2
        rng = range(-M, M + 1)
        cands = [(a, b, c) for a in rng for b in rng for c in range(0, M + 1) if a * a + b * b + c * c > kc2 * (1 + 1e-12)]
        if cands:
            best = min(a * a + b * b + c * c for a, b, c in cands)
            probes = [_single_mode(grid, m, 0.3) for m in cands if m[0] ** 2 + m[1] ** 2 + m[2] ** 2 == best][:12]
    else:
        for s in range(1, M + 1):
            for d in ((s, 0, 0), (0, s, 0), (0, 0, s), (s, s, 0), (s, 0, s), (0, s, s), (s, s, s)):
                for phase in (0.0, np.pi / 2):
                    probes.append(_single_mode(grid, d, phase))
    return probes


def estimate_gamma0(obs: Observer, grid: Grid, ensemble_size: int = 100, seed=0, adversarial: bool = True) -> float:
    """Largest approximation ratio over a reproducible random ensemble.

    The random members are band-limited to the retained modes with spectral
    slopes varied across the ensemble; ``adversarial`` adds the probes from
    ``adversarial_fields``.
    """
    if ensemble_size < 1:
        raise ValueError("ensemble_size must be >= 1")
    obs.check_grid(grid)
    M = grid.max_retained_index
    rng = np.random.default_rng(seed)
    seeds = rng.integers(0, 2**63 - 1, size=ensemble_size)
    slopes = np.linspace(0.0, 3.0, ensemble_size)
    best = 0.0
    for s, slope in zip(seeds, slopes):
        phi = random_scalar_field(grid, M, int(s), slope=float(slope))
        best = max(best, approximation_ratio(obs, phi))
    if adversarial:
        for phi in adversarial_fields(obs, grid):
            best = max(best, approximation_ratio(obs, phi))
    return best
