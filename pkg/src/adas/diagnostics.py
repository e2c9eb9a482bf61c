"""Scalar functionals of the state and advisory attractor-bound monitors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spectral import SpectralField, norm_grad, norm_l2


def grashof(f, nu: float, lambda1: float, grid=None) -> float:
    """G = ||f|| / (nu^2 lambda1^(3/4)).

    ``f`` is a SpectralField or a ``Forcing`` (which then needs ``grid``).
    """
    if not nu > 0:
        raise ValueError("grashof number needs nu > 0")
    if not lambda1 > 0:
        raise ValueError("grashof number needs lambda1 > 0")
    if not isinstance(f, SpectralField):
        if grid is None:
            raise ValueError("a Forcing needs a grid to be evaluated")
        f = f.field(grid)
    return norm_l2(f) / (nu**2 * lambda1**0.75)


def homogeneous_norms(u: SpectralField, alpha: float, lambda1: float) -> tuple[float, float]:
    """Dimensionally homogeneous H1 and H2 norms:

    H1^2 = lambda1 [|u|^2 + alpha^2 |A^(1/2) u|^2]
    H2^2 = lambda1^2 [|u|^2 + 2 alpha^2 |A^(1/2) u|^2 + alpha^4 |A u|^2]
    """
    g = u.grid
    w = g.mode_weight * g.volume
    a2 = np.abs(u.coeffs) ** 2
    l2 = float(np.sum(w * a2))
    h1 = float(np.sum(w * g.k2 * a2))
    h2 = float(np.sum(w * g.k2**2 * a2))
    H1 = np.sqrt(lambda1 * (l2 + alpha**2 * h1))
    H2 = np.sqrt(lambda1**2 * (l2 + 2 * alpha**2 * h1 + alpha**4 * h2))
    return float(H1), float(H2)


def ball_radius_sq(nu, lambda1, G):
    """Absorbing-ball radius^2 for the energy: 2 nu^2 lambda1^(-1/2) G^2."""
    return 2 * nu**2 * lambda1**-0.5 * G**2


def enstrophy_integral_bound(nu, lambda1, G, tau):
    return 2 * (1 + tau * nu * lambda1**0.5) * nu * G**2


def enstrophy_bound(nu, lambda1, G, alpha, c_tilde=1.0):
    if alpha == 0:
        return float("inf")
    return c_tilde * nu**2 * G**4 / (alpha**4 * lambda1**1.5)


@dataclass
class DiagnosticsRecord:
    t: float
    energy: float
    enstrophy: float
    H1_hom: float
    H2_hom: float
    G: float
    prop2_flag: bool = False
    prop3_flag: bool = False

    COLUMNS = ("t", "energy", "enstrophy", "H1_hom", "H2_hom", "G", "prop2_flag", "prop3_flag")

    def row(self):
        return [getattr(self, c) for c in self.COLUMNS]


def make_record(v: SpectralField, t: float, nu: float, alpha: float, G: float, c_tilde: float = 1.0) -> DiagnosticsRecord:
    """Record with per-sample flags (energy ball, enstrophy bound); G = 0 disables flags."""
    lam1 = v.grid.lambda1
    e = norm_l2(v) ** 2
    z = norm_grad(v) ** 2
    H1, H2 = homogeneous_norms(v, alpha, lam1)
    rec = DiagnosticsRecord(t, e, z, H1, H2, G)
    if G > 0:
        rec.prop2_flag = e > ball_radius_sq(nu, lam1, G)
        rec.prop3_flag = z > enstrophy_bound(nu, lam1, G, alpha, c_tilde)
    return rec


@dataclass
class BoundReport:
    """Violations of the attractor bounds; advisory only."""

    suppressed: bool = False
    ball_violations: list = field(default_factory=list)
    integral_violations: list = field(default_factory=list)
    enstrophy_violations: list = field(default_factory=list)
    max_window_integral: float = 0.0
    integral_bound: float = 0.0

    @property
    def flags(self) -> list[str]:
        out = []
        if self.ball_violations:
            out.append("prop2_ball")
        if self.integral_violations:
            out.append("prop2_integral")
        if self.enstrophy_violations:
            out.append("prop3_enstrophy")
        return out


def window_integrals(t: np.ndarray, y: np.ndarray, tau: float):
    """Trapezoid integrals of y over every window [t_i, t_i + tau] that fits in the record."""
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))])
    out = []
    for i, t0 in enumerate(t):
        t1 = t0 + tau
        if t1 > t[-1] * (1 + 1e-12) + 1e-12:
            break
        out.append((t0, float(np.interp(t1, t, cum) - cum[i])))
    return out


def monitor_bounds(records, nu: float, lambda1: float, G: float, alpha: float, c_tilde: float = 1.0,
                   tau: float = 1.0, spin_up: float = 0.0) -> BoundReport:
    """Check a post-spin-up record stream against the energy ball, the windowed
    enstrophy-integral bound over tau, and the enstrophy bound with c_tilde."""
    recs = [r for r in records if r.t >= spin_up]
    if G == 0 or not recs:
        return BoundReport(suppressed=True)
    ball = ball_radius_sq(nu, lambda1, G)
    zmax = enstrophy_bound(nu, lambda1, G, alpha, c_tilde)
    rep = BoundReport(integral_bound=enstrophy_integral_bound(nu, lambda1, G, tau))
    rep.ball_violations = [r.t for r in recs if r.energy > ball]
    rep.enstrophy_violations = [r.t for r in recs if r.enstrophy > zmax]
    wins = window_integrals([r.t for r in recs], [r.enstrophy for r in recs], tau)
    if wins:
        rep.max_window_integral = max(w for _, w in wins)
    rep.integral_violations = [t0 for t0, w in wins if w > rep.integral_bound]
    return rep
