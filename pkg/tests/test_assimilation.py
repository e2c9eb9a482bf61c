"""Nudging, condition checker, twin runs, decay fits, sweeps and calibration."""

import math
from dataclasses import replace

import numpy as np
import pytest

from adas.assimilation import (
    AssimilationConfig,
    NudgingStabilityWarning,
    SweepCell,
    SyncSeries,
    calibrate,
    check_conditions,
    classify,
    decades_of_decay,
    estimate_decay_rate,
    nudged_rhs,
    run_cell,
    run_twin,
    sweep,
)
from adas.models import Forcing, ModelSpec, Preset, State, rhs
from adas.observation import Observer, observe_components
from adas.spectral import Grid, SpectralField, random_divfree_field

G16 = Grid(16)
MODEL = ModelSpec(Preset.LERAY_ALPHA, nu=1.0, alpha=0.25)
FORCE = Forcing(amplitude=1.0).with_grashof(10.0, 1.0, G16)
OBS = Observer("fourier_lowmode", h=0.25)


def base_cfg(**kw):
    cfg = dict(grid=G16, model=MODEL, observer=OBS, mu=10.0, dt=0.02, t_end=1.0, forcing=FORCE,
               spin_up=0.5, c0=1.0, sample_every=5)
    cfg.update(kw)
    return AssimilationConfig(**cfg)


def synthetic_series(t, err):
    s = SyncSeries()
    s.times, s.err_L2 = list(t), list(err)
    return s


class TestNudgedRhs:
    def setup_method(self):
        self.v = random_divfree_field(G16, 2.0, 4, seed=0)
        self.vs = random_divfree_field(G16, 2.0, 4, seed=1)

    def test_synchronized_state(self):
        obs = observe_components(OBS, self.v)
        a = nudged_rhs(MODEL, State(self.v), obs, 10.0, OBS, FORCE)
        assert np.array_equal(a.coeffs, rhs(MODEL, State(self.v), FORCE).coeffs)

    def test_mu_zero_is_bitwise_rhs(self):
        obs = observe_components(OBS, self.v)
        a = nudged_rhs(MODEL, State(self.vs), obs, 0.0, OBS, FORCE)
        assert np.array_equal(a.coeffs, rhs(MODEL, State(self.vs), FORCE).coeffs)

    def test_hidden_component_does_not_matter(self):
        c = self.v.coeffs.copy()
        c[2] *= -3.0
        perturbed = SpectralField(G16, c)
        a = nudged_rhs(MODEL, State(self.vs), observe_components(OBS, self.v), 5.0, OBS, FORCE)
        b = nudged_rhs(MODEL, State(self.vs), observe_components(OBS, perturbed), 5.0, OBS, FORCE)
        assert np.array_equal(a.coeffs, b.coeffs)

    def test_feedback_is_solenoidal(self):
        a = nudged_rhs(MODEL, State(self.vs), observe_components(OBS, self.v), 5.0, OBS, FORCE)
        assert a.divergence_residual() < 1e-13

    def test_feedback_pulls_toward_observation(self):
        m = ModelSpec(Preset.NSE, nu=1.0, nonlinear=False)
        obs = observe_components(OBS, self.v)
        d = nudged_rhs(m, State(self.vs), obs, 5.0, OBS, Forcing()).coeffs - rhs(m, State(self.vs), Forcing()).coeffs
        from adas.spectral import inner

        diff = SpectralField(G16, self.v.coeffs - self.vs.coeffs)
        assert inner(SpectralField(G16, d), diff) > 0

    def test_mismatched_observations(self):
        with pytest.raises(ValueError, match="mask"):
            nudged_rhs(MODEL, State(self.vs), {0: self.v.coeffs[0]}, 1.0, OBS, FORCE)
        with pytest.raises(ValueError, match="grid"):
            bad = {0: np.zeros((4, 4, 3)), 1: np.zeros((4, 4, 3))}
            nudged_rhs(MODEL, State(self.vs), bad, 1.0, OBS, FORCE)


class TestConditions:
    def test_mu_boundary_exact(self):
        # 2 * 1 * 1 * 1 * 2^4 / (0.5^4 * 1) = 512
        r = check_conditions(1.0, 0.5, 1.0, 2.0, 512.0, 0.01, 1.0)
        assert r.mu_threshold == 512.0 and r.cond1
        assert not check_conditions(1.0, 0.5, 1.0, 2.0, math.nextafter(512.0, 0), 0.01, 1.0).cond1

    def test_h_boundary_exact(self):
        r = check_conditions(1.0, 0.5, 1.0, 2.0, 4.0, 0.5, 1.0)
        assert r.h2_max == 0.25 and r.cond2
        assert not check_conditions(1.0, 0.5, 1.0, 2.0, 4.0, math.nextafter(0.5, 1), 1.0).cond2

    def test_grashof_fourth_power(self):
        a = check_conditions(0.3, 0.2, 1.0, 7.0, 1.0, 0.1, 1.0, c=2.0, c_tilde=0.5).mu_threshold
        b = check_conditions(0.3, 0.2, 1.0, 14.0, 1.0, 0.1, 1.0, c=2.0, c_tilde=0.5).mu_threshold
        assert b == 16 * a

    def test_constants_enter_linearly(self):
        a = check_conditions(1.0, 0.5, 1.0, 2.0, 1.0, 0.1, 1.0).mu_threshold
        assert check_conditions(1.0, 0.5, 1.0, 2.0, 1.0, 0.1, 1.0, c=3.0, c_tilde=0.5).mu_threshold == 1.5 * a

    @pytest.mark.parametrize("bad", ["nu", "alpha", "G", "mu", "h", "c0"])
    def test_nonpositive(self, bad):
        args = dict(nu=1.0, alpha=0.5, lambda1=1.0, G=2.0, mu=4.0, h=0.5, c0=1.0)
        args[bad] = 0.0
        with pytest.raises(ValueError, match=bad):
            check_conditions(**args)


class TestTwin:
    def test_synchronized_start_stays_synchronized(self):
        s = run_twin(base_cfg(v_star_init="reference"))
        assert max(s.err_L2) <= 1e-10
        assert s.floor_time == 0.0

    def test_control_does_not_reach_zero(self):
        s = run_twin(base_cfg(mu=0.0))
        assert s.err_L2[-1] > 1e-3 * s.err_L2[0]
        assert classify(s, 0.0) == "non-converged"

    def test_nudging_beats_control_on_observed_scales(self):
        nudged = run_twin(base_cfg())
        control = run_twin(base_cfg(mu=0.0))
        assert nudged.err_c1[-1] < control.err_c1[-1]
        assert nudged.err_L2[-1] < 0.2 * nudged.err_L2[0]

    def test_deterministic(self):
        a, b = run_twin(base_cfg()), run_twin(base_cfg())
        assert list(a.rows()) == list(b.rows())

    def test_series_contents(self):
        s = run_twin(base_cfg(t_end=0.4))
        assert s.times == pytest.approx([0.0, 0.1, 0.2, 0.30000000000000004, 0.4])
        assert len(next(s.rows())) == len(SyncSeries.COLUMNS)
        assert s.G == pytest.approx(10.0)
        assert s.conditions is not None and not s.cond1
        assert s.final_reference.v.divergence_residual() < 1e-12

    def test_stability_warning(self):
        with pytest.warns(NudgingStabilityWarning):
            run_twin(base_cfg(mu=100.0, t_end=0.02))

    def test_spin_up_by_ball_entry(self):
        s = run_twin(base_cfg(spin_up=None, t_end=0.02))
        assert s.spin_up_time >= 0.0

    def test_zero_initial_guess(self):
        s = run_twin(base_cfg(v_star_init="zero", t_end=0.1))
        assert s.energy_da[0] == 0.0

    def test_config_validation(self):
        with pytest.raises(ValueError, match="mu"):
            base_cfg(mu=-1.0)
        with pytest.raises(ValueError, match="v_star_init"):
            base_cfg(v_star_init="guess")
        with pytest.raises(ValueError, match="smaller than L"):
            base_cfg(observer=Observer(h=10.0))


class TestDecayFit:
    def test_exact_exponential(self):
        t = np.linspace(0, 4, 81)
        fit = estimate_decay_rate(synthetic_series(t, np.exp(-1.5 * t)))
        assert fit.rate == pytest.approx(3.0, abs=1e-6)
        assert not fit.floor_reached

    def test_constant(self):
        fit = estimate_decay_rate(synthetic_series(np.linspace(0, 1, 20), np.full(20, 0.3)))
        assert fit.rate == 0.0

    def test_window(self):
        t = np.linspace(0, 4, 81)
        e = np.where(t < 1, 1.0, np.exp(-(t - 1)))
        assert estimate_decay_rate(synthetic_series(t, e), (1.0, 4.0)).rate == pytest.approx(2.0, abs=1e-9)

    def test_floor(self):
        fit = estimate_decay_rate(synthetic_series(np.linspace(0, 1, 12), [1.0] * 11 + [0.0]))
        assert fit.floor_reached

    def test_too_few_samples(self):
        with pytest.raises(ValueError, match="samples"):
            estimate_decay_rate(synthetic_series([0, 1], [1, 0.5]))

    def test_decades(self):
        assert decades_of_decay(synthetic_series([0, 1], [1.0, 1e-6])) == pytest.approx(6.0)


class TestSweep:
    def test_mu_zero_cell(self):
        cell = run_cell(base_cfg(), 0.0, 0.25, decades_required=0.1)
        assert cell.verdict == "non-converged"

    def test_cell_matches_standalone(self):
        cell = run_cell(base_cfg(), 10.0, 0.25, decades_required=1.0, keep_series=True)
        alone = run_twin(base_cfg())
        assert cell.series.err_L2 == alone.err_L2
        assert cell.verdict == classify(alone, 10.0, 1.0)

    def test_failure_does_not_abort(self):
        cells = sweep([5.0], [0.25, 20.0], base_cfg(t_end=0.1), decades_required=1.0)
        assert [c.verdict for c in cells][1] == "failed"
        assert "smaller than L" in cells[1].error
        assert cells[0].verdict != "failed"

    def test_order_and_parallel_equivalence(self):
        base = base_cfg(t_end=0.2)
        seq = sweep([0.0, 5.0], [0.25, 0.5], base)
        par = sweep([0.0, 5.0], [0.25, 0.5], base, workers=2)
        assert [(c.mu, c.h) for c in seq] == [(0.0, 0.25), (0.0, 0.5), (5.0, 0.25), (5.0, 0.5)]
        assert [repr(c.row()) for c in seq] == [repr(c.row()) for c in par]

    def test_progress_callback(self):
        seen = []
        sweep([1.0, 2.0], [0.5], base_cfg(t_end=0.04), on_cell=lambda cells: seen.append(len(cells)))
        assert seen == [1, 2]

    def test_empty(self):
        with pytest.raises(ValueError):
            sweep([], [0.5], base_cfg())


def fake_cells(verdicts, mus, hs, cond2=True):
    it = iter(verdicts)
    return [SweepCell(mu, h, next(it), cond2=cond2) for mu in mus for h in hs]


class TestCalibrate:
    def test_boundary_fit(self):
        mus = [1.0, 2.0, 4.0, 8.0]
        cells = fake_cells(["non-converged", "non-converged", "converged", "floor"], mus, [0.1])
        cal = calibrate(cells, nu=1.0, alpha=0.5, lambda1=1.0, G=2.0)
        assert cal.mu_boundary == 4.0 and cal.upward_closed
        # the fitted constant puts the predicted threshold exactly on the boundary cell
        r = check_conditions(1.0, 0.5, 1.0, 2.0, 4.0, 0.1, 1.0, c=1.0, c_tilde=cal.cc_tilde)
        assert r.mu_threshold == pytest.approx(4.0, rel=1e-14) and r.cond1
        below = check_conditions(1.0, 0.5, 1.0, 2.0, 2.0, 0.1, 1.0, c_tilde=cal.cc_tilde)
        assert not below.cond1

    def test_all_converged(self):
        cells = fake_cells(["converged"] * 3, [2.0, 4.0, 8.0], [0.1])
        assert calibrate(cells, 1.0, 0.5, 1.0, 2.0).mu_boundary == 2.0

    def test_inadmissible_cells_ignored(self):
        cells = fake_cells(["converged", "non-converged"], [2.0, 4.0], [0.1])
        cells[1].cond2 = False
        assert calibrate(cells, 1.0, 0.5, 1.0, 2.0).mu_boundary == 2.0

    def test_violation_reported(self):
        cells = fake_cells(["converged", "non-converged", "converged"], [1.0, 2.0, 4.0], [0.1])
        cal = calibrate(cells, 1.0, 0.5, 1.0, 2.0)
        assert not cal.upward_closed and cal.violations == ((2.0, 0.1),)
        assert cal.mu_boundary == 4.0

    def test_never_converged(self):
        cal = calibrate(fake_cells(["diverged"] * 2, [1.0, 2.0], [0.1]), 1.0, 0.5, 1.0, 2.0)
        assert math.isinf(cal.cc_tilde)

    def test_needs_admissible_cells(self):
        with pytest.raises(ValueError, match="resolution"):
            calibrate(fake_cells(["converged"], [1.0], [0.1], cond2=False), 1.0, 0.5, 1.0, 2.0)
