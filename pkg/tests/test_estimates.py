import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dephase import (
    ConfigError,
    EtaGrid,
    Gaussian,
    InitialDatum,
    OmegaGrid,
    OrderSeries,
    RunConfig,
    SpectralField,
    WeightParams,
    make_initial_field,
    mixed_to_spectral,
    norm_lambda_p,
)
from dephase.estimates import (
    InequalityViolation,
    check_L_continuity,
    check_apriori_R,
    check_nesting,
    extract_h_infinity,
    fit_decay,
    fit_log_values,
    mode_amplitudes,
    mode_decay_ratios,
)
from dephase.solver import run


from tests_support import random_spectral_field


class TestFitDecay:
    def test_exact_exponential_recovered(self):
        t = np.linspace(0.0, 10.0, 401)
        series = OrderSeries(t, (0.1 * np.exp(-0.7 * t)).astype(complex))
        fit = fit_decay(series, (0.0, 10.0))
        assert abs(fit.slope + 0.7) < 1e-12
        assert abs(fit.r_squared - 1.0) < 1e-12
        assert not fit.flagged

    def test_gaussian_log_is_quadratic_not_linear(self):
        # free-flow unit-width data on [2, 5]: least squares slope is minus the
        # window midpoint and the fit quality is visibly below an exponential's
        t = np.arange(2.0, 5.0 + 1e-9, 0.01)
        series = OrderSeries(t, (0.1 * np.exp(-(t**2) / 2)).astype(complex))
        fit = fit_decay(series, (2.0, 5.0))
        assert abs(fit.slope + 3.5) < 0.01
        assert fit.r_squared < 0.99
        assert fit.r_squared > 0.9

    def test_floor_shrinks_window_and_flags(self):
        t = np.linspace(0.0, 10.0, 101)
        vals = 0.1 * np.exp(-10.0 * t)
        series = OrderSeries(t, vals.astype(complex))
        fit = fit_decay(series, (0.0, 10.0), floor=1e-8)
        assert fit.flagged
        assert fit.t_hi < 10.0
        assert abs(fit.slope + 10.0) < 1e-9

    def test_too_few_samples_raises(self):
        t = np.linspace(0.0, 1.0, 5)
        series = OrderSeries(t, np.full(5, 1e-20, dtype=complex))
        with pytest.raises(ConfigError):
            fit_decay(series, (0.0, 1.0))

    def test_bad_window_rejected(self):
        t = np.linspace(0.0, 1.0, 5)
        series = OrderSeries(t, np.ones(5, dtype=complex))
        with pytest.raises(ConfigError):
            fit_decay(series, (1.0, 0.0))


class TestNesting:
    def test_single_entry_reduces_to_scalar_inequality(self):
        eta = EtaGrid(6.0, 49)
        values = np.zeros((9, 49), dtype=complex)
        values[4 + 2, 40] = 0.3
        values[4 - 2, 8] = 0.3
        field = SpectralField(4, eta, values)
        track = check_nesting([field], [(0.1, 0.4)], p=1.0)
        x = np.sqrt(1 + 4 + eta.points[40] ** 2)
        lhs = 0.3 * np.exp(0.1 * x) * x**2
        rhs = 0.3 * np.exp(0.4 * x) * x / 0.3
        assert np.isclose(track.running_max, lhs / rhs, rtol=1e-12)
        assert track.running_max <= 1.0

    def test_hundred_random_fields_never_violate(self, rng):
        fields = [random_spectral_field(rng) for _ in range(100)]
        pairs = [(0.0, 0.1), (0.1, 0.3), (0.2, 0.25), (0.3, 0.5), (0.05, 0.45)]
        track = check_nesting(fields, pairs, p=1.0)
        assert track.running_max <= 1.0
        assert track.ratios.size == 500

    def test_vanishing_gap_sends_ratio_to_zero(self, rng):
        field = random_spectral_field(rng)
        wide = check_nesting([field], [(0.1, 0.4)], p=1.0).running_max
        narrow = check_nesting([field], [(0.1, 0.100001)], p=1.0).running_max
        assert narrow < 1e-4 * wide

    def test_violation_is_hard_failure(self, rng, monkeypatch):
        # a corrupted norm (simulating a bug) must raise, not record
        field = random_spectral_field(rng)
        import dephase.estimates as est

        real = est.norm_lambda_p

        def broken(f, lam, p):
            value, arg = real(f, lam, p)
            return (value * 100.0, arg) if p > 1.5 else (value, arg)

        monkeypatch.setattr(est, "norm_lambda_p", broken)
        with pytest.raises(InequalityViolation):
            est.check_nesting([field], [(0.1, 0.4)], p=1.0)

    def test_invalid_pair_rejected(self, rng):
        field = random_spectral_field(rng)
        with pytest.raises(ConfigError):
            check_nesting([field], [(0.4, 0.1)], p=1.0)


@pytest.fixture(scope="module")
def short_run():
    datum = InitialDatum(g=Gaussian(1.0), perturbations=((1, 0.1 + 0.0j),))
    cfg = RunConfig(
        mu=0.2,
        dt=0.01,
        t_max=10.0,
        k_max=8,
        omega_grid=OmegaGrid(8.0, 257),
        eta_grid=EtaGrid(15.0, 121),
        weight_params=WeightParams.default(0.5),
        initial=datum,
        richardson_check=False,
    )
    return cfg, run(cfg)


class TestLContinuity:
    def test_zero_coupling_gives_zero_ratios(self):
        datum = InitialDatum(g=Gaussian(1.0), perturbations=((1, 0.1 + 0.0j),))
        cfg = RunConfig(
            mu=0.0, dt=0.01, t_max=2.0, k_max=4,
            omega_grid=OmegaGrid(8.0, 129), eta_grid=EtaGrid(7.0, 57),
            weight_params=WeightParams.default(0.5), initial=datum,
            richardson_check=False,
        )
        res = run(cfg)
        series = OrderSeries(res.series.t, np.zeros_like(res.series.z1))
        track = check_L_continuity(res.snapshots, series, cfg.eta_grid, 0.25, 1.0)
        assert np.all(track.ratios == 0.0)

    def test_frozen_field_matches_refined_evaluation(self):
        # ratio at doubled lattice resolution moves by < 5%
        datum = InitialDatum(g=Gaussian(1.0), perturbations=((1, 0.1 + 0.0j),))
        grid = OmegaGrid(8.0, 257)
        field = make_initial_field(datum, grid, 4)
        field.time_tag = 1.0
        t = np.array([0.0, 1.0, 2.0])
        series = OrderSeries(t, np.full(3, 0.05 + 0.02j))
        coarse = check_L_continuity([field], series, EtaGrid(7.0, 113), 0.25, 1.0)
        grid2 = OmegaGrid(8.0, 513)
        field2 = make_initial_field(datum, grid2, 4)
        field2.time_tag = 1.0
        fine = check_L_continuity([field2], series, EtaGrid(7.0, 225), 0.25, 1.0)
        assert abs(fine.running_max - coarse.running_max) <= 0.05 * coarse.running_max

    def test_reference_track_finite_and_recorded(self, short_run):
        cfg, res = short_run
        track = check_L_continuity(res.snapshots, res.series, cfg.eta_grid, 0.25, 1.0)
        assert np.all(np.isfinite(track.ratios))
        assert track.running_max > 0
        assert track.argmax_t in res.series.t


class TestAprioriR:
    def test_decoupled_ratio_is_r_over_norm(self, short_run):
        cfg, res = short_run
        params = cfg.weight_params
        f0 = mixed_to_spectral(res.snapshots[0], cfg.eta_grid)
        f0_norm, _ = norm_lambda_p(f0, 0.0, params.gamma)
        track = check_apriori_R(
            res.series, res.snapshots, cfg.eta_grid, f0_norm, params, mu=0.0, lam=0.0
        )
        from dephase.norms import r_lambda_p

        r = r_lambda_p(res.series, 0.0, params.gamma)
        snap_t = np.array([f.time_tag for f in res.snapshots])
        expected = np.interp(snap_t, res.series.t, r) / f0_norm
        assert np.allclose(track.ratios, expected, rtol=1e-12)

    def test_reference_ratio_bounded(self, short_run):
        cfg, res = short_run
        params = cfg.weight_params
        f0 = mixed_to_spectral(res.snapshots[0], cfg.eta_grid)
        f0_norm, _ = norm_lambda_p(f0, 0.25, params.gamma)
        track = check_apriori_R(
            res.series, res.snapshots, cfg.eta_grid, f0_norm, params, mu=cfg.mu, lam=0.25
        )
        assert np.all(np.isfinite(track.ratios))
        assert track.running_max < 10.0

    def test_track_stable_under_refinement(
        self, reference_config, reference_run, refined_config, refined_run
    ):
        params = reference_config.weight_params
        lam = 0.25

        def track(cfg, res):
            f0 = mixed_to_spectral(res.snapshots[0], cfg.eta_grid)
            f0_norm, _ = norm_lambda_p(f0, lam, params.gamma)
            return check_apriori_R(
                res.series, res.snapshots, cfg.eta_grid, f0_norm, params,
                mu=cfg.mu, lam=lam,
            )

        base = track(reference_config, reference_run).running_max
        fine = track(refined_config, refined_run).running_max
        assert abs(fine - base) <= 0.10 * base

    def test_doubled_mu_shrinks_late_ratios(self, short_run):
        cfg, res = short_run
        params = cfg.weight_params
        f0 = mixed_to_spectral(res.snapshots[0], cfg.eta_grid)
        f0_norm, _ = norm_lambda_p(f0, 0.0, params.gamma)
        base = check_apriori_R(
            res.series, res.snapshots, cfg.eta_grid, f0_norm, params, mu=cfg.mu, lam=0.0
        )
        doubled = check_apriori_R(
            res.series, res.snapshots, cfg.eta_grid, f0_norm, params, mu=2 * cfg.mu, lam=0.0
        )
        assert doubled.ratios[-1] < base.ratios[-1]
        assert doubled.running_max <= base.running_max


class TestHInfinity:
    def test_frozen_run_reports_attained(self):
        datum = InitialDatum(g=Gaussian(1.0), perturbations=((1, 0.1 + 0.0j),))
        cfg = RunConfig(
            mu=0.0, dt=0.01, t_max=3.0, k_max=4,
            omega_grid=OmegaGrid(8.0, 129), eta_grid=EtaGrid(8.0, 65),
            weight_params=WeightParams.default(0.5), initial=datum,
            richardson_check=False,
        )
        res = run(cfg)
        out = extract_h_infinity(res.snapshots, cfg.eta_grid, gamma=3.0)
        assert out.damped
        assert out.fit is None
        assert np.all(out.distances <= 1e-13)

    def test_reference_run_decays(self, short_run):
        cfg, res = short_run
        out = extract_h_infinity(res.snapshots, cfg.eta_grid, gamma=3.0)
        assert out.damped
        assert out.fit is not None
        assert out.fit.slope < 0
        assert out.fit.r_squared >= 0.95

    def test_supercritical_reports_failure(self):
        # above threshold the order parameter grows: no asymptotic state
        datum = InitialDatum(g=Gaussian(1.0), perturbations=((1, 0.1 + 0.0j),))
        cfg = RunConfig(
            mu=3.0, dt=0.01, t_max=6.0, k_max=16,
            omega_grid=OmegaGrid(8.0, 257), eta_grid=EtaGrid(11.0, 89),
            weight_params=WeightParams.default(0.5), initial=datum,
            richardson_check=False,
        )
        res = run(cfg)
        out = extract_h_infinity(res.snapshots, cfg.eta_grid, gamma=3.0)
        assert not out.damped

    def test_mode_amplitude_decay(self, short_run):
        cfg, res = short_run
        amps = mode_amplitudes(res.snapshots[-1])
        assert amps.shape == (cfg.k_max + 1,)
        ratios = mode_decay_ratios(res.snapshots[-1])
        assert ratios.size >= 3
        assert np.max(ratios) < 0.5


@settings(max_examples=40, deadline=None)
@given(rate=st.floats(0.05, 5.0), amp=st.floats(1e-6, 10.0))
def test_fit_recovers_synthetic_rates(rate, amp):
    t = np.linspace(0.0, 8.0, 161)
    fit = fit_log_values(t, amp * np.exp(-rate * t), (0.0, 8.0))
    assert abs(fit.rate - rate) < 1e-9 * max(1.0, rate)
    assert fit.r_squared > 1 - 1e-12
