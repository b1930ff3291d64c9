"""Tests for rate certification: spectra, bounds, the LMI, and fitting."""

import math

import numpy as np
import pytest

from saddlekit import certify, numerics, solvers
from saddlekit.certify import (
    DIVERGENT_OR_UNKNOWN,
    PAPER_EXACT,
    SYMMETRIC_SECTOR,
    InsufficientDataError,
    bilinear_rate_bound,
    certify_instance,
    corollary_gap,
    dgda_bilinear_eig_magnitudes,
    fit_empirical_rate,
    lmi_matrix,
    lmi_residual,
    scsc_alpha_sq,
    supply_rate_sign_probe,
    supply_rate_value,
    validated_sign_convention,
    verify_spectrum,
)
from saddlekit.problems import gen_bilinear, gen_scsc
from saddlekit.solvers import (
    DGDA,
    GDA,
    SolverConfig,
    Trace,
    TraceRecord,
    default_config,
    init_state,
    run,
)

def start_iterate(p, seed: int) -> np.ndarray:
    """Random start on the same seed stream the command-line runner uses."""
    return numerics.SeededRng(seed, stream=1).uniform(0.0, 1.0, p.n + p.m)


# dgda on a bilinear coupling with sigma in [1, 5] (kappa = 25) at the
# default step rho = 1/2, eta = 1/sigma_max:
#   1 - 2 rho + 2 rho^2 + (1 - rho) sqrt(4 rho^2 - eta^2)
#   = 1/2 + 1/2 sqrt(1 - 1/25) = 0.9898979485566356
KAPPA25_FACTOR = 0.9898979485566356


class TestEigMagnitudes:
    def test_boundary_example(self):
        # sigma = 1, rho = 1/2, eta = 1: discriminant is exactly zero and
        # both branches collapse to 1 - 2 rho + 2 rho^2 = 1/2
        mags = dgda_bilinear_eig_magnitudes([1.0], 0.5, 1.0)
        assert np.array_equal(mags, [0.5, 0.5])

    def test_rho_zero_is_gda_spectrum(self):
        # dyadic point: eta sigma = 1 gives exactly [1 + eta^2 sigma^2, 1]
        mags = dgda_bilinear_eig_magnitudes([2.0], 0.0, 0.5)
        assert np.array_equal(mags, [2.0, 1.0])
        # general law over a sigma grid
        sig = np.array([0.3, 1.0, 2.5, 7.0])
        mags = dgda_bilinear_eig_magnitudes(sig, 0.0, 0.1)
        assert np.allclose(mags[0::2], 1.0 + 0.01 * sig**2, rtol=1e-14)
        assert np.allclose(mags[1::2], 1.0, rtol=0, atol=1e-14)

    def test_kappa25_worst_mode(self):
        mags = dgda_bilinear_eig_magnitudes([1.0, 5.0], 0.5, 0.2)
        assert mags.shape == (4,)
        assert float(np.max(mags)) == pytest.approx(KAPPA25_FACTOR, rel=1e-15)

    def test_branches_meet_at_the_case_boundary(self):
        # eta* = 2 rho / sigma; on both sides of it the extreme magnitudes
        # approach 1 - 2 rho + 2 rho^2 at square-root speed
        rho, sigma = 0.5, 1.0
        limit = 1.0 - 2.0 * rho + 2.0 * rho**2
        for eps in (1e-12, 1e-14):
            lo = dgda_bilinear_eig_magnitudes([sigma], rho, 1.0 - eps)
            hi = dgda_bilinear_eig_magnitudes([sigma], rho, 1.0 + eps)
            band = 2.0 * math.sqrt(2.0 * eps) + 1e-12
            assert np.max(np.abs(lo - limit)) <= band
            assert np.max(np.abs(hi - limit)) <= band

    def test_input_validation(self):
        with pytest.raises(ValueError):
            dgda_bilinear_eig_magnitudes([], 0.5, 0.1)
        with pytest.raises(ValueError):
            dgda_bilinear_eig_magnitudes([1.0, -2.0], 0.5, 0.1)
        with pytest.raises(ValueError):
            dgda_bilinear_eig_magnitudes([[1.0, 2.0]], 0.5, 0.1)
        with pytest.raises(ValueError):
            dgda_bilinear_eig_magnitudes([1.0], -0.1, 0.1)
        with pytest.raises(ValueError):
            dgda_bilinear_eig_magnitudes([1.0], 0.5, 0.0)


class TestVerifySpectrum:
    def test_scalar_coupling_interior(self):
        p = gen_bilinear(1, 1, 1.0, seed=2)
        assert verify_spectrum(p, 0.5, 0.25) <= 1e-12

    def test_strictly_inside_both_cases(self):
        p = gen_bilinear(3, 3, 25.0, seed=6)
        sm = p.payload.sigma_max
        # all modes in the real-eigenvalue case
        assert verify_spectrum(p, 0.5, 1.8 * 0.5 / sm) <= 1e-9
        # all modes in the complex-pair case
        assert verify_spectrum(p, 0.5, 2.6 * 0.5 / p.payload.sigma_min) <= 1e-9

    def test_boundary_mode_is_looser(self):
        # at eta = 1/sigma_max the largest mode sits exactly on the case
        # boundary, where the iteration matrix is defective and the numerical
        # eigensolver loses about half its digits; 1e-8 is the honest bar
        p = gen_bilinear(2, 2, 25.0, seed=3)
        assert verify_spectrum(p, 0.5, 1.0 / p.payload.sigma_max) <= 1e-8

    def test_rho_zero(self):
        p = gen_bilinear(2, 2, 4.0, seed=8)
        assert verify_spectrum(p, 0.0, 0.1) <= 1e-12

    def test_rejects_rectangular_and_wrong_kind(self):
        with pytest.raises(ValueError):
            verify_spectrum(gen_bilinear(3, 2, 4.0, seed=0), 0.5, 0.1)
        with pytest.raises(ValueError):
            verify_spectrum(gen_scsc(2, 2, 4.0, seed=0), 0.5, 0.1)


class TestBilinearRateBound:
    def test_kappa25_value(self):
        b = bilinear_rate_bound(1.0, 5.0, 0.5, 0.2)
        assert b == pytest.approx(KAPPA25_FACTOR, rel=1e-15)
        assert b <= 0.99

    def test_single_mode_boundary(self):
        assert bilinear_rate_bound(1.0, 1.0, 0.5, 1.0) == 0.5

    def test_rho_one_gives_unit_factor(self):
        assert bilinear_rate_bound(1.0, 2.0, 1.0, 0.5) == 1.0

    def test_outside_region_is_tagged(self):
        assert bilinear_rate_bound(1.0, 5.0, 0.0, 0.1) == DIVERGENT_OR_UNKNOWN
        assert bilinear_rate_bound(1.0, 5.0, 1.5, 0.1) == DIVERGENT_OR_UNKNOWN
        assert bilinear_rate_bound(1.0, 5.0, 0.5, 0.2000001) == DIVERGENT_OR_UNKNOWN
        assert bilinear_rate_bound(1.0, 5.0, 0.5, 0.0) == DIVERGENT_OR_UNKNOWN
        assert bilinear_rate_bound(1.0, 5.0, 0.5, -0.1) == DIVERGENT_OR_UNKNOWN

    def test_bad_sigmas_raise(self):
        with pytest.raises(ValueError):
            bilinear_rate_bound(0.0, 1.0, 0.5, 0.1)
        with pytest.raises(ValueError):
            bilinear_rate_bound(2.0, 1.0, 0.5, 0.1)
        with pytest.raises(ValueError):
            bilinear_rate_bound(-1.0, 1.0, 0.5, 0.1)

    def test_matches_worst_closed_form_mode(self):
        sig_min, sig_max = 0.7, 3.0
        for rho in (0.3, 0.5, 0.9):
            for frac in (0.3, 0.7, 1.0):
                eta = frac * 2.0 * rho / sig_max
                bound = bilinear_rate_bound(sig_min, sig_max, rho, eta)
                grid = np.linspace(sig_min, sig_max, 9)
                mags = dgda_bilinear_eig_magnitudes(grid, rho, eta)
                assert abs(bound - float(np.max(mags))) <= 1e-15
                assert np.all(mags <= bound + 1e-15)


class TestScscAlphaSq:
    def test_closed_form_values(self):
        assert scsc_alpha_sq(1.0, 1.0) == pytest.approx(
            (8.0 + math.sqrt(32.0)) / 16.0, rel=1e-15
        )
        assert scsc_alpha_sq(2.0, 1.0) == pytest.approx(
            (19.0 + math.sqrt(145.0)) / 36.0, rel=1e-15
        )
        assert scsc_alpha_sq(2.0, 1.0) == pytest.approx(0.8622665160775638, rel=1e-15)
        assert scsc_alpha_sq(31.0, 1.0) == pytest.approx(0.9715528538558995, rel=1e-15)

    def test_scale_invariance(self):
        assert scsc_alpha_sq(6.0, 2.0) == pytest.approx(
            scsc_alpha_sq(3.0, 1.0), rel=1e-14
        )

    def test_large_kappa_asymptote(self):
        for kappa in np.logspace(1, 4, 40):
            gap = abs(scsc_alpha_sq(float(kappa), 1.0) - (1.0 - 1.0 / kappa))
            assert gap <= 5.0 / kappa**2

    def test_validation(self):
        with pytest.raises(ValueError):
            scsc_alpha_sq(1.0, 2.0)
        with pytest.raises(ValueError):
            scsc_alpha_sq(1.0, 0.0)
        with pytest.raises(ValueError):
            scsc_alpha_sq(1.0, -1.0)


class TestSupplyRate:
    def test_zero_on_sector_boundary(self):
        L, mu = 5.0, 1.0
        rng = numerics.SeededRng(3)
        z = rng.standard_normal(6)
        scale = float(z @ z) * L**2
        for g in (mu, L):
            s = supply_rate_value(z, g * z, L, mu, SYMMETRIC_SECTOR)
            assert abs(s) <= 1e-12 * scale

    def test_probe_separates_the_conventions(self):
        L, mu = 5.0, 1.0
        worst_sym = supply_rate_sign_probe(
            L, mu, SYMMETRIC_SECTOR, 1000, numerics.SeededRng(0, stream=2)
        )
        worst_pap = supply_rate_sign_probe(
            L, mu, PAPER_EXACT, 1000, numerics.SeededRng(0, stream=2)
        )
        assert worst_sym <= 1e-10
        assert worst_pap > 0.0

    def test_validated_convention(self):
        assert validated_sign_convention() == SYMMETRIC_SECTOR

    def test_validation(self):
        with pytest.raises(ValueError):
            supply_rate_value([1.0], [1.0], 5.0, 1.0, "bogus")
        with pytest.raises(ValueError):
            supply_rate_sign_probe(5.0, 1.0, SYMMETRIC_SECTOR, 0, numerics.SeededRng(0))


class TestLmi:
    GRID = [(2.0, 1.0), (10.0, 1.0), (31.0, 1.0), (100.0, 3.0)]

    def test_feasible_at_certified_point(self):
        for L, mu in self.GRID:
            r = lmi_residual(L, mu, 0.5, 1.0 / (L + mu))
            assert r <= certify.LMI_TOL, (L, mu, r)

    def test_paper_exact_convention_is_infeasible(self):
        r = lmi_residual(2.0, 1.0, 0.5, 1.0 / 3.0, sign_convention=PAPER_EXACT)
        assert r > 1.0

    def test_alpha_is_tight(self):
        # shaving 1e-3 off alpha^2 breaks feasibility, so the certified
        # factor is not slack at this granularity
        L, mu = 2.0, 1.0
        a2 = scsc_alpha_sq(L, mu)
        r = lmi_residual(L, mu, 0.5, 1.0 / (L + mu), alpha_sq=a2 - 1e-3)
        assert r > certify.LMI_TOL

    def test_residual_monotone_in_alpha(self):
        L, mu = 10.0, 1.0
        a2 = scsc_alpha_sq(L, mu)
        loose = lmi_residual(L, mu, 0.5, 1.0 / (L + mu), alpha_sq=1.0)
        tight = lmi_residual(L, mu, 0.5, 1.0 / (L + mu), alpha_sq=a2)
        assert loose <= tight + 1e-12

    def test_matrix_shape_and_symmetry(self):
        m = lmi_matrix(100.0, 3.0, 0.5, 1.0 / 103.0)
        assert m.shape == (3, 3)
        assert np.max(np.abs(m - m.T)) <= 1e-10 * np.max(np.abs(m))

    def test_validation(self):
        with pytest.raises(ValueError):
            lmi_residual(2.0, 1.0, 0.0, 0.1)
        with pytest.raises(ValueError):
            lmi_residual(2.0, 1.0, 0.5, -0.1)
        with pytest.raises(ValueError):
            lmi_residual(2.0, 1.0, 0.5, 0.1, sign_convention="bogus")


class TestCorollaryGap:
    def test_frozen_values(self):
        assert corollary_gap(2.0) == pytest.approx(0.012733483922436228, rel=1e-12)
        assert corollary_gap(2.0) == pytest.approx(
            0.875 - (19.0 + math.sqrt(145.0)) / 36.0, rel=1e-12
        )
        # at kappa = 1 the comparison genuinely fails
        assert corollary_gap(1.0) == pytest.approx(-0.10355339059327373, rel=1e-12)

    def test_nonnegative_from_two(self):
        for kappa in np.logspace(math.log10(2.0), 4, 200):
            assert corollary_gap(float(kappa)) >= -1e-12

    def test_large_kappa_asymptote(self):
        for kappa in (10.0, 100.0, 1000.0, 10000.0):
            assert abs(corollary_gap(kappa) - 3.0 / (4.0 * kappa)) <= 5.0 / kappa**2

    def test_validation(self):
        with pytest.raises(ValueError):
            corollary_gap(0.5)


def synthetic_trace(factor: float, steps: int) -> Trace:
    records = [
        TraceRecord(k=k, grad_evals=k, dist_sq=factor**k, lyapunov=factor**k)
        for k in range(steps + 1)
    ]
    return Trace(records=records, verdict=solvers.MAX_ITERS, metadata={})


class TestFitEmpiricalRate:
    def test_exact_geometric_decay(self):
        assert fit_empirical_rate(synthetic_trace(0.9, 200)) == pytest.approx(
            0.9, rel=1e-9
        )

    def test_floor_clips_underflow(self):
        # 0.5^k dips below the 1e-24 floor near k = 80; the fit must use
        # only the clean records and still recover the factor
        assert fit_empirical_rate(synthetic_trace(0.5, 300)) == pytest.approx(
            0.5, rel=1e-9
        )

    def test_gda_growth_is_measured_above_one(self):
        p = gen_bilinear(1, 1, 1.0, seed=1)
        cfg = SolverConfig(
            method=GDA, eta=0.1, max_iters=300, stop_dist_sq=0.0, divergence_factor=1e300
        )
        trace = run(p, cfg, np.array([1.0, 0.0]))
        assert fit_empirical_rate(trace) == pytest.approx(1.01, rel=1e-9)

    def test_dgda_matches_spectral_factor(self):
        p = gen_bilinear(2, 2, 25.0, seed=5)
        cfg = default_config(DGDA, p)
        cfg.max_iters = 6000
        trace = run(p, cfg, start_iterate(p, 11), seed=11)
        fitted = fit_empirical_rate(trace)
        assert fitted <= 0.995
        assert abs(fitted - KAPPA25_FACTOR) <= 1e-3

    def test_diverged_trace_fits_above_one(self):
        p = gen_bilinear(2, 2, 4.0, seed=5)
        trace = run(p, default_config(GDA, p), start_iterate(p, 1), seed=1)
        assert trace.verdict == solvers.DIVERGED
        assert fit_empirical_rate(trace) > 1.0

    def test_too_few_records(self):
        with pytest.raises(InsufficientDataError):
            fit_empirical_rate(synthetic_trace(0.9, 5))
        with pytest.raises(InsufficientDataError):
            fit_empirical_rate(Trace(records=[], verdict=solvers.MAX_ITERS, metadata={}))

    def test_all_below_floor(self):
        records = [
            TraceRecord(k=k, grad_evals=k, dist_sq=1e-30, lyapunov=1e-30)
            for k in range(50)
        ]
        with pytest.raises(InsufficientDataError):
            fit_empirical_rate(Trace(records=records, verdict=solvers.MAX_ITERS, metadata={}))


CERT_KEYS = {
    "method",
    "regime",
    "theoretical_factor",
    "alpha_sq",
    "eigen_magnitudes",
    "spectral_deviation",
    "lmi_max_eig",
    "sign_convention",
    "empirical_factor",
    "empirical_pass",
    "problem_digest",
    "params",
}


class TestCertifyInstance:
    def test_bilinear_square_defaults(self):
        p = gen_bilinear(5, 5, 25.0, seed=4)
        cert = certify_instance(p)
        assert cert.method == DGDA
        assert cert.regime == certify.REGIME_BILINEAR
        assert abs(cert.theoretical_factor - max(cert.eigen_magnitudes)) <= 1e-12
        assert cert.theoretical_factor == pytest.approx(KAPPA25_FACTOR, rel=1e-12)
        assert cert.spectral_deviation <= 1e-8
        assert cert.alpha_sq is None
        assert cert.lmi_max_eig is None
        assert cert.sign_convention is None
        assert cert.params["L"] is None and cert.params["mu"] is None
        assert cert.params["sigma_max"] == pytest.approx(5.0, rel=1e-12)
        d = cert.to_dict()
        assert set(d) == CERT_KEYS
        assert set(d["params"]) == {"rho", "eta", "L", "mu", "sigma_min", "sigma_max"}

    def test_bilinear_rectangular_skips_spectral_check(self):
        p = gen_bilinear(5, 3, 25.0, seed=4)
        cert = certify_instance(p)
        assert cert.spectral_deviation is None
        assert len(cert.eigen_magnitudes) == 2 * p.m
        assert cert.eigen_magnitudes == sorted(cert.eigen_magnitudes, reverse=True)

    def test_bilinear_rho_zero_is_inconclusive_but_reports_spectrum(self):
        p = gen_bilinear(3, 3, 25.0, seed=2)
        cert = certify_instance(p, rho=0.0, eta=0.1)
        assert cert.theoretical_factor == DIVERGENT_OR_UNKNOWN
        assert max(cert.eigen_magnitudes) > 1.0

    def test_scsc_defaults(self):
        p = gen_scsc(3, 2, 31.0, seed=7)
        cert = certify_instance(p)
        assert cert.regime == certify.REGIME_SCSC
        assert cert.alpha_sq == pytest.approx(scsc_alpha_sq(31.0, 1.0), rel=1e-9)
        assert cert.theoretical_factor == cert.alpha_sq
        assert cert.lmi_max_eig <= certify.LMI_TOL
        assert cert.sign_convention == SYMMETRIC_SECTOR
        assert cert.eigen_magnitudes is None
        assert cert.params["sigma_min"] is None and cert.params["sigma_max"] is None
        assert cert.params["mu"] == 1.0

    def test_scsc_off_schedule_damping_is_inconclusive(self):
        p = gen_scsc(6, 4, 31.0, seed=3)
        cert = certify_instance(p, rho=0.75)
        assert cert.theoretical_factor == DIVERGENT_OR_UNKNOWN
        assert cert.lmi_max_eig > certify.LMI_TOL
        # but the anchored schedule itself, at a non-default feasible rho,
        # still certifies
        assert certify_instance(p, rho=0.25).theoretical_factor == cert.alpha_sq

    def test_scsc_zero_damping_is_inconclusive(self):
        p = gen_scsc(3, 2, 31.0, seed=7)
        cert = certify_instance(p, rho=0.0)
        assert cert.theoretical_factor == DIVERGENT_OR_UNKNOWN
        assert cert.lmi_max_eig is None

    def test_trace_adds_empirical_fields(self):
        p = gen_scsc(3, 2, 8.0, seed=12)
        cfg = default_config(DGDA, p)
        cfg.max_iters = 4000
        trace = run(p, cfg, start_iterate(p, 5), seed=5)
        cert = certify_instance(p, trace=trace)
        assert cert.empirical_factor is not None
        assert cert.empirical_factor <= cert.theoretical_factor + certify.EMPIRICAL_SLACK
        assert cert.empirical_pass is True

    def test_trace_with_tagged_factor_leaves_pass_unset(self):
        p = gen_bilinear(2, 2, 25.0, seed=2)
        cfg = SolverConfig(
            method=DGDA,
            eta=0.2,
            rho=0.0,
            max_iters=200,
            stop_dist_sq=0.0,
            divergence_factor=1e300,
        )
        trace = run(p, cfg, start_iterate(p, 3), seed=3)
        cert = certify_instance(p, rho=0.0, eta=0.2, trace=trace)
        assert cert.theoretical_factor == DIVERGENT_OR_UNKNOWN
        assert cert.empirical_factor > 1.0
        assert cert.empirical_pass is None

    def test_no_trace_leaves_empirical_unset(self):
        cert = certify_instance(gen_bilinear(2, 2, 4.0, seed=1))
        assert cert.empirical_factor is None
        assert cert.empirical_pass is None
