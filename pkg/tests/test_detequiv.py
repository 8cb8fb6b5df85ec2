import time

import numpy as np
import pytest

from mimo_lab.bounds import run_bounds
from mimo_lab.covmodel import CorrelationModel, complex_gaussian, stream
from mimo_lab.detequiv import (
    CONCENTRATION_KINDS,
    DetEquivProblem,
    DivergenceError,
    DomainError,
    concentration_check,
    sinr_mf_detequiv,
    sinr_mmse_detequiv,
    solve_fixed_point,
    solve_primed,
)

from conftest import make_scenario

GOLDEN = (np.sqrt(5) - 1) / 2
SILVER = np.sqrt(2) - 1


def scalar_problem(N, count, z=-1.0):
    return DetEquivProblem(thetas=[np.eye(N)], A=np.zeros((N, N)),
                           Q=np.eye(N), z=z, counts=[count])


def random_problem(N, n, seed, scale=1.0):
    g = stream(seed)
    thetas = []
    for _ in range(n):
        X = complex_gaussian(g, N, N + 2)
        thetas.append(scale * (X @ X.conj().T) / (N + 2))
    Xa = complex_gaussian(g, N, N)
    A = 0.2 * (Xa @ Xa.conj().T) / N
    return DetEquivProblem(thetas=thetas, A=A, Q=np.eye(N), z=-0.8)


class TestFixedPoint:
    def test_scalar_class_golden_ratio(self):
        sol = solve_fixed_point(scalar_problem(6, 6))
        assert abs(sol.e[0] - GOLDEN) < 1e-9

    def test_scalar_class_silver_ratio(self):
        sol = solve_fixed_point(scalar_problem(6, 12))
        assert abs(sol.e[0] - SILVER) < 1e-9

    def test_runtime_under_a_second(self):
        t0 = time.perf_counter()
        solve_fixed_point(scalar_problem(8, 8))
        solve_fixed_point(scalar_problem(8, 16))
        assert time.perf_counter() - t0 < 1.0

    def test_pure_resolvent(self):
        p = DetEquivProblem(thetas=[], A=np.zeros((3, 3)), Q=np.eye(3), z=-1.0)
        sol = solve_fixed_point(p)
        assert np.allclose(sol.T, np.eye(3))
        assert abs(sol.m - 1.0) < 1e-12

    def test_domain_error_for_nonnegative_z(self):
        with pytest.raises(DomainError):
            solve_fixed_point(scalar_problem(4, 4, z=0.5))

    def test_divergence_reports_residual(self):
        with pytest.raises(DivergenceError):
            solve_fixed_point(scalar_problem(4, 4), tol=1e-30, max_iter=5)

    def test_stieltjes_positivity(self):
        sol = solve_fixed_point(random_problem(8, 5, seed=3))
        assert np.all(sol.e >= 0)
        assert np.all(np.linalg.eigvalsh(sol.T) > 0)

    def test_residual_decreases_after_transient(self):
        sol = solve_fixed_point(random_problem(10, 6, seed=4))
        hist = np.array(sol.residual_history[5:])
        assert np.all(np.diff(hist) <= 1e-14)

    def test_invariance_under_joint_rescaling(self):
        p = random_problem(6, 4, seed=5)
        sol = solve_fixed_point(p)
        c = 7.3
        p2 = DetEquivProblem(thetas=[c * t for t in p.thetas], A=c * p.A,
                             Q=p.Q, z=c * p.z)
        sol2 = solve_fixed_point(p2)
        assert np.max(np.abs(sol.e - sol2.e)) < 1e-8 * (1 + np.max(np.abs(sol.e)))
        assert np.max(np.abs(sol.T - c * sol2.T)) < 1e-8 * np.max(np.abs(sol.T))

    def test_oracle_equivalence_iid_columns(self):
        # m approximates (1/N) tr Q (X X^H + A - z I)^{-1} with columns of
        # covariance Theta / N
        N, draws = 256, 200
        g = stream(6)
        x = complex_gaussian(g, N, 3)
        theta = (x @ x.conj().T) / 3 + 0.5 * np.eye(N)
        theta *= N / np.trace(theta).real
        sqrt_th = np.linalg.cholesky(theta)
        p = DetEquivProblem(thetas=[theta], A=np.zeros((N, N)), Q=np.eye(N),
                            z=-1.0, counts=[N])
        m_pred = solve_fixed_point(p).m
        acc = 0.0
        for _ in range(draws):
            Y = complex_gaussian(g, N, N) / np.sqrt(N)
            X = sqrt_th @ Y
            B = X @ X.conj().T + np.eye(N)
            acc += np.trace(np.linalg.inv(B)).real / N
        assert abs(acc / draws - m_pred) / m_pred < 0.05


class TestPrimedSystem:
    def test_empty_correction(self):
        p = DetEquivProblem(thetas=[], A=0.5 * np.eye(3), Q=np.eye(3), z=-1.0)
        base = solve_fixed_point(p)
        omega = np.diag([1.0, 2.0, 3.0])
        pr = solve_primed(p, base, omega)
        assert np.allclose(pr.T_prime, base.T @ omega @ base.T)

    def test_scalar_derivative_matches_finite_difference(self):
        h = 1e-5
        base = solve_fixed_point(scalar_problem(6, 6), tol=1e-13)
        pr = solve_primed(scalar_problem(6, 6), base, np.eye(6))
        ep = solve_fixed_point(scalar_problem(6, 6, z=-1.0 + h), tol=1e-13).e[0]
        em = solve_fixed_point(scalar_problem(6, 6, z=-1.0 - h), tol=1e-13).e[0]
        assert abs(pr.e_prime[0] - (ep - em) / (2 * h)) < 1e-4

    def test_asymmetric_derivative_matches_finite_difference(self):
        p = random_problem(7, 3, seed=8)
        base = solve_fixed_point(p, tol=1e-13)
        pr = solve_primed(p, base, np.eye(7))
        h = 1e-6
        pp = DetEquivProblem(thetas=p.thetas, A=p.A, Q=p.Q, z=p.z + h)
        pm = DetEquivProblem(thetas=p.thetas, A=p.A, Q=p.Q, z=p.z - h)
        Tp = solve_fixed_point(pp, tol=1e-13).T
        Tm = solve_fixed_point(pm, tol=1e-13).T
        fd = (Tp - Tm) / (2 * h)
        assert np.max(np.abs(pr.T_prime - fd)) < 1e-6 * np.max(np.abs(fd))

    def test_t_prime_hermitian(self):
        p = random_problem(6, 4, seed=9)
        base = solve_fixed_point(p)
        pr = solve_primed(p, base, p.thetas[0])
        assert np.max(np.abs(pr.T_prime - pr.T_prime.conj().T)) < 1e-10


class TestSinrDetequiv:
    def test_mmse_high_snr_limit(self):
        sc = make_scenario(seed=1, L=1, K=1, M=512, T_c=500, snr_db=0.0,
                           pilot_boost=1e12, r_own=16,
                           model=CorrelationModel.PARTIAL_UNITARY)
        g = sinr_mmse_detequiv(sc, (0, 0))
        assert abs(g - 512.0) / 512.0 < 0.05

    def test_mmse_requires_orthogonal(self):
        sc = make_scenario(seed=2, L=2, K=2, M=32, r_own=4, pilot="nonorthogonal")
        with pytest.raises(DomainError):
            sinr_mmse_detequiv(sc, (0, 0))

    def test_contamination_scales_with_r_squared(self):
        from mimo_lab.beamform import assemble_Z
        from mimo_lab.detequiv import mmse_detequiv_problem
        from mimo_lab.training import EstimatorBank, projected_cov

        def contam(r_own):
            sc = make_scenario(seed=3 + r_own, L=4, K=2, M=512, snr_db=10.0,
                               r_own=r_own,
                               model=CorrelationModel.PARTIAL_UNITARY)
            bank = EstimatorBank.build(sc)
            est = bank.users[(0, 0)]
            prof = sc.profile(0, 0, 0)
            prob = mmse_detequiv_problem(sc, 0, 0, bank, assemble_Z(sc, 0, 0, bank))
            base = solve_fixed_point(prob)
            xlt = (est.xi * prof.lam[None, :]) @ base.T
            return sum(
                abs(np.trace(xlt @ projected_cov(sc, 0, 0, (0, lp, 0))) / prof.r) ** 2
                for lp in range(1, 4)
            )
        ratio = contam(16) / contam(8)
        assert 3.0 < ratio < 5.5

    def test_mmse_matches_monte_carlo(self):
        # reduced criterion-2 configuration
        sc = make_scenario(seed=4, L=4, K=10, M=200, T_c=500, snr_db=20.0,
                           r_own=10, model=CorrelationModel.PARTIAL_FOURIER)
        rep = run_bounds(sc, "ul", ("coherent",), 300, 42, "mmse", cells=[0])["coherent"]
        mc = np.mean([rep.mean_sinr[(0, k)] for k in range(10)])
        de = np.mean([sinr_mmse_detequiv(sc, (0, k)) for k in range(10)])
        assert abs(mc - de) / de < 0.10

    def test_mf_noiseless_limit(self):
        sc = make_scenario(seed=5, L=1, K=1, M=64, snr_db=0.0, pilot_boost=1e12,
                           r_own=16, pilot="nonorthogonal",
                           model=CorrelationModel.PARTIAL_UNITARY)
        g = sinr_mf_detequiv(sc, (0, 0))
        assert abs(g - 64.0) < 1e-6 * 64.0

    def test_mf_psi_finite(self):
        for seed in range(3):
            sc = make_scenario(seed=seed, L=3, K=4, M=100, snr_db=10.0, r_own=8,
                               pilot="nonorthogonal",
                               model=CorrelationModel.PARTIAL_FOURIER)
            g = sinr_mf_detequiv(sc, (0, 0))
            assert np.isfinite(g) and g > 0

    def test_mf_matches_monte_carlo_moment_ratio(self):
        # Fig.4-style configuration: moment-ratio MF SINR vs its limit
        from mimo_lab.channel import realize_block
        from mimo_lab.training import EstimatorBank, contaminators, observe, projection

        sc = make_scenario(seed=6, L=7, K=20, M=100, T_c=50, snr_db=20.0, r_own=8,
                           pilot="nonorthogonal",
                           model=CorrelationModel.PARTIAL_FOURIER)
        bank = EstimatorBank.build(sc)
        de = sinr_mf_detequiv(sc, (0, 0), bank)
        g = stream(7)
        trials = 300
        sig = np.empty(trials, dtype=complex)
        vnorm2 = np.empty(trials)
        interf = np.empty(trials)
        projs = {key: projection(sc, 0, 0, key) for key in contaminators(sc, 0, 0)}
        for t in range(trials):
            block = realize_block(sc, g)
            s = observe(block, sc, g)[(0, 0)]
            v = bank.users[(0, 0)].estimate(s).w_hat
            sig[t] = np.vdot(v, block.w[(0, 0, 0)])
            vnorm2[t] = np.vdot(v, v).real
            interf[t] = sum(abs(np.vdot(v, P @ block.w[key])) ** 2
                            for key, P in projs.items())
        mc = abs(sig.mean()) ** 2 / (vnorm2.mean() / sc.P_ul + interf.mean())
        assert abs(mc - de) / de < 0.15


class TestConcentrationChecks:
    def test_trace_lemma_identity_mean(self):
        g = stream(8)
        x = complex_gaussian(g, 1000, 256) / np.sqrt(256)
        quad = np.einsum("ti,ti->t", x.conj(), x).real
        assert abs(quad.mean() - 1.0) < 0.02

    def test_independent_vectors_second_moment(self):
        rep = concentration_check("IndependentVectors", [256, 512], 2000, stream(9))
        m = np.mean(rep.samples[512] ** 2)
        assert abs(m - 1.0 / 512) / (1.0 / 512) < 0.15

    def test_haar_product_decay(self):
        rep = concentration_check("HaarProduct", [64, 256], 150, stream(10))
        assert rep.mean_dev[1] < 2.0 * rep.mean_dev[0]

    def test_all_kinds_have_negative_slope(self):
        for kind in CONCENTRATION_KINDS:
            trials = 150 if kind in ("HaarProduct", "FourierProduct") else 400
            rep = concentration_check(kind, [64, 128, 256], trials, stream(11))
            assert rep.slope < -0.3, f"{kind} slope {rep.slope}"

    def test_dims_must_increase(self):
        with pytest.raises(ValueError):
            concentration_check("TraceLemma", [64, 64], 10, stream(12))


class TestBetaScalings:
    def test_scalar_beta_against_root_finder(self):
        # beta != 1 changes the fixed point; check against a direct solve of
        # e = theta / (beta (theta/(1+e) - z))
        from scipy.optimize import brentq
        theta, beta, z = 3.0, 2.0, -0.7
        p = DetEquivProblem(thetas=[np.array([[theta]])], A=np.zeros((1, 1)),
                            Q=np.eye(1), z=z, betas=np.array([beta]))
        e_solver = solve_fixed_point(p).e[0]
        f = lambda e: e - theta / (beta * (theta / (1 + e) - z))
        e_ref = brentq(f, 0.0, 100.0)
        assert abs(e_solver - e_ref) < 1e-9


class TestUnitaryModelAgreement:
    def test_mmse_detequiv_matches_mc_under_haar_bases(self):
        # the coherent-contamination term is non-degenerate for Haar bases
        # (projected covariances are never exactly zero)
        sc = make_scenario(seed=1, L=3, K=5, M=128, r_own=8, snr_db=15.0,
                           model=CorrelationModel.PARTIAL_UNITARY)
        rep = run_bounds(sc, "ul", ("coherent",), 600, 91, "mmse",
                         cells=[0])["coherent"]
        mc = np.mean([rep.mean_sinr[(0, k)] for k in range(5)])
        de = np.mean([sinr_mmse_detequiv(sc, (0, k)) for k in range(5)])
        assert abs(mc - de) / de < 0.10
