import itertools
import math
import unittest

import numpy as np
import numpy.testing as npt
import scipy.optimize

from cslab.basis import assemble_section
from cslab.errors import ValidationError
from cslab.grid import relative_l2_error
from cslab.sampling import LevelScheme, MeasurementOperator, SamplingPattern, draw_pattern, measure
from cslab.solver import (
    SolveRequest,
    findim_operator,
    operator_norm,
    solve_findim_baseline,
    solve_wqcbp,
)
from cslab.structure import balancing, best_sM_error, error_bounds, gripl_bruteforce, t_levels, unweighted
from cslab.walsh import fwht_sequency, truncated_walsh_series
from cslab.wavelet import WaveletSystem, synthesize


def _l1_oracle(A: np.ndarray, y: np.ndarray, w: np.ndarray = None) -> float:
    # min ||z||_{1,w} s.t. Az = y is attained on a support of m independent columns, try them all
    m, K = A.shape
    w = np.ones(K) if w is None else w
    best = math.inf
    for t in itertools.combinations(range(K), m):
        cols = list(t)
        z = np.linalg.solve(A[:, cols], y)
        best = min(best, float(np.sum(w[cols] * np.abs(z))))
    return best


def _ball_oracle(A: np.ndarray, y: np.ndarray, eta: float, w: np.ndarray) -> float:
    # min ||z||_{1,w} s.t. ||Az - y|| <= eta, same split, from the least-squares solution
    K = A.shape[1]
    B = np.hstack([A, -A])
    c = np.concatenate([w, w])
    z0 = np.linalg.lstsq(A, y, rcond=None)[0]
    res = scipy.optimize.minimize(
        lambda uv: float(c @ uv),
        np.concatenate([np.maximum(z0, 0.0), np.maximum(-z0, 0.0)]),
        jac=lambda uv: c,
        method="SLSQP",
        bounds=[(0, None)] * (2 * K),
        constraints=[
            {
                "type": "ineq",
                "fun": lambda uv: eta**2 - float(np.sum((B @ uv - y) ** 2)),
                "jac": lambda uv: -2.0 * (B @ uv - y) @ B,
            }
        ],
        options={"ftol": 1e-14, "maxiter": 2000},
    )
    return float(res.fun)


def _instance(seed: int, m: int = 4, K: int = 8) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, K)) / 2.0
    x0 = np.zeros(K)
    x0[rng.choice(K, size=m // 2, replace=False)] = rng.standard_normal(m // 2)
    return A, A @ x0


class TestRequest(unittest.TestCase):
    def test_validation(self):
        A = np.eye(3)
        w = np.ones(3)
        with self.assertRaises(ValidationError):
            SolveRequest(A, np.ones(2), 0.0, w)
        with self.assertRaises(ValidationError):
            SolveRequest(A, np.ones(3), 0.0, np.ones(2))
        with self.assertRaises(ValidationError):
            SolveRequest(A, np.ones(3), 0.0, np.array([1.0, 0.0, 1.0]))
        with self.assertRaises(ValidationError):
            SolveRequest(A, np.ones(3), -1.0, w)
        with self.assertRaises(ValidationError):
            SolveRequest(A, np.ones(3), 0.0, w, tol_feas=0.0)
        with self.assertRaises(ValidationError):
            SolveRequest(A, np.ones(3), 0.0, w, max_iters=0)

    def test_operator_norm(self):
        A = np.diag([3.0, 1.0, 0.5])
        self.assertAlmostEqual(operator_norm(SolveRequest(A, np.ones(3), 0.0, np.ones(3)).operator), 3.0, delta=1e-8)


class TestWQCBP(unittest.TestCase):
    def test_zero_is_feasible(self):
        req = SolveRequest(np.eye(2), np.array([0.3, 0.4]), 0.5, np.ones(2))
        rep = solve_wqcbp(req)
        self.assertTrue(rep.converged)
        self.assertEqual(rep.iterations, 0)
        npt.assert_array_equal(rep.xhat, np.zeros(2))
        self.assertEqual(rep.objective, 0.0)

    def test_infeasible_radius(self):
        A = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        y = np.array([1.0, 1.0, -1.0])
        rep = solve_wqcbp(SolveRequest(A, y, 0.0, np.ones(2)))
        self.assertEqual(rep.status, "infeasible_radius")
        self.assertFalse(rep.converged)
        self.assertEqual(rep.gap_estimate, math.inf)

    def test_against_oracles(self):
        for seed in range(50):
            m, K = (4, 8) if seed % 2 == 0 else (6, 12)
            A, y = _instance(seed, m, K)
            rng = np.random.default_rng(100 + seed)
            w = np.ones(K) if seed % 3 == 0 else rng.uniform(0.5, 2.0, K)
            eta = 0.0 if seed % 4 < 2 else 0.05
            if eta > 0:
                y = y + 0.02 * rng.standard_normal(m)
            req = SolveRequest(A, y, eta, w, tol_feas=1e-9, tol_gap=1e-7)
            rep = solve_wqcbp(req)
            oracle = _l1_oracle(A, y, w) if eta == 0 else _ball_oracle(A, y, eta, w)
            msg = "seed %d (%dx%d, eta=%g)" % (seed, m, K, eta)
            self.assertLessEqual(rep.residual_norm, rep.eta_effective * (1 + 1e-9) + 1e-15, msg=msg)
            if rep.converged:
                self.assertLessEqual(rep.gap_estimate, 1e-7 * max(1.0, rep.objective), msg=msg)
            self.assertAlmostEqual(rep.objective, oracle, delta=1e-4 * max(1.0, oracle), msg=msg)
            self.assertAlmostEqual(rep.objective, float(np.sum(w * np.abs(rep.xhat))), delta=1e-12)

    def test_weight_scaling(self):
        A, y = _instance(3)
        w = np.random.default_rng(3).uniform(0.5, 2.0, 8)
        a = solve_wqcbp(SolveRequest(A, y, 0.0, w, tol_feas=1e-9, tol_gap=1e-8))
        b = solve_wqcbp(SolveRequest(A, y, 0.0, 2.5 * w, tol_feas=1e-9, tol_gap=1e-8))
        self.assertAlmostEqual(b.objective, 2.5 * a.objective, delta=1e-4 * max(1.0, b.objective))
        npt.assert_allclose(b.xhat, a.xhat, atol=1e-4)

    def test_larger_radius_lowers_objective(self):
        A, y = _instance(5)
        w = np.random.default_rng(5).uniform(0.5, 2.0, 8)
        objs = []
        for eta in (1e-3, 1e-2, 5e-2, 1e-1):
            rep = solve_wqcbp(SolveRequest(A, y, eta, w, tol_gap=1e-7))
            self.assertLessEqual(rep.residual_norm, eta * (1 + 1e-6))
            objs.append(rep.objective)
        self.assertTrue(all(b <= a + 1e-8 for a, b in zip(objs, objs[1:])), msg=str(objs))

    def test_report_dict(self):
        rep = solve_wqcbp(SolveRequest(np.eye(2), np.zeros(2), 0.0, np.ones(2)))
        self.assertEqual(
            set(rep.to_dict().keys()),
            {"status", "iterations", "residual_norm", "objective", "gap_estimate", "eta_effective"},
        )


class TestHaarRecoveryChain(unittest.TestCase):
    # every row of a level is drawn, with unequal repeat counts, so A*A - I has
    # eigenvalues width * count / m - 1 on each level: at most 5/11 here
    LEVELS = (
        np.array([0, 0, 1, 1, 2, 3]),
        np.array([4, 4, 4, 5, 5, 5, 6, 6, 7, 7]),
        np.array([8, 8, 9, 9, 10, 10, 11, 12, 13, 14, 15]),
    )

    def setUp(self):
        self.sc = LevelScheme((4, 8, 16), (4, 8, 16), (1, 1, 2))
        self.sec = assemble_section(WaveletSystem.daubechies(1, 1), 16, 16)
        self.G = balancing(self.sec, 16, 16)
        self.w = unweighted(3)

    def test_gripl_at_t_levels(self):
        t = t_levels(self.sc, self.w, self.G)
        self.assertEqual(t, self.sc.widths)
        A = MeasurementOperator(SamplingPattern(self.sc, self.LEVELS), self.sec, 16).matrix
        delta = gripl_bruteforce(A, self.G, self.sc, s=t)
        self.assertAlmostEqual(delta, 5.0 / 11.0, delta=1e-10)
        self.assertLessEqual(delta, 0.5)
        # a level missing a row cannot resolve it
        short = self.LEVELS[:2] + (self.LEVELS[2][:-1],)
        A = MeasurementOperator(SamplingPattern(self.sc, short), self.sec, 16).matrix
        self.assertGreaterEqual(gripl_bruteforce(A, self.G, self.sc, s=t), 1.0 - 1e-10)

    def test_sparse_sign_vectors(self):
        sc, w = self.sc, self.w
        op = MeasurementOperator(SamplingPattern(sc, self.LEVELS), self.sec, 16)
        rng = np.random.default_rng(21)
        for _ in range(200):
            x = np.zeros(16)
            for l, sl in enumerate(sc.s, start=1):
                lo, hi = sc.sparsity_range(l)
                x[rng.choice(np.arange(lo, hi), size=sl, replace=False)] = rng.choice([-1.0, 1.0], size=sl)
            self.assertEqual(best_sM_error(x, sc, w), 0.0)
            y = measure(op, x).y
            req = SolveRequest(op.matrix, y, 0.0, w.column_weights(sc, 16), 1e-9, 1e-8, 50_000)
            rep = solve_wqcbp(req)
            _, l2 = error_bounds(0.0, rep.eta_effective, sc, w, self.G)
            err = float(np.linalg.norm(rep.xhat - x))
            self.assertLessEqual(err, 1e-6)
            self.assertLessEqual(err, l2)


class TestFunctionRecovery(unittest.TestCase):
    # a single DB4 scaling function at the coarsest scale, seen through 16 Walsh samples
    def setUp(self):
        self.sys = WaveletSystem.daubechies(4, 4)
        self.x = np.zeros(16)
        self.x[4] = 1.0
        self.reference = synthesize(self.sys, self.x, 12)

    def test_infinite_model_recovers(self):
        sc = LevelScheme((16,), (16,), (1,), (16,), r0=1)
        for K in (16, 32, 64):
            sec = assemble_section(self.sys, 16, K)
            op = MeasurementOperator(draw_pattern(sc, 0), sec, K)
            x = np.zeros(K)
            x[:16] = self.x
            y = measure(op, x).y
            rep = solve_wqcbp(SolveRequest(op.matrix, y, 1e-6, np.ones(K)))
            self.assertLessEqual(float(np.linalg.norm(rep.xhat - x)), 1e-3, msg="K=%d" % (K))
            recon = synthesize(self.sys, rep.xhat, 12)
            self.assertLessEqual(relative_l2_error(recon, self.reference), 2e-3, msg="K=%d" % (K))

    def test_finite_model_fails(self):
        sec = assemble_section(self.sys, 32, 16)
        rows = np.arange(16)
        y = sec.entries[rows] @ self.x
        recon, rep = solve_findim_baseline(self.sys, 5, rows, y, 1e-6)
        self.assertEqual(recon.depth, 5)
        self.assertGreaterEqual(relative_l2_error(recon.refine(12), self.reference), 0.05)

    def test_truncated_series_fails(self):
        sec = assemble_section(self.sys, 32, 16)
        recon = truncated_walsh_series(sec.entries @ self.x, 5)
        self.assertGreaterEqual(relative_l2_error(recon.refine(12), self.reference), 0.05)


class TestFiniteBaseline(unittest.TestCase):
    def test_full_sampling_matches_series(self):
        sys = WaveletSystem.daubechies(2, 2)
        f = np.random.default_rng(4).standard_normal(32)
        y = fwht_sequency(f, "analysis")
        recon, rep = solve_findim_baseline(sys, 5, np.arange(32), y, 0.0, tol_feas=1e-9, tol_gap=1e-8)
        series = truncated_walsh_series(y, 5)
        self.assertLessEqual(relative_l2_error(recon, series), 1e-3)

    def test_operator(self):
        sys = WaveletSystem.daubechies(1, 0)
        a, psi_inv = findim_operator(sys, 3, np.arange(8))
        # V Psi^-1 / 2^r is a scaled orthogonal matrix
        npt.assert_allclose(a.T @ a, np.eye(8) / 8, atol=1e-12)
        self.assertEqual(psi_inv.shape, (8, 8))
        with self.assertRaises(ValidationError):
            findim_operator(sys, 3, np.array([8]))
        with self.assertRaises(ValidationError):
            findim_operator(sys, 3, np.array([], dtype=np.int64))
