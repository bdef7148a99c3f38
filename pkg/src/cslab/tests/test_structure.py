import math
import unittest

import numpy as np
import numpy.testing as npt

from cslab.basis import COHERENCE_EXTRA_DEPTH, assemble_section, coherence_section
from cslab.errors import EnumerationCapError, ScanCapError, ValidationError
from cslab.sampling import LevelScheme, MeasurementOperator, SamplingPattern, draw_pattern
from cslab.structure import (
    ERROR_C,
    ERROR_D,
    SupportFamily,
    Weights,
    balancing,
    balancing_scan,
    best_sM_error,
    best_sM_term,
    error_bounds,
    gripl_bruteforce,
    gripl_probe,
    identity_root,
    inverse_sqrt_weights,
    local_coherence,
    recommended_weights,
    t_levels,
    tail_norm,
    tail_weight_bound,
    unweighted,
    weighted_norm,
)
from cslab.wavelet import WaveletSystem

# consecutive-level coherence ratios, (k, l) -> mu_{k-1,l} / mu_{k,l}
DB2_RATIOS = {
    (2, 1): 3.017,
    (3, 1): 2.532, (3, 2): 1.854,
    (4, 1): 3.292, (4, 2): 2.532, (4, 3): 1.846,
    (5, 1): 3.653, (5, 2): 3.293, (5, 3): 2.534,
    (6, 1): 3.828, (6, 2): 3.653, (6, 3): 3.293,
    (7, 1): 3.914, (7, 2): 3.828, (7, 3): 3.654,
    (8, 1): 3.957, (8, 2): 3.914, (8, 3): 3.828,
}  # fmt: skip

DB4_RATIOS = {
    (2, 1): 4.342,
    (3, 1): 6.160, (3, 2): 3.439,
    (4, 1): 3.643, (4, 2): 6.202, (4, 3): 3.503,
    (5, 1): 4.060, (5, 2): 3.639, (5, 3): 6.286,
    (6, 1): 3.961, (6, 2): 4.064, (6, 3): 3.632,
    (7, 1): 4.004, (7, 2): 3.960, (7, 3): 4.070,
    (8, 1): 3.996, (8, 2): 4.004, (8, 3): 3.960,
}  # fmt: skip


def _dyadic_scheme(j0: int, r: int) -> LevelScheme:
    levels = tuple(1 << (j0 + k) for k in range(1, r + 1))
    return LevelScheme(levels, levels, (1,) * r)


def _ratios(nu: int, j0: int, r: int, averaging: str = "exact") -> dict:
    sc = _dyadic_scheme(j0, r)
    sys = WaveletSystem.daubechies(nu, j0)
    if averaging == "exact":
        sec = assemble_section(sys, sc.N[-1], sc.M[-1])
    else:
        sec = coherence_section(sys, sc.N[-1], sc.M[-1])
    return {(k, l): v for k, l, v in local_coherence(sec, sc).ratio_table()}


class TestCoherence(unittest.TestCase):
    def test_haar_is_diagonal(self):
        for j0 in range(3):
            sc = _dyadic_scheme(j0, 6)
            sec = assemble_section(WaveletSystem.daubechies(1, j0), sc.N[-1], sc.M[-1])
            mu = local_coherence(sec, sc).mu
            expected = np.diag([2.0 ** (-j0 - k + 1) for k in range(1, 7)])
            npt.assert_allclose(mu, expected, atol=1e-12)

    def test_db2_ratios(self):
        got = _ratios(2, 3, 8)
        self.assertEqual(set(got.keys()), set(DB2_RATIOS.keys()))
        for key, v in DB2_RATIOS.items():
            self.assertAlmostEqual(got[key], v, delta=2e-2, msg=str(key))
            self.assertLess(got[key], 4.0)

    def test_db4_ratios(self):
        got = _ratios(4, 4, 8, "oversampled")
        self.assertEqual(set(got.keys()), set(DB4_RATIOS.keys()))
        for key, v in DB4_RATIOS.items():
            self.assertAlmostEqual(got[key], v, delta=5e-2, msg=str(key))
        near = [v for v in got.values() if v >= 3.9]
        self.assertGreaterEqual(2 * len(near), len(got))

    def test_coherence_section_route(self):
        sys = WaveletSystem.daubechies(2, 2)
        sec = coherence_section(sys, 32, 32)
        self.assertEqual(sec.averaging, "oversampled")
        self.assertEqual(sec.quality, 5 + COHERENCE_EXTRA_DEPTH)
        exact = coherence_section(sys, 32, 32, quality=5, averaging="exact")
        self.assertEqual((exact.averaging, exact.quality), ("exact", 5))
        npt.assert_allclose(exact.entries, assemble_section(sys, 32, 32).entries, atol=1e-14)

    def test_db4_decay(self):
        sc = _dyadic_scheme(4, 5)
        sec = assemble_section(WaveletSystem.daubechies(4, 4), sc.N[-1], sc.M[-1])
        spreads = local_coherence(sec, sc).decay_spreads(4)
        self.assertEqual(len(spreads), 5)
        for v in spreads[:-1]:
            self.assertLessEqual(v, 2.0)
        # a single entry in the last column
        self.assertEqual(spreads[-1], 1.0)

    def test_section_too_small(self):
        sc = _dyadic_scheme(1, 3)
        sec = assemble_section(WaveletSystem.daubechies(1, 1), 8, 8)
        with self.assertRaises(ValidationError):
            local_coherence(sec, sc)


class TestBalancing(unittest.TestCase):
    def test_haar_is_identity(self):
        sec = assemble_section(WaveletSystem.daubechies(1, 1), 32, 32)
        g = balancing(sec, 32, 32)
        self.assertAlmostEqual(g.theta, 1.0, delta=1e-10)
        self.assertTrue(g.is_identity)
        self.assertAlmostEqual(g.kappa, 1.0, delta=1e-10)

    def test_db4_oversampling(self):
        sys = WaveletSystem.daubechies(4, 4)
        for M in (32, 64):
            sec = assemble_section(sys, 32 * M, M)
            thetas = []
            for n in (2 * M, 4 * M, 8 * M, 16 * M, 32 * M):
                g = balancing(sec, n, M)
                a = sec.entries[:n, :M]
                oracle = float(np.linalg.eigvalsh(a.T @ a)[0])
                self.assertAlmostEqual(g.theta, oracle, delta=1e-10)
                self.assertLessEqual(g.g_inv_norm, 1.0 / math.sqrt(g.theta) + 1e-10)
                npt.assert_allclose(g.G @ g.G, g.gram, atol=1e-10)
                thetas.append(g.theta)
            self.assertTrue(all(b >= a - 1e-12 for a, b in zip(thetas, thetas[1:])), msg=str(thetas))
            self.assertLessEqual(thetas[-1], 1.0 + 1e-10)

    def test_needs_oversampling(self):
        sec = assemble_section(WaveletSystem.daubechies(2, 2), 16, 16)
        with self.assertRaises(ValidationError):
            balancing(sec, 8, 16)

    def test_identity_root(self):
        g = identity_root(4)
        self.assertTrue(g.is_identity)
        self.assertEqual((g.theta, g.g_inv_norm, g.kappa), (1.0, 1.0, 1.0))


class TestBalancingScan(unittest.TestCase):
    def test_haar_needs_no_oversampling(self):
        res = balancing_scan(WaveletSystem.daubechies(1, 1), 3, 0.9, q_max=2)
        self.assertEqual(res.q, 0)
        self.assertEqual(len(res.trace), 1)
        self.assertEqual(res.trace[0][:2], (0, 8))

    def test_db4_trace(self):
        res = balancing_scan(WaveletSystem.daubechies(4, 4), 4, 0.5, q_max=4)
        qs = [t[0] for t in res.trace]
        self.assertEqual(qs, list(range(res.q + 1)))
        self.assertGreaterEqual(res.trace[-1][2], 0.5)
        self.assertTrue(all(t[2] < 0.5 for t in res.trace[:-1]))

    def test_cap(self):
        with self.assertRaises(ScanCapError) as cm:
            balancing_scan(WaveletSystem.daubechies(4, 4), 4, 0.99999, q_max=0)
        self.assertEqual(len(cm.exception.trace), 1)

    def test_invalid(self):
        with self.assertRaises(ValidationError):
            balancing_scan(WaveletSystem.daubechies(1, 1), 3, 1.0)
        with self.assertRaises(ValidationError):
            balancing_scan(WaveletSystem.daubechies(4, 4), 3, 0.5)


class TestWeights(unittest.TestCase):
    def test_sums(self):
        w = Weights((1.0, 0.5, 2.0))
        self.assertEqual(w.r, 2)
        self.assertAlmostEqual(w.S((2, 4)), 3.0)
        self.assertAlmostEqual(w.zeta((2, 4)), 1.0)
        self.assertAlmostEqual(w.zeta((0, 4)), 1.0)
        self.assertEqual(w.zeta((0, 0)), 0.0)
        self.assertEqual(w.scaled(2.0).values, (2.0, 1.0, 4.0))

    def test_column_weights(self):
        sc = LevelScheme((4, 8), (2, 4), (1, 1))
        w = Weights((1.0, 2.0, 3.0))
        npt.assert_array_equal(w.column_weights(sc, 6), [1, 1, 2, 2, 3, 3])
        with self.assertRaises(ValidationError):
            Weights((1.0, 1.0, 1.0, 1.0)).column_weights(sc, 6)

    def test_invalid(self):
        with self.assertRaises(ValidationError):
            Weights((1.0,))
        with self.assertRaises(ValidationError):
            Weights((1.0, 0.0))
        with self.assertRaises(ValidationError):
            Weights((1.0, math.inf))

    def test_inverse_sqrt(self):
        w = inverse_sqrt_weights((4, 0, 1), tail=0.5)
        self.assertEqual(w.values, (0.5, 1.0, 1.0, 0.5))
        self.assertEqual(unweighted(2).values, (1.0, 1.0, 1.0))


class TestNorms(unittest.TestCase):
    def test_best_term(self):
        sc = LevelScheme((3,), (3,), (1,))
        x = np.array([3.0, 1.0, -2.0])
        npt.assert_array_equal(best_sM_term(x, sc), [3.0, 0.0, 0.0])
        self.assertEqual(best_sM_error(x, sc, unweighted(1)), 3.0)

    def test_levels_and_tail(self):
        sc = LevelScheme((4, 8), (2, 4), (1, 1))
        x = np.array([1.0, -5.0, 2.0, 2.0, 7.0, -1.0])
        w = Weights((1.0, 2.0, 3.0))
        self.assertAlmostEqual(weighted_norm(x, sc, w), 6 + 2 * 4 + 3 * 8)
        npt.assert_array_equal(best_sM_term(x, sc), [0, -5, 2, 0, 0, 0])
        # ties go to the lower index, the tail is never kept
        self.assertAlmostEqual(best_sM_error(x, sc, w), 1 + 2 * 2 + 3 * 8)
        with self.assertRaises(ValidationError):
            weighted_norm(np.ones(3), sc, w)

    def test_sparse_vector_has_no_error(self):
        sc = LevelScheme((4, 8), (4, 8), (1, 2))
        x = np.zeros(8)
        x[2] = 1.0
        x[[4, 7]] = (-3.0, 0.5)
        self.assertEqual(best_sM_error(x, sc, unweighted(2)), 0.0)


class TestSupportFamily(unittest.TestCase):
    def test_count_and_iter(self):
        fam = SupportFamily((2, 4, 8), (1, 1, 2))
        self.assertEqual(fam.count(), 24)
        self.assertEqual(fam.size, 4)
        supports = list(fam)
        self.assertEqual(len(supports), 24)
        self.assertEqual(len({tuple(t) for t in supports}), 24)
        for t in supports:
            self.assertTrue(t[0] < 2 and 2 <= t[1] < 4 and 4 <= t[2] < t[3] < 8)

    def test_batches(self):
        fam = SupportFamily((2, 4, 8), (1, 1, 2))
        sizes = [b.shape for b in fam.batches(10)]
        self.assertEqual(sizes, [(10, 4), (10, 4), (4, 4)])

    def test_sample(self):
        fam = SupportFamily((2, 4, 8), (1, 0, 2))
        t = fam.sample(np.random.default_rng(0), 500)
        self.assertEqual(t.shape, (500, 3))
        self.assertTrue(np.all(t[:, 0] < 2))
        self.assertTrue(np.all((t[:, 1:] >= 4) & (t[:, 1:] < 8)))
        self.assertTrue(np.all(t[:, 1] != t[:, 2]))

    def test_invalid(self):
        with self.assertRaises(ValidationError):
            SupportFamily((2, 4), (3, 1))
        with self.assertRaises(ValidationError):
            SupportFamily((2, 4), (1,))


class TestGRIPL(unittest.TestCase):
    def setUp(self):
        self.sec = assemble_section(WaveletSystem.daubechies(1, 1), 8, 8)
        self.G = balancing(self.sec, 8, 8)

    def test_full_sampling(self):
        sc = LevelScheme((2, 4, 8), (2, 4, 8), (1, 1, 2), (2, 2, 4))
        op = MeasurementOperator(draw_pattern(sc, 0), self.sec, 8)
        self.assertLessEqual(gripl_bruteforce(op.matrix, self.G, sc), 1e-10)

    def test_against_random_vectors(self):
        sc = LevelScheme((2, 4, 8), (2, 4, 8), (1, 1, 2))
        levels = (np.arange(2), np.arange(2, 4), np.array([4, 4, 5, 6, 6, 7]))
        op = MeasurementOperator(SamplingPattern(sc, levels), self.sec, 8)
        A = op.matrix
        delta = gripl_bruteforce(A, self.G, sc, workers=2)
        self.assertGreater(delta, 0.0)

        rng = np.random.default_rng(12)
        t = SupportFamily(sc.M, sc.s).sample(rng, 100_000)
        z = rng.standard_normal(t.shape)
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        az = np.einsum("nij,nj->ni", A[:, t].transpose(1, 0, 2), z)
        gz = np.einsum("nij,nj->ni", self.G.G[:, t].transpose(1, 0, 2), z)
        gaps = np.abs(np.sum(az**2, axis=1) - np.sum(gz**2, axis=1))
        self.assertLessEqual(float(gaps.max()), delta + 1e-12)
        self.assertLessEqual(delta - float(gaps.max()), 5e-2)

    def test_probe_is_lower_bound(self):
        sc = LevelScheme((2, 4, 8), (2, 4, 8), (1, 1, 2), (1, 1, 3))
        A = MeasurementOperator(draw_pattern(sc, 3), self.sec, 8).matrix
        delta = gripl_bruteforce(A, self.G, sc)
        self.assertLessEqual(gripl_probe(A, self.G, sc, 10, seed=1), delta + 1e-12)
        # enough trials to cover the family enumerates it
        self.assertAlmostEqual(gripl_probe(A, self.G, sc, 24, seed=1), delta, delta=1e-12)

    def test_cap(self):
        sc = LevelScheme((2, 4, 8), (2, 4, 8), (1, 1, 2), (2, 2, 4))
        A = MeasurementOperator(draw_pattern(sc, 0), self.sec, 8).matrix
        with self.assertRaises(EnumerationCapError):
            gripl_bruteforce(A, self.G, sc, cap=10)
        with self.assertRaises(ValidationError):
            gripl_probe(A, self.G, sc, 0)

    def test_larger_sparsity_is_larger(self):
        sc = LevelScheme((2, 4, 8), (2, 4, 8), (1, 1, 2), (1, 1, 3))
        A = MeasurementOperator(draw_pattern(sc, 5), self.sec, 8).matrix
        small = gripl_bruteforce(A, self.G, sc)
        large = gripl_bruteforce(A, self.G, sc, s=(2, 2, 4))
        self.assertGreaterEqual(large, small - 1e-12)


class TestBounds(unittest.TestCase):
    def setUp(self):
        self.sec = assemble_section(WaveletSystem.daubechies(1, 1), 16, 16)
        self.sc = LevelScheme((4, 16), (4, 8), (1, 2), (4, 12))
        self.A = MeasurementOperator(draw_pattern(self.sc, 0), self.sec, 16).matrix
        self.G = balancing(self.sec, 16, 8)

    def test_tail_norm(self):
        self.assertAlmostEqual(tail_norm(self.A, 8, 16), 1.0, delta=1e-12)
        self.assertEqual(tail_norm(self.A, 8, 8), 0.0)

    def test_recommended_weights(self):
        sc = LevelScheme((4,), (4,), (1,))
        w = recommended_weights(sc, self.A, identity_root(4), 4)
        npt.assert_allclose(w.values, (1.0, 1.0 / 6.0))
        w = recommended_weights(self.sc, self.A, self.G, 16)
        r = 2
        expected = math.sqrt(r) * (1 / (3 * (1 + r**0.25)) + 2 * math.sqrt(2))
        self.assertAlmostEqual(w.values[-1], expected, delta=1e-10)
        self.assertAlmostEqual(w.values[1], 1 / math.sqrt(2))

    def test_tail_bound_matches_recommended(self):
        w = recommended_weights(self.sc, self.A, self.G, 16)
        bound = tail_weight_bound(self.sc, w, self.A, self.G, 16)
        self.assertAlmostEqual(bound, w.values[-1], delta=1e-10)

    def test_t_levels(self):
        g = identity_root(16)
        sc = LevelScheme((4, 8, 16), (4, 8, 16), (1, 1, 2))
        self.assertEqual(t_levels(sc, unweighted(3), g), (4, 4, 8))
        sc = LevelScheme((64, 128), (64, 128), (1, 1))
        self.assertEqual(t_levels(sc, unweighted(2), identity_root(128)), (16, 16))
        w = inverse_sqrt_weights((4, 1))
        # S = 2, t_1 = 2 ceil(8 * 4), t_2 = 2 ceil(8)
        self.assertEqual(t_levels(sc, w, identity_root(128), s=(4, 1)), (64, 16))

    def test_error_bounds(self):
        sc = LevelScheme((4,), (4,), (3,))
        l1, l2 = error_bounds(0.0, 1.0, sc, unweighted(1), identity_root(4))
        self.assertAlmostEqual(l1, ERROR_D * math.sqrt(3), delta=1e-12)
        self.assertAlmostEqual(l2, 2 * ERROR_D, delta=1e-12)
        l1, _ = error_bounds(1.0, 0.0, sc, unweighted(1), identity_root(4))
        self.assertAlmostEqual(l1, ERROR_C, delta=1e-12)
        self.assertAlmostEqual(ERROR_C, 2 * (2 + math.sqrt(3)) / (2 - math.sqrt(3)))
        with self.assertRaises(ValidationError):
            error_bounds(0.0, 1.0, LevelScheme((4,), (4,), (0,)), unweighted(1), identity_root(4))
