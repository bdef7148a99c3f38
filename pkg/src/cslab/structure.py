"""
Structured sparsity analysis: local coherences, the balancing property and the
Gram root G, G-adjusted restricted isometry constants in levels, weighted level
norms and the recovery bounds built from them.
"""

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

import cslab.log
import cslab.os
from cslab.basis import SectionMatrix, assemble_section
from cslab.errors import BalancingError, EnumerationCapError, ScanCapError, ValidationError
from cslab.sampling import LevelScheme
from cslab.wavelet import WaveletSystem

_logger = cslab.log.internal_logger()

ENUMERATION_CAP = 1_000_000
SUPPORT_BATCH = 4096
GRAM_TOL = 1e-10
DEFAULT_SCAN_CAP = 8

# error constants of the weighted recovery bound
ERROR_C = 2 * (2 + math.sqrt(3)) / (2 - math.sqrt(3))
ERROR_D = 8 * math.sqrt(2) / (2 - math.sqrt(3))


@dataclass(frozen=True)
class CoherenceTable:
    """
    mu[k-1, l-1] = max |U_ij|^2 over sampling level k (rows) and sparsity level l (columns).
    """

    mu: np.ndarray = field(repr=False)
    scheme: LevelScheme

    def __post_init__(self):
        if np.any(self.mu < 0):
            raise ValidationError("local coherences must be >= 0")

    def ratio_table(self) -> list[tuple[int, int, float]]:
        """
        ratios of consecutive sampling levels, laid out with rows k = 2..r and
        columns l = 1..min(3, k-1): entry (k, l) = mu_{k-1,l} / mu_{k,l}.
        """
        out = []
        for k in range(2, self.scheme.r + 1):
            for l in range(1, min(3, k - 1) + 1):
                den = self.mu[k - 1, l - 1]
                out.append((k, l, float(self.mu[k - 2, l - 1] / den) if den > 0 else math.inf))
        return out

    def decay_table(self, j0: int) -> np.ndarray:
        """mu_kl 2^(J0+k) 2^|l-k|, bounded for nu >= 3."""
        r = self.scheme.r
        k = np.arange(1, r + 1)[:, None]
        l = np.arange(1, r + 1)[None, :]
        return self.mu * 2.0 ** (j0 + k) * 2.0 ** np.abs(l - k)

    def decay_spreads(self, j0: int) -> list[float]:
        """per sparsity level l, max/min of the normalized table over k >= l."""
        t = self.decay_table(j0)
        out = []
        for l in range(self.scheme.r):
            col = t[l:, l]
            col = col[col > 0]
            out.append(float(col.max() / col.min()) if col.shape[0] > 0 else math.nan)
        return out


def local_coherence(sec: SectionMatrix, scheme: LevelScheme) -> CoherenceTable:
    """
    blockwise maxima of the squared section entries.

    Raises:
        ValidationError: if the section is smaller than (N_r, M_r).
    """
    if sec.rows < scheme.N[-1] or sec.cols < scheme.M[-1]:
        raise ValidationError(
            "section (%d, %d) smaller than the levels (%d, %d)"
            % (sec.rows, sec.cols, scheme.N[-1], scheme.M[-1])
        )
    sq = np.square(sec.entries)
    mu = np.zeros((scheme.r, scheme.r))
    for k in range(1, scheme.r + 1):
        r_lo, r_hi = scheme.sampling_range(k)
        for l in range(1, scheme.r + 1):
            c_lo, c_hi = scheme.sparsity_range(l)
            mu[k - 1, l - 1] = sq[r_lo:r_hi, c_lo:c_hi].max()
    return CoherenceTable(mu, scheme)


@dataclass(frozen=True)
class GramRoot:
    """
    G = sqrt(P_M U* P_N U P_M).

    Attributes:
        G (np.ndarray): M x M symmetric positive semidefinite root.
        gram (np.ndarray): the Gram matrix G^2 as assembled.
        eigenvalues (np.ndarray): ascending eigenvalues of the Gram matrix.
        theta (float): the balancing constant (smallest Gram eigenvalue).
        g_inv_norm (float): ||G^-1||_2.
        g_norm (float): ||G||_2.
    """

    G: np.ndarray = field(repr=False)
    gram: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray = field(repr=False)
    theta: float
    g_inv_norm: float
    g_norm: float

    @property
    def kappa(self) -> float:
        return self.g_norm * self.g_inv_norm

    @property
    def is_identity(self) -> bool:
        return bool(np.max(np.abs(self.G - np.eye(self.G.shape[0]))) <= 1e-12)


def identity_root(M: int) -> GramRoot:
    """G = I, for which the G-adjusted constants are the classical ones."""
    eye = np.eye(M)
    return GramRoot(eye, eye, np.ones(M), 1.0, 1.0, 1.0)


def balancing(sec: SectionMatrix, N: int, M: int) -> GramRoot:
    """
    the Gram root of the N x M section and its balancing constant.

    Args:
        sec (SectionMatrix): a section with at least N rows and M columns.
        N (int): sampling bandwidth.
        M (int): sparsity bandwidth, N >= M.

    Raises:
        BalancingError: if the smallest Gram eigenvalue is <= 0 to tolerance.

    Returns:
        GramRoot: G with theta and the norms of G and G^-1.
    """
    if N < M:
        raise ValidationError("balancing needs N >= M, got N=%d M=%d" % (N, M))
    a = sec.block(N, M)
    cslab.os.check_dense_allocation((M, M), "gram")
    gram = a.T @ a
    w, v = scipy.linalg.eigh(gram)
    lmin = float(w[0])
    lmax = float(w[-1])
    if lmax > 1.0 + GRAM_TOL + 2 * M * sec.entry_err:
        _logger.warning("gram eigenvalue %.12f above 1" % (lmax))
    if lmin <= GRAM_TOL:
        raise BalancingError(
            "balancing property fails for N=%d M=%d (smallest eigenvalue %.3g)" % (N, M, lmin)
        )
    root = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    g = GramRoot(
        G=0.5 * (root + root.T),
        gram=gram,
        eigenvalues=w,
        theta=lmin,
        g_inv_norm=1.0 / math.sqrt(lmin),
        g_norm=math.sqrt(lmax),
    )
    _logger.debug("balancing N=%d M=%d: theta=%.12f" % (N, M, lmin))
    return g


@dataclass(frozen=True)
class ScanResult:
    """
    Attributes:
        q (int): smallest q with theta(N = 2^(k+q)) >= target.
        trace (list[tuple[int, int, float]]): (q, N, theta) for every q scanned.
    """

    q: int
    trace: list


def balancing_scan(
    sys: WaveletSystem,
    k: int,
    theta_target: float,
    q_max: int = DEFAULT_SCAN_CAP,
    quality: int = None,
) -> ScanResult:
    """
    scans q = 0, 1, ... for the smallest oversampling N = 2^(k+q) balancing M = 2^k with theta_target.

    Args:
        sys (WaveletSystem): the wavelet system.
        k (int): log2 of M, k >= J0.
        theta_target (float): in (0, 1).
        q_max (int, optional): largest q tried. Defaults to DEFAULT_SCAN_CAP.
        quality (int, optional): section quality. Defaults to the section default.

    Raises:
        ScanCapError: if no q <= q_max meets the target (the trace is attached as .trace).

    Returns:
        ScanResult: q and the trace.
    """
    if not 0 < theta_target < 1:
        raise ValidationError("theta_target must be in (0, 1), got %g" % (theta_target))
    if k < sys.j0:
        raise ValidationError("M=2^%d is below the coarsest level 2^%d" % (k, sys.j0))
    M = 1 << k
    sec = assemble_section(sys, 1 << (k + q_max), M, quality=quality)
    trace = []
    for q in range(q_max + 1):
        N = 1 << (k + q)
        try:
            theta = balancing(sec, N, M).theta
        except BalancingError:
            theta = 0.0
        trace.append((q, N, theta))
        _logger.info("scan q=%d N=%d theta=%.9f" % (q, N, theta))
        if theta >= theta_target:
            return ScanResult(q, trace)

    ex = ScanCapError("no q <= %d reaches theta >= %g for M=%d" % (q_max, theta_target, M))
    ex.trace = trace
    raise ex


@dataclass(frozen=True)
class Weights:
    """
    level weights omega_1 .. omega_{r+1}, the last one for the tail (M_r, K].
    """

    values: tuple

    def __post_init__(self):
        v = tuple(float(x) for x in self.values)
        if len(v) < 2:
            raise ValidationError("weights need at least two levels, got %d" % (len(v)))
        if any(not (x > 0) or math.isinf(x) for x in v):
            raise ValidationError("weights must be positive and finite, got %s" % (list(v)))
        object.__setattr__(self, "values", v)

    @property
    def r(self) -> int:
        return len(self.values) - 1

    def level_weights(self) -> np.ndarray:
        return np.array(self.values[:-1])

    def S(self, s) -> float:
        """S_{omega,s} = sum_l omega_l^2 s_l."""
        return float(np.sum(self.level_weights() ** 2 * np.asarray(s, dtype=np.float64)))

    def zeta(self, s) -> float:
        """zeta_{s,omega} = min_l omega_l^2 s_l, over levels with s_l > 0."""
        s = np.asarray(s, dtype=np.float64)
        v = self.level_weights() ** 2 * s
        v = v[s > 0]
        return float(v.min()) if v.shape[0] > 0 else 0.0

    def column_weights(self, scheme: LevelScheme, K: int) -> np.ndarray:
        """the weight of each of the K columns."""
        if self.r != scheme.r:
            raise ValidationError("%d weights for %d levels" % (len(self.values), scheme.r))
        return np.array(self.values)[scheme.column_levels(K) - 1]

    def scaled(self, c: float) -> "Weights":
        return Weights(tuple(c * x for x in self.values))


def unweighted(r: int) -> Weights:
    return Weights(tuple(1.0 for _ in range(r + 1)))


def inverse_sqrt_weights(s, tail: float = 1.0) -> Weights:
    """omega_l = s_l^-1/2 (1 for empty levels), omega_{r+1} = tail."""
    return Weights(tuple((1.0 / math.sqrt(x) if x > 0 else 1.0) for x in s) + (tail,))


def _check_x(x: np.ndarray, scheme: LevelScheme) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] < scheme.M[-1]:
        raise ValidationError("vector of length %d is shorter than M_r=%d" % (x.shape[0], scheme.M[-1]))
    return x


def weighted_norm(x: np.ndarray, scheme: LevelScheme, w: Weights) -> float:
    """||x||_{1,omega} = sum_l omega_l ||x restricted to level l||_1, level r+1 being (M_r, K]."""
    x = _check_x(x, scheme)
    return float(np.sum(w.column_weights(scheme, x.shape[0]) * np.abs(x)))


def best_sM_term(x: np.ndarray, scheme: LevelScheme, s=None) -> np.ndarray:
    """
    keeps the s_l largest entries (ties to the lower index) of each level l <= r, zeroes the rest.
    """
    x = _check_x(x, scheme)
    s = scheme.s if s is None else s
    z = np.zeros_like(x)
    for l in range(1, scheme.r + 1):
        lo, hi = scheme.sparsity_range(l)
        order = np.argsort(-np.abs(x[lo:hi]), kind="stable")[: s[l - 1]]
        z[lo + order] = x[lo + order]
    return z


def best_sM_error(x: np.ndarray, scheme: LevelScheme, w: Weights, s=None) -> float:
    """sigma_{s,M}(x)_{1,omega}: the weighted norm of x minus its best (s,M)-term approximation."""
    x = _check_x(x, scheme)
    return weighted_norm(x - best_sM_term(x, scheme, s), scheme, w)


class SupportFamily:
    """
    the maximal supports with exactly s_l indices in each sparsity level.
    """

    def __init__(self, M, s):
        self.M = tuple(int(x) for x in M)
        self.s = tuple(int(x) for x in s)
        if len(self.M) != len(self.s):
            raise ValidationError("M and s need the same number of levels")
        self._ranges = [
            range(lo, hi) for lo, hi in zip((0,) + self.M[:-1], self.M)
        ]
        for rg, sl in zip(self._ranges, self.s):
            if sl < 0 or sl > len(rg):
                raise ValidationError("sparsity %d does not fit a level of width %d" % (sl, len(rg)))

    @property
    def size(self) -> int:
        """the support size sum_l s_l."""
        return sum(self.s)

    def count(self) -> int:
        return math.prod(math.comb(len(rg), sl) for rg, sl in zip(self._ranges, self.s))

    def __iter__(self):
        for parts in itertools.product(
            *[itertools.combinations(rg, sl) for rg, sl in zip(self._ranges, self.s)]
        ):
            yield np.fromiter(itertools.chain.from_iterable(parts), dtype=np.int64, count=self.size)

    def batches(self, batch: int = SUPPORT_BATCH):
        """yields (b, size) arrays of supports."""
        buf = []
        for t in self:
            buf.append(t)
            if len(buf) == batch:
                yield np.stack(buf)
                buf = []
        if len(buf) > 0:
            yield np.stack(buf)

    def sample(self, rng: np.random.Generator, trials: int) -> np.ndarray:
        """(trials, size) random maximal supports."""
        cols = []
        for rg, sl in zip(self._ranges, self.s):
            if sl == 0:
                continue
            keys = rng.random((trials, len(rg)))
            cols.append(rg.start + np.argsort(keys, axis=1)[:, :sl])
        if len(cols) == 0:
            return np.zeros((trials, 0), dtype=np.int64)
        return np.concatenate(cols, axis=1)


def _restricted_norms(d: np.ndarray, supports: np.ndarray) -> float:
    # max over the batch of ||P_T D P_T||_2
    if supports.shape[1] == 0:
        return 0.0
    blocks = d[supports[:, :, None], supports[:, None, :]]
    ev = np.linalg.eigvalsh(blocks)
    return float(np.max(np.abs(ev)))


def _difference(A: np.ndarray, G: GramRoot) -> np.ndarray:
    M = G.G.shape[0]
    A = np.asarray(A, dtype=np.float64)
    if A.shape[1] < M:
        raise ValidationError("A has %d columns, G is %dx%d" % (A.shape[1], M, M))
    a = A[:, :M]
    return a.T @ a - G.gram


def gripl_bruteforce(
    A: np.ndarray,
    G: GramRoot,
    scheme: LevelScheme,
    s=None,
    cap: int = ENUMERATION_CAP,
    workers: int = None,
) -> float:
    """
    delta_{s,M} = max over maximal (s,M) supports T of ||P_T (A*A - G^2) P_T||_2.

    Args:
        A (np.ndarray): the measurement matrix, its first M_r columns are used.
        G (GramRoot): the Gram root on M_r columns.
        scheme (LevelScheme): the sparsity levels.
        s (optional): sparsities overriding scheme.s (e.g. the t-levels).
        cap (int, optional): largest number of supports enumerated. Defaults to ENUMERATION_CAP.
        workers (int, optional): threads for the batched eigensolves. Defaults to None (serial).

    Raises:
        EnumerationCapError: if there are more than cap supports.

    Returns:
        float: the constant.
    """
    fam = SupportFamily(scheme.M, scheme.s if s is None else s)
    n = fam.count()
    if n > cap:
        raise EnumerationCapError("%d supports exceed the enumeration cap %d, use the probe" % (n, cap))
    d = _difference(A, G)
    if workers is not None and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            delta = max(pool.map(lambda b: _restricted_norms(d, b), fam.batches()), default=0.0)
    else:
        delta = max((_restricted_norms(d, b) for b in fam.batches()), default=0.0)
    _logger.debug("gripl over %d supports of size %d: %.6g" % (n, fam.size, delta))
    return delta


def gripl_probe(
    A: np.ndarray,
    G: GramRoot,
    scheme: LevelScheme,
    trials: int,
    seed: int = None,
    s=None,
) -> float:
    """
    a lower bound on delta_{s,M} from randomly drawn maximal supports; when
    trials covers every support the supports are enumerated instead.
    """
    if trials < 1:
        raise ValidationError("trials must be >= 1, got %d" % (trials))
    fam = SupportFamily(scheme.M, scheme.s if s is None else s)
    if trials >= fam.count():
        return gripl_bruteforce(A, G, scheme, s=s, cap=trials)
    d = _difference(A, G)
    rng = np.random.default_rng(seed)
    delta = 0.0
    for start in range(0, trials, SUPPORT_BATCH):
        b = fam.sample(rng, min(SUPPORT_BATCH, trials - start))
        delta = max(delta, _restricted_norms(d, b))
    return delta


def tail_norm(A: np.ndarray, M: int, K: int) -> float:
    """||A P_K^M||_{1->2}: the largest column norm among columns M .. K-1."""
    A = np.asarray(A, dtype=np.float64)
    if K <= M:
        return 0.0
    return float(np.max(np.linalg.norm(A[:, M:K], axis=0)))


def recommended_weights(scheme: LevelScheme, A: np.ndarray, G: GramRoot, K: int) -> Weights:
    """
    omega_l = s_l^-1/2 and omega_{r+1} = sqrt(r) (1/(3(1 + r^1/4)) + 2 sqrt(2/theta) ||A P_K^M||_{1->2}).
    """
    if G.theta <= 0:
        raise BalancingError("theta must be > 0, got %g" % (G.theta))
    r = scheme.r
    t = tail_norm(A, scheme.M[-1], K)
    tail = math.sqrt(r) * (1.0 / (3.0 * (1.0 + r**0.25)) + 2.0 * math.sqrt(2.0 / G.theta) * t)
    return inverse_sqrt_weights(scheme.s, tail)


def tail_weight_bound(
    scheme: LevelScheme, w: Weights, A: np.ndarray, G: GramRoot, K: int, s=None
) -> float:
    """
    the smallest admissible tail weight for arbitrary level weights:
    sqrt(S) (1/(3(1 + (S/zeta)^1/4)) + 2 sqrt(2) ||A P_K^M||_{1->2} ||G^-1||_2).
    """
    s = scheme.s if s is None else s
    S = w.S(s)
    z = w.zeta(s)
    if z <= 0:
        raise ValidationError("zeta is 0, every level is empty")
    t = tail_norm(A, scheme.M[-1], K)
    return math.sqrt(S) * (
        1.0 / (3.0 * (1.0 + (S / z) ** 0.25)) + 2.0 * math.sqrt(2.0) * t * G.g_inv_norm
    )


def t_levels(scheme: LevelScheme, w: Weights, G: GramRoot, s=None) -> tuple:
    """
    t_l = min(M_l - M_{l-1}, 2 ceil(4 kappa(G)^2 S_{omega,s} / omega_l^2)).
    """
    s = scheme.s if s is None else s
    S = w.S(s)
    k2 = G.kappa**2
    out = []
    for width, om in zip(scheme.sparsity_widths, w.level_weights()):
        out.append(min(width, 2 * math.ceil(4.0 * k2 * S / om**2 - 1e-9)))
    return tuple(out)


def error_bounds(
    sigma: float, eta: float, scheme: LevelScheme, w: Weights, G: GramRoot, s=None
) -> tuple[float, float]:
    """
    the weighted l1 and l2 error bounds of the weighted decoder:

        ||x - x^||_{1,omega} <= C sigma + D ||G^-1|| sqrt(S) eta
        ||x - x^||_2 <= (1 + (S/zeta)^1/4) (C sigma / sqrt(S) + D ||G^-1|| eta)

    Returns:
        tuple[float, float]: (weighted l1 bound, l2 bound).
    """
    s = scheme.s if s is None else s
    S = w.S(s)
    z = w.zeta(s)
    if S <= 0 or z <= 0:
        raise ValidationError("S and zeta must be > 0")
    gi = G.g_inv_norm
    l1 = ERROR_C * sigma + ERROR_D * gi * math.sqrt(S) * eta
    l2 = (1.0 + (S / z) ** 0.25) * (ERROR_C * sigma / math.sqrt(S) + ERROR_D * gi * eta)
    return l1, l2
