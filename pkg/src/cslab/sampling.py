"""
Multilevel random subsampling, the scaled measurement operator and sample allocation.

Sampling level k covers the Walsh sequencies N_{k-1} .. N_k - 1 (0-based,
N_0 = 0); it draws m_k of them uniformly with replacement, and its rows are
scaled by 1/sqrt(p_k), p_k = m_k / (N_k - N_{k-1}).
"""

import math
from dataclasses import dataclass, field

import numpy as np

import cslab.file
import cslab.log
from cslab.basis import SectionMatrix
from cslab.errors import ValidationError

_logger = cslab.log.internal_logger()

MAX_FIXED_POINT_ITERATIONS = 8


def _strictly_increasing(v: tuple, name: str) -> None:
    if len(v) == 0:
        raise ValidationError("%s must not be empty" % (name))
    if v[0] < 1 or any(b <= a for a, b in zip(v, v[1:])):
        raise ValidationError("%s must be positive and strictly increasing, got %s" % (name, list(v)))


@dataclass(frozen=True)
class LevelScheme:
    """
    sampling levels (N, m) and sparsity levels (M, s).

    Attributes:
        N (tuple[int]): sampling bandwidths N_1 < ... < N_r.
        M (tuple[int]): sparsity bandwidths M_1 < ... < M_r.
        s (tuple[int]): local sparsities.
        m (tuple[int] | None): local sample counts, None when still to be allocated.
        r0 (int): number of fully sampled (saturated) leading levels.
    """

    N: tuple
    M: tuple
    s: tuple
    m: tuple = None
    r0: int = 0

    def __post_init__(self):
        for name in ("N", "M", "s", "m"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, tuple(int(x) for x in v))
        _strictly_increasing(self.N, "N")
        _strictly_increasing(self.M, "M")
        r = len(self.N)
        if len(self.M) != r or len(self.s) != r:
            raise ValidationError(
                "N, M and s need the same number of levels, got %d, %d, %d"
                % (r, len(self.M), len(self.s))
            )
        if self.r0 < 0 or self.r0 > r:
            raise ValidationError("r0 must be in [0, %d], got %d" % (r, self.r0))
        for l, (sl, w) in enumerate(zip(self.s, self.sparsity_widths)):
            if sl < 0 or sl > w:
                raise ValidationError("s_%d=%d must be in [0, %d]" % (l + 1, sl, w))
        if self.m is not None:
            if len(self.m) != r:
                raise ValidationError("m needs %d levels, got %d" % (r, len(self.m)))
            for k, (mk, w) in enumerate(zip(self.m, self.widths)):
                if mk < 0 or mk > w:
                    raise ValidationError("m_%d=%d must be in [0, %d]" % (k + 1, mk, w))
                if k < self.r0 and mk != w:
                    raise ValidationError("level %d is saturated, m_%d must be %d" % (k + 1, k + 1, w))

    @property
    def r(self) -> int:
        return len(self.N)

    @property
    def widths(self) -> tuple:
        """N_k - N_{k-1}."""
        return tuple(b - a for a, b in zip((0,) + self.N[:-1], self.N))

    @property
    def sparsity_widths(self) -> tuple:
        """M_l - M_{l-1}."""
        return tuple(b - a for a, b in zip((0,) + self.M[:-1], self.M))

    def sampling_range(self, k: int) -> tuple[int, int]:
        """0-based half-open row range of sampling level k (1-based)."""
        return (0 if k == 1 else self.N[k - 2]), self.N[k - 1]

    def sparsity_range(self, l: int) -> tuple[int, int]:
        """0-based half-open column range of sparsity level l (1-based)."""
        return (0 if l == 1 else self.M[l - 2]), self.M[l - 1]

    def column_levels(self, K: int) -> np.ndarray:
        """1-based sparsity level of each of K columns, r + 1 beyond M_r."""
        if K < self.M[-1]:
            raise ValidationError("K=%d is below M_r=%d" % (K, self.M[-1]))
        return np.searchsorted(np.array(self.M), np.arange(K), side="right") + 1

    def with_m(self, m) -> "LevelScheme":
        return LevelScheme(self.N, self.M, self.s, tuple(m), self.r0)

    def with_s(self, s) -> "LevelScheme":
        return LevelScheme(self.N, self.M, tuple(s), self.m, self.r0)

    @property
    def total_sparsity(self) -> int:
        return int(sum(self.s))


@dataclass(frozen=True)
class SamplingPattern:
    """
    the multiset of sampled rows, per level.

    Attributes:
        scheme (LevelScheme): the scheme the pattern was drawn from.
        levels (tuple[np.ndarray]): 0-based row indices of each level (repeats allowed).
        seed (int): the generator seed.
    """

    scheme: LevelScheme
    levels: tuple
    seed: int = None

    @property
    def probabilities(self) -> np.ndarray:
        """p_k = m_k / (N_k - N_{k-1})."""
        return np.array([len(o) / w for o, w in zip(self.levels, self.scheme.widths)])

    @property
    def rows(self) -> np.ndarray:
        return np.concatenate([np.asarray(o, dtype=np.int64) for o in self.levels])

    @property
    def row_levels(self) -> np.ndarray:
        """1-based level of each sampled row."""
        return np.concatenate(
            [np.full(len(o), k + 1, dtype=np.int64) for k, o in enumerate(self.levels)]
        )

    @property
    def scales(self) -> np.ndarray:
        """1/sqrt(p_k) for each sampled row."""
        return np.concatenate(
            [
                np.full(len(o), math.sqrt(w / len(o)) if len(o) > 0 else 0.0)
                for o, w in zip(self.levels, self.scheme.widths)
            ]
        )

    def write_csv(self, path: str) -> int:
        """columns level (1-based), row_index (0-based sequency)."""
        return cslab.file.write_csv(path, ["level", "row_index"], zip(self.row_levels, self.rows))


def draw_pattern(scheme: LevelScheme, seed: int = None) -> SamplingPattern:
    """
    draws a multilevel pattern: saturated levels are the full range and use no
    randomness, the others draw m_k rows uniformly with replacement.

    Args:
        scheme (LevelScheme): the scheme, m must be set.
        seed (int, optional): generator seed.

    Returns:
        SamplingPattern: the pattern.
    """
    if scheme.m is None:
        raise ValidationError("the scheme has no sample counts, allocate them first")
    rng = np.random.default_rng(seed)
    levels = []
    for k in range(1, scheme.r + 1):
        lo, hi = scheme.sampling_range(k)
        mk = scheme.m[k - 1]
        if k <= scheme.r0 or mk == hi - lo:
            levels.append(np.arange(lo, hi, dtype=np.int64))
        else:
            levels.append(np.sort(rng.integers(lo, hi, size=mk)))
    return SamplingPattern(scheme, tuple(levels), seed)


@dataclass(frozen=True)
class Measurement:
    """
    Attributes:
        y (np.ndarray): the measurements, D P_Omega U x + e.
        truncation (np.ndarray): the component D P_Omega U P_K^perp x.
    """

    y: np.ndarray
    truncation: np.ndarray

    @property
    def truncation_norm(self) -> float:
        return float(np.linalg.norm(self.truncation))


@dataclass(frozen=True)
class MeasurementOperator:
    """
    H = D P_Omega U restricted to the first K columns.

    Attributes:
        pattern (SamplingPattern): the sampled rows.
        section (SectionMatrix): a section with at least N_r rows and K columns.
        K (int): the data fidelity bandwidth.
    """

    pattern: SamplingPattern
    section: SectionMatrix = field(repr=False)
    K: int
    _matrix: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        if self.section.rows < self.pattern.scheme.N[-1]:
            raise ValidationError(
                "section has %d rows, sampling needs %d" % (self.section.rows, self.pattern.scheme.N[-1])
            )
        if self.K < 1 or self.K > self.section.cols:
            raise ValidationError("K=%d out of range for a section with %d columns" % (self.K, self.section.cols))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.pattern.rows.shape[0], self.K)

    @property
    def matrix(self) -> np.ndarray:
        """the dense m x K matrix A."""
        if len(self._matrix) == 0:
            a = self.pattern.scales[:, None] * self.section.entries[self.pattern.rows, : self.K]
            a.setflags(write=False)
            self._matrix.append(a)
        return self._matrix[0]

    def apply(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if z.shape[0] != self.K:
            raise ValidationError("vector of length %d, operator has %d columns" % (z.shape[0], self.K))
        return self.matrix @ z

    def adjoint(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape[0] != self.shape[0]:
            raise ValidationError("vector of length %d, operator has %d rows" % (v.shape[0], self.shape[0]))
        return self.matrix.T @ v

    def tail_matrix(self, width: int) -> np.ndarray:
        """D P_Omega U on the columns K .. width-1."""
        return self.pattern.scales[:, None] * self.section.entries[self.pattern.rows, self.K : width]


def measure(op: MeasurementOperator, x: np.ndarray, e1: np.ndarray = None) -> Measurement:
    """
    simulates y = D P_Omega U x + e1.

    Args:
        op (MeasurementOperator): the operator.
        x (np.ndarray): coefficients, length up to the section width (may exceed K).
        e1 (np.ndarray, optional): noise. Defaults to zero.

    Returns:
        Measurement: measurements and the part of them coming from columns beyond K.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] > op.section.cols:
        raise ValidationError(
            "coefficient vector of length %d exceeds the section width %d" % (x.shape[0], op.section.cols)
        )
    head = x[: op.K]
    if head.shape[0] < op.K:
        head = np.concatenate([head, np.zeros(op.K - head.shape[0])])
    y = op.apply(head)
    if x.shape[0] > op.K:
        trunc = op.tail_matrix(x.shape[0]) @ x[op.K :]
    else:
        trunc = np.zeros(op.shape[0])
    y = y + trunc
    if e1 is not None:
        e1 = np.asarray(e1, dtype=np.float64)
        if e1.shape != y.shape:
            raise ValidationError("noise has shape %s, measurements %s" % (e1.shape, y.shape))
        y = y + e1
    return Measurement(y, trunc)


@dataclass(frozen=True)
class Allocation:
    """
    a sample allocation with its intermediate terms.

    Attributes:
        m (tuple[int]): local sample counts.
        factors (tuple[float]): the per level factor multiplying C L (before rounding and capping).
        L (float): the logarithmic term.
        iterations (int): fixed point passes on the total sample count.
        converged (bool): False when the fixed point did not settle and all levels were saturated.
        saturated (tuple[bool]): levels sampled in full.
    """

    m: tuple
    factors: tuple
    L: float
    iterations: int
    converged: bool
    saturated: tuple


def log_term(scheme: LevelScheme, m_tilde: float, eps: float) -> float:
    """
    L = r log(2 m~) log(2 N_r) log^2(2 s) + log(1/eps), with m~ and s clamped to >= 1.
    """
    if not 0 < eps < 1:
        raise ValidationError("eps must be in (0, 1), got %g" % (eps))
    mt = max(float(m_tilde), 1.0)
    s = max(float(scheme.total_sparsity), 1.0)
    return (
        scheme.r * math.log(2 * mt) * math.log(2 * scheme.N[-1]) * math.log(2 * s) ** 2
        + math.log(1.0 / eps)
    )


def _allocate(
    scheme: LevelScheme, factors: np.ndarray, eps: float, c_univ: float, L: float = None
) -> Allocation:
    if c_univ <= 0:
        raise ValidationError("C_univ must be > 0, got %g" % (c_univ))
    widths = np.array(scheme.widths)
    forced = np.array([k < scheme.r0 for k in range(scheme.r)])

    def evaluate(lt: float) -> np.ndarray:
        raw = np.ceil(c_univ * factors * lt - 1e-9).astype(np.int64)
        m = np.minimum(widths, np.maximum(raw, 0))
        m[forced] = widths[forced]
        return m

    def result(m: np.ndarray, lt: float, it: int, converged: bool) -> Allocation:
        return Allocation(
            tuple(int(x) for x in m),
            tuple(float(f) for f in factors),
            float(lt),
            it,
            converged,
            tuple(bool(x) for x in m == widths),
        )

    if L is not None:
        return result(evaluate(L), L, 0, True)

    m_tilde = int(widths[~forced].sum())
    for it in range(1, MAX_FIXED_POINT_ITERATIONS + 1):
        lt = log_term(scheme, m_tilde, eps)
        m = evaluate(lt)
        new_tilde = int(m[~forced].sum())
        _logger.debug("allocation pass %d: m~=%d L=%.6g m=%s" % (it, m_tilde, lt, m.tolist()))
        if new_tilde == m_tilde:
            return result(m, lt, it, True)
        m_tilde = new_tilde

    _logger.warning(
        "allocation fixed point did not settle in %d passes, saturating all levels"
        % (MAX_FIXED_POINT_ITERATIONS)
    )
    return result(widths.copy(), log_term(scheme, int(widths[~forced].sum()), eps), MAX_FIXED_POINT_ITERATIONS, False)


def _check_delta(delta: float) -> None:
    if delta <= 0:
        raise ValidationError("delta must be > 0, got %g" % (delta))


def allocate_samples(
    scheme: LevelScheme,
    delta: float,
    theta: float,
    eps: float,
    q: float = 0.0,
    c_univ: float = 1.0,
    L: float = None,
) -> Allocation:
    """
    m_k = min(N_k - N_{k-1}, ceil(C delta^-2 theta^-1 2^(q max(k+1-r, 0)) (sum_l 2^-|k-l| s_l) L)).

    L depends on the total sample count, it is resolved by fixed point passes
    starting from the total width of the unsaturated levels.

    Args:
        scheme (LevelScheme): levels and sparsities (m is ignored).
        delta (float): target restricted isometry constant.
        theta (float): balancing constant.
        eps (float): failure probability.
        q (float, optional): the exponent of the last level factor. Defaults to 0.
        c_univ (float, optional): the universal constant. Defaults to 1.
        L (float, optional): an explicit logarithmic term, skips the fixed point.

    Returns:
        Allocation: the counts and intermediate terms.
    """
    _check_delta(delta)
    if theta <= 0:
        raise ValidationError("theta must be > 0, got %g" % (theta))
    r = scheme.r
    s = np.array(scheme.s, dtype=np.float64)
    lv = np.arange(1, r + 1)
    factors = np.array(
        [
            delta**-2
            / theta
            * 2.0 ** (q * max(k + 1 - r, 0))
            * float(np.sum(2.0 ** (-np.abs(k - lv)) * s))
            for k in lv
        ]
    )
    return _allocate(scheme, factors, eps, c_univ, L)


def general_allocate(
    scheme: LevelScheme,
    mu: np.ndarray,
    delta: float,
    g_inv_norm: float,
    eps: float,
    c_univ: float = 1.0,
    L: float = None,
) -> Allocation:
    """
    m_k = min(N_k - N_{k-1}, ceil(C delta^-2 ||G^-1||^2 (N_k - N_{k-1}) (sum_l mu_kl s_l) L)).
    """
    _check_delta(delta)
    mu = np.asarray(mu, dtype=np.float64)
    if mu.shape != (scheme.r, scheme.r):
        raise ValidationError("coherence table has shape %s, expected (%d, %d)" % (mu.shape, scheme.r, scheme.r))
    factors = delta**-2 * g_inv_norm**2 * np.array(scheme.widths) * (mu @ np.array(scheme.s, dtype=np.float64))
    return _allocate(scheme, factors, eps, c_univ, L)


def recovery_allocate(
    scheme: LevelScheme,
    mu: np.ndarray,
    theta: float,
    eps: float,
    c_univ: float = 1.0,
    L: float = None,
) -> Allocation:
    """
    m_k = min(N_k - N_{k-1}, ceil(C theta^-2 r (N_k - N_{k-1}) (sum_l mu_kl s_l) L)), the sampling
    condition of the overall recovery guarantee with weights s_l^-1/2.
    """
    if theta <= 0:
        raise ValidationError("theta must be > 0, got %g" % (theta))
    mu = np.asarray(mu, dtype=np.float64)
    if mu.shape != (scheme.r, scheme.r):
        raise ValidationError("coherence table has shape %s, expected (%d, %d)" % (mu.shape, scheme.r, scheme.r))
    factors = theta**-2 * scheme.r * np.array(scheme.widths) * (mu @ np.array(scheme.s, dtype=np.float64))
    return _allocate(scheme, factors, eps, c_univ, L)


def haar_allocate(
    scheme: LevelScheme,
    delta: float,
    eps: float,
    c_univ: float = 1.0,
    weighted: bool = False,
    L: float = None,
) -> Allocation:
    """
    Haar allocations: m_k ~ delta^-2 s_k L, or r s_k L for the weighted recovery form.
    """
    s = np.array(scheme.s, dtype=np.float64)
    if weighted:
        factors = scheme.r * s
    else:
        _check_delta(delta)
        factors = delta**-2 * s
    return _allocate(scheme, factors, eps, c_univ, L)
