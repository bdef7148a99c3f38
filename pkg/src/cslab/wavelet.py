"""
Daubechies wavelets with minimal support, periodized to [0,1).

Scaling function and wavelet are both supported on [-nu+1, nu]. The cascade
works on the standard support [0, 2nu-1] of the refinement equation

    phi(x) = sqrt(2) sum_k h_k phi(2x - k),   psi(x) = sqrt(2) sum_k g_k phi(2x - k),

with g_k = (-1)^k h_{2nu-1-k}, and shifts by nu-1 when placing functions.

Both point values and cell averages satisfy the same two-scale recursion:
at depth q the value on grid index i is sqrt(2) sum_k h_k v_{q-1}[i - k 2^(q-1)].
Cell averages are exact (up to round-off) once the unit-cell integrals are
known, point values once the integer values are known; both start vectors
are eigenvectors at eigenvalue 1 of a small transfer matrix.
"""

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import pywt
import scipy.linalg

import cslab.log
import cslab.os
from cslab.errors import InvalidFilterError, ValidationError
from cslab.grid import GridFunction

_logger = cslab.log.internal_logger()

Family = Literal["minimum-phase", "symlet"]
Averaging = Literal["exact", "oversampled"]

FAMILY_ALIASES = {
    "minimum-phase": "minimum-phase",
    "db": "minimum-phase",
    "daubechies": "minimum-phase",
    "symlet": "symlet",
    "sym": "symlet",
}

# Lipschitz regularity of the scaling function, nu <= 4
LIPSCHITZ = {1: 0.0, 2: 0.55, 3: 1.08, 4: 1.61}

DEFAULT_MARGIN = 10
TOL_NORM = 1e-2
MAX_FILTER_TABLE_NU = 10


def lipschitz_alpha(nu: int) -> float:
    """regularity exponent, 0.2 nu for nu >= 5 (heuristic only)."""
    return LIPSCHITZ.get(nu, 0.2 * nu)


def pywt_name(nu: int, family: str) -> str:
    """the PyWavelets name of the filter."""
    if nu == 1:
        return "haar"
    return ("db%d" if family == "minimum-phase" else "sym%d") % (nu)


@dataclass(frozen=True)
class SupportValues:
    """
    values of phi (s=0) or psi (s=1) on [-nu+1, nu] at spacing 2^-q.

    Attributes:
        nu (int): vanishing moments.
        s (int): 0 scaling function, 1 wavelet.
        extra_depth (int): q.
        kind (str): "points" (values at -nu+1 + i 2^-q, both ends included) or
            "averages" (means over [-nu+1 + i 2^-q, -nu+1 + (i+1) 2^-q)).
        values (np.ndarray): the values.
    """

    nu: int
    s: int
    extra_depth: int
    kind: str
    values: np.ndarray = field(repr=False)

    @property
    def origin(self) -> int:
        return -self.nu + 1

    @property
    def spacing(self) -> float:
        return 2.0 ** (-self.extra_depth)

    def positions(self) -> np.ndarray:
        """abscissae: the points, or the left cell endpoints."""
        return self.origin + np.arange(self.values.shape[0]) * self.spacing

    def riemann_sum(self, power: int = 0) -> float:
        """left Riemann sum of x^power * f over the support."""
        x = self.positions()
        v = self.values
        if self.kind == "points":
            x = x[:-1]
            v = v[:-1]
        return float(np.sum(x**power * v) * self.spacing)


@dataclass(frozen=True)
class BasisIndex:
    """
    a position in the wavelet basis ordering: the 2^J0 scaling functions at
    J0 first, then the wavelets at J0, J0+1, ... each level in translation order.
    """

    position: int
    j: int
    k: int
    s: int

    @classmethod
    def from_position(cls, position: int, j0: int) -> "BasisIndex":
        if position < 0:
            raise ValidationError("basis position must be >= 0, got %d" % (position))
        if position < (1 << j0):
            return cls(position, j0, position, 0)
        j = position.bit_length() - 1
        return cls(position, j, position - (1 << j), 1)

    @classmethod
    def from_jks(cls, j: int, k: int, s: int, j0: int) -> "BasisIndex":
        if s not in (0, 1):
            raise ValidationError("s must be 0 or 1, got %d" % (s))
        if j < j0 or (s == 0 and j != j0):
            raise ValidationError("(j=%d, s=%d) is not in the basis with J0=%d" % (j, s, j0))
        if k < 0 or k >= (1 << j):
            raise ValidationError("translation %d out of range for scale %d" % (k, j))
        pos = k if s == 0 else (1 << j) + k
        return cls(pos, j, k, s)

    def region(self, nu: int) -> str:
        """left, mid or right translation set at this scale."""
        if self.k < nu:
            return "left"
        if self.k >= (1 << self.j) - nu:
            return "right"
        return "mid"


def basis_scale(position: int, j0: int) -> int:
    """the scale j of a basis position."""
    return BasisIndex.from_position(position, j0).j


@dataclass(frozen=True)
class WaveletSystem:
    """
    the basis of periodized Daubechies functions with nu vanishing moments, coarsest scale J0.

    Attributes:
        nu (int): vanishing moments.
        j0 (int): coarsest scale.
        family (str): "minimum-phase" or "symlet".
        lowpass (np.ndarray): h_0 .. h_{2nu-1}.
        alpha (float): Lipschitz regularity.
    """

    nu: int
    j0: int
    family: str
    lowpass: np.ndarray = field(repr=False)
    alpha: float
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.nu < 1:
            raise ValidationError("nu must be >= 1, got %d" % (self.nu))
        if self.j0 < 0:
            raise ValidationError("J0 must be >= 0, got %d" % (self.j0))
        if self.nu >= 2 and (1 << self.j0) < 2 * self.nu:
            raise ValidationError(
                "2^J0 >= 2nu is required, got J0=%d nu=%d" % (self.j0, self.nu)
            )
        h = np.asarray(self.lowpass, dtype=np.float64)
        if h.shape != (2 * self.nu,):
            raise InvalidFilterError(
                "filter needs %d taps, got %d" % (2 * self.nu, h.shape[0])
            )
        if abs(h.sum() - math.sqrt(2)) > 1e-12:
            raise InvalidFilterError("filter taps sum to %.17g, not sqrt(2)" % (h.sum()))
        for m in range(self.nu):
            c = float(np.dot(h[: 2 * self.nu - 2 * m], h[2 * m :]))
            if abs(c - (1.0 if m == 0 else 0.0)) > 1e-10:
                raise InvalidFilterError("filter is not orthonormal at shift %d (%.3g)" % (m, c))
        h.setflags(write=False)
        object.__setattr__(self, "lowpass", h)

    @classmethod
    def daubechies(cls, nu: int, j0: int, family: str = "minimum-phase") -> "WaveletSystem":
        """
        builds the system from the PyWavelets filter bank.

        Args:
            nu (int): vanishing moments.
            j0 (int): coarsest scale.
            family (str, optional): "minimum-phase" (or "db") or "symlet" (or "sym"). Defaults to "minimum-phase".

        Returns:
            WaveletSystem: the system.
        """
        fam = FAMILY_ALIASES.get(str(family).lower())
        if fam is None:
            raise ValidationError("unknown wavelet family %s" % (family))
        if nu < 1:
            raise ValidationError("nu must be >= 1, got %d" % (nu))
        try:
            w = pywt.Wavelet(pywt_name(nu, fam))
        except ValueError as ex:
            raise InvalidFilterError("no %s filter with nu=%d" % (fam, nu), ex=ex)
        return cls(nu, j0, fam, np.array(w.rec_lo), lipschitz_alpha(nu))

    @property
    def is_haar(self) -> bool:
        return self.nu == 1

    @property
    def support_length(self) -> int:
        return 2 * self.nu - 1

    @property
    def highpass(self) -> np.ndarray:
        h = self.lowpass
        return np.array([(-1) ** k * h[2 * self.nu - 1 - k] for k in range(2 * self.nu)])

    @property
    def pywt_name(self) -> str:
        return pywt_name(self.nu, self.family)

    def guarantee_warning(self) -> str | None:
        if self.nu == 2:
            return "nu=2: recovery guarantees only hold for nu >= 3"
        return None

    def _cached(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    def _eigenvector_at_one(self, t: np.ndarray, what: str) -> np.ndarray:
        w, v = scipy.linalg.eig(t)
        idx = np.flatnonzero(np.abs(w - 1.0) < 1e-8)
        if idx.shape[0] != 1:
            raise InvalidFilterError(
                "%s: eigenvalue 1 of the transfer matrix has multiplicity %d" % (what, idx.shape[0])
            )
        x = np.real(v[:, idx[0]])
        total = x.sum()
        if abs(total) < 1e-12:
            raise InvalidFilterError("%s: eigenvector at 1 cannot be normalized" % (what))
        return x / total

    def _refine(self, prev: np.ndarray, taps: np.ndarray, q: int, length: int) -> np.ndarray:
        # v_q[i] = sqrt(2) sum_k taps_k prev[i - k 2^(q-1)]
        out = np.zeros(length)
        step = 1 << (q - 1)
        n = prev.shape[0]
        for k, c in enumerate(taps):
            out[k * step : k * step + n] += math.sqrt(2) * c * prev
        return out

    def _phi_averages(self, q: int) -> np.ndarray:
        def build():
            L = self.support_length
            if self.is_haar:
                return np.ones(1 << q)
            if q == 0:
                h = self.lowpass
                t = np.zeros((L, L))
                for m in range(L):
                    for i in range(L):
                        for kk in (2 * m - i, 2 * m - i + 1):
                            if 0 <= kk < 2 * self.nu:
                                t[m, i] += h[kk] / math.sqrt(2)
                return self._eigenvector_at_one(t, "unit-cell integrals")
            return self._refine(self._phi_averages(q - 1), self.lowpass, q, L << q)

        return self._cached(("avg", 0, q), build)

    def _psi_averages(self, q: int) -> np.ndarray:
        def build():
            L = self.support_length
            if self.is_haar:
                if q == 0:
                    return np.zeros(1)
                half = 1 << (q - 1)
                return np.concatenate([np.ones(half), -np.ones(half)])
            if q == 0:
                return self._psi_averages(1).reshape(L, 2).mean(axis=1)
            return self._refine(self._phi_averages(q - 1), self.highpass, q, L << q)

        return self._cached(("avg", 1, q), build)

    def _phi_points(self, q: int) -> np.ndarray:
        def build():
            L = self.support_length
            if self.is_haar:
                v = np.ones((1 << q) + 1)
                v[-1] = 0.0
                return v
            if q == 0:
                h = self.lowpass
                t = np.zeros((L + 1, L + 1))
                for m in range(L + 1):
                    for i in range(L + 1):
                        kk = 2 * m - i
                        if 0 <= kk < 2 * self.nu:
                            t[m, i] = math.sqrt(2) * h[kk]
                return self._eigenvector_at_one(t, "integer values")
            return self._refine(self._phi_points(q - 1), self.lowpass, q, (L << q) + 1)

        return self._cached(("pts", 0, q), build)

    def _psi_points(self, q: int) -> np.ndarray:
        def build():
            L = self.support_length
            if self.is_haar:
                half = 1 << max(q - 1, 0)
                if q == 0:
                    # psi(0) = 1, psi(1) = 0
                    return np.array([1.0, 0.0])
                v = np.concatenate([np.ones(half), -np.ones(half), [0.0]])
                return v
            if q == 0:
                return self._psi_points(1)[::2].copy()
            return self._refine(self._phi_points(q - 1), self.highpass, q, (L << q) + 1)

        return self._cached(("pts", 1, q), build)

    def support_averages(self, s: int, q: int) -> np.ndarray:
        """exact averages of phi (s=0) or psi (s=1) over the depth-q cells of the support."""
        if q < 0:
            raise ValidationError("depth must be >= 0, got %d" % (q))
        return self._psi_averages(q) if s else self._phi_averages(q)

    def support_oversampled_averages(self, s: int, q: int, margin: int = DEFAULT_MARGIN) -> np.ndarray:
        """depth-q cell averages approximated by the mean of cascade point values at depth q+margin."""
        if margin < 0:
            raise ValidationError("margin must be >= 0, got %d" % (margin))
        pts = cascade_refine(self, s, q + margin).values[:-1]
        return pts.reshape(-1, 1 << margin).mean(axis=1)


def cascade_refine(sys: WaveletSystem, s: int, extra_depth: int) -> SupportValues:
    """
    point values of phi (s=0) or psi (s=1) on [-nu+1, nu] at spacing 2^-q.

    The integer values come from the eigenvector at 1 of the two-scale transfer
    matrix, normalized so they sum to 1, and are refined q times. Haar is exact.

    Args:
        sys (WaveletSystem): the wavelet system.
        s (int): 0 for phi, 1 for psi.
        extra_depth (int): q >= 0.

    Raises:
        InvalidFilterError: if the eigenvector at 1 is not unique.

    Returns:
        SupportValues: (2nu-1) 2^q + 1 point values.
    """
    if extra_depth < 0:
        raise ValidationError("extra_depth must be >= 0, got %d" % (extra_depth))
    if s not in (0, 1):
        raise ValidationError("s must be 0 or 1, got %d" % (s))
    v = sys._psi_points(extra_depth) if s else sys._phi_points(extra_depth)
    return SupportValues(sys.nu, s, extra_depth, "points", v)


def _level_averages(sys: WaveletSystem, s: int, q: int, averaging: Averaging, margin: int) -> np.ndarray:
    if averaging == "exact" or sys.is_haar:
        return sys.support_averages(s, q)
    if averaging == "oversampled":
        return sys.support_oversampled_averages(s, q, margin)
    raise ValidationError("unknown averaging %s" % (averaging))


def cell_average_matrix(
    sys: WaveletSystem,
    positions: np.ndarray,
    depth: int,
    averaging: Averaging = "exact",
    margin: int = DEFAULT_MARGIN,
) -> np.ndarray:
    """
    depth-d cell averages of the periodized basis functions at the given positions.

    Args:
        sys (WaveletSystem): the wavelet system.
        positions (np.ndarray): basis positions.
        depth (int): the grid depth d, d >= j for every position.
        averaging (str, optional): "exact" or "oversampled". Defaults to "exact".
        margin (int, optional): extra cascade depth for "oversampled". Defaults to DEFAULT_MARGIN.

    Returns:
        np.ndarray: shape (len(positions), 2^d), row i holds the averages of positions[i].
    """
    pos = np.asarray(positions, dtype=np.int64).ravel()
    size = 1 << depth
    cslab.os.check_dense_allocation((pos.shape[0], size), "cell_average_matrix")
    out = np.zeros((pos.shape[0], size))
    if pos.shape[0] == 0:
        return out

    idx = [BasisIndex.from_position(int(p), sys.j0) for p in pos]
    js = np.array([b.j for b in idx])
    ks = np.array([b.k for b in idx])
    ss = np.array([b.s for b in idx])
    if js.max() > depth:
        raise ValidationError("depth %d too small for scale %d" % (depth, js.max()))

    for j in np.unique(js):
        for s in (0, 1):
            rows = np.flatnonzero((js == j) & (ss == s))
            if rows.shape[0] == 0:
                continue
            q = depth - int(j)
            a = (2.0 ** (int(j) / 2.0)) * _level_averages(sys, s, q, averaging, margin)
            offset = (ks[rows] - sys.nu + 1) << q
            cols = (offset[:, None] + np.arange(a.shape[0])[None, :]) % size
            # the support is shorter than one period, no wrapped cell is hit twice
            out[rows[:, None], cols] = a[None, :]

    return out


def periodized_cell_averages(
    sys: WaveletSystem,
    idx: BasisIndex,
    depth: int,
    averaging: Averaging = "exact",
    margin: int = DEFAULT_MARGIN,
) -> GridFunction:
    """
    the depth-d cell averages of the periodized basis function phi^s_{j,k}.

    Args:
        sys (WaveletSystem): the wavelet system.
        idx (BasisIndex): the basis function.
        depth (int): the grid depth d >= j.
        averaging (str, optional): "exact" or "oversampled". Defaults to "exact".
        margin (int, optional): extra cascade depth for "oversampled". Defaults to DEFAULT_MARGIN.

    Returns:
        GridFunction: the representative.
    """
    if depth < idx.j:
        raise ValidationError("depth %d too small for scale %d" % (depth, idx.j))
    g = GridFunction(depth, cell_average_matrix(sys, [idx.position], depth, averaging, margin)[0])
    n = g.l2_norm()
    if n > 1.0 + TOL_NORM or (depth - idx.j >= DEFAULT_MARGIN and abs(n - 1.0) > TOL_NORM):
        _logger.warning(
            "representative of %s at depth %d has L2 norm %.6f" % (idx, depth, n)
        )
    return g


def synthesize(
    sys: WaveletSystem, coefficients: np.ndarray, depth: int, averaging: Averaging = "exact"
) -> GridFunction:
    """
    the function sum_p c_p phi_p as depth-d cell averages.
    """
    c = np.asarray(coefficients, dtype=np.float64).ravel()
    nz = np.flatnonzero(c)
    if nz.shape[0] == 0:
        return GridFunction(depth, np.zeros(1 << depth))
    reps = cell_average_matrix(sys, nz, depth, averaging)
    return GridFunction(depth, c[nz] @ reps)


def dwt_synthesis_matrix(sys: WaveletSystem, r: int) -> np.ndarray:
    """
    the discrete periodic inverse wavelet transform on 2^r samples, as a matrix.

    Columns follow the basis ordering: 2^J0 approximation coefficients, then
    details from the coarsest to the finest level.

    Args:
        sys (WaveletSystem): the wavelet system.
        r (int): log2 of the signal length, r >= J0.

    Returns:
        np.ndarray: orthogonal 2^r x 2^r matrix.
    """
    if r < sys.j0:
        raise ValidationError("r=%d below J0=%d" % (r, sys.j0))
    n = 1 << r
    cslab.os.check_dense_allocation((n, n), "dwt_synthesis_matrix")
    z = np.eye(n)
    levels = r - sys.j0
    # idwt level by level, coarsest first (each row is one coefficient vector)
    for lev in range(levels, 0, -1):
        m = n >> lev
        z[:, : 2 * m] = pywt.idwt(z[:, :m], z[:, m : 2 * m], sys.pywt_name, "periodization", axis=-1)
    return z.T


def write_filter_table(path: str, max_nu: int = MAX_FILTER_TABLE_NU) -> int:
    """
    writes the filter file: one filter per line, "nu family h_0 ... h_{2nu-1}".

    Args:
        path (str): destination file.
        max_nu (int, optional): largest nu. Defaults to MAX_FILTER_TABLE_NU.

    Returns:
        int: the number of filters written.
    """
    n = 0
    with open(path, "w") as f:
        for family in ("minimum-phase", "symlet"):
            for nu in range(1, max_nu + 1):
                # validates the invariants
                sys = WaveletSystem.daubechies(nu, max(0, (2 * nu - 1).bit_length()), family)
                taps = " ".join(format(float(x), ".17g") for x in sys.lowpass)
                f.write("%d %s %s\n" % (nu, family, taps))
                n += 1
    _logger.info("written %d filters to %s" % (n, path))
    return n


def read_filter_table(path: str) -> dict[tuple[int, str], np.ndarray]:
    """reads a file written by write_filter_table."""
    table = {}
    with open(path, "r") as f:
        for line in f:
            parts = line.split()
            if len(parts) < 3 or parts[0].startswith("#"):
                continue
            table[(int(parts[0]), parts[1])] = np.array([float(x) for x in parts[2:]])
    return table
