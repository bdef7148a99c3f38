"""
Dyadic arithmetic and Walsh functions in sequency order.

A point x = t 2^-p in [0,1) carries its depth p, its dyadic digits are the
bits of t read most significant first. The Walsh function of sequency n is

    w_n(x) = (-1) ** sum_j (n_j + n_{j+1}) x_j

with n_1 the least significant bit of n. Writing g = n ^ (n >> 1) (the Gray
code of n), the exponent is the parity of g & bitrev_p(t), so the sequency
ordered Hadamard matrix is the natural (Sylvester) one with its rows permuted
by n -> bitrev(gray(n)).
"""

from dataclasses import dataclass
from fractions import Fraction
from typing import Literal

import numpy as np
import scipy.linalg

import cslab.log
import cslab.os
from cslab.errors import ResourceLimitError, ValidationError
from cslab.grid import GridFunction

_logger = cslab.log.internal_logger()

MAX_DEPTH = 62

# largest r accepted by sequency_hadamard, the fast transform has no such limit
MAX_HADAMARD_SCALE = 14

Normalization = Literal["analysis", "synthesis", "unnormalized"]


@dataclass(frozen=True, order=True)
class DyadicPoint:
    """
    x = t 2^-p in [0,1), with its finite binary expansion of length p.
    """

    t: int
    p: int

    def __post_init__(self):
        if self.p < 0 or self.p > MAX_DEPTH:
            raise ValidationError("dyadic depth must be in [0,%d], got %d" % (MAX_DEPTH, self.p))
        if self.t < 0 or self.t >= (1 << self.p):
            raise ValidationError("numerator %d out of range for depth %d" % (self.t, self.p))

    @classmethod
    def from_fraction(cls, x: Fraction | str | int) -> "DyadicPoint":
        """
        builds the point from an exact dyadic rational, e.g. "3/8".
        """
        f = Fraction(x)
        den = f.denominator
        if den & (den - 1) != 0:
            raise ValidationError("%s is not a dyadic rational" % (f))
        p = den.bit_length() - 1
        return cls(f.numerator, p)

    def value(self) -> Fraction:
        return Fraction(self.t, 1 << self.p)

    def at_depth(self, p: int) -> "DyadicPoint":
        """the same point written with p >= self.p digits."""
        if p < self.p:
            raise ValidationError("cannot lower depth %d to %d" % (self.p, p))
        return DyadicPoint(self.t << (p - self.p), p)

    def digits(self) -> list[int]:
        """x_1, ..., x_p."""
        return [(self.t >> (self.p - 1 - i)) & 1 for i in range(self.p)]

    def scaled(self, j: int) -> "DyadicPoint":
        """returns x / 2^j."""
        return DyadicPoint(self.t, self.p + j)

    def cell(self) -> tuple[Fraction, Fraction]:
        """the depth-p cell with left endpoint x."""
        return self.value(), Fraction(self.t + 1, 1 << self.p)


@dataclass(frozen=True, order=True)
class WalshIndex:
    """sequency n >= 0, n_1 is the least significant bit."""

    n: int

    def __post_init__(self):
        if self.n < 0:
            raise ValidationError("walsh index must be >= 0, got %d" % (self.n))

    def digits(self) -> list[int]:
        return [(self.n >> i) & 1 for i in range(max(1, self.n.bit_length()))]


def gray(n):
    return n ^ (n >> 1)


def bit_reverse(t, p: int):
    """
    reverses the p lowest bits of t (int or integer numpy array).
    """
    if isinstance(t, np.ndarray):
        t = t.astype(np.int64)
        out = np.zeros_like(t)
    else:
        out = 0
    for i in range(p):
        out = (out << 1) | ((t >> i) & 1)
    return out


def dyadic_xor(x: DyadicPoint, y: DyadicPoint) -> DyadicPoint:
    """
    digitwise xor of two dyadic points, at the common depth max(p_x, p_y).
    """
    p = max(x.p, y.p)
    return DyadicPoint((x.t << (p - x.p)) ^ (y.t << (p - y.p)), p)


def walsh_eval(n: WalshIndex | int, x: DyadicPoint) -> int:
    """
    evaluates the Walsh function w_n at a dyadic point.

    Args:
        n (WalshIndex | int): the sequency.
        x (DyadicPoint): the point.

    Returns:
        int: +1 or -1.
    """
    nn = n.n if isinstance(n, WalshIndex) else int(n)
    e = gray(nn) & bit_reverse(x.t, x.p)
    return -1 if e.bit_count() & 1 else 1


def sequency_permutation(r: int) -> np.ndarray:
    """
    row permutation from natural to sequency order: row n of V_Had is row perm[n] of the Sylvester matrix.
    """
    n = np.arange(1 << r, dtype=np.int64)
    return bit_reverse(gray(n), r)


def _check_pow2(n: int) -> int:
    if n < 1 or n & (n - 1) != 0:
        raise ValidationError("transform length must be a power of two, got %d" % (n))
    return n.bit_length() - 1


def sequency_hadamard(r: int, max_scale: int = MAX_HADAMARD_SCALE) -> np.ndarray:
    """
    the 2^r x 2^r sequency ordered Hadamard matrix, (V)[n, t] = w_n(t 2^-r).

    Args:
        r (int): the scale.
        max_scale (int, optional): the largest accepted r. Defaults to MAX_HADAMARD_SCALE.

    Raises:
        ResourceLimitError: if r > max_scale or the matrix exceeds the allocation cap.

    Returns:
        np.ndarray: the matrix (float64, entries +-1).
    """
    if r < 0:
        raise ValidationError("scale must be >= 0, got %d" % (r))
    if r > max_scale:
        raise ResourceLimitError("sequency_hadamard: r=%d exceeds limit %d" % (r, max_scale))
    cslab.os.check_dense_allocation((1 << r, 1 << r), "sequency_hadamard")
    h = scipy.linalg.hadamard(1 << r, dtype=np.float64)
    return h[sequency_permutation(r)]


def _fwht_natural(x: np.ndarray) -> np.ndarray:
    # butterfly over the last axis, unnormalized Sylvester order
    n = x.shape[-1]
    lead = x.shape[:-1]
    y = x.reshape(-1, n)
    h = 1
    while h < n:
        y = y.reshape(-1, n // (2 * h), 2, h)
        a = y[:, :, 0, :]
        b = y[:, :, 1, :]
        y = np.stack((a + b, a - b), axis=2)
        h *= 2
    return y.reshape(lead + (n,))


def fwht_sequency(c: np.ndarray, normalization: Normalization = "analysis") -> np.ndarray:
    """
    fast sequency ordered Walsh-Hadamard transform along the last axis.

    Args:
        c (np.ndarray): input, last axis of length 2^r.
        normalization (str, optional):
            "unnormalized" returns V c,
            "analysis" returns 2^-r V c (the Walsh coefficients of the step function with cell values c),
            "synthesis" is the inverse of "analysis". Defaults to "analysis".

    Returns:
        np.ndarray: the transform, same shape as c.
    """
    x = np.asarray(c, dtype=np.float64)
    n = x.shape[-1]
    r = _check_pow2(n)
    perm = sequency_permutation(r)

    if normalization == "synthesis":
        z = np.empty_like(x)
        z[..., perm] = x
        return _fwht_natural(z)

    y = _fwht_natural(x)[..., perm]
    if normalization == "unnormalized":
        return y
    if normalization == "analysis":
        return y / n
    raise ValidationError("unknown normalization %s" % (normalization))


def truncated_walsh_series(samples: np.ndarray, grid_depth: int) -> GridFunction:
    """
    evaluates sum_{n<N} y_n w_n on the depth-d grid.

    Args:
        samples (np.ndarray): the first N Walsh coefficients y_0 .. y_{N-1}.
        grid_depth (int): the grid depth d, 2^d >= N.

    Returns:
        GridFunction: the truncated series.
    """
    y = np.asarray(samples, dtype=np.float64).ravel()
    size = 1 << grid_depth
    if y.shape[0] > size:
        raise ValidationError(
            "%d Walsh samples do not fit a depth %d grid" % (y.shape[0], grid_depth)
        )
    full = np.zeros(size)
    full[: y.shape[0]] = y
    return GridFunction(grid_depth, fwht_sequency(full, "synthesis"))
