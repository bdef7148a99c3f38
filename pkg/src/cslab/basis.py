"""
Finite sections of the change of basis between Walsh functions and periodized wavelets.

Entry (n, p) is <phi_p, w_n>. w_n is constant on depth-d cells for n < 2^d,
so the first 2^d entries of a column are the analysis transform of the
column's depth-d cell averages.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

import cslab.file
import cslab.log
import cslab.os
from cslab.errors import ValidationError
from cslab.walsh import WalshIndex, fwht_sequency
from cslab.wavelet import (
    DEFAULT_MARGIN,
    Averaging,
    BasisIndex,
    WaveletSystem,
    basis_scale,
    cell_average_matrix,
    periodized_cell_averages,
)

_logger = cslab.log.internal_logger()

# cap on a single (columns x 2^quality) batch of representatives
BATCH_ELEMENTS = 1 << 24

# coherence tables use cascade point values on a grid two levels finer than N
COHERENCE_AVERAGING: Averaging = "oversampled"
COHERENCE_MARGIN = 0
COHERENCE_EXTRA_DEPTH = 2


@dataclass(frozen=True)
class SectionMatrix:
    """
    the N x M leading block of the change of basis matrix.

    Attributes:
        rows (int): N, Walsh functions w_0 .. w_{N-1}.
        cols (int): M, basis positions 0 .. M-1.
        entries (np.ndarray): N x M.
        sys (WaveletSystem): the wavelet system.
        entry_err (float): estimated entrywise error.
        quality (int): the grid depth used.
        averaging (str): how cell averages were computed.
    """

    rows: int
    cols: int
    entries: np.ndarray = field(repr=False)
    sys: WaveletSystem = field(repr=False)
    entry_err: float
    quality: int
    averaging: str = "exact"

    def __post_init__(self):
        if self.entries.shape != (self.rows, self.cols):
            raise ValidationError(
                "section entries have shape %s, expected (%d, %d)"
                % (self.entries.shape, self.rows, self.cols)
            )
        self.entries.setflags(write=False)

    def column_index(self, col: int) -> BasisIndex:
        return BasisIndex.from_position(col, self.sys.j0)

    @property
    def col_index_map(self) -> list[BasisIndex]:
        return [self.column_index(c) for c in range(self.cols)]

    def block(self, n: int, m: int) -> np.ndarray:
        """the leading n x m block."""
        if n > self.rows or m > self.cols:
            raise ValidationError(
                "block (%d, %d) exceeds section (%d, %d)" % (n, m, self.rows, self.cols)
            )
        return self.entries[:n, :m]

    def column_norms(self) -> np.ndarray:
        return np.linalg.norm(self.entries, axis=0)


def default_quality(n: int, m: int, j0: int) -> int:
    """smallest depth with 2^d >= N that also resolves the finest scale among the first M positions."""
    d = max(0, math.ceil(math.log2(max(n, 1))))
    if m > 0:
        d = max(d, basis_scale(m - 1, j0))
    return d


def u_entry(
    sys: WaveletSystem,
    n: WalshIndex | int,
    idx: BasisIndex,
    quality: int,
    averaging: Averaging = "exact",
) -> float:
    """
    <phi_idx, w_n> computed from the depth-quality cell averages.

    Raises:
        ValidationError: if n >= 2^quality (w_n is not constant on the grid cells).

    Returns:
        float: the entry.
    """
    nn = n.n if isinstance(n, WalshIndex) else int(n)
    if nn >= (1 << quality):
        raise ValidationError(
            "sequency %d is not resolved at quality %d (needs n < %d)" % (nn, quality, 1 << quality)
        )
    g = periodized_cell_averages(sys, idx, max(quality, idx.j), averaging)
    return float(fwht_sequency(g.values, "analysis")[nn])


def _columns(
    sys: WaveletSystem, n: int, positions: np.ndarray, quality: int, averaging: Averaging, margin: int
) -> np.ndarray:
    # entries (n x len(positions)), batched over columns
    out = np.empty((n, positions.shape[0]))
    batch = max(1, BATCH_ELEMENTS >> quality)
    for start in range(0, positions.shape[0], batch):
        p = positions[start : start + batch]
        reps = cell_average_matrix(sys, p, quality, averaging, margin)
        out[:, start : start + p.shape[0]] = fwht_sequency(reps, "analysis")[:, :n].T
        _logger.debug("columns %d..%d of %d done" % (start, start + p.shape[0], positions.shape[0]))
    return out


def estimate_entry_err(
    sys: WaveletSystem,
    n: int,
    m: int,
    quality: int,
    averaging: Averaging = "exact",
    margin: int = DEFAULT_MARGIN,
) -> float:
    """
    max |entry(quality) - entry(quality + 2)| over a probe set of columns.
    """
    probe = np.unique(np.array([0, m // 2, m - 1], dtype=np.int64))
    a = _columns(sys, n, probe, quality, averaging, margin)
    b = _columns(sys, n, probe, quality + 2, averaging, margin)
    return float(np.max(np.abs(a - b)))


def assemble_section(
    sys: WaveletSystem,
    N: int,
    M: int,
    quality: int = None,
    averaging: Averaging = "exact",
    margin: int = DEFAULT_MARGIN,
    estimate_error: bool = True,
) -> SectionMatrix:
    """
    assembles the N x M section, one fast transform per column.

    Args:
        sys (WaveletSystem): the wavelet system.
        N (int): number of Walsh functions (rows).
        M (int): number of basis functions (columns).
        quality (int, optional): grid depth, 2^quality >= N. Defaults to default_quality(N, M).
        averaging (str, optional): "exact" (refined cell averages) or "oversampled". Defaults to "exact".
        margin (int, optional): extra cascade depth for "oversampled". Defaults to DEFAULT_MARGIN.
        estimate_error (bool, optional): estimate entry_err by comparing with quality + 2. Defaults to True.

    Raises:
        ValidationError: if the quality does not resolve N.
        ResourceLimitError: if the section exceeds the allocation cap.

    Returns:
        SectionMatrix: the section.
    """
    if N < 1 or M < 1:
        raise ValidationError("section bandwidths must be >= 1, got N=%d M=%d" % (N, M))
    if quality is None:
        quality = default_quality(N, M, sys.j0)
    if N > (1 << quality):
        raise ValidationError("quality %d is too low for N=%d" % (quality, N))
    if basis_scale(M - 1, sys.j0) > quality:
        raise ValidationError("quality %d is too low for M=%d" % (quality, M))

    cslab.os.check_dense_allocation((N, M), "section")
    start = time.monotonic()
    entries = _columns(sys, N, np.arange(M, dtype=np.int64), quality, averaging, margin)
    err = estimate_entry_err(sys, N, M, quality, averaging, margin) if estimate_error else 0.0
    elapsed = time.monotonic() - start

    sec = SectionMatrix(N, M, entries, sys, err, quality, averaging)
    norms = sec.column_norms()
    if norms.max() > 1.0 + 2 * M * err + 1e-10:
        _logger.warning("section column norm %.12f exceeds the isometry bound" % (norms.max()))
    _logger.info(
        "section %dx%d nu=%d J0=%d quality=%d (%s) in %.3fs, entry_err=%.3g"
        % (N, M, sys.nu, sys.j0, quality, averaging, elapsed, err)
    )
    return sec


def coherence_section(
    sys: WaveletSystem,
    N: int,
    M: int,
    quality: int = None,
    averaging: Averaging = COHERENCE_AVERAGING,
    margin: int = COHERENCE_MARGIN,
) -> SectionMatrix:
    """
    the section used for local coherence tables.

    Defaults to the midpoint cascade route (point values, no extra margin) at
    COHERENCE_EXTRA_DEPTH levels past default_quality. "exact" is opt-in.
    """
    if quality is None:
        quality = default_quality(N, M, sys.j0) + COHERENCE_EXTRA_DEPTH
    return assemble_section(sys, N, M, quality=quality, averaging=averaging, margin=margin)


def apply_section(sec: SectionMatrix, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape[0] != sec.cols:
        raise ValidationError("vector of length %d, section has %d columns" % (v.shape[0], sec.cols))
    return sec.entries @ v


def apply_section_adjoint(sec: SectionMatrix, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape[0] != sec.rows:
        raise ValidationError("vector of length %d, section has %d rows" % (v.shape[0], sec.rows))
    return sec.entries.T @ v


def write_section_csv(sec: SectionMatrix, path: str) -> int:
    """writes the section, one CSV row per matrix row (header c0 .. c{M-1})."""
    header = ["c%d" % (c) for c in range(sec.cols)]
    return cslab.file.write_csv(path, header, (row for row in sec.entries))
