"""
piecewise-constant functions on the dyadic grid of [0,1).
"""

from dataclasses import dataclass, field

import numpy as np

from cslab.errors import ValidationError


@dataclass(frozen=True)
class GridFunction:
    """
    a function on [0,1) constant on each cell [i 2^-d, (i+1) 2^-d).

    Attributes:
        depth (int): the grid depth d.
        values (np.ndarray): the 2^d cell values.
    """

    depth: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.depth < 0:
            raise ValidationError("grid depth must be >= 0, got %d" % (self.depth))
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.shape[0] != (1 << self.depth):
            raise ValidationError(
                "grid of depth %d needs %d values, got shape %s"
                % (self.depth, 1 << self.depth, v.shape)
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def size(self) -> int:
        return 1 << self.depth

    def refine(self, depth: int) -> "GridFunction":
        """
        returns the same function represented on a finer grid.

        Args:
            depth (int): target depth, >= self.depth.

        Returns:
            GridFunction: the function at the given depth.
        """
        if depth < self.depth:
            raise ValidationError(
                "cannot refine depth %d to coarser depth %d" % (self.depth, depth)
            )
        if depth == self.depth:
            return self
        return GridFunction(depth, np.repeat(self.values, 1 << (depth - self.depth)))

    def coarsen(self, depth: int) -> "GridFunction":
        """returns the cell averages on a coarser grid."""
        if depth > self.depth:
            raise ValidationError(
                "cannot coarsen depth %d to finer depth %d" % (self.depth, depth)
            )
        return GridFunction(depth, self.values.reshape(1 << depth, -1).mean(axis=1))

    def integral(self) -> float:
        return float(self.values.sum()) / self.size

    def l2_norm(self) -> float:
        return float(np.sqrt(np.dot(self.values, self.values) / self.size))

    def inner(self, other: "GridFunction") -> float:
        """L2 inner product on [0,1)."""
        d = max(self.depth, other.depth)
        a = self.refine(d).values
        b = other.refine(d).values
        return float(np.dot(a, b)) / (1 << d)

    def midpoints(self) -> np.ndarray:
        """the cell midpoints."""
        return (np.arange(self.size) + 0.5) / self.size

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        d = max(self.depth, other.depth)
        return GridFunction(d, self.refine(d).values - other.refine(d).values)

    def __add__(self, other: "GridFunction") -> "GridFunction":
        d = max(self.depth, other.depth)
        return GridFunction(d, self.refine(d).values + other.refine(d).values)


def relative_l2_error(f: GridFunction, reference: GridFunction) -> float:
    """
    relative L2 distance ||f - reference|| / ||reference|| on the finer of the two grids.

    Args:
        f (GridFunction): the approximation.
        reference (GridFunction): the reference, must have nonzero norm.

    Returns:
        float: the relative error.
    """
    n = reference.l2_norm()
    if n == 0:
        raise ValidationError("reference function has zero norm")
    return (f - reference).l2_norm() / n
