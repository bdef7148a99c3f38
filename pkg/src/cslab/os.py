"""
host resources: the dense-allocation guard.
"""

import os

import numpy as np
import psutil

import cslab.log
from cslab.errors import ResourceLimitError

_logger = cslab.log.internal_logger()

MAX_MEM_ENV = "CS_LAB_MAX_MEM_MB"


def max_dense_bytes() -> int:
    """
    Returns the cap for a single dense allocation.

    The cap is read from CS_LAB_MAX_MEM_MB (megabytes); if unset, half of the
    currently available memory is used.

    Returns:
        int: the cap, in bytes.
    """
    v = os.environ.get(MAX_MEM_ENV)
    if v is not None and len(v.strip()) > 0:
        try:
            mb = float(v)
        except ValueError as ex:
            raise ResourceLimitError("invalid %s=%s" % (MAX_MEM_ENV, v), ex=ex)
        return int(mb * 1024 * 1024)

    return int(psutil.virtual_memory().available // 2)


def check_dense_allocation(shape: tuple, what: str, dtype=np.float64) -> None:
    """
    Raises if an array of the given shape would exceed the allocation cap.

    Args:
        shape (tuple): the array shape.
        what (str): a short description, used in the error message.
        dtype (optional): the array dtype. Defaults to float64.

    Raises:
        ResourceLimitError: if the array is larger than max_dense_bytes().
    """
    n = int(np.prod([int(x) for x in shape], dtype=np.float64)) * np.dtype(dtype).itemsize
    cap = max_dense_bytes()
    if n > cap:
        raise ResourceLimitError(
            "%s of shape %s needs %d bytes, cap is %d (set %s to raise it)"
            % (what, tuple(shape), n, cap, MAX_MEM_ENV)
        )
    _logger.debug("%s: allocating %s (%d bytes)" % (what, tuple(shape), n))
