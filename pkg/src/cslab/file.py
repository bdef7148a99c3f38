"""
file utilities: output directories, CSV and JSON.
"""

import csv
import json
import os
from typing import Any, Iterable

import json5

import cslab.log

_logger = cslab.log.internal_logger()


def safe_path_join(root: str, *segments, allow_relative=False):
    """Safely joins a path starting from `root` with all `*segments`.
    If resulting path escapes `root`, `root` is returned instead.
    `root` is ALWAYS treated as an absolute, normalized path.

    If `allow_relative` is set to True, it allows joining paths from `root` down, else
    only the last segment's basename is considered.

    Args:
        root (str): directory root
        *segments (str): parts of path to join
        allow_relative (bool): if True, allows joining segments starting from root
    """
    root = os.path.abspath(os.path.normpath(root))
    candidate = os.path.normpath(os.path.abspath(os.path.join(root, *segments)))

    if allow_relative:
        if os.path.commonpath([candidate, root]) != root:
            # escaped the root
            return root
        return candidate

    return os.path.join(root, os.path.basename(candidate))


def ensure_dir(path: str) -> str:
    """
    creates the directory (and parents) if it does not exist.

    Args:
        path (str): the directory.

    Returns:
        str: the absolute path of the directory.
    """
    p = os.path.abspath(path)
    os.makedirs(p, exist_ok=True)
    return p


def format_cell(v: Any) -> str:
    """
    formats a CSV cell: floats in round-trip exact, locale independent form, everything else via str().
    """
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float) or (hasattr(v, "dtype") and getattr(v.dtype, "kind", "") == "f"):
        return format(float(v), ".17g")
    if hasattr(v, "item"):
        # numpy scalars
        return str(v.item())
    return str(v)


def write_csv(path: str, header: list[str], rows: Iterable[Iterable[Any]]) -> int:
    """
    writes a CSV file with a header row.

    Args:
        path (str): destination file.
        header (list[str]): column names.
        rows (Iterable[Iterable[Any]]): rows, each with len(header) cells.

    Returns:
        int: the number of data rows written.
    """
    n = 0
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_cell(c) for c in row])
            n += 1

    _logger.debug("written %s (%d rows)" % (path, n))
    return n


def read_csv(path: str) -> tuple[list[str], list[list[str]]]:
    """
    reads a CSV file written by write_csv.

    Returns:
        tuple[list[str], list[list[str]]]: header and rows (cells as strings).
    """
    with open(path, "r", newline="") as f:
        rows = list(csv.reader(f))
    if len(rows) == 0:
        return [], []
    return rows[0], rows[1:]


def from_json_file(path: str) -> dict:
    """
    reads json from file, also supports json5

    Args:
        path (str): file path

    Returns:
        dict: the parsed document
    """
    with open(path, "r") as f:
        js = json5.loads(f.read())
    return js


def to_json_file(path: str, js: dict, indent: int = 2) -> None:
    """
    writes json to file

    Args:
        path (str): path to the file to be created
        js (dict): dict to be written
        indent (int, optional): indentation spaces. Defaults to 2.
    """
    with open(path, "w") as f:
        f.write(json.dumps(js, indent=indent))
        f.write("\n")
