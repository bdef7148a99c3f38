"""
This module provides functions for retrieving the version of packages.
"""

from importlib import metadata


def pkg_version(name: str) -> str:
    """! Returns the version of the given package, "0+unknown" if it is not installed.
    :param name: package name
    :return: version of the package
    """
    try:
        return metadata.version(name)
    except metadata.PackageNotFoundError:
        return "0+unknown"


def cslab_version() -> str:
    """! Returns the version of the cslab package."""
    return pkg_version("cslab")
