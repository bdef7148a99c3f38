"""
Run manifests.

A manifest is a status envelope written next to the artifacts of a command:

    {
        "status": "success" | "error",
        "timestamp_msec": ...,
        "run_id": ...,
        "command": ...,
        "version": ...,
        "seed": ...,
        "config": {...},
        "config_sha256": ...,
        "data": {...}        # on success, command specific
        "error": {...}       # on error
    }
"""

import json
import time
import uuid

from Crypto.Hash import SHA256

import cslab.log
import cslab.version
from cslab.errors import CsLabException

_logger = cslab.log.internal_logger()

MANIFEST_FILENAME = "manifest.json"


def canonical_json(js: dict) -> str:
    """returns the canonical (sorted keys, compact) json form of a dict."""
    return json.dumps(js, sort_keys=True, separators=(",", ":"))


def hash_sha256(buffer: str | bytes) -> str:
    """
    Hashes the input buffer using SHA256 and returns the hex digest.

    Args:
        buffer (str or bytes): The input buffer to hash.

    Returns:
        str: The hex digest.
    """
    digest = SHA256.new()
    digest.update(buffer.encode() if isinstance(buffer, str) else buffer)
    return digest.hexdigest()


def generate_run_id() -> str:
    return str(uuid.uuid4())


def _envelope(status: str, command: str, config: dict, run_id: str) -> dict:
    cfg = config or {}
    return {
        "status": status,
        "timestamp_msec": int(time.time_ns() / 1000000),
        "run_id": run_id or generate_run_id(),
        "command": command,
        "version": cslab.version.cslab_version(),
        "seed": cfg.get("seed"),
        "config": cfg,
        "config_sha256": hash_sha256(canonical_json(cfg)),
    }


def success_manifest(command: str, config: dict, data: dict = None, run_id: str = None) -> dict:
    """
    Creates a success manifest, optionally with the given "data" node.

    Args:
        command (str): the subcommand that ran.
        config (dict): the effective configuration (after flag overrides).
        data (dict, optional): command specific results. Defaults to None.
        run_id (str, optional): the run id, autogenerated if not provided.

    Returns:
        dict: the manifest.
    """
    js = _envelope("success", command, config, run_id)
    if data is not None:
        js["data"] = data
    return js


def error_manifest(command: str, config: dict, ex: Exception, run_id: str = None) -> dict:
    """
    Creates an error manifest.

    Args:
        command (str): the subcommand that failed.
        config (dict): the effective configuration, may be None if loading it failed.
        ex (Exception): the exception.
        run_id (str, optional): the run id, autogenerated if not provided.

    Returns:
        dict: the manifest.
    """
    js = _envelope("error", command, config, run_id)
    if isinstance(ex, CsLabException):
        js["error"] = ex.to_dict()
    else:
        js["error"] = {
            "name": ex.__class__.__name__,
            "msg": str(ex),
            "exit_code": 1,
            "trace": cslab.log.exception_to_string(ex, with_full_traceback=True),
        }
    _logger.error(json.dumps(js["error"], indent=2))
    return js


def check_success(js: dict) -> bool:
    """returns True if the manifest reports success."""
    if js is None:
        return False
    return str(js.get("status", "")).lower() == "success"
