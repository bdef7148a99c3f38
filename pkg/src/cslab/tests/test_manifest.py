import os
import unittest
from unittest import mock

from cslab.errors import (
    EXIT_CONVERGENCE,
    EXIT_RESOURCE,
    EXIT_VALIDATION,
    BalancingError,
    ConvergenceError,
    CsLabException,
    EnumerationCapError,
    ResourceLimitError,
    ValidationError,
)
from cslab.manifest import (
    canonical_json,
    check_success,
    error_manifest,
    hash_sha256,
    success_manifest,
)
from cslab.os import MAX_MEM_ENV, check_dense_allocation, max_dense_bytes


class TestErrors(unittest.TestCase):
    def test_exit_codes(self):
        self.assertEqual(ValidationError("x").exit_code, EXIT_VALIDATION)
        self.assertEqual(BalancingError("x").exit_code, EXIT_VALIDATION)
        self.assertEqual(EnumerationCapError("x").exit_code, EXIT_RESOURCE)
        self.assertEqual(ConvergenceError("x").exit_code, EXIT_CONVERGENCE)
        self.assertEqual(CsLabException("x", exit_code=7).exit_code, 7)

    def test_message(self):
        self.assertEqual(str(ValidationError("bad")), "bad")
        self.assertEqual(str(ValidationError(ex=ValueError("inner"))), "inner")
        self.assertEqual(str(CsLabException()), "ERROR!")

    def test_to_dict(self):
        try:
            raise ValueError("cause")
        except ValueError as cause:
            d = ValidationError("wrapped", ex=cause).to_dict()
        self.assertEqual(d["name"], "ValidationError")
        self.assertEqual(d["msg"], "wrapped")
        self.assertEqual(d["exit_code"], EXIT_VALIDATION)
        self.assertEqual(d["exception"]["name"], "ValueError")
        self.assertIn("cause", d["exception"]["trace"])


class TestManifest(unittest.TestCase):
    def test_hash(self):
        self.assertEqual(
            hash_sha256("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        )
        self.assertEqual(hash_sha256(b"abc"), hash_sha256("abc"))

    def test_canonical(self):
        self.assertEqual(canonical_json({"b": 1, "a": [1, 2]}), '{"a":[1,2],"b":1}')

    def test_success(self):
        cfg = {"seed": 4, "out": "o"}
        js = success_manifest("allocate", cfg, {"m": [1, 2]})
        self.assertTrue(check_success(js))
        self.assertEqual(js["command"], "allocate")
        self.assertEqual(js["seed"], 4)
        self.assertEqual(js["data"], {"m": [1, 2]})
        self.assertEqual(js["config_sha256"], hash_sha256(canonical_json(cfg)))
        # the hash ignores key order
        other = success_manifest("allocate", {"out": "o", "seed": 4})
        self.assertEqual(other["config_sha256"], js["config_sha256"])
        self.assertNotIn("data", other)

    def test_error(self):
        js = error_manifest("ripl", None, EnumerationCapError("too many"), run_id="r1")
        self.assertFalse(check_success(js))
        self.assertEqual(js["run_id"], "r1")
        self.assertIsNone(js["seed"])
        self.assertEqual(js["error"]["exit_code"], EXIT_RESOURCE)
        js = error_manifest("ripl", {}, KeyError("k"))
        self.assertEqual(js["error"]["exit_code"], 1)
        self.assertEqual(js["error"]["name"], "KeyError")
        self.assertFalse(check_success(None))


class TestDenseGuard(unittest.TestCase):
    def test_env_cap(self):
        with mock.patch.dict(os.environ, {MAX_MEM_ENV: "1"}):
            self.assertEqual(max_dense_bytes(), 1024 * 1024)
            check_dense_allocation((128, 128), "small")
            with self.assertRaises(ResourceLimitError):
                check_dense_allocation((1024, 1024), "large")

    def test_bad_env(self):
        with mock.patch.dict(os.environ, {MAX_MEM_ENV: "lots"}):
            with self.assertRaises(ResourceLimitError):
                max_dense_bytes()

    def test_default_cap(self):
        with mock.patch.dict(os.environ, {MAX_MEM_ENV: ""}):
            self.assertGreater(max_dense_bytes(), 0)
