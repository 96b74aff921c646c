#!/usr/bin/env python3
"""
Tests for analysis configuration: defaults, project file and flag overrides
"""
import json
import os
import shutil
import tempfile
from io import StringIO
from unittest import TestCase
from unittest.mock import patch

from regsens.core.analysis_config import (
    CONFIG_FILENAME,
    DEFAULT_CONFIG,
    AnalysisConfig,
    deep_update,
    parse_floats,
    split_list,
)
from regsens.core.error_handler import (
    EXIT_INPUT,
    ConfigError,
    ErrorCategory,
    ErrorHandler,
    FileError,
    InputError,
)
from regsens.core.moments import ColumnRoles, R2Rule
from regsens.core.osterset import MagnitudeBound


class TestHelpers(TestCase):

    def test_split_list(self):
        self.assertEqual(split_list("a, b"), ["a", "b"])
        self.assertEqual(split_list(["a", "b,c"]), ["a", "b", "c"])
        self.assertEqual(split_list(None), [])

    def test_parse_floats(self):
        self.assertEqual(parse_floats(["0.5,1", 2], "--delta"), [0.5, 1.0, 2.0])
        with self.assertRaises(InputError):
            parse_floats(["x"], "--delta")
        with self.assertRaises(InputError):
            parse_floats(["inf"], "--delta")
        with self.assertRaises(InputError):
            parse_floats(["-1"], "--delta-bar", nonnegative=True)

    def test_deep_update(self):
        merged = deep_update({"a": {"b": 1, "c": 2}}, {"a": {"c": 3}})
        self.assertEqual(merged, {"a": {"b": 1, "c": 3}})


class TestAnalysisConfig(TestCase):

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_defaults(self):
        cfg = AnalysisConfig.from_options(project_root=self.temp_dir)
        self.assertEqual(cfg.r2_rules, [R2Rule("one")])
        self.assertEqual(cfg.deltas, [1.0])
        self.assertEqual(cfg.m_bounds, [MagnitudeBound()])
        self.assertIsNone(cfg.roles)
        self.assertEqual(cfg.cov_denominator, "n-1")

    def test_defaults_not_mutated(self):
        AnalysisConfig.from_options(project_root=self.temp_dir, delta=("3",))
        self.assertEqual(DEFAULT_CONFIG["sensitivity"]["delta"], [1.0])

    def test_flags_override(self):
        cfg = AnalysisConfig.from_options(
            project_root=self.temp_dir, data="d.csv", outcome="Y", treatment="X",
            w1=("W1,W2",), w0=("A",), r2long=("1.0", "1.3x"), delta=("0.5", "2"),
            m=("2x", "abs:1"), json_output=True)
        self.assertEqual(cfg.roles, ColumnRoles("Y", "X", ("A",), ("W1", "W2")))
        self.assertEqual([r.label() for r in cfg.r2_rules], ["1", "1.3x R2_med"])
        self.assertEqual(cfg.deltas, [0.5, 2.0])
        self.assertEqual([m.label() for m in cfg.m_bounds], ["2x|beta_med|", "1"])
        self.assertTrue(cfg.json_output)
        cfg.require_source()

    def test_project_file_supplies_defaults(self):
        with open(os.path.join(self.temp_dir, CONFIG_FILENAME), "w") as f:
            json.dump({"sensitivity": {"r2long": ["0.9"]}, "oracle": {"seed": 11}}, f)
        cfg = AnalysisConfig.from_options(project_root=self.temp_dir)
        self.assertEqual(cfg.r2_rules, [R2Rule("absolute", 0.9)])
        self.assertEqual(cfg.seed, 11)
        # flags still win
        cfg = AnalysisConfig.from_options(project_root=self.temp_dir, seed=3)
        self.assertEqual(cfg.seed, 3)

    def test_broken_project_file_ignored(self):
        with open(os.path.join(self.temp_dir, CONFIG_FILENAME), "w") as f:
            f.write("{not json")
        with patch('sys.stderr', new=StringIO()) as fake_err:
            with self.assertLogs("regsens.errors", level="WARNING") as logs:
                cfg = AnalysisConfig.from_options(project_root=self.temp_dir)
        self.assertEqual(cfg.deltas, [1.0])
        self.assertIn("Invalid configuration", logs.output[0])
        self.assertIn("⚠️", fake_err.getvalue())

    def test_project_section_must_be_object(self):
        with open(os.path.join(self.temp_dir, CONFIG_FILENAME), "w") as f:
            json.dump({"sensitivity": "1.3x"}, f)
        with patch('sys.stderr', new=StringIO()):
            with self.assertLogs("regsens.errors", level="WARNING"):
                cfg = AnalysisConfig.from_options(project_root=self.temp_dir)
        self.assertEqual(cfg.r2_rules, [R2Rule("one")])

    def test_unknown_option(self):
        with self.assertRaises(InputError):
            AnalysisConfig.from_options(project_root=self.temp_dir, colour="red")

    def test_half_roles_rejected(self):
        with self.assertRaises(InputError):
            AnalysisConfig.from_options(project_root=self.temp_dir, outcome="Y")

    def test_bad_denominator(self):
        with self.assertRaises(InputError):
            AnalysisConfig.from_options(project_root=self.temp_dir, cov_denominator="n+1")

    def test_empty_curve_range(self):
        with self.assertRaises(InputError):
            AnalysisConfig.from_options(project_root=self.temp_dir, b_min=2.0, b_max=1.0)
        cfg = AnalysisConfig.from_options(project_root=self.temp_dir, b_min=-1.0, b_max=1.0)
        self.assertEqual(cfg.b_range, (-1.0, 1.0))

    def test_require_source(self):
        with self.assertRaises(InputError):
            AnalysisConfig.from_options(project_root=self.temp_dir).require_source()
        with self.assertRaises(InputError):
            AnalysisConfig.from_options(project_root=self.temp_dir, data="d.csv").require_source()
        with self.assertRaises(InputError) as ctx:
            AnalysisConfig.from_options(project_root=self.temp_dir, data="d.csv", outcome="Y",
                                        treatment="X").require_source()
        self.assertEqual(ctx.exception.kind, "no_calibration")
        AnalysisConfig.from_options(project_root=self.temp_dir, moments="m.json").require_source()

    def test_save_and_load(self):
        cfg = AnalysisConfig.from_options(project_root=self.temp_dir, delta_bar=("1", "2"), seed=5)
        path = os.path.join(self.temp_dir, "saved.json")
        cfg.save(path)
        loaded = AnalysisConfig.load(path)
        self.assertEqual(loaded.delta_bars, [1.0, 2.0])
        self.assertEqual(loaded.seed, 5)

    def test_load_missing(self):
        with self.assertRaises(FileError) as ctx:
            AnalysisConfig.load(os.path.join(self.temp_dir, "missing.json"))
        self.assertIsInstance(ctx.exception, InputError)
        self.assertEqual(ctx.exception.category, ErrorCategory.FILE_SYSTEM)
        self.assertEqual(ctx.exception.kind, "not_found")
        with patch('sys.stderr', new=StringIO()):
            message = ErrorHandler().handle_error(ctx.exception)
        self.assertIn("File not found:", message)
        self.assertIn("missing.json", message)
        self.assertIn("Verify the file path", message)

    def test_load_invalid_json(self):
        path = os.path.join(self.temp_dir, "saved.json")
        with open(path, "w") as f:
            f.write("[1, 2")
        with self.assertRaises(ConfigError) as ctx:
            AnalysisConfig.load(path)
        self.assertEqual(ctx.exception.category, ErrorCategory.CONFIGURATION)
        self.assertEqual(ctx.exception.exit_code, EXIT_INPUT)
        with patch('sys.stderr', new=StringIO()):
            message = ErrorHandler().handle_error(ctx.exception)
        self.assertIn("Invalid configuration: " + path, message)
        self.assertIn("Expected: a JSON object", message)
        self.assertIn("regsens config", message)

    def test_load_non_object(self):
        path = os.path.join(self.temp_dir, "saved.json")
        with open(path, "w") as f:
            json.dump([1, 2], f)
        with self.assertRaises(ConfigError) as ctx:
            AnalysisConfig.load(path)
        self.assertEqual(ctx.exception.context["actual"], "list")
