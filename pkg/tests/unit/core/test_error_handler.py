#!/usr/bin/env python3
"""
Simple tests for error handler that match actual implementation
"""
import logging
import os
import shutil
import tempfile
from io import StringIO
from unittest import TestCase
from unittest.mock import patch

from regsens.core.error_handler import (
    EXIT_INPUT,
    EXIT_MODEL,
    EXIT_SUITE,
    ErrorCategory,
    ErrorHandler,
    ErrorLevel,
    ConfigError,
    FileError,
    InputError,
    ModelError,
    MomentsError,
    NumericError,
    SuiteFailure,
)


class TestExceptionTypes(TestCase):
    """Exception hierarchy and exit codes"""

    def test_exit_codes(self):
        self.assertEqual(InputError("x").exit_code, EXIT_INPUT)
        self.assertEqual(ModelError("x").exit_code, EXIT_MODEL)
        self.assertEqual(NumericError("x").exit_code, EXIT_MODEL)
        self.assertEqual(SuiteFailure("x").exit_code, EXIT_SUITE)

    def test_moments_error_is_model_error(self):
        error = MomentsError("singular", kind="singular", block="W0")
        self.assertIsInstance(error, ModelError)
        self.assertEqual(error.category, ErrorCategory.MOMENTS)
        self.assertEqual(error.context, {"block": "W0"})


class TestErrorHandlerSimple(TestCase):
    """Test ErrorHandler basic functionality"""

    def setUp(self):
        """Set up test environment"""
        self.handler = ErrorHandler()

    def test_initialization(self):
        """Test error handler initialization"""
        self.assertIsNotNone(self.handler.logger)
        self.assertIsInstance(self.handler.logger, logging.Logger)
        self.assertEqual(self.handler.logger.name, "regsens.errors")

    def test_console_handler_not_duplicated(self):
        before = len(self.handler.logger.handlers)
        ErrorHandler()
        self.assertEqual(len(self.handler.logger.handlers), before)

    def test_handle_error_basic(self):
        """Test basic error handling"""
        # Errors are printed to stderr
        with patch('sys.stderr', new=StringIO()) as fake_err:
            self.handler.handle_error(InputError("bad", kind="missing_column", column="W9",
                                                 path="data.csv", available="Y, X"))
            output = fake_err.getvalue()

        self.assertIn("❌", output)
        self.assertIn("Column 'W9' not found in data.csv", output)

    def test_template_uses_error_context(self):
        with patch('sys.stderr', new=StringIO()):
            message = self.handler.handle_error(
                ModelError("r2", kind="r2_range", value=1.2, r2_med=0.5))
        self.assertIn("R2_long = 1.2 is outside (0.5, 1]", message)
        self.assertIn("💡", message)

    def test_missing_context_falls_back(self):
        with patch('sys.stderr', new=StringIO()):
            message = self.handler.handle_error(ModelError("no b given", kind="a3_fail"))
        self.assertIn("model error: no b given", message)

    def test_unknown_kind_uses_message(self):
        with patch('sys.stderr', new=StringIO()):
            message = self.handler.handle_error(NumericError("odd failure", kind="something_new"))
        self.assertTrue(message.startswith("odd failure"))

    def test_plain_exception_by_category(self):
        with patch('sys.stderr', new=StringIO()):
            message = self.handler.handle_error(FileNotFoundError("No such file"),
                                                ErrorCategory.FILE_SYSTEM, {"file_path": "x.csv"})
        self.assertIn("File not found: x.csv", message)

    def test_display_error_levels(self):
        """Test display with different error levels"""
        for level, icon in ((ErrorLevel.WARNING, "⚠️"), (ErrorLevel.ERROR, "❌")):
            with patch('sys.stderr', new=StringIO()) as fake_err:
                self.handler._display_error("Test", level)
                self.assertIn(icon, fake_err.getvalue())

    def test_suite_suggestion_names_fixture_dir(self):
        with patch('sys.stderr', new=StringIO()):
            message = self.handler.handle_error(
                SuiteFailure("x", kind="failed", suite="sharpness", failures=2, instances=20),
                context={"fixture_dir": "out/fixtures"})
        self.assertIn("Property suite 'sharpness' failed on 2 of 20 instances", message)
        self.assertIn("out/fixtures", message)


class TestLogFile(TestCase):

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        logger = logging.getLogger("regsens.errors")
        for handler in list(logger.handlers):
            if isinstance(handler, logging.FileHandler):
                handler.close()
                logger.removeHandler(handler)
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_details_written_to_file(self):
        path = os.path.join(self.temp_dir, "regsens.log")
        handler = ErrorHandler(log_file=path)
        with patch('sys.stderr', new=StringIO()):
            handler.handle_error(ModelError("empty", kind="empty_set"))
        for h in handler.logger.handlers:
            h.flush()
        with open(path) as f:
            content = f.read()
        self.assertIn("identified set is empty", content)
        self.assertIn("Error Type: ModelError", content)


class TestFileAndConfigErrors(TestCase):

    def setUp(self):
        self.handler = ErrorHandler()

    def test_categories_and_exit_code(self):
        self.assertEqual(FileError("x").category, ErrorCategory.FILE_SYSTEM)
        self.assertEqual(ConfigError("x").category, ErrorCategory.CONFIGURATION)
        self.assertEqual(FileError("x").exit_code, EXIT_INPUT)
        self.assertIsInstance(ConfigError("x"), InputError)

    def test_file_error_template(self):
        with patch('sys.stderr', new=StringIO()):
            message = self.handler.handle_error(
                FileError("File not found: data.csv", kind="not_found", file_path="data.csv"))
        self.assertIn("File not found: data.csv\nPlease ensure the file exists", message)
        self.assertIn("Verify the file path", message)

    def test_config_error_as_warning(self):
        error = ConfigError("bad", kind="invalid_config", field=".regsens.json",
                            expected="a JSON object", actual="list")
        with patch('sys.stderr', new=StringIO()) as fake_err:
            with self.assertLogs("regsens.errors", level="WARNING") as logs:
                message = self.handler.handle_error(error, level=ErrorLevel.WARNING)
        self.assertIn("Invalid configuration: .regsens.json", message)
        self.assertTrue(logs.output[0].startswith("WARNING:"))
        self.assertIn("⚠️", fake_err.getvalue())
