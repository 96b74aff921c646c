#!/usr/bin/env python3
"""
Centralized error handling, exception types and user-friendly error messages
"""
import sys
import traceback
import logging
from typing import Dict, Any, Optional
from enum import Enum


class ErrorLevel(Enum):
    """Error severity levels"""
    WARNING = "warning"
    ERROR = "error"


class ErrorCategory(Enum):
    """Error categories for better organization"""
    INPUT = "input"
    MOMENTS = "moments"
    MODEL = "model"
    NUMERIC = "numeric"
    FILE_SYSTEM = "file_system"
    CONFIGURATION = "configuration"
    PROPERTY_SUITE = "property_suite"
    SYSTEM = "system"


# Exit codes used by the command-line interface
EXIT_INPUT = 2
EXIT_MODEL = 3
EXIT_SUITE = 4


class RegsensError(Exception):
    """Base class for all errors raised by regsens."""

    category = ErrorCategory.SYSTEM
    exit_code = EXIT_MODEL

    def __init__(self, message: str, kind: str = "unexpected", **context: Any):
        super().__init__(message)
        self.kind = kind
        self.context = context


class InputError(RegsensError):
    """Bad data file, column roles or command-line values."""

    category = ErrorCategory.INPUT
    exit_code = EXIT_INPUT


class FileError(InputError):
    """A data, moments or configuration file is missing or unreadable."""

    category = ErrorCategory.FILE_SYSTEM


class ConfigError(InputError):
    """A configuration file is not valid JSON or has the wrong shape."""

    category = ErrorCategory.CONFIGURATION


class ModelError(RegsensError):
    """The moments or assumptions do not support the requested quantity."""

    category = ErrorCategory.MODEL
    exit_code = EXIT_MODEL


class MomentsError(ModelError):
    """Singular or non positive definite moment blocks."""

    category = ErrorCategory.MOMENTS


class NumericError(RegsensError):
    """A numerical routine failed in a way the theory rules out."""

    category = ErrorCategory.NUMERIC
    exit_code = EXIT_MODEL


class SuiteFailure(RegsensError):
    """A property suite found a violating instance."""

    category = ErrorCategory.PROPERTY_SUITE
    exit_code = EXIT_SUITE


class ErrorHandler:
    """Centralized error handling with user-friendly messages"""

    # User-friendly error messages
    ERROR_MESSAGES = {
        ErrorCategory.INPUT: {
            "missing_column": "Column '{column}' not found in {path}.\nAvailable columns: {available}",
            "non_numeric": "Column '{column}' contains a non-numeric value: {value!r} (row {row}).",
            "duplicate_role": "Column '{column}' is assigned to more than one role.",
            "too_few_rows": "Only {n} rows for {columns} columns; at least {required} are needed.",
            "bad_flag": "Invalid value for {flag}: {value!r}\nExpected: {expected}",
            "no_calibration": "calibration controls required: pass at least one --w1 column.",
        },
        ErrorCategory.MOMENTS: {
            "not_positive_definite": "The covariance of {block} is not positive definite (collinear columns?).",
            "singular": "Var({block}) is singular; drop redundant columns.",
            "asymmetric": "The supplied covariance matrix is not symmetric.",
        },
        ErrorCategory.MODEL: {
            "r2_range": "R2_long = {value:.6g} is outside ({r2_med:.6g}, 1].",
            "a3_fail": "b = {b:.6g} implies gamma_1,long = 0, so delta is undefined there.",
            "no_finite_delta": "No finite delta reaches b = {b:.6g} at this R2_long.",
            "no_movement": "beta_short equals beta_med; delta cannot be inverted.",
            "empty_set": "The identified set is empty under the stated restrictions.",
            "baseline_zero": "The sign change breakdown point is not defined when beta_med = 0.",
            "not_a_root": "b = {b:.6g} is not in the identified set at delta = {delta:.6g} (residual {residual:.3g}).",
            "assumption": "The data-generating process violates {assumption}.",
        },
        ErrorCategory.NUMERIC: {
            "zero_polynomial": "All polynomial coefficients vanished; the moments are inconsistent.",
            "not_psd": "Constructed covariance is not positive semi-definite (min eigenvalue {eigenvalue:.3g}).",
            "rejection_budget": "No acceptable random draw after {budget} attempts.",
        },
        ErrorCategory.FILE_SYSTEM: {
            "not_found": "File not found: {file_path}\nPlease ensure the file exists and the path is correct.",
            "permission": "Permission denied accessing: {file_path}\nPlease check file permissions.",
        },
        ErrorCategory.CONFIGURATION: {
            "invalid_config": "Invalid configuration: {field}\nExpected: {expected}\nGot: {actual}",
        },
        ErrorCategory.PROPERTY_SUITE: {
            "failed": "Property suite '{suite}' failed on {failures} of {instances} instances.",
        },
        ErrorCategory.SYSTEM: {
            "unexpected": "An unexpected error occurred: {details}\nPlease report this issue.",
        }
    }

    def __init__(self, log_file: Optional[str] = None):
        """Initialize error handler with optional logging"""
        self.log_file = log_file
        self.logger = self._setup_logger()

    def _setup_logger(self) -> logging.Logger:
        """Set up logging configuration"""
        logger = logging.getLogger("regsens.errors")
        logger.setLevel(logging.DEBUG)
        logger.propagate = False

        if not any(getattr(h, '_regsens_console', False) for h in logger.handlers):
            # Console handler with user-friendly format
            console_handler = logging.StreamHandler(sys.stderr)
            console_handler.setLevel(logging.INFO)
            console_handler.setFormatter(logging.Formatter('%(levelname)s: %(message)s'))
            console_handler._regsens_console = True
            logger.addHandler(console_handler)

        # File handler with detailed format
        if self.log_file:
            file_handler = logging.FileHandler(self.log_file)
            file_handler.setLevel(logging.DEBUG)
            file_handler.setFormatter(logging.Formatter(
                '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
            ))
            logger.addHandler(file_handler)

        return logger

    def handle_error(self,
                     error: Exception,
                     category: Optional[ErrorCategory] = None,
                     context: Optional[Dict[str, Any]] = None,
                     level: ErrorLevel = ErrorLevel.ERROR) -> str:
        """Handle an error with user-friendly messaging"""
        if category is None:
            category = getattr(error, 'category', ErrorCategory.SYSTEM)
        context = dict(getattr(error, 'context', {}) or {}, **(context or {}))

        message_template = self._get_error_message(error, category, context)

        # Format the message with context
        try:
            user_message = message_template.format(**context)
        except (KeyError, ValueError, IndexError):
            user_message = f"{category.value} error: {str(error)}"

        suggestion = self._get_suggestion(error, category, context)
        if suggestion:
            user_message += f"\n💡 {suggestion}"

        self._log_error(error, category, context, user_message, level)
        self._display_error(user_message, level)

        return user_message

    def _get_error_message(self, error: Exception, category: ErrorCategory, context: Dict[str, Any]) -> str:
        """Get appropriate error message template"""
        error_type = self._identify_error_type(error, category, context)

        category_messages = self.ERROR_MESSAGES.get(category, {})
        return category_messages.get(error_type, str(error))

    def _identify_error_type(self, error: Exception, category: ErrorCategory, context: Dict[str, Any]) -> str:
        """Identify specific error type within category"""
        kind = getattr(error, 'kind', None)
        if kind:
            return kind

        error_str = str(error).lower()
        if category == ErrorCategory.FILE_SYSTEM:
            if "not found" in error_str or "no such file" in error_str:
                return "not_found"
            elif "permission" in error_str or "access denied" in error_str:
                return "permission"

        elif category == ErrorCategory.MOMENTS:
            if "singular" in error_str:
                return "singular"
            elif "positive definite" in error_str:
                return "not_positive_definite"

        return "unknown"

    def _get_suggestion(self, error: Exception, category: ErrorCategory, context: Dict[str, Any]) -> Optional[str]:
        """Get helpful suggestion for the error"""
        suggestions = {
            ErrorCategory.INPUT: self._get_input_suggestion,
            ErrorCategory.MOMENTS: self._get_moments_suggestion,
            ErrorCategory.MODEL: self._get_model_suggestion,
            ErrorCategory.FILE_SYSTEM: self._get_file_suggestion,
            ErrorCategory.CONFIGURATION: self._get_config_suggestion,
            ErrorCategory.PROPERTY_SUITE: self._get_suite_suggestion,
        }

        handler = suggestions.get(category)
        if handler:
            return handler(error, context)

        return None

    def _get_input_suggestion(self, error: Exception, context: Dict[str, Any]) -> str:
        """Get suggestion for input errors"""
        if getattr(error, 'kind', '') == 'non_numeric':
            return "Clean or drop missing values before running the analysis"
        return "Check the column roles and flag values (regsens <command> --help)"

    def _get_moments_suggestion(self, error: Exception, context: Dict[str, Any]) -> str:
        """Get suggestion for moment errors"""
        return "Remove collinear controls or check that the treatment varies after partialling out"

    def _get_model_suggestion(self, error: Exception, context: Dict[str, Any]) -> Optional[str]:
        """Get suggestion for model errors"""
        if getattr(error, 'kind', '') == 'r2_range':
            return "Use --r2long 1.0 or a multiple such as 1.3x that stays at or below 1"
        return None

    def _get_file_suggestion(self, error: Exception, context: Dict[str, Any]) -> str:
        """Get suggestion for file system errors"""
        if 'not found' in str(error).lower():
            return "Verify the file path and ensure the file exists"
        return "Check file system permissions"

    def _get_config_suggestion(self, error: Exception, context: Dict[str, Any]) -> str:
        """Get suggestion for configuration errors"""
        return "Run 'regsens config' to inspect the effective configuration"

    def _get_suite_suggestion(self, error: Exception, context: Dict[str, Any]) -> str:
        """Get suggestion for property suite failures"""
        fixture_dir = context.get('fixture_dir', 'the output directory')
        return f"Replay the failing instances saved in {fixture_dir}"

    def _log_error(self, error: Exception, category: ErrorCategory,
                   context: Dict[str, Any], user_message: str, level: ErrorLevel):
        """Log error with full details"""
        log_method = getattr(self.logger, level.value, self.logger.error)
        log_method(user_message)

        # Technical details at debug level
        self.logger.debug(f"Error Category: {category.value}")
        self.logger.debug(f"Error Type: {type(error).__name__}")
        self.logger.debug(f"Error Details: {str(error)}")
        self.logger.debug(f"Context: {context}")

        if level == ErrorLevel.ERROR:
            self.logger.debug("Traceback:\n" + traceback.format_exc())

    def _display_error(self, message: str, level: ErrorLevel):
        """Display error to user with appropriate formatting"""
        colors = {
            ErrorLevel.WARNING: '\033[93m',   # Yellow
            ErrorLevel.ERROR: '\033[91m',     # Red
        }
        reset_color = '\033[0m'

        icons = {
            ErrorLevel.WARNING: '⚠️ ',
            ErrorLevel.ERROR: '❌ ',
        }

        color = colors.get(level, '')
        icon = icons.get(level, '')

        print(f"\n{color}{icon}{message}{reset_color}\n", file=sys.stderr)


# Global error handler instance
error_handler = ErrorHandler()
