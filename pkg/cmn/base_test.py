# Built-in
from pathlib import Path
from typing import Optional, Union
from unittest.mock import MagicMock, patch

# External
from django.test import SimpleTestCase

# Internal
from cmn.conf import get_setting
from logic.models import DomainAssignment, Signature
from logic.repo import ModelRepository


class TestClassBase(SimpleTestCase):
    """
    Base class for the engine tests.

    No database is involved. Provides:
    - Loading of the shipped model files from `cmn/fixtures`
    - Patch helpers registered with addCleanup()
    - Logger mocks with assertion helpers for the module under test

    Subclasses set `logger_target` to the dotted path of the logger they
    want to observe (for example "rlr.learning.logger").
    """

    logger_target: Optional[str] = None

    def setUp(self) -> None:
        super().setUp()
        self._setup_logging_mocks()

    def _setup_logging_mocks(self) -> None:
        """Set up mocks for the observed logger, when there is one."""
        if self.logger_target is None:
            self.mock_logger = MagicMock()
        else:
            self.mock_logger = self._start_patch_with_cleanup(self.logger_target)

        # Convenient references to specific log level methods
        self.mock_info_logger = self.mock_logger.info
        self.mock_warning_logger = self.mock_logger.warning
        self.mock_error_logger = self.mock_logger.error
        self.mock_exception_logger = self.mock_logger.exception

    def _start_patch_with_cleanup(self, target: str, **kwargs) -> MagicMock:
        """
        Start a patch and register it for automatic cleanup.

        Args:
            target: The import path to patch
            **kwargs: Passed to `unittest.mock.patch`

        Returns:
            The mock object created by the patch
        """
        patcher = patch(target, **kwargs)
        mock_obj = patcher.start()
        self.addCleanup(patcher.stop)
        return mock_obj

    # Fixture helpers
    @staticmethod
    def fixture_path(name: str) -> Path:
        return Path(get_setting("FIXTURES_DIR")) / name

    def load_model(self, name: str):
        """Parse a shipped model file; returns `(signature, model)`."""
        return ModelRepository().load_entity(self.fixture_path(name))

    @staticmethod
    def sizes(signature: Union[Signature, None] = None, n: int = 1, **sizes: int) -> DomainAssignment:
        """Domain sizes: explicit ones from keywords, else `n` for every sort of `signature`."""
        if sizes:
            return DomainAssignment.from_sizes(sizes)
        return DomainAssignment.uniform(signature.sorts, n)

    # Logging assertion helpers
    def assert_logs_warning(self, fragment: str, call_count: Optional[int] = None) -> None:
        """
        Assert that a warning containing `fragment` was logged.

        Args:
            fragment: Text the warning message must contain
            call_count: Expected number of warnings (optional)
        """
        if call_count is not None:
            self.assertEqual(self.mock_warning_logger.call_count, call_count)
        messages = [call.args[0] for call in self.mock_warning_logger.call_args_list]
        self.assertTrue(any(fragment in message for message in messages), f"no warning containing {fragment!r}: {messages}")

    def assert_no_warnings_logged(self) -> None:
        """Assert that no warning messages were logged."""
        self.mock_warning_logger.assert_not_called()

    def assert_logs_info(self, expected_message: str, call_count: Optional[int] = None) -> None:
        """
        Assert that a specific info message was logged last.

        Args:
            expected_message: The expected info message
            call_count: Expected number of times info was logged (optional)
        """
        if call_count is not None:
            self.assertEqual(self.mock_info_logger.call_count, call_count)
        self.mock_info_logger.assert_called_with(expected_message)

    def assert_logs_exception(self, expected_message: str) -> None:
        self.mock_exception_logger.assert_called_with(expected_message)

    def assert_no_errors_logged(self) -> None:
        """Assert that no error messages were logged."""
        self.mock_error_logger.assert_not_called()
