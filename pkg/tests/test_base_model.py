"""Test cases for BaseModel validation and copying."""

# Built-in
from dataclasses import dataclass

# External
import pytest

# Internal
from cmn.base_model import BaseModel
from cmn.base_test import TestClassBase
from cmn.errors import ModelDefinitionError


@dataclass(frozen=True)
class Interval(BaseModel):
    """Concrete value type used only by these tests."""

    low: int
    high: int

    def _validate_hook(self) -> None:
        if self.low > self.high:
            raise ModelDefinitionError(f"empty interval [{self.low}, {self.high}]")


class BaseModelValidationTests(TestClassBase):
    """Construction runs the validation hook."""

    logger_target = "cmn.base_model.logger"

    def test_valid_instance_is_built(self) -> None:
        """Should build an instance without logging when the hook passes."""

        # Act
        interval = Interval(1, 3)

        # Assert
        self.assertEqual((interval.low, interval.high), (1, 3))
        self.assert_no_errors_logged()


    def test_invalid_instance_raises_and_logs(self) -> None:
        """Should re-raise the hook's error and log it once."""

        with pytest.raises(ModelDefinitionError, match="empty interval"):
            Interval(3, 1)

        self.mock_error_logger.assert_called_once_with("Invalid Interval: empty interval [3, 1]")


    def test_unexpected_error_is_logged_as_exception(self) -> None:
        """Should log non-ValueError failures with the traceback and re-raise them."""

        @dataclass(frozen=True)
        class Broken(BaseModel):
            def _validate_hook(self) -> None:
                raise RuntimeError("boom")

        with pytest.raises(RuntimeError, match="boom"):
            Broken()

        self.assert_logs_exception("Unexpected error validating Broken: boom")


class BaseModelUpdateTests(TestClassBase):
    """`update()` returns validated copies."""

    def test_update_returns_modified_copy(self) -> None:
        original = Interval(1, 3)

        updated = original.update(high=5)

        assert updated == Interval(1, 5)
        assert original == Interval(1, 3)


    def test_update_without_changes_returns_same_instance(self) -> None:
        original = Interval(1, 3)

        assert original.update() is original


    def test_update_with_unknown_field_raises(self) -> None:
        with pytest.raises(ValueError, match="Unexpected fields for Interval: width"):
            Interval(1, 3).update(width=2)


    def test_update_revalidates(self) -> None:
        """Should refuse a copy that breaks the invariant."""

        with pytest.raises(ModelDefinitionError, match="empty interval"):
            Interval(1, 3).update(low=4)


    def test_to_dict_lists_fields_in_order(self) -> None:
        self.assertEqual(Interval(2, 7).to_dict(), {"low": 2, "high": 7})
