# Built-in
from pathlib import Path
from typing import Any
import tempfile
from unittest.mock import patch

# External
import pytest

# Internal
from cmn.base_repo import BaseRepository
from cmn.base_test import TestClassBase
from cmn.errors import ModelDefinitionError, RepositoryError


class LinesRepository(BaseRepository[tuple]):
    """Concrete repository for tests: one entity is the tuple of non-empty lines."""

    CACHE_NAMESPACE = "tests"

    def decode(self, text: str, **context: Any) -> tuple:
        if "!" in text:
            raise ModelDefinitionError("bang")
        if "?" in text:
            raise KeyError("question")
        prefix = context.get("prefix", "")
        return tuple(prefix + line for line in text.splitlines() if line)

    def encode(self, entity: tuple) -> str:
        return "\n".join(entity) + "\n"


class RepositoryTestBase(TestClassBase):

    logger_target = "cmn.base_repo.logger"

    def setUp(self) -> None:
        super().setUp()
        directory = tempfile.TemporaryDirectory()
        self.addCleanup(directory.cleanup)
        self.root = Path(directory.name)


class BaseRepositoryPathTests(RepositoryTestBase):
    """Test BaseRepository path validation."""

    def test_validate_path_accepts_string(self) -> None:
        target = self.root / "a.txt"
        target.write_text("x\n")

        assert BaseRepository._validate_path(str(target)) == target


    def test_validate_path_with_none(self) -> None:
        with pytest.raises(RepositoryError, match="Path cannot be None"):
            BaseRepository._validate_path(None)


    def test_validate_path_with_blank_string(self) -> None:
        with pytest.raises(RepositoryError, match="Path cannot be empty string"):
            BaseRepository._validate_path("   ")


    def test_validate_path_with_wrong_type(self) -> None:
        with pytest.raises(RepositoryError, match="Path must be a string or Path, got int"):
            BaseRepository._validate_path(12)


    def test_validate_path_missing_file(self) -> None:
        with pytest.raises(RepositoryError, match="No such file"):
            BaseRepository._validate_path(self.root / "missing.txt")


    def test_validate_path_missing_file_allowed_for_writes(self) -> None:
        target = self.root / "new.txt"

        assert BaseRepository._validate_path(target, must_exist=False) == target


class BaseRepositoryLoadTests(RepositoryTestBase):
    """Test reading, decoding and caching."""

    def test_load_entity_decodes_file(self) -> None:
        target = self.root / "lines.txt"
        target.write_text("a\n\nb\n")

        assert LinesRepository().load_entity(target) == ("a", "b")


    def test_load_entity_passes_context(self) -> None:
        target = self.root / "lines.txt"
        target.write_text("a\n")

        assert LinesRepository().load_entity(target, prefix="> ") == ("> a",)


    def test_relscale_errors_pass_through(self) -> None:
        """Decoding errors of the engines keep their type and exit code."""

        target = self.root / "bad.txt"
        target.write_text("!\n")

        with pytest.raises(ModelDefinitionError, match="bang"):
            LinesRepository().load_entity(target)
        self.mock_exception_logger.assert_not_called()


    def test_unexpected_errors_are_wrapped(self) -> None:
        target = self.root / "odd.txt"
        target.write_text("?\n")

        with pytest.raises(RepositoryError, match="Failed to decode"):
            LinesRepository().load_entity(target)
        self.assert_logs_exception(f"Unexpected error decoding '{target}'")


    def test_cached_entity_is_reused(self) -> None:
        """
        GIVEN a repository with caching enabled
        WHEN the same unchanged file is loaded twice
        THEN it is decoded only once.
        """
        target = self.root / "cached.txt"
        target.write_text("a\n")
        repo = LinesRepository(cache_enabled=True)
        repo._cache_manager.clear()

        first = repo.load_entity(target)
        with self._patch_decode(repo) as decode:
            second = repo.load_entity(target)

        assert first == second
        decode.assert_not_called()


    def test_cache_disabled_decodes_every_time(self) -> None:
        target = self.root / "plain.txt"
        target.write_text("a\n")
        repo = LinesRepository()

        repo.load_entity(target)
        with self._patch_decode(repo) as decode:
            repo.load_entity(target)

        decode.assert_called_once()


    def test_edited_file_is_decoded_again(self) -> None:
        target = self.root / "edited.txt"
        target.write_text("a\n")
        repo = LinesRepository(cache_enabled=True)

        assert repo.load_entity(target) == ("a",)
        target.write_text("a\nb\nc\n")

        assert repo.load_entity(target) == ("a", "b", "c")


    def _patch_decode(self, repo: LinesRepository):
        return patch.object(repo, "decode", wraps=repo.decode)


class BaseRepositorySaveTests(RepositoryTestBase):
    """Test atomic writes."""

    def test_save_entity_writes_encoded_text(self) -> None:
        target = self.root / "nested" / "out.txt"

        written = LinesRepository().save_entity(target, ("x", "y"))

        assert written == target
        assert target.read_text() == "x\ny\n"
        self.assert_logs_info(f"Wrote 4 characters to {target}")


    def test_save_entity_replaces_existing_file(self) -> None:
        target = self.root / "out.txt"
        target.write_text("old\n")

        LinesRepository().save_entity(target, ("new",))

        assert target.read_text() == "new\n"
        assert [p.name for p in self.root.iterdir()] == ["out.txt"]


    def test_write_failure_raises_repository_error(self) -> None:
        blocker = self.root / "file"
        blocker.write_text("")

        with pytest.raises(RepositoryError, match="Failed to write"):
            LinesRepository().write_text(blocker / "child.txt", "x")


    def test_failed_replace_removes_temporary_file(self) -> None:
        target = self.root / "out.txt"

        with patch("cmn.base_repo.os.replace", side_effect=OSError("disk full")):
            with pytest.raises(RepositoryError, match="disk full"):
                LinesRepository().save_entity(target, ("x",))

        assert list(self.root.iterdir()) == []
        self.mock_exception_logger.assert_called_once()
