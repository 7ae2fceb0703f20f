# Built-in
from __future__ import annotations
from typing import Any, Optional
import logging

# External
from django.core.management.base import BaseCommand, CommandError, CommandParser

# Internal
from cmn.errors import RelscaleError
from harness.models import RunConfig
from harness.renderers import ReportRenderer
from harness.repo import ReportRepository
from harness.serializers import RunConfigSerializer

logger = logging.getLogger(__name__)


class HarnessCommand(BaseCommand):
    """
    Shared plumbing of the experiment commands.

    Options are validated by RunConfigSerializer. Invalid options end the
    command with status 1; engine errors end it with their own exit code.
    Reports go to stdout unless --out names a file; logs go to stderr.
    """

    requires_system_checks: list[str] = []

    # Randomized commands require --seed and --samples.
    sampling = False
    default_format = "table"


    def add_arguments(self, parser: CommandParser) -> None:
        parser.add_argument("model", help="Model file in the DSL")
        parser.add_argument("--size", action="append", default=[], metavar="SORT=N",
                            help="Domain size of a sort (repeatable)")
        parser.add_argument("--out", metavar="PATH", help="Write the output to PATH instead of stdout")
        parser.add_argument("--format", choices=ReportRenderer.FORMATS, default=self.default_format)


    def add_query_arguments(self, parser: CommandParser) -> None:
        parser.add_argument("--query", metavar="STR", help="Query formula; e1, e2, ... name domain elements")
        parser.add_argument("--evidence", metavar="STR", help="Evidence formula to condition on")


    def add_sampling_arguments(self, parser: CommandParser) -> None:
        parser.add_argument("--seed", metavar="U64", help="Seed of the random streams")
        parser.add_argument("--samples", metavar="N", help="Number of sampled worlds")


    def config(self, options: dict[str, Any], **extra: Any) -> RunConfig:
        keys = ("model", "samples_path", "size", "sizes", "query", "evidence", "engine",
                "seed", "samples", "out", "format", "to", "sub_size")
        data = {key: options[key] for key in keys if options.get(key) is not None}
        data.update(extra)
        serializer = RunConfigSerializer(data=data, context={"sampling": self.sampling})
        if not serializer.is_valid():
            raise CommandError(self.describe_errors(serializer.errors), returncode=1)
        try:
            return serializer.save()
        except RelscaleError as e:
            raise CommandError(str(e), returncode=e.exit_code) from e


    @staticmethod
    def describe_errors(errors: dict) -> str:
        parts = []
        for field, messages in errors.items():
            if isinstance(messages, dict):
                messages = [f"{key}: {value}" for key, value in messages.items()]
            text = "; ".join(str(message) for message in messages)
            parts.append(text if field == "non_field_errors" else f"--{field.replace('_', '-')}: {text}")
        return "invalid options: " + " | ".join(parts)


    def handle(self, *args: Any, **options: Any) -> None:
        config = self.config(options)
        try:
            self.run(config)
        except RelscaleError as e:
            logger.error(f"{self.__class__.__module__.rsplit('.', 1)[-1]} failed: {e}")
            raise CommandError(str(e), returncode=e.exit_code) from e


    def run(self, config: RunConfig) -> None:
        raise NotImplementedError


    def emit(self, config: RunConfig, text: str) -> None:
        if config.out is not None:
            ReportRepository().write_text(config.out, text)
        else:
            self.stdout.write(text, ending="")


    def report(self, config: RunConfig, data: Any, seed: Optional[int] = None) -> None:
        self.emit(config, ReportRenderer.render(data, config.format, seed))
