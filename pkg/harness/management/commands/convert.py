# External
from django.core.management.base import CommandParser

# Internal
from harness.management.base import HarnessCommand
from harness.models import RunConfig
from harness.service import ExperimentService


class Command(HarnessCommand):
    help = "Rewrite an RLR model for unscaled or domain-aware semantics on fixed domain sizes."


    def add_arguments(self, parser: CommandParser) -> None:
        super().add_arguments(parser)
        parser.add_argument("--to", choices=["da", "unscaled"], required=True)


    def run(self, config: RunConfig) -> None:
        self.emit(config, ExperimentService.convert(config))
