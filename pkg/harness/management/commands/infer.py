# External
from django.core.management.base import CommandParser

# Internal
from harness.management.base import HarnessCommand
from harness.models import RunConfig
from harness.serializers import InferenceResultSerializer
from harness.service import ExperimentService


class Command(HarnessCommand):
    help = "Exact probability of a query, optionally given evidence, on fixed domain sizes."


    def add_arguments(self, parser: CommandParser) -> None:
        super().add_arguments(parser)
        self.add_query_arguments(parser)
        parser.add_argument("--engine", choices=["enumerate", "factorized"], default="enumerate")


    def run(self, config: RunConfig) -> None:
        result = ExperimentService.infer(config)
        if config.format == "table":
            self.emit(config, f"{result['value']!r}\n")
            return
        self.report(config, InferenceResultSerializer(result).data)
