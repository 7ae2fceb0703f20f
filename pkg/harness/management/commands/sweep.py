# External
from django.core.management.base import CommandParser

# Internal
from harness.management.base import HarnessCommand
from harness.models import RunConfig
from harness.serializers import SweepRowSerializer
from harness.service import ExperimentService


class Command(HarnessCommand):
    help = "Query probability over a range of domain sizes, one row per size."

    default_format = "csv"


    def add_arguments(self, parser: CommandParser) -> None:
        super().add_arguments(parser)
        parser.add_argument("--sizes", action="append", default=[], metavar="SORT=A..B[:STEP]",
                            help="Swept sizes of a sort; sorts without a size follow the first swept one")
        parser.add_argument("--query", metavar="STR", help="Query formula; free variables get distinct elements")
        parser.add_argument("--engine", choices=["enumerate", "factorized"], default="enumerate")


    def run(self, config: RunConfig) -> None:
        rows = ExperimentService.sweep(config)
        self.report(config, SweepRowSerializer(rows, many=True).data)
