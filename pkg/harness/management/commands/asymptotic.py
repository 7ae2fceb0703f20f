# External
from django.core.management.base import CommandParser

# Internal
from harness.management.base import HarnessCommand
from harness.models import RunConfig
from harness.serializers import AsymptoticReportSerializer, LimitCheckRowSerializer
from harness.service import ExperimentService


class Command(HarnessCommand):
    help = (
        "Limit probability of a query as all domains grow. With --sizes, --samples and --seed, "
        "compare it with sampled frequencies at each size instead."
    )

    default_format = "json"


    def add_arguments(self, parser: CommandParser) -> None:
        super().add_arguments(parser)
        self.add_query_arguments(parser)
        self.add_sampling_arguments(parser)
        parser.add_argument("--sizes", action="append", default=[], metavar="SORT=A..B[:STEP]")


    def run(self, config: RunConfig) -> None:
        result = ExperimentService.asymptotic(config)
        if isinstance(result, list):
            self.report(config, LimitCheckRowSerializer(result, many=True).data, seed=config.seed)
        else:
            self.report(config, AsymptoticReportSerializer(result).data)
