# External
from django.core.management.base import CommandParser

# Internal
from harness.management.base import HarnessCommand
from harness.models import RunConfig
from harness.service import ExperimentService


class Command(HarnessCommand):
    help = "Draw worlds from an RLR model by forward sampling and write them as a sample file."

    sampling = True


    def add_arguments(self, parser: CommandParser) -> None:
        super().add_arguments(parser)
        self.add_sampling_arguments(parser)
        parser.add_argument("--sub-size", action="append", default=[], metavar="SORT=M",
                            help="Keep one random induced substructure of this size per world")


    def run(self, config: RunConfig) -> None:
        batch = ExperimentService.sample(config)
        self.emit(config, ExperimentService.encode_samples(batch))
