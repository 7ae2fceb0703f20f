# External
from django.core.management.base import CommandParser

# Internal
from harness.management.base import HarnessCommand
from harness.models import RunConfig
from harness.service import ExperimentService


class Command(HarnessCommand):
    help = "Fit the weights of an RLR structure to a sample file; prints the learned model."


    def add_arguments(self, parser: CommandParser) -> None:
        super().add_arguments(parser)
        parser.add_argument("samples_path", metavar="SAMPLES", help="Sample file written by 'sample'")


    def run(self, config: RunConfig) -> None:
        text, fits = ExperimentService.learn(config)
        for fit in fits:
            status = "clamped" if fit.clamped else ("converged" if fit.converged else "not converged")
            self.stderr.write(
                f"{fit.relation}: {status} after {fit.iterations} iterations on {fit.rows} rows, "
                f"gradient norm {fit.gradient_norm:.3g}"
            )
        self.emit(config, text)
