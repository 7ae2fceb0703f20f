# External
from django.core.management.base import CommandError

# Internal
from harness.management.base import HarnessCommand
from harness.models import RunConfig
from harness.service import ExperimentService


class Command(HarnessCommand):
    help = "Parse a model file and check that it is well-formed."


    def run(self, config: RunConfig) -> None:
        violations = ExperimentService.validate(config)
        if not violations:
            self.emit(config, f"{config.model}: ok\n")
            return
        self.emit(config, "".join(f"{config.model}: {violation}\n" for violation in violations))
        raise CommandError(f"{len(violations)} violation(s) in {config.model}", returncode=1)
