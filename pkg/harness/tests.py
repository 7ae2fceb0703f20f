# Built-in
from io import StringIO
from pathlib import Path
import json
import math
import tempfile

# External
from django.core.management import call_command
from django.core.management.base import CommandError
from scipy.special import expit
import pytest

# Internal
from cmn.base_test import TestClassBase
from cmn.errors import ConfigurationError
from harness.models import RunConfig
from harness.renderers import ReportRenderer
from harness.serializers import RunConfigSerializer
from logic.parser import parse_model
from rlr.models import RlrModel

CYCLIC = "sort person; pred R(person); pred Q(person); rlr { node R(x) { 1.0 : Q(x); } node Q(x) { 1.0 : R(x); } }"
UNSCALED = "sort person; pred R(person); prop P; rlr { semantics: unscaled; node R(x) { 0.0 : true; } node P { 1.0 : R(y); } }"


class RunConfigSerializerTests(TestClassBase):

    def parse(self, sampling: bool = False, **data) -> RunConfigSerializer:
        serializer = RunConfigSerializer(data={"model": "m.rlr", **data}, context={"sampling": sampling})
        serializer.is_valid()
        return serializer

############
# POSITIVE #
############

    def test_defaults(self) -> None:
        config = self.parse().save()

        self.assertEqual(config.model, Path("m.rlr"))
        self.assertEqual(config.format, "table")
        self.assertEqual(config.engine, "enumerate")
        assert config.seed is None and config.out is None and not config.is_sweep


    def test_size_ranges(self) -> None:
        serializer = self.parse(sizes=["person=1..5:2", "course=2,4"], size=["student=3"])

        config = serializer.save()

        self.assertEqual(config.ranges, (("person", (1, 3, 5)), ("course", (2, 4))))
        self.assertEqual(config.fixed, (("student", 3),))


    def test_sampling_options(self) -> None:
        config = self.parse(sampling=True, seed="18446744073709551615", samples="10", sub_size=["person=2"]).save()

        self.assertEqual(config.seed, 2**64 - 1)
        self.assertEqual(config.samples, 10)
        self.assertEqual(config.substructure, (("person", 2),))

############
# NEGATIVE #
############

    def test_malformed_sizes(self) -> None:
        cases = {
            "size": (["person"], "not of the form SORT=N"),
            "sizes": (["person=5..1"], "is empty"),
        }
        for field, (value, message) in cases.items():
            with self.subTest(field=field):
                serializer = self.parse(**{field: value})
                assert message in str(serializer.errors[field])
        assert "at least 1" in str(self.parse(size=["person=0"]).errors["size"])
        assert "at least 1" in str(self.parse(sizes=["person=0..3"]).errors["sizes"])


    def test_sampling_requires_seed_and_samples(self) -> None:
        serializer = self.parse(sampling=True)

        self.assertEqual(set(serializer.errors), {"seed", "samples"})


    def test_seed_range(self) -> None:
        assert "seed" in self.parse(seed="-1").errors
        assert "seed" in self.parse(seed=str(2**64)).errors


    def test_sort_with_size_and_range(self) -> None:
        serializer = self.parse(size=["person=2"], sizes=["person=1..3"])

        with pytest.raises(ConfigurationError, match="both a size and a size range"):
            serializer.save()


class RunConfigTests(TestClassBase):

    def test_unsized_sorts_follow_first_swept_sort(self) -> None:
        config = RunConfig(Path("m.rlr"), fixed=(("course", 3),), ranges=(("person", (1, 2)),))

        assignments = config.domain_assignments(["student", "course", "person"])

        self.assertEqual([str(a) for a in assignments], ["student=1,course=3,person=1", "student=2,course=3,person=2"])


    def test_cartesian_product_of_ranges(self) -> None:
        config = RunConfig(Path("m.rlr"), ranges=(("a", (1, 2)), ("b", (5, 6))))

        self.assertEqual(len(config.domain_assignments(["a", "b"])), 4)


    def test_fixed_sizes(self) -> None:
        config = RunConfig(Path("m.rlr"), fixed=(("person", 4),))

        self.assertEqual(str(config.domain_assignment(["person"])), "person=4")
        with pytest.raises(ConfigurationError, match="pass --size course=N"):
            config.domain_assignment(["person", "course"])


    def test_fixed_command_rejects_ranges(self) -> None:
        config = RunConfig(Path("m.rlr"), ranges=(("person", (1, 2)),))

        with pytest.raises(ConfigurationError, match="takes fixed sizes"):
            config.domain_assignment(["person"])


    def test_size_for_undeclared_sort(self) -> None:
        """
        GIVEN a size for a sort the model does not declare
        WHEN the domain assignment is built
        THEN the typo is reported instead of being ignored
        """
        with pytest.raises(ConfigurationError, match="declares no sort persn; it has person"):
            RunConfig(Path("m.rlr"), fixed=(("persn", 2),)).domain_assignment(["person"])
        with pytest.raises(ConfigurationError, match="declares no sort course"):
            RunConfig(Path("m.rlr"), ranges=(("course", (1, 2)),)).domain_assignments(["person"])


class ReportRendererTests(TestClassBase):

    ROWS = [{"n": 1, "sizes": "person=1", "probability": 0.1}, {"n": 10, "sizes": "person=10", "probability": 1 / 3}]

    def test_csv_rows(self) -> None:
        text = ReportRenderer.render(self.ROWS, "csv")

        self.assertEqual(text, "n,sizes,probability\n1,person=1,0.10000000000000001\n10,person=10,0.33333333333333331\n")


    def test_csv_seed_header(self) -> None:
        assert ReportRenderer.render(self.ROWS, "csv", seed=42).startswith("# seed=42\nn,sizes,probability\n")


    def test_json_wraps_seeded_reports(self) -> None:
        self.assertEqual(json.loads(ReportRenderer.render(self.ROWS, "json")), self.ROWS)
        self.assertEqual(json.loads(ReportRenderer.render(self.ROWS, "json", seed=3)), {"seed": 3, "report": self.ROWS})


    def test_table_alignment(self) -> None:
        text = ReportRenderer.render(self.ROWS, "table")

        self.assertEqual(text.splitlines(), [
            "n   sizes      probability",
            "1   person=1   0.1",
            "10  person=10  0.3333333333",
        ])


    def test_record_sections(self) -> None:
        record = {
            "value": 0.5,
            "flags": [],
            "proposition_distribution": [{"valuation": "P", "probability": 1.0}],
            "provenance": {"model": "abc"},
        }

        text = ReportRenderer.render(record, "table")

        self.assertEqual(text, "value\n0.5\n\n[flags]\n(none)\n\n[proposition_distribution]\nvaluation  probability\n"
                               "P          1\n\n[provenance]\nkey    value\nmodel  abc\n")
        assert "# proposition_distribution\nvaluation,probability\nP,1\n" in ReportRenderer.render(record, "csv")


    def test_unknown_format(self) -> None:
        with pytest.raises(ValueError, match="unknown output format 'xml'"):
            ReportRenderer.render(self.ROWS, "xml")


@pytest.mark.integration
class CommandTests(TestClassBase):
    """End-to-end runs of the management commands on the shipped models."""

    def setUp(self) -> None:
        super().setUp()
        directory = tempfile.TemporaryDirectory()
        self.addCleanup(directory.cleanup)
        self.tmp = Path(directory.name)

    def write_model(self, name: str, text: str) -> str:
        path = self.tmp / name
        path.write_text(text, encoding="utf-8")
        return str(path)

    def call(self, *args: str) -> str:
        stdout, stderr = StringIO(), StringIO()
        call_command(*args, stdout=stdout, stderr=stderr)
        self.stderr_text = stderr.getvalue()
        return stdout.getvalue()

    def assert_exit_code(self, code: int, *args: str) -> CommandError:
        with pytest.raises(CommandError) as raised:
            self.call(*args)
        self.assertEqual(raised.value.returncode, code)
        return raised.value

    def fixture(self, name: str) -> str:
        return str(self.fixture_path(name))

############
# POSITIVE #
############

    def test_validate_ok(self) -> None:
        path = self.fixture("lessons.rlr")

        self.assertEqual(self.call("validate", path), f"{path}: ok\n")


    def test_infer_four_world_oracle(self) -> None:
        """
        GIVEN {P -> R(x) : 1} on one element
        WHEN P, R(e1) and R(x) given P are inferred
        THEN they match (e+1)/(3e+1), 2e/(3e+1) and sigmoid(1).
        """
        path = self.fixture("ex1.mln")
        e = math.e

        p = float(self.call("infer", path, "--size", "person=1", "--query", "P"))
        r = float(self.call("infer", path, "--size", "person=1", "--query", "R(e1)"))
        given = float(self.call("infer", path, "--size", "person=1", "--query", "R(x)", "--evidence", "P"))

        assert p == pytest.approx((e + 1) / (3 * e + 1), abs=1e-12)
        assert r == pytest.approx(2 * e / (3 * e + 1), abs=1e-12)
        assert given == pytest.approx(expit(1.0), abs=1e-12)


    def test_infer_json(self) -> None:
        output = self.call("infer", self.fixture("projectivity.rlr"), "--size", "person=2",
                           "--query", "Q(x) & R(x)", "--format", "json")

        report = json.loads(output)
        self.assertEqual(report["query"], "Q(e1) & R(e1)")
        self.assertEqual(report["sizes"], "person=2")
        assert report["evidence"] is None
        assert report["value"] == pytest.approx(0.5 * (0.5 * expit(1.0) + 0.5 * expit(0.5)), abs=1e-12)


    def test_infer_factorized(self) -> None:
        output = self.call("infer", self.fixture("ex2.mln"), "--size", "person=16",
                           "--query", "Q(e1)", "--engine", "factorized")

        assert float(output) > 0.99


    def test_sweep_csv(self) -> None:
        output = self.call("sweep", self.fixture("ex1.mln"), "--sizes", "person=1..3", "--query", "P")

        lines = output.splitlines()
        self.assertEqual(lines[0], "n,sizes,probability")
        self.assertEqual([line.split(",")[1] for line in lines[1:]], ["person=1", "person=2", "person=3"])
        assert float(lines[1].split(",")[2]) == pytest.approx((math.e + 1) / (3 * math.e + 1), abs=1e-12)


    def test_sweep_factorized_to_file(self) -> None:
        target = self.tmp / "sweep.json"

        output = self.call("sweep", self.fixture("ex1.mln"), "--sizes", "person=1..30:29", "--query", "R(x)",
                           "--engine", "factorized", "--format", "json", "--out", str(target))

        self.assertEqual(output, "")
        rows = json.loads(target.read_text(encoding="utf-8"))
        self.assertEqual([row["n"] for row in rows], [1, 30])
        assert 0.5 < rows[1]["probability"] < rows[0]["probability"]


    def test_asymptotic_report(self) -> None:
        output = self.call("asymptotic", self.fixture("projectivity.rlr"), "--query", "Q(x)")

        report = json.loads(output)
        assert report["value"] == pytest.approx(expit(0.5), abs=1e-12)
        self.assertEqual(report["flags"], [])
        self.assertEqual(report["proposition_distribution"], [{"valuation": "-", "probability": 1.0}])


    def test_asymptotic_limit_check(self) -> None:
        output = self.call("asymptotic", self.fixture("projectivity.rlr"), "--query", "Q(x)",
                           "--sizes", "person=20,40", "--samples", "50", "--seed", "5")

        report = json.loads(output)
        self.assertEqual(report["seed"], 5)
        self.assertEqual([row["n"] for row in report["report"]], [20, 40])
        self.assertEqual(set(report["report"][0]), {"n", "sizes", "samples", "empirical", "asymptotic", "gap", "tolerance"})


    def test_sample_is_reproducible(self) -> None:
        args = ("sample", self.fixture("projectivity.rlr"), "--size", "person=2", "--seed", "7", "--samples", "3")

        first, second = self.call(*args), self.call(*args)

        self.assertEqual(first, second)
        lines = first.split("\n")
        self.assertEqual(lines[0], "# seed=7 sizes=person=2")
        self.assertEqual(len(lines), 5)


    def test_sample_substructures(self) -> None:
        output = self.call("sample", self.fixture("testbed.rlr"), "--size", "person=4", "--seed", "1",
                           "--samples", "2", "--sub-size", "person=2")

        assert output.startswith("# seed=1 sizes=person=2\n")


    def test_sample_then_learn(self) -> None:
        """
        GIVEN 500 worlds on 20 elements sampled with seed 7 from the two-node model
        WHEN its structure is learned from the sample file
        THEN Q's weight comes back within 0.2 of 1.0.
        """
        model = self.fixture("projectivity.rlr")
        samples = self.tmp / "samples.txt"
        self.call("sample", model, "--size", "person=20", "--seed", "7", "--samples", "500", "--out", str(samples))

        output = self.call("learn", model, str(samples))

        _, learned = parse_model(output)
        assert isinstance(learned, RlrModel)
        assert learned.label("Q").conditions[0].weight == pytest.approx(1.0, abs=0.2)
        assert "Q: converged after" in self.stderr_text
        assert "on 10000 rows" in self.stderr_text


    def test_learn_roots_with_and_without_bias(self) -> None:
        """
        GIVEN a bias-only root R and a root U without conditions
        WHEN both are learned from 200 sampled worlds on 10 elements
        THEN R's bias is recovered and U keeps an empty label.
        """
        model = self.write_model(
            "roots.rlr", "sort person; pred R(person); pred U(person); rlr { node R(x) { 1.0 : true; } node U(x) { } }"
        )
        samples = self.tmp / "roots.txt"
        self.call("sample", model, "--size", "person=10", "--seed", "3", "--samples", "200", "--out", str(samples))

        _, learned = parse_model(self.call("learn", model, str(samples)))

        assert learned.label("R").conditions[0].weight == pytest.approx(1.0, abs=0.2)
        self.assertEqual(learned.label("U").conditions, ())
        assert "U: converged after 0 iterations on 2000 rows" in self.stderr_text


    def test_convert(self) -> None:
        unscaled = self.write_model("unscaled.rlr", UNSCALED)

        to_da = self.call("convert", unscaled, "--size", "person=4", "--to", "da")
        to_unscaled = self.call("convert", self.fixture("projectivity.rlr"), "--size", "person=4", "--to", "unscaled")

        assert "4.0 prop : R(y);" in to_da
        assert "0.25 raw : R(y);" in to_unscaled

############
# NEGATIVE #
############

    def test_validate_reports_cycle(self) -> None:
        path = self.write_model("cyclic.rlr", CYCLIC)

        error = self.assert_exit_code(1, "validate", path)

        assert "1 violation(s)" in str(error)


    def test_validate_cycle_output(self) -> None:
        path = self.write_model("cyclic.rlr", CYCLIC)
        stdout = StringIO()

        with pytest.raises(CommandError):
            call_command("validate", path, stdout=stdout)

        assert stdout.getvalue().startswith(f"{path}: cycle: ")


    def test_syntax_error(self) -> None:
        path = self.write_model("broken.mln", "prop P;\nmln { 1.0 : P -> ; }\n")

        error = self.assert_exit_code(1, "validate", path)

        assert "line 2" in str(error)


    def test_invalid_options(self) -> None:
        error = self.assert_exit_code(1, "infer", self.fixture("ex1.mln"), "--size", "person", "--query", "P")

        assert str(error).startswith("invalid options: --size: ")


    def test_size_for_undeclared_sort(self) -> None:
        error = self.assert_exit_code(1, "infer", self.fixture("ex1.mln"), "--size", "persn=1", "--query", "P")

        assert "declares no sort persn" in str(error)


    def test_sampling_without_seed(self) -> None:
        error = self.assert_exit_code(1, "sample", self.fixture("projectivity.rlr"), "--size", "person=2", "--samples", "3")

        assert "--seed: required when sampling" in str(error)


    def test_missing_size(self) -> None:
        self.assert_exit_code(1, "infer", self.fixture("ex1.mln"), "--query", "P")


    def test_state_space_cap(self) -> None:
        self.assert_exit_code(2, "infer", self.fixture("ex1.mln"), "--size", "person=30", "--query", "P")


    def test_factorized_engine_limits(self) -> None:
        path = self.fixture("ex1.mln")

        self.assert_exit_code(2, "infer", path, "--size", "person=3", "--query", "P & R(e1)", "--engine", "factorized")
        self.assert_exit_code(2, "infer", path, "--size", "person=3", "--query", "P", "--evidence", "R(e1)",
                              "--engine", "factorized")
        self.assert_exit_code(2, "infer", self.fixture("projectivity.rlr"), "--size", "person=3", "--query", "Q(e1)",
                              "--engine", "factorized")


    def test_zero_probability_evidence(self) -> None:
        self.assert_exit_code(3, "infer", self.fixture("ex1.mln"), "--size", "person=1", "--query", "P",
                              "--evidence", "P & !P")


    def test_asymptotics_of_mixed_model(self) -> None:
        error = self.assert_exit_code(1, "asymptotic", self.fixture("pollution-mixed.rlr"), "--query", "P")

        assert "no defined asymptotics" in str(error)


    def test_limit_check_needs_seed(self) -> None:
        error = self.assert_exit_code(1, "asymptotic", self.fixture("projectivity.rlr"), "--query", "Q(x)",
                                      "--sizes", "person=10")

        assert "--seed and --samples" in str(error)


    def test_rlr_only_commands(self) -> None:
        for command in ("sample", "convert"):
            with self.subTest(command=command):
                extra = ("--seed", "1", "--samples", "1") if command == "sample" else ("--to", "da")
                error = self.assert_exit_code(1, command, self.fixture("ex1.mln"), "--size", "person=1", *extra)
                assert "needs an RLR model" in str(error)
