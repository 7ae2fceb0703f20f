# Built-in
from pathlib import Path
import re

# External
from rest_framework import serializers

# Internal
from .models import RunConfig

SIZE = re.compile(r"^(?P<sort>[A-Za-z_][A-Za-z0-9_]*)=(?P<size>[0-9]+)$")
SIZE_RANGE = re.compile(
    r"^(?P<sort>[A-Za-z_][A-Za-z0-9_]*)="
    r"(?:(?P<start>[0-9]+)\.\.(?P<stop>[0-9]+)(?::(?P<step>[0-9]+))?|(?P<values>[0-9]+(?:,[0-9]+)*))$"
)


class RunConfigSerializer(serializers.Serializer):
    """
    Validates command-line options into a RunConfig.

    Context:
        sampling: The command draws samples, so --seed and --samples are required
    """

    model = serializers.CharField(help_text="Path of the model file")
    samples_path = serializers.CharField(required=False, allow_null=True, default=None)
    size = serializers.ListField(
        child=serializers.CharField(), required=False, default=list,
        help_text="Fixed domain sizes as SORT=N"
    )
    sizes = serializers.ListField(
        child=serializers.CharField(), required=False, default=list,
        help_text="Swept domain sizes as SORT=A..B[:STEP] or SORT=N,N,..."
    )
    query = serializers.CharField(required=False, allow_null=True, default=None)
    evidence = serializers.CharField(required=False, allow_null=True, default=None)
    engine = serializers.ChoiceField(choices=["enumerate", "factorized"], default="enumerate")
    seed = serializers.IntegerField(min_value=0, max_value=2**64 - 1, required=False, allow_null=True, default=None)
    samples = serializers.IntegerField(min_value=1, required=False, allow_null=True, default=None)
    out = serializers.CharField(required=False, allow_null=True, default=None)
    format = serializers.ChoiceField(choices=["csv", "json", "table"], default="table")
    to = serializers.ChoiceField(choices=["da", "unscaled"], required=False, allow_null=True, default=None)
    sub_size = serializers.ListField(
        child=serializers.CharField(), required=False, default=list,
        help_text="Sizes of random induced substructures as SORT=M"
    )


    def validate_size(self, value: list[str]) -> list[tuple[str, int]]:
        parsed = []
        for item in value:
            match = SIZE.match(item)
            if match is None:
                raise serializers.ValidationError(f"'{item}' is not of the form SORT=N")
            size = int(match.group("size"))
            if size < 1:
                raise serializers.ValidationError(f"domain sizes must be at least 1, got '{item}'")
            parsed.append((match.group("sort"), size))
        return parsed


    def validate_sub_size(self, value: list[str]) -> list[tuple[str, int]]:
        return self.validate_size(value)


    def validate_sizes(self, value: list[str]) -> list[tuple[str, tuple[int, ...]]]:
        parsed = []
        for item in value:
            match = SIZE_RANGE.match(item)
            if match is None:
                raise serializers.ValidationError(f"'{item}' is not of the form SORT=A..B[:STEP] or SORT=N,N,...")
            if match.group("values") is not None:
                values = tuple(int(v) for v in match.group("values").split(","))
            else:
                start, stop = int(match.group("start")), int(match.group("stop"))
                step = int(match.group("step") or 1)
                if step < 1:
                    raise serializers.ValidationError(f"step of '{item}' must be at least 1")
                values = tuple(range(start, stop + 1, step))
            if not values:
                raise serializers.ValidationError(f"size range '{item}' is empty")
            if min(values) < 1:
                raise serializers.ValidationError(f"domain sizes must be at least 1, got '{item}'")
            parsed.append((match.group("sort"), values))
        return parsed


    def validate(self, attrs: dict) -> dict:
        if self.context.get("sampling"):
            missing = [name for name in ("seed", "samples") if attrs.get(name) is None]
            if missing:
                raise serializers.ValidationError(
                    {name: "required when sampling" for name in missing}
                )
        return attrs


    def create(self, validated_data: dict) -> RunConfig:
        return RunConfig(
            model=Path(validated_data["model"]),
            fixed=tuple(validated_data["size"]),
            ranges=tuple(validated_data["sizes"]),
            query=validated_data["query"],
            evidence=validated_data["evidence"],
            engine=validated_data["engine"],
            seed=validated_data["seed"],
            samples=validated_data["samples"],
            out=Path(validated_data["out"]) if validated_data["out"] else None,
            format=validated_data["format"],
            target=validated_data["to"],
            samples_path=Path(validated_data["samples_path"]) if validated_data["samples_path"] else None,
            substructure=tuple(validated_data["sub_size"]),
        )


class InferenceResultSerializer(serializers.Serializer):
    query = serializers.CharField()
    evidence = serializers.CharField(allow_null=True)
    engine = serializers.CharField()
    sizes = serializers.CharField()
    value = serializers.FloatField()


class SweepRowSerializer(serializers.Serializer):
    n = serializers.IntegerField()
    sizes = serializers.CharField(source="domains")
    probability = serializers.FloatField()


class LimitCheckRowSerializer(serializers.Serializer):
    n = serializers.IntegerField()
    sizes = serializers.CharField(source="domains")
    samples = serializers.IntegerField()
    empirical = serializers.FloatField()
    asymptotic = serializers.FloatField()
    gap = serializers.FloatField()
    tolerance = serializers.FloatField()


class ValuationProbabilitySerializer(serializers.Serializer):

    def to_representation(self, instance: tuple) -> dict:
        valuation, probability = instance
        return {"valuation": str(valuation), "probability": float(probability)}


class ProportionRowSerializer(serializers.Serializer):
    formula = serializers.CharField()
    valuation = serializers.CharField()
    proportion = serializers.FloatField(allow_null=True)


class AsymptoticReportSerializer(serializers.Serializer):
    query = serializers.CharField()
    evidence = serializers.CharField(allow_null=True)
    value = serializers.FloatField()
    proposition_distribution = ValuationProbabilitySerializer(source="distribution", many=True)
    proportion_table = ProportionRowSerializer(source="proportions", many=True)
    provenance = serializers.DictField()
    flags = serializers.ListField(child=serializers.CharField())
