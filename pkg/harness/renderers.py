# Built-in
from __future__ import annotations
from typing import Any, Mapping, Optional
import csv
import io

# External
from rest_framework.renderers import JSONRenderer


def _cell(value: Any, precision: str) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, precision)
    if value is None:
        return ""
    if isinstance(value, (list, tuple)):
        return " ".join(_cell(item, precision) for item in value)
    return str(value)


class ReportRenderer:
    """
    Text output of the harness commands.

    Reports are plain serializer data: either a list of flat rows or one
    record whose list-valued fields are nested row tables. csv keeps 17
    significant digits so every value reads back exactly.
    """

    FORMATS = ("csv", "json", "table")


    @staticmethod
    def render(data: Any, fmt: str, seed: Optional[int] = None) -> str:
        """
        :param data: Serialized rows (list of dicts) or a single record (dict).
        :param fmt: One of csv, json, table.
        :param seed: Effective seed of a randomized command, printed as a header.
        :return: Text ending in a newline.
        """
        if fmt == "json":
            return ReportRenderer.json(data, seed)
        if fmt == "csv":
            body = ReportRenderer.csv(data)
        elif fmt == "table":
            body = ReportRenderer.table(data)
        else:
            raise ValueError(f"unknown output format '{fmt}'")
        if seed is not None:
            body = f"# seed={seed}\n" + body
        return body


    @staticmethod
    def json(data: Any, seed: Optional[int] = None) -> str:
        if seed is not None:
            data = {"seed": seed, "report": data}
        rendered = JSONRenderer().render(data, renderer_context={"indent": 2})
        return rendered.decode("utf-8") + "\n"


    @staticmethod
    def _sections(data: Any) -> list[tuple[Optional[str], list[Mapping[str, Any]]]]:
        if isinstance(data, Mapping):
            scalars = {key: value for key, value in data.items() if not isinstance(value, (list, Mapping))}
            sections: list[tuple[Optional[str], list[Mapping[str, Any]]]] = [(None, [scalars])]
            for key, value in data.items():
                if isinstance(value, list):
                    if value and isinstance(value[0], Mapping):
                        sections.append((key, value))
                    else:
                        sections.append((key, [{key: item} for item in value]))
                elif isinstance(value, Mapping):
                    sections.append((key, [{"key": k, "value": v} for k, v in value.items()]))
            return sections
        return [(None, list(data))]


    @staticmethod
    def csv(data: Any) -> str:
        buffer = io.StringIO()
        for number, (name, rows) in enumerate(ReportRenderer._sections(data)):
            if number:
                buffer.write("\n")
            if name is not None:
                buffer.write(f"# {name}\n")
            if not rows:
                continue
            writer = csv.writer(buffer, lineterminator="\n")
            columns = list(rows[0].keys())
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_cell(row.get(column), ".17g") for column in columns])
        return buffer.getvalue()


    @staticmethod
    def table(data: Any) -> str:
        blocks = []
        for name, rows in ReportRenderer._sections(data):
            lines = [f"[{name}]"] if name is not None else []
            if rows:
                columns = list(rows[0].keys())
                cells = [[_cell(row.get(column), ".10g") for column in columns] for row in rows]
                widths = [max(len(column), *(len(line[i]) for line in cells)) for i, column in enumerate(columns)]
                lines.append("  ".join(column.ljust(width) for column, width in zip(columns, widths)).rstrip())
                lines.extend("  ".join(cell.ljust(width) for cell, width in zip(line, widths)).rstrip() for line in cells)
            else:
                lines.append("(none)")
            blocks.append("\n".join(lines))
        return "\n\n".join(blocks) + "\n"
