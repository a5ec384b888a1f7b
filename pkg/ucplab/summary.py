"""
Rendering of experiment summaries as CSV, Markdown or standalone HTML.
"""

import csv
import importlib.resources
import io
from functools import lru_cache
from pathlib import Path
from typing import Any, List

from ucplab.errors import ValidationError
from ucplab.harness import SummaryTable, format_value

try:
    import markdown

    MARKDOWN_AVAILABLE = True
except ImportError:
    MARKDOWN_AVAILABLE = False


FORMATS = ("csv", "markdown", "html")


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


class SummaryRenderer:
    """Render a summary table as CSV, Markdown or a standalone HTML page."""

    @staticmethod
    def _get_template_path():
        """Get the path to the HTML template using importlib.resources."""
        try:
            return importlib.resources.files("ucplab") / "templates" / "summary.html"
        except (AttributeError, ModuleNotFoundError):
            return Path(__file__).resolve().parent / "templates" / "summary.html"

    def __init__(self, table: SummaryTable, title: str = "ucplab summary"):
        self.table = table
        self.title = title

    @classmethod
    @lru_cache(maxsize=1)
    def _load_html_template(cls) -> str:
        """Load the HTML template from package resources."""
        try:
            return cls._get_template_path().read_text(encoding="utf-8")
        except (FileNotFoundError, AttributeError) as exc:
            template_path = Path(__file__).resolve().parent / "templates" / "summary.html"
            try:
                return template_path.read_text(encoding="utf-8")
            except FileNotFoundError:
                raise FileNotFoundError(f"HTML template not found. Tried: {template_path}") from exc

    def generate_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(self.table.columns)
        for row in self.table.rows:
            writer.writerow([format_value(row.get(c)) for c in self.table.columns])
        return buffer.getvalue()

    def generate_markdown(self) -> str:
        """Generate a Markdown report: sources, overall minimum and the per-L table."""
        md_content: List[str] = [f"# {self.title}", ""]
        if self.table.sources:
            md_content.append("**Sources:** " + ", ".join(f"`{s}`" for s in self.table.sources))
            md_content.append("")
        if self.table.overall_min is not None:
            md_content.append(f"**Smallest lambda_min:** {_cell(self.table.overall_min)}")
            md_content.append("")
        md_content.append("| " + " | ".join(self.table.columns) + " |")
        md_content.append("|" + "|".join("---" for _ in self.table.columns) + "|")
        for row in self.table.rows:
            md_content.append("| " + " | ".join(_cell(row.get(c)) for c in self.table.columns) + " |")
        md_content.append("")
        return "\n".join(md_content)

    def _table_html(self) -> str:
        body = self.generate_markdown().split("\n", 2)[2]
        if MARKDOWN_AVAILABLE:
            return markdown.markdown(body, extensions=["tables"])
        rows = [
            "<tr>" + "".join(f"<td>{_cell(row.get(c))}</td>" for c in self.table.columns) + "</tr>"
            for row in self.table.rows
        ]
        header = "<tr>" + "".join(f"<th>{c}</th>" for c in self.table.columns) + "</tr>"
        return f"<table><thead>{header}</thead><tbody>{''.join(rows)}</tbody></table>"

    def generate_html(self) -> str:
        """Generate an HTML page from the packaged template."""
        replacements = {
            "{{TITLE}}": self.title,
            "{{ROW_COUNT}}": str(len(self.table.rows)),
            "{{CONTENT}}": self._table_html(),
        }
        html_output = self._load_html_template()
        for placeholder, value in replacements.items():
            html_output = html_output.replace(placeholder, value or "")
        return html_output

    def render(self, output_format: str) -> str:
        if output_format == "csv":
            return self.generate_csv()
        if output_format == "markdown":
            return self.generate_markdown()
        if output_format == "html":
            return self.generate_html()
        raise ValidationError(f"summary format must be one of {', '.join(FORMATS)}", f"got {output_format!r}")
