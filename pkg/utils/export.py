"""
Export utilities for writing analysis results to various formats
"""

import csv
import json
from typing import Any, Dict, List, Optional, Sequence

import markdown
import numpy as np


def to_jsonable(value: Any) -> Any:
    """Convert numpy scalars, arrays and complex numbers into JSON types"""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (complex, np.complexfloating)):
        return {"re": float(value.real), "im": float(value.imag)}
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


class CSVExporter:
    """Export tabular records to CSV with a commented metadata header"""

    @staticmethod
    def export(
        rows: Sequence[Dict[str, Any]],
        output_path: str,
        columns: Optional[List[str]] = None,
        metadata: Optional[Dict[str, Any]] = None,
    ):
        """
        Export rows to CSV

        Args:
            rows: One mapping per row
            output_path: Path to save the CSV file
            columns: Column order (default: keys of the first row)
            metadata: Key/value pairs written as "# key: value" lines first
        """
        columns = columns or (list(rows[0].keys()) if rows else [])
        with open(output_path, "w", encoding="utf-8", newline="") as f:
            for key, value in (metadata or {}).items():
                f.write(f"# {key}: {value}\n")
            writer = csv.DictWriter(f, fieldnames=columns, lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({c: _format_cell(row.get(c)) for c in columns})


def _format_cell(value: Any) -> Any:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    return value


def matrix_rows(matrix: np.ndarray) -> List[Dict[str, Any]]:
    """Entries of a complex matrix as (row, col, re, im) records"""
    m = np.asarray(matrix)
    return [
        {"row": i, "col": j, "re": float(m[i, j].real), "im": float(m[i, j].imag)}
        for i in range(m.shape[0])
        for j in range(m.shape[1])
    ]


class JSONExporter:
    """Export reports to JSON"""

    @staticmethod
    def export(content: Dict[str, Any], output_path: str):
        """
        Export a report to JSON

        Args:
            content: Report mapping (numpy values are converted)
            output_path: Path to save JSON file
        """
        with open(output_path, "w", encoding="utf-8") as f:
            json.dump(to_jsonable(content), f, indent=2, sort_keys=True)
            f.write("\n")


class MarkdownExporter:
    """Export content to Markdown format"""

    @staticmethod
    def export(content: str, output_path: str):
        """
        Export content to Markdown

        Args:
            content: Text content to export
            output_path: Path to save MD file
        """
        with open(output_path, "w", encoding="utf-8") as f:
            f.write(content)


class HTMLExporter:
    """Export content to HTML format"""

    @staticmethod
    def export(content: str, output_path: str, title: str = "Tomography Summary"):
        """
        Export content to HTML

        Args:
            content: Markdown content to export
            output_path: Path to save HTML file
            title: Document title
        """
        html_content = markdown.markdown(content, extensions=["extra"])

        html_doc = f"""<!DOCTYPE html>
<html>
<head>
    <meta charset="UTF-8">
    <title>{title}</title>
    <style>
        body {{
            font-family: Arial, sans-serif;
            max-width: 800px;
            margin: 0 auto;
            padding: 20px;
            line-height: 1.6;
        }}
        table {{
            border-collapse: collapse;
        }}
        th, td {{
            border: 1px solid #ccc;
            padding: 4px 10px;
            text-align: right;
        }}
        code {{
            background-color: #f4f4f4;
            padding: 2px 5px;
            border-radius: 3px;
        }}
    </style>
</head>
<body>
    {html_content}
</body>
</html>
"""

        with open(output_path, "w", encoding="utf-8") as f:
            f.write(html_doc)
