"""
Helper utilities for the occupation-time verification toolkit.
Provides formatting, CSV emission and timing helpers used across the application.
"""
import csv
import io
import logging
import time
from contextlib import contextmanager
from typing import Iterator, List, Optional, Sequence

from config import REPORT_COLUMNS, SIGNIFICANT_DIGITS

logger = logging.getLogger(__name__)


def format_float(value: Optional[float], digits: int = SIGNIFICANT_DIGITS) -> str:
    """
    Format a float with a fixed number of significant digits.

    Args:
        value: Value to format; None becomes an empty field
        digits: Significant digits

    Returns:
        Formatted string
    """
    if value is None:
        return ""
    return f"{value:.{digits}g}"


def split_tasks(n: int, task_count: int) -> List[int]:
    """
    Split n samples into task sizes; the split depends only on (n, task_count).

    Returns:
        List of task sizes summing to n (empty tasks dropped)
    """
    task_count = max(1, min(task_count, n)) if n > 0 else 1
    base, extra = divmod(n, task_count)
    sizes = [base + (1 if i < extra else 0) for i in range(task_count)]
    return [s for s in sizes if s > 0]


def render_csv(rows: Sequence[Sequence[str]], header: Sequence[str] = REPORT_COLUMNS) -> str:
    """
    Render rows of already-formatted fields as CSV text.

    Returns:
        CSV text with a newline-terminated final line
    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    return buffer.getvalue()


def write_text(path: str, text: str) -> None:
    """Write UTF-8 text to a file; errors propagate to the caller."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(text)
    logger.info(f"Report written to {path}")


@contextmanager
def stopwatch() -> Iterator[List[float]]:
    """
    Measure wall time of a block.

    Yields:
        One-element list that holds the elapsed seconds after the block exits
    """
    elapsed = [0.0]
    start = time.perf_counter()
    try:
        yield elapsed
    finally:
        elapsed[0] = time.perf_counter() - start
