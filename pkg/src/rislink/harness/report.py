"""Campaign output files, each written to a temporary name and renamed into place."""
from __future__ import annotations

import csv
import os
import tempfile

from .campaign import METRIC_COLUMNS, PARTIAL_NAME

TIMING_COLUMNS = ("trial", "wall_ms")
TRACE_COLUMNS = ("trial", "iteration", "objective", "min_slack")


def _atomic_write(path, write):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            write(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv(path, header, rows):
    def write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)

    _atomic_write(path, write)


def _trace_rows(rows):
    for r in rows:
        slacks = r.min_slack_trace or [None] * len(r.trace)
        for i, (f, s) in enumerate(zip(r.trace, slacks)):
            yield [r.trial, i, repr(float(f)), "" if s is None else repr(float(s))]


def emit_report(rows, summary, output_dir):
    """Write ``metrics.csv``, ``timings.csv``, ``traces.csv`` and ``summary.txt``.

    ``metrics.csv`` holds only values that are a pure function of the
    campaign, so reruns are byte-identical; wall-clock times go to
    ``timings.csv``. Returns the written paths keyed by file name.

    Raises
    ------
    OSError
        The directory cannot be created or a file cannot be written.
    """
    os.makedirs(output_dir, exist_ok=True)
    rows = sorted(rows, key=lambda r: r.trial)
    paths = {name: os.path.join(output_dir, name)
             for name in ("metrics.csv", "timings.csv", "traces.csv", "summary.txt")}
    _csv(paths["metrics.csv"], METRIC_COLUMNS, (r.csv_row() for r in rows))
    _csv(paths["timings.csv"], TIMING_COLUMNS, ([r.trial, f"{r.wall_ms:.3f}"] for r in rows))
    _csv(paths["traces.csv"], TRACE_COLUMNS, _trace_rows(rows))
    text = "" if summary is None else "\n".join(summary.lines()) + "\n"
    _atomic_write(paths["summary.txt"], lambda fh: fh.write(text))
    partial = os.path.join(output_dir, PARTIAL_NAME)
    if os.path.exists(partial):
        os.unlink(partial)
    return paths
