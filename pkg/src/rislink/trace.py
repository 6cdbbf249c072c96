"""Per-iteration solver traces as CSV (iteration, objective, min_slack)."""
from __future__ import annotations

import csv
import os
import tempfile

TRACE_COLUMNS = ("iteration", "objective", "min_slack")


def _fmt(v):
    return "" if v is None else repr(float(v))


def write_trace_csv(path, objectives, min_slacks=None):
    """Write a trace file atomically; ``min_slack`` is blank for rate problems."""
    if min_slacks is None:
        min_slacks = [None] * len(objectives)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".trace-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRACE_COLUMNS)
            for i, (f, s) in enumerate(zip(objectives, min_slacks)):
                writer.writerow([i, _fmt(f), _fmt(s)])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
