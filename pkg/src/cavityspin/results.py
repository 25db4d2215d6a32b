"""Result bundles written as CSV time series and JSON metadata.

Files are written atomically (temporary file, then rename). Everything
except ``timing.json`` depends only on the configuration, so reruns give
byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field, fields, is_dataclass

import numpy as np

COMPARISON_COLUMNS = ("t_us", "p_a1_full", "p_down1_eff", "n_photon", "p_excited")
CLUSTER_COLUMNS = ("t_us", "EvN_nats", "EvN_bits", "purity")


@dataclass
class Table:
    columns: tuple
    rows: list

    @classmethod
    def from_columns(cls, names, arrays) -> "Table":
        arrays = [np.asarray(a) for a in arrays]
        n = {a.shape[0] for a in arrays}
        if len(n) > 1:
            raise ValueError("columns differ in length")
        return cls(tuple(names), [list(r) for r in zip(*arrays)])


@dataclass
class ResultBundle:
    """Tables (CSV), reports and metadata (JSON), and the wall time of the run."""

    metadata: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)
    wall_time_s: float | None = None


def jsonable(x):
    """Recursively convert numpy scalars, arrays, dataclasses and non-finite floats."""
    if is_dataclass(x) and not isinstance(x, type):
        if hasattr(x, "as_dict"):
            return jsonable(x.as_dict())
        return {f.name: jsonable(getattr(x, f.name)) for f in fields(x)}
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (complex, np.complexfloating)):
        return [jsonable(float(x.real)), jsonable(float(x.imag))]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return x


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v) + 0.0)  # no negative zero
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return "" if v is None else str(v)


def table_csv(t: Table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(t.columns)
    for r in t.rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_results(bundle: ResultBundle, out_dir: str) -> list:
    """Write ``<name>.csv`` per table, ``<name>.json`` per report, ``metadata.json``
    and ``timing.json``; returns the written paths.

    Raises
    ------
    OSError
        If ``out_dir`` cannot be created or written.
    """
    written = []
    for name, t in bundle.tables.items():
        p = os.path.join(out_dir, f"{name}.csv")
        atomic_write(p, table_csv(t))
        written.append(p)
    for name, rep in bundle.reports.items():
        p = os.path.join(out_dir, f"{name}.json")
        atomic_write(p, dump_json(rep))
        written.append(p)
    p = os.path.join(out_dir, "metadata.json")
    atomic_write(p, dump_json(bundle.metadata))
    written.append(p)
    if bundle.wall_time_s is not None:
        p = os.path.join(out_dir, "timing.json")
        atomic_write(p, dump_json({"wall_time_s": bundle.wall_time_s}))
        written.append(p)
    return written


def read_csv(path: str) -> dict:
    """Columns of a CSV written by :func:`write_results` as float arrays where possible."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    out = {}
    for j, name in enumerate(rows[0]):
        col = [r[j] for r in rows[1:]]
        try:
            out[name] = np.array([float(v) for v in col])
        except ValueError:
            out[name] = col
    return out
