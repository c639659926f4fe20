"""CSV emission with a reproducibility header."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import __version__


def header_line(meta: Mapping[str, object]) -> str:
    parts = [f"{key}={_fmt(value)}" for key, value in meta.items()]
    parts.append(f"toolkit=dpo_sim {__version__}")
    return "; ".join(parts)


def _fmt(value: object) -> str:
    if isinstance(value, (float, np.floating)):
        # shortest round-tripping form, identical for numpy and builtin floats
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_fmt(v) for v in value) + "]"
    return str(value)


def write_csv(
    path: str | Path,
    columns: Sequence[str],
    rows: Iterable[Sequence[object]],
    header: str | Mapping[str, object] = "",
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not isinstance(header, str):
        header = header_line(header)
    with path.open("w", newline="") as fh:
        for line in header.splitlines():
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def _parse(cell: str) -> float | str:
    try:
        return float(cell)
    except ValueError:
        return cell


def read_csv(path: str | Path) -> tuple[list[str], list[str], list[list[float | str]]]:
    """Comment lines, column names and rows of a file written by ``write_csv``; text cells stay strings."""
    with Path(path).open(newline="") as fh:
        lines = fh.read().splitlines()
    comments = [line[1:].strip() for line in lines if line.startswith("#")]
    body = list(csv.reader(line for line in lines if not line.startswith("#")))
    if not body:
        return comments, [], []
    return comments, body[0], [[_parse(x) for x in row] for row in body[1:]]


def spectrum_to_csv(curve, path: str | Path, meta: Mapping[str, object] | None = None) -> Path:
    info = {"kind": curve.kind, "floor": float(curve.floor)}
    info.update(curve.meta.get("params", {}))
    if "variant" in curve.meta:
        info["variant"] = curve.meta["variant"]
    info.update(meta or {})
    rows = ((float(w), float(v)) for w, v in zip(curve.omegas, curve.values))
    return write_csv(path, ["omega", "value"], rows, info)


def distribution_to_csv(dist, path: str | Path, meta: Mapping[str, object] | None = None) -> Path:
    info = {"n_max": dist.n_max, "tail_bound": float(dist.tail_bound)}
    info.update(meta or {})
    rows = ((n, float(p)) for n, p in enumerate(dist.probs))
    return write_csv(path, ["n", "probability"], rows, info)


def correlation_to_csv(corr, path: str | Path, meta: Mapping[str, object] | None = None) -> Path:
    info = {"kind": corr.kind}
    info.update(meta or {})
    rows = ((float(t), float(v), float(s)) for t, v, s in zip(corr.lags, corr.values, corr.std_errs))
    return write_csv(path, ["lag", "value", "stderr"], rows, info)
