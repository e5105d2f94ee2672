"""File formats: series/events/distance/surface/spectrum CSVs and JSON reports.

Floats are written with 17 significant digits, so a write/read cycle is
exact. Series files carry ``# key=value`` comment lines for the frame and the
sample rate; readers also accept plain CSVs without them.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dynamics import Frame
from .errors import CaseFormatError
from .simulator import AmbientSeries

FLOAT_FMT = "%.17g"


def _fmt(x: float) -> str:
    return FLOAT_FMT % x


def _meta_lines(meta: dict) -> list[str]:
    return [f"# {k}={v}" for k, v in meta.items()]


def write_series_csv(series: AmbientSeries, path: str | Path) -> None:
    """``t,delta_<label>...,omega_<label>...`` plus frame/rate comment lines."""
    path = Path(path)
    head = ["t"] + [f"delta_{k}" for k in series.labels] + [f"omega_{k}" for k in series.labels]
    data = np.column_stack([series.t, series.delta, series.omega])
    with path.open("w", newline="") as fh:
        for line in _meta_lines({"frame": series.frame, "sample_rate": _fmt(series.sample_rate)}):
            fh.write(line + "\n")
        fh.write(",".join(head) + "\n")
        np.savetxt(fh, data, fmt=FLOAT_FMT, delimiter=",")


def _parse_header(head: list[str], path, lineno) -> tuple[int, ...]:
    if not head or head[0].strip() != "t":
        raise CaseFormatError("first column must be 't'", path, lineno)
    cols = [h.strip() for h in head[1:]]
    if len(cols) % 2 or not cols:
        raise CaseFormatError("expected equal numbers of delta_ and omega_ columns", path, lineno)
    m = len(cols) // 2
    labels = []
    for k, (d, w) in enumerate(zip(cols[:m], cols[m:])):
        if not d.startswith("delta_") or not w.startswith("omega_"):
            raise CaseFormatError(f"column {k + 2}: expected delta_<k> ... omega_<k> layout", path, lineno)
        ld, lw = d[6:], w[6:]
        if ld != lw:
            raise CaseFormatError(f"delta/omega labels differ ({ld} vs {lw})", path, lineno)
        try:
            labels.append(int(ld))
        except ValueError:
            raise CaseFormatError(f"machine label {ld!r} is not an integer", path, lineno) from None
    return tuple(labels)


def read_series_csv(path: str | Path, frame: Frame | None = None, events_path: str | Path | None = None,
                    sample_rate: float | None = None) -> AmbientSeries:
    path = Path(path)
    if not path.exists():
        raise CaseFormatError("file not found", path)
    meta: dict[str, str] = {}
    rows: list[list[float]] = []
    labels = None
    with path.open(newline="") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, sep, val = line[1:].strip().partition("=")
                if sep:
                    meta[key.strip()] = val.strip()
                continue
            parts = line.split(",")
            if labels is None:
                labels = _parse_header(parts, path, lineno)
                continue
            if len(parts) != 1 + 2 * len(labels):
                raise CaseFormatError(f"expected {1 + 2 * len(labels)} fields, got {len(parts)}", path, lineno)
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise CaseFormatError(f"bad number ({exc})", path, lineno) from None
    if labels is None:
        raise CaseFormatError("missing header line", path)
    if len(rows) < 2:
        raise CaseFormatError("need at least two samples", path)
    data = np.array(rows)
    t = data[:, 0]
    m = len(labels)
    if sample_rate is None:
        if "sample_rate" in meta:
            sample_rate = float(meta["sample_rate"])
        else:
            dt = np.diff(t)
            sample_rate = 1.0 / float(np.median(dt))
    if np.any(np.abs(np.diff(t) - 1.0 / sample_rate) > 1e-6 / sample_rate):
        raise CaseFormatError("time column is not uniformly sampled", path)
    if frame is None:
        frame = Frame.parse(meta["frame"]) if "frame" in meta else Frame.plain()
    events = read_events_csv(events_path) if events_path is not None else ()
    return AmbientSeries(
        sample_rate=float(sample_rate), t0=float(t[0]), frame=frame, delta=data[:, 1 : 1 + m],
        omega=data[:, 1 + m :], labels=labels, events=events,
    )


def write_events_csv(events: Iterable[tuple[float, str]], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "description"])
        for t, desc in events:
            w.writerow([_fmt(t), desc])


def read_events_csv(path: str | Path) -> tuple[tuple[float, str], ...]:
    path = Path(path)
    if not path.exists():
        raise CaseFormatError("file not found", path)
    out = []
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (lineno == 1 and row[0].strip() == "t"):
                continue
            if len(row) != 2:
                raise CaseFormatError("expected 't,description'", path, lineno)
            try:
                out.append((float(row[0]), row[1]))
            except ValueError:
                raise CaseFormatError(f"bad time {row[0]!r}", path, lineno) from None
    return tuple(out)


def write_distance_csv(times, distances, valid, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write("t,distance,valid\n")
        for t, d, v in zip(times, distances, valid):
            fh.write(f"{_fmt(t)},{_fmt(d)},{int(bool(v))}\n")


def write_surface_csv(surface, labels: Sequence[int], path: str | Path) -> None:
    """Residual grid with machine labels on the first row and column."""
    with Path(path).open("w", newline="") as fh:
        fh.write("machine," + ",".join(str(k) for k in labels) + "\n")
        for k, row in zip(labels, np.asarray(surface)):
            fh.write(f"{k}," + ",".join(_fmt(x) for x in row) + "\n")


def write_spectrum_csv(spectra: Sequence[tuple[Sequence[complex], str]], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write("re,im,source\n")
        for eigs, source in spectra:
            for z in eigs:
                fh.write(f"{_fmt(np.real(z))},{_fmt(np.imag(z))},{source}\n")


def matrix_doc(X, frame=None, method=None, labels=None) -> dict:
    X = np.asarray(X)
    doc = {"rows": int(X.shape[0]), "cols": int(X.shape[1]), "data": X.tolist()}
    if frame is not None:
        doc["frame"] = str(frame)
    if method is not None:
        doc["method"] = method
    if labels is not None:
        doc["labels"] = [int(k) for k in labels]
    return doc


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, complex):
        return {"re": o.real, "im": o.imag}
    if isinstance(o, Frame):
        return str(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, default=_default, allow_nan=True)


def write_json(doc, path: str | Path) -> None:
    Path(path).write_text(dumps(doc) + "\n")


def config_hash(doc) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True, default=_default).encode()).hexdigest()[:16]
