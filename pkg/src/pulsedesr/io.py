"""Flat-file formats: trace/spectrum CSV, fit-result JSON and SVG plots.

CSV files start with ``# key=value`` comment lines (values JSON-encoded, the
first one always ``kind``) followed by a two-column header and the data.
Numbers are written with the shortest repr that round-trips exactly, so a
file read back reproduces the arrays bit for bit.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .fitting import FitResult
from .powder import Spectrum
from .pulses import TRACE_KINDS, Trace

__all__ = ["FormatError", "read_csv", "read_fit_result", "write_csv", "write_fit_result", "write_svg"]

_COLUMNS = {"time_ns": "time_ns", "delay_ns": "tau_ns", "recovery_ns": "T_ns", "field_T": "field_T",
            "spectrum": "field_T"}


class FormatError(ValueError):
    """A file exists but does not follow the expected layout."""


def _scalar(v):
    return v is None or isinstance(v, (bool, int, float, str, np.integer, np.floating))


def _num(v: float) -> str:
    return repr(float(v))


def write_csv(path, data) -> Path:
    """Write a :class:`Trace` or :class:`Spectrum`; non-scalar metadata is skipped."""
    if isinstance(data, Spectrum):
        kind, x = "spectrum", data.field_axis
    elif isinstance(data, Trace):
        kind, x = data.kind, data.axis
    else:
        raise TypeError("expected a Trace or Spectrum")
    lines = [f"# kind={kind}"]
    for key in sorted(data.meta):
        v = data.meta[key]
        if _scalar(v):
            v = v.item() if isinstance(v, np.generic) else v
            if isinstance(v, float) and not math.isfinite(v):
                v = str(v)
            lines.append(f"# {key}={json.dumps(v)}")
    lines.append(f"{_COLUMNS[kind]},amplitude")
    lines.extend(f"{_num(a)},{_num(b)}" for a, b in zip(x, data.amplitude))
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_csv(path):
    """Read a file written by :func:`write_csv` back into a Trace or Spectrum."""
    text = Path(path).read_text(encoding="utf-8")
    meta = {}
    rows = []
    header_seen = False
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            key, sep, val = line[1:].strip().partition("=")
            if not sep:
                continue
            try:
                meta[key.strip()] = json.loads(val)
            except json.JSONDecodeError:
                meta[key.strip()] = val.strip()
            continue
        if not header_seen:
            header_seen = True
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise FormatError(f"{path}:{n}: expected two columns")
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise FormatError(f"{path}:{n}: non-numeric value") from None
    kind = meta.pop("kind", None)
    if kind != "spectrum" and kind not in TRACE_KINDS:
        raise FormatError(f"{path}: missing or unknown '# kind=' header")
    if not rows:
        raise FormatError(f"{path}: no data rows")
    x, y = np.array(rows).T
    try:
        if kind == "spectrum":
            return Spectrum(x, y, meta)
        return Trace(x, y, kind, meta)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def write_fit_result(path, result: FitResult) -> Path:
    path = Path(path)
    path.write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_fit_result(path) -> FitResult:
    try:
        return FitResult.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: not a fit result ({exc})") from None


def write_svg(path, data, model=None, title: str = "") -> Path:
    """Line plot of a trace or spectrum, optionally with a fitted curve.

    The SVG carries no date and a fixed hash salt, so identical inputs give
    identical files.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    x = data.field_axis if isinstance(data, Spectrum) else data.axis
    kind = "spectrum" if isinstance(data, Spectrum) else data.kind
    with matplotlib.rc_context({"svg.hashsalt": "pulsedesr", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(x, data.amplitude, lw=1, label="data")
        if model is not None:
            ax.plot(x, model, "--", lw=1, label="fit")
            ax.legend()
        ax.set_xlabel(_COLUMNS[kind].replace("_", " / "))
        ax.set_ylabel("amplitude")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        path = Path(path)
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
    return path
