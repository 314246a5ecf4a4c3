"""Report writers: JSON summaries, CSV tables and PNG figures.

JSON is written with sorted keys and a ``schema_version`` field; CSV uses a
header row, comma separators and LF line endings; figures are rendered with
the Agg backend and saved without a software stamp so reruns give identical
bytes. The only time-dependent output is ``metadata.json``.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from . import __version__  # noqa: E402
from .config import SCHEMA_VERSION  # noqa: E402

__all__ = ["write_json", "write_csv", "write_metadata", "hash_outputs", "line_figure", "field_figure"]


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _clean(o):
    # JSON has no inf/nan; encode them as strings so output stays valid
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, np.ndarray):
        return _clean(o.tolist())
    if isinstance(o, (float, np.floating)):
        f = float(o)
        if np.isnan(f):
            return "nan"
        if np.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    return o


def write_json(dest: str | Path, payload: dict) -> Path:
    body = {"schema_version": SCHEMA_VERSION, **payload}
    text = json.dumps(_clean(body), sort_keys=True, indent=2, default=_default)
    with open(dest, "w", newline="\n") as fh:
        fh.write(text + "\n")
    return Path(dest)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return v


def write_csv(dest: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header))
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return Path(dest)


def write_metadata(outdir: str | Path, command: str, argv: Sequence[str]) -> Path:
    meta = {
        "command": command,
        "argv": list(argv),
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    dest = Path(outdir) / "metadata.json"
    dest.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    return dest


def hash_outputs(outdir: str | Path, exclude: Sequence[str] = ("metadata.json",)) -> dict[str, str]:
    """sha256 of every file under outdir except the metadata file."""
    out = {}
    root = Path(outdir)
    for p in sorted(root.rglob("*")):
        if p.is_file() and p.name not in exclude:
            out[str(p.relative_to(root))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


def _save(fig, dest):
    fig.savefig(dest, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return Path(dest)


def line_figure(dest: str | Path, x, series: dict, xlabel: str, ylabel: str, title: str = "",
                bands: dict | None = None, logy: bool = False, logx: bool = False) -> Path:
    """Curves with optional +- half-width bands."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, y in series.items():
        ax.plot(x, y, marker="o", ms=3, label=label)
        if bands and label in bands:
            y = np.asarray(y)
            hw = np.asarray(bands[label])
            ax.fill_between(x, y - hw, y + hw, alpha=0.2)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if logy:
        ax.set_yscale("log")
    if logx:
        ax.set_xscale("log")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, dest)


def field_figure(dest: str | Path, x, snapshots: np.ndarray, times: Sequence[float], title: str = "") -> Path:
    """1-D snapshots overlaid, or the final 2-D field as an image."""
    fig, ax = plt.subplots(figsize=(6, 4))
    snaps = np.asarray(snapshots)
    if snaps.ndim == 2:
        for t, u in zip(times, snaps):
            ax.plot(x, u, lw=1, label=f"t={t:.3g}")
        ax.set_xlabel("x")
        ax.set_ylabel("u")
        if len(times) <= 12:
            ax.legend(fontsize=7)
    else:
        im = ax.imshow(snaps[-1].T, origin="lower", extent=[x[0], x[-1], x[0], x[-1]])
        fig.colorbar(im, ax=ax)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, dest)
