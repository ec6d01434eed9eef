"""The ``SphericalSample`` container and its CSV format.

File layout: an optional header line ``# q=<q> n=<n> seed=<seed> process=<name>``
followed by one row per point with q+1 comma-separated floats written with
17 significant digits.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

UNIT_TOL = 1e-10
RENORMALIZE_TOL = 1e-6


class SampleFormatError(ValueError):
    """Malformed or non-spherical input data."""


@dataclass(frozen=True)
class SphericalSample:
    """``n`` unit vectors in R^{q+1}, stored as the rows of ``points``."""

    points: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] < 3:
            raise SampleFormatError(f"points must be an n x (q+1) array with q >= 2, got shape {pts.shape}")
        if pts.shape[0] < 1:
            raise SampleFormatError("empty sample")
        dev = np.abs(np.linalg.norm(pts, axis=1) - 1.0)
        if np.any(dev > UNIT_TOL):
            i = int(np.argmax(dev))
            raise SampleFormatError(f"row {i} is not a unit vector (|norm - 1| = {dev[i]:.3g})")
        pts = pts.copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def q(self) -> int:
        return self.points.shape[1] - 1

    def __len__(self):
        return self.n


def format_header(q: int, n: int, seed, process: str) -> str:
    return f"# q={q} n={n} seed={seed} process={process}"


def write_sample_csv(path, points, *, seed, process: str) -> Path:
    points = np.asarray(points, dtype=float)
    n, p = points.shape
    path = Path(path)
    lines = [format_header(p - 1, n, seed, process)]
    lines.extend(",".join(format(v, ".17g") for v in row) for row in points)
    path.write_text("\n".join(lines) + "\n")
    return path


def parse_header(line: str) -> dict:
    out = {}
    for tok in line.lstrip("#").split():
        if "=" in tok:
            key, val = tok.split("=", 1)
            out[key] = val
    return out


def read_sample_csv(path, q: int | None = None) -> SphericalSample:
    """Read a sample file.

    Rows off the unit sphere by more than 1e-6 are rejected; rows off by more
    than 1e-10 are renormalized with a warning.
    """
    meta = {}
    rows = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            meta.update(parse_header(line))
            continue
        try:
            rows.append([float(tok) for tok in line.replace(";", ",").split(",") if tok.strip()])
        except ValueError as exc:
            raise SampleFormatError(f"line {lineno}: cannot parse {raw!r}") from exc
    if not rows:
        raise SampleFormatError("no data rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise SampleFormatError(f"rows have inconsistent lengths {sorted(widths)}")
    pts = np.array(rows)
    if q is not None and pts.shape[1] != q + 1:
        raise SampleFormatError(f"expected {q + 1} columns for q={q}, got {pts.shape[1]}")
    if not np.all(np.isfinite(pts)):
        raise SampleFormatError("non-finite values in data")
    norms = np.linalg.norm(pts, axis=1)
    dev = np.abs(norms - 1.0)
    if np.any(dev > RENORMALIZE_TOL):
        i = int(np.argmax(dev))
        raise SampleFormatError(f"row {i} has norm {norms[i]:.9g}; not on the unit sphere")
    if np.any(dev > UNIT_TOL):
        warnings.warn(f"renormalizing {int(np.sum(dev > UNIT_TOL))} rows to unit length", stacklevel=2)
        pts = pts / norms[:, None]
    return SphericalSample(pts, meta)
