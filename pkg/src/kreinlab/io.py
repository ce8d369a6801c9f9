"""Text serialization of profiles and CSV/JSON writers for run artifacts.

Floats are written with 17 significant digits so a round trip is exact and
equal inputs give byte-identical files.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .coeffs import CoefficientProfile, PulseSegment

FMT = ".17g"


def fnum(x) -> str:
    return format(float(x), FMT)


def _cells(values) -> list:
    out = []
    for v in values:
        if isinstance(v, (complex, np.complexfloating)):
            out.extend([fnum(v.real), fnum(v.imag)])
        elif isinstance(v, (float, np.floating)):
            out.append(fnum(v))
        else:
            out.append(str(v))
    return out


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Complex cells expand into two columns; the header must already name both."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(_cells(row))
    return path


def read_csv(path) -> tuple:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------------------
# profiles
# ---------------------------------------------------------------------------

def dump_profile(profile: CoefficientProfile) -> str:
    """Header ``# scalar`` and ``# meta <json>``, then ``start length re im mass_re mass_im``."""
    if profile.smooth_part is not None:
        raise ValueError("only piecewise-constant profiles can be serialized")
    lines = ["# scalar", "# meta " + json.dumps(_jsonable(profile.meta), sort_keys=True)]
    for s in profile.segments:
        v, m = complex(s.value), complex(s.mass)
        lines.append(" ".join(fnum(x) for x in (s.start, s.length, v.real, v.imag, m.real, m.imag)))
    return "\n".join(lines) + "\n"


def load_profile(text: str) -> CoefficientProfile:
    meta = {}
    segs = []
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("meta "):
                meta = json.loads(body[5:])
            elif body not in ("scalar", ""):
                raise ValueError(f"line {ln}: unsupported header {body!r}")
            continue
        parts = line.split()
        if len(parts) not in (4, 6):
            raise ValueError(f"line {ln}: expected 4 or 6 fields")
        x = [float(p) for p in parts]
        mass = complex(x[4], x[5]) if len(x) == 6 else None
        segs.append(PulseSegment(x[0], x[1], complex(x[2], x[3]), mass))
    return CoefficientProfile(tuple(segs), meta=meta)


def save_profile(profile: CoefficientProfile, path) -> Path:
    path = Path(path)
    path.write_text(dump_profile(profile))
    return path


def read_profile(path) -> CoefficientProfile:
    return load_profile(Path(path).read_text())


# ---------------------------------------------------------------------------
# row builders
# ---------------------------------------------------------------------------

TRAJECTORY_HEADER = ["r", "p_re", "p_im", "p_star_re", "p_star_im", "log_scale", "energy"]


def trajectory_rows(traj):
    for s in traj.states:
        yield (s.r, complex(s.p), complex(s.p_star), s.log_scale, s.energy_integral)


DENSITY_HEADER = ["lambda", "density"]


def density_rows(report):
    return zip(report.lambda_grid, report.density)


DIAGNOSTICS_HEADER = ["n", "r", "p_star_re", "p_star_im", "modulus", "phase", "p_re", "p_im",
                      "cesaro_re", "cesaro_im"]


def diagnostics_rows(diag):
    for i in range(len(diag)):
        yield (int(diag.n[i]), float(diag.r[i]), complex(diag.p_star[i]), float(diag.modulus[i]),
               float(diag.phase[i]), complex(diag.p[i]), complex(diag.cesaro[i]))


DISCRETE_HEADER = ["n", "phi_re", "phi_im", "phi_star_re", "phi_star_im", "running_sum", "log_scale"]


def discrete_rows(pairs):
    for p in pairs:
        yield (p.n, complex(p.phi), complex(p.phi_star), p.running_sum, p.log_scale)


def matrix_header(m: int) -> list:
    cols = ["m", "lambda_re", "lambda_im", "r", "log_scale"]
    for name in ("P1", "P2", "gram"):
        for i in range(m):
            for j in range(m):
                cols += [f"{name}_{i}{j}_re", f"{name}_{i}{j}_im"]
    return cols


def matrix_rows(traj):
    for s in traj.states:
        vals = [s.P1.shape[0], complex(traj.lam), s.r, s.log_scale]
        for M in (s.P1, s.P2, s.gram):
            vals.extend(complex(x) for x in np.asarray(M).ravel())
        yield vals
