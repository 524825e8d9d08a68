"""Report files: schema-tagged CSV, JSON sidecars, manifests, plot data.

Every delimited report starts with '#'-prefixed metadata lines (including
a ``schema`` tag used by the plot and plot-data tooling), then a header
row.  Data files contain no timestamps, so reruns with identical inputs
are byte-identical; wall-clock information lives in the manifest only.
All writes are atomic (temp file in the target directory, then rename).
"""

from __future__ import annotations

import hashlib
import json
import os
import platform
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ParseError


def _format_value(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, schema: str, meta: dict, columns: list[str], rows) -> None:
    """Write a schema-tagged CSV with '#' metadata lines, atomically."""
    lines = [f"# schema: {schema}", f"# biflux: {__version__}"]
    for key in sorted(meta):
        lines.append(f"# {key}: {_format_value(meta[key])}")
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_format_value(x) for x in row))
    _atomic_write_text(Path(path), "\n".join(lines) + "\n")


def read_csv(path):
    """Read a schema-tagged CSV; returns (schema, meta, columns, rows)."""
    path = Path(path)
    meta: dict[str, str] = {}
    schema = None
    columns: list[str] | None = None
    rows: list[list[str]] = []
    for raw in path.read_text().splitlines():
        if not raw.strip():
            continue
        if raw.startswith("#"):
            body = raw[1:].strip()
            if ":" in body:
                key, value = body.split(":", 1)
                key = key.strip()
                value = value.strip()
                if key == "schema":
                    schema = value
                else:
                    meta[key] = value
            continue
        if columns is None:
            columns = raw.split(",")
        else:
            rows.append(raw.split(","))
    if schema is None or columns is None:
        raise ParseError(f"{path}: not a schema-tagged report file")
    return schema, meta, columns, rows


def write_json(path, payload: dict) -> None:
    _atomic_write_text(Path(path), json.dumps(payload, indent=2, sort_keys=True) + "\n")


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    return sha256_bytes(Path(path).read_bytes())


def make_manifest(mode: str, inputs: dict, params: dict, extra: dict | None = None) -> dict:
    """Run provenance: input hashes, parameters, versions, wall clock."""
    import numpy
    import scipy

    hashed = {}
    for name, value in inputs.items():
        if isinstance(value, (str, Path)) and Path(value).is_file():
            hashed[name] = {"path": str(value), "sha256": sha256_file(value)}
        else:
            blob = json.dumps(value, sort_keys=True, default=str).encode()
            hashed[name] = {"sha256": sha256_bytes(blob)}
    manifest = {
        "mode": mode,
        "inputs": hashed,
        "params": params,
        "versions": {
            "biflux": __version__,
            "numpy": numpy.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "timestamp_unix": time.time(),
    }
    if extra:
        manifest.update(extra)
    return manifest


# ---------------------------------------------------------------------------
# report emitters per mode
# ---------------------------------------------------------------------------

RESIDUAL_COLUMNS = [
    "n", "beta", "t", "g", "component", "n_seeds",
    "mean_abs_residual", "stderr_abs", "mean_residual", "stderr",
]


def residual_report_rows(report) -> list[list]:
    rows = []
    for row in report.rows:
        rows.append(
            [
                report.n, report.beta, row.t, row.g_name, row.component,
                row.n_seeds, row.mean_abs, row.stderr_abs, row.mean, row.stderr,
            ]
        )
    return rows


ENTROPY_COLUMNS = ["t", "H_nu", "H_nu_tilde", "H_pi"]


def entropy_rows(traj) -> list[list]:
    return [
        [t, h1, h2, h3]
        for t, h1, h2, h3 in zip(traj.times, traj.h_nu, traj.h_nu_tilde, traj.h_pi)
    ]


GAP_COLUMNS = ["l", "Z", "N", "dim", "gap", "W"]


def gap_rows(report) -> list[list]:
    return [
        [r.l, r.z_total, r.n_total, r.dim, r.gap, r.w_value] for r in report.rows
    ]


WAVES_COLUMNS = ["t", "x", "sigma", "delta", "u_n", "v_n", "u_tilde", "v_tilde"]


# ---------------------------------------------------------------------------
# tidy plot data
# ---------------------------------------------------------------------------

PLOTDATA_COLUMNS = ["series", "x", "y", "stderr"]


def emit_plotdata(report_paths, out_path) -> int:
    """Reshape report CSVs into tidy (series, x, y, stderr) rows.

    Lossless with respect to the numeric content of the source series;
    returns the number of rows written.  Raises ParseError on files whose
    schema is unknown.
    """
    tidy: list[list] = []
    for path in report_paths:
        schema, _meta, columns, rows = read_csv(path)
        col = {name: k for k, name in enumerate(columns)}
        kind = schema.split("@")[0]
        if kind == "residuals":
            for row in rows:
                series = (
                    f"g={row[col['g']]}|{row[col['component']]}|n={row[col['n']]}"
                )
                tidy.append(
                    [series, row[col["t"]], row[col["mean_abs_residual"]], row[col["stderr_abs"]]]
                )
        elif kind == "entropy":
            for row in rows:
                for name in ("H_nu", "H_nu_tilde", "H_pi"):
                    tidy.append([name, row[col["t"]], row[col[name]], 0.0])
        elif kind == "gap":
            for row in rows:
                tidy.append(
                    [f"sector_Z{row[col['Z']]}_N{row[col['N']]}", row[col["l"]], row[col["W"]], 0.0]
                )
        elif kind == "waves":
            for row in rows:
                for name in ("sigma", "delta", "u_n", "v_n", "u_tilde", "v_tilde"):
                    tidy.append(
                        [f"{name}@t={row[col['t']]}", row[col["x"]], row[col[name]], 0.0]
                    )
        elif kind == "thermo":
            for row in rows:
                for name in ("S", "Phi", "Psi", "lambda", "mu", "onsager_residual"):
                    tidy.append(
                        [f"{name}@v={row[col['v']]}", row[col["u"]], row[col[name]], 0.0]
                    )
        else:
            raise ParseError(f"{path}: unknown report schema {schema!r}")
    write_csv(out_path, "plotdata@1", {"sources": len(list(report_paths))}, PLOTDATA_COLUMNS, tidy)
    return len(tidy)
