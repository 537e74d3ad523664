"""File formats: density matrices, setting plans, counts, histograms, manifests.

All JSON is written with sorted keys and a fixed indent, all CSV with
``repr``-exact floats, and every writer goes through an atomic
write-then-rename, so identical inputs always produce byte-identical files.
"""

from __future__ import annotations

import csv
import io as _io
import json
import os
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import InvalidArgumentsError
from .measurement import MeasurementSetting, SettingPlan
from .simulate import CoincidenceDataset
from .states import DensityMatrix, make_density


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> None:
    atomic_write_text(path, _dump_json(obj))


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# density matrices


def density_to_dict(rho: DensityMatrix) -> dict:
    return {
        "dim": rho.dim,
        "re": rho.elements.real.tolist(),
        "im": rho.elements.imag.tolist(),
    }


def density_from_dict(obj: dict) -> DensityMatrix:
    mat = np.asarray(obj["re"], dtype=float) + 1j * np.asarray(obj["im"], dtype=float)
    if mat.shape != (obj["dim"], obj["dim"]):
        raise InvalidArgumentsError(
            f"declared dim {obj['dim']} does not match matrix shape {mat.shape}"
        )
    return make_density(mat)  # re-validate on the way in


def write_density(path, rho: DensityMatrix) -> None:
    write_json(path, density_to_dict(rho))


def read_density(path) -> DensityMatrix:
    return density_from_dict(read_json(path))


# ---------------------------------------------------------------------------
# setting plans


def plan_to_dict(plan: SettingPlan) -> dict:
    return {
        "d": plan.d,
        "delta_max": plan.delta_max,
        "seed": plan.seed,
        "settings": [
            {"theta": s.theta.tolist(), "phi": s.phi.tolist(), "delta": s.delta}
            for s in plan.settings
        ],
    }


def plan_from_dict(obj: dict) -> SettingPlan:
    settings = tuple(
        MeasurementSetting(
            theta=np.asarray(s["theta"], dtype=float),
            phi=np.asarray(s["phi"], dtype=float),
            delta=float(s["delta"]),
        )
        for s in obj["settings"]
    )
    return SettingPlan(
        d=int(obj["d"]),
        settings=settings,
        delta_max=float(obj["delta_max"]),
        seed=obj.get("seed"),
    )


def write_plan(path, plan: SettingPlan) -> None:
    write_json(path, plan_to_dict(plan))


def read_plan(path) -> SettingPlan:
    return plan_from_dict(read_json(path))


# ---------------------------------------------------------------------------
# coincidence datasets (CSV + JSON sidecar)


def sidecar_path(csv_path) -> Path:
    csv_path = Path(csv_path)
    return csv_path.with_name(csv_path.stem + ".meta.json")


def write_counts(path, data: CoincidenceDataset) -> None:
    """Counts CSV (``r,m,n,counts``, 1-based indices) plus metadata sidecar."""
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["r", "m", "n", "counts"])
    R, d, _ = data.counts.shape
    for r in range(R):
        for m in range(d):
            for n in range(d):
                writer.writerow([r + 1, m + 1, n + 1, int(data.counts[r, m, n])])
    atomic_write_text(path, buf.getvalue())
    write_json(
        sidecar_path(path),
        {
            "d": d,
            "R_tot": R,
            "exposure": data.exposure.tolist(),
            "seed": data.seed,
        },
    )


def read_counts(path) -> CoincidenceDataset:
    meta = read_json(sidecar_path(path))
    d, R = int(meta["d"]), int(meta["R_tot"])
    counts = np.zeros((R, d, d), dtype=np.int64)
    seen = 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["r", "m", "n", "counts"]:
            raise InvalidArgumentsError(
                f"unexpected counts header {reader.fieldnames}; want ['r','m','n','counts']"
            )
        for row in reader:
            r, m, n = int(row["r"]) - 1, int(row["m"]) - 1, int(row["n"]) - 1
            if not (0 <= r < R and 0 <= m < d and 0 <= n < d):
                raise InvalidArgumentsError(f"counts row out of range: {row}")
            counts[r, m, n] = int(row["counts"])
            seen += 1
    if seen != R * d * d:
        raise InvalidArgumentsError(
            f"counts file has {seen} rows, expected {R * d * d}"
        )
    return CoincidenceDataset(
        counts=counts,
        exposure=np.asarray(meta["exposure"], dtype=float),
        seed=meta.get("seed"),
    )


# ---------------------------------------------------------------------------
# calibration sweeps (CSV + sidecar with the sweep mode)


def write_sweep(path, x, counts, mode: str) -> None:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["x", "counts"])
    for xi, ci in zip(x, counts):
        writer.writerow([repr(float(xi)), repr(float(ci))])
    atomic_write_text(path, buf.getvalue())
    write_json(sidecar_path(path), {"mode": mode})


def read_sweep(path):
    """Returns ``(samples, mode)`` with samples as an (n, 2) float array."""
    meta = read_json(sidecar_path(path))
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["x", "counts"]:
            raise InvalidArgumentsError(
                f"unexpected sweep header {reader.fieldnames}; want ['x','counts']"
            )
        for row in reader:
            rows.append((float(row["x"]), float(row["counts"])))
    return np.asarray(rows, dtype=float), meta["mode"]


# ---------------------------------------------------------------------------
# histograms


def write_histogram(path, bin_edges, counts, params: dict) -> None:
    """Histogram CSV (``bin_left,bin_right,count``) plus a study sidecar."""
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["bin_left", "bin_right", "count"])
    for left, right, c in zip(bin_edges[:-1], bin_edges[1:], counts):
        writer.writerow([repr(float(left)), repr(float(right)), int(c)])
    atomic_write_text(path, buf.getvalue())
    write_json(sidecar_path(path), params)


# ---------------------------------------------------------------------------
# run manifests


def write_manifest(path, command: str, params: dict, inputs: list, outputs: list,
                   duration_s: float) -> None:
    """Record how a command was invoked next to its outputs.

    The manifest carries everything needed to reproduce the run (command
    name, fully resolved parameters including seeds, input/output paths) plus
    the artifact version and wall-clock duration.  Feeding a manifest back as
    a config re-runs the command with identical parameters.
    """
    write_json(
        path,
        {
            "artifact_version": __version__,
            "command": command,
            "params": params,
            "inputs": [str(p) for p in inputs],
            "outputs": [str(p) for p in outputs],
            "duration_s": duration_s,
            "written_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        },
    )


def load_config(path) -> dict:
    """Read a config file; manifests are accepted and yield their params."""
    obj = read_json(path)
    if isinstance(obj, dict) and "params" in obj and "command" in obj:
        return dict(obj["params"])
    if not isinstance(obj, dict):
        raise InvalidArgumentsError("config must be a JSON object")
    return obj
