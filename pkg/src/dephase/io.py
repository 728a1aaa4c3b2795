"""Deterministic file formats: order-series CSV, field snapshots, manifests.

All floating-point text is serialized with 17 significant digits so repeated
seeded runs are byte-identical.  The binary snapshot dump is little-endian:

    magic   b"DPH1"
    int64   k_max, n_omega          (little-endian)
    float64 time_tag, omega_half_width
    float64 data[2*k_max+1][n_omega][2]   (real, imag interleaved, C order)
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import ConfigError, MixedField, OmegaGrid, OrderSeries

_MAGIC = b"DPH1"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_order_csv(path: Path, series: OrderSeries) -> None:
    lines = []
    if series.source != "kinetic":
        lines.append(f"# source={series.source}")
    lines.append("t,Re_z1,Im_z1,R")
    for t, z in zip(series.t, series.z1):
        lines.append(f"{_fmt(t)},{_fmt(z.real)},{_fmt(z.imag)},{_fmt(abs(z))}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_order_csv(path: Path) -> OrderSeries:
    source = "kinetic"
    ts, zs = [], []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if "source=" in line:
                    source = line.split("source=", 1)[1].strip()
                continue
            if line.startswith("t,"):
                continue
            t, re, im, _r = line.split(",")
            ts.append(float(t))
            zs.append(complex(float(re), float(im)))
    if not ts:
        raise ConfigError(f"no samples in {path}")
    return OrderSeries(np.array(ts), np.array(zs), source=source)


def write_field_csv(path: Path, field: MixedField) -> None:
    om = field.omega_grid.points
    lines = ["k,omega,Re_h,Im_h"]
    for r in range(field.values.shape[0]):
        k = r - field.k_max
        row = field.values[r]
        for j in range(om.size):
            lines.append(f"{k},{_fmt(om[j])},{_fmt(row[j].real)},{_fmt(row[j].imag)}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_field_bin(path: Path, field: MixedField) -> None:
    n_omega = field.omega_grid.n_points
    header = _MAGIC + struct.pack(
        "<qqdd", field.k_max, n_omega, field.time_tag, field.omega_grid.half_width
    )
    data = np.empty((2 * field.k_max + 1, n_omega, 2), dtype="<f8")
    data[:, :, 0] = field.values.real
    data[:, :, 1] = field.values.imag
    Path(path).write_bytes(header + data.tobytes(order="C"))


def read_field_bin(path: Path) -> MixedField:
    blob = Path(path).read_bytes()
    if blob[:4] != _MAGIC:
        raise ConfigError(f"{path} is not a field dump (bad magic)")
    k_max, n_omega, time_tag, half_width = struct.unpack("<qqdd", blob[4:4 + 32])
    data = np.frombuffer(blob[36:], dtype="<f8").reshape(2 * k_max + 1, n_omega, 2)
    values = data[:, :, 0] + 1j * data[:, :, 1]
    grid = OmegaGrid(half_width=half_width, n_points=n_omega)
    return MixedField(int(k_max), grid, values.astype(np.complex128), float(time_tag))


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclasses.dataclass
class ExperimentManifest:
    """Inventory of one run: config identity, outputs with checksums, checks."""

    config_hash: str
    tool_version: str
    command: str
    wall_clock_s: float
    outputs: list
    checks: dict

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def build_manifest(
    config_hash: str,
    tool_version: str,
    command: str,
    wall_clock_s: float,
    out_dir: Path,
    files: Sequence[Path],
    checks: dict,
) -> ExperimentManifest:
    outputs = []
    for f in files:
        f = Path(f)
        outputs.append(
            {
                "path": str(f.relative_to(out_dir)),
                "sha256": sha256_file(f),
                "bytes": f.stat().st_size,
            }
        )
    return ExperimentManifest(
        config_hash=config_hash,
        tool_version=tool_version,
        command=command,
        wall_clock_s=wall_clock_s,
        outputs=outputs,
        checks=checks,
    )


def _json_default(obj):
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__} to JSON")


def write_json(path: Path, payload: dict) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True, default=_json_default)
    Path(path).write_text(text + "\n")


def read_json(path: Path) -> dict:
    return json.loads(Path(path).read_text())
