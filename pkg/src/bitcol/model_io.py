"""Network ingest and on-disk formats.

Manifest: UTF-8 text, one `network=<name>` line, then one line per layer:

    layer=<name> kind=<kind> K=<n> C=<n> FX=<n> FY=<n> OX=<n> OY=<n> B=<n>
        stride=<n> weights=<relpath> [s_a=<float>] [acts=<relpath>]

Weight files are raw two's-complement int8 bytes in K-major (K, C, FY, FX)
order; activation sample files are raw int8 of any length. All sizes are
explicit in the manifest; nothing is inferred from file size.

Compressed container (byte exact): magic "BCSW", version 0x01; per layer:
name length u16-LE + name bytes, group size u8, mode u8 (0=dense, 1=bcs),
element count u32-LE, group count u32-LE, payload. Dense payload is the raw
int8 bytes; bcs payload is, per group, one index byte followed by ceil(G/8)
bytes for each set index bit, scanned sign column first then bit 6..0.
"""

from __future__ import annotations

import csv
import math
import struct
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .codec import GROUP_SIZES, POPCOUNT, CompressedLayer, column_offsets
from .workload import ContainerError, Layer, LayerShape, ManifestError, Network

MAGIC = b"BCSW"
VERSION = 1

_LAYER_KEYS = ("layer", "kind", "K", "C", "FX", "FY", "OX", "OY", "B", "stride", "weights")
_OPT_KEYS = ("s_a", "acts")


def _parse_fields(line: str, lineno: int) -> dict[str, str]:
    fields = {}
    for tok in line.split():
        if "=" not in tok:
            raise ManifestError(f"line {lineno}: malformed token {tok!r}")
        key, _, val = tok.partition("=")
        if key in fields:
            raise ManifestError(f"line {lineno}: repeated key {key!r}")
        fields[key] = val
    return fields


def _read_int8(path: Path, expected: int, what: str) -> np.ndarray:
    if not path.is_file():
        raise ManifestError(f"{what} file not found: {path}")
    data = np.fromfile(path, dtype=np.int8)
    if expected >= 0 and data.size != expected:
        raise ManifestError(f"{what} file {path}: {data.size} bytes, expected {expected}")
    return data


def load_network(manifest_path: str | Path) -> Network:
    """Load a manifest plus every referenced tensor, exactly as stored."""
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise ManifestError(f"manifest not found: {manifest_path}")
    base = manifest_path.parent
    name = None
    quant_note = ""
    layers: list[Layer] = []
    for lineno, raw in enumerate(manifest_path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = _parse_fields(line, lineno)
        if "network" in fields:
            name = fields["network"]
            continue
        if "quant" in fields:
            quant_note = fields["quant"]
            continue
        if "layer" not in fields:
            raise ManifestError(f"line {lineno}: expected a layer record")
        missing = [k for k in _LAYER_KEYS if k not in fields]
        if missing:
            raise ManifestError(f"line {lineno}: missing keys {missing}")
        unknown = [k for k in fields if k not in _LAYER_KEYS and k not in _OPT_KEYS]
        if unknown:
            raise ManifestError(f"line {lineno}: unknown keys {unknown}")
        try:
            shape = LayerShape(
                k=int(fields["K"]), c=int(fields["C"]),
                fy=int(fields["FY"]), fx=int(fields["FX"]),
                ox=int(fields["OX"]), oy=int(fields["OY"]),
                b=int(fields["B"]), stride=int(fields["stride"]),
                kind=fields["kind"],
            )
        except ValueError as e:
            raise ManifestError(f"line {lineno}: {e}") from e
        weights = _read_int8(base / fields["weights"], shape.n_weights,
                             f"layer {fields['layer']!r} weights").reshape(shape.weight_dims)
        s_a = float(fields["s_a"]) if "s_a" in fields else None
        acts = _read_int8(base / fields["acts"], -1, f"layer {fields['layer']!r} acts") \
            if "acts" in fields else None
        layers.append(Layer(fields["layer"], shape, weights, s_a=s_a, acts=acts))
    if name is None:
        raise ManifestError("manifest has no network= line")
    return Network(name, layers, quant_note)


def save_network(net: Network, out_dir: str | Path, manifest_name: str = "manifest.txt") -> Path:
    """Write manifest plus raw tensors; load_network(save_network(n)) == n."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [f"network={net.name}"]
    if net.quant_note:
        lines.append(f"quant={net.quant_note}")
    for l in net.layers:
        s = l.shape
        wfile = f"{l.name}.w.bin"
        l.weights.astype(np.int8).tofile(out_dir / wfile)
        rec = (f"layer={l.name} kind={s.kind} K={s.k} C={s.c} FX={s.fx} FY={s.fy} "
               f"OX={s.ox} OY={s.oy} B={s.b} stride={s.stride} weights={wfile}")
        if l.s_a is not None:
            rec += f" s_a={l.s_a:g}"
        if l.acts is not None:
            afile = f"{l.name}.a.bin"
            l.acts.astype(np.int8).tofile(out_dir / afile)
            rec += f" acts={afile}"
        lines.append(rec)
    path = out_dir / manifest_name
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_compressed(path: str | Path, layers: Sequence[CompressedLayer]) -> None:
    buf = bytearray()
    buf += MAGIC
    buf.append(VERSION)
    for cl in layers:
        name = cl.name.encode("utf-8")
        buf += struct.pack("<H", len(name))
        buf += name
        buf.append(cl.group_size)
        buf.append(0 if cl.mode == "dense" else 1)
        buf += struct.pack("<II", cl.n_values, cl.n_groups)
        if cl.mode == "dense":
            buf += cl.dense_values.astype(np.int8).tobytes()
        else:
            offs = column_offsets(cl)
            gb = cl.column_bytes
            rec = np.zeros(cl.n_groups + len(cl.columns) * gb, dtype=np.uint8)
            # index byte positions: record start of each group
            starts = np.arange(cl.n_groups, dtype=np.int64) + offs[:-1] * gb
            rec[starts] = cl.indexes
            # column rows land right after their group's index byte
            col_group = np.repeat(np.arange(cl.n_groups), POPCOUNT[cl.indexes])
            col_rank = np.arange(len(cl.columns)) - offs[:-1][col_group]
            col_pos = starts[col_group] + 1 + col_rank * gb
            rec[(col_pos[:, None] + np.arange(gb)[None, :]).reshape(-1)] = cl.columns.reshape(-1)
            buf += rec.tobytes()
    Path(path).write_bytes(bytes(buf))


def read_compressed(path: str | Path) -> list[CompressedLayer]:
    """Read a container; returned layers carry no tensor dims (see codec)."""
    data = Path(path).read_bytes()
    if len(data) < 5 or data[:4] != MAGIC:
        raise ContainerError(f"{path}: bad magic")
    if data[4] != VERSION:
        raise ContainerError(f"{path}: unsupported version {data[4]}")
    pos = 5
    layers = []
    while pos < len(data):
        if pos + 2 > len(data):
            raise ContainerError(f"{path}: truncated layer header")
        (nlen,) = struct.unpack_from("<H", data, pos)
        pos += 2
        if pos + nlen + 10 > len(data):
            raise ContainerError(f"{path}: truncated layer header")
        name = data[pos:pos + nlen].decode("utf-8")
        pos += nlen
        gsize = data[pos]
        mode = data[pos + 1]
        pos += 2
        n_values, n_groups = struct.unpack_from("<II", data, pos)
        pos += 8
        if gsize not in GROUP_SIZES:
            raise ContainerError(f"{path}: layer {name!r} has invalid group size {gsize}")
        if mode not in (0, 1):
            raise ContainerError(f"{path}: layer {name!r} has invalid mode {mode}")
        if mode == 0:
            if pos + n_values > len(data):
                raise ContainerError(f"{path}: layer {name!r} payload truncated")
            dense = np.frombuffer(data, dtype=np.int8, count=n_values, offset=pos).copy()
            pos += n_values
            layers.append(CompressedLayer(name, gsize, "dense", n_values, n_groups,
                                          dense_values=dense))
        else:
            gb = math.ceil(gsize / 8)
            indexes = np.zeros(n_groups, dtype=np.uint8)
            cols = []
            for g in range(n_groups):
                if pos >= len(data):
                    raise ContainerError(f"{path}: layer {name!r} payload truncated")
                idx = data[pos]
                pos += 1
                indexes[g] = idx
                nbytes = int(POPCOUNT[idx]) * gb
                if pos + nbytes > len(data):
                    raise ContainerError(f"{path}: layer {name!r} payload truncated")
                cols.append(np.frombuffer(data, dtype=np.uint8, count=nbytes, offset=pos))
                pos += nbytes
            columns = (np.concatenate(cols) if cols else np.zeros(0, dtype=np.uint8)).reshape(-1, gb)
            layers.append(CompressedLayer(name, gsize, "bcs", n_values, n_groups,
                                          indexes=indexes, columns=columns))
    return layers


def render_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".6g")
    if isinstance(value, (np.floating,)):
        return format(float(value), ".6g")
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def write_report_csv(rows: Iterable[Mapping], path: str | Path,
                     fieldnames: Sequence[str] | None = None) -> None:
    """RFC-4180 CSV with a header row; floats use 6 significant digits.

    Row order is input order. With zero rows, fieldnames must be given to
    emit the header-only file.
    """
    rows = list(rows)
    if fieldnames is None:
        if not rows:
            raise ValueError("fieldnames required when there are no rows")
        fieldnames = list(rows[0].keys())
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(fieldnames)
        for row in rows:
            writer.writerow([render_value(row.get(k)) for k in fieldnames])
