"""Bit-exact file formats: MPV volumes, CSV matrices and labels, PPM images.

MPV layout, little-endian: magic "MPV1"; u32 width, u32 height; f64 dx, dy
(mm); u32 channel_count; per channel a u16 name length plus UTF-8 name; then
channel_count * height * width f64 values, row-major within each channel,
channels consecutive. NaN values are rejected unless the channel name ends
in ".raw".

CSV files use '.' decimals, ',' separators, LF line endings, a mandatory
header row, and 17 significant digits so float64 round-trips exactly.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import DimensionMismatch
from .volume import LabelMap, ParametricVolume, TissueClass

MPV_MAGIC = b"MPV1"


def write_mpv(path, volumes: list[ParametricVolume]) -> None:
    if not volumes:
        raise ValueError("no volumes to write")
    first = volumes[0]
    for v in volumes[1:]:
        if (v.width, v.height) != (first.width, first.height):
            raise DimensionMismatch("MPV channels must share dimensions")
        if v.spacing != first.spacing:
            raise DimensionMismatch("MPV channels must share spacing")
    for v in volumes:
        if np.any(np.isnan(v.values)) and not v.name.endswith(".raw"):
            raise ValueError(f"channel '{v.name}' has NaN; use a '.raw' suffix")
    with open(path, "wb") as fh:
        fh.write(MPV_MAGIC)
        fh.write(struct.pack("<II", first.width, first.height))
        fh.write(struct.pack("<dd", first.spacing[0], first.spacing[1]))
        fh.write(struct.pack("<I", len(volumes)))
        for v in volumes:
            name = v.name.encode("utf-8")
            fh.write(struct.pack("<H", len(name)))
            fh.write(name)
        for v in volumes:
            fh.write(np.ascontiguousarray(v.values, dtype="<f8").tobytes())


def read_mpv(path) -> list[ParametricVolume]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MPV_MAGIC:
        raise ValueError(f"{path}: not an MPV file")
    off = 4
    width, height = struct.unpack_from("<II", blob, off)
    off += 8
    dx, dy = struct.unpack_from("<dd", blob, off)
    off += 16
    (count,) = struct.unpack_from("<I", blob, off)
    off += 4
    names = []
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", blob, off)
        off += 2
        names.append(blob[off:off + nlen].decode("utf-8"))
        off += nlen
    frame = width * height * 8
    if len(blob) != off + count * frame:
        raise ValueError(f"{path}: size does not match header arithmetic")
    volumes = []
    for i, name in enumerate(names):
        vals = np.frombuffer(
            blob, dtype="<f8", count=width * height, offset=off + i * frame
        ).reshape(height, width).copy()
        if np.any(np.isnan(vals)) and not name.endswith(".raw"):
            raise ValueError(f"{path}: channel '{name}' has NaN")
        volumes.append(ParametricVolume(
            name=name, width=width, height=height, spacing=(dx, dy), values=vals
        ))
    return volumes


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_matrix_csv(path, matrix: np.ndarray, header: list[str]) -> None:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.shape[1] != len(header):
        raise ValueError("header length must match matrix columns")
    lines = [",".join(header)]
    for row in matrix:
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_matrix_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().split("\n") if ln != ""]
    header = lines[0].split(",")
    rows = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
    return header, np.asarray(rows, dtype=float)


def write_labels_csv(path, labelmap: LabelMap) -> None:
    """Masked voxels as x,y,label,tissue_class rows in row-major order."""
    ys, xs = np.nonzero(labelmap.inside())
    lines = ["x,y,label,tissue_class"]
    labels = labelmap.labels
    tissue = labelmap.tissue_class
    for x, y in zip(xs, ys):
        lines.append(
            f"{x},{y},{labels[y, x]},{TissueClass(int(tissue[y, x])).label}"
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_labels_csv(path, width=None, height=None, spacing=(1.0, 1.0)) -> LabelMap:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().split("\n") if ln != ""]
    if lines[0].split(",")[:3] != ["x", "y", "label"]:
        raise ValueError(f"{path}: expected a labels CSV header")
    name_to_class = {t.label: t.value for t in TissueClass}
    recs = []
    for ln in lines[1:]:
        parts = ln.split(",")
        x, y, label = int(parts[0]), int(parts[1]), int(parts[2])
        tissue = name_to_class[parts[3]] if len(parts) > 3 and parts[3] else None
        recs.append((x, y, label, tissue))
    if width is None:
        width = max(r[0] for r in recs) + 1
    if height is None:
        height = max(r[1] for r in recs) + 1
    labels = np.full((height, width), -1, dtype=np.int64)
    tissue = np.full((height, width), TissueClass.BACKGROUND.value, dtype=np.int8)
    for x, y, label, tis in recs:
        labels[y, x] = label
        if tis is not None:
            tissue[y, x] = tis
        elif label >= 0:
            tissue[y, x] = TissueClass.NORMAL.value
    return LabelMap(width=width, height=height, spacing=spacing,
                    labels=labels, tissue_class=tissue)


def write_ppm(path, image: np.ndarray) -> None:
    """Binary P6, maxval 255. image is (height, width, 3) uint8."""
    image = np.asarray(image, dtype=np.uint8)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError("PPM image must be (h, w, 3)")
    h, w = image.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    parts = blob.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError(f"{path}: not a binary PPM")
    w, h = (int(v) for v in parts[1].split())
    if parts[2] != b"255":
        raise ValueError(f"{path}: expected maxval 255")
    return np.frombuffer(parts[3], dtype=np.uint8, count=w * h * 3).reshape(h, w, 3).copy()


def write_pgm(path, image: np.ndarray) -> None:
    """Binary P5, maxval 255. image is (height, width) uint8."""
    image = np.asarray(image, dtype=np.uint8)
    if image.ndim != 2:
        raise ValueError("PGM image must be 2-D")
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def write_embedding_csv(path, embedding, voxel_index) -> None:
    coords = embedding.coords
    d = coords.shape[1]
    header = ["x", "y"] + [f"e{j + 1}" for j in range(d)]
    data = np.column_stack([voxel_index.astype(float), coords])
    write_matrix_csv(path, data, header)


def read_embedding_csv(path) -> tuple[np.ndarray, np.ndarray]:
    header, data = read_matrix_csv(path)
    if header[:2] != ["x", "y"]:
        raise ValueError(f"{path}: expected embedding CSV header")
    return data[:, :2].astype(np.int64), data[:, 2:]


def write_scattergram_csv(path, records) -> None:
    if not records:
        raise ValueError("no scattergram records")
    d = len(records[0]) - 2
    header = [f"dim{j + 1}" for j in range(d)] + ["label", "tissue_class"]
    lines = [",".join(header)]
    for rec in records:
        coords = [_fmt(v) for v in rec[:d]]
        lines.append(",".join(coords + [str(rec[d]), str(rec[d + 1])]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_report_csv(path, report, channel_names) -> None:
    header = ["tissue_class", "voxel_count", "area_mm2"]
    for name in channel_names:
        header += [f"{name}_mean", f"{name}_sd"]
    lines = [",".join(header)]
    for entry in report.classes:
        row = [entry.tissue.label, str(entry.voxel_count), _fmt(entry.area_mm2)]
        for name in channel_names:
            row += [_fmt(entry.channel_mean[name]), _fmt(entry.channel_sd[name])]
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
