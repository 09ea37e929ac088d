"""Statistics, agreement metrics, lesion-table correlations, and phantoms."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import OverlappingRegions, ZeroVariance
from .pipeline import StudyInput
from .volume import LabelMap, ParametricVolume, TissueClass


@dataclass
class PairedSamples:
    x: np.ndarray
    y: np.ndarray
    labels: list[str] | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.shape != self.y.shape or self.x.ndim != 1:
            raise ValueError("x and y must be equal-length 1-D")
        if np.any(np.isnan(self.x)) or np.any(np.isnan(self.y)):
            raise ValueError("NaN in paired samples")


def _pearson(x, y):
    xd = x - x.mean()
    yd = y - y.mean()
    sx = float(np.dot(xd, xd))
    sy = float(np.dot(yd, yd))
    if sx == 0.0 or sy == 0.0:
        raise ZeroVariance("correlation undefined for constant input")
    return float(np.dot(xd, yd)) / np.sqrt(sx * sy)


def average_ranks(v: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties averaged."""
    v = np.asarray(v)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(len(v), dtype=float)
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def correlation(s: PairedSamples, method: str = "pearson") -> tuple[float, int]:
    """Pearson r on raw values, or on average-tie ranks for Spearman."""
    if len(s.x) < 3:
        raise ValueError("need at least 3 pairs")
    if method == "pearson":
        return _pearson(s.x, s.y), len(s.x)
    if method == "spearman":
        return _pearson(average_ranks(s.x), average_ranks(s.y)), len(s.x)
    raise ValueError(f"unknown correlation method '{method}'")


def linear_regression(s: PairedSamples) -> tuple[float, float, float]:
    """OLS (slope, intercept, r^2); r^2 equals the squared Pearson r."""
    x, y = s.x, s.y
    if len(x) < 2:
        raise ValueError("need at least 2 pairs")
    xd = x - x.mean()
    sx = float(np.dot(xd, xd))
    if sx == 0.0:
        raise ZeroVariance("regression undefined for constant x")
    slope = float(np.dot(xd, y - y.mean())) / sx
    intercept = float(y.mean() - slope * x.mean())
    yd = y - y.mean()
    sy = float(np.dot(yd, yd))
    r2 = 0.0 if sy == 0.0 else (float(np.dot(xd, yd)) ** 2) / (sx * sy)
    return slope, intercept, r2


def dice(a: np.ndarray, b: np.ndarray) -> float:
    """Overlap 2|A&B| / (|A| + |B|) of two boolean masks (1.0 if both empty)."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError("masks must share a shape")
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / total


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Chance-corrected partition agreement from the contingency table."""
    a = np.asarray(labels_a).ravel()
    b = np.asarray(labels_b).ravel()
    if a.shape != b.shape:
        raise ValueError("label arrays must share a shape")
    n = len(a)
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    C = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(C, (ia, ib), 1)

    def comb2(x):
        return x * (x - 1) / 2.0

    sum_ij = comb2(C).sum()
    sum_a = comb2(C.sum(axis=1)).sum()
    sum_b = comb2(C.sum(axis=0)).sum()
    total = comb2(n)
    expected = sum_a * sum_b / total
    maximum = 0.5 * (sum_a + sum_b)
    if maximum == expected:
        return 1.0
    return float((sum_ij - expected) / (maximum - expected))


# --- synthetic phantom -------------------------------------------------

# Exemplar per-class channel values: ADC mm^2/s, CBF mL/g/s, T2 ms.
CLASS_VALUES = {
    TissueClass.NORMAL: {"adc": 0.750e-3, "cbf": 163.4, "t2": 34.0},
    TissueClass.AT_RISK: {"adc": 0.646e-3, "cbf": 125.0, "t2": 38.0},
    TissueClass.INFARCTED: {"adc": 0.358e-3, "cbf": 14.1, "t2": 43.0},
}


@dataclass
class PhantomRegion:
    """Elliptic region (optionally annular) with per-channel ground truth."""

    tissue: TissueClass
    center: tuple[float, float]
    radii: tuple[float, float]
    inner_radii: tuple[float, float] | None = None
    values: dict[str, float] = field(default_factory=dict)

    def contains(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        cx, cy = self.center
        rx, ry = self.radii
        inside = ((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2 <= 1.0
        if self.inner_radii is not None:
            irx, iry = self.inner_radii
            inside &= ((xs - cx) / irx) ** 2 + ((ys - cy) / iry) ** 2 > 1.0
        return inside


@dataclass
class PhantomSpec:
    """Geometry and ground truth for the synthetic study generator."""

    dims: tuple[int, int] = (128, 128)
    spacing: tuple[float, float] = (0.25, 0.25)
    brain_radii: tuple[float, float] | None = None
    regions: list[PhantomRegion] = None
    noise: float = 0.0
    base_values: dict[str, float] = None

    def __post_init__(self):
        if self.brain_radii is None:
            self.brain_radii = (0.44 * self.dims[0], 0.44 * self.dims[1])
        if self.base_values is None:
            self.base_values = dict(CLASS_VALUES[TissueClass.NORMAL])
        if self.regions is None:
            self.regions = default_regions(self.dims)


def default_regions(dims) -> list[PhantomRegion]:
    """A deep infarct core with an at-risk rim around it."""
    w, h = dims
    cx, cy = 0.42 * w, 0.5 * h
    return [
        PhantomRegion(
            tissue=TissueClass.INFARCTED,
            center=(cx, cy),
            radii=(0.11 * w, 0.085 * h),
            values=dict(CLASS_VALUES[TissueClass.INFARCTED]),
        ),
        PhantomRegion(
            tissue=TissueClass.AT_RISK,
            center=(cx, cy),
            radii=(0.17 * w, 0.14 * h),
            inner_radii=(0.11 * w, 0.085 * h),
            values=dict(CLASS_VALUES[TissueClass.AT_RISK]),
        ),
    ]


def generate_phantom(spec: PhantomSpec | None = None, seed: int = 0) -> tuple[StudyInput, LabelMap]:
    """Piecewise-constant multiparametric study plus its ground-truth classes.

    Channel values are the per-region ground truth times (1 + noise * N(0,1))
    per voxel, clipped at zero. Voxels outside the brain ellipse are
    background (masked out, channel value 0).
    """
    spec = spec or PhantomSpec()
    w, h = spec.dims
    ys, xs = np.mgrid[0:h, 0:w]
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    brx, bry = spec.brain_radii
    brain = ((xs - cx) / brx) ** 2 + ((ys - cy) / bry) ** 2 <= 1.0

    tissue = np.full((h, w), TissueClass.BACKGROUND.value, dtype=np.int8)
    tissue[brain] = TissueClass.NORMAL.value
    covered = np.zeros((h, w), dtype=bool)
    channels = {name: np.where(brain, value, 0.0)
                for name, value in spec.base_values.items()}
    for region in spec.regions:
        inside = region.contains(xs, ys) & brain
        if np.any(inside & covered):
            raise OverlappingRegions("phantom regions overlap")
        covered |= inside
        tissue[inside] = region.tissue.value
        for name, value in region.values.items():
            channels[name][inside] = value

    rng = np.random.default_rng(seed)
    volumes = {}
    for name in spec.base_values:
        vals = channels[name]
        if spec.noise > 0:
            factor = 1.0 + spec.noise * rng.standard_normal((h, w))
            vals = np.clip(vals * factor, 0.0, None)
        volumes[name] = ParametricVolume(
            name=name, width=w, height=h, spacing=spec.spacing, values=vals
        )

    labels = np.where(brain, tissue.astype(np.int64), -1)
    truth = LabelMap(width=w, height=h, spacing=spec.spacing,
                     labels=labels, tissue_class=tissue)
    mask = LabelMap.from_mask(brain, spacing=spec.spacing)
    study = StudyInput(
        volumes=volumes,
        adc_channel="adc",
        perfusion_channel="cbf",
        t2_channel="t2",
        perfusion_polarity="cbf",
        mask=mask,
    )
    return study, truth


# --- bundled lesion tables ---------------------------------------------

TABLE_COLUMNS = (
    "t2wi", "dwi", "cbf",
    "dfm_inf", "dfm_total",
    "isomap_inf", "isomap_total",
    "lle_inf", "lle_total",
)


@dataclass
class LesionTable:
    subjects: list[str]
    groups: list[str]
    data: np.ndarray  # (n, 9) columns per TABLE_COLUMNS
    notes: list[str]

    def rows_for_group(self, group: str) -> np.ndarray:
        sel = [i for i, g in enumerate(self.groups) if g == group]
        return self.data[sel]

    def column(self, name: str) -> int:
        return TABLE_COLUMNS.index(name)


def load_lesion_table(path_or_name) -> LesionTable:
    """Read a lesion-area CSV (bundled name like 'table1' or a file path)."""
    if str(path_or_name) in ("table1", "table2"):
        ref = resources.files("manifoldseg.data") / f"{path_or_name}.csv"
        text = ref.read_text(encoding="utf-8")
    else:
        with open(path_or_name, encoding="utf-8") as fh:
            text = fh.read()
    reader = csv.reader(text.strip().splitlines())
    header = next(reader)
    expected = ["subject", "group", *TABLE_COLUMNS]
    if header[:11] != expected:
        raise ValueError(f"unexpected lesion table header: {header}")
    has_notes = len(header) > 11 and header[11] == "notes"
    subjects, groups, rows, notes = [], [], [], []
    for rec in reader:
        subjects.append(rec[0])
        groups.append(rec[1])
        rows.append([float(v) for v in rec[2:11]])
        notes.append(rec[11] if has_notes and len(rec) > 11 else "")
    return LesionTable(
        subjects=subjects, groups=groups,
        data=np.asarray(rows, dtype=float), notes=notes,
    )


def table_correlations(
    table: LesionTable, group: str, col_x: str, col_y: str, method: str = "pearson"
) -> tuple[float, int]:
    """Correlation between two lesion-area columns within one subject group."""
    rows = table.rows_for_group(group)
    if rows.shape[0] < 3:
        raise ValueError(f"group '{group}' has fewer than 3 rows")
    s = PairedSamples(rows[:, table.column(col_x)], rows[:, table.column(col_y)])
    return correlation(s, method)
