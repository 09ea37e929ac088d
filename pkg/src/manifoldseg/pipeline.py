"""Study orchestration: features -> embedding -> consensus -> tissue classes.

The full image is never embedded directly (the eigensolves are cubic in the
point count). A landmark subsample is embedded and clustered; remaining
voxels get their coordinates by local interpolation and their cluster label
from the nearest landmark in feature space.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial.distance import cdist

from . import consensus as cc
from . import manifold as mf
from . import parallel
from .errors import DimensionMismatch, DisconnectedGraph, EmptyMask, NoClusters
from .volume import LabelMap, ParametricVolume, TissueClass

CLASS_ORDER = (TissueClass.NORMAL, TissueClass.AT_RISK, TissueClass.INFARCTED)


@dataclass
class StudyInput:
    """Aligned parameter maps plus channel roles for one study.

    volumes maps channel name -> ParametricVolume; adc/perfusion/t2 name the
    channels used by tissue classification. perfusion_polarity is "cbf"
    (lower = worse) or "ttp" (higher = worse).
    """

    volumes: dict[str, ParametricVolume]
    adc_channel: str = "adc"
    perfusion_channel: str = "cbf"
    t2_channel: str = "t2"
    perfusion_polarity: str = "cbf"
    mask: LabelMap | None = None

    def __post_init__(self):
        if not self.volumes:
            raise ValueError("study has no volumes")
        dims = {(v.width, v.height) for v in self.volumes.values()}
        if len(dims) != 1:
            raise DimensionMismatch(f"volumes disagree on dimensions: {dims}")
        for role, name in (("adc", self.adc_channel),
                           ("perfusion", self.perfusion_channel),
                           ("t2", self.t2_channel)):
            if name not in self.volumes:
                raise ValueError(f"{role} channel '{name}' not among volumes")
        if self.perfusion_polarity not in ("cbf", "ttp"):
            raise ValueError("perfusion_polarity must be 'cbf' or 'ttp'")
        if self.mask is not None:
            first = next(iter(self.volumes.values()))
            if (self.mask.width, self.mask.height) != (first.width, first.height):
                raise DimensionMismatch("mask dimensions differ from volumes")

    @property
    def width(self) -> int:
        return next(iter(self.volumes.values())).width

    @property
    def height(self) -> int:
        return next(iter(self.volumes.values())).height

    @property
    def spacing(self) -> tuple[float, float]:
        return next(iter(self.volumes.values())).spacing

    @property
    def channel_names(self) -> list[str]:
        return list(self.volumes.keys())


@dataclass
class ClassReport:
    tissue: TissueClass
    voxel_count: int
    area_mm2: float
    channel_mean: dict[str, float]
    channel_sd: dict[str, float]


@dataclass
class TissueReport:
    classes: list[ClassReport]

    def by_class(self, tissue: TissueClass) -> ClassReport:
        for c in self.classes:
            if c.tissue == tissue:
                return c
        raise KeyError(tissue)


@dataclass
class PipelineConfig:
    """All tunables of the segmentation pipeline, with mid-range defaults."""

    method: str = "isomap"          # isomap | lle | diffusion
    k: int = 40                     # neighborhood size, documented range [20, 80]
    sigma: float = 80.0             # diffusion kernel width, range [60, 100]
    d: int = 3                      # embedding dimension
    diffusion_time: int = 1
    k1: int = 3                     # ensemble cluster range
    k2: int = 13
    H: int = 10                     # repetitions per cluster count
    threshold: float = 0.75         # co-association merge threshold
    landmarks: int = 2000           # subsample size for the eigensolves
    normalize: str = "zscore"       # zscore | minmax | none
    seed: int = 1
    on_disconnected: str = "bridge"  # bridge | error | largest
    # tissue rule: fractions of the normal-reference cluster means
    adc_infarct_frac: float = 0.60
    perf_infarct_frac: float = 0.25
    adc_risk_frac: float = 0.90
    perf_risk_frac: float = 0.85


@dataclass
class PipelineResult:
    labelmap: LabelMap
    report: TissueReport
    embedding: mf.Embedding          # all masked voxels, row-aligned with features
    features: mf.FeatureMatrix       # unnormalized masked features
    landmark_indices: np.ndarray
    consensus: cc.ConsensusResult    # over landmarks
    cluster_classes: dict[int, TissueClass]


def stack_features(study: StudyInput) -> mf.FeatureMatrix:
    """One row per masked voxel, one column per channel, in manifest order."""
    w, h = study.width, study.height
    if study.mask is not None:
        inside = study.mask.inside()
    else:
        inside = np.ones((h, w), dtype=bool)
    ys, xs = np.nonzero(inside)
    if len(xs) == 0:
        raise EmptyMask("mask excludes every voxel")
    cols = [study.volumes[name].values[ys, xs] for name in study.channel_names]
    return mf.FeatureMatrix(
        data=np.stack(cols, axis=1),
        voxel_index=np.stack([xs, ys], axis=1),
        channel_names=study.channel_names,
    )


def normalize_features(
    features: mf.FeatureMatrix, mode: str = "zscore"
) -> tuple[mf.FeatureMatrix, dict]:
    """Per-channel rescaling; returns the new matrix and the statistics used."""
    X = features.data
    if mode == "none":
        return features, {"mode": "none"}
    if mode == "zscore":
        mean = X.mean(axis=0)
        sd = np.maximum(X.std(axis=0), 1e-12)
        data = (X - mean) / sd
        stats = {"mode": "zscore", "mean": mean, "sd": sd}
    elif mode == "minmax":
        lo = X.min(axis=0)
        hi = X.max(axis=0)
        span = np.maximum(hi - lo, 1e-12)
        data = (X - lo) / span
        stats = {"mode": "minmax", "min": lo, "max": hi}
    else:
        raise ValueError(f"unknown normalization mode '{mode}'")
    out = mf.FeatureMatrix(
        data=data,
        voxel_index=features.voxel_index,
        channel_names=list(features.channel_names),
    )
    return out, stats


def subsample_landmarks(
    features: mf.FeatureMatrix, m: int, seed
) -> tuple[mf.FeatureMatrix, np.ndarray]:
    """Uniform sample of m rows without replacement (identity when m >= n)."""
    if m < 2:
        raise ValueError(f"need at least 2 landmarks, got {m}")
    n = features.n
    if m >= n:
        return features, np.arange(n, dtype=np.int64)
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(n, size=m, replace=False)).astype(np.int64)
    sub = mf.FeatureMatrix(
        data=features.data[idx],
        voxel_index=features.voxel_index[idx],
        channel_names=list(features.channel_names),
    )
    return sub, idx


def _embed_landmarks(landmarks: mf.FeatureMatrix, config: PipelineConfig):
    """Dispatch to the configured method, handling disconnected graphs.

    Returns (embedding, kept_rows) where kept_rows indexes the landmark rows
    actually embedded (all of them except under on_disconnected="largest").
    """
    method = config.method
    kept = np.arange(landmarks.n, dtype=np.int64)
    if method == "diffusion":
        emb = mf.diffusion_map_embed(
            landmarks, sigma=config.sigma, d=config.d, t=config.diffusion_time
        )
        return emb, kept

    graph = mf.build_knn_graph(landmarks, config.k)
    comp = mf.graph_components(graph)
    if comp.max() > 0:
        if config.on_disconnected == "error":
            sizes = np.bincount(comp)
            raise DisconnectedGraph(sorted((int(s) for s in sizes), reverse=True))
        if config.on_disconnected == "largest":
            keep_comp = int(np.argmax(np.bincount(comp)))
            kept = np.flatnonzero(comp == keep_comp).astype(np.int64)
            landmarks = mf.FeatureMatrix(
                data=landmarks.data[kept],
                voxel_index=landmarks.voxel_index[kept],
                channel_names=list(landmarks.channel_names),
            )
            graph = mf.build_knn_graph(landmarks, min(config.k, landmarks.n - 1))
        else:  # bridge
            graph = mf.connect_components(landmarks, graph)

    if method == "isomap":
        gd = mf.geodesic_distance_matrix(graph)
        coords, spectrum = mf.classical_mds(gd, config.d)
        emb = mf.Embedding(
            coords=coords,
            method="isomap",
            params={"k": config.k, "d": config.d},
            eigen_spectrum=spectrum,
        )
    elif method == "lle":
        W = mf.lle_weights(landmarks, graph)
        n = landmarks.n
        IW = np.eye(n) - W.toarray()
        M = IW.T @ IW
        M = 0.5 * (M + M.T)
        vals, vecs = np.linalg.eigh(M)
        take = slice(1, config.d + 1)
        emb = mf.Embedding(
            coords=mf._fix_signs(vecs[:, take]) * np.sqrt(n),
            method="lle",
            params={"k": config.k, "d": config.d},
            eigen_spectrum=vals[take],
        )
    else:
        raise ValueError(f"unknown embedding method '{method}'")
    return emb, kept


def run_embedding(features: mf.FeatureMatrix, config: PipelineConfig) -> mf.Embedding:
    """Embed all rows: landmark eigensolve plus out-of-sample interpolation."""
    landmarks, idx = subsample_landmarks(features, config.landmarks, config.seed)
    emb, kept = _embed_landmarks(landmarks, config)
    if len(kept) == landmarks.n and landmarks.n == features.n:
        return emb
    kept_global = idx[kept]
    land_feats = mf.FeatureMatrix(
        data=features.data[kept_global],
        voxel_index=features.voxel_index[kept_global],
        channel_names=list(features.channel_names),
    )
    ext_k = min(8, land_feats.n)
    full = mf.out_of_sample_extend(land_feats, emb, features, ext_k)
    full.coords[kept_global] = emb.coords
    return full


def classify_tissue(
    consensus_result: cc.ConsensusResult,
    study: StudyInput,
    labels_flat: np.ndarray,
    voxel_index: np.ndarray,
    config: PipelineConfig | None = None,
) -> tuple[LabelMap, TissueReport, dict[int, TissueClass]]:
    """Assign a tissue class to every consensus cluster.

    Clusters are ranked by mean ADC; the highest-ADC cluster provides the
    normal reference. A cluster is infarcted when both its ADC and perfusion
    fractions of the reference fall below the infarct thresholds, at-risk
    when either falls below the looser risk thresholds, normal otherwise.
    The perfusion fraction is mean/reference for CBF (lower = worse) and
    reference/mean for TTP (higher = worse), so both polarities share the
    same threshold values.
    """
    config = config or PipelineConfig()
    if consensus_result.cluster_count < 1:
        raise NoClusters("no clusters to classify")
    w, h = study.width, study.height
    adc = study.volumes[study.adc_channel].values
    perf = study.volumes[study.perfusion_channel].values

    xs = voxel_index[:, 0]
    ys = voxel_index[:, 1]
    adc_v = adc[ys, xs]
    perf_v = perf[ys, xs]

    n_clusters = int(labels_flat.max()) + 1
    adc_mean = np.zeros(n_clusters)
    perf_mean = np.zeros(n_clusters)
    for c in range(n_clusters):
        members = labels_flat == c
        adc_mean[c] = adc_v[members].mean()
        perf_mean[c] = perf_v[members].mean()

    ref = int(np.argmax(adc_mean))
    adc_ref = adc_mean[ref]
    perf_ref = perf_mean[ref]

    def frac(x, r):
        return x / r if r != 0 else np.inf

    cluster_classes: dict[int, TissueClass] = {}
    for c in range(n_clusters):
        fa = frac(adc_mean[c], adc_ref)
        if study.perfusion_polarity == "ttp":
            fp = frac(perf_ref, perf_mean[c])
        else:
            fp = frac(perf_mean[c], perf_ref)
        if fa < config.adc_infarct_frac and fp < config.perf_infarct_frac:
            cluster_classes[c] = TissueClass.INFARCTED
        elif fa < config.adc_risk_frac or fp < config.perf_risk_frac:
            cluster_classes[c] = TissueClass.AT_RISK
        else:
            cluster_classes[c] = TissueClass.NORMAL

    label_grid = np.full((h, w), -1, dtype=np.int64)
    tissue_grid = np.full((h, w), TissueClass.BACKGROUND.value, dtype=np.int8)
    label_grid[ys, xs] = labels_flat
    for c, tissue in cluster_classes.items():
        members = labels_flat == c
        tissue_grid[ys[members], xs[members]] = tissue.value
    labelmap = LabelMap(
        width=w, height=h, spacing=study.spacing,
        labels=label_grid, tissue_class=tissue_grid,
    )
    report = _tissue_report(study, labelmap)
    return labelmap, report, cluster_classes


def _tissue_report(study: StudyInput, labelmap: LabelMap) -> TissueReport:
    dx, dy = study.spacing
    entries = []
    for tissue in CLASS_ORDER:
        m = labelmap.class_mask(tissue)
        count = int(m.sum())
        means, sds = {}, {}
        for name, vol in study.volumes.items():
            vals = vol.values[m]
            means[name] = float(vals.mean()) if count else 0.0
            sds[name] = float(vals.std()) if count else 0.0
        entries.append(ClassReport(
            tissue=tissue,
            voxel_count=count,
            area_mm2=count * dx * dy,
            channel_mean=means,
            channel_sd=sds,
        ))
    return TissueReport(classes=entries)


def lesion_area(labelmap: LabelMap, tissue: TissueClass) -> float:
    """Area in mm^2 of one tissue class: voxel count times pixel area."""
    dx, dy = labelmap.spacing
    return float(labelmap.class_mask(tissue).sum()) * dx * dy


def render_embedded_image(
    embedding: mf.Embedding, voxel_index: np.ndarray, dims: tuple[int, int]
) -> np.ndarray:
    """False-color raster of up to three embedding axes.

    Each axis is clipped to its [1st, 99th] percentile, mapped affinely to
    0..255 and written to the R, G, B channel in axis order. Background
    voxels stay black. Returns (height, width, 3) uint8.
    """
    w, h = dims
    img = np.zeros((h, w, 3), dtype=np.uint8)
    coords = embedding.coords
    xs = voxel_index[:, 0]
    ys = voxel_index[:, 1]
    for axis in range(min(3, coords.shape[1])):
        v = coords[:, axis]
        lo, hi = np.percentile(v, [1.0, 99.0])
        if hi <= lo:
            continue
        scaled = np.clip((v - lo) / (hi - lo), 0.0, 1.0)
        img[ys, xs, axis] = np.rint(scaled * 255.0).astype(np.uint8)
    return img


# Fixed palette: background, then cycling point colors. Tissue classes use
# infarcted = yellow, at-risk = red, normal = green.
SCATTER_SIZE = 600
PALETTE = (
    (255, 255, 255),  # background
    (0, 128, 0),      # 0 normal green
    (255, 0, 0),      # 1 at-risk red
    (255, 255, 0),    # 2 infarcted yellow
    (0, 0, 255),
    (255, 0, 255),
    (0, 255, 255),
    (128, 0, 128),
)

TISSUE_COLORS = {
    TissueClass.NORMAL: PALETTE[1],
    TissueClass.AT_RISK: PALETTE[2],
    TissueClass.INFARCTED: PALETTE[3],
    TissueClass.BACKGROUND: (64, 64, 64),
}


def export_scattergram(
    embedding: mf.Embedding,
    labels: np.ndarray,
    tissue: np.ndarray | None = None,
) -> tuple[list[tuple], np.ndarray]:
    """Scatter dataset of the first embedding axes.

    Returns (records, raster): one record per row with coordinates, the raw
    cluster label and the tissue class name; and a square raster of the
    first two axes with one color per tissue class (or per label when no
    tissue classes are given).
    """
    coords = embedding.coords
    n, d = coords.shape
    if len(labels) != n:
        raise ValueError("labels must align with embedding rows")
    if tissue is None:
        tissue_names = [""] * n
        color_keys = np.asarray(labels) % (len(PALETTE) - 1) + 1
        colors = np.array([PALETTE[k] for k in color_keys], dtype=np.uint8)
    else:
        tissue_names = [TissueClass(t).label for t in tissue]
        colors = np.array(
            [TISSUE_COLORS[TissueClass(t)] for t in tissue], dtype=np.uint8
        )

    records = []
    for i in range(n):
        row = tuple(coords[i, :min(3, d)]) + (int(labels[i]), tissue_names[i])
        records.append(row)

    size = SCATTER_SIZE
    img = np.empty((size, size, 3), dtype=np.uint8)
    img[:, :] = PALETTE[0]
    x = coords[:, 0]
    y = coords[:, 1] if d > 1 else np.zeros(n)
    span = max(np.ptp(x), 1e-12)
    px = ((x - x.min()) / span * (size - 21)).astype(int) + 10
    span = max(np.ptp(y), 1e-12)
    py = (size - 11) - ((y - y.min()) / span * (size - 21)).astype(int)
    for i in range(n):
        img[max(py[i] - 1, 0):py[i] + 2, max(px[i] - 1, 0):px[i] + 2] = colors[i]
    return records, img


def run_pipeline(study: StudyInput, config: PipelineConfig | None = None) -> PipelineResult:
    """Execute the full segmentation on one study."""
    config = config or PipelineConfig()
    features = stack_features(study)
    normed, _ = normalize_features(features, config.normalize)
    landmarks, idx = subsample_landmarks(normed, config.landmarks, config.seed)
    emb, kept = _embed_landmarks(landmarks, config)
    kept_global = idx[kept]

    consensus_result = cc.consensus_cluster(
        emb.coords, k1=config.k1, k2=config.k2, H=config.H,
        t=config.threshold, seed=config.seed,
    )

    # labels for every masked voxel: landmarks keep theirs, the rest copy the
    # nearest landmark in feature space. Under on_disconnected="largest",
    # dropped landmarks and the voxels nearest to them stay unlabeled.
    n = normed.n
    labels_flat = np.full(n, -1, dtype=np.int64)
    labels_flat[kept_global] = consensus_result.labels
    land_labels = np.full(len(idx), -1, dtype=np.int64)
    land_labels[kept] = consensus_result.labels
    rest = np.setdiff1d(np.arange(n), idx, assume_unique=False)
    if len(rest) > 0:
        land_data = normed.data[idx]

        def assign(a, b):
            rows = rest[a:b]
            d = cdist(normed.data[rows], land_data)
            labels_flat[rows] = land_labels[np.argmin(d, axis=1)]

        parallel.map_blocks(assign, len(rest))

    # full-cover embedding for rendering
    if len(kept_global) == n:
        full_emb = emb
    else:
        land_feats = mf.FeatureMatrix(
            data=normed.data[kept_global],
            voxel_index=normed.voxel_index[kept_global],
            channel_names=list(normed.channel_names),
        )
        full_emb = mf.out_of_sample_extend(
            land_feats, emb, normed, min(8, land_feats.n)
        )
        full_emb.coords[kept_global] = emb.coords

    labelmap, report, cluster_classes = classify_tissue(
        consensus_result, study, labels_flat, normed.voxel_index, config
    )
    return PipelineResult(
        labelmap=labelmap,
        report=report,
        embedding=full_emb,
        features=features,
        landmark_indices=kept_global,
        consensus=consensus_result,
        cluster_classes=cluster_classes,
    )
