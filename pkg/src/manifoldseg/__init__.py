"""Multiparametric MR map fitting, manifold embedding, and consensus segmentation."""

from .consensus import (
    CoassociationMatrix,
    ConsensusResult,
    KMeansRun,
    accumulate_coassociation,
    consensus_cluster,
    consensus_merge,
    kmeans_run,
)
from .evalstats import (
    LesionTable,
    PairedSamples,
    PhantomRegion,
    PhantomSpec,
    adjusted_rand_index,
    correlation,
    dice,
    generate_phantom,
    linear_regression,
    load_lesion_table,
    table_correlations,
)
from .manifold import (
    Embedding,
    FeatureMatrix,
    NeighborGraph,
    build_knn_graph,
    classical_mds,
    connect_components,
    diffusion_map_embed,
    geodesic_distance_matrix,
    isomap_embed,
    lle_embed,
    lle_weights,
    out_of_sample_extend,
)
from .param_maps import compute_adc_map, compute_t2_map, fit_exponential_decay
from .pipeline import (
    PipelineConfig,
    PipelineResult,
    StudyInput,
    TissueReport,
    classify_tissue,
    lesion_area,
    normalize_features,
    render_embedded_image,
    run_embedding,
    run_pipeline,
    stack_features,
    subsample_landmarks,
)
from .volume import AcquisitionSeries, LabelMap, ParametricVolume, TissueClass

__version__ = "0.1.0"
