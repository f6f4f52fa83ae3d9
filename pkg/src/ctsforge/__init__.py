"""Compositional deconstruction and synthesis of sparse multivariate time series.

The pipeline: ingest sparse observations into dense hourly matrices with
masks (``data``), cut them into blocks and map blocks to symbols
(``symbolize``), recombine distributionally interchangeable fragments into
new symbol sequences and realize them as series (``cds``), train a small
autoregressive forecaster (``forecaster``), and judge whether synthetic and
original data look like draws from one process (``evaluation``). A
ground-truth generator (``datagen``) where compositionality holds by
construction anchors the whole test suite; ``cutmix`` provides the
randomized, non-compositional control.
"""

from .data import (
    DenseSeries,
    FeatureCatalog,
    QuadrupletRecord,
    SparsityReport,
    densify,
    fit_catalog,
    sparsity,
    truncate_to_blocks,
)
from .symbolize import (
    Block,
    SymbolSequence,
    SymbolSpace,
    assign,
    kmeans,
    random_centroids,
    segment,
    symbolize,
)
from .cds import (
    SLOT,
    Fragment,
    SynthesisIndex,
    SyntheticSeries,
    Template,
    build_index,
    desymbolize,
    enumerate_fragments,
    environment_of,
    insert,
    synthesize_series,
    synthesize_symbols,
)
from .cutmix import CutMixConfig, cutmix, cutmix_dataset
from .datagen import GeneratedCorpus, LatentStateModel, fig1_model, oracle_symbolize, sample_corpus
from .errors import DataError, NumericError
from .forecaster import (
    ForecastModel,
    RiskEstimate,
    TrainConfig,
    block_embedding,
    evaluate,
    masked_mse,
    predict,
    train,
)
from .evaluation import (
    NgramDistribution,
    RiskDifferenceResult,
    RiskRatioResult,
    TheoremCheckCase,
    adjusted_rand_index,
    confidence_interval,
    discriminative_score,
    hellinger,
    ngram_profile,
    pca_export,
    risk_difference_test,
    risk_ratio_test,
    verify_theorem_bound,
)
from .sofa import SofaInput, SofaScore, sofa_score

__version__ = "0.1.0"
