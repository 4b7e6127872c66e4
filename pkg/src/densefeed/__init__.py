"""Data-loading toolkit for variably-sized biomolecular samples."""

from .bucketing import (
    Bucket,
    BucketSpec,
    bucket_batches,
    create_buckets,
    padding_elements,
)
from .corpus import CorpusConfig, SyntheticCorpus, generate_corpus
from .errors import (
    DegenerateFitError,
    DensefeedError,
    DimensionError,
    IngestParseError,
    MeterConfigError,
    ShardFormatError,
    StageError,
    StorageError,
    StoreCorruptionError,
    StoreVersionError,
    ValidationError,
)
from .shards import (
    Sample,
    ShardSet,
    batch_stage,
    compose,
    filter_stage,
    load_shard_set,
    map_stage,
    stream_samples,
    write_shards,
)
from .sizing import (
    Batch,
    CostModel,
    FitReport,
    ProfileRecord,
    SizeAwareBatcher,
    TrackingAllocator,
    collect_peak_alloc,
    fit_cost_model,
    load_cost_model,
    save_cost_model,
    size_aware_batches,
)
from .store import (
    ConversionReport,
    RowSlice,
    SparseMatrixStore,
    build_store,
    open_store,
)
from .tokenizer import (
    GeneStats,
    TokenSequence,
    compute_gene_stats,
    load_gene_stats,
    rank_encode,
    save_gene_stats,
)

__version__ = "0.1.0"
