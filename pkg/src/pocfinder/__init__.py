"""Point-of-Compromise detection in card-transaction networks."""

from .graph import (BipartiteGraph, ColumnSchema, DataError, GraphBuildError,
                    IngestStats, LocationBucket, RowError, TransactionRecord,
                    bucketize, build_graph, ingest_transactions)
from .detector import DetectionResult, PriorParams, run
from .synth import (GeneratorConfig, GroundTruth, InjectionConfig,
                    generate_corpus, inject_pocs)
from .evaluate import (RankingScore, SavingsPolicy, SavingsReport,
                       savings_simulation, score_ranking)

__version__ = "0.1.0"

__all__ = [
    "BipartiteGraph", "ColumnSchema", "DataError", "DetectionResult",
    "GeneratorConfig", "GraphBuildError", "GroundTruth", "IngestStats",
    "InjectionConfig", "LocationBucket", "PriorParams", "RankingScore",
    "RowError", "SavingsPolicy", "SavingsReport", "TransactionRecord",
    "bucketize", "build_graph", "generate_corpus", "ingest_transactions",
    "inject_pocs", "run", "savings_simulation", "score_ranking",
]
