"""Meta-evaluation of MT evaluators, human and automatic, against a gold evaluator."""

from .core import (
    AnnotatedDataset,
    PartitionSolution,
    RaterAssignment,
    ScoreTable,
    validate_dataset,
)
from .metaeval import acc_eq, pa, pairwise_counts, spa, system_pvalue_matrix, tie_calibrate
from .partition import brute_force_partition, coverage, restrict_dataset, solve_partition
from .significance import RankConfig, RankingReport, cluster_ranks, perm_both_test, rank_table

__version__ = "0.1.0"

__all__ = [
    "AnnotatedDataset",
    "PartitionSolution",
    "RaterAssignment",
    "RankConfig",
    "RankingReport",
    "ScoreTable",
    "acc_eq",
    "brute_force_partition",
    "cluster_ranks",
    "coverage",
    "pa",
    "pairwise_counts",
    "perm_both_test",
    "rank_table",
    "restrict_dataset",
    "solve_partition",
    "spa",
    "system_pvalue_matrix",
    "tie_calibrate",
    "validate_dataset",
]
